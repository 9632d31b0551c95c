//! CDF flow with the multivalued expansive drift sign(x), which splits the
//! mass at the origin and pushes both halves outward.

use dyson_lab::kernel::DriftSpec;
use dyson_lab::measure::functionals::variance;
use dyson_lab::pde::{solve_singular_drift, CdfEquation, PdeSpec};
use dyson_lab::{cdf_to_density, CdfGrid, Grid};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-5.0, 5.0, 0.01)?;
    let u0 = CdfGrid::from_fn(grid, |x| ((x + 1.5) / 3.0).clamp(0.0, 1.0))?;
    let spec = PdeSpec::new(0.0, 1.0).with_uniform_samples(4);
    let flow = solve_singular_drift(&u0, &DriftSpec::sign(), &CdfEquation::dyson(), &spec)?;
    for (t, u) in flow.times.iter().zip(&flow.cdfs) {
        let m = cdf_to_density(u, true)?;
        println!("t={t:.2} variance {:.4}  u(0) {:.4}", variance(&m), u.values()[grid.n / 2]);
    }
    Ok(())
}
