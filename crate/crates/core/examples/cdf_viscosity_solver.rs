//! Monotone CDF solver: vanishing viscosity and the comparison principle.

use dyson_lab::diagnostics::check_comparison;
use dyson_lab::pde::{solve_cdf, CdfEquation, PdeSpec};
use dyson_lab::{CdfGrid, Grid};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-3.0, 3.0, 0.01)?;
    let u0 = CdfGrid::from_fn(grid, |x| (x + 0.5).clamp(0.0, 1.0))?;
    let eq = CdfEquation::dyson();
    let base = solve_cdf(&u0, &eq, &PdeSpec::new(0.0, 1.0))?;
    for eps in [1e-1, 1e-2, 1e-3] {
        let f = solve_cdf(&u0, &eq, &PdeSpec::new(0.0, 1.0).with_viscosity(eps))?;
        let d = f
            .final_cdf()
            .values()
            .iter()
            .zip(base.final_cdf().values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("eps={eps:<6} sup|u_eps - u_0| = {d:.3e}  (√eps = {:.3e})", eps.sqrt());
    }

    // a CDF lying above u0 everywhere stays above it
    let upper = CdfGrid::from_fn(grid, |x| (x + 0.8).clamp(0.0, 1.0))?;
    let spec = PdeSpec::new(0.0, 1.0).with_uniform_samples(10);
    let lo = solve_cdf(&u0, &eq, &spec)?;
    let hi = solve_cdf(&upper, &eq, &spec)?;
    println!("{}", check_comparison(&lo, &hi, 1e-8)?);
    Ok(())
}
