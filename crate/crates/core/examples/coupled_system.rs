//! Two species, each drawn toward the other's mean, evolved in lockstep.

use dyson_lab::measure::functionals::mean;
use dyson_lab::pde::{solve_coupled, Coupling, DensityEquation, PdeSpec};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-4.0, 4.0, 0.02)?;
    let bump = |c: f64| GridDensity::from_fn(grid, move |x| (-(x - c) * (x - c) / 0.08).exp(), true);
    let spec = PdeSpec::new(0.0, 1.0).with_uniform_samples(5);
    let (a, b) =
        solve_coupled(&bump(-1.5)?, &bump(1.5)?, &Coupling::mean_attraction(1.0), &DensityEquation::dyson(), &spec)?;
    for k in 0..a.len() {
        // mean separation decays like 3 e^{-2t}
        let sep = mean(&b.densities[k]) - mean(&a.densities[k]);
        println!("t={:.2} separation {:.4} exact {:.4}", a.times[k], sep, 3.0 * (-2.0 * a.times[k]).exp());
    }
    Ok(())
}
