//! Complex-Burgers characteristics as an independent oracle for the density solver.

use dyson_lab::analytic::{burgers_characteristics, BurgersSeed};
use dyson_lab::measure::wasserstein::wasserstein;
use dyson_lab::pde::{solve_density, DensityEquation, PdeSpec};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-4.0, 4.0, 1.0 / 200.0)?;
    let seed = BurgersSeed::Atomic { atoms: vec![(0.5, -1.0), (0.5, 1.0)] };
    let mut start = burgers_characteristics(&seed, 0.1, grid)?;
    start.renormalize()?;
    let flow = solve_density(&start, &DensityEquation::dyson(), &PdeSpec::new(0.1, 1.0).with_uniform_samples(3))?;
    for (t, m) in flow.times.iter().zip(&flow.densities) {
        // sampled oracle mass is within O(h²) of one; compare shapes at unit mass
        let mut oracle: GridDensity = burgers_characteristics(&seed, *t, grid)?;
        oracle.renormalize()?;
        println!("t={t:.2} W2(solver, oracle) = {:.2e}", wasserstein(m, &oracle, 2.0)?);
    }
    Ok(())
}
