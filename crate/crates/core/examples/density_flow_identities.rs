//! Density solve of the pure flow followed by the entropy, Lp and L∞ checks.

use dyson_lab::diagnostics::{check_entropy_identity, check_linf_bound, check_lp_decay, pure_linf_bound, render_table};
use dyson_lab::pde::{solve_density, DensityEquation, PdeSpec};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-4.0, 4.0, 0.01)?;
    let m0 = GridDensity::from_fn(
        grid,
        |x| if (-1.0..=-0.2).contains(&x) || (0.6..=1.0).contains(&x) { 1.0 } else { 0.0 },
        true,
    )?;
    let flow = solve_density(&m0, &DensityEquation::dyson(), &PdeSpec::new(0.0, 1.0).with_uniform_samples(40))?;
    let reports = vec![
        check_entropy_identity(&flow, (0.1, 1.0), 0.01, 1e-9)?,
        check_lp_decay(&flow, &[2.0, 3.0, f64::INFINITY], 1e-6)?,
        check_linf_bound(&flow, pure_linf_bound(grid.h), 0.05),
    ];
    print!("{}", render_table(&reports));
    println!("steps {}  min dt {:.2e}", flow.health.steps, flow.health.min_dt);
    Ok(())
}
