//! Penalized barrier at R0 = 0 for a sweep of ε: mass left beyond the barrier
//! and its scaling in ε.

use dyson_lab::pde::{solve_reflected, DensityEquation, PdeSpec, PenaltySign};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-4.0, 1.0, 0.01)?;
    let m0 = GridDensity::from_fn(grid, |x| if (-1.0..=0.0).contains(&x) { 1.0 } else { 0.0 }, true)?;
    let (_, report) = solve_reflected(
        &m0,
        &DensityEquation::dyson(),
        0.0,
        PenaltySign::Confining,
        &[1e-1, 1e-2, 1e-3],
        0.5,
        &PdeSpec::new(0.0, 0.5),
    )?;
    for r in &report.runs {
        println!(
            "eps={:<6} mass beyond {:.3e}  gap beyond {:.3e}  Linf ratio {:.3}",
            r.eps, r.mass_beyond, r.gap_beyond, r.max_ratio
        );
    }
    println!("log-log slope in eps {:.2}; Linf bound holds: {}", report.eps_slope, report.linf_bound_holds);
    Ok(())
}
