//! Principal-value Hilbert transform of a sampled semicircle against the closed
//! form, and the Cotlar identity residual under grid refinement.

use dyson_lab::analytic::{semicircle_hilbert, Convention, SemicircleFamily};
use dyson_lab::measure::functionals::cotlar_residual;
use dyson_lab::measure::hilbert::hilbert_field;
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let fam = SemicircleFamily::at_time(Convention::Raw, 1.0)?;
    println!("{:>8} {:>12} {:>12}", "h", "max |H-H*|", "cotlar rel");
    for h in [0.04, 0.02, 0.01, 0.005] {
        let grid = Grid::covering(-3.0, 3.0, h)?;
        let m = GridDensity::from_fn(grid, |x| fam.density(x), true)?;
        let hm = hilbert_field(&m)?;
        // stay off the square-root edges where the error is only O(√h)
        let err = (0..grid.n)
            .filter(|&i| grid.node(i).abs() < 1.5)
            .map(|i| (hm.values()[i] - semicircle_hilbert(&fam, grid.node(i))).abs())
            .fold(0.0, f64::max);
        println!("{h:>8} {err:>12.3e} {:>12.3e}", cotlar_residual(&m).relative());
    }
    Ok(())
}
