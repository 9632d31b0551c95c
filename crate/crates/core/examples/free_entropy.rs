//! Free entropy of the semicircle family, its dilation law and the Fourier cross-check.

use dyson_lab::analytic::{Convention, SemicircleFamily};
use dyson_lab::measure::functionals::{fourier_entropy_check, free_entropy};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let grid = Grid::covering(-3.0, 3.0, 0.005)?;
    let unit =
        GridDensity::from_fn(grid, |x| SemicircleFamily::at_time(Convention::Raw, 1.0).unwrap().density(x), true)?;
    let e1 = free_entropy(&unit);
    for lambda in [0.5, 2.0] {
        let d = free_entropy(&unit.dilated(lambda)?);
        println!("lambda={lambda}: E = {d:.6}, E(1) + ½ log λ = {:.6}", e1 + 0.5 * lambda.ln());
    }
    let f = fourier_entropy_check(&unit);
    println!("direct {:.6}  fourier {:.6}  offset {:.3e}", f.direct, f.fourier, f.offset);
    Ok(())
}
