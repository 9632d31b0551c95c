//! An outlier eigenvalue above the bulk drifts toward the edge and is absorbed.
//! Exact path from a point mass with λ0 = 1: λ = 1 + t, absorbed at t = 1.

use dyson_lab::analytic::{spike_absorption_reference, Convention};
use dyson_lab::particle::{APath, SpikeConfig};
use dyson_lab::pde::{solve_density, track_spike, DensityEquation, PdeSpec};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    for conv in [Convention::Raw, Convention::Paper] {
        println!("reference ({conv}): t0 = {:.6}", spike_absorption_reference(1.0, conv)?.t0);
    }
    let grid = Grid::covering(-3.0, 3.0, 1.0 / 400.0)?;
    let spec = PdeSpec::new(0.0, 1.3).with_uniform_samples(650);
    let bulk = solve_density(&GridDensity::point_mass(grid, 0.0)?, &DensityEquation::dyson(), &spec)?;
    let track = track_spike(&bulk, &SpikeConfig { lambda0: 1.0, a: APath::Constant })?;
    for t in [0.25, 0.5, 0.7] {
        let k = track.times.iter().position(|s| *s >= t).unwrap();
        println!("t={:.3} lambda={:.5} exact={:.5}", track.times[k], track.lambda[k], 1.0 + track.times[k]);
    }
    println!(
        "Z extrapolates to zero at t0 = {:.4}; first edge contact at {:?}",
        track.z_zero_time(Convention::Raw, 0.2, 0.8).unwrap_or(f64::NAN),
        track.absorbed_at
    );
    Ok(())
}
