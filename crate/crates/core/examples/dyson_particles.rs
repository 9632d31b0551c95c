//! Dyson particles from a tight cluster spread into the semicircle of radius 2√t.

use dyson_lab::analytic::{Convention, SemicircleFamily};
use dyson_lab::measure::wasserstein::wasserstein;
use dyson_lab::particle::{simulate, Initial, SdeConfig};
use dyson_lab::{Grid, GridDensity};

fn main() -> dyson_lab::Result<()> {
    let mut cfg = SdeConfig::new(400, 1e-3, 1.0, 42);
    cfg.initial = Initial::Cluster { center: 0.0, width: 1e-2 };
    cfg.sample_times = vec![0.25, 0.5];
    let rec = simulate(&cfg)?.remove(0);
    let grid = Grid::covering(-3.0, 3.0, 0.005)?;
    for t in [0.25, 0.5, 1.0] {
        let e = rec.ensemble_at(t).expect("recorded time");
        let fam = SemicircleFamily::at_time(Convention::Raw, t)?;
        let sc = GridDensity::from_fn(grid, |x| fam.density(x), true)?;
        let p = e.positions();
        println!(
            "t={t:<5} extremes [{:+.3}, {:+.3}]  2√t={:.3}  W2 to semicircle {:.4}",
            p[0],
            p[p.len() - 1],
            fam.radius,
            wasserstein(e, &sc, 2.0)?
        );
    }
    Ok(())
}
