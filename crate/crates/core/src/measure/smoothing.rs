//! Empirical measures to grid densities.

use statrs::function::erf::erf;

use crate::error::Result;
use crate::grid::{Grid, GridDensity, ParticleEnsemble};

/// Gaussian-kernel smoothing of an ensemble, integrated exactly over each cell
/// and renormalized. `bandwidth = 0` gives the cell histogram.
pub fn ensemble_to_density(e: &ParticleEnsemble, grid: Grid, bandwidth: f64) -> Result<GridDensity> {
    let h = grid.h;
    let mut mass = vec![0.0; grid.n];
    let w = 1.0 / e.len() as f64;
    for &p in e.positions() {
        if bandwidth <= 0.0 {
            if let Some(i) = grid.cell_of(p) {
                mass[i] += w;
            }
            continue;
        }
        let reach = 8.0 * bandwidth + h;
        let lo = ((p - reach - grid.x0) / h).floor().max(0.0) as usize;
        let hi = (((p + reach - grid.x0) / h).ceil().max(0.0) as usize).min(grid.n - 1);
        if lo > hi {
            continue;
        }
        let scale = 1.0 / (bandwidth * std::f64::consts::SQRT_2);
        let cdf = |x: f64| 0.5 * erf((x - p) * scale);
        let mut prev = cdf(grid.node(lo) - 0.5 * h);
        for (i, m) in mass.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let next = cdf(grid.node(i) + 0.5 * h);
            *m += w * (next - prev);
            prev = next;
        }
    }
    let values = mass.into_iter().map(|m| m / h).collect();
    let mut d = GridDensity::on_grid(grid, values, false)?;
    d.renormalize()?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_particle_bump() {
        let grid = Grid::covering(-2.0, 2.0, 0.01).unwrap();
        let e = ParticleEnsemble::new(vec![0.0], 0.0).unwrap();
        let d = ensemble_to_density(&e, grid, 0.1).unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.value_at(0.0), 1.0 / (0.1 * (2.0 * std::f64::consts::PI).sqrt()), epsilon = 1e-2);
    }

    #[test]
    fn zero_bandwidth_is_histogram() {
        let grid = Grid::covering(0.0, 1.0, 0.25).unwrap();
        let e = ParticleEnsemble::new(vec![0.1, 0.2, 0.6, 0.9], 0.0).unwrap();
        let d = ensemble_to_density(&e, grid, 0.0).unwrap();
        assert_eq!(d.values(), &[2.0, 0.0, 1.0, 1.0]);
        let tiny = ensemble_to_density(&e, grid, 1e-9).unwrap();
        for (a, b) in tiny.values().iter().zip(d.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }
}
