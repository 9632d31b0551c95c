//! The Marcenko-Pastur law is stationary for the Wishart CDF equation with
//! confining drift -x.

use dyson_lab::analytic::{mp_edges, mp_stationarity_residual, Convention, MarcenkoPastur};
use dyson_lab::kernel::DriftSpec;
use dyson_lab::pde::{solve_wishart, PdeSpec};
use dyson_lab::Grid;

fn main() -> dyson_lab::Result<()> {
    let eta = 2.0;
    let (lo, hi) = mp_edges(eta);
    println!("edges [{lo:.4}, {hi:.4}]  product {:.6}  sum {:.6}", lo * hi, lo + hi);
    let grid = Grid::covering(0.0, 4.0, 1.0 / 400.0)?;
    let u0 = MarcenkoPastur::new(eta, Convention::Raw)?.sample_cdf(grid)?;
    let residual = mp_stationarity_residual(eta, &u0)?;
    let bulk = (0..grid.n)
        .filter(|&i| grid.node(i) > lo + 0.1 && grid.node(i) < hi - 0.1)
        .map(|i| residual.values()[i].abs())
        .fold(0.0, f64::max);
    println!("stationarity residual in the bulk {bulk:.2e}");
    let flow = solve_wishart(&u0, eta, &DriftSpec::linear(-1.0), &PdeSpec::new(0.0, 0.5))?;
    let drift = flow.final_cdf().values().iter().zip(u0.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("sup |u(0.5) - u(0)| = {drift:.2e}");
    Ok(())
}
