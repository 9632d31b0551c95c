//! Singular integrals and functionals of measures on the line.

pub mod functionals;
pub mod half_laplacian;
pub mod hilbert;
pub mod io;
pub mod smoothing;
pub mod wasserstein;

pub use functionals::{
    cotlar_residual, entropy_dissipation, fourier_entropy_check, free_entropy, hhalf_seminorm, hhalf_seminorm_sq,
    hhalf_seminorm_sq_fourier, lp_norm, mean, moment, variance, CotlarResidual, FourierEntropyCheck,
};
pub use half_laplacian::{
    half_laplacian, half_laplacian_field, half_laplacian_with_tails, HalfLaplacianPlan, SplitValue, Tails,
};
pub use hilbert::{hilbert, hilbert_field, HilbertPlan};
pub use smoothing::ensemble_to_density;
pub use wasserstein::{wasserstein, MeasureRef};
