//! Sampled hypothesis checks for the built-in interaction kernels.

use dyson_lab::kernel::{validate_hypotheses, InteractionKernel};

fn main() {
    for k in [InteractionKernel::dyson(), InteractionKernel::quadratic(0.5), InteractionKernel::gaussian()] {
        let r = validate_hypotheses(&k, (-2.0, 2.0));
        println!(
            "{:<16} f-bounds {:<5} comparison {:<5} (min g {:+.3e})  min c {:.3}  drift monotone {}",
            r.kernel, r.hypf, r.comparison, r.min_g, r.min_c, r.drift_monotone
        );
    }
}
