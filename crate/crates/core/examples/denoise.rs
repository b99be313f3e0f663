//! Recovering a step-plus-sine harvesting function from noisy samples with
//! Haar shrinkage, once with the noise level known and once estimated.

use siet::grid::{l2_distance_sq, sample, sine_plus_step, FINE_GRID};
use siet::reconstruct::{estimate_sigma, reconstruct, Method, ReconstructionConfig};

fn main() -> siet::Result<()> {
    let sigma = 0.1;
    println!("{:>6} {:>12} {:>12} {:>12} {:>10}", "m", "raw", "known", "estimated", "sigma_hat");
    for j in 6..=12 {
        let m = 1usize << j;
        let samples = sample(sine_plus_step, m, sigma, 7)?;
        let raw = reconstruct(&samples, &ReconstructionConfig::new(Method::HaarLinear))?;
        let known = reconstruct(&samples, &ReconstructionConfig::new(Method::HaarShrinkage).with_sigma(sigma))?;
        let estimated = reconstruct(&samples, &ReconstructionConfig::new(Method::HaarShrinkage))?;
        println!(
            "{m:>6} {:>12.3e} {:>12.3e} {:>12.3e} {:>10.4}",
            l2_distance_sq(sine_plus_step, &raw, FINE_GRID),
            l2_distance_sq(sine_plus_step, &known, FINE_GRID),
            l2_distance_sq(sine_plus_step, &estimated, FINE_GRID),
            estimate_sigma(&samples)?
        );
    }
    Ok(())
}
