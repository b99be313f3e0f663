//! Cubic-spline and Haar reconstructions of a function with a jump at
//! `x = 0.5`, from 128 noiseless samples. The spline rings around the jump;
//! the Haar reconstruction keeps it sharp.

use siet::grid::{l2_distance_sq, sample, sine_plus_step, GridFunction, FINE_GRID};
use siet::reconstruct::{reconstruct_noiseless, reconstruct_spline};

fn max_error_near(f: &GridFunction, lo: f64, hi: f64) -> f64 {
    (0..FINE_GRID)
        .map(|j| j as f64 / (FINE_GRID - 1) as f64)
        .filter(|x| (lo..=hi).contains(x))
        .map(|x| (f.eval(x) - sine_plus_step(x)).abs())
        .fold(0.0, f64::max)
}

fn main() -> siet::Result<()> {
    let samples = sample(sine_plus_step, 128, 0.0, 0)?;
    let spline = reconstruct_spline(&samples)?;
    let haar = reconstruct_noiseless(&samples)?;
    for (name, f) in [("cubic spline", &spline), ("haar", &haar)] {
        println!(
            "{name:<13} L2^2 = {:.3e}  max |error| on [0.45, 0.55] = {:.4}  on [0.6, 1] = {:.4}",
            l2_distance_sq(sine_plus_step, f, FINE_GRID),
            max_error_near(f, 0.45, 0.55),
            max_error_near(f, 0.6, 1.0)
        );
    }
    // Overshoot just right of the jump.
    let peak = (0..FINE_GRID / 16)
        .map(|j| 0.5 + j as f64 / (FINE_GRID - 1) as f64)
        .map(|x| spline.eval(x))
        .fold(f64::NEG_INFINITY, f64::max);
    println!("spline peak right of the jump: {peak:.4}");
    Ok(())
}
