//! Forward and inverse Haar transform of a short signal, with the energy
//! check and a few ways of discarding coefficients.

use siet::wavelet::{haar_forward, haar_inverse, keep_largest_t, project_to_scale, soft_threshold};

fn main() -> siet::Result<()> {
    let signal = [4.0, 6.0, 10.0, 12.0, 8.0, 6.0, 5.0, 5.0];
    let coeffs = haar_forward(&signal)?;
    println!("scaling coefficient: {:.4}", coeffs.scaling());
    for (j, level) in coeffs.details().iter().enumerate() {
        println!("level {j} details: {level:.4?}");
    }

    let signal_energy: f64 = signal.iter().map(|v| v * v).sum();
    println!("signal energy {signal_energy:.4}, coefficient energy {:.4}", coeffs.energy());

    let back = haar_inverse(&coeffs)?;
    println!("round trip: {back:.4?}");

    let coarse = haar_inverse(&project_to_scale(&coeffs, 1)?)?;
    println!("two coarsest levels only: {coarse:.4?}");
    let sparse = haar_inverse(&keep_largest_t(&coeffs, 3))?;
    println!("three largest details: {sparse:.4?}");
    let shrunk = haar_inverse(&soft_threshold(&coeffs, 1.5)?)?;
    println!("soft threshold 1.5: {shrunk:.4?}");
    Ok(())
}
