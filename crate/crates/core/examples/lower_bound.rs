//! The random-bump family behind the lower bound: detection error per bump
//! against the Gaussian prediction, and the decay of the resulting loss.

use siet::adversary::{bit_error_experiment, lower_bound_experiment, AdversaryConfig};

fn main() -> siet::Result<()> {
    let cfg = AdversaryConfig {
        k: 1.0,
        sigma: 0.1,
        m_values: (9..=13).map(|j| 1 << j).collect(),
        trials: 100,
        seed: 3,
        c0: None,
    };
    for s in bit_error_experiment(&cfg)? {
        println!(
            "m = {:>5}, r = {:>3}: bit error {:.4} +- {:.4}, predicted {:.4}",
            s.m, s.r, s.empirical, s.std_err, s.predicted
        );
    }
    let report = lower_bound_experiment(&cfg)?;
    for row in &report.per_m {
        let scaled = row.energy_loss_mean * (row.m as f64).cbrt();
        println!("m = {:>5}: loss {:.4e} (loss * m^(1/3) = {scaled:.4})", row.m, row.energy_loss_mean);
    }
    println!("fitted slope {:?}", report.fitted_slope_energy);
    Ok(())
}
