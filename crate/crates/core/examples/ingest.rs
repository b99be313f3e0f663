//! Turning 101 equispaced measurements into a fine-grid harvesting function.

use std::io::Write;

use siet::cli::ingest;
use siet::grid::{sine_plus_step, total_variation, FINE_GRID};

fn main() -> siet::Result<()> {
    let dir = std::env::temp_dir().join("siet-ingest-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("measurements.csv");
    let mut file = std::fs::File::create(&path)?;
    writeln!(file, "x,value")?;
    for i in 0..=100 {
        let x = i as f64 / 100.0;
        writeln!(file, "{x},{}", sine_plus_step(x))?;
    }
    drop(file);

    let beta = ingest(&path, FINE_GRID)?;
    println!("{} grid points, total variation {:.4}", beta.len(), total_variation(&beta));
    for x in [0.0, 0.125, 0.495, 0.4975, 0.5, 0.75] {
        println!("beta({x}) = {:.5} (source {:.5})", beta.eval(x), sine_plus_step(x));
    }
    Ok(())
}
