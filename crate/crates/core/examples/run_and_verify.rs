//! Drives the command-line front end in process: a capacity curve run
//! followed by verification of its manifest.

use siet::cli::{main_with_args, verify_dir};

fn main() {
    let out = std::env::temp_dir().join("siet-run-example");
    let config = out.join("bsc.toml");
    std::fs::create_dir_all(&out).expect("create output directory");
    std::fs::write(&config, "seed = 1\n[truth]\nkind = \"ramp\"\n[channel]\nkind = \"bsc\"\ncrossover = 0.11\n")
        .expect("write config");
    let args = ["siet", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "curve"];
    let code = main_with_args(args);
    println!("curve exited with {code}");
    match verify_dir(&out) {
        Ok(rep) if rep.ok() => println!("verified {} files", rep.checked.len()),
        Ok(rep) => println!("verification problems: {:?}", rep.problems),
        Err(e) => println!("verification failed: {e}"),
    }
}
