//! Loads model files and reports structural violations.
//!
//! cargo run --example validate_model -- [model.toml ...]

use std::path::PathBuf;

use impulse_control::model::{load_model_path, validate_model};

fn main() {
    let mut paths: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    if paths.is_empty() {
        let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models");
        paths = ["m1", "m2", "m3", "raw_reward"].iter().map(|m| dir.join(format!("{m}.toml"))).collect();
    }
    for path in paths {
        print!("{}: ", path.display());
        match load_model_path(&path) {
            Err(e) => println!("{e}"),
            Ok(spec) => {
                let report = validate_model(&spec);
                if report.is_empty() {
                    println!("valid, {} states, {} impulse targets, {} levels", spec.n(), spec.impulse_set.len(), spec.max_level() + 1);
                } else {
                    println!("{} violation(s)", report.len());
                    for v in report {
                        println!("  {v}");
                    }
                }
            }
        }
    }
}
