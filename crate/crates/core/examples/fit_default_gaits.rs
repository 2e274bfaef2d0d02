//! Regenerates `data/default_gaits.toml` from the reference stance/swing paths.
//!
//! cargo run -p gait-core --example fit_default_gaits > crates/core/data/default_gaits.toml

use gait_core::library::{fit_reference_library, REFERENCE_SAMPLES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let file = fit_reference_library(REFERENCE_SAMPLES)?;
    for g in &file.gait {
        eprintln!(
            "{:<16} max residual {:.6} m",
            g.name,
            g.fit_residual_m.unwrap_or(f64::NAN)
        );
    }
    println!("# Generated by `cargo run -p gait-core --example fit_default_gaits`.");
    println!("# Periodic least-squares fits of stance/swing reference paths ({REFERENCE_SAMPLES} samples).");
    println!("# Offsets are cycle fractions, weights are meters, frequencies are Hz.\n");
    print!("{}", file.to_toml_string()?);
    Ok(())
}
