//! Re-derive the depolarisation strength of the `paper-like` preset.
//!
//! `cargo run --release -p ctxrand --example calibrate [target] [tolerance] [game_rounds]`

use ctxrand::kcbs::{calibrate_noise, CalibrationSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |k: usize, default: f64| args.get(k).map_or(Ok(default), |s| s.parse::<f64>());
    let mut spec = CalibrationSpec::new(arg(0, 0.795)?, arg(1, 0.0005)?);
    spec.game_rounds = arg(2, 1e6)? as u64;
    let c = calibrate_noise(&spec)?;
    println!(
        "p_depolarize = {:.6e}  g = {:.5} ± {:.5}  ({} evaluations)",
        c.noise.p_depolarize, c.g, c.sigma_g, c.evaluations
    );
    Ok(())
}
