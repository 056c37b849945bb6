//! Subcommand implementations.

pub mod bounds;
pub mod em;
pub mod moments;
pub mod snapshot;
pub mod spectral;

use anyhow::{bail, Result};
use sphere_spde::{AngularPowerSpectrum, CoefficientField};

use crate::config::Config;

/// Config keys shared by the noise spectrum.
pub const SPECTRUM_KEYS: [&str; 4] = ["alpha", "scale", "a0", "cutoff"];

/// Builds the angular power spectrum from `scale`, `a0`, `cutoff` and one
/// explicit decay exponent.
pub fn spectrum_from(cfg: &Config, alpha: f64) -> Result<AngularPowerSpectrum> {
    let mut spec = AngularPowerSpectrum::new(cfg.get_f64("scale", 1.0)?, alpha)?
        .with_zero_mode(cfg.get_f64("a0", 0.0)?)?;
    if cfg.has("cutoff") {
        spec = spec.with_cutoff(cfg.get_u32("cutoff", 0)?);
    }
    Ok(spec)
}

/// Config keys for initial-condition construction.
pub const X0_KEYS: [&str; 4] = ["x0", "x0_degree", "x0_amplitude", "x0_decay"];

/// Initial mean field: `zero`, a `single_mode` `(x0_degree, x0_amplitude)`,
/// or `sobolev` with `m = 0` coefficients `(1 + l(l+1))^(-x0_decay / 2)` up
/// to the given truncation.
pub fn x0_mean_from(cfg: &Config, truncation: u32) -> Result<CoefficientField> {
    match cfg.get_str("x0", "zero").as_str() {
        "zero" => Ok(CoefficientField::zeros(0)),
        "single_mode" => {
            let degree = cfg.get_u32("x0_degree", 1)?;
            let amplitude = cfg.get_f64("x0_amplitude", 1.0)?;
            Ok(CoefficientField::single_mode(
                degree.max(truncation),
                degree,
                amplitude,
            )?)
        }
        "sobolev" => {
            let decay = cfg.get_f64("x0_decay", 2.0)?;
            let amplitude = cfg.get_f64("x0_amplitude", 1.0)?;
            let mut field = CoefficientField::zeros(truncation);
            for l in 0..=truncation {
                let weight = 1.0 + sphere_spde::harmonics::degree_rate(l);
                field.set_m0(l, amplitude * weight.powf(-decay / 2.0));
            }
            Ok(field)
        }
        other => bail!("unknown x0 kind {other:?} (zero | single_mode | sobolev)"),
    }
}

/// Large Monte Carlo runs must be requested explicitly; prints the estimate
/// the user is accepting. `force` marks runs that count as expensive
/// regardless of the size heuristics.
pub fn gate_expensive(
    allow_expensive: bool,
    description: &str,
    lattice_bytes: usize,
    total_draws: u128,
    force: bool,
) -> Result<()> {
    const BYTES_LIMIT: usize = 512 << 20;
    const DRAWS_LIMIT: u128 = 1 << 31;
    if force || lattice_bytes > BYTES_LIMIT || total_draws > DRAWS_LIMIT {
        eprintln!(
            "estimate for {description}: {:.2} GiB per lattice, {:.2e} normal draws total",
            lattice_bytes as f64 / (1u64 << 30) as f64,
            total_draws as f64
        );
        if !allow_expensive {
            bail!("{description} is expensive; re-run with --allow-expensive to accept");
        }
    }
    Ok(())
}
