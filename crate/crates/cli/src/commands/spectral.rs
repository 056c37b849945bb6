//! Spectral truncation convergence sweeps: error against a high reference
//! truncation over `kappa = 2^j`, closed-form or Monte Carlo.

use std::path::Path;

use anyhow::{ensure, Context, Result};
use sphere_spde::analysis::{
    spectral_expectation_error, spectral_second_moment_error, spectral_strong_error_exact,
    ErrorCurve,
};
use sphere_spde::rng::mix;
use sphere_spde::solver_exact::spectral_solve;
use sphere_spde::CoefficientField;

use super::{gate_expensive, spectrum_from, x0_mean_from, SPECTRUM_KEYS, X0_KEYS};
use crate::config::Config;
use crate::output::{write_curve_csv, write_svg_plot};

const KEYS: [&str; 11] = [
    "alphas",
    "error",
    "mode",
    "t",
    "kappa_ref",
    "j_min",
    "j_max",
    "samples",
    "seed",
    "scale",
    "a0",
];

/// Squares a mean field channelwise: the per-channel second moments of a
/// deterministic initial condition.
fn mean_to_msq(mean: &CoefficientField) -> CoefficientField {
    let mut msq = mean.clone();
    for l in 0..=mean.truncation() {
        msq.set_m0(l, mean.get_m0(l).powi(2));
        for m in 1..=l {
            msq.set_re(l, m, mean.get_re(l, m).powi(2));
            msq.set_im(l, m, mean.get_im(l, m).powi(2));
        }
    }
    msq
}

pub fn run(cfg: &mut Config, out: &Path, allow_expensive: bool) -> Result<()> {
    let mut keys: Vec<&'static str> = KEYS.to_vec();
    keys.extend(SPECTRUM_KEYS);
    keys.extend(X0_KEYS);
    keys.sort_unstable();
    keys.dedup();
    cfg.restrict_keys(&keys)?;

    let error_kind = cfg.get_str("error", "strong");
    let mode = cfg.get_str("mode", "exact");
    let default_t = if error_kind == "strong" { 1.0 } else { 0.01 };
    let t = cfg.get_f64("t", default_t)?;
    let kappa_ref = cfg.get_u32("kappa_ref", 1 << 10)?;
    let j_min = cfg.get_u32("j_min", 0)?;
    let j_max = cfg.get_u32("j_max", 9)?;
    ensure!(j_min <= j_max, "j_min must not exceed j_max");
    ensure!(
        (1u32 << j_max) <= kappa_ref,
        "sweep reaches kappa = 2^{j_max} beyond the reference {kappa_ref}"
    );
    let samples = cfg.get_usize("samples", 10)?;
    let seed = cfg.get_u64("seed", 42)?;
    let default_alphas: &[f64] = match error_kind.as_str() {
        "second_moment" => &[0.5, 1.0, 2.0, 3.0],
        _ => &[1.0, 2.0, 3.0, 4.0, 5.0],
    };
    let alphas = cfg.get_f64_list("alphas", default_alphas)?;

    let x0_mean = x0_mean_from(cfg, kappa_ref)?;
    let x0_msq = mean_to_msq(&x0_mean);

    if mode == "mc" {
        let draws = samples as u128 * (kappa_ref as u128 + 1).pow(2) * alphas.len() as u128;
        gate_expensive(
            allow_expensive,
            &format!("spectral Monte Carlo at kappa_ref = {kappa_ref}"),
            0,
            draws,
            // large reference truncations always count as expensive
            kappa_ref > 512,
        )?;
    }

    for &alpha in &alphas {
        let spec = spectrum_from(cfg, alpha)?;
        let mut curve = ErrorCurve::new();
        let mut stderrs = Vec::new();
        match mode.as_str() {
            "exact" => {
                for j in j_min..=j_max {
                    let kappa = 1 << j;
                    let err = match error_kind.as_str() {
                        "strong" => {
                            spectral_strong_error_exact(&x0_msq, &spec, kappa, kappa_ref, t)?
                        }
                        "expectation" => spectral_expectation_error(&x0_mean, kappa, t),
                        "second_moment" => {
                            spectral_second_moment_error(&x0_msq, &spec, kappa, kappa_ref, t)?
                        }
                        other => anyhow::bail!("unknown error kind {other:?}"),
                    };
                    curve.push(kappa as f64, err);
                }
            }
            "mc" => {
                // one reference solve per sample serves every truncation:
                // the coupled difference is exactly the degree tail
                let mut tail_sq_sums = vec![0.0f64; (j_max - j_min + 1) as usize];
                let mut tail_sq_sumsq = vec![0.0f64; tail_sq_sums.len()];
                let mut mean_field = CoefficientField::zeros(kappa_ref);
                for s in 0..samples {
                    let traj = spectral_solve(
                        &x0_mean,
                        &spec,
                        kappa_ref,
                        &[t],
                        mix(seed, &[alpha.to_bits(), s as u64]),
                    )?;
                    let field = traj.terminal();
                    for (slot, v) in mean_field.as_mut_slice().iter_mut().zip(field.as_slice()) {
                        *slot += v / samples as f64;
                    }
                    let degree_norms: Vec<f64> =
                        (0..=kappa_ref).map(|l| field.degree_norm_sq(l)).collect();
                    for (i, j) in (j_min..=j_max).enumerate() {
                        let kappa = 1u32 << j;
                        let tail: f64 = degree_norms[kappa as usize + 1..].iter().sum();
                        tail_sq_sums[i] += tail;
                        tail_sq_sumsq[i] += tail * tail;
                    }
                }
                for (i, j) in (j_min..=j_max).enumerate() {
                    let kappa = 1u32 << j;
                    let n = samples as f64;
                    let mean = tail_sq_sums[i] / n;
                    let var =
                        (tail_sq_sumsq[i] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
                    let se_sq = (var / n).sqrt();
                    let (err, se) = match error_kind.as_str() {
                        "strong" => {
                            let e = mean.max(0.0).sqrt();
                            (e, if e > 0.0 { se_sq / (2.0 * e) } else { 0.0 })
                        }
                        "second_moment" => (mean.abs(), se_sq),
                        "expectation" => {
                            // tail norm of the sample-mean field
                            let tail: f64 = (kappa + 1..=kappa_ref)
                                .map(|l| mean_field.degree_norm_sq(l))
                                .sum();
                            (tail.sqrt(), 0.0)
                        }
                        other => anyhow::bail!("unknown error kind {other:?}"),
                    };
                    curve.push(kappa as f64, err);
                    stderrs.push(se);
                }
            }
            other => anyhow::bail!("unknown mode {other:?} (exact | mc)"),
        }

        let stem = format!("spectral_{error_kind}_alpha{alpha}");
        let reference_slope = match error_kind.as_str() {
            "strong" => Some(-alpha / 2.0),
            "second_moment" => Some(-alpha),
            _ => None,
        };
        write_curve_csv(
            &out.join(format!("{stem}.csv")),
            "kappa",
            &curve,
            if stderrs.is_empty() {
                None
            } else {
                Some(&stderrs)
            },
        )?;
        write_svg_plot(
            &out.join(format!("{stem}.svg")),
            &format!("spectral {error_kind} error, alpha = {alpha}, t = {t}"),
            "kappa",
            &[(format!("alpha={alpha}"), &curve)],
            reference_slope,
        )
        .with_context(|| format!("plotting {stem}"))?;
        println!("wrote {stem}.csv / .svg ({} points)", curve.len());
    }
    Ok(())
}
