//! Euler-Maruyama time-stepping convergence sweeps: step size `2^-2m`
//! paired with truncation `2^m` (strong and second moment), or a fixed
//! truncation with dyadic step refinement (expectation).

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use sphere_spde::analysis::{
    em_expectation_error, em_second_moment_error, em_strong_error_exact, ErrorCurve,
};
use sphere_spde::harmonics::degree_rate;
use sphere_spde::moments::{spectral_expectation, spectral_second_moment};
use sphere_spde::noise::BrownianLattice;
use sphere_spde::rng::mix;
use sphere_spde::solver_em::{em_solve_terminal, DEFAULT_STABILITY_BOUND};
use sphere_spde::{CoefficientField, Scheme};

use super::{gate_expensive, spectrum_from, x0_mean_from, SPECTRUM_KEYS, X0_KEYS};
use crate::config::Config;
use crate::output::{write_curve_csv, write_svg_plot};

const KEYS: [&str; 15] = [
    "schemes",
    "error",
    "mode",
    "alphas",
    "etas",
    "m_min",
    "m_max",
    "t",
    "kappa",
    "j_min",
    "j_max",
    "samples",
    "ref_level",
    "kappa_ref",
    "seed",
];

fn parse_scheme(name: &str) -> Result<Scheme> {
    match name {
        "forward" => Ok(Scheme::Forward),
        "backward" => Ok(Scheme::Backward),
        other => bail!("unknown scheme {other:?} (forward | backward)"),
    }
}

pub fn run(cfg: &mut Config, out: &Path, allow_expensive: bool) -> Result<()> {
    let mut keys: Vec<&'static str> = KEYS.to_vec();
    keys.extend(SPECTRUM_KEYS);
    keys.extend(X0_KEYS);
    keys.sort_unstable();
    keys.dedup();
    cfg.restrict_keys(&keys)?;

    let error_kind = cfg.get_str("error", "strong");
    let schemes: Vec<Scheme> = cfg
        .get_str_list("schemes", &["forward", "backward"])
        .iter()
        .map(|s| parse_scheme(s))
        .collect::<Result<_>>()?;
    match error_kind.as_str() {
        "strong" | "second_moment" => run_dyadic_pairing(cfg, out, allow_expensive, &schemes),
        "expectation" => run_expectation(cfg, out, &schemes),
        other => bail!("unknown error kind {other:?} (strong | expectation | second_moment)"),
    }
}

/// Strong and second-moment sweeps: `h = 2^-2m`, `kappa = 2^m`, evaluated
/// at `t_k = t`.
fn run_dyadic_pairing(
    cfg: &Config,
    out: &Path,
    allow_expensive: bool,
    schemes: &[Scheme],
) -> Result<()> {
    let error_kind = cfg.get_str("error", "strong");
    let mode = cfg.get_str("mode", "exact");
    let t = cfg.get_f64("t", 1.0)?;
    let m_min = cfg.get_u32("m_min", 1)?;
    let m_max = cfg.get_u32("m_max", 8)?;
    ensure!(m_min >= 1 && m_min <= m_max, "need 1 <= m_min <= m_max");
    let seed = cfg.get_u64("seed", 42)?;
    let samples = cfg.get_usize("samples", 10)?;
    let ref_level = cfg.get_u32("ref_level", 14)?;
    let kappa_ref = cfg.get_u32("kappa_ref", 1 << 7)?;
    let default_alphas: &[f64] = match error_kind.as_str() {
        "second_moment" => &[0.5, 1.0, 2.0, 3.0],
        _ => &[1.0, 2.0, 3.0, 4.0, 5.0],
    };
    let alphas = cfg.get_f64_list("alphas", default_alphas)?;
    let x0_mean = x0_mean_from(cfg, 1 << m_max)?;
    ensure!(
        x0_mean.l2_norm_sq() == 0.0 || mode == "exact",
        "Monte Carlo sweeps run from X0 = 0"
    );
    let x0_msq = {
        let mut msq = x0_mean.clone();
        for v in msq.as_mut_slice() {
            *v = *v * *v;
        }
        msq
    };

    if mode == "mc" {
        let lattice_bytes = (kappa_ref as usize + 1).pow(2) * (1usize << ref_level) * 8;
        let draws = samples as u128
            * (kappa_ref as u128 + 1).pow(2)
            * (1u128 << ref_level)
            * alphas.len() as u128
            * schemes.len() as u128;
        gate_expensive(
            allow_expensive,
            &format!("EM Monte Carlo vs reference level {ref_level}, kappa_ref {kappa_ref}"),
            lattice_bytes,
            draws,
            false,
        )?;
    }

    // dyadic level of h = 2^-2m on [0, t]
    let level_of = |m: u32| -> Result<u32> {
        let h = 2f64.powi(-2 * m as i32);
        let level = (t.log2() + 2.0 * m as f64).round() as i64;
        ensure!(
            level >= 0 && (t * 2f64.powi(-(level as i32)) - h).abs() < 1e-12,
            "t = {t} must be a power of two so h = 2^-2m lies on a dyadic level"
        );
        Ok(level as u32)
    };

    for &scheme in schemes {
        for &alpha in &alphas {
            let spec = spectrum_from(cfg, alpha)?;
            let mut curve = ErrorCurve::new();
            let mut stderrs = Vec::new();
            match (mode.as_str(), error_kind.as_str()) {
                ("exact", kind) => {
                    for m in m_min..=m_max {
                        let kappa = 1u32 << m;
                        let h = 2f64.powi(-2 * m as i32);
                        let k = (t / h).round() as u64;
                        ensure!(
                            (k as f64 * h - t).abs() < 1e-9,
                            "t = {t} is not a multiple of h = 2^-{}",
                            2 * m
                        );
                        let err = match kind {
                            "strong" => em_strong_error_exact(scheme, &x0_msq, &spec, kappa, h, k)?,
                            _ => em_second_moment_error(scheme, &x0_msq, &spec, kappa, h, k)?,
                        };
                        curve.push(h, err);
                    }
                }
                ("mc", "strong") => {
                    // one lattice per sample drives the reference and every
                    // coarse level: the coupled-path study
                    let kappa_lat = kappa_ref.max(1 << m_max);
                    let ms: Vec<u32> = (m_min..=m_max).collect();
                    let zero = CoefficientField::zeros(0);
                    let mut sums = vec![0.0f64; ms.len()];
                    let mut sumsq = vec![0.0f64; ms.len()];
                    for s in 0..samples {
                        let lattice = BrownianLattice::sample(
                            kappa_lat,
                            t,
                            ref_level,
                            mix(seed, &[alpha.to_bits(), s as u64]),
                        )?;
                        let reference = em_solve_terminal(
                            scheme,
                            &zero,
                            &spec,
                            kappa_ref,
                            ref_level,
                            &lattice,
                            DEFAULT_STABILITY_BOUND,
                        )?
                        .resized(kappa_lat);
                        for (i, &m) in ms.iter().enumerate() {
                            let level = level_of(m)?;
                            ensure!(
                                level <= ref_level,
                                "h = 2^-{} finer than the reference level",
                                2 * m
                            );
                            let coarse = em_solve_terminal(
                                scheme,
                                &zero,
                                &spec,
                                1 << m,
                                level,
                                &lattice,
                                DEFAULT_STABILITY_BOUND,
                            )?
                            .resized(kappa_lat);
                            let mut diff = reference.clone();
                            for (d, c) in diff.as_mut_slice().iter_mut().zip(coarse.as_slice()) {
                                *d -= c;
                            }
                            let norm_sq = diff.l2_norm_sq();
                            sums[i] += norm_sq;
                            sumsq[i] += norm_sq * norm_sq;
                        }
                    }
                    for (i, &m) in ms.iter().enumerate() {
                        let n = samples as f64;
                        let mean = sums[i] / n;
                        let var = (sumsq[i] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
                        let se_sq = (var / n).sqrt();
                        let err = mean.max(0.0).sqrt();
                        curve.push(2f64.powi(-2 * m as i32), err);
                        stderrs.push(if err > 0.0 { se_sq / (2.0 * err) } else { 0.0 });
                    }
                }
                ("mc", _) => {
                    // sample mean of ||X^(kappa,h)(t)||^2 against the closed
                    // spectral second moment
                    for m in m_min..=m_max {
                        let kappa = 1u32 << m;
                        let level = level_of(m)?;
                        let mut norms = Vec::with_capacity(samples);
                        for s in 0..samples {
                            let lattice = BrownianLattice::sample(
                                kappa,
                                t,
                                level,
                                mix(seed, &[alpha.to_bits(), s as u64]),
                            )?;
                            let field = em_solve_terminal(
                                scheme,
                                &x0_mean,
                                &spec,
                                kappa,
                                level,
                                &lattice,
                                DEFAULT_STABILITY_BOUND,
                            )?;
                            norms.push(field.l2_norm_sq());
                        }
                        let n = samples as f64;
                        let mean = norms.iter().sum::<f64>() / n;
                        let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                            / (n - 1.0).max(1.0);
                        let closed = spectral_second_moment(&x0_msq, &spec, kappa, t);
                        curve.push(2f64.powi(-2 * m as i32), (mean - closed).abs());
                        stderrs.push((var / n).sqrt());
                    }
                }
                (other, _) => bail!("unknown mode {other:?} (exact | mc)"),
            }
            let stem = format!("em_{error_kind}_{}_alpha{alpha}", scheme.name());
            let reference_slope = match error_kind.as_str() {
                "strong" => Some((alpha / 4.0).min(1.0)),
                _ => Some((alpha / 2.0).min(1.0)),
            };
            write_curve_csv(
                &out.join(format!("{stem}.csv")),
                "h",
                &curve,
                if stderrs.is_empty() {
                    None
                } else {
                    Some(&stderrs)
                },
            )?;
            write_svg_plot(
                &out.join(format!("{stem}.svg")),
                &format!("{} EM {error_kind} error, alpha = {alpha}", scheme.name()),
                "h",
                &[(format!("alpha={alpha}"), &curve)],
                reference_slope,
            )
            .with_context(|| format!("plotting {stem}"))?;
            println!("wrote {stem}.csv / .svg ({} points)", curve.len());
        }
    }
    Ok(())
}

/// Expectation sweep at fixed truncation: one single-mode mean scaled to
/// unit H^eta norm per eta, steps `h = t / 2^j`.
fn run_expectation(cfg: &Config, out: &Path, schemes: &[Scheme]) -> Result<()> {
    let mode = cfg.get_str("mode", "exact");
    let t = cfg.get_f64("t", 0.01)?;
    let kappa = cfg.get_u32("kappa", 1 << 5)?;
    let j_min = cfg.get_u32("j_min", 3)?;
    let j_max = cfg.get_u32("j_max", 10)?;
    ensure!(j_min <= j_max, "need j_min <= j_max");
    let etas = cfg.get_f64_list("etas", &[0.5, 1.0, 2.0])?;
    let degree = cfg.get_u32("x0_degree", 8)?;
    ensure!(degree <= kappa, "x0_degree must lie within the truncation");
    let samples = cfg.get_usize("samples", 10)?;
    let seed = cfg.get_u64("seed", 42)?;
    let alphas = cfg.get_f64_list("alphas", &[2.0])?;
    let alpha = alphas[0];
    let spec = spectrum_from(cfg, alpha)?;

    for &scheme in schemes {
        let mut labeled: Vec<(String, ErrorCurve)> = Vec::new();
        for &eta in &etas {
            let amplitude = (1.0 + degree_rate(degree)).powf(-eta / 2.0);
            let x0 = CoefficientField::single_mode(kappa, degree, amplitude)?;
            let mut curve = ErrorCurve::new();
            for j in j_min..=j_max {
                let k = 1u64 << j;
                let h = t / k as f64;
                let err = match mode.as_str() {
                    "exact" => em_expectation_error(scheme, &x0, kappa, h, k)?,
                    "mc" => {
                        // sample-mean EM field against the closed truncated
                        // expectation
                        let mut mean_field = CoefficientField::zeros(kappa);
                        for s in 0..samples {
                            let lattice = BrownianLattice::sample(
                                kappa,
                                t,
                                j,
                                mix(seed, &[eta.to_bits(), s as u64]),
                            )?;
                            let field = em_solve_terminal(
                                scheme,
                                &x0,
                                &spec,
                                kappa,
                                j,
                                &lattice,
                                DEFAULT_STABILITY_BOUND,
                            )?;
                            for (acc, v) in
                                mean_field.as_mut_slice().iter_mut().zip(field.as_slice())
                            {
                                *acc += v / samples as f64;
                            }
                        }
                        let exact = spectral_expectation(&x0, kappa, t);
                        for (a, b) in mean_field.as_mut_slice().iter_mut().zip(exact.as_slice()) {
                            *a -= b;
                        }
                        mean_field.l2_norm_sq().sqrt()
                    }
                    other => bail!("unknown mode {other:?} (exact | mc)"),
                };
                curve.push(h, err);
            }
            labeled.push((format!("eta={eta}"), curve));
        }
        let stem = format!("em_expectation_{}", scheme.name());
        for (label, curve) in &labeled {
            let eta = label.trim_start_matches("eta=");
            write_curve_csv(&out.join(format!("{stem}_eta{eta}.csv")), "h", curve, None)?;
        }
        let refs: Vec<(String, &ErrorCurve)> =
            labeled.iter().map(|(l, c)| (l.clone(), c)).collect();
        write_svg_plot(
            &out.join(format!("{stem}.svg")),
            &format!(
                "{} EM expectation error, kappa = {kappa}, t = {t}",
                scheme.name()
            ),
            "h",
            &refs,
            Some(1.0),
        )?;
        println!("wrote {stem} CSVs / .svg");
    }
    Ok(())
}
