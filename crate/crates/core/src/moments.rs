//! Closed-form expectation and second-moment formulas for the exact
//! solution, its spectral truncation, and both Euler-Maruyama schemes.
//!
//! The solution is Gaussian conditioned on the initial condition, so these
//! two quantities characterize it. Expectations evolve channelwise by the
//! deterministic factors (`e^{-l(l+1)t}` exactly, `xi^k` for the schemes);
//! second moments add the accumulated noise variance per degree:
//!
//! ```text
//! E ||X(t)||^2      = sum_l e^{-2 l(l+1) t} S_l
//!                     + A_l (1+2l) (1 - e^{-2 l(l+1) t}) / (2 l(l+1)),
//! E ||X_h(t_k)||^2  = sum_l xi^{2k} S_l
//!                     + A_l (1+2l) sum_{j=1}^k xi^{2(k-j+delta)} h,
//! ```
//!
//! where `S_l` is the per-degree sum of the initial second moments
//! `E|x^0|^2` over complex orders. The `l = 0` terms and `xi -> 1` use the
//! analytic limits `A_0 t` and `k h`.
//!
//! Initial-condition second moments are supplied as data (a
//! [`CoefficientField`] holding `E|x^0|^2` per real channel), keeping the
//! formulas sample-free.

use crate::harmonics::degree_rate;
use crate::noise::AngularPowerSpectrum;
use crate::solver_em::{stability_check, Scheme, DEFAULT_STABILITY_BOUND};
use crate::solver_exact::{ou_mean_factor, ou_step_variance, OuMode};
use crate::{CoefficientField, Result};

/// Threshold under which `1 - xi^2` (and `lambda h`) switch to their
/// analytic limits.
const LIMIT_EPS: f64 = 1e-12;

/// `E[X(t)]`: every degree-`l` channel of the mean field decays by
/// `e^{-l(l+1)t}`.
pub fn exact_expectation(x0_mean: &CoefficientField, t: f64) -> CoefficientField {
    debug_assert!(t >= 0.0);
    x0_mean.scale_degrees(|l| ou_mean_factor(degree_rate(l), t))
}

/// `E[X^(kappa)(t)]`: the truncated expectation.
pub fn spectral_expectation(x0_mean: &CoefficientField, kappa: u32, t: f64) -> CoefficientField {
    exact_expectation(&x0_mean.resized(kappa), t)
}

/// Noise contribution of one degree to the second moment at time `t`:
/// `A_l (1+2l) (1 - e^{-2 l(l+1) t}) / (2 l(l+1))`, with the `l = 0` limit
/// `A_0 t`.
fn noise_second_moment_term(spectrum: &AngularPowerSpectrum, degree: u32, t: f64) -> f64 {
    let mode = OuMode {
        rate: degree_rate(degree),
        intensity: spectrum.power(degree),
    };
    (1 + 2 * degree) as f64 * ou_step_variance(mode, t)
}

/// Per-degree initial second-moment sum, zero beyond the stored truncation.
fn initial_degree_sum(x0_msq: &CoefficientField, degree: u32) -> f64 {
    if degree <= x0_msq.truncation() {
        x0_msq.degree_channel_sum(degree)
    } else {
        0.0
    }
}

/// `E ||X(t)||^2` with the series truncated at `kappa`; `x0_msq` holds the
/// per-channel second moments `E|x^0|^2` of the initial condition.
pub fn exact_second_moment(
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    t: f64,
) -> f64 {
    debug_assert!(t >= 0.0);
    let mut sum = 0.0;
    for l in 0..=kappa {
        let decay = ou_mean_factor(degree_rate(l), t);
        sum += decay * decay * initial_degree_sum(x0_msq, l)
            + noise_second_moment_term(spectrum, l, t);
    }
    sum
}

/// `E ||X^(kappa)(t)||^2` of the spectral approximation; identical partial
/// sum to [`exact_second_moment`] at the same truncation.
pub fn spectral_second_moment(
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    t: f64,
) -> f64 {
    exact_second_moment(x0_msq, spectrum, kappa, t)
}

/// `E[X^(kappa,h)(t_k)]`: channelwise multiplication by `xi^k`.
pub fn em_expectation(
    scheme: Scheme,
    x0_mean: &CoefficientField,
    kappa: u32,
    h: f64,
    k: u64,
) -> Result<CoefficientField> {
    stability_check(scheme, kappa, h, DEFAULT_STABILITY_BOUND)?;
    Ok(x0_mean
        .resized(kappa)
        .scale_degrees(|l| scheme.xi(degree_rate(l) * h).powi(k as i32)))
}

/// Closed form of the noise sum `sum_{j=1}^k xi^{2(k-j+delta)} h`:
/// `xi^{2 delta} (1 - xi^{2k}) / (1 - xi^2) h`, with the `xi -> 1` limit
/// `k h`.
pub fn geometric_noise_sum(xi: f64, delta: u32, k: u64, h: f64) -> f64 {
    let xi_sq = xi * xi;
    if (1.0 - xi_sq).abs() < LIMIT_EPS {
        k as f64 * h
    } else {
        xi_sq.powi(delta as i32) * (1.0 - xi_sq.powi(k as i32)) / (1.0 - xi_sq) * h
    }
}

/// `E ||X^(kappa,h)(t_k)||^2` from the scheme recursion.
pub fn em_second_moment(
    scheme: Scheme,
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    h: f64,
    k: u64,
) -> Result<f64> {
    stability_check(scheme, kappa, h, DEFAULT_STABILITY_BOUND)?;
    let mut sum = 0.0;
    for l in 0..=kappa {
        let xi = scheme.xi(degree_rate(l) * h);
        sum += xi.powi(2 * k as i32) * initial_degree_sum(x0_msq, l)
            + spectrum.power(l)
                * (1 + 2 * l) as f64
                * geometric_noise_sum(xi, scheme.delta(), k, h);
    }
    Ok(sum)
}
