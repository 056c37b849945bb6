//! Error functionals for the spectral truncation and the Euler-Maruyama
//! schemes, plus log-log rate fitting.
//!
//! Mode orthogonality turns every exact error into a sum of closed-form
//! per-degree terms, so even the `kappa = 2^10` truncation studies are
//! sub-second; no field-space quadrature anywhere. Tails span many orders
//! of magnitude, so sums ascend in degree under compensated accumulation.
//!
//! Strong errors are `L^2(Omega; L^2(S^2))` distances under the shared-noise
//! coupling. For the Euler schemes the per-degree stochastic term is the Ito
//! isometry sum
//!
//! ```text
//! sum_{j=1}^k int_{t_{j-1}}^{t_j} ( e^{-lambda (t_k - s)} - xi^{k-j+delta} )^2 ds
//! ```
//!
//! with each inner integral in closed form.

use rayon::prelude::*;

use crate::harmonics::degree_rate;
use crate::moments;
use crate::noise::{AngularPowerSpectrum, BrownianLattice};
use crate::rng::{mix, DOMAIN_SAMPLE};
use crate::solver_em::{em_solve_terminal, stability_check, Scheme, DEFAULT_STABILITY_BOUND};
use crate::solver_exact::ou_mean_factor;
use crate::{CoefficientField, Error, Result};

/// Compensated (Kahan) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    carry: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// (resolution, error) pairs of one convergence experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorCurve {
    pub abscissae: Vec<f64>,
    pub errors: Vec<f64>,
}

impl ErrorCurve {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, abscissa: f64, error: f64) {
        self.abscissae.push(abscissa);
        self.errors.push(error);
    }

    pub fn len(&self) -> usize {
        self.abscissae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.abscissae.is_empty()
    }
}

/// Least-squares line through the curve in log2-log2 coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Number of points used.
    pub used: usize,
    /// Indices whose error was exactly zero, excluded from the fit.
    pub excluded: Vec<usize>,
}

/// Fits the log2-log2 slope. Points with error exactly zero are excluded
/// and reported; fewer than three usable points is an error.
pub fn fit_rate(curve: &ErrorCurve) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&a, &e)) in curve.abscissae.iter().zip(&curve.errors).enumerate() {
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!("abscissa {a} not positive")));
        }
        if !(e >= 0.0) {
            return Err(Error::InvalidInput(format!("error {e} negative or NaN")));
        }
        if e == 0.0 {
            excluded.push(i);
        } else {
            xs.push(a.log2());
            ys.push(e.log2());
        }
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "{n} usable points after excluding zeros; need at least 3"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all abscissae identical".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        used: n,
        excluded,
    })
}

/// Per-degree sum of initial second moments, zero beyond the stored field.
fn initial_degree_sum(x0_msq: &CoefficientField, degree: u32) -> f64 {
    if degree <= x0_msq.truncation() {
        x0_msq.degree_channel_sum(degree)
    } else {
        0.0
    }
}

/// `(1 - e^{-2 lambda t}) / (2 lambda)` with the `lambda -> 0` limit `t`.
fn heat_variance_integral(rate: f64, t: f64) -> f64 {
    crate::solver_exact::ou_step_variance(
        crate::solver_exact::OuMode {
            rate,
            intensity: 1.0,
        },
        t,
    )
}

/// Exact `L^2(Omega; L^2)` distance between the truncations at `kappa_ref`
/// and `kappa`: the per-degree tail
///
/// ```text
/// sum_{l=kappa+1}^{kappa_ref} e^{-2 l(l+1) t} S_l
///   + A_l (1+2l) (1 - e^{-2 l(l+1) t}) / (2 l(l+1)),
/// ```
///
/// square-rooted; orthogonality of the discarded modes makes this exact.
pub fn spectral_strong_error_exact(
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    kappa_ref: u32,
    t: f64,
) -> Result<f64> {
    if kappa > kappa_ref {
        return Err(Error::InvalidInput(format!(
            "kappa {kappa} exceeds reference {kappa_ref}"
        )));
    }
    let mut sum = KahanSum::default();
    for l in kappa + 1..=kappa_ref {
        let rate = degree_rate(l);
        let decay = ou_mean_factor(rate, t);
        sum.add(decay * decay * initial_degree_sum(x0_msq, l));
        sum.add(spectrum.power(l) * (1 + 2 * l) as f64 * heat_variance_integral(rate, t));
    }
    Ok(sum.value().max(0.0).sqrt())
}

/// `|| E X(t) - E X^(kappa)(t) ||_{L^2}`: the decayed tail of the mean field
/// beyond `kappa`.
pub fn spectral_expectation_error(x0_mean: &CoefficientField, kappa: u32, t: f64) -> f64 {
    let mut sum = KahanSum::default();
    for l in kappa + 1..=x0_mean.truncation() {
        let decay = ou_mean_factor(degree_rate(l), t);
        sum.add(decay * decay * x0_mean.degree_norm_sq(l));
    }
    sum.value().max(0.0).sqrt()
}

/// `| E ||X^(kappa_ref)||^2 - E ||X^(kappa)||^2 |` via the closed
/// second-moment formulas (an independent route from
/// [`spectral_strong_error_exact`]; the two agree as
/// `error = strong^2`).
pub fn spectral_second_moment_error(
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    kappa_ref: u32,
    t: f64,
) -> Result<f64> {
    if kappa > kappa_ref {
        return Err(Error::InvalidInput(format!(
            "kappa {kappa} exceeds reference {kappa_ref}"
        )));
    }
    let full = moments::exact_second_moment(x0_msq, spectrum, kappa_ref, t);
    let trunc = moments::spectral_second_moment(x0_msq, spectrum, kappa, t);
    Ok((full - trunc).abs())
}

/// Ito-isometry sum for one mode: the subinterval integrals of
/// `(e^{-lambda (t_k - s)} - xi^{k-j+delta})^2` in closed form,
///
/// ```text
/// e^{-2 lambda (t_k - t_j)} (1 - e^{-2 lambda h}) / (2 lambda)
///   - 2 xi^{k-j+delta} e^{-lambda (t_k - t_j)} (1 - e^{-lambda h}) / lambda
///   + xi^{2(k-j+delta)} h,
/// ```
///
/// summed over `j = 1..k`. With `i = k - j` the three pieces are geometric
/// in `e^{-2 lambda h}`, `xi e^{-lambda h}` and `xi^2`, so the whole sum
/// collapses to O(1); `ln1p`/`expm1` keep the `1 - q` denominators and
/// `1 - q^k` numerators exact for small `lambda h`. Zero at `lambda = 0`
/// (both solutions ride the same increments on the undamped mode).
fn ito_isometry_sum(scheme: Scheme, lambda: f64, h: f64, k: u64) -> f64 {
    if lambda < 1e-12 {
        return 0.0;
    }
    let x = lambda * h;
    let xi = scheme.xi(x);
    let kf = k as f64;
    let one_m_e1 = -(-x).exp_m1();
    let one_m_e2 = -(-2.0 * x).exp_m1();

    // geometric sum of e^{-2 lambda h i}
    let g_heat = -(-2.0 * x * kf).exp_m1() / one_m_e2;

    // geometric sum of (xi e^{-lambda h})^i
    let g_mix = if x < 0.5 {
        // xi > 0 here; denominator and numerator without cancellation
        let denom = match scheme {
            // 1 - (1 - x) e^{-x} = (1 - e^{-x}) + x e^{-x}
            Scheme::Forward => one_m_e1 + x * (-x).exp(),
            // 1 - e^{-x} / (1 + x) = (x - expm1(-x)) / (1 + x)
            Scheme::Backward => (x - (-x).exp_m1()) / (1.0 + x),
        };
        let ln_q = match scheme {
            Scheme::Forward => (-x).ln_1p() - x,
            Scheme::Backward => -x.ln_1p() - x,
        };
        -(kf * ln_q).exp_m1() / denom
    } else {
        // |xi e^{-x}| is small; the direct form is well conditioned
        let q = xi * (-x).exp();
        (1.0 - q.powi(k as i32)) / (1.0 - q)
    };

    // geometric sum of xi^{2i}
    let g_xi = if x < 0.5 {
        let one_m_xi_sq = match scheme {
            Scheme::Forward => x * (2.0 - x),
            Scheme::Backward => x * (2.0 + x) / ((1.0 + x) * (1.0 + x)),
        };
        let ln_xi = match scheme {
            Scheme::Forward => (-x).ln_1p(),
            Scheme::Backward => -x.ln_1p(),
        };
        -(2.0 * kf * ln_xi).exp_m1() / one_m_xi_sq
    } else {
        // the forward factor hits xi^2 = 1 at the admissibility edge x = 2
        let xi_sq = xi * xi;
        if (1.0 - xi_sq).abs() < 1e-12 {
            kf
        } else {
            (1.0 - xi_sq.powi(k as i32)) / (1.0 - xi_sq)
        }
    };

    let noise_factor = match scheme.delta() {
        0 => 1.0,
        _ => xi,
    };
    let sum = one_m_e2 / (2.0 * lambda) * g_heat - 2.0 * noise_factor * one_m_e1 / lambda * g_mix
        + noise_factor * noise_factor * h * g_xi;
    sum.max(0.0)
}

/// Literal per-subinterval accumulation of the same sum; O(k) cross check
/// for the collapsed geometric form.
#[doc(hidden)]
pub fn ito_isometry_sum_literal(scheme: Scheme, lambda: f64, h: f64, k: u64) -> f64 {
    if lambda < 1e-12 {
        return 0.0;
    }
    let xi = scheme.xi(lambda * h);
    let eh = ou_mean_factor(lambda, h);
    let one_m_e1 = -(-lambda * h).exp_m1();
    let one_m_e2 = -(-2.0 * lambda * h).exp_m1();
    let mut sum = KahanSum::default();
    // walk j = k down to 1; xp = xi^{k-j+delta}, ef = e^{-lambda (t_k - t_j)}
    let mut xp = match scheme.delta() {
        0 => 1.0,
        _ => xi,
    };
    let mut ef = 1.0;
    for _ in 0..k {
        sum.add(ef * ef * one_m_e2 / (2.0 * lambda));
        sum.add(-2.0 * xp * ef * one_m_e1 / lambda);
        sum.add(xp * xp * h);
        xp *= xi;
        ef *= eh;
    }
    sum.value().max(0.0)
}

/// Exact strong error between the truncated solution and its Euler-Maruyama
/// approximation after `k` steps of size `h`, under the shared-noise
/// coupling:
///
/// ```text
/// error^2 = sum_{l<=kappa} (e^{-lambda t_k} - xi^k)^2 S_l
///           + A_l (1+2l) * ito_isometry_sum(lambda, h, k).
/// ```
pub fn em_strong_error_exact(
    scheme: Scheme,
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    h: f64,
    k: u64,
) -> Result<f64> {
    stability_check(scheme, kappa, h, DEFAULT_STABILITY_BOUND)?;
    let t_k = k as f64 * h;
    let per_degree: Vec<f64> = (0..=kappa)
        .into_par_iter()
        .map(|l| {
            let lambda = degree_rate(l);
            let xi = scheme.xi(lambda * h);
            let det = ou_mean_factor(lambda, t_k) - xi.powi(k as i32);
            det * det * initial_degree_sum(x0_msq, l)
                + spectrum.power(l) * (1 + 2 * l) as f64 * ito_isometry_sum(scheme, lambda, h, k)
        })
        .collect();
    let mut sum = KahanSum::default();
    for v in per_degree {
        sum.add(v);
    }
    Ok(sum.value().max(0.0).sqrt())
}

/// `|| E X^(kappa)(t_k) - E X^(kappa,h)(t_k) ||_{L^2}` from the closed
/// expectation formulas.
pub fn em_expectation_error(
    scheme: Scheme,
    x0_mean: &CoefficientField,
    kappa: u32,
    h: f64,
    k: u64,
) -> Result<f64> {
    stability_check(scheme, kappa, h, DEFAULT_STABILITY_BOUND)?;
    let t_k = k as f64 * h;
    let mut sum = KahanSum::default();
    for l in 0..=kappa.min(x0_mean.truncation()) {
        let lambda = degree_rate(l);
        let gap = ou_mean_factor(lambda, t_k) - scheme.xi(lambda * h).powi(k as i32);
        sum.add(gap * gap * x0_mean.degree_norm_sq(l));
    }
    Ok(sum.value().max(0.0).sqrt())
}

/// `| E||X^(kappa)(t_k)||^2 - E||X^(kappa,h)(t_k)||^2 |` via the closed
/// moment formulas.
pub fn em_second_moment_error(
    scheme: Scheme,
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    h: f64,
    k: u64,
) -> Result<f64> {
    let t_k = k as f64 * h;
    let spectral = moments::spectral_second_moment(x0_msq, spectrum, kappa, t_k);
    let em = moments::em_second_moment(scheme, x0_msq, spectrum, kappa, h, k)?;
    Ok((spectral - em).abs())
}

/// Coupled-path variance between Euler runs at two dyadic levels for one
/// unit-intensity mode. Both runs consume the same fine increments; the
/// coarse run sees them block-summed, so the difference is Gaussian with
/// variance
///
/// ```text
/// h_f sum_{n=1}^{k_f} ( xi_c^{k_c - ceil(n/R) + delta} - xi_f^{k_f - n + delta} )^2.
/// ```
fn coupled_level_variance(
    scheme: Scheme,
    lambda: f64,
    t_final: f64,
    level_coarse: u32,
    level_fine: u32,
) -> f64 {
    // identical runs on the undamped mode or on identical grids
    if lambda < 1e-12 || level_coarse == level_fine {
        return 0.0;
    }
    let k_c = 1u64 << level_coarse;
    let k_f = 1u64 << level_fine;
    let ratio = (k_f / k_c) as usize;
    let h_c = t_final / k_c as f64;
    let h_f = t_final / k_f as f64;
    let xi_c = scheme.xi(lambda * h_c);
    let xi_f = scheme.xi(lambda * h_f);
    let delta = scheme.delta();
    let start = |xi: f64| if delta == 0 { 1.0 } else { xi };
    let mut sum = KahanSum::default();
    // block i = k_c..1 outer, fine step n descending inside each block
    let mut pw_f = start(xi_f);
    let mut pw_c = start(xi_c);
    for _block in 0..k_c {
        for _ in 0..ratio {
            let w = pw_c - pw_f;
            sum.add(w * w * h_f);
            pw_f *= xi_f;
        }
        pw_c *= xi_c;
    }
    sum.value().max(0.0)
}

/// Exact strong distance between coupled Euler-Maruyama runs at a coarse and
/// a fine dyadic level sharing one Brownian lattice: the closed-form
/// counterpart of [`mc_strong_error`], composed from the same per-mode
/// machinery as [`em_strong_error_exact`].
pub fn em_coupled_strong_error_exact(
    scheme: Scheme,
    x0_msq: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    level_coarse: u32,
    level_fine: u32,
    t_final: f64,
) -> Result<f64> {
    if level_coarse > level_fine {
        return Err(Error::InvalidInput(format!(
            "coarse level {level_coarse} finer than reference level {level_fine}"
        )));
    }
    let h_c = t_final / (1u64 << level_coarse) as f64;
    stability_check(scheme, kappa, h_c, DEFAULT_STABILITY_BOUND)?;
    let per_degree: Vec<f64> = (0..=kappa)
        .into_par_iter()
        .map(|l| {
            let lambda = degree_rate(l);
            let k_c = 1u64 << level_coarse;
            let k_f = 1u64 << level_fine;
            let det = scheme.xi(lambda * h_c).powi(k_c as i32)
                - scheme.xi(lambda * t_final / k_f as f64).powi(k_f as i32);
            det * det * initial_degree_sum(x0_msq, l)
                + spectrum.power(l)
                    * (1 + 2 * l) as f64
                    * coupled_level_variance(scheme, lambda, t_final, level_coarse, level_fine)
        })
        .collect();
    let mut sum = KahanSum::default();
    for v in per_degree {
        sum.add(v);
    }
    Ok(sum.value().max(0.0).sqrt())
}

/// Shared Brownian lattice shape for Monte Carlo estimators; sample `i`
/// draws an independent lattice from the stream `(seed, i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeParams {
    pub kappa: u32,
    pub t_final: f64,
    pub level: u32,
    pub seed: u64,
}

/// Monte Carlo estimate with its standard error on the squared scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Sample mean of the squared `L^2` distance.
    pub mean_sq: f64,
    /// Standard error of `mean_sq`.
    pub se_sq: f64,
    pub samples: usize,
}

impl McEstimate {
    /// Square root of the mean squared distance.
    pub fn error(&self) -> f64 {
        self.mean_sq.max(0.0).sqrt()
    }

    /// Delta-method standard error of [`Self::error`].
    pub fn stderr(&self) -> f64 {
        if self.mean_sq > 0.0 {
            self.se_sq / (2.0 * self.mean_sq.sqrt())
        } else {
            0.0
        }
    }
}

fn summarize(norms: Vec<f64>) -> McEstimate {
    let n = norms.len();
    let mean = norms.iter().sum::<f64>() / n as f64;
    let var = norms.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1).max(1) as f64;
    McEstimate {
        mean_sq: mean,
        se_sq: (var / n as f64).sqrt(),
        samples: n,
    }
}

/// Coupled-path Monte Carlo strong error between Euler runs at levels
/// `level_coarse` and `level_ref` with the same truncation `kappa`, starting
/// from `X_0 = 0`: `sqrt` of the sample mean of the squared `L^2` distance
/// over independent lattices.
pub fn mc_strong_error(
    scheme: Scheme,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    level_coarse: u32,
    level_ref: u32,
    params: &LatticeParams,
    samples: usize,
) -> Result<McEstimate> {
    Ok(mc_strong_errors_coupled(
        scheme,
        spectrum,
        kappa,
        &[level_coarse],
        level_ref,
        params,
        samples,
    )?
    .pop()
    .expect("one estimate per level"))
}

/// Coupled-path Monte Carlo strong errors for several coarse levels at
/// once: each sample draws one lattice, runs the reference once, and
/// differences every coarse level against it, so the whole sweep shares
/// noise realizations the way the dyadic lattice is meant to be used.
pub fn mc_strong_errors_coupled(
    scheme: Scheme,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    levels: &[u32],
    level_ref: u32,
    params: &LatticeParams,
    samples: usize,
) -> Result<Vec<McEstimate>> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    if levels.is_empty() {
        return Err(Error::InvalidInput("no coarse levels requested".into()));
    }
    if level_ref > params.level || kappa > params.kappa {
        return Err(Error::InvalidInput(format!(
            "reference (kappa {kappa}, level {level_ref}) exceeds the lattice shape \
             (kappa {}, level {})",
            params.kappa, params.level
        )));
    }
    for &level in levels {
        if level > level_ref {
            return Err(Error::InvalidInput(format!(
                "coarse level {level} finer than reference level {level_ref}"
            )));
        }
        let h = params.t_final / (1u64 << level) as f64;
        stability_check(scheme, kappa, h, DEFAULT_STABILITY_BOUND)?;
    }

    let one_sample = |i: usize| -> Result<Vec<f64>> {
        let lattice = BrownianLattice::sample(
            params.kappa,
            params.t_final,
            params.level,
            mix(params.seed, &[DOMAIN_SAMPLE, i as u64]),
        )?;
        let x0 = CoefficientField::zeros(0);
        let reference = em_solve_terminal(
            scheme,
            &x0,
            spectrum,
            kappa,
            level_ref,
            &lattice,
            DEFAULT_STABILITY_BOUND,
        )?;
        levels
            .iter()
            .map(|&level| {
                let coarse = em_solve_terminal(
                    scheme,
                    &x0,
                    spectrum,
                    kappa,
                    level,
                    &lattice,
                    DEFAULT_STABILITY_BOUND,
                )?;
                let mut diff = reference.clone();
                for (d, c) in diff.as_mut_slice().iter_mut().zip(coarse.as_slice()) {
                    *d -= c;
                }
                Ok(diff.l2_norm_sq())
            })
            .collect()
    };

    // Keep concurrent lattices within the memory budget; fall back to
    // sequential samples (the inner solves stay channel-parallel).
    let lattice_bytes = (params.kappa as usize + 1)
        * (params.kappa as usize + 1)
        * (1usize << params.level)
        * std::mem::size_of::<f64>();
    let parallel_ok = lattice_bytes.saturating_mul(rayon::current_num_threads()) < (1usize << 31);
    let per_sample: Result<Vec<Vec<f64>>> = if parallel_ok {
        (0..samples).into_par_iter().map(one_sample).collect()
    } else {
        (0..samples).map(one_sample).collect()
    };
    let per_sample = per_sample?;
    Ok((0..levels.len())
        .map(|li| summarize(per_sample.iter().map(|row| row[li]).collect()))
        .collect())
}

/// Generalization of [`mc_strong_error`] allowing a larger reference
/// truncation (the reference run keeps modes the coarse run truncates, so
/// the distance includes the spectral tail).
#[allow(clippy::too_many_arguments)]
pub fn mc_strong_error_vs_reference(
    scheme: Scheme,
    spectrum: &AngularPowerSpectrum,
    kappa_coarse: u32,
    level_coarse: u32,
    kappa_ref: u32,
    level_ref: u32,
    params: &LatticeParams,
    samples: usize,
) -> Result<McEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("sample count must be positive".into()));
    }
    if level_coarse > level_ref || level_ref > params.level {
        return Err(Error::InvalidInput(format!(
            "levels must satisfy coarse {level_coarse} <= ref {level_ref} <= lattice {}",
            params.level
        )));
    }
    if kappa_coarse > kappa_ref || kappa_ref > params.kappa {
        return Err(Error::InvalidInput(format!(
            "truncations must satisfy coarse {kappa_coarse} <= ref {kappa_ref} <= lattice {}",
            params.kappa
        )));
    }
    let h_c = params.t_final / (1u64 << level_coarse) as f64;
    stability_check(scheme, kappa_coarse, h_c, DEFAULT_STABILITY_BOUND)?;
    let h_r = params.t_final / (1u64 << level_ref) as f64;
    stability_check(scheme, kappa_ref, h_r, DEFAULT_STABILITY_BOUND)?;

    let one_sample = |i: usize| -> Result<f64> {
        let lattice = BrownianLattice::sample(
            params.kappa,
            params.t_final,
            params.level,
            mix(params.seed, &[DOMAIN_SAMPLE, i as u64]),
        )?;
        let x0 = CoefficientField::zeros(0);
        let coarse = em_solve_terminal(
            scheme,
            &x0,
            spectrum,
            kappa_coarse,
            level_coarse,
            &lattice,
            DEFAULT_STABILITY_BOUND,
        )?;
        let fine = em_solve_terminal(
            scheme,
            &x0,
            spectrum,
            kappa_ref,
            level_ref,
            &lattice,
            DEFAULT_STABILITY_BOUND,
        )?;
        let mut diff = fine;
        let coarse_wide = coarse.resized(kappa_ref);
        for (d, c) in diff.as_mut_slice().iter_mut().zip(coarse_wide.as_slice()) {
            *d -= c;
        }
        Ok(diff.l2_norm_sq())
    };

    // Keep concurrent lattices within the memory budget; fall back to
    // sequential samples (the inner solves stay channel-parallel).
    let lattice_bytes = (params.kappa as usize + 1)
        * (params.kappa as usize + 1)
        * (1usize << params.level)
        * std::mem::size_of::<f64>();
    let parallel_ok = lattice_bytes.saturating_mul(rayon::current_num_threads()) < (1usize << 31);
    let norms: Result<Vec<f64>> = if parallel_ok {
        (0..samples).into_par_iter().map(one_sample).collect()
    } else {
        (0..samples).map(one_sample).collect()
    };
    Ok(summarize(norms?))
}
