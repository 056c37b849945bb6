//! Forward and backward Euler-Maruyama time stepping for the truncated mode
//! system, driven by shared Brownian-lattice increments.
//!
//! Both schemes advance one channel by
//!
//! ```text
//! x_k = xi x_{k-1} + xi^delta sqrt(A) dB_k,
//! xi = 1 - lambda h  (forward,  delta = 0)
//! xi = (1 + lambda h)^-1  (backward, delta = 1)
//! ```
//!
//! The backward factor satisfies `|xi| <= 1` unconditionally. The forward
//! factor requires `lambda h <= 2` for `|xi| <= 1`; the solver gates runs on
//! `kappa (kappa + 1) h <= c` with a configurable admissibility constant.
//! The dyadic experiment pairing `kappa = 2^m`, `h = 2^-2m` yields
//! `kappa (kappa + 1) h = 1 + 2^-m`, slightly above the strict constant 1
//! the convergence analysis is carried out under, hence the default bound 2
//! (the spectral radius condition) and [`STRICT_STABILITY_BOUND`] for the
//! strict regime.

use rayon::prelude::*;

use crate::harmonics::degree_rate;
use crate::noise::{channels, AngularPowerSpectrum, BrownianLattice};
use crate::solver_exact::Trajectory;
use crate::{CoefficientField, Error, Result};

/// Time stepper identity: which Euler scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Forward,
    Backward,
}

impl Scheme {
    /// Step factor `xi(lambda, h)`.
    #[inline]
    pub fn xi(self, lambda_h: f64) -> f64 {
        match self {
            Scheme::Forward => 1.0 - lambda_h,
            Scheme::Backward => 1.0 / (1.0 + lambda_h),
        }
    }

    /// Noise exponent `delta`: 0 forward, 1 backward.
    #[inline]
    pub fn delta(self) -> u32 {
        match self {
            Scheme::Forward => 0,
            Scheme::Backward => 1,
        }
    }

    /// `xi^delta`, the factor on the noise increment.
    #[inline]
    pub fn noise_factor(self, lambda_h: f64) -> f64 {
        match self {
            Scheme::Forward => 1.0,
            Scheme::Backward => self.xi(lambda_h),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Forward => "forward",
            Scheme::Backward => "backward",
        }
    }
}

/// Spectral-radius admissibility `|1 - lambda h| <= 1` for the top mode.
pub const DEFAULT_STABILITY_BOUND: f64 = 2.0;
/// The strict admissibility constant `kappa (kappa + 1) h <= 1` the
/// convergence rates are derived under.
pub const STRICT_STABILITY_BOUND: f64 = 1.0;

/// Report of a failed forward-scheme admissibility check.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error(
    "forward Euler inadmissible: kappa(kappa+1) h = {product} exceeds bound {bound} \
     (kappa = {kappa}, h = {step})"
)]
pub struct StabilityViolation {
    pub kappa: u32,
    pub step: f64,
    pub product: f64,
    pub bound: f64,
}

/// Admissibility of a `(scheme, kappa, h)` combination: the backward scheme
/// is unconditionally stable, the forward scheme requires
/// `kappa (kappa + 1) h <= bound`.
pub fn stability_check(
    scheme: Scheme,
    kappa: u32,
    step: f64,
    bound: f64,
) -> std::result::Result<(), StabilityViolation> {
    match scheme {
        Scheme::Backward => Ok(()),
        Scheme::Forward => {
            let product = degree_rate(kappa) * step;
            if product <= bound {
                Ok(())
            } else {
                Err(StabilityViolation {
                    kappa,
                    step,
                    product,
                    bound,
                })
            }
        }
    }
}

/// One Euler-Maruyama step: `xi x + xi^delta sqrt(intensity) d_beta`.
///
/// Pure recursion arithmetic: no admissibility gate, so inadmissible
/// parameters produce the (divergent) recursion faithfully. Gating happens
/// in [`em_solve`] / [`stability_check`].
#[inline]
pub fn em_step(scheme: Scheme, lambda: f64, step: f64, intensity: f64, x: f64, d_beta: f64) -> f64 {
    let lambda_h = lambda * step;
    scheme.xi(lambda_h) * x + scheme.noise_factor(lambda_h) * intensity.sqrt() * d_beta
}

struct SolveSetup {
    step: f64,
    n_steps: usize,
}

fn check_solve(
    scheme: Scheme,
    kappa: u32,
    level: u32,
    lattice: &BrownianLattice,
    stability_bound: f64,
) -> Result<SolveSetup> {
    if lattice.kappa() < kappa {
        return Err(Error::InvalidInput(format!(
            "lattice truncation {} below solve truncation {kappa}",
            lattice.kappa()
        )));
    }
    if level > lattice.level() {
        return Err(Error::InvalidInput(format!(
            "level {level} exceeds lattice level {}",
            lattice.level()
        )));
    }
    let n_steps = 1usize << level;
    let step = lattice.t_final() / n_steps as f64;
    stability_check(scheme, kappa, step, stability_bound)?;
    Ok(SolveSetup { step, n_steps })
}

/// Runs the scheme on the level-`j` grid (step `T 2^-j`) and returns the
/// full trajectory, including the initial field at `t = 0`.
pub fn em_solve(
    scheme: Scheme,
    x0: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    level: u32,
    lattice: &BrownianLattice,
    stability_bound: f64,
) -> Result<Trajectory> {
    let setup = check_solve(scheme, kappa, level, lattice, stability_bound)?;
    let x0 = x0.resized(kappa);
    let channel_list: Vec<_> = channels(kappa).collect();
    let per_channel: Vec<(usize, Vec<f64>)> = channel_list
        .par_iter()
        .map(|&c| {
            let incs = lattice
                .aggregate_channel(c, level)
                .expect("level checked above");
            let lambda = degree_rate(c.degree);
            let intensity = c.intensity(spectrum);
            let mut x = x0.as_slice()[c.index()];
            let mut values = Vec::with_capacity(setup.n_steps + 1);
            values.push(x);
            for &db in &incs {
                x = em_step(scheme, lambda, setup.step, intensity, x, db);
                values.push(x);
            }
            (c.index(), values)
        })
        .collect();

    let times: Vec<f64> = (0..=setup.n_steps).map(|k| k as f64 * setup.step).collect();
    let mut fields = vec![CoefficientField::zeros(kappa); times.len()];
    for (slot, values) in per_channel {
        for (field, v) in fields.iter_mut().zip(values) {
            field.as_mut_slice()[slot] = v;
        }
    }
    Ok(Trajectory { times, fields })
}

/// Like [`em_solve`] but streams the recursion and returns only the field at
/// the terminal time; memory stays `O(channels)` independent of the level.
pub fn em_solve_terminal(
    scheme: Scheme,
    x0: &CoefficientField,
    spectrum: &AngularPowerSpectrum,
    kappa: u32,
    level: u32,
    lattice: &BrownianLattice,
    stability_bound: f64,
) -> Result<CoefficientField> {
    let setup = check_solve(scheme, kappa, level, lattice, stability_bound)?;
    let x0 = x0.resized(kappa);
    let channel_list: Vec<_> = channels(kappa).collect();
    let terminal: Vec<(usize, f64)> = channel_list
        .par_iter()
        .map(|&c| {
            let incs = lattice
                .aggregate_channel(c, level)
                .expect("level checked above");
            let lambda = degree_rate(c.degree);
            let intensity = c.intensity(spectrum);
            let mut x = x0.as_slice()[c.index()];
            for &db in &incs {
                x = em_step(scheme, lambda, setup.step, intensity, x, db);
            }
            (c.index(), x)
        })
        .collect();
    let mut field = CoefficientField::zeros(kappa);
    for (slot, v) in terminal {
        field.as_mut_slice()[slot] = v;
    }
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_rate;
    use crate::analysis::ErrorCurve;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn spectrum(scale: f64, decay: f64) -> AngularPowerSpectrum {
        AngularPowerSpectrum::new(scale, decay).unwrap()
    }

    #[test]
    fn step_factor_values() {
        assert_eq!(Scheme::Forward.xi(0.5), 0.5);
        assert_eq!(Scheme::Backward.xi(1.0), 0.5);
        assert_eq!(Scheme::Forward.delta(), 0);
        assert_eq!(Scheme::Backward.delta(), 1);
    }

    #[test]
    fn em_step_degenerate_cases() {
        // lambda = 0: xi = 1 for both schemes
        for scheme in [Scheme::Forward, Scheme::Backward] {
            assert_eq!(em_step(scheme, 0.0, 0.1, 4.0, 1.5, 0.25), 1.5 + 2.0 * 0.25);
        }
        // noise-free contraction factors
        assert_eq!(em_step(Scheme::Forward, 5.0, 0.1, 0.0, 1.0, 0.7), 0.5);
        assert_eq!(em_step(Scheme::Backward, 10.0, 0.1, 0.0, 1.0, 0.7), 0.5);
    }

    #[test]
    fn stability_contract() {
        // backward: always admissible
        assert!(stability_check(Scheme::Backward, 1 << 10, 10.0, STRICT_STABILITY_BOUND).is_ok());
        // the dyadic pairing kappa = 2^m, h = 2^-2m passes the default bound
        for m in 1..=10u32 {
            let kappa = 1 << m;
            let h = 2f64.powi(-2 * m as i32);
            assert!(stability_check(Scheme::Forward, kappa, h, DEFAULT_STABILITY_BOUND).is_ok());
            // and exceeds the strict constant
            assert!(stability_check(Scheme::Forward, kappa, h, STRICT_STABILITY_BOUND).is_err());
        }
        // kappa = 4, h = 0.1: product 2 > 1
        let violation =
            stability_check(Scheme::Forward, 4, 0.1, STRICT_STABILITY_BOUND).unwrap_err();
        assert_eq!(violation.product, 2.0);
        assert_eq!(violation.bound, 1.0);
    }

    #[test]
    fn noise_free_solution_is_xi_power() {
        let silent = spectrum(1.0, 2.0).with_cutoff(0);
        let lattice = BrownianLattice::sample(2, 1.0, 4, 3).unwrap();
        let x0 = CoefficientField::single_mode(2, 2, 1.0).unwrap();
        for scheme in [Scheme::Forward, Scheme::Backward] {
            let traj = em_solve(
                scheme,
                &x0,
                &silent,
                2,
                4,
                &lattice,
                DEFAULT_STABILITY_BOUND,
            )
            .unwrap();
            let xi = scheme.xi(6.0 / 16.0);
            for (k, field) in traj.fields.iter().enumerate() {
                assert_relative_eq!(field.get_m0(2), xi.powi(k as i32), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn solution_matches_closed_recursion() {
        // x_k = xi^k x0 + sqrt(A) sum_j xi^{k-j+delta} dB_j, channelwise
        let spec = spectrum(0.8, 2.0).with_zero_mode(0.3).unwrap();
        let lattice = BrownianLattice::sample(3, 0.5, 5, 17).unwrap();
        let mut x0 = CoefficientField::zeros(3);
        for (i, v) in x0.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 * 0.31).cos();
        }
        for scheme in [Scheme::Forward, Scheme::Backward] {
            let level = 4;
            let h = 0.5 / 16.0;
            let traj = em_solve(
                scheme,
                &x0,
                &spec,
                3,
                level,
                &lattice,
                DEFAULT_STABILITY_BOUND,
            )
            .unwrap();
            for c in channels(3) {
                let incs = lattice.aggregate_channel(c, level).unwrap();
                let lambda = degree_rate(c.degree);
                let xi = scheme.xi(lambda * h);
                let a = c.intensity(&spec).sqrt();
                for k in 0..=16usize {
                    let mut closed = xi.powi(k as i32) * x0.as_slice()[c.index()];
                    for (j, db) in incs.iter().take(k).enumerate() {
                        closed += a * xi.powi((k - (j + 1)) as i32 + scheme.delta() as i32) * db;
                    }
                    let got = traj.fields[k].as_slice()[c.index()];
                    assert_abs_diff_eq!(got, closed, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn terminal_solve_matches_full_trajectory() {
        let spec = spectrum(1.0, 3.0);
        let lattice = BrownianLattice::sample(4, 1.0, 6, 9).unwrap();
        let x0 = CoefficientField::zeros(4);
        for scheme in [Scheme::Forward, Scheme::Backward] {
            let traj =
                em_solve(scheme, &x0, &spec, 4, 6, &lattice, DEFAULT_STABILITY_BOUND).unwrap();
            let term =
                em_solve_terminal(scheme, &x0, &spec, 4, 6, &lattice, DEFAULT_STABILITY_BOUND)
                    .unwrap();
            assert_eq!(traj.terminal(), &term);
        }
    }

    #[test]
    fn forward_gate_rejects_backward_accepts() {
        let spec = spectrum(1.0, 2.0);
        // kappa = 8, level 2 on T = 1: h = 0.25, kappa(kappa+1)h = 18 >> 1
        let lattice = BrownianLattice::sample(8, 1.0, 2, 21).unwrap();
        let x0 = CoefficientField::zeros(8);
        assert!(em_solve(
            Scheme::Backward,
            &x0,
            &spec,
            8,
            2,
            &lattice,
            DEFAULT_STABILITY_BOUND
        )
        .is_ok());
        let err = em_solve(
            Scheme::Forward,
            &x0,
            &spec,
            8,
            2,
            &lattice,
            DEFAULT_STABILITY_BOUND,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Stability(_)));
    }

    #[test]
    fn solve_validates_lattice_compatibility() {
        let spec = spectrum(1.0, 2.0);
        let lattice = BrownianLattice::sample(2, 1.0, 3, 0).unwrap();
        let x0 = CoefficientField::zeros(4);
        assert!(em_solve(
            Scheme::Backward,
            &x0,
            &spec,
            4,
            3,
            &lattice,
            DEFAULT_STABILITY_BOUND
        )
        .is_err());
        assert!(em_solve(
            Scheme::Backward,
            &x0,
            &spec,
            2,
            5,
            &lattice,
            DEFAULT_STABILITY_BOUND
        )
        .is_err());
    }

    #[test]
    fn backward_contracts_noise_free_l2() {
        let silent = spectrum(1.0, 2.0).with_cutoff(0);
        let lattice = BrownianLattice::sample(5, 4.0, 5, 2).unwrap();
        let mut x0 = CoefficientField::zeros(5);
        for (i, v) in x0.as_mut_slice().iter_mut().enumerate() {
            *v = ((7 + i) as f64).sin();
        }
        let traj = em_solve(
            Scheme::Backward,
            &x0,
            &silent,
            5,
            5,
            &lattice,
            DEFAULT_STABILITY_BOUND,
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for f in &traj.fields {
            let cur = f.l2_norm_sq();
            assert!(cur <= prev);
            prev = cur;
        }
    }

    #[test]
    fn schemes_agree_at_rate_h_on_fixed_path() {
        // single mode lambda = 2, same Brownian path across levels
        let spec = spectrum(1.0, 2.0).with_cutoff(1);
        let lattice = BrownianLattice::sample(1, 1.0, 10, 4).unwrap();
        let x0 = CoefficientField::single_mode(1, 1, 1.0).unwrap();
        let mut curve = ErrorCurve::new();
        for level in 4..=10u32 {
            let f = em_solve_terminal(
                Scheme::Forward,
                &x0,
                &spec,
                1,
                level,
                &lattice,
                DEFAULT_STABILITY_BOUND,
            )
            .unwrap();
            let b = em_solve_terminal(
                Scheme::Backward,
                &x0,
                &spec,
                1,
                level,
                &lattice,
                DEFAULT_STABILITY_BOUND,
            )
            .unwrap();
            let gap = (f.get_m0(1) - b.get_m0(1)).abs()
                + (f.get_re(1, 1) - b.get_re(1, 1)).abs()
                + (f.get_im(1, 1) - b.get_im(1, 1)).abs();
            curve.push(2f64.powi(-(level as i32)), gap);
        }
        let fit = fit_rate(&curve).unwrap();
        assert!(
            (fit.slope - 1.0).abs() <= 0.2,
            "forward/backward gap decays at rate {} instead of ~1",
            fit.slope
        );
    }
}
