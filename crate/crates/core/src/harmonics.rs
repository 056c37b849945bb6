//! Spherical-harmonic basis machinery.
//!
//! Conventions: colatitude `theta` in `[0, pi]`, longitude `phi` in
//! `[0, 2*pi)`, Cartesian coupling `y = (sin t cos p, sin t sin p, cos t)`.
//! The complex basis functions are
//!
//! ```text
//! Y_{l,m}(theta, phi) = sqrt((2l+1)/(4 pi) * (l-m)!/(l+m)!)
//!                       * P_{l,m}(cos theta) * e^{i m phi},   m >= 0,
//! Y_{l,m} = (-1)^m conj(Y_{l,-m}),                            m < 0,
//! ```
//!
//! with the Condon-Shortley phase `(-1)^m` folded into the associated
//! Legendre functions `P_{l,m}`. They are orthonormal in `L^2(S^2; C)` and
//! are eigenfunctions of the Laplace-Beltrami operator with eigenvalues
//! `-l(l+1)`.
//!
//! Everything here is evaluated by three-term recurrences. The fully
//! normalized recurrence keeps single harmonics finite up to degrees of a
//! few thousand, which plain `(2m-1)!!`-style prefactors cannot do past
//! `m ~ 150`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::{Error, Result};

/// Index of one complex spherical-harmonic mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    degree: u32,
    order: i32,
}

impl ModeIndex {
    /// Requires `|order| <= degree`.
    pub fn new(degree: u32, order: i32) -> Result<Self> {
        if order.unsigned_abs() > degree {
            return Err(Error::Domain(format!(
                "mode order {order} exceeds degree {degree}"
            )));
        }
        Ok(Self { degree, order })
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn order(&self) -> i32 {
        self.order
    }

    /// Laplace-Beltrami eigenvalue `-l(l+1)`; zero only for `l = 0`.
    pub fn eigenvalue(&self) -> f64 {
        -self.rate()
    }

    /// Decay rate `l(l+1)` of the mode under the heat flow.
    pub fn rate(&self) -> f64 {
        degree_rate(self.degree)
    }
}

/// `l(l+1)` as f64.
#[inline]
pub fn degree_rate(degree: u32) -> f64 {
    let l = degree as f64;
    l * (l + 1.0)
}

fn check_mu(mu: f64) -> Result<()> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::Domain(format!("argument {mu} outside [-1, 1]")));
    }
    Ok(())
}

/// Legendre polynomial `P_l(mu)` by the Bonnet three-term recurrence
/// `(l+1) P_{l+1} = (2l+1) mu P_l - l P_{l-1}`.
pub fn legendre(degree: u32, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if degree == 0 {
        return Ok(1.0);
    }
    let (mut prev, mut cur) = (1.0, mu);
    for l in 1..degree {
        let l = l as f64;
        let next = ((2.0 * l + 1.0) * mu * cur - l * prev) / (l + 1.0);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Associated Legendre function `P_{l,m}(mu)` including the Condon-Shortley
/// phase, i.e. `(-1)^m (1-mu^2)^{m/2} d^m/dmu^m P_l(mu)`.
///
/// Computed by the `(l, m)` recurrence, not by repeated differentiation.
/// The unnormalized values overflow f64 around `m ~ 150`; use [`sph_harm`]
/// for high degrees, which runs the normalized recurrence.
pub fn associated_legendre(degree: u32, order: u32, mu: f64) -> Result<f64> {
    check_mu(mu)?;
    if order > degree {
        return Err(Error::Domain(format!(
            "order {order} exceeds degree {degree}"
        )));
    }
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    // P_{m,m} = (-1)^m (2m-1)!! s^m
    let mut pmm = 1.0;
    for i in 1..=order {
        pmm *= -((2 * i - 1) as f64) * s;
    }
    if degree == order {
        return Ok(pmm);
    }
    // P_{m+1,m} = mu (2m+1) P_{m,m}
    let mut prev = pmm;
    let mut cur = mu * (2 * order + 1) as f64 * pmm;
    for l in order + 2..=degree {
        let (lf, mf) = (l as f64, order as f64);
        let next = ((2.0 * lf - 1.0) * mu * cur - (lf + mf - 1.0) * prev) / (lf - mf);
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Fully normalized associated Legendre column at fixed `m`:
/// `p[i] = Pbar_{m+i, m}(mu)` where
/// `Pbar_{l,m} = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!) P_{l,m}`.
///
/// `sin_theta` must equal `sqrt(1 - mu^2)`; passing it explicitly keeps the
/// poles exact.
fn normalized_column(degree_max: u32, order: u32, mu: f64, sin_theta: f64) -> Vec<f64> {
    debug_assert!(order <= degree_max);
    // Pbar_{m,m} = -s sqrt((2m+1)/(2m)) Pbar_{m-1,m-1}, Pbar_{0,0} = 1/sqrt(4 pi)
    let mut diag = 0.5 / std::f64::consts::PI.sqrt();
    for i in 1..=order {
        let i = i as f64;
        diag *= -sin_theta * ((2.0 * i + 1.0) / (2.0 * i)).sqrt();
    }
    let len = (degree_max - order + 1) as usize;
    let mut col = Vec::with_capacity(len);
    col.push(diag);
    if len == 1 {
        return col;
    }
    // Pbar_{m+1,m} = mu sqrt(2m+3) Pbar_{m,m}
    col.push(mu * ((2 * order + 3) as f64).sqrt() * diag);
    for l in order + 2..=degree_max {
        let (lf, mf) = (l as f64, order as f64);
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = (((2.0 * lf + 1.0) * (lf - 1.0 + mf) * (lf - 1.0 - mf))
            / ((2.0 * lf - 3.0) * (lf * lf - mf * mf)))
            .sqrt();
        let i = (l - order) as usize;
        col.push(a * mu * col[i - 1] - b * col[i - 2]);
    }
    col
}

fn check_angles(theta: f64, phi: f64) -> Result<()> {
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::Domain(format!("colatitude {theta} outside [0, pi]")));
    }
    if !(0.0..2.0 * std::f64::consts::PI).contains(&phi) {
        return Err(Error::Domain(format!("longitude {phi} outside [0, 2 pi)")));
    }
    Ok(())
}

/// Orthonormal complex spherical harmonic `Y_{l,m}(theta, phi)`.
///
/// Negative orders are produced by the symmetry
/// `Y_{l,-m} = (-1)^m conj(Y_{l,m})`.
pub fn sph_harm(degree: u32, order: i32, theta: f64, phi: f64) -> Result<Complex64> {
    check_angles(theta, phi)?;
    let m_abs = order.unsigned_abs();
    if m_abs > degree {
        return Err(Error::Domain(format!(
            "order {order} exceeds degree {degree}"
        )));
    }
    let col = normalized_column(degree, m_abs, theta.cos(), theta.sin());
    let pbar = col[(degree - m_abs) as usize];
    let angle = m_abs as f64 * phi;
    let y = pbar * Complex64::new(angle.cos(), angle.sin());
    if order >= 0 {
        Ok(y)
    } else {
        let sign = if m_abs % 2 == 0 { 1.0 } else { -1.0 };
        Ok(sign * y.conj())
    }
}

/// Truncated random field on the sphere, stored as real coefficients of the
/// real-valued expansion.
///
/// For each degree `l <= kappa` the block holds `2l+1` channels
/// `[x_{l,0}, Re x_{l,1}, Im x_{l,1}, ..., Re x_{l,l}, Im x_{l,l}]`
/// laid out at offset `l^2`. The represented field is
///
/// ```text
/// f = sum_l ( x_{l,0} Y_{l,0}
///             + sum_{m=1}^{l} 2 Re x_{l,m} Re Y_{l,m} - 2 Im x_{l,m} Im Y_{l,m} ),
/// ```
///
/// equivalently the complex expansion with the conjugate symmetry
/// `x_{l,-m} = (-1)^m conj(x_{l,m})`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    truncation: u32,
    data: Vec<f64>,
}

#[inline]
fn block_start(degree: u32) -> usize {
    (degree as usize) * (degree as usize)
}

impl CoefficientField {
    pub fn zeros(truncation: u32) -> Self {
        let n = (truncation as usize + 1) * (truncation as usize + 1);
        Self {
            truncation,
            data: vec![0.0; n],
        }
    }

    /// Field with a single nonzero `m = 0` channel.
    pub fn single_mode(truncation: u32, degree: u32, value: f64) -> Result<Self> {
        if degree > truncation {
            return Err(Error::InvalidInput(format!(
                "degree {degree} exceeds truncation {truncation}"
            )));
        }
        let mut f = Self::zeros(truncation);
        f.set_m0(degree, value);
        Ok(f)
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    /// Total number of real channels, `(kappa+1)^2`.
    pub fn channel_count(&self) -> usize {
        self.data.len()
    }

    pub fn get_m0(&self, degree: u32) -> f64 {
        self.data[block_start(degree)]
    }

    pub fn get_re(&self, degree: u32, order: u32) -> f64 {
        debug_assert!(order >= 1 && order <= degree);
        self.data[block_start(degree) + 2 * order as usize - 1]
    }

    pub fn get_im(&self, degree: u32, order: u32) -> f64 {
        debug_assert!(order >= 1 && order <= degree);
        self.data[block_start(degree) + 2 * order as usize]
    }

    pub fn set_m0(&mut self, degree: u32, value: f64) {
        self.data[block_start(degree)] = value;
    }

    pub fn set_re(&mut self, degree: u32, order: u32, value: f64) {
        debug_assert!(order >= 1 && order <= degree);
        self.data[block_start(degree) + 2 * order as usize - 1] = value;
    }

    pub fn set_im(&mut self, degree: u32, order: u32, value: f64) {
        debug_assert!(order >= 1 && order <= degree);
        self.data[block_start(degree) + 2 * order as usize] = value;
    }

    /// Raw channel-major view: degree-`l` block at offset `l^2`, ordered
    /// `[m0, Re(1), Im(1), ..., Re(l), Im(l)]`.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Copies into a new truncation, zero-extending or dropping high degrees.
    pub fn resized(&self, truncation: u32) -> Self {
        let mut out = Self::zeros(truncation);
        let keep = block_start(self.truncation.min(truncation) + 1);
        out.data[..keep].copy_from_slice(&self.data[..keep]);
        out
    }

    /// Multiplies every channel of degree `l` by `factor(l)`.
    pub fn scale_degrees(&self, factor: impl Fn(u32) -> f64) -> Self {
        let mut out = self.clone();
        for l in 0..=self.truncation {
            let f = factor(l);
            for v in &mut out.data[block_start(l)..block_start(l + 1)] {
                *v *= f;
            }
        }
        out
    }

    /// Parseval sum of one degree block: `x_{l,0}^2 + 2 sum (Re^2 + Im^2)`,
    /// which equals `sum_{m=-l}^{l} |x_{l,m}|^2` of the complex expansion.
    pub fn degree_norm_sq(&self, degree: u32) -> f64 {
        let block = &self.data[block_start(degree)..block_start(degree + 1)];
        let mut sum = block[0] * block[0];
        for v in &block[1..] {
            sum += 2.0 * v * v;
        }
        sum
    }

    /// Linear channel sum of one degree block with the same `(1, 2, 2)`
    /// multiplicities as [`Self::degree_norm_sq`]. Used when the stored
    /// values are already per-channel second moments `E|x|^2`.
    pub fn degree_channel_sum(&self, degree: u32) -> f64 {
        let block = &self.data[block_start(degree)..block_start(degree + 1)];
        let mut sum = block[0];
        for v in &block[1..] {
            sum += 2.0 * v;
        }
        sum
    }

    /// Squared `L^2(S^2)` norm via Parseval.
    pub fn l2_norm_sq(&self) -> f64 {
        (0..=self.truncation).map(|l| self.degree_norm_sq(l)).sum()
    }

    /// Squared Sobolev `H^s(S^2)` norm: each degree weighted by
    /// `(1 + l(l+1))^s`.
    pub fn sobolev_norm_sq(&self, s: f64) -> f64 {
        (0..=self.truncation)
            .map(|l| (1.0 + degree_rate(l)).powf(s) * self.degree_norm_sq(l))
            .sum()
    }

    /// Pointwise field values at `(theta, phi)` grid points via the
    /// real-valued expansion.
    pub fn evaluate(&self, grid: &[(f64, f64)]) -> Result<Vec<f64>> {
        for &(theta, phi) in grid {
            check_angles(theta, phi)?;
        }
        Ok(grid
            .par_iter()
            .map(|&(theta, phi)| self.evaluate_point(theta, phi))
            .collect())
    }

    fn evaluate_point(&self, theta: f64, phi: f64) -> f64 {
        let kappa = self.truncation;
        let (mu, s) = (theta.cos(), theta.sin());
        let mut sum = 0.0;
        for m in 0..=kappa {
            let col = normalized_column(kappa, m, mu, s);
            if m == 0 {
                for l in 0..=kappa {
                    sum += self.get_m0(l) * col[l as usize];
                }
            } else {
                let (c, sn) = ((m as f64 * phi).cos(), (m as f64 * phi).sin());
                for l in m..=kappa {
                    let pbar = col[(l - m) as usize];
                    sum += 2.0 * pbar * (self.get_re(l, m) * c - self.get_im(l, m) * sn);
                }
            }
        }
        sum
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// exact for polynomials of degree `2n - 1`. Enough quadrature for the
/// orthonormality and norm checks in the test suites.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut rule = Vec::with_capacity(n);
    for i in 1..=n {
        // Tricomi-style initial guess, then Newton on P_n.
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let p = legendre(n as u32, x).expect("|x| <= 1 during Newton");
            let pm1 = legendre(n as u32 - 1, x).expect("|x| <= 1 during Newton");
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let step = p / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    rule
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    /// Rodrigues-formula oracle: expand (mu^2 - 1)^l, differentiate `l + m`
    /// times, evaluate, and apply the (-1)^m (1-mu^2)^{m/2} prefactor.
    fn rodrigues_assoc(l: u32, m: u32, mu: f64) -> f64 {
        let l = l as usize;
        // coefficients of (mu^2 - 1)^l
        let mut coeffs = vec![0.0f64; 2 * l + 1];
        let mut binom = 1.0f64;
        for k in 0..=l {
            coeffs[2 * k] = binom * if (l - k) % 2 == 0 { 1.0 } else { -1.0 };
            binom *= (l - k) as f64 / (k + 1) as f64;
        }
        for _ in 0..(l + m as usize) {
            for i in 0..coeffs.len() - 1 {
                coeffs[i] = (i + 1) as f64 * coeffs[i + 1];
            }
            *coeffs.last_mut().unwrap() = 0.0;
        }
        let poly: f64 = coeffs.iter().rev().fold(0.0, |acc, &c| acc * mu + c);
        let mut scale = 1.0;
        for k in 1..=l {
            scale /= 2.0 * k as f64;
        }
        let phase = if m % 2 == 0 { 1.0 } else { -1.0 };
        phase * (1.0 - mu * mu).powf(m as f64 / 2.0) * poly * scale
    }

    #[test]
    fn legendre_low_degrees() {
        assert_eq!(legendre(0, 0.3).unwrap(), 1.0);
        assert_eq!(legendre(1, 0.3).unwrap(), 0.3);
        assert_relative_eq!(legendre(2, 0.5).unwrap(), -0.125, max_relative = 1e-14);
    }

    #[test]
    fn legendre_matches_rodrigues() {
        for l in 0..=10u32 {
            for i in 0..=20 {
                let mu = -1.0 + i as f64 / 10.0;
                assert_abs_diff_eq!(
                    legendre(l, mu).unwrap(),
                    rodrigues_assoc(l, 0, mu),
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn legendre_rejects_out_of_range() {
        assert!(legendre(3, 1.5).is_err());
        assert!(associated_legendre(3, 1, -1.01).is_err());
        assert!(associated_legendre(3, 4, 0.0).is_err());
    }

    #[test]
    fn associated_legendre_reduces_to_legendre_at_m0() {
        for l in 0..=12u32 {
            for i in 0..=10 {
                let mu = -1.0 + i as f64 / 5.0;
                assert_eq!(
                    associated_legendre(l, 0, mu).unwrap(),
                    legendre(l, mu).unwrap()
                );
            }
        }
    }

    #[test]
    fn associated_legendre_known_values() {
        // P_{1,1}(0) = -(1 - 0)^{1/2} = -1
        assert_relative_eq!(
            associated_legendre(1, 1, 0.0).unwrap(),
            -1.0,
            max_relative = 1e-14
        );
        // frozen from symbolic differentiation of Rodrigues' formula
        assert_relative_eq!(
            associated_legendre(2, 1, 0.5).unwrap(),
            -1.299038105676658,
            max_relative = 1e-13
        );
    }

    #[test]
    fn associated_legendre_matches_rodrigues() {
        for l in 0..=8u32 {
            for m in 0..=l {
                for i in 1..20 {
                    let mu = -1.0 + i as f64 / 10.0;
                    assert_abs_diff_eq!(
                        associated_legendre(l, m, mu).unwrap(),
                        rodrigues_assoc(l, m, mu),
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn normalized_column_matches_log_space_normalization() {
        // ln[(l-m)!/(l+m)!] = -sum_{j=l-m+1}^{l+m} ln j
        let ln_ratio = |l: u32, m: u32| -> f64 {
            -((l - m + 1)..=(l + m))
                .map(|j| (j as f64).ln())
                .sum::<f64>()
        };
        for &mu in &[-0.9, -0.3, 0.0, 0.4, 0.8] {
            let s = (1.0f64 - mu * mu).sqrt();
            for m in 0..=40u32 {
                let col = normalized_column(40, m, mu, s);
                for l in m..=40 {
                    let norm = ((2 * l + 1) as f64 / (4.0 * PI) * ln_ratio(l, m).exp()).sqrt();
                    let expected = norm * associated_legendre(l, m, mu).unwrap();
                    assert_abs_diff_eq!(col[(l - m) as usize], expected, epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn normalized_column_is_finite_at_high_degree() {
        let col = normalized_column(1024, 700, 0.3, (1.0f64 - 0.09).sqrt());
        assert!(col.iter().all(|v| v.is_finite()));
        // self-orthonormality of Pbar_{1024,0}: integral of Pbar^2 = 1/(2 pi)
        let rule = gauss_legendre(1040);
        let int: f64 = rule
            .iter()
            .map(|&(x, w)| {
                let c = normalized_column(1024, 0, x, (1.0f64 - x * x).sqrt());
                w * c[1024] * c[1024]
            })
            .sum();
        assert_relative_eq!(int, 0.5 / PI, max_relative = 1e-8);
    }

    #[test]
    fn sph_harm_normalization_values() {
        for &(theta, phi) in &[(0.3, 0.0), (1.2, 2.5), (2.9, 6.0)] {
            let y = sph_harm(0, 0, theta, phi).unwrap();
            assert_relative_eq!(y.re, 0.2820947917738781, max_relative = 1e-14);
            assert_abs_diff_eq!(y.im, 0.0, epsilon = 1e-16);
        }
        let y = sph_harm(1, 0, 0.0, 1.0).unwrap();
        assert_relative_eq!(y.re, 0.4886025119029199, max_relative = 1e-14);
    }

    #[test]
    fn sph_harm_conjugation_symmetry() {
        for l in 0..=6u32 {
            for m in 0..=l as i32 {
                for &(theta, phi) in &[(0.7, 1.1), (1.9, 4.2), (2.4, 0.3)] {
                    let plus = sph_harm(l, m, theta, phi).unwrap();
                    let minus = sph_harm(l, -m, theta, phi).unwrap();
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    let expected = sign * plus.conj();
                    assert_abs_diff_eq!(minus.re, expected.re, epsilon = 1e-14);
                    assert_abs_diff_eq!(minus.im, expected.im, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn sph_harm_rejects_bad_angles() {
        assert!(sph_harm(2, 1, -0.1, 0.0).is_err());
        assert!(sph_harm(2, 1, 0.5, 2.0 * PI).is_err());
        assert!(sph_harm(2, 3, 0.5, 0.0).is_err());
    }

    /// Quadrature of f(theta, phi) conj(g)(theta, phi) over the sphere:
    /// Gauss-Legendre in mu = cos theta, uniform trapezoid in phi (exact for
    /// trigonometric polynomials below the grid's Nyquist order).
    fn inner_product(
        f: impl Fn(f64, f64) -> Complex64,
        g: impl Fn(f64, f64) -> Complex64,
    ) -> Complex64 {
        let rule = gauss_legendre(32);
        let n_phi = 32;
        let dphi = 2.0 * PI / n_phi as f64;
        let mut sum = Complex64::new(0.0, 0.0);
        for &(mu, w) in &rule {
            let theta = mu.acos();
            for i in 0..n_phi {
                let phi = i as f64 * dphi;
                sum += w * dphi * f(theta, phi) * g(theta, phi).conj();
            }
        }
        sum
    }

    #[test]
    fn orthonormality_up_to_degree_six() {
        for l in 0..=6u32 {
            for m in -(l as i32)..=(l as i32) {
                for lp in 0..=6u32 {
                    for mp in -(lp as i32)..=(lp as i32) {
                        let ip = inner_product(
                            |t, p| sph_harm(l, m, t, p).unwrap(),
                            |t, p| sph_harm(lp, mp, t, p).unwrap(),
                        );
                        let expected = if l == lp && m == mp { 1.0 } else { 0.0 };
                        assert_abs_diff_eq!(ip.re, expected, epsilon = 1e-8);
                        assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-8);
                    }
                }
            }
        }
    }

    #[test]
    fn real_and_imaginary_parts_have_half_norm() {
        for l in 1..=6u32 {
            for m in 1..=l {
                let re_sq = inner_product(
                    |t, p| Complex64::new(sph_harm(l, m as i32, t, p).unwrap().re, 0.0),
                    |t, p| Complex64::new(sph_harm(l, m as i32, t, p).unwrap().re, 0.0),
                );
                let im_sq = inner_product(
                    |t, p| Complex64::new(sph_harm(l, m as i32, t, p).unwrap().im, 0.0),
                    |t, p| Complex64::new(sph_harm(l, m as i32, t, p).unwrap().im, 0.0),
                );
                assert_abs_diff_eq!(re_sq.re, 0.5, epsilon = 1e-8);
                assert_abs_diff_eq!(im_sq.re, 0.5, epsilon = 1e-8);
            }
        }
    }

    fn random_field(kappa: u32, rng: &mut impl Rng) -> CoefficientField {
        let mut f = CoefficientField::zeros(kappa);
        for v in f.as_mut_slice() {
            *v = rng.gen_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn evaluate_zero_field_and_constant_mode() {
        let gridifier = |n: usize| -> Vec<(f64, f64)> {
            (0..n)
                .map(|i| {
                    let t = PI * (i as f64 + 0.5) / n as f64;
                    let p = 2.0 * PI * (i as f64) / n as f64;
                    (t, p)
                })
                .collect()
        };
        let grid = gridifier(17);
        let zero = CoefficientField::zeros(3);
        assert!(zero.evaluate(&grid).unwrap().iter().all(|&v| v == 0.0));

        let mut constant = CoefficientField::zeros(2);
        constant.set_m0(0, (4.0 * PI).sqrt());
        for v in constant.evaluate(&grid).unwrap() {
            assert_relative_eq!(v, 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn evaluate_matches_complex_expansion() {
        let mut rng = crate::rng::stream_rng(42, &[1]);
        let field = random_field(3, &mut rng);
        let mut grid = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                grid.push((PI * (i as f64 + 0.5) / 8.0, 2.0 * PI * j as f64 / 8.0));
            }
        }
        let via_real = field.evaluate(&grid).unwrap();
        // complex oracle: sum over all (l, m) of x_{l,m} Y_{l,m} with
        // x_{l,-m} = (-1)^m conj(x_{l,m})
        for (idx, &(theta, phi)) in grid.iter().enumerate() {
            let mut sum = Complex64::new(0.0, 0.0);
            for l in 0..=3u32 {
                sum += field.get_m0(l) * sph_harm(l, 0, theta, phi).unwrap();
                for m in 1..=l {
                    let x = Complex64::new(field.get_re(l, m), field.get_im(l, m));
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    sum += x * sph_harm(l, m as i32, theta, phi).unwrap();
                    sum += sign * x.conj() * sph_harm(l, -(m as i32), theta, phi).unwrap();
                }
            }
            assert_abs_diff_eq!(via_real[idx], sum.re, epsilon = 1e-12);
            assert_abs_diff_eq!(sum.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn l2_norm_matches_parseval_of_complex_side() {
        let mut rng = crate::rng::stream_rng(7, &[2]);
        let field = random_field(4, &mut rng);
        let mut parseval = 0.0;
        for l in 0..=4u32 {
            parseval += field.get_m0(l) * field.get_m0(l);
            for m in 1..=l {
                let sq = field.get_re(l, m).powi(2) + field.get_im(l, m).powi(2);
                parseval += 2.0 * sq;
            }
        }
        assert_relative_eq!(field.l2_norm_sq(), parseval, max_relative = 1e-14);
    }

    #[test]
    fn l2_norm_matches_quadrature_of_field() {
        let mut rng = crate::rng::stream_rng(3, &[5]);
        let field = random_field(4, &mut rng);
        let rule = gauss_legendre(24);
        let n_phi = 32;
        let dphi = 2.0 * PI / n_phi as f64;
        let mut grid = Vec::new();
        let mut weights = Vec::new();
        for &(mu, w) in &rule {
            for i in 0..n_phi {
                grid.push((mu.acos(), i as f64 * dphi));
                weights.push(w * dphi);
            }
        }
        let values = field.evaluate(&grid).unwrap();
        let quad: f64 = values.iter().zip(&weights).map(|(v, w)| w * v * v).sum();
        assert_relative_eq!(field.l2_norm_sq(), quad, max_relative = 1e-9);
    }

    #[test]
    fn sobolev_norm_single_mode() {
        for l in 0..=5u32 {
            let field = CoefficientField::single_mode(5, l, 1.0).unwrap();
            let lam = degree_rate(l);
            for &s in &[-1.0, 0.0, 0.5, 2.0] {
                assert_relative_eq!(
                    field.sobolev_norm_sq(s),
                    (1.0 + lam).powf(s),
                    max_relative = 1e-14
                );
            }
        }
        assert_eq!(CoefficientField::zeros(4).l2_norm_sq(), 0.0);
        assert_eq!(CoefficientField::zeros(4).sobolev_norm_sq(1.5), 0.0);
    }

    #[test]
    fn laplace_beltrami_eigenrelation_by_finite_differences() {
        // second-order central differences in theta and phi away from poles
        let d = 1e-4;
        for l in 1..=4u32 {
            for m in 0..=l as i32 {
                for &(theta, phi) in &[(1.0, 1.0), (1.6, 3.0), (2.2, 5.0)] {
                    let y = |t: f64, p: f64| sph_harm(l, m, t, p).unwrap().re;
                    let f0 = y(theta, phi);
                    let d_tt = (y(theta + d, phi) - 2.0 * f0 + y(theta - d, phi)) / (d * d);
                    let d_t = (y(theta + d, phi) - y(theta - d, phi)) / (2.0 * d);
                    let d_pp = (y(theta, phi + d) - 2.0 * f0 + y(theta, phi - d)) / (d * d);
                    let lap = d_tt + d_t / theta.tan() + d_pp / theta.sin().powi(2);
                    let expected = -degree_rate(l) * f0;
                    // O(d^2) truncation error with fourth-derivative scale l^4
                    let tol = 1e-5 * (1.0 + degree_rate(l).powi(2));
                    assert_abs_diff_eq!(lap, expected, epsilon = tol);
                }
            }
        }
    }

    #[test]
    fn mode_index_contract() {
        assert!(ModeIndex::new(3, 4).is_err());
        assert!(ModeIndex::new(3, -4).is_err());
        let m = ModeIndex::new(3, -2).unwrap();
        assert_eq!(m.eigenvalue(), -12.0);
        assert_eq!(ModeIndex::new(0, 0).unwrap().eigenvalue(), 0.0);
        assert_eq!(m.rate(), 12.0);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let rule = gauss_legendre(8);
        let sum_w: f64 = rule.iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(sum_w, 2.0, max_relative = 1e-14);
        let int_x14: f64 = rule.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(int_x14, 2.0 / 15.0, max_relative = 1e-12);
    }

    proptest! {
        #[test]
        fn evaluate_is_linear_in_coefficients(
            seed_f in 0u64..1000,
            seed_g in 1000u64..2000,
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let mut rf = crate::rng::stream_rng(seed_f, &[9]);
            let mut rg = crate::rng::stream_rng(seed_g, &[9]);
            let f = random_field(2, &mut rf);
            let g = random_field(2, &mut rg);
            let mut combo = CoefficientField::zeros(2);
            for (o, (x, y)) in combo
                .as_mut_slice()
                .iter_mut()
                .zip(f.as_slice().iter().zip(g.as_slice()))
            {
                *o = a * x + b * y;
            }
            let grid = [(0.8f64, 0.4f64), (1.7, 2.2), (2.9, 5.5)];
            let vf = f.evaluate(&grid).unwrap();
            let vg = g.evaluate(&grid).unwrap();
            let vc = combo.evaluate(&grid).unwrap();
            for i in 0..grid.len() {
                prop_assert!((vc[i] - (a * vf[i] + b * vg[i])).abs() < 1e-10);
            }
        }
    }
}
