//! Numerical oracles for the exponential-approximation and regularity
//! inequalities behind the convergence proofs.
//!
//! Each inequality pairs an exactly computable gap with an envelope
//! `C_mu * (power of lambda, h, k)`. The constants are never derived
//! symbolically; instead [`bound_ratio_sweep`] certifies them empirically:
//! it takes the supremum of `gap / envelope` over a grid in `x = lambda h`
//! and `k`, and the test fixtures assert the supremum stays put as the grid
//! refines toward the singular corners.
//!
//! Every ratio here depends on `(lambda, h)` only through `x = lambda h`
//! (gap and envelope rescale by the same power under
//! `(lambda, h) -> (c lambda, h / c)`), so grids are one-dimensional in `x`
//! with a separate `k` axis.

use crate::analysis::KahanSum;
use crate::solver_em::Scheme;
use crate::{Error, Result};

/// `|e^{-lambda h} - xi(lambda h)|`: the one-step gap between the heat
/// factor and its Euler approximation.
///
/// Evaluated through `expm1` so the `O(x^2)` gap survives cancellation as
/// `x -> 0`; a naive difference of the two factors drowns in the ulp of 1
/// below `x ~ 1e-8`.
pub fn exp_approx_gap(scheme: Scheme, lambda: f64, h: f64) -> f64 {
    let x = lambda * h;
    match scheme {
        Scheme::Forward => ((-x).exp_m1() + x).abs(),
        Scheme::Backward => ((-x).exp_m1() + x / (1.0 + x)).abs(),
    }
}

/// `|e^{-lambda h k} - xi(lambda h)^k|`: the `k`-step gap, with the same
/// cancellation-safe evaluation through `e^{-xk} |expm1(k d)|` where
/// `d = ln xi + x`.
pub fn exp_power_gap(scheme: Scheme, lambda: f64, h: f64, k: u64) -> f64 {
    let x = lambda * h;
    let kf = k as f64;
    match scheme {
        Scheme::Forward => {
            if x < 0.5 {
                let d = (-x).ln_1p() + x;
                ((-x * kf).exp() * (kf * d).exp_m1()).abs()
            } else {
                // away from xi = 1 the direct difference is well conditioned
                ((-x * kf).exp() - (1.0 - x).powi(k as i32)).abs()
            }
        }
        Scheme::Backward => {
            let d = x - x.ln_1p();
            if kf * d > 700.0 {
                ((-kf * x.ln_1p()).exp() - (-x * kf).exp()).abs()
            } else {
                ((-x * kf).exp() * (kf * d).exp_m1()).abs()
            }
        }
    }
}

/// Which of the four regularity sums.
///
/// Variants `a`/`b` are the squared-difference sums with the exponential
/// anchored at the left/right subinterval endpoint; `c`/`d` are the
/// unsquared differences of `e^{-2 lambda (.)}` anchored likewise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegularityVariant {
    SquaredLeft,
    SquaredRight,
    PlainLeft,
    PlainRight,
}

impl RegularityVariant {
    pub fn name(self) -> &'static str {
        match self {
            RegularityVariant::SquaredLeft => "a",
            RegularityVariant::SquaredRight => "b",
            RegularityVariant::PlainLeft => "c",
            RegularityVariant::PlainRight => "d",
        }
    }
}

/// Exact value of the regularity sum over `j = 1..k` with step `h` and
/// decay `lambda`; each inner integral in closed form.
///
/// Writing `tau_j = t_k - t_j`, `I1 = (1 - e^{-lambda h}) / lambda`,
/// `I2 = (1 - e^{-2 lambda h}) / (2 lambda)`, the summands are
///
/// ```text
/// a: e^{-2 lambda tau_j} [ I2 - 2 e^{-lambda h} I1 + e^{-2 lambda h} h ]
/// b: e^{-2 lambda tau_j} [ I2 - 2 I1 + h ]
/// c: e^{-2 lambda tau_j} [ I2 - e^{-2 lambda h} h ]
/// d: e^{-2 lambda tau_j} [ I2 - h ]
/// ```
///
/// so the sum collapses against the geometric factor
/// `sum_{j} e^{-2 lambda tau_j}` exactly.
pub fn regularity_sum(lambda: f64, h: f64, k: u64, variant: RegularityVariant) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let x = lambda * h;
    let e1 = (-x).exp();
    let e2 = (-2.0 * x).exp();
    let i1 = -(-x).exp_m1() / lambda;
    let i2 = -(-2.0 * x).exp_m1() / (2.0 * lambda);
    let bracket = match variant {
        RegularityVariant::SquaredLeft => i2 - 2.0 * e1 * i1 + e2 * h,
        RegularityVariant::SquaredRight => i2 - 2.0 * i1 + h,
        RegularityVariant::PlainLeft => i2 - e2 * h,
        RegularityVariant::PlainRight => i2 - h,
    };
    // sum_{j=1..k} e^{-2 lambda (k - j) h} = (1 - e^{-2 lambda h k}) / (1 - e^{-2 lambda h})
    let geometric = -(-2.0 * x * k as f64).exp_m1() / -(-2.0 * x).exp_m1();
    match variant {
        RegularityVariant::SquaredLeft | RegularityVariant::SquaredRight => bracket * geometric,
        RegularityVariant::PlainLeft | RegularityVariant::PlainRight => (bracket * geometric).abs(),
    }
}

/// Geometric sweep grid in `x = lambda h`, crossed with dyadic step counts.
/// [`Self::refined`] inserts log-midpoints, so successive grids nest.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub lambda_h: Vec<f64>,
    pub steps: Vec<u64>,
}

impl SweepGrid {
    /// `points` log-uniform `x` values on `[x_min, x_max]` and step counts
    /// `1, 2, 4, ..., 2^steps_max_log2`.
    pub fn geometric(x_min: f64, x_max: f64, points: usize, steps_max_log2: u32) -> Result<Self> {
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(Error::InvalidInput(format!(
                "need 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if points < 2 {
            return Err(Error::InvalidInput("need at least 2 grid points".into()));
        }
        let (la, lb) = (x_min.ln(), x_max.ln());
        let lambda_h = (0..points)
            .map(|i| (la + (lb - la) * i as f64 / (points - 1) as f64).exp())
            .collect();
        let steps = (0..=steps_max_log2).map(|j| 1u64 << j).collect();
        Ok(Self { lambda_h, steps })
    }

    /// Nested refinement: keeps every point and adds the log-midpoint
    /// between neighbors.
    pub fn refined(&self) -> Self {
        let mut lambda_h = Vec::with_capacity(2 * self.lambda_h.len() - 1);
        for w in self.lambda_h.windows(2) {
            lambda_h.push(w[0]);
            lambda_h.push((w[0].ln() / 2.0 + w[1].ln() / 2.0).exp());
        }
        lambda_h.push(*self.lambda_h.last().expect("nonempty grid"));
        Self {
            lambda_h,
            steps: self.steps.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_h.is_empty() || self.steps.is_empty()
    }
}

/// One evaluated grid point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub lambda_h: f64,
    pub steps: u64,
    pub gap: f64,
    pub envelope: f64,
    pub ratio: f64,
}

/// Result of a [`bound_ratio_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub max_ratio: f64,
    /// Index into `points` where the maximum is attained.
    pub argmax: usize,
}

/// Evaluates `gap / envelope` over the grid and returns all points plus the
/// supremum. Grid points are evaluated at `h = 1`, `lambda = x`; the ratios
/// are invariant under the `(lambda, h)` split (see module docs).
///
/// Points where both sides sit below `1e-300` count as ratio zero: down in
/// the subnormal range the quotient is quantization noise, not evidence. A
/// gap that survives while the envelope underflows is reported as an
/// infinite ratio (a genuine violation).
pub fn bound_ratio_sweep(
    gap: impl Fn(f64, f64, u64) -> f64,
    envelope: impl Fn(f64, f64, u64) -> f64,
    grid: &SweepGrid,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty sweep grid".into()));
    }
    const UNDERFLOW_FLOOR: f64 = 1e-300;
    let mut points = Vec::with_capacity(grid.lambda_h.len() * grid.steps.len());
    let mut max_ratio = f64::NEG_INFINITY;
    let mut argmax = 0;
    for &x in &grid.lambda_h {
        for &k in &grid.steps {
            let (lambda, h) = (x, 1.0);
            let g = gap(lambda, h, k);
            let e = envelope(lambda, h, k);
            let ratio = if e >= UNDERFLOW_FLOOR {
                g / e
            } else if g < UNDERFLOW_FLOOR {
                0.0
            } else {
                f64::INFINITY
            };
            if ratio > max_ratio {
                max_ratio = ratio;
                argmax = points.len();
            }
            points.push(SweepPoint {
                lambda_h: x,
                steps: k,
                gap: g,
                envelope: e,
                ratio,
            });
        }
    }
    Ok(SweepReport {
        points,
        max_ratio,
        argmax,
    })
}

/// The certified inequalities, named for sweep reports and CLI selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Proposition {
    /// `|e^{-x} - (1-x)| <= C x^{1+mu}`, `mu` in `(0, 1]`.
    ForwardExpApprox,
    /// `|e^{-x} - (1+x)^{-1}| <= C x^{1+mu}`, `mu` in `(-1, 1]`.
    BackwardExpApprox,
    /// `|e^{-xk} - (1-x)^k| <= C x^{1+mu} k e^{-x(k-1)}`, `x <= 1`.
    ForwardExpPower,
    /// `|e^{-xk} - (1+x)^{-k}| <= C x^{1+mu} k (1+x)^{-(k-1)}`, `x <= C_c`.
    ///
    /// The dominating factor is `(1+x)^{-(k-1)}`, not `e^{-x(k-1)}`: the
    /// geometric sum behind the bound runs over products of `e^{-x}` and
    /// `(1+x)^{-1}`, and the latter is the larger of the two, so the sum is
    /// controlled by its pure-`(1+x)` term. An `e^{-x(k-1)}` envelope is
    /// exceeded by factors growing like `(e^x/(1+x))^k` once `x k` is large.
    BackwardExpPower,
    /// Regularity sum `<= C lambda^{2mu-1} h^{2mu}` (squared variants) or
    /// `<= C lambda^{mu-1} h^mu` (plain variants), `x <= C_c`.
    Regularity(RegularityVariant),
}

impl Proposition {
    pub fn all() -> Vec<Proposition> {
        vec![
            Proposition::ForwardExpApprox,
            Proposition::BackwardExpApprox,
            Proposition::ForwardExpPower,
            Proposition::BackwardExpPower,
            Proposition::Regularity(RegularityVariant::SquaredLeft),
            Proposition::Regularity(RegularityVariant::SquaredRight),
            Proposition::Regularity(RegularityVariant::PlainLeft),
            Proposition::Regularity(RegularityVariant::PlainRight),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Proposition::ForwardExpApprox => "forward_exp",
            Proposition::BackwardExpApprox => "backward_exp",
            Proposition::ForwardExpPower => "forward_exp_power",
            Proposition::BackwardExpPower => "backward_exp_power",
            Proposition::Regularity(RegularityVariant::SquaredLeft) => "regularity_a",
            Proposition::Regularity(RegularityVariant::SquaredRight) => "regularity_b",
            Proposition::Regularity(RegularityVariant::PlainLeft) => "regularity_c",
            Proposition::Regularity(RegularityVariant::PlainRight) => "regularity_d",
        }
    }

    pub fn parse(name: &str) -> Result<Proposition> {
        Proposition::all()
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown proposition '{name}'")))
    }

    /// Upper end of the admissible `x = lambda h` range.
    pub fn lambda_h_max(&self) -> f64 {
        match self {
            Proposition::ForwardExpApprox | Proposition::ForwardExpPower => 1.0,
            _ => 2.0,
        }
    }

    /// Exponents `mu` this proposition is stated for; the test fixtures
    /// sweep exactly this set.
    pub fn mu_fixture(&self) -> Vec<f64> {
        match self {
            Proposition::BackwardExpApprox | Proposition::BackwardExpPower => {
                vec![-0.5, -0.25, 0.25, 0.5, 0.75, 1.0]
            }
            Proposition::Regularity(
                RegularityVariant::PlainLeft | RegularityVariant::PlainRight,
            ) => vec![0.0, 0.25, 0.5, 0.75, 1.0],
            _ => vec![0.25, 0.5, 0.75, 1.0],
        }
    }

    /// Whether the gap uses the step-count axis; the one-step propositions
    /// sweep only `k = 1`.
    pub fn uses_steps(&self) -> bool {
        !matches!(
            self,
            Proposition::ForwardExpApprox | Proposition::BackwardExpApprox
        )
    }

    pub fn gap(&self, lambda: f64, h: f64, k: u64) -> f64 {
        match self {
            Proposition::ForwardExpApprox => exp_approx_gap(Scheme::Forward, lambda, h),
            Proposition::BackwardExpApprox => exp_approx_gap(Scheme::Backward, lambda, h),
            Proposition::ForwardExpPower => exp_power_gap(Scheme::Forward, lambda, h, k),
            Proposition::BackwardExpPower => exp_power_gap(Scheme::Backward, lambda, h, k),
            Proposition::Regularity(v) => regularity_sum(lambda, h, k, *v),
        }
    }

    pub fn envelope(&self, lambda: f64, h: f64, k: u64, mu: f64) -> f64 {
        let x = lambda * h;
        match self {
            Proposition::ForwardExpApprox | Proposition::BackwardExpApprox => x.powf(1.0 + mu),
            Proposition::ForwardExpPower => {
                x.powf(1.0 + mu) * k as f64 * (-x * (k as f64 - 1.0)).exp()
            }
            Proposition::BackwardExpPower => {
                x.powf(1.0 + mu) * k as f64 * (1.0 + x).powi(-(k as i32 - 1))
            }
            Proposition::Regularity(
                RegularityVariant::SquaredLeft | RegularityVariant::SquaredRight,
            ) => lambda.powf(2.0 * mu - 1.0) * h.powf(2.0 * mu),
            Proposition::Regularity(
                RegularityVariant::PlainLeft | RegularityVariant::PlainRight,
            ) => lambda.powf(mu - 1.0) * h.powf(mu),
        }
    }

    /// Sweep of this proposition at one `mu` over the grid.
    pub fn sweep(&self, mu: f64, grid: &SweepGrid) -> Result<SweepReport> {
        let grid = if self.uses_steps() {
            grid.clone()
        } else {
            SweepGrid {
                lambda_h: grid.lambda_h.clone(),
                steps: vec![1],
            }
        };
        bound_ratio_sweep(
            |l, h, k| self.gap(l, h, k),
            |l, h, k| self.envelope(l, h, k, mu),
            &grid,
        )
    }
}

/// Literal per-`j` accumulation of the regularity sums; quadratic cross
/// check for the collapsed geometric form.
#[doc(hidden)]
pub fn regularity_sum_literal(lambda: f64, h: f64, k: u64, variant: RegularityVariant) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let x = lambda * h;
    let e1 = (-x).exp();
    let e2 = (-2.0 * x).exp();
    let i1 = -(-x).exp_m1() / lambda;
    let i2 = -(-2.0 * x).exp_m1() / (2.0 * lambda);
    let bracket = match variant {
        RegularityVariant::SquaredLeft => i2 - 2.0 * e1 * i1 + e2 * h,
        RegularityVariant::SquaredRight => i2 - 2.0 * i1 + h,
        RegularityVariant::PlainLeft => i2 - e2 * h,
        RegularityVariant::PlainRight => i2 - h,
    };
    let mut sum = KahanSum::default();
    let mut decay = 1.0; // e^{-2 lambda (t_k - t_j)} walking j = k..1
    for _ in 0..k {
        sum.add(bracket * decay);
        decay *= e2;
    }
    match variant {
        RegularityVariant::SquaredLeft | RegularityVariant::SquaredRight => sum.value(),
        _ => sum.value().abs(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn gap_values() {
        for scheme in [Scheme::Forward, Scheme::Backward] {
            assert_eq!(exp_approx_gap(scheme, 0.0, 0.5), 0.0);
            assert_eq!(exp_power_gap(scheme, 0.0, 0.5, 9), 0.0);
        }
        // forward at x = 1: |e^{-1} - 0|
        assert_relative_eq!(
            exp_approx_gap(Scheme::Forward, 2.0, 0.5),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        // backward at x = 1: 1/2 - e^{-1}
        assert_relative_eq!(
            exp_approx_gap(Scheme::Backward, 2.0, 0.5),
            0.5 - (-1.0f64).exp(),
            max_relative = 1e-14
        );
        // k = 1 reduces to the one-step gap
        assert_relative_eq!(
            exp_power_gap(Scheme::Forward, 3.0, 0.1, 1),
            exp_approx_gap(Scheme::Forward, 3.0, 0.1),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            exp_power_gap(Scheme::Backward, 3.0, 0.1, 1),
            exp_approx_gap(Scheme::Backward, 3.0, 0.1),
            max_relative = 1e-13
        );
        // forward, x = 0.5, k = 4
        assert_relative_eq!(
            exp_power_gap(Scheme::Forward, 5.0, 0.1, 4),
            ((-2.0f64).exp() - 0.0625).abs(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn sign_structure_and_domination() {
        // 1 - x <= e^{-x} <= (1 + x)^{-1} on a dense grid
        for i in 0..100_000 {
            let x = i as f64 * 2e-4;
            let e = (-x).exp();
            assert!(e - (1.0 - x) >= 0.0);
            assert!(1.0 / (1.0 + x) - e >= 0.0);
        }
    }

    #[test]
    fn regularity_sum_degenerate_and_quadrature() {
        for v in [
            RegularityVariant::SquaredLeft,
            RegularityVariant::SquaredRight,
            RegularityVariant::PlainLeft,
            RegularityVariant::PlainRight,
        ] {
            assert_eq!(regularity_sum(0.0, 0.25, 16, v), 0.0);
        }
        // k = 1, variant a against brute-force quadrature
        let (lambda, h) = (6.0, 0.125);
        let n = 100_000;
        let mut quad = 0.0;
        for p in 0..n {
            let s = (p as f64 + 0.5) / n as f64 * h;
            // t_1 = h, anchored at t_0 = 0: e^{-l (h - s)} - e^{-l h}
            let d = (-lambda * (h - s)).exp() - (-lambda * h).exp();
            quad += d * d;
        }
        quad *= h / n as f64;
        assert_relative_eq!(
            regularity_sum(lambda, h, 1, RegularityVariant::SquaredLeft),
            quad,
            max_relative = 1e-9
        );
        // variant c, k = 1: integral of e^{-2l(h-s)} - e^{-2lh}
        let mut quad_c = 0.0;
        for p in 0..n {
            let s = (p as f64 + 0.5) / n as f64 * h;
            quad_c += (-2.0 * lambda * (h - s)).exp() - (-2.0 * lambda * h).exp();
        }
        quad_c = (quad_c * h / n as f64).abs();
        assert_relative_eq!(
            regularity_sum(lambda, h, 1, RegularityVariant::PlainLeft),
            quad_c,
            max_relative = 1e-9
        );
    }

    #[test]
    fn collapsed_sum_matches_literal_loop() {
        for v in [
            RegularityVariant::SquaredLeft,
            RegularityVariant::SquaredRight,
            RegularityVariant::PlainLeft,
            RegularityVariant::PlainRight,
        ] {
            for &x in &[1e-6, 1e-3, 0.1, 1.0, 2.0] {
                for &k in &[1u64, 2, 64, 1024] {
                    let (lambda, h) = (x, 1.0);
                    let a = regularity_sum(lambda, h, k, v);
                    let b = regularity_sum_literal(lambda, h, k, v);
                    assert_abs_diff_eq!(a, b, epsilon = 1e-13 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn ratios_are_invariant_under_lambda_h_split() {
        for p in Proposition::all() {
            for &mu in &[0.25, 0.75, 1.0] {
                let (x, k) = (0.35, 16u64);
                let r1 = p.gap(x, 1.0, k) / p.envelope(x, 1.0, k, mu);
                let r2 = p.gap(2.0 * x, 0.5, k) / p.envelope(2.0 * x, 0.5, k, mu);
                let r3 = p.gap(x / 8.0, 8.0, k) / p.envelope(x / 8.0, 8.0, k, mu);
                assert_relative_eq!(r1, r2, max_relative = 1e-12);
                assert_relative_eq!(r1, r3, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn sweep_finds_taylor_constants() {
        // gap == envelope gives ratio 1
        let grid = SweepGrid::geometric(1e-6, 1.0, 64, 0).unwrap();
        let unit = bound_ratio_sweep(|l, h, _| l * h, |l, h, _| l * h, &grid).unwrap();
        assert_relative_eq!(unit.max_ratio, 1.0, max_relative = 1e-14);

        // sup |e^{-x} - 1 + x| / x^2 on (0, 1] is 1/2
        let dense = SweepGrid::geometric(1e-6, 1.0, 4096, 0).unwrap();
        let fwd = Proposition::ForwardExpApprox.sweep(1.0, &dense).unwrap();
        assert!(fwd.max_ratio <= 0.5 + 1e-9, "got {}", fwd.max_ratio);
        assert!(fwd.max_ratio > 0.45);

        // backward analog is scan-certified below 1 (and in fact ~1/2)
        let dense2 = SweepGrid::geometric(1e-6, 2.0, 4096, 0).unwrap();
        let bwd = Proposition::BackwardExpApprox.sweep(1.0, &dense2).unwrap();
        assert!(bwd.max_ratio <= 1.0, "got {}", bwd.max_ratio);
    }

    #[test]
    fn sweep_rejects_empty_grid() {
        let grid = SweepGrid {
            lambda_h: vec![],
            steps: vec![1],
        };
        assert!(bound_ratio_sweep(|_, _, _| 0.0, |_, _, _| 1.0, &grid).is_err());
        assert!(SweepGrid::geometric(1.0, 0.5, 8, 2).is_err());
        assert!(SweepGrid::geometric(1e-3, 1.0, 1, 2).is_err());
    }

    #[test]
    fn refinement_nests_and_keeps_suprema_stable() {
        let g1 = SweepGrid::geometric(1e-8, 1.0, 65, 14).unwrap();
        let g2 = g1.refined();
        let g3 = g2.refined();
        for x in &g1.lambda_h {
            assert!(g2.lambda_h.iter().any(|y| y == x));
        }
        assert_eq!(g2.lambda_h.len(), 2 * g1.lambda_h.len() - 1);
        let p = Proposition::ForwardExpPower;
        let r1 = p.sweep(0.5, &g1).unwrap().max_ratio;
        let r2 = p.sweep(0.5, &g2).unwrap().max_ratio;
        let r3 = p.sweep(0.5, &g3).unwrap().max_ratio;
        assert!(r2 >= r1 && r3 >= r2); // nested grids can only grow the sup
        assert!(r2 / r1 < 1.05 && r3 / r2 < 1.05);
    }

    #[test]
    fn proposition_names_round_trip() {
        for p in Proposition::all() {
            assert_eq!(Proposition::parse(p.name()).unwrap(), p);
        }
        assert!(Proposition::parse("nope").is_err());
    }
}
