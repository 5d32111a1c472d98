//! Residual checks of the evolution equations satisfied by subordinated
//! densities, in one space dimension.
//!
//! Every field is an exactly smooth function of (t, x) (fixed subordination
//! rule), derivatives are centred finite differences of fourth-order
//! accuracy, and each case reports its residual at two step sizes so the
//! observed convergence can be judged.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::density::{
    caputo_half_of, check_weighted_convergence, fractional_laplacian, gaussian_x_derivative, GaussianKernel,
    SubordinatedLaw,
};
use crate::error::{invalid, Error, Result};
use crate::stable::StableSpec;

/// Finite-difference weights for the `order`-th derivative at 0 on the
/// given offsets (Fornberg's recursion).
pub fn fd_weights(order: usize, offsets: &[f64]) -> Result<Vec<f64>> {
    let n = offsets.len();
    if order >= n {
        return Err(invalid("offsets", format!("{n} points cannot resolve derivative order {order}")));
    }
    let mut c = vec![vec![0.0; order + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..n {
        let top = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=top).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=top).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    Ok(c.into_iter().map(|row| row[order]).collect())
}

/// Centred stencil with fourth-order accuracy: 5 points for orders 1-2,
/// 7 for 3-4, 9 for 5-6.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    order: usize,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl Stencil {
    pub fn central(order: usize) -> Self {
        assert!(order >= 1, "derivative order starts at 1");
        let half = (order as i64 + 1) / 2 + 1;
        let offsets: Vec<f64> = (-half..=half).map(|k| k as f64).collect();
        let weights = fd_weights(order, &offsets).expect("stencil is wide enough");
        Self { order, offsets, weights }
    }

    /// Half-width in steps.
    pub fn reach(&self) -> f64 {
        self.offsets[self.offsets.len() - 1]
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64, at: f64, step: f64) -> f64 {
        let sum: f64 =
            self.offsets.iter().zip(&self.weights).filter(|(_, w)| **w != 0.0).map(|(o, w)| w * f(at + o * step)).sum();
        sum / step.powi(self.order as i32)
    }
}

/// n-th derivative of `f` at `at` by the centred fourth-order stencil.
pub fn derivative(order: usize, f: impl Fn(f64) -> f64, at: f64, step: f64) -> f64 {
    Stencil::central(order).apply(f, at, step)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum PdeCase {
    /// ∂u/∂t = ½u″ for u = E φ(x + W(t)).
    Heat,
    /// ∂u/∂t = −2^{−β/2}(−Δ)^{β/2}u, W run by a subordinator of index β/2.
    SymmetricStable,
    /// ∂u/∂t = φ″/√(8πt) + u⁗/8 (H = ½, Brownian Y).
    DeBlassie,
    /// Caputo ∂^{1/2}u = 2^{−3/2}u″ (H = ½, Brownian Y).
    FractionalCauchy,
    /// ∂²u/∂t² = −φ″/(πt) − ¼u⁗ (H = ½, Cauchy Y).
    CauchyIterated,
    /// t∂q/∂t = −(H/2)∂(xq)/∂x (Brownian Y).
    FirstOrder,
    /// ∂²q/∂t² = −H(2H−1)(G_{2H−2}q)″ − H²(G_{4H−2}q)⁗ for x ≠ 0 (Cauchy Y).
    WeightedCauchy,
    /// ∂⁴q/∂t⁴ = −H(V_{2H−1}q)″ (subordinator of index ¼).
    WeightedSubordinator,
    /// ∂⁴q/∂t⁴ = −½q″ (H = ½, subordinator of index ¼).
    StableOneM,
    /// ∂⁴q/∂t⁴ = 2^{−k}(−1)^k ∂^{2k}q (H = ½, subordinator of index k/4).
    StableKM,
}

impl PdeCase {
    pub const ALL: [PdeCase; 10] = [
        PdeCase::Heat,
        PdeCase::SymmetricStable,
        PdeCase::DeBlassie,
        PdeCase::FractionalCauchy,
        PdeCase::CauchyIterated,
        PdeCase::FirstOrder,
        PdeCase::WeightedCauchy,
        PdeCase::WeightedSubordinator,
        PdeCase::StableOneM,
        PdeCase::StableKM,
    ];

    pub fn id(self) -> char {
        (b'a' + Self::ALL.iter().position(|&c| c == self).unwrap() as u8) as char
    }

    pub fn name(self) -> &'static str {
        match self {
            PdeCase::Heat => "heat",
            PdeCase::SymmetricStable => "symmetric-stable",
            PdeCase::DeBlassie => "deblassie",
            PdeCase::FractionalCauchy => "frac-cauchy",
            PdeCase::CauchyIterated => "cauchy-iterated",
            PdeCase::FirstOrder => "first-order",
            PdeCase::WeightedCauchy => "weighted-cauchy",
            PdeCase::WeightedSubordinator => "weighted-subordinator",
            PdeCase::StableOneM => "stable-1m",
            PdeCase::StableKM => "stable-km",
        }
    }

    /// Fourth t-derivatives get the looser tolerance.
    pub fn tolerance(self) -> f64 {
        match self {
            PdeCase::WeightedSubordinator | PdeCase::StableKM => 1e-2,
            _ => 1e-3,
        }
    }
}

impl fmt::Display for PdeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id())
    }
}

impl FromStr for PdeCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| s.len() == 1 && s.starts_with(c.id()) || s == c.name())
            .ok_or_else(|| invalid("case", format!("unknown PDE case {s:?}; use a-j or a case name")))
    }
}

/// Evenly spaced reporting points, with |x| < min_abs removed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    pub min_abs: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Self {
        Self { lo, hi, points, min_abs: 0.0 }
    }

    pub fn excluding(self, min_abs: f64) -> Self {
        Self { min_abs, ..self }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lo + i as f64 * step).filter(|x| x.abs() >= self.min_abs).collect()
    }
}

/// A residual check: case, parameters, reporting box and the coarse steps.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PdeProblem {
    pub case: PdeCase,
    pub hurst: f64,
    /// Order of the fractional Laplacian (symmetric-stable case).
    pub beta: f64,
    /// Space order k of the stable-km family (time order is 4).
    pub k: u32,
    pub t_axis: Axis,
    pub x_axis: Axis,
    pub t_step: f64,
    pub x_step: f64,
    /// Caputo grid size on [0, t] at the coarse level.
    pub caputo_points: usize,
    /// Spectral grid for the fractional Laplacian.
    pub fft_spacing: f64,
    pub fft_half_width: f64,
}

impl PdeProblem {
    /// Default parameters and steps, chosen by a refinement study so the
    /// finite-difference error dominates rounding at both levels.
    pub fn new(case: PdeCase) -> Self {
        let base = Self {
            case,
            hurst: 0.5,
            beta: 1.5,
            k: 1,
            t_axis: Axis::new(0.5, 2.0, 4),
            x_axis: Axis::new(-3.0, 3.0, 7),
            t_step: 0.1,
            x_step: 0.1,
            caputo_points: 512,
            fft_spacing: 0.25,
            fft_half_width: 3000.0,
        };
        let cusp = Axis::new(-3.0, 3.0, 13).excluding(0.5);
        match case {
            PdeCase::FirstOrder => Self { x_axis: cusp, t_step: 0.05, x_step: 0.05, ..base },
            PdeCase::WeightedCauchy => Self { hurst: 0.75, x_axis: cusp, x_step: 0.025, ..base },
            PdeCase::WeightedSubordinator => Self { hurst: 0.7, x_axis: cusp, t_step: 0.05, x_step: 0.05, ..base },
            PdeCase::StableOneM | PdeCase::StableKM => Self { x_axis: cusp, t_step: 0.05, x_step: 0.05, ..base },
            _ => base,
        }
    }

    pub fn with_hurst(self, hurst: f64) -> Self {
        Self { hurst, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_k(self, k: u32) -> Self {
        Self { k, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let fixed_half = matches!(
            self.case,
            PdeCase::Heat
                | PdeCase::SymmetricStable
                | PdeCase::DeBlassie
                | PdeCase::FractionalCauchy
                | PdeCase::CauchyIterated
                | PdeCase::StableOneM
                | PdeCase::StableKM
        );
        if fixed_half && self.hurst != 0.5 {
            return Err(invalid("H", format!("case {} holds for H = 1/2 only", self.case)));
        }
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(invalid("H", "must lie in (0, 1)"));
        }
        if self.case == PdeCase::SymmetricStable && !(self.beta > 0.0 && self.beta <= 2.0) {
            return Err(invalid("beta", "must lie in (0, 2]"));
        }
        if self.case == PdeCase::StableKM && !(1..=3).contains(&self.k) {
            return Err(invalid("k", "index k/4 must lie in (0, 1), so k is 1, 2 or 3"));
        }
        if !(self.t_step > 0.0 && self.x_step > 0.0) {
            return Err(invalid("step", "steps must be positive"));
        }
        let t = self.t_axis.values();
        let reach = Stencil::central(4).reach();
        if t.is_empty() || t.iter().any(|&t| t - reach * self.t_step <= 0.0) {
            return Err(invalid("t_axis", "stencils must stay at positive times"));
        }
        let x = self.x_axis.values();
        if x.is_empty() {
            return Err(invalid("x_axis", "no reporting points"));
        }
        let needs_gap = matches!(
            self.case,
            PdeCase::FirstOrder
                | PdeCase::WeightedCauchy
                | PdeCase::WeightedSubordinator
                | PdeCase::StableOneM
                | PdeCase::StableKM
        );
        if needs_gap && x.iter().any(|&x| x.abs() <= Stencil::central(6).reach() * self.x_step) {
            return Err(invalid("x_axis", "stencils must not cross the cusp at x = 0"));
        }
        if self.case == PdeCase::FractionalCauchy && self.caputo_points < 512 {
            return Err(invalid("caputo_points", "needs at least 512 points"));
        }
        Ok(())
    }

    pub fn params(&self) -> BTreeMap<&'static str, f64> {
        let mut p = BTreeMap::new();
        p.insert("H", self.hurst);
        match self.case {
            PdeCase::Heat => {}
            PdeCase::SymmetricStable => {
                p.insert("beta", self.beta);
            }
            PdeCase::DeBlassie | PdeCase::FractionalCauchy | PdeCase::FirstOrder => {
                p.insert("alpha", 2.0);
            }
            PdeCase::CauchyIterated | PdeCase::WeightedCauchy => {
                p.insert("alpha", 1.0);
            }
            PdeCase::WeightedSubordinator | PdeCase::StableOneM => {
                p.insert("alpha", 0.25);
            }
            PdeCase::StableKM => {
                p.insert("alpha", self.k as f64 / 4.0);
                p.insert("k", self.k as f64);
                p.insert("m", 2.0);
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The residual did not drop by the required factor under step halving.
    Inconclusive,
}

/// Residuals under halving must drop at least this much (order ≥ 2 evidence
/// would give 4; fourth-order stencils give up to 16).
pub const MIN_REFINEMENT_RATIO: f64 = 3.0;

#[derive(Clone, Debug, Serialize)]
pub struct GridReport {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub t_step: f64,
    pub x_step: f64,
    pub caputo_points: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PdeReport {
    pub case_id: String,
    pub case_name: &'static str,
    pub params: BTreeMap<&'static str, f64>,
    pub grid: GridReport,
    /// max |L − R| / (|L| + |R| + 1e−10) at the halved steps.
    pub residual: f64,
    pub residual_coarse: f64,
    pub refinement_ratio: f64,
    pub tolerance: f64,
    pub status: CheckStatus,
}

const FLOOR: f64 = 1e-10;

fn relative(l: f64, r: f64) -> f64 {
    (l - r).abs() / (l.abs() + r.abs() + FLOOR)
}

fn status(residual: f64, ratio: f64, tolerance: f64) -> CheckStatus {
    if !(ratio >= MIN_REFINEMENT_RATIO) {
        CheckStatus::Inconclusive
    } else if residual < tolerance {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn normal_density(var: f64, x: f64) -> f64 {
    gaussian_x_derivative(0, var, x)
}

/// Prepared fields for one problem.
struct Setup<'a> {
    problem: &'a PdeProblem,
    law: Option<SubordinatedLaw>,
    /// Spectral right-hand side per reporting time (symmetric-stable case).
    spectral: Vec<Vec<f64>>,
}

impl<'a> Setup<'a> {
    fn new(problem: &'a PdeProblem) -> Result<Self> {
        let h = problem.hurst;
        let smoothed = || GaussianKernel::smoothed(0.5, 1.0);
        let law = match problem.case {
            PdeCase::Heat => None,
            PdeCase::SymmetricStable if problem.beta == 2.0 => None,
            PdeCase::SymmetricStable => {
                Some(SubordinatedLaw::new(smoothed()?, StableSpec::subordinator(problem.beta / 2.0, 1.0)?)?)
            }
            PdeCase::DeBlassie | PdeCase::FractionalCauchy => {
                Some(SubordinatedLaw::new(smoothed()?, StableSpec::symmetric(2.0, 0.5)?)?)
            }
            PdeCase::CauchyIterated => Some(SubordinatedLaw::new(smoothed()?, StableSpec::symmetric(1.0, 1.0)?)?),
            PdeCase::FirstOrder => {
                Some(SubordinatedLaw::new(GaussianKernel::fbm(h)?, StableSpec::symmetric(2.0, 0.5)?)?)
            }
            PdeCase::WeightedCauchy => {
                Some(SubordinatedLaw::new(GaussianKernel::fbm(h)?, StableSpec::symmetric(1.0, 1.0)?)?)
            }
            PdeCase::WeightedSubordinator | PdeCase::StableOneM => {
                Some(SubordinatedLaw::new(GaussianKernel::fbm(h)?, StableSpec::subordinator(0.25, 1.0)?)?)
            }
            PdeCase::StableKM => Some(SubordinatedLaw::new(
                GaussianKernel::fbm(h)?,
                StableSpec::subordinator(problem.k as f64 / 4.0, 1.0)?,
            )?),
        };
        if let Some(sl) = &law {
            let x_min = problem.x_axis.values().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
            let probe = if x_min > 0.0 { 0.5 * x_min } else { 1.0 };
            let weights: &[f64] = match problem.case {
                PdeCase::WeightedCauchy => &[2.0 * h - 2.0, 4.0 * h - 2.0],
                PdeCase::WeightedSubordinator => &[2.0 * h - 1.0],
                _ => &[],
            };
            for &g in weights {
                check_weighted_convergence(g, h, sl.rule.law(), probe)?;
            }
        }
        let mut setup = Self { problem, law, spectral: Vec::new() };
        if problem.case == PdeCase::SymmetricStable {
            setup.spectral = setup.spectral_rhs()?;
        }
        Ok(setup)
    }

    /// The field the equation is stated for.
    fn field(&self, t: f64, x: f64) -> f64 {
        match &self.law {
            None => normal_density(1.0 + t, x),
            Some(sl) => sl.density(t, x),
        }
    }

    fn weighted(&self, gamma: f64, t: f64, x: f64) -> f64 {
        let sl = self.law.as_ref().expect("weighted cases carry a law");
        let k = sl.kernel;
        sl.rule.expect(t, |s| s.powf(gamma) * k.value(s, x))
    }

    fn spectral_rhs(&self) -> Result<Vec<Vec<f64>>> {
        let p = self.problem;
        let n = (2.0 * p.fft_half_width / p.fft_spacing).round() as usize;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * p.fft_spacing).collect();
        let coef = 2f64.powf(-p.beta / 2.0);
        p.t_axis
            .values()
            .into_iter()
            .map(|t| {
                let u: Vec<f64> = xs.par_iter().map(|&x| self.field(t, x)).collect();
                let lap = fractional_laplacian(&u, p.fft_spacing, p.beta)?;
                p.x_axis
                    .values()
                    .into_iter()
                    .map(|x| {
                        let pos = x / p.fft_spacing;
                        if (pos - pos.round()).abs() > 1e-9 {
                            return Err(invalid("x_axis", "reporting points must lie on the spectral grid"));
                        }
                        Ok(coef * lap[(pos.round() as i64 + (n / 2) as i64) as usize])
                    })
                    .collect()
            })
            .collect()
    }

    /// (left, right) sides of the equation at (t, x).
    fn sides(&self, ti: usize, t: f64, x: f64, ht: f64, hx: f64, caputo_points: usize) -> (f64, f64) {
        let p = self.problem;
        let h = p.hurst;
        let u_t = |order: usize| derivative(order, |s| self.field(s, x), t, ht);
        let u_x = |order: usize| derivative(order, |y| self.field(t, y), x, hx);
        let phi2 = (x * x - 1.0) * normal_density(1.0, x);
        match p.case {
            PdeCase::Heat => (u_t(1), 0.5 * u_x(2)),
            PdeCase::SymmetricStable => {
                let xi = p.x_axis.values().iter().position(|&y| y == x).unwrap();
                (u_t(1), self.spectral[ti][xi])
            }
            PdeCase::DeBlassie => (u_t(1), phi2 / (8.0 * PI * t).sqrt() + u_x(4) / 8.0),
            PdeCase::FractionalCauchy => {
                let lhs = caputo_half_of(|s| self.field(s, x), t, caputo_points, 3.0).unwrap_or(f64::NAN);
                (lhs, 2f64.powf(-1.5) * u_x(2))
            }
            PdeCase::CauchyIterated => (u_t(2), -phi2 / (PI * t) - 0.25 * u_x(4)),
            PdeCase::FirstOrder => (t * u_t(1), -0.5 * h * (self.field(t, x) + x * u_x(1))),
            PdeCase::WeightedCauchy => {
                let g1 = derivative(2, |y| self.weighted(2.0 * h - 2.0, t, y), x, hx);
                let g2 = derivative(4, |y| self.weighted(4.0 * h - 2.0, t, y), x, hx);
                (u_t(2), -h * (2.0 * h - 1.0) * g1 - h * h * g2)
            }
            PdeCase::WeightedSubordinator => {
                let v = derivative(2, |y| self.weighted(2.0 * h - 1.0, t, y), x, hx);
                (u_t(4), -h * v)
            }
            PdeCase::StableOneM => (u_t(4), -0.5 * u_x(2)),
            PdeCase::StableKM => {
                let k = p.k as i32;
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                (u_t(4), sign * 2f64.powi(-k) * u_x(2 * k as usize))
            }
        }
    }

    fn residual(&self, refine: u32) -> f64 {
        let p = self.problem;
        let scale = 0.5f64.powi(refine as i32);
        let caputo = p.caputo_points << refine;
        let ts = p.t_axis.values();
        let xs = p.x_axis.values();
        let points: Vec<(usize, f64, f64)> =
            ts.iter().enumerate().flat_map(|(i, &t)| xs.iter().map(move |&x| (i, t, x))).collect();
        points
            .par_iter()
            .map(|&(i, t, x)| {
                let (l, r) = self.sides(i, t, x, p.t_step * scale, p.x_step * scale, caputo);
                relative(l, r)
            })
            .reduce(|| 0.0, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
    }
}

/// Residual at the given steps and at half of them, with the verdict.
pub fn pde_residual(problem: &PdeProblem) -> Result<PdeReport> {
    problem.validate()?;
    let setup = Setup::new(problem)?;
    let coarse = setup.residual(0);
    let fine = setup.residual(1);
    if !(coarse.is_finite() && fine.is_finite()) {
        return Err(Error::Quadrature { achieved: f64::NAN, requested: problem.case.tolerance() });
    }
    let ratio = if fine > 0.0 { coarse / fine } else { f64::INFINITY };
    let tolerance = problem.case.tolerance();
    Ok(PdeReport {
        case_id: problem.case.id().to_string(),
        case_name: problem.case.name(),
        params: problem.params(),
        grid: GridReport {
            t: problem.t_axis.values(),
            x: problem.x_axis.values(),
            t_step: problem.t_step / 2.0,
            x_step: problem.x_step / 2.0,
            caputo_points: (problem.case == PdeCase::FractionalCauchy).then_some(2 * problem.caputo_points),
        },
        residual: fine,
        residual_coarse: coarse,
        refinement_ratio: ratio,
        tolerance,
        status: status(fine, ratio, tolerance),
    })
}

/// The field u(t, x) a case is stated for, on a grid (for dumps and for
/// cross-case consistency).
pub fn case_field(problem: &PdeProblem, t: f64, x: f64) -> Result<f64> {
    let mut p = problem.clone();
    if p.case == PdeCase::SymmetricStable {
        // The field itself needs no spectral grid.
        p.case = PdeCase::Heat;
        if problem.beta != 2.0 {
            let sl = SubordinatedLaw::new(
                GaussianKernel::smoothed(0.5, 1.0)?,
                StableSpec::subordinator(problem.beta / 2.0, 1.0)?,
            )?;
            return Ok(sl.density(t, x));
        }
    }
    Ok(Setup::new(&p)?.field(t, x))
}

/// Weak form of the iterated Cauchy equation at H = ½ including the point
/// term at the origin: against φ = N(0, w²),
/// ∂²_t⟨q, φ⟩ + ¼⟨q, φ⁗⟩ = −φ″(0)/(πt).
#[derive(Clone, Debug, Serialize)]
pub struct WeakFormReport {
    pub width: f64,
    pub t: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub residual: f64,
    pub residual_coarse: f64,
    pub refinement_ratio: f64,
}

pub fn weak_form_check(width: f64, t_axis: Axis, t_step: f64) -> Result<WeakFormReport> {
    if !(width > 0.0) {
        return Err(invalid("width", "must be positive"));
    }
    let var = width * width;
    let sl = SubordinatedLaw::new(GaussianKernel::smoothed(0.5, var)?, StableSpec::symmetric(1.0, 1.0)?)?;
    let pair = |t: f64| sl.density(t, 0.0);
    let fourth = |t: f64| sl.rule.expect(t, |s| gaussian_x_derivative(4, var + s, 0.0));
    let ts = t_axis.values();
    if ts.iter().any(|&t| t - 2.0 * t_step <= 0.0) {
        return Err(invalid("t_axis", "stencils must stay at positive times"));
    }
    let rhs: Vec<f64> = ts.iter().map(|&t| -gaussian_x_derivative(2, var, 0.0) / (PI * t)).collect();
    let side =
        |step: f64| -> Vec<f64> { ts.iter().map(|&t| derivative(2, pair, t, step) + 0.25 * fourth(t)).collect() };
    let worst = |lhs: &[f64]| lhs.iter().zip(&rhs).map(|(&l, &r)| relative(l, r)).fold(0.0, f64::max);
    let coarse = side(t_step);
    let lhs = side(t_step / 2.0);
    let (rc, rf) = (worst(&coarse), worst(&lhs));
    Ok(WeakFormReport { width, t: ts, lhs, rhs, residual: rf, residual_coarse: rc, refinement_ratio: rc / rf })
}

/// Building block: ∂⁴p_t/∂t⁴ = ∂p_t/∂s for the subordinator of index ¼
/// (unit Laplace exponent), by finite differences in both variables.
pub fn subordinator_identity_residual(t: f64, s_points: &[f64], t_step: f64, s_step: f64) -> Result<f64> {
    let law = StableSpec::subordinator(0.25, 1.0)?;
    let mut worst = 0.0f64;
    for &s in s_points {
        let dens = |t: f64, s: f64| law.density(t, s).unwrap_or(f64::NAN);
        let l = derivative(4, |u| dens(u, s), t, t_step);
        let r = derivative(1, |v| dens(t, v), s, s_step);
        worst = worst.max(relative(l, r));
    }
    if worst.is_nan() {
        return Err(Error::Inversion { x: f64::NAN, reason: "density evaluation failed".into() });
    }
    Ok(worst)
}

/// Building block: ∂f/∂s = H s^{2H−1} f″ for the Gaussian kernel, with the
/// left side by finite differences.
pub fn kernel_identity_residual(hurst: f64, s: f64, x: f64, step: f64) -> Result<f64> {
    let k = GaussianKernel::fbm(hurst)?;
    let l = derivative(1, |v| k.value(v, x), s, step);
    Ok(relative(l, k.s_derivative(s, x)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fornberg_reproduces_classical_stencils() {
        let w = fd_weights(2, &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(w, vec![1.0, -2.0, 1.0]);
        let w = fd_weights(1, &[-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap();
        let exact = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        for (a, b) in w.iter().zip(exact) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(fd_weights(3, &[0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn stencils_are_exact_on_polynomials() {
        for order in [1usize, 2, 3, 4, 6] {
            let st = Stencil::central(order);
            // Fourth-order accuracy: exact up to degree order + 3.
            for deg in order..=order + 3 {
                let d = st.apply(|x| x.powi(deg as i32), 0.3, 0.1);
                let exact =
                    (deg - order + 1..=deg).map(|k| k as f64).product::<f64>() * 0.3f64.powi((deg - order) as i32);
                assert!((d - exact).abs() < 1e-6 * exact.abs().max(1.0), "order {order} deg {deg}: {d} {exact}");
            }
        }
    }

    #[test]
    fn case_ids_round_trip() {
        for c in PdeCase::ALL {
            assert_eq!(c.id().to_string().parse::<PdeCase>().unwrap(), c);
            assert_eq!(c.name().parse::<PdeCase>().unwrap(), c);
        }
        assert_eq!(PdeCase::Heat.id(), 'a');
        assert_eq!(PdeCase::StableKM.id(), 'j');
        assert!("z".parse::<PdeCase>().is_err());
    }

    #[test]
    fn validation_guards() {
        assert!(pde_residual(&PdeProblem::new(PdeCase::DeBlassie).with_hurst(0.3)).is_err());
        assert!(pde_residual(&PdeProblem::new(PdeCase::StableKM).with_k(4)).is_err());
        let mut p = PdeProblem::new(PdeCase::FirstOrder);
        p.x_axis = Axis::new(-1.0, 1.0, 3);
        assert!(pde_residual(&p).is_err());
    }

    #[test]
    fn heat_case_passes_with_fourth_order_refinement() {
        let r = pde_residual(&PdeProblem::new(PdeCase::Heat)).unwrap();
        assert_eq!(r.status, CheckStatus::Pass, "{r:?}");
        assert!(r.refinement_ratio > 10.0);
    }

    #[test]
    fn stable_case_at_beta_two_is_heat() {
        let b = PdeProblem::new(PdeCase::SymmetricStable).with_beta(2.0);
        let a = PdeProblem::new(PdeCase::Heat);
        for t in [0.5, 1.0, 2.0] {
            for x in [-2.0, 0.0, 1.5] {
                let (u, v) = (case_field(&a, t, x).unwrap(), case_field(&b, t, x).unwrap());
                assert!((u - v).abs() < 1e-8);
            }
        }
        // The spectral right side is ½u″ of the heat field.
        let setup = Setup::new(&b).unwrap();
        for (i, t) in b.t_axis.values().into_iter().enumerate() {
            for (j, x) in b.x_axis.values().into_iter().enumerate() {
                let exact = 0.5 * gaussian_x_derivative(2, 1.0 + t, x);
                assert!((setup.spectral[i][j] - exact).abs() < 1e-8);
            }
        }
        assert_eq!(pde_residual(&b).unwrap().status, CheckStatus::Pass);
    }

    #[test]
    fn kernel_identity_building_block() {
        assert!(kernel_identity_residual(0.3, 1.2, 0.8, 1e-3).unwrap() < 1e-6);
    }

    #[test]
    fn first_order_case_at_several_hurst_indices() {
        for h in [0.3, 0.5] {
            let r = pde_residual(&PdeProblem::new(PdeCase::FirstOrder).with_hurst(h)).unwrap();
            assert!(r.residual < 1e-4, "H={h}: {r:?}");
        }
        // The cusp |x|^{(1−H)/H} steepens with H; stay clear of it.
        let mut p = PdeProblem::new(PdeCase::FirstOrder).with_hurst(0.8);
        p.x_axis = p.x_axis.excluding(1.0);
        let r = pde_residual(&p).unwrap();
        assert!(r.residual < 1e-4 && r.status == CheckStatus::Pass, "{r:?}");
    }
}
