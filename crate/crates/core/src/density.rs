//! Densities of W(Y(t)) by subordination, the weighted operators G and V,
//! the Caputo half-derivative and the spectral fractional Laplacian.
//!
//! q(t, x) = c ∫₀^∞ f(s, x) p_t(s) ds with c = 2 for symmetric Y and c = 1
//! for subordinators, f a centred Gaussian kernel in x.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, FixedRule, QuadOpts};
use crate::stable::{StableKind, StableSpec};
use crate::stats::normal_cdf;

/// f(s, x): centred Gaussian density in x with variance offset + s^{2H}.
/// offset = 0 is the fBm marginal; offset = 1 is that marginal convolved
/// with a standard Gaussian test function.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianKernel {
    hurst: f64,
    offset: f64,
}

impl GaussianKernel {
    pub fn fbm(hurst: f64) -> Result<Self> {
        Self::smoothed(hurst, 0.0)
    }

    pub fn smoothed(hurst: f64, offset: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(invalid("H", format!("must lie in (0, 1), got {hurst}")));
        }
        if !(offset >= 0.0 && offset.is_finite()) {
            return Err(invalid("offset", "must be finite and nonnegative"));
        }
        Ok(Self { hurst, offset })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn variance(&self, s: f64) -> f64 {
        self.offset + s.powf(2.0 * self.hurst)
    }

    pub fn value(&self, s: f64, x: f64) -> f64 {
        gaussian(self.variance(s), x)
    }

    /// n-th x-derivative (−1)^n v^{−n/2} He_n(x/√v) f.
    pub fn x_derivative(&self, n: u32, s: f64, x: f64) -> f64 {
        gaussian_x_derivative(n, self.variance(s), x)
    }

    /// ∂f/∂s = H s^{2H−1} ∂²f/∂x².
    pub fn s_derivative(&self, s: f64, x: f64) -> f64 {
        self.hurst * s.powf(2.0 * self.hurst - 1.0) * self.x_derivative(2, s, x)
    }
}

fn gaussian(var: f64, x: f64) -> f64 {
    if var <= 0.0 {
        return 0.0;
    }
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Probabilists' Hermite polynomial He_n.
pub fn hermite(n: u32, z: f64) -> f64 {
    let (mut a, mut b) = (1.0, z);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = z * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

pub fn gaussian_x_derivative(n: u32, var: f64, x: f64) -> f64 {
    let sd = var.sqrt();
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    sign * hermite(n, x / sd) / sd.powi(n as i32) * gaussian(var, x)
}

/// Fixed Gauss–Legendre rule for c∫₀^∞ g(s) p_t(s) ds in w = ln v with
/// s = t^{1/α} v and v distributed as Y(1), so the stable density is evaluated once per node and
/// every integral is an exactly smooth function of t.
#[derive(Clone, Debug)]
pub struct SubordinationRule {
    law: StableSpec,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub layout: RuleLayout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RuleLayout {
    pub log_lo: f64,
    pub log_hi: f64,
    pub panels: usize,
    pub order: usize,
}

impl Default for RuleLayout {
    fn default() -> Self {
        Self { log_lo: -60.0, log_hi: 90.0, panels: 300, order: 12 }
    }
}

impl SubordinationRule {
    pub fn new(law: StableSpec) -> Result<Self> {
        Self::with_layout(law, RuleLayout::default())
    }

    pub fn with_layout(law: StableSpec, layout: RuleLayout) -> Result<Self> {
        let c = sides(&law);
        let rule = FixedRule::composite(layout.log_lo, layout.log_hi, layout.panels, layout.order);
        let mut nodes = Vec::with_capacity(rule.nodes.len());
        let mut weights = Vec::with_capacity(rule.nodes.len());
        for (&w, &wt) in rule.nodes.iter().zip(&rule.weights) {
            let v = w.exp();
            let p = law.density(1.0, v)?;
            if p > 0.0 {
                nodes.push(v);
                weights.push(c * wt * v * p);
            }
        }
        Ok(Self { law, nodes, weights, layout })
    }

    pub fn law(&self) -> &StableSpec {
        &self.law
    }

    /// c∫₀^∞ g(s) p_t(s) ds.
    pub fn expect(&self, t: f64, g: impl Fn(f64) -> f64) -> f64 {
        let scale = t.powf(1.0 / self.law.alpha());
        self.nodes.iter().zip(&self.weights).map(|(&v, &w)| w * g(scale * v)).sum()
    }
}

fn sides(law: &StableSpec) -> f64 {
    if law.kind() == StableKind::Symmetric {
        2.0
    } else {
        1.0
    }
}

/// Power counting for c∫ s^γ f(s, x) p_t(s) ds in one dimension: near 0 the
/// integrand is s^{γ−H} when x = 0 and p_t(0) > 0; near ∞ it is
/// s^{γ−H−α−1} when α < 2.
pub fn check_weighted_convergence(gamma: f64, hurst: f64, law: &StableSpec, x: f64) -> Result<()> {
    if x == 0.0 && law.kind() == StableKind::Symmetric && gamma <= hurst - 1.0 {
        return Err(Error::Divergent(format!("s^{gamma} weight at x = 0 needs gamma > H - 1 = {}", hurst - 1.0)));
    }
    if law.alpha() < 2.0 && gamma >= law.alpha() + hurst {
        return Err(Error::Divergent(format!("s^{gamma} weight needs gamma < alpha + H = {}", law.alpha() + hurst)));
    }
    Ok(())
}

/// Kernel plus subordination rule; fast smooth evaluation of q, G and V.
#[derive(Clone, Debug)]
pub struct SubordinatedLaw {
    pub kernel: GaussianKernel,
    pub rule: SubordinationRule,
}

impl SubordinatedLaw {
    pub fn new(kernel: GaussianKernel, law: StableSpec) -> Result<Self> {
        Ok(Self { kernel, rule: SubordinationRule::new(law)? })
    }

    pub fn density(&self, t: f64, x: f64) -> f64 {
        self.rule.expect(t, |s| self.kernel.value(s, x))
    }

    /// c∫ s^γ p_t(s) f(s, x) ds: G_γ for symmetric Y, V_γ for subordinators.
    pub fn weighted(&self, gamma: f64, t: f64, x: f64) -> Result<f64> {
        if gamma == 0.0 {
            return Ok(self.density(t, x));
        }
        check_weighted_convergence(gamma, self.kernel.hurst, self.rule.law(), x)?;
        Ok(self.rule.expect(t, |s| s.powf(gamma) * self.kernel.value(s, x)))
    }

    /// P(|Z(t)| > level) for the (symmetric) composed law.
    pub fn abs_tail(&self, t: f64, level: f64) -> f64 {
        self.rule.expect(t, |s| 2.0 * (1.0 - normal_cdf(level / self.kernel.variance(s).sqrt())))
    }
}

/// q(t, x) by adaptive quadrature in u = ln s (independent of the fixed rule).
pub fn subordinated_density(hurst: f64, law: &StableSpec, t: f64, x: f64) -> Result<f64> {
    weighted_adaptive(0.0, hurst, law, t, x)
}

/// G_{γ,t}q(t, x) = 2∫₀^∞ s^γ p_t(s) f(s, x) ds for symmetric Y.
pub fn g_operator(gamma: f64, hurst: f64, law: &StableSpec, t: f64, x: f64) -> Result<f64> {
    if law.kind() != StableKind::Symmetric {
        return Err(invalid("law", "G is defined for symmetric Y; use v_operator"));
    }
    weighted_adaptive(gamma, hurst, law, t, x)
}

/// V_{γ,t}q(t, x) = ∫₀^∞ s^γ p_t(s) f(s, x) ds for a subordinator Y.
pub fn v_operator(gamma: f64, hurst: f64, law: &StableSpec, t: f64, x: f64) -> Result<f64> {
    if law.kind() != StableKind::Subordinator {
        return Err(invalid("law", "V is defined for subordinators; use g_operator"));
    }
    weighted_adaptive(gamma, hurst, law, t, x)
}

fn weighted_adaptive(gamma: f64, hurst: f64, law: &StableSpec, t: f64, x: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(invalid("t", "must be positive"));
    }
    let kernel = GaussianKernel::fbm(hurst)?;
    check_weighted_convergence(gamma, hurst, law, x)?;
    let c = sides(law);
    let integrand = |u: f64| -> f64 {
        let s = u.exp();
        let p = law.density(t, s).unwrap_or(f64::NAN);
        let w = if gamma == 0.0 { 1.0 } else { s.powf(gamma) };
        w * kernel.value(s, x) * p * s
    };
    // Unit-width pieces in ln s keep every feature of the integrand resolved.
    let centre = law.scale_at(t).ln();
    let breaks: Vec<f64> = (-60..=90).map(|k| centre + k as f64).collect();
    // The integrand is positive: the pieces around the scale of Y(t) give a
    // lower bound on the total that sets the absolute tolerance elsewhere.
    let mut total = 0.0;
    let mut error = 0.0;
    for pair in &breaks[59..62].windows(2).collect::<Vec<_>>() {
        let q = integrate(integrand, pair[0], pair[1], QuadOpts::tol(1e-300, 1e-11))?;
        total += q.value;
        error += q.error;
    }
    let opts = QuadOpts::tol((1e-14 * total).max(1e-300), 1e-11);
    for (i, pair) in breaks.windows(2).enumerate() {
        if !(59..61).contains(&i) {
            let q = integrate(integrand, pair[0], pair[1], opts)?;
            total += q.value;
            error += q.error;
        }
    }
    if !total.is_finite() {
        return Err(Error::Quadrature { achieved: f64::INFINITY, requested: 1e-11 });
    }
    if error > 1e-7 * total.abs() {
        return Err(Error::Quadrature { achieved: error / total.abs(), requested: 1e-7 });
    }
    Ok(c * total)
}

/// q on a (t, x) grid with normalization diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct DensityField {
    pub t_grid: Vec<f64>,
    pub x_grid: Vec<f64>,
    /// q[i][j] = q(t_grid[i], x_grid[j]).
    pub q: Vec<Vec<f64>>,
    pub hurst: f64,
    pub law: StableSpec,
    pub layout: RuleLayout,
    /// Trapezoid mass over x_grid plus the exact mass outside it, per t.
    /// The trapezoid error is governed by the cusp q(0) − q(x) ∝ |x|^{(1−H)/H}.
    pub mass: Vec<f64>,
    /// Mass outside the x-range, per t.
    pub outside: Vec<f64>,
}

pub fn density_field(hurst: f64, law: &StableSpec, t_grid: &[f64], x_grid: &[f64]) -> Result<DensityField> {
    if t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(invalid("t_grid", "times must be positive"));
    }
    if x_grid.len() < 2 || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("x_grid", "must be increasing with two points"));
    }
    let sl = SubordinatedLaw::new(GaussianKernel::fbm(hurst)?, *law)?;
    let q: Vec<Vec<f64>> = t_grid.iter().map(|&t| x_grid.iter().map(|&x| sl.density(t, x)).collect()).collect();
    let (lo, hi) = (x_grid[0], x_grid[x_grid.len() - 1]);
    let mut mass = Vec::new();
    let mut outside = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let trap: f64 = x_grid.windows(2).zip(q[i].windows(2)).map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0] + v[1])).sum();
        // Symmetric law: mass below lo and above hi.
        let out = 0.5 * sl.abs_tail(t, -lo) + 0.5 * sl.abs_tail(t, hi);
        mass.push(trap + out);
        outside.push(out);
    }
    Ok(DensityField {
        t_grid: t_grid.to_vec(),
        x_grid: x_grid.to_vec(),
        q,
        hurst,
        law: *law,
        layout: sl.rule.layout,
        mass,
        outside,
    })
}

/// Caputo derivative of order ½ at the last sample time,
/// (1/√π)∫₀^t u′(s)(t − s)^{−1/2} ds, by product integration: u′ is
/// piecewise linear (from local quadratic interpolation) and the kernel is
/// integrated exactly on each interval.
pub fn caputo_half(times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() || times.is_empty() || times[0] != 0.0 {
        return Err(invalid("times", "must start at 0 and match the values"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("times", "must be strictly increasing"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("values", "must be finite"));
    }
    let n = times.len() - 1;
    if n == 0 {
        return Ok(0.0);
    }
    if n == 1 {
        let slope = (values[1] - values[0]) / times[1];
        return Ok(slope * 2.0 * times[1].sqrt() / PI.sqrt());
    }
    let t = times[n];
    let mut total = 0.0;
    for k in 0..n {
        let j = k.min(n - 2);
        let (d0, d1) = quadratic_slopes(&times[j..j + 3], &values[j..j + 3], times[k], times[k + 1]);
        let a = t - times[k];
        let b = t - times[k + 1];
        let (ra, rb) = (a.sqrt(), b.sqrt());
        let i0 = 2.0 * (a - b) / (ra + rb);
        let i32 = (a - b) * (a + ra * rb + b) / (ra + rb);
        let i1 = a * i0 - 2.0 / 3.0 * i32;
        let h = times[k + 1] - times[k];
        total += d0 * i0 + (d1 - d0) / h * i1;
    }
    Ok(total / PI.sqrt())
}

/// Derivative of the quadratic through three points, at s0 and s1.
fn quadratic_slopes(x: &[f64], y: &[f64], s0: f64, s1: f64) -> (f64, f64) {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let c = (d12 - d01) / (x[2] - x[0]);
    let slope = |s: f64| d01 + c * (2.0 * s - x[0] - x[1]);
    (slope(s0), slope(s1))
}

/// Caputo half-derivative of `u` at t from n + 1 samples on the graded grid
/// t_k = t (k/n)^grading, which resolves u′ ∝ s^{−1/2} at the origin.
pub fn caputo_half_of(u: impl Fn(f64) -> f64, t: f64, n: usize, grading: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(0.0);
    }
    if !(t > 0.0) || n < 2 || !(grading >= 1.0) {
        return Err(invalid("caputo grid", "needs t >= 0, n >= 2 and grading >= 1"));
    }
    let times: Vec<f64> = (0..=n).map(|k| t * (k as f64 / n as f64).powf(grading)).collect();
    let values: Vec<f64> = times.iter().map(|&s| u(s)).collect();
    caputo_half(&times, &values)
}

/// −(−Δ)^{β/2} on a uniform periodic grid by FFT (multiplier −|k|^β).
/// Inputs must have decayed at the edges: mass in the outer 5% on each
/// side above 1e−6 of the total is rejected.
pub fn fractional_laplacian(values: &[f64], spacing: f64, beta: f64) -> Result<Vec<f64>> {
    if !(beta > 0.0 && beta <= 2.0 * 8.0) || !(spacing > 0.0) || values.len() < 8 {
        return Err(invalid("fractional_laplacian", "needs beta > 0, positive spacing, 8 or more points"));
    }
    let n = values.len();
    let edge = (n / 20).max(1);
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    let outer: f64 = values[..edge].iter().chain(&values[n - edge..]).map(|v| v.abs()).sum();
    if outer > 1e-6 * total {
        return Err(Error::EdgeMass { fraction: outer / total });
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let dk = 2.0 * PI / (n as f64 * spacing);
    for (j, c) in buf.iter_mut().enumerate() {
        let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        *c *= -(m.abs() * dk).powf(beta);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}
