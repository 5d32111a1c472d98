//! Randomly indexed partial sums of a long-memory linear process and their
//! functional limit W(Y(t)).
//!
//! X_n = Σ_{j≥0} a_j ξ_{n−j} with a_0 = c, a_j = c·j^{−γ}, γ ∈ (½, 1), and
//! standard Gaussian ξ, so X is a stationary Gaussian sequence and S_n is
//! exactly Gaussian with variance V(n). V(n) is evaluated without Monte Carlo
//! from the partial coefficient sums A(m) = Σ_{j≤m} a_j:
//! V(n) = Σ_{m<n} A(m)² + Σ_{m≥0} (A(m+n) − A(m))².

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::pde::derivative;
use crate::process::{sample_marginal, sample_path, ProcessSpec};
use crate::quad::{integrate, QuadOpts};
use crate::rng::{path_seed, stream, Role};
use crate::stable::StableKind;
use crate::stats::{energy_test, ks_two_sample, ks_two_sample_critical};

/// Below this lag partial coefficient sums are tabulated exactly.
const DIRECT: usize = 4096;

/// Coefficients a_0 = c, a_j = c·j^{−γ}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LinearProcessSpec {
    c: f64,
    gamma: f64,
}

impl LinearProcessSpec {
    pub fn new(c: f64, gamma: f64) -> Result<Self> {
        if !(c != 0.0 && c.is_finite()) {
            return Err(invalid("c", "must be finite and nonzero"));
        }
        if !(gamma > 0.5 && gamma < 1.0) {
            return Err(invalid("gamma", format!("must lie in (1/2, 1), got {gamma}")));
        }
        Ok(Self { c, gamma })
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// H = (3 − 2γ)/2.
    pub fn hurst(&self) -> f64 {
        (3.0 - 2.0 * self.gamma) / 2.0
    }

    pub fn coefficient(&self, j: usize) -> f64 {
        if j == 0 {
            self.c
        } else {
            self.c * (j as f64).powf(-self.gamma)
        }
    }

    /// Σ a_j² = c²(1 + ζ(2γ)).
    pub fn coefficient_energy(&self) -> f64 {
        self.c * self.c * (1.0 + riemann_zeta(2.0 * self.gamma))
    }

    /// Σ_{j>J} a_j², by Euler–Maclaurin.
    pub fn tail_energy(&self, lag: usize) -> f64 {
        let s = 2.0 * self.gamma;
        let n = (lag + 1) as f64;
        self.c * self.c * (n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0))
    }

    /// Smallest lag whose neglected coefficient energy is below `relative`
    /// of the total: the cost a truncated moving average would pay.
    pub fn truncation_lag(&self, relative: f64) -> f64 {
        let target = relative * self.coefficient_energy() / (self.c * self.c) * (2.0 * self.gamma - 1.0);
        target.powf(1.0 / (1.0 - 2.0 * self.gamma))
    }

    /// Σ_{m<n} coefficients against the Gaussian constant c₁ of
    /// V(n) ∼ c₁ n^{3−2γ}: c²B(1−γ, 2γ−1)/((1−γ)(3−2γ)).
    pub fn limit_constant(&self) -> f64 {
        let g = self.gamma;
        self.c * self.c * beta_fn(1.0 - g, 2.0 * g - 1.0) / ((1.0 - g) * (3.0 - 2.0 * g))
    }

    /// The closed form 2c²Γ(1−γ)Γ(2γ−1)/(Γ(γ)(3−2γ)²) quoted for the same
    /// growth constant; it differs from `limit_constant` by the factor
    /// (3−2γ)/(2(1−γ)).
    pub fn quoted_constant(&self) -> f64 {
        let g = self.gamma;
        2.0 * self.c * self.c * beta_fn(1.0 - g, 2.0 * g - 1.0) / ((3.0 - 2.0 * g) * (3.0 - 2.0 * g))
    }
}

fn beta_fn(a: f64, b: f64) -> f64 {
    (libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp()
}

/// ζ(s) for s > 1 by Euler–Maclaurin after 64 terms.
pub fn riemann_zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta needs s > 1");
    let n = 64.0f64;
    let head: f64 = (1..64).map(|j| (j as f64).powf(-s)).sum();
    head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
        - s * (s + 1.0) * (s + 2.0) / 720.0 * n.powf(-s - 3.0)
        + s * (s + 1.0) * (s + 2.0) * (s + 3.0) * (s + 4.0) / 30240.0 * n.powf(-s - 5.0)
}

/// Exact V(n) = Var(S_n) and the autocovariance of X.
#[derive(Clone, Debug)]
pub struct VarianceModel {
    spec: LinearProcessSpec,
    /// A(m) for m ≤ DIRECT.
    partial: Vec<f64>,
    /// Asymptotic expansion of Σ_{j<s} j^{−γ} up to a constant: (coef, power).
    terms: [(f64, f64); 5],
    /// A(x) = offset + c·Σ coef·(x+1)^power for x ≥ DIRECT.
    offset: f64,
}

impl VarianceModel {
    pub fn new(spec: LinearProcessSpec) -> Self {
        let g = spec.gamma;
        let terms = [
            (1.0 / (1.0 - g), 1.0 - g),
            (-0.5, -g),
            (-g / 12.0, -g - 1.0),
            (g * (g + 1.0) * (g + 2.0) / 720.0, -g - 3.0),
            (-g * (g + 1.0) * (g + 2.0) * (g + 3.0) * (g + 4.0) / 30240.0, -g - 5.0),
        ];
        let mut partial = Vec::with_capacity(DIRECT + 1);
        let mut acc = spec.c;
        partial.push(acc);
        for j in 1..=DIRECT {
            acc += spec.coefficient(j);
            partial.push(acc);
        }
        let mut m = Self { spec, partial, terms, offset: 0.0 };
        m.offset = m.partial[DIRECT] - spec.c * m.expansion(DIRECT as f64 + 1.0);
        m
    }

    pub fn spec(&self) -> &LinearProcessSpec {
        &self.spec
    }

    fn expansion(&self, s: f64) -> f64 {
        self.terms.iter().map(|&(k, p)| k * s.powf(p)).sum()
    }

    /// A(x); smooth interpolation for real x ≥ DIRECT.
    fn partial_sum(&self, x: f64) -> f64 {
        if x <= DIRECT as f64 && x.fract() == 0.0 {
            return self.partial[x as usize];
        }
        self.offset + self.spec.c * self.expansion(x + 1.0)
    }

    /// A(x + n) − A(x) for x ≥ DIRECT without cancellation in the leading
    /// power.
    fn window_sum(&self, x: f64, n: f64) -> f64 {
        let (k0, p0) = self.terms[0];
        let lead = k0 * (x + 1.0).powf(p0) * (p0 * (n / (x + 1.0)).ln_1p()).exp_m1();
        let rest: f64 = self.terms[1..].iter().map(|&(k, p)| k * ((x + n + 1.0).powf(p) - (x + 1.0).powf(p))).sum();
        self.spec.c * (lead + rest)
    }

    /// Var(S_n) for n ≥ 0 (n may exceed the integer range of f64 exactness;
    /// only ⌊n⌋ matters).
    pub fn variance(&self, n: f64) -> f64 {
        let n = n.floor();
        if n <= 0.0 {
            return 0.0;
        }
        self.head(n) + self.overlap(n)
    }

    /// The same formulas at real n ≥ DIRECT: a smooth interpolant of V.
    fn variance_smooth(&self, n: f64) -> f64 {
        debug_assert!(n >= DIRECT as f64);
        self.head(n) + self.overlap(n)
    }

    /// Σ_{m<n} A(m)².
    fn head(&self, n: f64) -> f64 {
        let d = DIRECT as f64;
        if n <= d {
            return self.partial[..n as usize].iter().map(|a| a * a).sum();
        }
        let direct: f64 = self.partial[..DIRECT].iter().map(|a| a * a).sum();
        direct
            + euler_maclaurin(
                |x| self.partial_sum(x).powi(2),
                d,
                Some(n - 1.0),
                |a, b| self.square_integral(a, b.expect("finite range")),
            )
    }

    /// ∫_a^b A(x)² dx in closed form from the power expansion.
    fn square_integral(&self, a: f64, b: f64) -> f64 {
        let c = self.spec.c;
        let k = self.offset;
        let pw = |q: f64| -> f64 {
            let (ya, yb) = (a + 1.0, b + 1.0);
            if (q + 1.0).abs() < 1e-12 {
                (yb / ya).ln()
            } else {
                (yb.powf(q + 1.0) - ya.powf(q + 1.0)) / (q + 1.0)
            }
        };
        let mut total = k * k * (b - a);
        for &(ei, pi) in &self.terms {
            total += 2.0 * k * c * ei * pw(pi);
            for &(ej, pj) in &self.terms {
                total += c * c * ei * ej * pw(pi + pj);
            }
        }
        total
    }

    /// Σ_{m≥0} (A(m+n) − A(m))².
    fn overlap(&self, n: f64) -> f64 {
        let direct: f64 = (0..DIRECT).map(|m| (self.partial_sum_int_shift(m, n) - self.partial[m]).powi(2)).sum();
        let g = |x: f64| self.window_sum(x, n).powi(2);
        direct + euler_maclaurin(g, DIRECT as f64, None, |a, _| self.overlap_integral(a, n))
    }

    fn partial_sum_int_shift(&self, m: usize, n: f64) -> f64 {
        let x = m as f64 + n;
        if x <= DIRECT as f64 {
            self.partial[x as usize]
        } else {
            self.offset + self.spec.c * self.expansion(x + 1.0)
        }
    }

    /// ∫_a^∞ (A(x+n) − A(x))² dx: quadrature in ln x to x = e^{30}·max(n, a),
    /// then the far field c²n²(x + 1 + n/2)^{1−2γ}/(2γ−1).
    fn overlap_integral(&self, a: f64, n: f64) -> f64 {
        let g = |x: f64| self.window_sum(x, n).powi(2);
        let (lo, hi) = (a.ln(), n.max(a).ln() + 30.0);
        let pieces = ((hi - lo).ceil() as usize).max(1);
        let width = (hi - lo) / pieces as f64;
        let opts = QuadOpts::tol(0.0, 1e-13);
        let mut total = 0.0;
        for i in 0..pieces {
            let (u0, u1) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
            total += integrate(|u| g(u.exp()) * u.exp(), u0, u1, opts)
                .map(|q| q.value)
                .unwrap_or_else(|e| panic!("smooth integrand: {e}"));
        }
        let x = hi.exp();
        let s = 2.0 * self.spec.gamma - 1.0;
        total + self.spec.c * self.spec.c * n * n * (x + 1.0 + 0.5 * n).powf(-s) / s
    }

    /// V(n)/n^{2H}, the slowly varying factor.
    pub fn slowly_varying(&self, n: f64) -> f64 {
        let n = n.floor();
        self.variance(n) / n.powf(2.0 * self.spec.hurst())
    }

    /// r(k) = Cov(X_0, X_k) = c²Σ_{j≥0} w_j w_{j+k}, w_0 = 1, w_j = j^{−γ}.
    pub fn autocovariances(&self, max_lag: usize) -> Vec<f64> {
        let g = self.spec.gamma;
        let cut = (4 * max_lag).max(1 << 15);
        let w: Vec<f64> = (0..cut + max_lag + 1).map(|j| if j == 0 { 1.0 } else { (j as f64).powf(-g) }).collect();
        (0..=max_lag)
            .into_par_iter()
            .map(|k| {
                let head: f64 = (0..cut).map(|j| w[j] * w[j + k]).sum();
                self.spec.c * self.spec.c * (head + cross_tail(g, cut as f64, k as f64))
            })
            .collect()
    }
}

/// Σ_{j≥J} j^{−γ}(j+k)^{−γ} for k ≤ J/2: binomial series for the integral
/// plus Euler–Maclaurin end corrections.
fn cross_tail(g: f64, j: f64, k: f64) -> f64 {
    let ratio = k / j;
    let mut coef = 1.0;
    let mut integral = 0.0;
    for i in 0..60 {
        let term = coef * ratio.powi(i) * j.powf(1.0 - 2.0 * g) / (2.0 * g + i as f64 - 1.0);
        integral += term;
        if term.abs() < 1e-18 * integral.abs() {
            break;
        }
        coef *= (-g - i as f64) / (i as f64 + 1.0);
    }
    let f = j.powf(-g) * (j + k).powf(-g);
    let df = f * (-g / j - g / (j + k));
    integral + 0.5 * f - df / 12.0
}

/// Σ_{m=a}^{b} g(m) (b = None for ∞) from ∫_a^b g plus end corrections,
/// with derivatives by finite differences on the unit scale.
fn euler_maclaurin(g: impl Fn(f64) -> f64, a: f64, b: Option<f64>, integral: impl Fn(f64, Option<f64>) -> f64) -> f64 {
    let ends = |x: f64| (g(x), derivative(1, &g, x, 1.0), derivative(3, &g, x, 2.0));
    let (ga, d1a, d3a) = ends(a);
    let mut total = integral(a, b) + 0.5 * ga - d1a / 12.0 + d3a / 720.0;
    if let Some(b) = b {
        let (gb, d1b, d3b) = ends(b);
        total += 0.5 * gb + d1b / 12.0 - d3b / 720.0;
    }
    total
}

/// Var(S_n) on demand: exact for n ≤ DIRECT, cubic interpolation of ln V in
/// ln n (spacing 1/32) above, accurate to ~1e−10.
#[derive(Clone, Debug)]
pub struct VarianceTable {
    model: VarianceModel,
    small: Vec<f64>,
    log_start: f64,
    log_step: f64,
    log_values: Vec<f64>,
}

impl VarianceTable {
    pub fn new(model: VarianceModel, n_max: f64) -> Self {
        let small: Vec<f64> = (0..=DIRECT).into_par_iter().map(|n| model.variance(n as f64)).collect();
        let log_start = (DIRECT as f64).ln();
        let log_step = 1.0 / 32.0;
        let count = (((n_max.max(2.0 * DIRECT as f64)).ln() - log_start) / log_step).ceil() as usize + 4;
        let log_values: Vec<f64> = (0..count)
            .into_par_iter()
            .map(|i| model.variance_smooth((log_start + i as f64 * log_step).exp().max(DIRECT as f64)).ln())
            .collect();
        Self { model, small, log_start, log_step, log_values }
    }

    pub fn model(&self) -> &VarianceModel {
        &self.model
    }

    pub fn variance(&self, n: f64) -> f64 {
        let n = n.floor();
        if n <= DIRECT as f64 {
            return self.small[n.max(0.0) as usize];
        }
        let pos = (n.ln() - self.log_start) / self.log_step;
        let i = (pos.floor() as usize).clamp(1, self.log_values.len() - 3);
        if i + 2 >= self.log_values.len() - 1 && pos > (self.log_values.len() - 2) as f64 {
            return self.model.variance(n);
        }
        let f = pos - i as f64;
        let y = &self.log_values[i - 1..i + 3];
        // Four-point Lagrange at offsets −1, 0, 1, 2.
        let l = -f * (f - 1.0) * (f - 2.0) / 6.0 * y[0] + (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0 * y[1]
            - (f + 1.0) * f * (f - 2.0) / 2.0 * y[2]
            + (f + 1.0) * f * (f - 1.0) / 6.0 * y[3];
        l.exp()
    }

    /// Cov(S_a, S_b) from stationary increments.
    pub fn covariance(&self, a: f64, b: f64) -> f64 {
        0.5 * (self.variance(a) + self.variance(b) - self.variance((a - b).abs()))
    }
}

/// Exact variance growth report.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceGrowth {
    pub n: Vec<f64>,
    pub variance: Vec<f64>,
    /// V(n)/n^{3−2γ}.
    pub ratio: Vec<f64>,
    pub hurst: f64,
    pub limit_constant: f64,
    pub quoted_constant: f64,
}

pub fn variance_growth(spec: LinearProcessSpec, n_list: &[f64]) -> VarianceGrowth {
    let model = VarianceModel::new(spec);
    let variance: Vec<f64> = n_list.iter().map(|&n| model.variance(n)).collect();
    let e = 3.0 - 2.0 * spec.gamma;
    let ratio = n_list.iter().zip(&variance).map(|(&n, &v)| v / n.floor().powf(e)).collect();
    VarianceGrowth {
        n: n_list.to_vec(),
        variance,
        ratio,
        hurst: spec.hurst(),
        limit_constant: spec.limit_constant(),
        quoted_constant: spec.quoted_constant(),
    }
}

/// S_1..S_n of one realization: X is drawn exactly as a stationary Gaussian
/// sequence by circulant embedding of its autocovariance (innovation stream
/// only).
pub fn partial_sums(spec: LinearProcessSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    Ok(PartialSumSampler::new(spec, n)?.sample(seed))
}

/// Reusable circulant factor for `partial_sums`.
#[derive(Clone, Debug)]
pub struct PartialSumSampler {
    n: usize,
    sqrt_eigen: Vec<f64>,
}

impl PartialSumSampler {
    pub const MAX_LEN: usize = 1 << 16;

    pub fn new(spec: LinearProcessSpec, n: usize) -> Result<Self> {
        if n == 0 || n > Self::MAX_LEN {
            return Err(invalid("n", format!("must lie in 1..={}", Self::MAX_LEN)));
        }
        let m = n.next_power_of_two().max(2);
        let r = VarianceModel::new(spec).autocovariances(m);
        let size = 2 * m;
        let mut c: Vec<Complex64> =
            (0..size).map(|j| Complex64::new(r[if j <= m { j } else { size - j }], 0.0)).collect();
        FftPlanner::new().plan_fft_forward(size).process(&mut c);
        let max = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
        let min = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
        if min < -1e-10 * max {
            return Err(Error::Factorization { min_eigenvalue: min });
        }
        Ok(Self { n, sqrt_eigen: c.iter().map(|z| (z.re.max(0.0) / size as f64).sqrt()).collect() })
    }

    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, &[Role::Innovation as u64]);
        let mut w: Vec<Complex64> = self
            .sqrt_eigen
            .iter()
            .map(|a| Complex64::new(a * rng.sample::<f64, _>(StandardNormal), a * rng.sample::<f64, _>(StandardNormal)))
            .collect();
        FftPlanner::new().plan_fft_forward(w.len()).process(&mut w);
        w.iter()
            .take(self.n)
            .scan(0.0, |acc, z| {
                *acc += z.re;
                Some(*acc)
            })
            .collect()
    }
}

/// Pareto jumps P(J > x) = x^{−α}, x ≥ 1, with b_n = (nΓ(1−α))^{−1/α} so
/// that b_n T_n converges to the subordinator with E e^{−λY(1)} = e^{−λ^α}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeavyIndexSpec {
    alpha: f64,
}

impl HeavyIndexSpec {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Normalization b_n.
    pub fn normalization(&self, n: f64) -> f64 {
        (n.floor() * libm::tgamma(1.0 - self.alpha)).powf(-1.0 / self.alpha)
    }

    pub fn sample_jump<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = 1.0 - rng.random::<f64>();
        u.powf(-1.0 / self.alpha)
    }
}

/// T(ct) = J_1 + ⋯ + J_{⌊ct⌋} on a time grid, with b(c).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomIndexPath {
    pub times: Vec<f64>,
    pub indices: Vec<u64>,
    pub values: Vec<f64>,
    pub normalization: f64,
}

/// Jump stream for path `path` at scale `c`.
fn jump_stream(seed: u64, path: u64, c: f64) -> crate::rng::StreamRng {
    stream(seed, &[path, Role::Jump as u64, c.to_bits()])
}

pub fn random_index<R: Rng + ?Sized>(
    spec: &HeavyIndexSpec,
    c: f64,
    times: &[f64],
    rng: &mut R,
) -> Result<RandomIndexPath> {
    if !(c >= 1.0) {
        return Err(invalid("c", "must be at least 1"));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) || times.iter().any(|&t| !(t >= 0.0)) {
        return Err(invalid("times", "must be nonnegative and nondecreasing"));
    }
    let mut indices = Vec::with_capacity(times.len());
    let mut values = Vec::with_capacity(times.len());
    let (mut k, mut acc) = (0u64, 0.0);
    for &t in times {
        let target = (c * t).floor() as u64;
        while k < target {
            acc += spec.sample_jump(rng);
            k += 1;
        }
        indices.push(target);
        values.push(acc);
    }
    Ok(RandomIndexPath { times: times.to_vec(), indices, values, normalization: spec.normalization(c) })
}

/// The limit-side normalization (b(c))^{−H}·√L(b(c)^{−1}) of S_{⌊T(ct)⌋}.
pub fn sum_normalization(table: &VarianceTable, heavy: &HeavyIndexSpec, c: f64) -> f64 {
    let x = 1.0 / heavy.normalization(c);
    let h = table.model().spec().hurst();
    x.powf(h) * (table.variance(x) / x.floor().powf(2.0 * h)).sqrt()
}

/// Normalized S_{⌊T(ct)⌋} at each time, drawn exactly given the index path:
/// (S_{N_1}, …, S_{N_k}) is Gaussian with covariance from V.
pub fn normalized_indexed_sums<R: Rng + ?Sized>(
    table: &VarianceTable,
    index: &RandomIndexPath,
    norm: f64,
    rng: &mut R,
) -> Vec<f64> {
    let ns: Vec<f64> = index.values.iter().map(|t| t.floor()).collect();
    let k = ns.len();
    let mut cov = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..=i {
            let v = table.covariance(ns[i], ns[j]);
            cov[i * k + j] = v;
            cov[j * k + i] = v;
        }
    }
    let l = semidefinite_cholesky(&cov, k);
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    (0..k).map(|i| (0..=i).map(|j| l[i * k + j] * z[j]).sum::<f64>() / norm).collect()
}

/// Lower factor of a positive semidefinite matrix; zero pivots (repeated or
/// zero indices) give zero columns.
fn semidefinite_cholesky(a: &[f64], k: usize) -> Vec<f64> {
    let mut l = vec![0.0f64; k * k];
    for j in 0..k {
        let d = a[j * k + j] - (0..j).map(|p| l[j * k + p].powi(2)).sum::<f64>();
        if d <= 1e-12 * a[j * k + j].abs().max(f64::MIN_POSITIVE) {
            continue;
        }
        let s = d.sqrt();
        l[j * k + j] = s;
        for i in j + 1..k {
            l[i * k + j] = (a[i * k + j] - (0..j).map(|p| l[i * k + p] * l[j * k + p]).sum::<f64>()) / s;
        }
    }
    l
}

/// KS distances of the normalized randomly indexed sum at time t against
/// direct samples of W(Y(t)), one row per c.
#[derive(Clone, Debug, Serialize)]
pub struct ComposedLimit {
    pub t: f64,
    pub c: Vec<f64>,
    pub ks: Vec<f64>,
    /// Two-sample 1% critical value at the sample sizes used.
    pub critical: f64,
    /// KS_{i+1} ≤ KS_i + critical for every consecutive pair.
    pub nonincreasing: bool,
    pub final_ks: f64,
}

pub fn composed_limit_test(
    lp: LinearProcessSpec,
    heavy: HeavyIndexSpec,
    c_list: &[f64],
    t: f64,
    n_paths: usize,
    seed: u64,
) -> Result<ComposedLimit> {
    if c_list.is_empty() || n_paths < 2 {
        return Err(invalid("composed_limit_test", "needs a c value and two paths"));
    }
    let limit = ProcessSpec::from_parts(lp.hurst(), heavy.alpha, StableKind::Subordinator, 1)?;
    let direct: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sample_marginal(&limit, t, &mut stream(seed, &[i, Role::Aux as u64])))
        .collect();
    let mut ks = Vec::with_capacity(c_list.len());
    for &c in c_list {
        let sums = indexed_samples(lp, heavy, c, &[t], n_paths, seed)?;
        let column: Vec<f64> = sums.iter().map(|v| v[0]).collect();
        ks.push(ks_two_sample(&column, &direct));
    }
    let critical = ks_two_sample_critical(n_paths, n_paths, 0.01);
    let nonincreasing = ks.windows(2).all(|w| w[1] <= w[0] + critical);
    Ok(ComposedLimit { t, c: c_list.to_vec(), final_ks: *ks.last().unwrap(), ks, critical, nonincreasing })
}

/// Normalized (S_{⌊T(ct_1)⌋}, …) per path; jumps and innovations come from
/// separate substreams.
pub fn indexed_samples(
    lp: LinearProcessSpec,
    heavy: HeavyIndexSpec,
    c: f64,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let paths: Vec<RandomIndexPath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| random_index(&heavy, c, times, &mut jump_stream(seed, i, c)))
        .collect::<Result<_>>()?;
    let n_max =
        paths.iter().flat_map(|p| p.values.iter().copied()).fold(1.0f64, f64::max).max(2.0 / heavy.normalization(c));
    let table = VarianceTable::new(VarianceModel::new(lp), n_max);
    let norm = sum_normalization(&table, &heavy, c);
    Ok(paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            normalized_indexed_sums(
                &table,
                p,
                norm,
                &mut stream(seed, &[i as u64, Role::Innovation as u64, c.to_bits()]),
            )
        })
        .collect())
}

/// Joint law at two times by the energy two-sample test.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FddCheck {
    pub t1: f64,
    pub t2: f64,
    pub c: f64,
    pub statistic: f64,
    pub p_value: f64,
}

pub fn fdd_energy_check(
    lp: LinearProcessSpec,
    heavy: HeavyIndexSpec,
    c: f64,
    (t1, t2): (f64, f64),
    n_paths: usize,
    permutations: usize,
    seed: u64,
) -> Result<FddCheck> {
    if !(t1 > 0.0 && t2 > t1) {
        return Err(invalid("times", "need 0 < t1 < t2"));
    }
    let limit = ProcessSpec::from_parts(lp.hurst(), heavy.alpha, StableKind::Subordinator, 1)?;
    let indexed = indexed_samples(lp, heavy, c, &[t1, t2], n_paths, seed)?;
    let direct: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| sample_path(&limit, &[0.0, t1, t2], path_seed(seed ^ 0x5eed, i)).map(|p| p.values[0][1..].to_vec()))
        .collect::<Result<_>>()?;
    // Heavy tails: compare arcsinh-compressed coordinates (a bijection, so
    // equality in law is unaffected) to keep energy distances finite.
    let squash = |v: &Vec<Vec<f64>>| v.iter().map(|p| p.iter().map(|x| x.asinh()).collect()).collect::<Vec<Vec<f64>>>();
    let test =
        energy_test(&squash(&indexed), &squash(&direct), permutations, &mut stream(seed, &[Role::Aux as u64, 7]));
    Ok(FddCheck { t1, t2, c, statistic: test.statistic, p_value: test.p_value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable::StableSpec;
    use crate::stats::{ks_one_sample, mean, normal_cdf, variance};

    fn spec() -> LinearProcessSpec {
        LinearProcessSpec::new(1.0, 0.75).unwrap()
    }

    #[test]
    fn zeta_and_energy() {
        assert!((riemann_zeta(2.0) - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        assert!((riemann_zeta(1.5) - 2.612_375_348_685_488).abs() < 1e-13);
        let direct: f64 =
            (0..2_000_000).map(|j| spec().coefficient(j).powi(2)).sum::<f64>() + spec().tail_energy(1_999_999);
        assert!((direct / spec().coefficient_energy() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hurst_and_constants() {
        assert_eq!(spec().hurst(), 0.75);
        let g = |x: f64| libm::tgamma(x);
        let quoted = 2.0 * g(0.25) * g(0.5) / (g(0.75) * 1.5 * 1.5);
        assert!((spec().quoted_constant() - quoted).abs() < 1e-12);
        assert!((spec().limit_constant() / spec().quoted_constant() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_autocovariance_route() {
        let m = VarianceModel::new(spec());
        let r = m.autocovariances(64);
        assert!((r[0] / spec().coefficient_energy() - 1.0).abs() < 1e-12);
        for n in [1usize, 2, 7, 64] {
            let via_r = n as f64 * r[0] + 2.0 * (1..n).map(|k| (n - k) as f64 * r[k]).sum::<f64>();
            let v = m.variance(n as f64);
            assert!((v / via_r - 1.0).abs() < 1e-10, "n={n}: {v} {via_r}");
        }
    }

    #[test]
    fn variance_is_continuous_across_direct_range() {
        // The Euler–Maclaurin branch takes over above the tabulated range;
        // the second difference stays the positive autocovariance.
        let m = VarianceModel::new(spec());
        let r = m.autocovariances(8200);
        for n in [4095.0, 4096.0, 4097.0, 4098.0, 8192.0] {
            let second = m.variance(n + 1.0) - 2.0 * m.variance(n) + m.variance(n - 1.0);
            let k = n as usize;
            assert!((0.5 * second / r[k] - 1.0).abs() < 1e-4, "n={n}: {} {}", 0.5 * second, r[k]);
        }
    }

    #[test]
    fn growth_ratio_approaches_gaussian_limit() {
        let g = variance_growth(spec(), &[1e4, 1e6, 1e8, 1e10, 1e12, 1e14]);
        let limit = spec().limit_constant();
        // The leading correction is of order n^{−(1−γ)}: extrapolate it out.
        let e = 0.25;
        let (n1, n2) = (g.n[4], g.n[5]);
        let (r1, r2) = (g.ratio[4], g.ratio[5]);
        let x1 = n1.powf(-e);
        let x2 = n2.powf(-e);
        let extrapolated = r2 - (r1 - r2) / (x1 - x2) * x2;
        assert!((extrapolated / limit - 1.0).abs() < 1e-3, "{:?} {extrapolated} {limit}", g.ratio);
        assert!(g.ratio.windows(2).all(|w| w[1] > w[0] && w[1] < limit));
    }

    #[test]
    fn table_interpolation() {
        let m = VarianceModel::new(spec());
        let t = VarianceTable::new(m.clone(), 1e9);
        for n in [10.0, 4096.0, 5000.0, 123_456.0, 9.9e8] {
            assert!((t.variance(n) / m.variance(n) - 1.0).abs() < 1e-9, "{n}");
        }
    }

    #[test]
    fn partial_sums_are_gaussian_with_exact_variance() {
        let sampler = PartialSumSampler::new(spec(), 100).unwrap();
        let runs: Vec<Vec<f64>> = (0..10_000u64).into_par_iter().map(|i| sampler.sample(path_seed(3, i))).collect();
        let v = VarianceModel::new(spec());
        let s100: Vec<f64> = runs.iter().map(|r| r[99]).collect();
        let s1: Vec<f64> = runs.iter().map(|r| r[0]).collect();
        let sd = v.variance(100.0).sqrt();
        assert!(mean(&s100).abs() < 3.0 * sd / 100.0);
        assert!((variance(&s1) / spec().coefficient_energy() - 1.0).abs() < 0.03);
        assert!(
            ks_one_sample(&s100, |x| normal_cdf(x / sd)) < 0.01 + crate::stats::ks_one_sample_critical(10_000, 0.01)
        );
        // Fourth moment of a Gaussian: 3 V².
        let m4 = s100.iter().map(|x| x.powi(4)).sum::<f64>() / s100.len() as f64;
        assert!((m4 / (3.0 * sd.powi(4)) - 1.0).abs() < 0.1);
    }

    #[test]
    fn pareto_sums_reach_unit_subordinator() {
        let heavy = HeavyIndexSpec::new(0.5).unwrap();
        let y = StableSpec::subordinator(0.5, 1.0).unwrap();
        let c = 1e4;
        let samples: Vec<f64> = (0..10_000u64)
            .into_par_iter()
            .map(|i| {
                let p = random_index(&heavy, c, &[1.0], &mut jump_stream(11, i, c)).unwrap();
                p.values[0] * p.normalization
            })
            .collect();
        assert!(ks_one_sample(&samples, |x| y.cdf(1.0, x).unwrap()) < 0.03);
        // Laplace transform oracle e^{−s^α}.
        for s in [0.1, 1.0, 4.0] {
            let emp = samples.iter().map(|v| (-s * v).exp()).sum::<f64>() / samples.len() as f64;
            assert!((emp - (-s.sqrt()).exp()).abs() < 0.01);
        }
    }

    #[test]
    fn index_paths_are_monotone_and_normalizations_order_one() {
        for alpha in [0.3, 0.9] {
            let heavy = HeavyIndexSpec::new(alpha).unwrap();
            let times = [0.0, 0.25, 0.5, 1.0];
            let mut medians = Vec::new();
            for i in 0..501u64 {
                let p = random_index(&heavy, 1e3, &times, &mut jump_stream(5, i, 1e3)).unwrap();
                assert_eq!(p.values[0], 0.0);
                assert!(p.values.windows(2).all(|w| w[1] > w[0]));
                medians.push(p.values[3] * p.normalization);
            }
            medians.sort_by(f64::total_cmp);
            let med = medians[250];
            assert!(med > 0.05 && med < 20.0, "alpha={alpha}: {med}");
        }
    }

    #[test]
    fn degenerate_at_time_zero() {
        let s = indexed_samples(spec(), HeavyIndexSpec::new(0.5).unwrap(), 100.0, &[0.0], 50, 1).unwrap();
        assert!(s.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn jump_seed_does_not_touch_innovations() {
        let a = partial_sums(spec(), 32, 9).unwrap();
        let b = partial_sums(spec(), 32, 9).unwrap();
        assert_eq!(a, b);
        let mut r1 = jump_stream(9, 0, 100.0);
        let mut r2 = jump_stream(9, 0, 1000.0);
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }
}
