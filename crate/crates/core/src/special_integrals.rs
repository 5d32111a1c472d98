//! Standalone oracles for four auxiliary integrals: the ordered-simplex
//! Dirichlet integral, the nearest-point singular integral on [0, 1] with and
//! without a stable density weight, and the Gaussian conditioning identity
//! for `∫ g(v₁) exp(−½ vᵀΣv) dv`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::{gauss_legendre, integrate, integrate_upper, QuadOpts};
use crate::rng::{stream, Role};
use crate::stable::StableSpec;

/// A value with a one-sigma error bar.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    /// |value − target| in units of the error bar.
    pub fn sigmas_from(&self, target: f64) -> f64 {
        (self.value - target).abs() / self.std_error
    }
}

/// Ordered-simplex integral `∫_{0≤x₁≤…≤x_n≤h} ∏ (x_j − x_{j−1})^{−β_j} dx`, x₀ = 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimplexIntegralSpec {
    h: f64,
    betas: Vec<f64>,
}

impl SimplexIntegralSpec {
    pub fn new(h: f64, betas: Vec<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid("h", format!("must be positive and finite, got {h}")));
        }
        if betas.is_empty() {
            return Err(invalid("betas", "needs at least one exponent"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(invalid("betas", format!("every exponent must lie in (0,1), got {b}")));
        }
        Ok(Self { h, betas })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn n(&self) -> usize {
        self.betas.len()
    }

    /// Homogeneity degree `n − Σβ_j` in h.
    pub fn exponent(&self) -> f64 {
        self.n() as f64 - self.betas.iter().sum::<f64>()
    }
}

/// Closed form `h^{n−Σβ} ∏Γ(1−β_j) / Γ(1+n−Σβ)` through log-Gamma.
pub fn simplex_dirichlet_closed(spec: &SimplexIntegralSpec) -> f64 {
    let e = spec.exponent();
    let ln = e * spec.h.ln() + spec.betas.iter().map(|b| libm::lgamma(1.0 - b)).sum::<f64>() - libm::lgamma(1.0 + e);
    ln.exp()
}

/// Largest simplex dimension handled by nested quadrature.
pub const QUADRATURE_MAX_DIM: usize = 4;
/// Largest simplex dimension handled by importance sampling.
pub const MONTE_CARLO_MAX_DIM: usize = 8;

/// Tanh-sinh rule on [0, 1] storing each node together with its exact
/// distance to 1, so endpoint behaviour is resolved without cancellation.
struct TanhSinh {
    nodes: Vec<f64>,
    complements: Vec<f64>,
    weights: Vec<f64>,
}

impl TanhSinh {
    const REACH: f64 = 3.5;

    fn new(step: f64) -> Self {
        let k = (Self::REACH / step).ceil() as i64;
        let mut rule = Self { nodes: Vec::new(), complements: Vec::new(), weights: Vec::new() };
        for i in -k..=k {
            let t = i as f64 * step;
            let e = (std::f64::consts::PI * t.sinh()).exp();
            let a = 1.0 / (1.0 + 1.0 / e);
            let b = 1.0 / (1.0 + e);
            let w = step * std::f64::consts::PI * t.cosh() * a * b;
            if w > 0.0 && b > 0.0 {
                rule.nodes.push(a);
                rule.complements.push(b);
                rule.weights.push(w);
            }
        }
        rule
    }
}

/// `J_k(r)`: the simplex integral over the first k increments with total ≤ r.
/// The substitution u = r·v^{1/(1−β)} absorbs the u^{−β} singularity.
fn nested_simplex(rule: &TanhSinh, betas: &[f64], r: f64) -> f64 {
    let Some((&beta, rest)) = betas.split_last() else {
        return 1.0;
    };
    let front = r.powf(1.0 - beta) / (1.0 - beta);
    if rest.is_empty() {
        return front;
    }
    let q = 1.0 / (1.0 - beta);
    let inner: f64 = rule
        .nodes
        .iter()
        .zip(&rule.complements)
        .zip(&rule.weights)
        .map(|((&v, &b), &w)| {
            // 1 − v^q, accurate when v is close to 1.
            let left = if v < 0.5 { 1.0 - v.powf(q) } else { -(q * (-b).ln_1p()).exp_m1() };
            w * nested_simplex(rule, rest, r * left)
        })
        .sum();
    front * inner
}

/// Nested tanh-sinh quadrature of the simplex integral (n ≤ 4). The error bar
/// is the difference between step 1/8 and step 1/16, floored at 1e-12 relative.
pub fn simplex_dirichlet_quadrature(spec: &SimplexIntegralSpec) -> Result<Estimate> {
    if spec.n() > QUADRATURE_MAX_DIM {
        return Err(invalid("betas", format!("quadrature supports n ≤ {QUADRATURE_MAX_DIM}, got {}", spec.n())));
    }
    let coarse = nested_simplex(&TanhSinh::new(0.125), &spec.betas, spec.h);
    let fine = nested_simplex(&TanhSinh::new(0.0625), &spec.betas, spec.h);
    Ok(Estimate { value: fine, std_error: (fine - coarse).abs().max(1e-12 * fine.abs()) })
}

/// Importance-sampled estimate (n ≤ 8) with a Dirichlet proposal on the
/// increments (and the slack h − x_n) whose parameters 3(1−β_j)/2 keep the
/// weight variance finite.
pub fn simplex_dirichlet_monte_carlo(spec: &SimplexIntegralSpec, samples: usize, seed: u64) -> Result<Estimate> {
    let n = spec.n();
    if n > MONTE_CARLO_MAX_DIM {
        return Err(invalid("betas", format!("Monte Carlo supports n ≤ {MONTE_CARLO_MAX_DIM}, got {n}")));
    }
    if samples < 2 {
        return Err(invalid("samples", "needs at least two samples"));
    }
    let shapes: Vec<f64> = spec.betas.iter().map(|b| 1.5 * (1.0 - b)).chain([1.0]).collect();
    let total: f64 = shapes.iter().sum();
    let ln_norm = shapes.iter().map(|&a| libm::lgamma(a)).sum::<f64>() - libm::lgamma(total);
    let gammas: Vec<Gamma<f64>> = shapes.iter().map(|&a| Gamma::new(a, 1.0).expect("positive shape")).collect();
    let ln_front = spec.exponent() * spec.h.ln() + ln_norm;
    let mut rng = stream(seed, &[Role::Aux as u64, n as u64]);
    let mut draws = vec![0.0; n + 1];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let mut norm = 0.0;
        for (d, g) in draws.iter_mut().zip(&gammas) {
            *d = g.sample(&mut rng);
            norm += *d;
        }
        // Weight f/q ∝ ∏ w_j^{−(1−β_j)/2}, evaluated in logs against gamma underflow.
        let ln_w: f64 =
            draws[..n].iter().zip(&spec.betas).map(|(&d, &b)| -0.5 * (1.0 - b) * (d.ln() - norm.ln())).sum();
        let w = (ln_front + ln_w).exp();
        sum += w;
        sum_sq += w * w;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq / m - mean * mean) * m / (m - 1.0)).max(0.0);
    Ok(Estimate { value: mean, std_error: (var / m).sqrt() })
}

/// One point of the randomized closed-form-versus-numerics sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SimplexSweepRow {
    pub h: f64,
    pub betas: Vec<f64>,
    pub closed: f64,
    pub quadrature: Option<Estimate>,
    pub monte_carlo: Estimate,
    /// Largest discrepancy in error bars over the two numerical routes.
    pub max_sigmas: f64,
}

/// Randomized sweep over n ∈ {1..=max_n}, β_j ∈ [0.05, 0.95], h ∈ [0.2, 5].
pub fn simplex_sweep(points: usize, max_n: usize, mc_samples: usize, seed: u64) -> Result<Vec<SimplexSweepRow>> {
    if max_n == 0 || max_n > MONTE_CARLO_MAX_DIM {
        return Err(invalid("max_n", format!("must lie in 1..={MONTE_CARLO_MAX_DIM}")));
    }
    (0..points)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i as u64, Role::Aux as u64]);
            let n = rng.random_range(1..=max_n);
            let betas: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..0.95)).collect();
            let h = (rng.random_range(0.2f64.ln()..5f64.ln())).exp();
            let spec = SimplexIntegralSpec::new(h, betas)?;
            let closed = simplex_dirichlet_closed(&spec);
            let quadrature = if n <= QUADRATURE_MAX_DIM { Some(simplex_dirichlet_quadrature(&spec)?) } else { None };
            let monte_carlo = simplex_dirichlet_monte_carlo(&spec, mc_samples, seed ^ i as u64)?;
            let max_sigmas = quadrature.iter().chain([&monte_carlo]).map(|e| e.sigmas_from(closed)).fold(0.0, f64::max);
            Ok(SimplexSweepRow { h: spec.h, betas: spec.betas, closed, quadrature, monte_carlo, max_sigmas })
        })
        .collect()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma >= 1.0 {
        return Err(Error::Divergent(format!("nearest-point singularity of order {gamma} ≥ 1 is not integrable")));
    }
    if !(gamma >= 0.0) {
        return Err(invalid("gamma", format!("must lie in [0,1), got {gamma}")));
    }
    Ok(())
}

fn sorted_distinct(points: &[f64]) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(invalid("points", "needs at least one point"));
    }
    if let Some(x) = points.iter().find(|x| !x.is_finite()) {
        return Err(invalid("points", format!("must be finite, got {x}")));
    }
    let mut p = points.to_vec();
    p.sort_by(f64::total_cmp);
    p.dedup();
    Ok(p)
}

/// `∫₀¹ dx / min_j |x − x_j|^γ`, summed exactly over the nearest-point cells.
pub fn min_distance_integral(points: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let p = sorted_distinct(points)?;
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(invalid("points", format!("must lie in [0,1], got {x}")));
    }
    let e = 1.0 - gamma;
    let mut left = 0.0;
    let mut total = 0.0;
    for (i, &x) in p.iter().enumerate() {
        let right = p.get(i + 1).map_or(1.0, |&next| 0.5 * (x + next));
        total += (x - left).powf(e) + (right - x).powf(e);
        left = right;
    }
    Ok(total / e)
}

/// `∫ p₁(x) / min_j |x − x_j|^γ dx` for the unit-time density of `law`.
/// Each nearest-point cell is split at its point and integrated in
/// s = d^{1−γ}, which removes the distance singularity.
pub fn weighted_min_integral(points: &[f64], gamma: f64, law: &StableSpec) -> Result<f64> {
    check_gamma(gamma)?;
    let p = sorted_distinct(points)?;
    let q = 1.0 / (1.0 - gamma);
    let opts = QuadOpts { abs_tol: 1e-15, rel_tol: 1e-11, max_intervals: 4000 };
    let piece = |x: f64, dir: f64, reach: f64| -> Result<f64> {
        let mut failure = None;
        let mut f = |s: f64| {
            let at = x + dir * s.powf(q);
            law.density(1.0, at).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        };
        let value = if reach.is_finite() {
            integrate(&mut f, 0.0, reach.powf(1.0 / q), opts)?.value
        } else {
            integrate(&mut f, 0.0, 1.0, opts)?.value + integrate_upper(&mut f, 1.0, opts)?.value
        };
        failure.map_or(Ok(q * value), Err)
    };
    let mut total = 0.0;
    let mut left = f64::NEG_INFINITY;
    for (i, &x) in p.iter().enumerate() {
        let right = p.get(i + 1).map_or(f64::INFINITY, |&next| 0.5 * (x + next));
        total += piece(x, -1.0, x - left)? + piece(x, 1.0, right - x)?;
        left = right;
    }
    Ok(total)
}

/// Boundedness report for `value(n) / n^γ`.
#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub gamma: f64,
    pub rows: Vec<GrowthRow>,
    /// Largest ratio over n up to half the largest n.
    pub max_ratio_half: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthRow {
    pub n: usize,
    pub configuration: String,
    pub value: f64,
    pub ratio: f64,
}

impl GrowthReport {
    fn from_rows(gamma: f64, rows: Vec<GrowthRow>) -> Self {
        let n_max = rows.iter().map(|r| r.n).max().unwrap_or(0);
        let max_over = |cap: usize| rows.iter().filter(|r| r.n <= cap).map(|r| r.ratio).fold(0.0, f64::max);
        Self { gamma, max_ratio_half: max_over(n_max / 2), max_ratio: max_over(n_max), rows }
    }

    /// Finite and at most `slack` times the maximum over the first half.
    pub fn is_stable(&self, slack: f64) -> bool {
        self.max_ratio.is_finite() && self.max_ratio_half > 0.0 && self.max_ratio <= slack * self.max_ratio_half
    }
}

/// Growth of the unweighted integral over n = 1..=n_max for equally spaced
/// points and `random` uniform configurations per n.
pub fn min_distance_growth(gamma: f64, n_max: usize, random: usize, seed: u64) -> Result<GrowthReport> {
    check_gamma(gamma)?;
    let mut rows = Vec::new();
    for n in 1..=n_max {
        let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let value = min_distance_integral(&grid, gamma)?;
        rows.push(GrowthRow { n, configuration: "equispaced".into(), value, ratio: value / (n as f64).powf(gamma) });
        for r in 0..random {
            let mut rng = stream(seed, &[n as u64, r as u64, Role::Aux as u64]);
            let pts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let value = min_distance_integral(&pts, gamma)?;
            rows.push(GrowthRow {
                n,
                configuration: format!("uniform-{r}"),
                value,
                ratio: value / (n as f64).powf(gamma),
            });
        }
    }
    Ok(GrowthReport::from_rows(gamma, rows))
}

/// Growth of the density-weighted integral for n in `ns`, with `random`
/// configurations per n drawn from the law itself.
pub fn weighted_growth(gamma: f64, law: &StableSpec, ns: &[usize], random: usize, seed: u64) -> Result<GrowthReport> {
    check_gamma(gamma)?;
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..random).map(move |r| (n, r))).collect();
    let rows = jobs
        .into_par_iter()
        .map(|(n, r)| {
            let mut rng = stream(seed, &[n as u64, r as u64, Role::Stable as u64]);
            let pts: Vec<f64> = (0..n).map(|_| law.sample(1.0, &mut rng)).collect();
            let value = weighted_min_integral(&pts, gamma, law)?;
            Ok(GrowthRow { n, configuration: format!("law-{r}"), value, ratio: value / (n as f64).powf(gamma) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthReport::from_rows(gamma, rows))
}

/// Two sides of the Gaussian conditioning identity for g(v) = |v|^γ.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityCheck {
    pub dim: usize,
    pub gamma: f64,
    pub lhs: Estimate,
    pub rhs: f64,
    /// |lhs − rhs| / |rhs|.
    pub gap: f64,
}

/// Largest dimension for the quadrature side of the identity.
pub const IDENTITY_QUADRATURE_MAX_DIM: usize = 3;
const GL_POINTS: usize = 48;
const GL_REACH: f64 = 10.0;

fn check_covariance(cov: &DMatrix<f64>) -> Result<()> {
    let n = cov.nrows();
    if n == 0 || cov.ncols() != n {
        return Err(invalid("covariance", "must be a non-empty square matrix"));
    }
    let scale = cov.amax();
    if cov.iter().any(|v| !v.is_finite()) || (cov - cov.transpose()).amax() > 1e-12 * scale {
        return Err(invalid("covariance", "must be finite and symmetric"));
    }
    let eig = cov.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 1e-10 * hi) {
        return Err(Error::SingularCovariance);
    }
    Ok(())
}

/// `∫|v|^γ e^{−v²/2} dv = 2^{(γ+1)/2} Γ((γ+1)/2)`.
pub fn gaussian_abs_moment_integral(gamma: f64) -> f64 {
    2f64.powf(0.5 * (gamma + 1.0)) * libm::tgamma(0.5 * (gamma + 1.0))
}

/// Right side: `(2π)^{(n−1)/2} / √det Σ · σ₁^{−γ} ∫|v|^γ e^{−v²/2} dv`, with
/// σ₁² = Var(ξ₁ | ξ₂..ξ_n) from the Schur complement.
pub fn conditional_identity_rhs(cov: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    check_covariance(cov)?;
    let n = cov.nrows();
    let det = cov.clone().cholesky().ok_or(Error::SingularCovariance)?.determinant();
    let cond_var = if n == 1 {
        cov[(0, 0)]
    } else {
        let rest = cov.view((1, 1), (n - 1, n - 1)).into_owned();
        let cross: DVector<f64> = cov.view((1, 0), (n - 1, 1)).column(0).into_owned();
        let solved = rest.cholesky().ok_or(Error::SingularCovariance)?.solve(&cross);
        cov[(0, 0)] - cross.dot(&solved)
    };
    if !(cond_var > 0.0) {
        return Err(Error::SingularCovariance);
    }
    Ok((2.0 * std::f64::consts::PI).powf(0.5 * (n as f64 - 1.0)) / det.sqrt()
        * cond_var.powf(-0.5 * gamma)
        * gaussian_abs_moment_integral(gamma))
}

/// Left side by quadrature (n ≤ 3): adaptive in v₁, tensor Gauss–Legendre in
/// the remaining coordinates over ±10 marginal deviations around the
/// conditional centre.
pub fn conditional_identity_quadrature(cov: &DMatrix<f64>, gamma: f64) -> Result<IdentityCheck> {
    check_covariance(cov)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid("gamma", format!("must lie in [0,1), got {gamma}")));
    }
    let n = cov.nrows();
    if n > IDENTITY_QUADRATURE_MAX_DIM {
        return Err(invalid("covariance", format!("quadrature supports n ≤ {IDENTITY_QUADRATURE_MAX_DIM}")));
    }
    let rhs = conditional_identity_rhs(cov, gamma)?;
    let m = n - 1;
    let (gl_x, gl_w) = gauss_legendre(GL_POINTS);
    let (shift, half): (DVector<f64>, Vec<f64>) = if m == 0 {
        (DVector::zeros(0), Vec::new())
    } else {
        let rest = cov.view((1, 1), (m, m)).into_owned();
        let cross: DVector<f64> = cov.view((1, 0), (m, 1)).column(0).into_owned();
        let inv = rest.try_inverse().ok_or(Error::SingularCovariance)?;
        let half = (0..m).map(|i| GL_REACH * inv[(i, i)].sqrt()).collect();
        (-(&inv * cross), half)
    };
    let inner = |v1: f64| -> f64 {
        let centre = &shift * v1;
        let mut v = vec![v1; n];
        let mut idx = vec![0usize; m];
        let mut total = 0.0;
        loop {
            let mut w = 1.0;
            for k in 0..m {
                v[k + 1] = centre[k] + half[k] * gl_x[idx[k]];
                w *= half[k] * gl_w[idx[k]];
            }
            let mut form = 0.0;
            for i in 0..n {
                for j in 0..n {
                    form += v[i] * cov[(i, j)] * v[j];
                }
            }
            total += w * (-0.5 * form).exp();
            // Odometer over the tensor grid; a single pass when m = 0.
            let mut k = 0;
            while k < m {
                idx[k] += 1;
                if idx[k] < GL_POINTS {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == m {
                return total;
            }
        }
    };
    let opts = QuadOpts { abs_tol: 1e-300, rel_tol: 1e-12, max_intervals: 4000 };
    let pos = integrate_upper(|x| x.powf(gamma) * inner(x), 0.0, opts)?;
    let neg = integrate_upper(|x| x.powf(gamma) * inner(-x), 0.0, opts)?;
    let value = pos.value + neg.value;
    let lhs = Estimate { value, std_error: (pos.error + neg.error).max(1e-14 * value) };
    Ok(IdentityCheck { dim: n, gamma, lhs, rhs, gap: (value - rhs).abs() / rhs })
}

/// Left side by Monte Carlo: (2π)^{n/2}/√det Σ · E|V₁|^γ with V ~ N(0, Σ⁻¹).
pub fn conditional_identity_monte_carlo(
    cov: &DMatrix<f64>,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    check_covariance(cov)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid("gamma", format!("must lie in [0,1), got {gamma}")));
    }
    if samples < 2 {
        return Err(invalid("samples", "needs at least two samples"));
    }
    let n = cov.nrows();
    let rhs = conditional_identity_rhs(cov, gamma)?;
    let chol = cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let upper = chol.l().transpose();
    let front = (2.0 * std::f64::consts::PI).powf(0.5 * n as f64) / chol.determinant().sqrt();
    let mut rng = stream(seed, &[Role::Aux as u64, n as u64]);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        // Lᵀ V = z gives Cov V = (L Lᵀ)⁻¹.
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = upper.solve_upper_triangular(&z).expect("nonsingular factor");
        let g = v[0].abs().powf(gamma);
        sum += g;
        sum_sq += g * g;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = ((sum_sq / k - mean * mean) * k / (k - 1.0)).max(0.0);
    let lhs = Estimate { value: front * mean, std_error: front * (var / k).sqrt() };
    Ok(IdentityCheck { dim: n, gamma, lhs, rhs, gap: (lhs.value - rhs).abs() / rhs })
}

/// Random well-conditioned covariance `B Bᵀ / n + I/5` with Gaussian B.
pub fn random_covariance<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2
}

/// Quadrature identity checks over `count` random covariances with n ∈ {1,2,3}
/// and γ ∈ [0, 0.95).
pub fn identity_sweep(count: usize, seed: u64) -> Result<Vec<IdentityCheck>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, &[i as u64, Role::Aux as u64]);
            let n = rng.random_range(1..=IDENTITY_QUADRATURE_MAX_DIM);
            let gamma = rng.random_range(0.0..0.95);
            let cov = random_covariance(n, &mut rng);
            conditional_identity_quadrature(&cov, gamma)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(h: f64, betas: &[f64]) -> SimplexIntegralSpec {
        SimplexIntegralSpec::new(h, betas.to_vec()).unwrap()
    }

    #[test]
    fn simplex_closed_form_values() {
        assert!((simplex_dirichlet_closed(&spec(1.0, &[0.5])) - 2.0).abs() < 1e-13);
        assert!((simplex_dirichlet_closed(&spec(1.0, &[0.5, 0.5])) - PI).abs() < 1e-13);
        let betas = [0.2, 0.5, 0.8];
        let ratio = simplex_dirichlet_closed(&spec(2.0, &betas)) / simplex_dirichlet_closed(&spec(1.0, &betas));
        assert!((ratio - 2f64.powf(3.0 - 1.5)).abs() < 1e-13);
    }

    #[test]
    fn simplex_rejects_bad_exponents() {
        assert!(SimplexIntegralSpec::new(1.0, vec![1.0]).is_err());
        assert!(SimplexIntegralSpec::new(1.0, vec![0.0]).is_err());
        assert!(SimplexIntegralSpec::new(0.0, vec![0.5]).is_err());
        assert!(SimplexIntegralSpec::new(1.0, vec![]).is_err());
        assert!(simplex_dirichlet_quadrature(&spec(1.0, &[0.5; 5])).is_err());
    }

    #[test]
    fn simplex_quadrature_reproduces_the_examples() {
        for (h, betas, target) in [(1.0, vec![0.5], 2.0), (1.0, vec![0.5, 0.5], PI)] {
            let q = simplex_dirichlet_quadrature(&spec(h, &betas)).unwrap();
            assert!((q.value - target).abs() < 5e-3 * target);
            assert!((q.value - target).abs() < 1e-9, "{q:?}");
        }
        let s = spec(1.0, &[0.2, 0.5, 0.8]);
        let q = simplex_dirichlet_quadrature(&s).unwrap();
        let c = simplex_dirichlet_closed(&s);
        assert!((q.value / c - 1.0).abs() < 1e-9, "{} vs {c}", q.value);
    }

    // With two increments the inner integral is elementary, leaving
    // ∫₀^h u^{−β₂}(h−u)^{1−β₁}/(1−β₁) du for adaptive quadrature.
    #[test]
    fn two_dimensional_quadrature_matches_adaptive_beta_integral() {
        let (b1, b2, h) = (0.3, 0.7, 1.7);
        let direct =
            integrate(|u| u.powf(-b2) * (h - u).powf(1.0 - b1) / (1.0 - b1), 0.0, h, QuadOpts::tol(1e-14, 1e-12))
                .unwrap()
                .value;
        let q = simplex_dirichlet_quadrature(&spec(h, &[b1, b2])).unwrap();
        assert!((q.value - direct).abs() < 1e-8 * direct, "{} vs {direct}", q.value);
    }

    #[test]
    fn simplex_monte_carlo_within_three_error_bars() {
        for betas in [vec![0.5], vec![0.5, 0.5], vec![0.2, 0.5, 0.8], vec![0.3, 0.6, 0.4, 0.9, 0.1, 0.7]] {
            let s = spec(1.3, &betas);
            let e = simplex_dirichlet_monte_carlo(&s, 200_000, 11).unwrap();
            let c = simplex_dirichlet_closed(&s);
            assert!(e.sigmas_from(c) < 3.0, "{betas:?}: {e:?} vs {c}");
            assert!((e.value / c - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn simplex_sweep_agrees() {
        let rows = simplex_sweep(12, 6, 50_000, 5).unwrap();
        for r in &rows {
            assert!(r.max_sigmas < 3.0, "{r:?}");
        }
    }

    #[test]
    fn min_distance_examples() {
        assert!((min_distance_integral(&[0.0], 0.5).unwrap() - 2.0).abs() < 1e-14);
        let single = min_distance_integral(&[0.3], 0.4).unwrap();
        let cluster = min_distance_integral(&[0.3; 7], 0.4).unwrap();
        assert_eq!(single, cluster);
        assert!(matches!(min_distance_integral(&[0.5], 1.0), Err(Error::Divergent(_))));
        assert!(min_distance_integral(&[1.5], 0.5).is_err());
        assert!((min_distance_integral(&[0.2, 0.9], 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    // Adaptive ∫ f over distances [0, reach] from a singular point, through
    // d = s^k with an integer k chosen to flatten the singularity. The
    // integrand receives (x, d, point) so the distance keeps full precision.
    fn from_point(f: impl Fn(f64, f64, f64) -> f64, at: f64, dir: f64, reach: f64, k: i32) -> f64 {
        let g = |s: f64| {
            let d = s.powi(k);
            f(at + dir * d, d, at) * k as f64 * s.powi(k - 1)
        };
        integrate(g, 0.0, reach.powf(1.0 / k as f64), QuadOpts::tol(1e-14, 1e-12)).unwrap().value
    }

    // Independent oracle: the raw integrand integrated between breakpoints at
    // the points and the cell boundaries.
    #[test]
    fn min_distance_matches_adaptive_quadrature() {
        let pts = [0.1, 0.35, 0.4, 0.8];
        let gamma = 0.6;
        let f = |x: f64, d: f64, at: f64| {
            pts.iter().filter(|&&p| p != at).map(|p| (x - p).abs()).fold(d, f64::min).powf(-gamma)
        };
        let breaks = [0.0, 0.1, 0.225, 0.35, 0.375, 0.4, 0.6, 0.8, 1.0];
        let direct: f64 = breaks
            .windows(2)
            .map(|w| {
                if pts.contains(&w[0]) {
                    from_point(f, w[0], 1.0, w[1] - w[0], 5)
                } else {
                    from_point(f, w[1], -1.0, w[1] - w[0], 5)
                }
            })
            .sum();
        let exact = min_distance_integral(&pts, gamma).unwrap();
        assert!((exact - direct).abs() < 1e-10, "{exact} vs {direct}");
    }

    #[test]
    fn min_distance_equispaced_ratio_is_constant() {
        let report = min_distance_growth(0.5, 64, 0, 1).unwrap();
        let expected = 2f64.sqrt() / 0.5;
        for r in &report.rows {
            assert!((r.ratio - expected).abs() < 1e-12);
        }
        assert!(report.is_stable(1.0 + 1e-12));
    }

    #[test]
    fn min_distance_random_growth_is_bounded() {
        let report = min_distance_growth(0.5, 64, 8, 3).unwrap();
        assert!(report.max_ratio.is_finite());
        assert!(report.is_stable(1.5), "{} vs {}", report.max_ratio, report.max_ratio_half);
    }

    #[test]
    fn weighted_cauchy_single_point() {
        let law = StableSpec::symmetric(1.0, 1.0).unwrap();
        let v = weighted_min_integral(&[0.0], 0.5, &law).unwrap();
        // E|Y|^{−1/2} for the standard Cauchy law is √2.
        assert!((v - 2f64.sqrt()).abs() < 1e-9, "{v}");
        let direct = 2.0
            * integrate_upper(|x| x.powf(-0.5) / (PI * (1.0 + x * x)), 0.0, QuadOpts::tol(1e-12, 1e-10)).unwrap().value;
        assert!((v - direct).abs() < 1e-4);
    }

    #[test]
    fn weighted_small_gamma_gives_mass() {
        for law in [StableSpec::symmetric(1.5, 1.0).unwrap(), StableSpec::subordinator(0.5, 1.0).unwrap()] {
            let v = weighted_min_integral(&[-0.4, 0.3, 2.0], 1e-9, &law).unwrap();
            assert!((v - 1.0).abs() < 1e-7, "{v}");
        }
    }

    #[test]
    fn weighted_gaussian_single_point() {
        // For α = 2 and one point x₀ the value is E|Y − x₀|^{−γ}.
        let law = StableSpec::symmetric(2.0, 1.0).unwrap();
        let x0 = 0.7;
        let gamma = 0.3;
        let p = |x: f64| (-0.25 * x * x).exp() / (2.0 * PI.sqrt());
        let f = |x: f64, d: f64, _: f64| p(x) * d.powf(-gamma);
        let direct = from_point(f, x0, -1.0, 20.0, 10) + from_point(f, x0, 1.0, 20.0, 10);
        let v = weighted_min_integral(&[x0], gamma, &law).unwrap();
        assert!((v - direct).abs() < 1e-8, "{v} vs {direct}");
    }

    #[test]
    fn weighted_growth_is_bounded() {
        let law = StableSpec::symmetric(1.0, 1.0).unwrap();
        let report = weighted_growth(0.5, &law, &[1, 2, 4, 8, 16, 32, 64], 3, 9).unwrap();
        assert!(report.max_ratio.is_finite());
        assert!(report.is_stable(2.0), "{} vs {}", report.max_ratio, report.max_ratio_half);
    }

    #[test]
    fn identity_one_dimensional() {
        let cov = DMatrix::from_element(1, 1, 2.3);
        let c = conditional_identity_quadrature(&cov, 0.5).unwrap();
        let expected = 2.3f64.powf(-0.25) * gaussian_abs_moment_integral(0.5) / 2.3f64.sqrt();
        assert!((c.rhs - expected).abs() < 1e-14 * expected);
        assert!(c.gap < 1e-10, "{c:?}");
    }

    #[test]
    fn identity_two_dimensional_monte_carlo() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let q = conditional_identity_quadrature(&cov, 0.5).unwrap();
        assert!(q.gap < 1e-9, "{q:?}");
        let mc = conditional_identity_monte_carlo(&cov, 0.5, 1_000_000, 17).unwrap();
        assert!(mc.gap < 1e-3, "{mc:?}");
    }

    #[test]
    fn identity_gamma_zero_is_normalization() {
        let mut rng = stream(4, &[]);
        let cov = random_covariance(3, &mut rng);
        let c = conditional_identity_quadrature(&cov, 0.0).unwrap();
        let norm = (2.0 * PI).powf(1.5) / cov.determinant().sqrt();
        assert!((c.rhs / norm - 1.0).abs() < 1e-12);
        assert!(c.gap < 1e-6, "{c:?}");
    }

    #[test]
    fn identity_rejects_singular() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(conditional_identity_rhs(&cov, 0.5).unwrap_err(), Error::SingularCovariance);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.1, 1.0]);
        assert!(conditional_identity_rhs(&bad, 0.5).is_err());
    }

    #[test]
    fn identity_random_sweep() {
        for c in identity_sweep(20, 8).unwrap() {
            assert!(c.gap < 1e-3, "{c:?}");
        }
    }
}
