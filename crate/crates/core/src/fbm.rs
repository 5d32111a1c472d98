//! Fractional Brownian motion W with W(0) = 0 and
//! Cov(W(t), W(s)) = ½(|t|^{2H} + |s|^{2H} − |t − s|^{2H}), on the whole line.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, Role};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FbmSpec {
    hurst: f64,
}

impl FbmSpec {
    pub fn new(hurst: f64) -> Result<Self> {
        if hurst > 0.0 && hurst < 1.0 {
            Ok(Self { hurst })
        } else {
            Err(invalid("H", format!("{hurst} out of (0,1)")))
        }
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    /// True for Brownian motion, which has independent increments.
    pub fn is_brownian(&self) -> bool {
        self.hurst == 0.5
    }
}

pub fn fbm_covariance(spec: &FbmSpec, t: f64, s: f64) -> f64 {
    let e = 2.0 * spec.hurst;
    0.5 * (t.abs().powf(e) + s.abs().powf(e) - (t - s).abs().powf(e))
}

/// W sampled at strictly increasing points; one point is 0 with value 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FbmSample {
    pub points: Vec<f64>,
    pub values: Vec<f64>,
}

/// Knobs of the exact sampler.
#[derive(Clone, Copy, Debug)]
pub struct ExactOptions {
    /// Largest number of distinct points factorized exactly.
    pub cap: usize,
    /// Points closer than `merge_tol · range` are merged.
    pub merge_tol: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { cap: 4096, merge_tol: 1e-12 }
    }
}

/// Values of W at sorted `points` (duplicates allowed), drawn from `rng`.
///
/// Near-duplicate points share one value; points merged with 0 get exactly 0.
/// For H = ½ the draw uses independent Gaussian increments outward from 0,
/// which is exact and O(n); otherwise the covariance matrix is factorized.
pub fn fbm_values_at<R: Rng + ?Sized>(
    spec: &FbmSpec,
    points: &[f64],
    rng: &mut R,
    opts: ExactOptions,
) -> Result<Vec<f64>> {
    if points.iter().any(|p| !p.is_finite()) {
        return Err(invalid("points", "must be finite"));
    }
    if points.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("points", "must be sorted"));
    }
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let lo = points[0].min(0.0);
    let hi = points[points.len() - 1].max(0.0);
    let tol = opts.merge_tol * (hi - lo).max(f64::MIN_POSITIVE);

    // group[i] = index of the representative of points[i]; usize::MAX marks 0.
    let mut reps: Vec<f64> = Vec::new();
    let mut group = Vec::with_capacity(points.len());
    for &p in points {
        if p.abs() <= tol {
            group.push(usize::MAX);
        } else if reps.last().is_some_and(|&r| p - r <= tol) {
            group.push(reps.len() - 1);
        } else {
            reps.push(p);
            group.push(reps.len() - 1);
        }
    }
    let rep_values = if spec.is_brownian() {
        brownian_at(&reps, rng)
    } else {
        if reps.len() > opts.cap {
            return Err(Error::GridCap { count: reps.len(), cap: opts.cap });
        }
        let cov = DMatrix::from_fn(reps.len(), reps.len(), |i, j| fbm_covariance(spec, reps[i], reps[j]));
        let chol = factorize(cov)?;
        let z = DVector::from_fn(reps.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (chol.l() * z).iter().copied().collect()
    };
    Ok(group.iter().map(|&g| if g == usize::MAX { 0.0 } else { rep_values[g] }).collect())
}

/// Two-sided Brownian motion at sorted nonzero points.
fn brownian_at<R: Rng + ?Sized>(reps: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; reps.len()];
    let split = reps.partition_point(|&p| p < 0.0);
    let (mut prev, mut w) = (0.0, 0.0);
    for i in split..reps.len() {
        w += (reps[i] - prev).sqrt() * rng.sample::<f64, _>(StandardNormal);
        prev = reps[i];
        out[i] = w;
    }
    let (mut prev, mut w) = (0.0, 0.0);
    for i in (0..split).rev() {
        w += (prev - reps[i]).sqrt() * rng.sample::<f64, _>(StandardNormal);
        prev = reps[i];
        out[i] = w;
    }
    out
}

/// Cholesky with a relative diagonal jitter ladder 1e−12 … 1e−8.
pub(crate) fn factorize(cov: DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    let n = cov.nrows();
    let scale = (0..n).map(|i| cov[(i, i)]).sum::<f64>() / n.max(1) as f64;
    if let Some(c) = Cholesky::new(cov.clone()) {
        return Ok(c);
    }
    for k in 0..=4 {
        let eps = 1e-12 * 10f64.powi(k) * scale;
        let mut m = cov.clone();
        for i in 0..n {
            m[(i, i)] += eps;
        }
        if let Some(c) = Cholesky::new(m) {
            return Ok(c);
        }
    }
    let min_eigenvalue = SymmetricEigen::new(cov).eigenvalues.min();
    Err(Error::Factorization { min_eigenvalue })
}

/// Exact sample of W at `points`, deterministic in `seed`. The point 0 is
/// inserted and near-duplicates are merged.
pub fn sample_fbm_at(spec: &FbmSpec, points: &[f64], seed: u64) -> Result<FbmSample> {
    sample_fbm_at_with(spec, points, seed, ExactOptions::default())
}

pub fn sample_fbm_at_with(spec: &FbmSpec, points: &[f64], seed: u64, opts: ExactOptions) -> Result<FbmSample> {
    let mut pts: Vec<f64> = points.to_vec();
    if pts.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("points", "must be sorted"));
    }
    let at = pts.partition_point(|&p| p < 0.0);
    if pts.get(at) != Some(&0.0) {
        pts.insert(at, 0.0);
    }
    let mut rng = stream(seed, &[Role::Fbm as u64]);
    let vals = fbm_values_at(spec, &pts, &mut rng, opts)?;
    let mut out = FbmSample { points: Vec::with_capacity(pts.len()), values: Vec::with_capacity(pts.len()) };
    for (p, v) in pts.into_iter().zip(vals) {
        if out.points.last() != Some(&p) {
            out.points.push(p);
            out.values.push(v);
        }
    }
    Ok(out)
}

/// How a grid sample was produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GridMethod {
    CirculantEmbedding,
    /// The embedding had a negative eigenvalue (recorded); exact factorization used.
    ExactFallback {
        min_eigenvalue: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSample {
    pub sample: FbmSample,
    pub method: GridMethod,
}

/// W on the regular grid x_k = −L + 2kL/n, k = 0..=n, by circulant embedding
/// of fractional Gaussian noise (Davies–Harte). `n` must be a power of two.
pub fn sample_fbm_grid(spec: &FbmSpec, n: usize, halfwidth: f64, seed: u64) -> Result<GridSample> {
    if n < 2 || !n.is_power_of_two() {
        return Err(invalid("n", format!("{n} must be a power of two >= 2")));
    }
    if !(halfwidth > 0.0 && halfwidth.is_finite()) {
        return Err(invalid("halfwidth", "must be positive"));
    }
    let step = 2.0 * halfwidth / n as f64;
    let points: Vec<f64> = (0..=n).map(|k| if k == n / 2 { 0.0 } else { -halfwidth + k as f64 * step }).collect();
    let e = 2.0 * spec.hurst;
    let gamma = |k: f64| 0.5 * ((k + 1.0).abs().powf(e) - 2.0 * k.abs().powf(e) + (k - 1.0).abs().powf(e));
    let m = 2 * n;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let k = if j <= n { j } else { m - j };
            Complex64::new(gamma(k as f64), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let max_l = c.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let min_l = c.iter().map(|z| z.re).fold(f64::MAX, f64::min);
    if min_l < -1e-10 * max_l {
        let sample = sample_fbm_at(spec, &points, seed)?;
        return Ok(GridSample { sample, method: GridMethod::ExactFallback { min_eigenvalue: min_l } });
    }
    let mut rng = stream(seed, &[Role::Fbm as u64, 1]);
    let mut w: Vec<Complex64> = c
        .iter()
        .map(|l| {
            let a = (l.re.max(0.0) / m as f64).sqrt();
            Complex64::new(a * rng.sample::<f64, _>(StandardNormal), a * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    fft.process(&mut w);
    let scale = step.powf(spec.hurst);
    let mut walk = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    walk.push(0.0);
    for z in w.iter().take(n) {
        acc += z.re * scale;
        walk.push(acc);
    }
    let origin = walk[n / 2];
    let values = walk.iter().map(|v| v - origin).collect::<Vec<_>>();
    Ok(GridSample { sample: FbmSample { points, values }, method: GridMethod::CirculantEmbedding })
}

/// Var(W(target) | W(y), y ∈ conditioning ∪ {0}) by Schur complement.
pub fn conditional_variance(spec: &FbmSpec, target: f64, conditioning: &[f64]) -> Result<f64> {
    let pts: Vec<f64> = conditioning.iter().copied().filter(|&y| y != 0.0).collect();
    if target == 0.0 || pts.contains(&target) {
        return Err(invalid("target", "must not belong to the conditioning set"));
    }
    let prior = fbm_covariance(spec, target, target);
    if pts.is_empty() {
        return Ok(prior);
    }
    let n = pts.len();
    let cov = DMatrix::from_fn(n, n, |i, j| fbm_covariance(spec, pts[i], pts[j]));
    let cross = DVector::from_fn(n, |i, _| fbm_covariance(spec, pts[i], target));
    let chol = Cholesky::new(cov).ok_or(Error::SingularCovariance)?;
    let v = chol.l().solve_lower_triangular(&cross).ok_or(Error::SingularCovariance)?;
    Ok((prior - v.norm_squared()).max(0.0))
}

/// Conditional variance divided by min_j |target − y_j|^{2H} with y_0 = 0.
pub fn slnd_ratio(spec: &FbmSpec, target: f64, conditioning: &[f64]) -> Result<f64> {
    let gap =
        conditioning.iter().chain(std::iter::once(&0.0)).map(|y| (target - y).abs()).fold(f64::INFINITY, f64::min);
    Ok(conditional_variance(spec, target, conditioning)? / gap.powf(2.0 * spec.hurst))
}

/// Smallest observed SLND ratio per conditioning-set size.
#[derive(Clone, Debug, Serialize)]
pub struct SlndSweep {
    pub hurst: f64,
    /// (n, min ratio) with n the number of conditioning points besides 0.
    pub min_ratio: Vec<(usize, f64)>,
}

/// Random configurations of `n` points in [−2, 2] with a random target.
pub fn slnd_sweep(spec: &FbmSpec, sizes: &[usize], configs_per_size: usize, seed: u64) -> Result<SlndSweep> {
    let mut min_ratio = Vec::new();
    for &n in sizes {
        let mut rng = stream(seed, &[Role::Aux as u64, n as u64]);
        let mut lowest = f64::INFINITY;
        for _ in 0..configs_per_size {
            let pts: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let target = rng.random_range(-2.0..2.0);
            lowest = lowest.min(slnd_ratio(spec, target, &pts)?);
        }
        min_ratio.push((n, lowest));
    }
    Ok(SlndSweep { hurst: spec.hurst, min_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{correlation, variance};

    #[test]
    fn covariance_examples() {
        let bm = FbmSpec::new(0.5).unwrap();
        assert_eq!(fbm_covariance(&bm, 1.0, 1.0), 1.0);
        assert_eq!(fbm_covariance(&bm, 1.0, -1.0), 0.0);
        let h = FbmSpec::new(0.75).unwrap();
        assert!((fbm_covariance(&h, 2.0, 1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!(FbmSpec::new(1.0).is_err() && FbmSpec::new(0.0).is_err());
    }

    #[test]
    fn bridge_conditional_variance() {
        let bm = FbmSpec::new(0.5).unwrap();
        let v = conditional_variance(&bm, 1.0, &[0.5, 1.5]).unwrap();
        assert!((v - 0.25).abs() < 1e-14);
        let h = FbmSpec::new(0.3).unwrap();
        assert!(conditional_variance(&h, 5.0, &[0.1, 0.2]).unwrap() <= fbm_covariance(&h, 5.0, 5.0));
        assert!(conditional_variance(&h, 0.2, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn sample_contains_zero() {
        let s = sample_fbm_at(&FbmSpec::new(0.3).unwrap(), &[-1.0, 0.5, 2.0], 4).unwrap();
        assert_eq!(s.points, vec![-1.0, 0.0, 0.5, 2.0]);
        assert_eq!(s.values[1], 0.0);
    }

    #[test]
    fn near_duplicates_share_values() {
        let spec = FbmSpec::new(0.7).unwrap();
        let mut rng = stream(1, &[]);
        let v = fbm_values_at(&spec, &[0.5, 0.5, 0.5 + 1e-15, 1.0], &mut rng, ExactOptions::default()).unwrap();
        assert_eq!(v[0], v[1]);
        assert_eq!(v[0], v[2]);
        assert!(fbm_values_at(&spec, &[1.0, 0.5], &mut rng, ExactOptions::default()).is_err());
    }

    #[test]
    fn grid_cap_is_enforced() {
        let spec = FbmSpec::new(0.7).unwrap();
        let pts: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let mut rng = stream(1, &[]);
        let opts = ExactOptions { cap: 10, ..Default::default() };
        assert!(matches!(fbm_values_at(&spec, &pts, &mut rng, opts), Err(Error::GridCap { count: 20, cap: 10 })));
    }

    #[test]
    fn jitter_failure_names_eigenvalue() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match factorize(m) {
            Err(Error::Factorization { min_eigenvalue }) => assert!((min_eigenvalue + 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_variance_and_increments() {
        let n = 10_000;
        let h3 = FbmSpec::new(0.3).unwrap();
        let w1: Vec<f64> = (0..n).map(|i| sample_fbm_at(&h3, &[0.4, 1.0], i).unwrap().values[2]).collect();
        let v = variance(&w1);
        assert!((0.95..=1.05).contains(&v), "{v}");

        let h7 = FbmSpec::new(0.7).unwrap();
        let inc: Vec<f64> = (0..n)
            .map(|i| {
                let s = sample_fbm_at(&h7, &[-0.8, 0.3, 1.7], i).unwrap();
                s.values[3] - s.values[0]
            })
            .collect();
        let r = variance(&inc) / 2.5f64.powf(1.4);
        assert!((0.9..=1.1).contains(&r), "{r}");

        let bm = FbmSpec::new(0.5).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for i in 0..n {
            let s = sample_fbm_at(&bm, &[0.3, 1.0, 1.2, 2.5], i).unwrap();
            a.push(s.values[2] - s.values[1]);
            b.push(s.values[4] - s.values[3]);
        }
        assert!(correlation(&a, &b).abs() < 0.03);
    }

    #[test]
    fn grid_sampler_basics() {
        let spec = FbmSpec::new(0.5).unwrap();
        let g = sample_fbm_grid(&spec, 64, 2.0, 9).unwrap();
        assert_eq!(g.method, GridMethod::CirculantEmbedding);
        assert_eq!(g.sample.points.len(), 65);
        assert_eq!(g.sample.points[32], 0.0);
        assert_eq!(g.sample.values[32], 0.0);
        assert!(sample_fbm_grid(&spec, 48, 2.0, 9).is_err());
        let n = 4000;
        let step = 4.0 / 64.0;
        let inc: Vec<f64> = (0..n)
            .map(|i| {
                let s = sample_fbm_grid(&spec, 64, 2.0, i).unwrap().sample;
                s.values[40] - s.values[39]
            })
            .collect();
        let r = variance(&inc) / step;
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn slnd_ratios_are_positive() {
        for h in [0.3, 0.5, 0.7] {
            let sweep = slnd_sweep(&FbmSpec::new(h).unwrap(), &[4, 8], 50, 3).unwrap();
            assert!(sweep.min_ratio.iter().all(|&(_, r)| r > 0.0));
        }
    }
}
