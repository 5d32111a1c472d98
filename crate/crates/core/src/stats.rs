//! Statistical helpers: Gaussian and Kolmogorov distributions, one- and
//! two-sample KS distances, the energy two-sample test, and linear fits.

use rand::seq::SliceRandom;
use rand::Rng;

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// One-sample Kolmogorov–Smirnov distance sup |F_n − F|.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xs.len() && j < ys.len() {
        let v = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS distance at level `level`.
pub fn ks_two_sample_critical(n: usize, m: usize, level: f64) -> f64 {
    let c = (-(0.5 * level).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// Asymptotic critical value of the one-sample KS distance at level `level`.
pub fn ks_one_sample_critical(n: usize, level: f64) -> f64 {
    (-(0.5 * level).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Result of a permutation test.
#[derive(Clone, Copy, Debug)]
pub struct PermutationTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// Székely–Rizzo energy two-sample test on vectors, p-value by permutation.
pub fn energy_test<R: Rng>(a: &[Vec<f64>], b: &[Vec<f64>], permutations: usize, rng: &mut R) -> PermutationTest {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let n_all = pooled.len();
    let mut dist = vec![0.0f64; n_all * n_all];
    for i in 0..n_all {
        for j in (i + 1)..n_all {
            let d = pooled[i].iter().zip(pooled[j]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            dist[i * n_all + j] = d;
            dist[j * n_all + i] = d;
        }
    }
    let n = a.len();
    let stat = |labels: &[usize]| -> f64 {
        let (xs, ys) = labels.split_at(n);
        let m = ys.len();
        let mut between = 0.0;
        for &i in xs {
            for &j in ys {
                between += dist[i * n_all + j];
            }
        }
        let within = |idx: &[usize]| -> f64 {
            let mut s = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                for &j in &idx[k + 1..] {
                    s += dist[i * n_all + j];
                }
            }
            2.0 * s
        };
        let e = 2.0 * between / (n * m) as f64 - within(xs) / (n * n) as f64 - within(ys) / (m * m) as f64;
        e * (n * m) as f64 / (n + m) as f64
    };
    let mut labels: Vec<usize> = (0..n_all).collect();
    let observed = stat(&labels);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if stat(&labels) >= observed {
            exceed += 1;
        }
    }
    PermutationTest { statistic: observed, p_value: (exceed + 1) as f64 / (permutations + 1) as f64 }
}

/// Straight-line fit y ≈ intercept + slope·x with standard errors.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

impl LinearFit {
    /// Two-sided interval slope ± z·se.
    pub fn slope_interval(&self, z: f64) -> (f64, f64) {
        (self.slope - z * self.slope_se, self.slope + z * self.slope_se)
    }
}

/// Weighted least squares with known observation variances; standard errors
/// come from (XᵀWX)⁻¹ with W = diag(1/var).
pub fn weighted_fit(x: &[f64], y: &[f64], var: &[f64]) -> LinearFit {
    let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for ((&xi, &yi), &vi) in x.iter().zip(y).zip(var) {
        let w = 1.0 / vi;
        sw += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    LinearFit { slope, intercept, slope_se: (sw / det).sqrt(), intercept_se: (sxx / det).sqrt() }
}

/// Ordinary least squares with residual-variance standard errors.
pub fn ols_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = if n > 2.0 { rss / (n - 2.0) } else { 0.0 };
    LinearFit { slope, intercept, slope_se: (s2 / sxx).sqrt(), intercept_se: (s2 * (1.0 / n + mx * mx / sxx)).sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn ks_distances() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!(ks_one_sample(&xs, |x| x.clamp(0.0, 1.0)) <= 0.005 + 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| x + 0.5).collect();
        assert!((ks_two_sample(&xs, &ys) - 0.5).abs() <= 0.01 + 1e-12);
        assert_eq!(ks_two_sample(&xs, &xs), 0.0);
        assert!((ks_two_sample_critical(10_000, 10_000, 0.01) - 0.023_018).abs() < 1e-5);
    }

    #[test]
    fn fits_recover_lines() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = ols_fit(&x, &y);
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept - 1.0).abs() < 1e-14);
        let g = weighted_fit(&x, &y, &[1.0, 2.0, 3.0, 4.0]);
        assert!((g.slope - 2.0).abs() < 1e-14 && (g.intercept - 1.0).abs() < 1e-14);
    }

    #[test]
    fn energy_test_separates_shifted_samples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let a: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 60.0]).collect();
        let b: Vec<Vec<f64>> = (0..60).map(|i| vec![1.0 + i as f64 / 60.0]).collect();
        assert!(energy_test(&a, &b, 99, &mut rng).p_value < 0.02);
        let c: Vec<Vec<f64>> = (0..60).map(|i| vec![(i as f64 + 0.5) / 60.0]).collect();
        assert!(energy_test(&a, &c, 99, &mut rng).p_value > 0.2);
    }
}
