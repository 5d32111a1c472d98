//! Strictly α-stable laws.
//!
//! Two kinds are supported:
//! * symmetric: E e^{izY(t)} = exp(−tσ|z|^α), α ∈ (0, 2];
//! * subordinator: E e^{−λY(t)} = exp(−tσλ^α), α ∈ (0, 1).
//!
//! In both cases Y(t) has the law of (σt)^{1/α}·S with S standard. Densities use
//! closed forms for the Gaussian, Cauchy and one-sided ½-stable laws, and
//! otherwise Zolotarev's (symmetric) or Kanter's (one-sided) integral
//! representations, which have positive, non-oscillating integrands:
//!
//! p_S(x) = c/x · ∫ h(θ)·e^{−h(θ)} dθ,   h(θ) = x^{α/(α−1)}·V(θ).

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Exp1, Open01, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::quad::{integrate, integrate_upper, QuadOpts};
use crate::rng::{stream, Role, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StableKind {
    Symmetric,
    Subordinator,
}

/// Validated parameters of a strictly stable law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StableSpec {
    alpha: f64,
    sigma: f64,
    kind: StableKind,
}

impl StableSpec {
    pub fn new(alpha: f64, sigma: f64, kind: StableKind) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(invalid("alpha", format!("{alpha} out of (0,2]")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", format!("{sigma} must be positive")));
        }
        if kind == StableKind::Subordinator && alpha >= 1.0 {
            return Err(invalid("alpha", format!("{alpha}: a stable subordinator needs alpha < 1")));
        }
        Ok(Self { alpha, sigma, kind })
    }

    pub fn symmetric(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(alpha, sigma, StableKind::Symmetric)
    }

    pub fn subordinator(alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(alpha, sigma, StableKind::Subordinator)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn kind(&self) -> StableKind {
        self.kind
    }

    pub fn is_subordinator(&self) -> bool {
        self.kind == StableKind::Subordinator
    }

    /// Scale factor (σt)^{1/α} mapping the standard law to Y(t).
    pub fn scale_at(&self, t: f64) -> f64 {
        (self.sigma * t).powf(1.0 / self.alpha)
    }

    /// Characteristic exponent ψ with E e^{izY(t)} = exp(tψ(z)).
    pub fn psi(&self, z: f64) -> Complex64 {
        let m = self.sigma * z.abs().powf(self.alpha);
        match self.kind {
            StableKind::Symmetric => Complex64::new(-m, 0.0),
            StableKind::Subordinator => {
                let phase = FRAC_PI_2 * self.alpha * z.signum();
                -m * Complex64::new(phase.cos(), -phase.sin())
            }
        }
    }

    /// Laplace exponent Φ(λ) = σλ^α of a subordinator, E e^{−λY(t)} = e^{−tΦ(λ)}.
    pub fn laplace_exponent(&self, lambda: f64) -> Option<f64> {
        self.is_subordinator().then(|| self.sigma * lambda.powf(self.alpha))
    }

    /// One standard variate (σt = 1) by the Chambers–Mallows–Stuck transform.
    pub fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let a = self.alpha;
        match self.kind {
            StableKind::Symmetric if a == 2.0 => std::f64::consts::SQRT_2 * rng.sample::<f64, _>(StandardNormal),
            StableKind::Symmetric if a == 1.0 => {
                let u: f64 = rng.sample(Open01);
                (PI * (u - 0.5)).tan()
            }
            StableKind::Symmetric => {
                let u: f64 = rng.sample(Open01);
                let w: f64 = rng.sample(Exp1);
                let v = PI * (u - 0.5);
                let av = v.abs();
                let ln =
                    (a * av).sin().ln() - (av.cos()).ln() / a + (1.0 - a) / a * (((1.0 - a) * av).cos().ln() - w.ln());
                v.signum() * ln.exp()
            }
            StableKind::Subordinator => {
                let u: f64 = rng.sample(Open01);
                let w: f64 = rng.sample(Exp1);
                let v = PI * u;
                let ln = (a * v).sin().ln() - v.sin().ln() / a + (1.0 - a) / a * (((1.0 - a) * v).sin().ln() - w.ln());
                ln.exp()
            }
        }
    }

    /// One draw of Y(t).
    pub fn sample<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        self.scale_at(t) * self.sample_standard(rng)
    }

    /// Density p_t(x) of Y(t).
    pub fn density(&self, t: f64, x: f64) -> Result<f64> {
        check_time(t)?;
        let s = self.scale_at(t);
        Ok(self.standard_density(x / s)? / s)
    }

    /// Distribution function P(Y(t) ≤ x).
    pub fn cdf(&self, t: f64, x: f64) -> Result<f64> {
        check_time(t)?;
        let z = x / self.scale_at(t);
        match self.kind {
            StableKind::Subordinator => {
                if z <= 0.0 {
                    Ok(0.0)
                } else {
                    Ok(1.0 - self.standard_upper_tail(z)?)
                }
            }
            StableKind::Symmetric => {
                let tail = self.standard_upper_tail(z.abs())?;
                Ok(if z >= 0.0 { 1.0 - tail } else { tail })
            }
        }
    }

    /// P(|Y(t)| > u), computed without cancellation for large u.
    pub fn abs_tail(&self, t: f64, u: f64) -> Result<f64> {
        check_time(t)?;
        if u <= 0.0 {
            return Ok(1.0);
        }
        let z = u / self.scale_at(t);
        let one = self.standard_upper_tail(z)?;
        Ok(if self.is_subordinator() { one } else { 2.0 * one })
    }

    fn standard_density(&self, x: f64) -> Result<f64> {
        let a = self.alpha;
        match self.kind {
            StableKind::Subordinator => {
                if x <= 0.0 {
                    return Ok(0.0);
                }
                if a == 0.5 {
                    return Ok((-0.25 / x).exp() / (2.0 * PI.sqrt() * x.powf(1.5)));
                }
                if let Some(v) = large_x_series(self, x, false) {
                    return Ok(v);
                }
                let q = zolotarev(self, x, Integrand::Density)?;
                Ok(a / ((1.0 - a) * PI * x) * q)
            }
            StableKind::Symmetric => {
                if a == 2.0 {
                    return Ok((-0.25 * x * x).exp() / (2.0 * PI.sqrt()));
                }
                if a == 1.0 {
                    return Ok(1.0 / (PI * (1.0 + x * x)));
                }
                let x = x.abs();
                // For α < 1 the expansion at 0 is only asymptotic; use p(0)
                // once its first correction is below double precision.
                let flat = a < 1.0 && x * x * libm::tgamma(3.0 / a) / (2.0 * libm::tgamma(1.0 / a)) < 1e-17;
                if flat {
                    return Ok(symmetric_small_x(a, 0.0));
                }
                if x == 0.0 || (a > 1.0 && x < 1e-3) {
                    return Ok(symmetric_small_x(a, x));
                }
                if let Some(v) = large_x_series(self, x, false) {
                    return Ok(v);
                }
                let q = zolotarev(self, x, Integrand::Density)?;
                Ok(a / (PI * (a - 1.0).abs() * x) * q)
            }
        }
    }

    /// P(S > x) for x > 0 in standard units.
    fn standard_upper_tail(&self, x: f64) -> Result<f64> {
        let a = self.alpha;
        if x <= 0.0 {
            return Ok(if self.is_subordinator() { 1.0 } else { 0.5 });
        }
        let closed = (self.is_subordinator() && a == 0.5) || a == 1.0 || a == 2.0;
        if !closed {
            if let Some(v) = large_x_series(self, x, true) {
                return Ok(v);
            }
        }
        match self.kind {
            StableKind::Subordinator if a == 0.5 => Ok(libm::erf(0.5 / x.sqrt())),
            StableKind::Subordinator => Ok(zolotarev(self, x, Integrand::Complement)? / PI),
            StableKind::Symmetric if a == 2.0 => Ok(0.5 * libm::erfc(0.5 * x)),
            StableKind::Symmetric if a == 1.0 => Ok((1.0 / x).atan() / PI),
            StableKind::Symmetric if a > 1.0 => Ok(zolotarev(self, x, Integrand::Survival)? / PI),
            StableKind::Symmetric => Ok(zolotarev(self, x, Integrand::Complement)? / PI),
        }
    }

    /// Density by Fourier inversion of the characteristic function, integrated
    /// panel by panel between oscillation nodes up to the envelope truncation
    /// point where |exp(ψ)| < 1e−17. Used as an independent cross-check.
    pub fn density_fourier(&self, t: f64, x: f64, max_panels: usize) -> Result<f64> {
        check_time(t)?;
        let s = self.scale_at(t);
        let z = x / s;
        let a = self.alpha;
        let (damp, rot) = match self.kind {
            StableKind::Symmetric => (1.0, 0.0),
            StableKind::Subordinator => ((FRAC_PI_2 * a).cos(), (FRAC_PI_2 * a).sin()),
        };
        let f = |k: f64| {
            let ka = k.powf(a);
            (-ka * damp).exp() * (k * z - ka * rot).cos()
        };
        let cutoff = (41.0 / damp).powf(1.0 / a);
        let width = if z.abs() > 1.0 { PI / z.abs() } else { PI };
        let panels = (cutoff / width).ceil() as usize;
        if panels > max_panels {
            return Err(Error::Inversion {
                x,
                reason: format!("{panels} oscillation panels needed, cap {max_panels}"),
            });
        }
        let opts = QuadOpts::tol(1e-15, 1e-12);
        let mut total = 0.0;
        for p in 0..panels {
            let lo = p as f64 * width;
            let q = integrate(f, lo, (lo + width).min(cutoff), opts)
                .map_err(|e| Error::Inversion { x, reason: e.to_string() })?;
            total += q.value;
        }
        Ok(total / (PI * s))
    }

    /// Asymptotic tail constant k = lim u^α P(|Y(1)| > u).
    ///
    /// Evaluates g(u) = u^α·P(|Y(1)| > u) on a geometric u-grid by integrating
    /// the density tail, then extrapolates g to u = ∞ by Neville's scheme in
    /// the variable u^{−α}, in which the tail admits a power series.
    pub fn tail_constant_k(&self) -> Result<f64> {
        if self.alpha == 2.0 {
            return Err(Error::NoPowerTail("the Gaussian law (alpha = 2) has no power tail".into()));
        }
        let a = self.alpha;
        // Start where u^{−α} is already below 1/4 so the series is well inside its range.
        let u0 = 4f64.powf(1.0 / a).max(4.0);
        let ratio = 2f64.powf(1.0 / a);
        let opts = QuadOpts::tol(0.0, 1e-11);
        let mut hs = Vec::new();
        let mut gs = Vec::new();
        for j in 0..7 {
            let u = u0 * ratio.powi(j);
            let side = integrate_upper(
                |v: f64| {
                    let y = u * v.exp();
                    self.density(1.0, y).unwrap_or(f64::NAN) * y
                },
                0.0,
                opts,
            )?
            .value;
            let tail = if self.is_subordinator() { side } else { 2.0 * side };
            hs.push(u.powf(-a));
            gs.push(u.powf(a) * tail);
        }
        Ok(neville_at_zero(&hs, &gs))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid("t", format!("{t} must be positive")))
    }
}

/// Polynomial extrapolation of the points (h_i, g_i) to h = 0.
pub(crate) fn neville_at_zero(h: &[f64], g: &[f64]) -> f64 {
    let mut p = g.to_vec();
    let n = p.len();
    for k in 1..n {
        for i in 0..n - k {
            p[i] = (h[i + k] * p[i] - h[i] * p[i + 1]) / (h[i + k] - h[i]);
        }
    }
    p[0]
}

/// Power series of the symmetric density at small x, convergent for α > 1.
fn symmetric_small_x(a: f64, x: f64) -> f64 {
    let mut sum = 0.0;
    let mut x2k = 1.0;
    let mut fact = 1.0;
    for k in 0..12 {
        if k > 0 {
            fact *= ((2 * k - 1) * (2 * k)) as f64;
            x2k *= x * x;
        }
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * libm::tgamma((2 * k + 1) as f64 / a) / fact * x2k;
    }
    sum / (PI * a)
}

/// Large-x expansion of the standard density (or of P(S > x) when `tail`):
/// p(x) = (1/π) Σ_k (−1)^{k+1} Γ(αk+1)/k! · sin(kπα·c) · x^{−αk−1},
/// with c = ½ (symmetric) or 1 (subordinator). Convergent for α < 1,
/// asymptotic for α > 1; used only where x^{−α} ≤ 0.01 and the terms fall
/// below 1e−16 of the sum.
fn large_x_series(spec: &StableSpec, x: f64, tail: bool) -> Option<f64> {
    let a = spec.alpha;
    let r = x.powf(-a);
    if r > if a > 1.0 { 1e-3 } else { 1e-2 } {
        return None;
    }
    let c = if spec.is_subordinator() { 1.0 } else { 0.5 };
    let mut sum = 0.0;
    let mut xk = 1.0;
    let mut ln_fact = 0.0;
    for k in 1..80 {
        let kf = k as f64;
        ln_fact += kf.ln();
        xk *= r;
        let g = if tail { libm::lgamma(a * kf) } else { libm::lgamma(a * kf + 1.0) };
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let magnitude = (g - ln_fact).exp() * xk;
        sum += sign * magnitude * (kf * PI * a * c).sin();
        if magnitude <= 1e-17 * sum.abs() {
            let scale = if tail { 1.0 } else { 1.0 / x };
            return Some(sum * scale / PI);
        }
    }
    None
}

#[derive(Clone, Copy)]
enum Integrand {
    /// h·e^{−h}
    Density,
    /// e^{−h}
    Survival,
    /// 1 − e^{−h}
    Complement,
}

/// ∫ w(h(θ)) dθ over the Zolotarev (symmetric, θ ∈ (0, π/2)) or Kanter
/// (subordinator, θ ∈ (0, π)) range, split where h = 1.
fn zolotarev(spec: &StableSpec, x: f64, which: Integrand) -> Result<f64> {
    let a = spec.alpha;
    let (upper, ln_h): (f64, Box<dyn Fn(f64) -> f64>) = match spec.kind {
        StableKind::Symmetric => {
            let e = a / (a - 1.0);
            let lx = e * x.ln();
            (
                FRAC_PI_2,
                Box::new(move |th: f64| {
                    let c = th.cos();
                    lx + e * (c.ln() - (a * th).sin().ln()) + ((a - 1.0) * th).cos().ln() - c.ln()
                }),
            )
        }
        StableKind::Subordinator => {
            let e = a / (1.0 - a);
            let lx = -e * x.ln();
            (
                PI,
                Box::new(move |ph: f64| {
                    lx + e * (a * ph).sin().ln() + ((1.0 - a) * ph).sin().ln() - ph.sin().ln() / (1.0 - a)
                }),
            )
        }
    };
    let w = |th: f64| -> f64 {
        let lh = ln_h(th);
        let v = match which {
            Integrand::Density => {
                if lh > 7.0 {
                    // h e^{−h} underflows smoothly; avoid exp overflow.
                    (lh - lh.exp()).exp()
                } else {
                    let h = lh.exp();
                    h * (-h).exp()
                }
            }
            Integrand::Survival => (-lh.exp()).exp(),
            Integrand::Complement => -(-lh.exp()).exp_m1(),
        };
        if v.is_nan() {
            0.0
        } else {
            v
        }
    };
    // h is monotone on the range; locate the crossing h = 1 by bisection.
    let (mut lo, mut hi) = (0.0f64, upper);
    let (f_lo, f_hi) = (ln_h(upper * 1e-290), ln_h(upper * (1.0 - 1e-15)));
    let increasing = f_hi > f_lo;
    let mut breaks = vec![0.0, upper];
    let mut peak = upper;
    if f_lo.signum() != f_hi.signum() {
        for _ in 0..1100 {
            let mid = 0.5 * (lo + hi);
            let above = ln_h(mid) > 0.0;
            if above == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo < 1e-15 * lo.min(upper - hi).max(1e-300) {
                break;
            }
        }
        peak = 0.5 * (lo + hi);
        breaks = vec![0.0, peak, upper];
        // A crossing close to an end makes the integrand a spike of width
        // comparable to that distance; geometric breaks keep it resolved.
        let (gap, from_left) = if peak < upper - peak { (peak, true) } else { (upper - peak, false) };
        if gap < 0.05 * upper {
            let mut extra = Vec::new();
            let mut g = gap * 2.0;
            while g < 0.5 * upper {
                extra.push(g);
                g *= 2.0;
            }
            let mut g = gap * 0.5;
            for _ in 0..60 {
                if g < 1e-300 {
                    break;
                }
                extra.push(g);
                g *= 0.5;
            }
            breaks.extend(extra.into_iter().map(|g| if from_left { g } else { upper - g }));
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
        }
    }
    let piece = |a: f64, b: f64, abs_tol: f64| {
        let opts = QuadOpts { abs_tol, rel_tol: 1e-12, max_intervals: 4000 };
        integrate(w, a, b, opts).map(|q| q.value).map_err(|e| Error::Inversion { x, reason: e.to_string() })
    };
    // The pieces next to the crossing carry the mass; they fix the absolute
    // tolerance for the remote ones.
    let k = breaks.iter().position(|&b| b == peak).unwrap_or(1).max(1);
    let mut total = piece(breaks[k - 1], breaks[k], 1e-300)?;
    if k + 1 < breaks.len() {
        total += piece(breaks[k], breaks[k + 1], 1e-300)?;
    }
    let floor = (1e-14 * total.abs()).max(1e-300);
    for (i, pair) in breaks.windows(2).enumerate() {
        if i + 1 != k && i != k {
            total += piece(pair[0], pair[1], floor)?;
        }
    }
    Ok(total)
}

/// One sampled path of Y on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StablePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

/// Checks that `times` starts at 0 and increases strictly.
pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(invalid("times", "grid must start at 0"));
    }
    if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
        return Err(invalid("times", "grid must be strictly increasing and finite"));
    }
    Ok(())
}

/// Path of Y on `times` from the given rng: independent increments with law
/// Y(Δt).
pub fn sample_stable_path_with<R: Rng + ?Sized>(spec: &StableSpec, times: &[f64], rng: &mut R) -> Result<StablePath> {
    validate_grid(times)?;
    let mut values = Vec::with_capacity(times.len());
    let mut y = 0.0;
    values.push(0.0);
    for w in times.windows(2) {
        y += spec.sample(w[1] - w[0], rng);
        values.push(y);
    }
    Ok(StablePath { times: times.to_vec(), values })
}

/// Path of Y on `times`, deterministic in (spec, times, seed).
pub fn sample_stable_path(spec: &StableSpec, times: &[f64], seed: u64) -> Result<StablePath> {
    let mut rng: StreamRng = stream(seed, &[Role::Stable as u64]);
    sample_stable_path_with(spec, times, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;

    fn levy_density(x: f64) -> f64 {
        (-0.25 / x).exp() / (2.0 * PI.sqrt() * x.powf(1.5))
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(StableSpec::symmetric(2.5, 1.0).is_err());
        assert!(StableSpec::symmetric(0.0, 1.0).is_err());
        assert!(StableSpec::symmetric(1.0, 0.0).is_err());
        assert!(StableSpec::subordinator(1.0, 1.0).is_err());
        assert!(StableSpec::subordinator(0.7, 1.0).is_ok());
    }

    #[test]
    fn cauchy_density_at_zero() {
        let s = StableSpec::symmetric(1.0, 1.0).unwrap();
        assert!((s.density(1.0, 0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn kanter_matches_levy_closed_form() {
        // Perturb α slightly off ½ and compare the integral route at α = ½
        // through a spec built to bypass the closed form.
        let spec = StableSpec { alpha: 0.5, sigma: 1.0, kind: StableKind::Subordinator };
        for &x in &[0.01, 0.1, 0.5, 1.0, 3.0, 20.0, 400.0] {
            let q = zolotarev(&spec, x, Integrand::Density).unwrap();
            let p = 0.5 / (0.5 * PI * x) * q;
            let exact = levy_density(x);
            assert!((p - exact).abs() <= 1e-11 * exact.max(1e-300) + 1e-300, "x={x} {p} {exact}");
            let tail = zolotarev(&spec, x, Integrand::Complement).unwrap() / PI;
            assert!((tail - libm::erf(0.5 / x.sqrt())).abs() < 1e-12, "x={x}");
        }
    }

    #[test]
    fn zolotarev_agrees_with_fourier_route() {
        for &a in &[0.6, 0.9, 1.3, 1.5, 1.8] {
            let s = StableSpec::symmetric(a, 1.0).unwrap();
            for &x in &[0.0, 0.2, 1.0, 2.5, 7.0] {
                let p = s.density(1.0, x).unwrap();
                let f = s.density_fourier(1.0, x, 100_000).unwrap();
                assert!((p - f).abs() < 1e-9, "alpha={a} x={x}: {p} vs {f}");
            }
        }
        let s = StableSpec::subordinator(0.7, 1.0).unwrap();
        for &x in &[0.3, 1.0, 4.0] {
            let p = s.density(1.0, x).unwrap();
            let f = s.density_fourier(1.0, x, 200_000).unwrap();
            assert!((p - f).abs() < 1e-8, "sub x={x}: {p} vs {f}");
        }
        // Tiny α makes the envelope too wide to invert; this is reported.
        let s = StableSpec::subordinator(0.3, 1.0).unwrap();
        assert!(matches!(s.density_fourier(1.0, 4.0, 200_000), Err(Error::Inversion { .. })));
    }

    #[test]
    fn large_x_series_matches_integrals() {
        for s in [
            StableSpec::symmetric(1.5, 1.0).unwrap(),
            StableSpec::symmetric(0.6, 1.0).unwrap(),
            StableSpec::subordinator(0.3, 1.0).unwrap(),
        ] {
            let x = (if s.alpha > 1.0 { 1e-3f64 } else { 1e-2 }).powf(-1.0 / s.alpha) * 1.01;
            let series = large_x_series(&s, x, false).unwrap();
            let c = if s.is_subordinator() {
                s.alpha / ((1.0 - s.alpha) * PI * x)
            } else {
                s.alpha / (PI * (s.alpha - 1.0).abs() * x)
            };
            let integral = c * zolotarev(&s, x, Integrand::Density).unwrap();
            assert!((series / integral - 1.0).abs() < 1e-10, "{s:?}: {series} {integral}");
            let which = if !s.is_subordinator() && s.alpha > 1.0 { Integrand::Survival } else { Integrand::Complement };
            let t_series = large_x_series(&s, x, true).unwrap();
            let t_int = zolotarev(&s, x, which).unwrap() / PI;
            assert!((t_series / t_int - 1.0).abs() < 1e-10, "{s:?}: {t_series} {t_int}");
        }
    }

    #[test]
    fn small_x_series_is_continuous() {
        let s = StableSpec::symmetric(1.5, 1.0).unwrap();
        let below = symmetric_small_x(1.5, 1e-3);
        let above = a_density_by_integral(&s, 1e-3);
        assert!((below - above).abs() < 1e-10);
        assert!((s.density(1.0, 0.0).unwrap() - libm::tgamma(1.0 + 1.0 / 1.5) / PI).abs() < 1e-14);
    }

    #[test]
    fn narrow_peak_near_origin_for_small_alpha() {
        for a in [0.4, 0.7, 0.9] {
            let s = StableSpec::symmetric(a, 1.0).unwrap();
            let p0 = libm::tgamma(1.0 + 1.0 / a) / PI;
            for x in [1e-12, 1e-7, 1e-5] {
                let p = s.density(1.0, x).unwrap();
                assert!((p / p0 - 1.0).abs() < 1e-6, "alpha={a} x={x}: {p} vs {p0}");
            }
            let f = s.density_fourier(1.0, 1e-3, 100_000).unwrap();
            assert!((s.density(1.0, 1e-3).unwrap() - f).abs() < 1e-9);
        }
    }

    fn a_density_by_integral(s: &StableSpec, x: f64) -> f64 {
        let a = s.alpha;
        a / (PI * (a - 1.0).abs() * x) * zolotarev(s, x, Integrand::Density).unwrap()
    }

    #[test]
    fn levy_example_value() {
        let s = StableSpec::subordinator(0.5, 1.0).unwrap();
        let expect = (-0.25f64).exp() / (2.0 * PI.sqrt());
        assert!((s.density(1.0, 1.0).unwrap() - expect).abs() < 1e-15);
        assert_eq!(s.density(1.0, -1.0).unwrap(), 0.0);
        assert_eq!(s.density(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn densities_integrate_to_one() {
        let specs = [
            StableSpec::symmetric(2.0, 0.5).unwrap(),
            StableSpec::symmetric(1.5, 1.0).unwrap(),
            StableSpec::symmetric(1.0, 2.0).unwrap(),
            StableSpec::symmetric(0.7, 1.0).unwrap(),
            StableSpec::subordinator(0.5, 1.0).unwrap(),
            StableSpec::subordinator(0.25, 1.0).unwrap(),
            StableSpec::subordinator(0.75, 1.0).unwrap(),
        ];
        for s in specs {
            let opts = QuadOpts::tol(1e-12, 1e-10);
            let side = integrate_upper(|x| s.density(1.0, x).unwrap(), 0.0, opts).unwrap().value;
            let mass = if s.is_subordinator() { side } else { 2.0 * side };
            assert!((mass - 1.0).abs() < 1e-6, "{s:?}: {mass}");
        }
    }

    #[test]
    fn cdf_matches_closed_forms() {
        let c = StableSpec::symmetric(1.0, 1.0).unwrap();
        let g = StableSpec::symmetric(2.0, 1.0).unwrap();
        let l = StableSpec::subordinator(0.5, 1.0).unwrap();
        for &x in &[-3.0, -0.5, 0.0, 0.4, 2.0, 10.0] {
            assert!((c.cdf(1.0, x).unwrap() - (0.5 + x.atan() / PI)).abs() < 1e-14);
            let gx = 0.5 * libm::erfc(-x / 2.0);
            assert!((g.cdf(1.0, x).unwrap() - gx).abs() < 1e-14);
            let lx = if x > 0.0 { libm::erfc(0.5 / x.sqrt()) } else { 0.0 };
            assert!((l.cdf(1.0, x).unwrap() - lx).abs() < 1e-14);
        }
    }

    #[test]
    fn survival_integrals_match_density_integrals() {
        for s in [
            StableSpec::symmetric(1.4, 1.0).unwrap(),
            StableSpec::symmetric(0.8, 1.0).unwrap(),
            StableSpec::subordinator(0.3, 1.0).unwrap(),
        ] {
            for &x in &[0.5, 2.0, 9.0] {
                let direct = s.abs_tail(1.0, x).unwrap();
                let opts = QuadOpts::tol(1e-14, 1e-11);
                let side = integrate_upper(|y| s.density(1.0, y).unwrap(), x, opts).unwrap().value;
                let by_density = if s.is_subordinator() { side } else { 2.0 * side };
                assert!((direct - by_density).abs() < 1e-9, "{s:?} x={x}: {direct} vs {by_density}");
            }
        }
    }

    #[test]
    fn tail_constants_match_closed_forms() {
        let k = StableSpec::symmetric(1.0, 1.0).unwrap().tail_constant_k().unwrap();
        assert!((k / (2.0 / PI) - 1.0).abs() < 1e-3, "{k}");
        let k = StableSpec::subordinator(0.5, 1.0).unwrap().tail_constant_k().unwrap();
        assert!((k * PI.sqrt() - 1.0).abs() < 1e-3, "{k}");
        // Symmetric: (2/π)Γ(α)sin(πα/2)σ; subordinator: σ/Γ(1−α).
        let s = StableSpec::symmetric(1.5, 0.7).unwrap();
        let exact = 2.0 / PI * libm::tgamma(1.5) * (0.75 * PI).sin() * 0.7;
        assert!((s.tail_constant_k().unwrap() / exact - 1.0).abs() < 1e-3);
        let s = StableSpec::subordinator(0.3, 1.0).unwrap();
        let exact = 1.0 / libm::tgamma(0.7);
        assert!((s.tail_constant_k().unwrap() / exact - 1.0).abs() < 1e-3);
        assert!(matches!(StableSpec::symmetric(2.0, 1.0).unwrap().tail_constant_k(), Err(Error::NoPowerTail(_))));
    }

    #[test]
    fn samplers_match_cdfs() {
        let mut rng = stream(11, &[0]);
        let n = 20_000;
        for s in [
            StableSpec::symmetric(2.0, 1.0).unwrap(),
            StableSpec::symmetric(1.0, 1.0).unwrap(),
            StableSpec::symmetric(1.5, 1.0).unwrap(),
            StableSpec::symmetric(0.6, 1.0).unwrap(),
            StableSpec::subordinator(0.5, 1.0).unwrap(),
            StableSpec::subordinator(0.8, 2.0).unwrap(),
        ] {
            let xs: Vec<f64> = (0..n).map(|_| s.sample(0.7, &mut rng)).collect();
            let d = ks_one_sample(&xs, |x| s.cdf(0.7, x).unwrap());
            assert!(d < 0.015, "{s:?}: KS {d}");
        }
    }

    #[test]
    fn paths_validate_grids_and_subordinators_increase() {
        let s = StableSpec::subordinator(0.5, 1.0).unwrap();
        assert!(sample_stable_path(&s, &[0.0, 0.5, 0.4], 1).is_err());
        assert!(sample_stable_path(&s, &[0.1, 0.5], 1).is_err());
        let times: Vec<f64> = (0..200).map(|i| i as f64 * 0.01).collect();
        let p = sample_stable_path(&s, &times, 3).unwrap();
        assert_eq!(p.values[0], 0.0);
        assert!(p.values.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(p, sample_stable_path(&s, &times, 3).unwrap());
    }
}
