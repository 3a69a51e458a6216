//! Gaussian radial-basis influence functions.
//!
//! `φ(z) = Σ_m w_m · exp(−(z−μ_m)² / (2b²))` with centres `μ_m` equally
//! spaced on `[center_min, center_max]` and bandwidth `b`. The penalty `ρ`
//! is the antiderivative of `φ` with `ρ(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagecore::Image;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfConfig {
    pub num_centers: usize,
    pub center_min: f64,
    pub center_max: f64,
    pub bandwidth: f64,
}

impl RbfConfig {
    /// Centres equally spaced on `[min, max]`, bandwidth equal to the spacing.
    pub fn spaced(num_centers: usize, center_min: f64, center_max: f64) -> Self {
        let spacing = if num_centers > 1 {
            (center_max - center_min) / (num_centers - 1) as f64
        } else {
            (center_max - center_min).abs().max(1.0)
        };
        Self {
            num_centers,
            center_min,
            center_max,
            bandwidth: spacing,
        }
    }

    /// 63 centres on `[−310, 310]`.
    pub fn full() -> Self {
        Self::spaced(63, -310.0, 310.0)
    }

    /// 31 centres on `[−310, 310]`.
    pub fn desk() -> Self {
        Self::spaced(31, -310.0, 310.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_centers == 0 {
            return Err(Error::InvalidModel("rbf needs at least one centre".into()));
        }
        if !(self.bandwidth > 0.0) || !self.bandwidth.is_finite() {
            return Err(Error::InvalidModel(format!(
                "rbf bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        if !self.center_min.is_finite() || !self.center_max.is_finite() || self.center_max < self.center_min {
            return Err(Error::InvalidModel("rbf centre range is invalid".into()));
        }
        if self.num_centers > 1 && self.center_max == self.center_min {
            return Err(Error::InvalidModel("rbf centres must be distinct".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        if self.num_centers > 1 {
            (self.center_max - self.center_min) / (self.num_centers - 1) as f64
        } else {
            0.0
        }
    }

    #[inline]
    pub fn center(&self, m: usize) -> f64 {
        self.center_min + m as f64 * self.spacing()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.num_centers).map(|m| self.center(m)).collect()
    }

    /// All basis values `g_m(z)` into `out` (length `num_centers`).
    /// Centres more than a window half-width from `z` are set to zero; see
    /// [`RbfWindow`].
    pub fn basis_row(&self, z: f64, out: &mut [f64]) {
        let win = RbfWindow::new(self);
        let mut g = vec![0.0; win.len()];
        let m0 = win.eval(z, &mut g).0;
        out[..self.num_centers].iter_mut().for_each(|o| *o = 0.0);
        for (i, gv) in g.iter().enumerate() {
            let m = (m0 + i) as isize - win.half as isize;
            if m >= 0 && (m as usize) < self.num_centers {
                out[m as usize] = *gv;
            }
        }
    }

    /// `∫₀^z g_m(s) ds` for every centre.
    pub fn basis_integral_row(&self, z: f64, out: &mut [f64]) {
        let b = self.bandwidth;
        let scale = b * (std::f64::consts::PI / 2.0).sqrt();
        let s2 = std::f64::consts::SQRT_2 * b;
        for (m, o) in out.iter_mut().enumerate().take(self.num_centers) {
            let mu = self.center(m);
            *o = scale * erf_diff((0.0 - mu) / s2, (z - mu) / s2);
        }
    }
}

/// `erf(x1) − erf(x0)` without cancellation in the tails.
fn erf_diff(x0: f64, x1: f64) -> f64 {
    if x0 > 0.0 && x1 > 0.0 {
        libm::erfc(x0) - libm::erfc(x1)
    } else if x0 < 0.0 && x1 < 0.0 {
        libm::erfc(-x1) - libm::erfc(-x0)
    } else {
        libm::erf(x1) - libm::erf(x0)
    }
}

/// Truncated evaluation of all Gaussians near `z`.
///
/// Only the `2·half + 1` centres around the nearest one are evaluated; the
/// first omitted Gaussian is below `e^{−36}` of the peak. Values come from
/// `g_{m0±k}(z) = g_{m0}(z) · exp(−k²d²/2b²) · E^{±k}` with
/// `E = exp(d·dz/b²)`, three exponentials per call.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RbfWindow {
    pub half: usize,
    n: usize,
    min: f64,
    d: f64,
    inv: f64,
    /// `exp(−k²d²/2b²)` for `k = 0..=half`.
    decay: Vec<f64>,
    /// `μ_{m0−half+i} − μ_{m0}`.
    pub offsets: Vec<f64>,
    fast_dz: f64,
}

impl RbfWindow {
    pub fn new(cfg: &RbfConfig) -> Self {
        let n = cfg.num_centers;
        let d = cfg.spacing();
        let inv = 0.5 / (cfg.bandwidth * cfg.bandwidth);
        let half = if n > 1 {
            ((36.0 / (d * d * inv)).sqrt() - 0.5).ceil().max(0.0) as usize
        } else {
            0
        }
        .min(n - 1);
        let decay = (0..=half).map(|k| (-((k * k) as f64) * d * d * inv).exp()).collect();
        let offsets = (0..2 * half + 1).map(|i| (i as f64 - half as f64) * d).collect();
        // keep E^half and decay products far from overflow
        let fast_dz = if half > 0 {
            (0.5 * d).min(300.0 / (2.0 * d * inv * half as f64))
        } else {
            f64::INFINITY
        };
        Self {
            half,
            n,
            min: cfg.center_min,
            d,
            inv,
            decay,
            offsets,
            fast_dz,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        2 * self.half + 1
    }

    /// Weights with `half` zeros on either side, so a window starting at
    /// padded index `m0` never leaves the array.
    pub fn pad(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n + 2 * self.half];
        out[self.half..self.half + self.n].copy_from_slice(weights);
        out
    }

    /// Fills `g[i] = g_{m0−half+i}(z)` and returns `(m0, z − μ_{m0}, g0, E)`.
    /// `(g0, E)` let [`RbfWindow::refill`] rebuild `g` without
    /// exponentials; `E` is NaN when `z` lies far outside the centre range.
    #[inline]
    pub fn eval(&self, z: f64, g: &mut [f64]) -> (usize, f64, f64, f64) {
        let m0 = if self.n == 1 {
            0
        } else {
            let pos = ((z - self.min) / self.d).round();
            if pos <= 0.0 {
                0
            } else if pos >= (self.n - 1) as f64 {
                self.n - 1
            } else {
                pos as usize
            }
        };
        let dz = z - (self.min + m0 as f64 * self.d);
        let g0 = (-dz * dz * self.inv).exp();
        let e = if dz.abs() <= self.fast_dz {
            (2.0 * self.d * dz * self.inv).exp()
        } else {
            f64::NAN
        };
        self.refill(dz, g0, e, g);
        (m0, dz, g0, e)
    }

    /// Same `g` as [`RbfWindow::eval`] from its returned parts.
    #[inline]
    pub fn refill(&self, dz: f64, g0: f64, e: f64, g: &mut [f64]) {
        let h = self.half;
        if e.is_nan() {
            for (gi, off) in g.iter_mut().zip(&self.offsets) {
                let t = dz - off;
                *gi = (-t * t * self.inv).exp();
            }
            return;
        }
        let einv = 1.0 / e;
        let (lo, hi) = g[..2 * h + 1].split_at_mut(h);
        hi[0] = g0;
        let (mut up, mut down) = (g0, g0);
        for ((u, d), c) in hi[1..].iter_mut().zip(lo.iter_mut().rev()).zip(&self.decay[1..]) {
            up *= e;
            down *= einv;
            *u = up * c;
            *d = down * c;
        }
    }
}

/// Repeated evaluation of one influence function.
#[derive(Clone, Debug)]
pub struct RbfEvaluator {
    pub(crate) window: RbfWindow,
    pub(crate) padded: Vec<f64>,
    pub(crate) inv_b2: f64,
    g: Vec<f64>,
}

impl RbfEvaluator {
    pub fn new(phi: &RbfMixture) -> Self {
        let window = RbfWindow::new(&phi.config);
        let padded = window.pad(&phi.weights);
        let g = vec![0.0; window.len()];
        Self {
            window,
            padded,
            inv_b2: 1.0 / (phi.config.bandwidth * phi.config.bandwidth),
            g,
        }
    }

    #[inline]
    pub fn value(&mut self, z: f64) -> f64 {
        let m0 = self.window.eval(z, &mut self.g).0;
        dot(&self.g, &self.padded[m0..m0 + self.g.len()])
    }

    /// `(φ(z), φ′(z))`.
    #[inline]
    pub fn value_and_deriv(&mut self, z: f64) -> (f64, f64) {
        let (v, d, _) = self.eval_full(z);
        (v, d)
    }

    /// `φ(z)`, `φ′(z)` and the window parts of [`RbfWindow::eval`]. The
    /// value is bit-identical to [`RbfEvaluator::value`].
    #[inline]
    pub(crate) fn eval_full(&mut self, z: f64) -> (f64, f64, (usize, f64, f64, f64)) {
        let parts = self.window.eval(z, &mut self.g);
        let (m0, dz) = (parts.0, parts.1);
        let w = &self.padded[m0..m0 + self.g.len()];
        let v = dot(&self.g, w);
        let mut s = 0.0;
        for ((g, w), off) in self.g.iter().zip(w).zip(&self.window.offsets) {
            s += g * w * off;
        }
        (v, (s - dz * v) * self.inv_b2, parts)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    crate::imagecore::conv::dot(a, b)
}

/// One influence function: shared centre layout plus its own weights.
#[derive(Clone, Debug, PartialEq)]
pub struct RbfMixture {
    pub config: RbfConfig,
    pub weights: Vec<f64>,
}

impl RbfMixture {
    pub fn new(config: RbfConfig, weights: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if weights.len() != config.num_centers {
            return Err(Error::DimensionMismatch(format!(
                "{} rbf weights for {} centres",
                weights.len(),
                config.num_centers
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidModel("rbf weights must be finite".into()));
        }
        Ok(Self { config, weights })
    }

    pub fn zeros(config: RbfConfig) -> Self {
        Self {
            config,
            weights: vec![0.0; config.num_centers],
        }
    }

    /// Least-squares weights reproducing `target` on a dense grid over the
    /// centre range, with a tiny ridge term for conditioning.
    pub fn fit(config: RbfConfig, target: impl Fn(f64) -> f64) -> Result<Self> {
        config.validate()?;
        let n = config.num_centers;
        let samples = 8 * n + 1;
        let (lo, hi) = (config.center_min, config.center_max);
        let mut gram = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        let mut row = vec![0.0; n];
        for s in 0..samples {
            let z = if samples > 1 {
                lo + (hi - lo) * s as f64 / (samples - 1) as f64
            } else {
                lo
            };
            config.basis_row(z, &mut row);
            let y = target(z);
            for i in 0..n {
                rhs[i] += row[i] * y;
                for j in 0..n {
                    gram[i * n + j] += row[i] * row[j];
                }
            }
        }
        let ridge = 1e-12 * (0..n).map(|i| gram[i * n + i]).fold(0.0, f64::max);
        for i in 0..n {
            gram[i * n + i] += ridge;
        }
        let weights = cholesky_solve(&mut gram, &mut rhs, n)
            .ok_or_else(|| Error::Numerical("rbf least-squares system is not positive definite".into()))?;
        Self::new(config, weights)
    }

    pub fn evaluator(&self) -> RbfEvaluator {
        RbfEvaluator::new(self)
    }

    pub fn value(&self, z: f64) -> f64 {
        self.evaluator().value(z)
    }

    pub fn deriv(&self, z: f64) -> f64 {
        self.evaluator().value_and_deriv(z).1
    }

    /// Penalty `ρ(z) = ∫₀^z φ(s) ds`.
    pub fn penalty(&self, z: f64) -> f64 {
        let mut row = vec![0.0; self.config.num_centers];
        self.config.basis_integral_row(z, &mut row);
        row.iter().zip(&self.weights).map(|(g, w)| g * w).sum()
    }

    /// `φ` applied to a slice.
    pub fn apply(&self, z: &[f64], out: &mut [f64]) {
        let mut ev = self.evaluator();
        for (o, &v) in out.iter_mut().zip(z) {
            *o = ev.value(v);
        }
    }
}

/// Elementwise `φ(z)`.
pub fn rbf_eval(phi: &RbfMixture, z: &Image) -> Image {
    let mut ev = phi.evaluator();
    z.map(|v| ev.value(v))
}

/// Elementwise `φ′(z)`.
pub fn rbf_eval_deriv(phi: &RbfMixture, z: &Image) -> Image {
    let mut ev = phi.evaluator();
    z.map(|v| ev.value_and_deriv(v).1)
}

/// In-place Cholesky solve of a dense SPD system; `None` if not SPD.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], n: usize) -> Option<Vec<f64>> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 {
            return None;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Some(b.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagecore::rng::SplitMix64;

    fn random_mixture(rng: &mut SplitMix64) -> RbfMixture {
        let cfg = RbfConfig::desk();
        RbfMixture::new(cfg, (0..cfg.num_centers).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Direct sum of Gaussians, one exponential per centre.
    fn naive_value(phi: &RbfMixture, z: f64) -> f64 {
        let b = phi.config.bandwidth;
        (0..phi.config.num_centers)
            .map(|m| {
                let d = z - phi.config.center(m);
                phi.weights[m] * (-d * d / (2.0 * b * b)).exp()
            })
            .sum()
    }

    /// Adaptive Simpson quadrature.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn zero_weights_give_zero() {
        let phi = RbfMixture::zeros(RbfConfig::desk());
        let z = Image::from_fn(4, 4, |x, y| x as f64 * 30.0 - y as f64 * 17.0).unwrap();
        assert!(rbf_eval(&phi, &z).data().iter().all(|&v| v == 0.0));
        assert!(rbf_eval_deriv(&phi, &z).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_centre_peak_and_stationary_point() {
        let cfg = RbfConfig {
            num_centers: 1,
            center_min: 0.0,
            center_max: 0.0,
            bandwidth: 10.0,
        };
        let phi = RbfMixture::new(cfg, vec![1.0]).unwrap();
        assert_eq!(phi.value(0.0), 1.0);
        assert_eq!(phi.deriv(0.0), 0.0);
    }

    #[test]
    fn recurrence_matches_naive_sum() {
        let mut rng = SplitMix64::new(17);
        for _ in 0..20 {
            let phi = random_mixture(&mut rng);
            let scale: f64 = phi.weights.iter().map(|w| w.abs()).sum();
            for _ in 0..200 {
                let z = (rng.next_f64() - 0.5) * 900.0;
                let fast = phi.value(z);
                let slow = naive_value(&phi, z);
                assert!((fast - slow).abs() <= 1e-14 * scale.max(1.0), "z={z}: {fast} vs {slow}");
            }
        }
    }

    #[test]
    fn derivative_matches_central_differences() {
        let mut rng = SplitMix64::new(23);
        let phi = random_mixture(&mut rng);
        let h = 1e-4;
        for _ in 0..200 {
            let z = (rng.next_f64() - 0.5) * 600.0;
            let fd = (phi.value(z + h) - phi.value(z - h)) / (2.0 * h);
            let an = phi.deriv(z);
            let scale = an.abs().max(1e-3);
            assert!((fd - an).abs() / scale < 1e-6, "z={z}: {fd} vs {an}");
        }
    }

    #[test]
    fn penalty_matches_quadrature() {
        let cfg = RbfConfig::desk();
        let mut w = vec![0.0; cfg.num_centers];
        w[19] = 1.7;
        let phi = RbfMixture::new(cfg, w).unwrap();
        for z in [-250.0, -40.0, 0.0, 5.5, 80.0, 133.3, 300.0] {
            let quad = simpson(&|s| phi.value(s), 0.0, z, 1e-13);
            let closed = phi.penalty(z);
            let denom = quad.abs().max(1e-300);
            if z == 0.0 {
                assert_eq!(closed, 0.0);
            } else {
                assert!((closed - quad).abs() / denom < 1e-8, "z={z}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn least_squares_fit_reproduces_a_line() {
        let phi = RbfMixture::fit(RbfConfig::desk(), |z| 0.01 * z).unwrap();
        for z in [-200.0, -50.0, 0.0, 10.0, 150.0] {
            assert!((phi.value(z) - 0.01 * z).abs() < 0.02, "z={z}: {}", phi.value(z));
        }
    }
}
