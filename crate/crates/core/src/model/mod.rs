//! The genericDP model: `T` unrolled diffusion stages sharing their
//! diffusion term across noise levels, each level keeping one reaction
//! weight per stage.
//!
//! Stage `t` maps `u_{t−1}` to
//! `u_t = u_{t−1} − ( Σ_i k̄_i ∗ φ_i(k_i ∗ u_{t−1}) + λ_j (u_{t−1} − f_j) )`,
//! the gradient-descent step on
//! `E(u) = (λ_j/2)‖u − f_j‖² + Σ_i Σ_p ρ_i((k_i ∗ u)_p)` with `φ_i = ρ_i′`.
//! Filters are linear combinations of zero-mean DCT atoms, `φ_i` are
//! Gaussian RBF mixtures, and `λ_j = exp(log_lambda[j])`.

mod basis;
mod rbf;
mod serial;

pub use basis::{dct_basis, filter_from_coeffs, FilterBasis};
pub use rbf::{rbf_eval, rbf_eval_deriv, RbfConfig, RbfEvaluator, RbfMixture};
pub use serial::{deserialize, from_json, serialize, to_json, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::imagecore::conv::{correlate_valid, correlate_valid_transpose, Padder};
use crate::imagecore::{Boundary, Image, Kernel};

/// Shape of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub num_stages: usize,
    pub filter_size: usize,
    pub num_filters: usize,
    pub sigma_grid: Vec<f64>,
    pub rbf: RbfConfig,
}

impl ModelConfig {
    /// 8 stages of 48 filters of size 7×7, noise levels 1..=50.
    pub fn full() -> Self {
        Self {
            num_stages: 8,
            filter_size: 7,
            num_filters: 48,
            sigma_grid: (1..=50).map(f64::from).collect(),
            rbf: RbfConfig::full(),
        }
    }

    /// 3 stages of 24 filters of size 5×5 for noise levels 15 and 25.
    pub fn desk() -> Self {
        Self {
            num_stages: 3,
            filter_size: 5,
            num_filters: 24,
            sigma_grid: vec![15.0, 25.0],
            rbf: RbfConfig::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_stages == 0 {
            return Err(Error::InvalidModel("a model needs at least one stage".into()));
        }
        if self.filter_size < 3 || self.filter_size % 2 == 0 {
            return Err(Error::InvalidModel(format!(
                "filter size must be odd and >= 3, got {}",
                self.filter_size
            )));
        }
        if self.num_filters == 0 {
            return Err(Error::InvalidModel("a stage needs at least one filter".into()));
        }
        if self.sigma_grid.is_empty() {
            return Err(Error::InvalidModel("sigma grid is empty".into()));
        }
        if self.sigma_grid.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidModel("sigma grid values must be positive".into()));
        }
        if self.sigma_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidModel("sigma grid must be strictly increasing".into()));
        }
        self.rbf.validate()
    }
}

/// Parameters of one stage.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    /// One coefficient vector (length `r²−1`) per filter.
    pub filter_coeffs: Vec<Vec<f64>>,
    /// One influence function per filter.
    pub influence: Vec<RbfMixture>,
    /// `log λ` per noise level.
    pub log_lambda: Vec<f64>,
}

/// Per-stage filters in the form the convolution kernels consume.
#[derive(Clone, Debug)]
pub(crate) struct PreparedStage {
    pub r: usize,
    /// 180°-rotated taps per filter.
    pub rot: Vec<Vec<f64>>,
    pub phis: Vec<RbfEvaluator>,
}

/// Influence-function values of one filter during a recorded forward pass,
/// enough for the reverse pass to run without exponentials.
#[derive(Clone, Debug, Default)]
pub(crate) struct FilterRecord {
    pub psi: Vec<f64>,
    pub dpsi: Vec<f64>,
    pub m0: Vec<u32>,
    pub dz: Vec<f64>,
    pub g0: Vec<f64>,
    pub e: Vec<f64>,
}

impl FilterRecord {
    pub fn from_responses(phi: &RbfEvaluator, z: &[f64]) -> Self {
        let mut ev = phi.clone();
        let n = z.len();
        let mut rec = FilterRecord {
            psi: vec![0.0; n],
            dpsi: vec![0.0; n],
            m0: vec![0; n],
            dz: vec![0.0; n],
            g0: vec![0.0; n],
            e: vec![0.0; n],
        };
        for (p, &zv) in z.iter().enumerate() {
            let (v, d, (m0, dz, g0, e)) = ev.eval_full(zv);
            rec.psi[p] = v;
            rec.dpsi[p] = d;
            rec.m0[p] = m0 as u32;
            rec.dz[p] = dz;
            rec.g0[p] = g0;
            rec.e[p] = e;
        }
        rec
    }
}

/// Filter responses and influence records of one stage.
#[derive(Clone, Debug, Default)]
pub(crate) struct StageRecord {
    pub responses: Vec<Vec<f64>>,
    pub filters: Vec<FilterRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenericDPModel {
    filter_size: usize,
    num_filters: usize,
    sigma_grid: Vec<f64>,
    rbf: RbfConfig,
    basis: FilterBasis,
    stages: Vec<Stage>,
    reaction: bool,
}

impl GenericDPModel {
    pub fn from_stages(config: &ModelConfig, stages: Vec<Stage>, reaction: bool) -> Result<Self> {
        config.validate()?;
        let basis = dct_basis(config.filter_size)?;
        let model = Self {
            filter_size: config.filter_size,
            num_filters: config.num_filters,
            sigma_grid: config.sigma_grid.clone(),
            rbf: config.rbf,
            basis,
            stages,
            reaction,
        };
        if model.stages.len() != config.num_stages {
            return Err(Error::InvalidModel(format!(
                "expected {} stages, found {}",
                config.num_stages,
                model.stages.len()
            )));
        }
        model.validate()?;
        Ok(model)
    }

    /// Every influence function zero and the reaction term disabled: each
    /// stage is the identity map.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut model = Self::plain(config)?;
        for stage in &mut model.stages {
            for phi in &mut stage.influence {
                phi.weights.iter_mut().for_each(|w| *w = 0.0);
            }
        }
        model.reaction = false;
        Ok(model)
    }

    /// Plain initialization: filter `i` is DCT atom `i mod (r²−1)`, every
    /// `φ` is a least-squares fit of `0.01·z`, and
    /// `λ_j = clamp(100/σ_j², 1e-3, 10)`.
    pub fn plain(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let atoms = config.filter_size * config.filter_size - 1;
        let phi = RbfMixture::fit(config.rbf, |z| 0.01 * z)?;
        let log_lambda: Vec<f64> = config
            .sigma_grid
            .iter()
            .map(|s| (100.0 / (s * s)).clamp(1e-3, 10.0).ln())
            .collect();
        let stages = (0..config.num_stages)
            .map(|_| Stage {
                filter_coeffs: (0..config.num_filters)
                    .map(|i| {
                        let mut c = vec![0.0; atoms];
                        c[i % atoms] = 1.0;
                        c
                    })
                    .collect(),
                influence: vec![phi.clone(); config.num_filters],
                log_lambda: log_lambda.clone(),
            })
            .collect();
        Self::from_stages(config, stages, true)
    }

    /// Seeded random parameters for tests and gradient checks: filter
    /// coefficients `N(0, 0.3²)`, RBF weights `N(0, 0.5²)`,
    /// `log λ ~ U(−2, 0)`.
    pub fn random(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::imagecore::rng::SplitMix64::new(seed);
        let atoms = config.filter_size * config.filter_size - 1;
        let stages = (0..config.num_stages)
            .map(|_| Stage {
                filter_coeffs: (0..config.num_filters)
                    .map(|_| (0..atoms).map(|_| 0.3 * rng.normal()).collect())
                    .collect(),
                influence: (0..config.num_filters)
                    .map(|_| RbfMixture {
                        config: config.rbf,
                        weights: (0..config.rbf.num_centers).map(|_| 0.5 * rng.normal()).collect(),
                    })
                    .collect(),
                log_lambda: (0..config.sigma_grid.len()).map(|_| -2.0 * rng.next_f64()).collect(),
            })
            .collect();
        Self::from_stages(config, stages, true)
    }

    pub fn validate(&self) -> Result<()> {
        self.config().validate()?;
        let atoms = self.basis.len();
        let m = self.sigma_grid.len();
        for (t, stage) in self.stages.iter().enumerate() {
            let ctx = |what: String| Error::InvalidModel(format!("stage {}: {what}", t + 1));
            if stage.filter_coeffs.len() != self.num_filters || stage.influence.len() != self.num_filters {
                return Err(ctx(format!(
                    "{} filters / {} influence functions, expected {}",
                    stage.filter_coeffs.len(),
                    stage.influence.len(),
                    self.num_filters
                )));
            }
            if stage.filter_coeffs.iter().any(|c| c.len() != atoms) {
                return Err(ctx(format!("filter coefficient vectors must have length {atoms}")));
            }
            if stage
                .influence
                .iter()
                .any(|p| p.config != self.rbf || p.weights.len() != self.rbf.num_centers)
            {
                return Err(ctx("influence function layout differs from the model's".into()));
            }
            if stage.log_lambda.len() != m {
                return Err(ctx(format!(
                    "{} reaction weights for {m} noise levels",
                    stage.log_lambda.len()
                )));
            }
            let finite = stage.filter_coeffs.iter().flatten().all(|v| v.is_finite())
                && stage.influence.iter().flat_map(|p| &p.weights).all(|v| v.is_finite())
                && stage.log_lambda.iter().all(|v| v.is_finite());
            if !finite {
                return Err(ctx("non-finite parameter".into()));
            }
        }
        Ok(())
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            num_stages: self.stages.len(),
            filter_size: self.filter_size,
            num_filters: self.num_filters,
            sigma_grid: self.sigma_grid.clone(),
            rbf: self.rbf,
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn filter_size(&self) -> usize {
        self.filter_size
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn num_levels(&self) -> usize {
        self.sigma_grid.len()
    }

    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma_grid
    }

    pub fn rbf_config(&self) -> RbfConfig {
        self.rbf
    }

    pub fn basis(&self) -> &FilterBasis {
        &self.basis
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Stage `t`, 1-based.
    pub fn stage(&self, t: usize) -> Result<&Stage> {
        self.check_stage(t)?;
        Ok(&self.stages[t - 1])
    }

    pub fn stage_mut(&mut self, t: usize) -> Result<&mut Stage> {
        self.check_stage(t)?;
        Ok(&mut self.stages[t - 1])
    }

    pub fn reaction_enabled(&self) -> bool {
        self.reaction
    }

    pub fn set_reaction(&mut self, enabled: bool) {
        self.reaction = enabled;
    }

    /// True when every influence function is identically zero.
    pub fn is_zero_diffusion(&self) -> bool {
        self.stages
            .iter()
            .flat_map(|s| &s.influence)
            .all(|p| p.weights.iter().all(|&w| w == 0.0))
    }

    /// Model restricted to its first `n` stages.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.stages.len() {
            return Err(Error::IndexOutOfRange(format!(
                "cannot truncate a {}-stage model to {n} stages",
                self.stages.len()
            )));
        }
        let mut m = self.clone();
        m.stages.truncate(n);
        Ok(m)
    }

    fn check_stage(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.stages.len() {
            Err(Error::IndexOutOfRange(format!("stage {t} of {}", self.stages.len())))
        } else {
            Ok(())
        }
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j >= self.sigma_grid.len() {
            Err(Error::IndexOutOfRange(format!(
                "noise level {j} of {}",
                self.sigma_grid.len()
            )))
        } else {
            Ok(())
        }
    }

    /// Reaction weight `λ_j` of stage `t` (zero when the reaction term is
    /// disabled).
    pub fn lambda(&self, t: usize, j: usize) -> Result<f64> {
        self.check_stage(t)?;
        self.check_level(j)?;
        Ok(self.lambda_unchecked(t - 1, j))
    }

    #[inline]
    pub(crate) fn lambda_unchecked(&self, idx: usize, j: usize) -> f64 {
        if self.reaction {
            self.stages[idx].log_lambda[j].exp()
        } else {
            0.0
        }
    }

    /// Grid index for a noise level: nearest level, ties toward the larger
    /// one. Accepts `σ ∈ [σ_1 − 0.5, σ_M + 0.5]`.
    pub fn level_index(&self, sigma: f64) -> Result<usize> {
        let grid = &self.sigma_grid;
        let (lo, hi) = (grid[0] - 0.5, grid[grid.len() - 1] + 0.5);
        if !(sigma >= lo && sigma <= hi) {
            return Err(Error::InvalidArgument(format!(
                "noise level {sigma} outside the supported range [{lo}, {hi}]"
            )));
        }
        let mut best = 0;
        for (j, s) in grid.iter().enumerate() {
            if (sigma - s).abs() <= (sigma - grid[best]).abs() {
                best = j;
            }
        }
        Ok(best)
    }

    /// Filter `i` (0-based) of stage `t` (1-based) as a kernel.
    pub fn filter(&self, t: usize, i: usize) -> Result<Kernel> {
        let stage = self.stage(t)?;
        let c = stage
            .filter_coeffs
            .get(i)
            .ok_or_else(|| Error::IndexOutOfRange(format!("filter {i} of {}", self.num_filters)))?;
        filter_from_coeffs(c, &self.basis)
    }

    pub(crate) fn prepare_stage(&self, idx: usize) -> PreparedStage {
        let r = self.filter_size;
        let rot = self.stages[idx]
            .filter_coeffs
            .iter()
            .map(|c| {
                let mut taps = vec![0.0; r * r];
                for (cm, atom) in c.iter().zip(self.basis.atoms()) {
                    if *cm != 0.0 {
                        for (t, a) in taps.iter_mut().zip(atom.taps()) {
                            *t += cm * a;
                        }
                    }
                }
                taps.reverse();
                taps
            })
            .collect();
        let phis = self.stages[idx].influence.iter().map(RbfEvaluator::new).collect();
        PreparedStage { r, rot, phis }
    }

    /// `Σ_i k̄_i ∗ φ_i(k_i ∗ u)` on raw buffers. When `record` is given, the
    /// filter responses and influence values are appended to it.
    pub(crate) fn diffusion_term_raw(
        &self,
        prep: &PreparedStage,
        u: &[f64],
        w: usize,
        h: usize,
        boundary: Boundary,
        mut record: Option<&mut StageRecord>,
    ) -> Vec<f64> {
        let r = prep.r;
        let padder = Padder::new(w, h, r / 2, boundary);
        let wp = padder.padded_width();
        let pu = padder.padded(u);
        let mut q = vec![0.0; padder.padded_len()];
        let mut z = vec![0.0; w * h];
        let mut psi = vec![0.0; w * h];
        for (rot, phi) in prep.rot.iter().zip(&prep.phis) {
            correlate_valid(&pu, wp, w, h, rot, r, &mut z);
            if let Some(rec) = record.as_deref_mut() {
                let fr = FilterRecord::from_responses(phi, &z);
                correlate_valid_transpose(&fr.psi, w, h, rot, r, &mut q, wp);
                rec.filters.push(fr);
                rec.responses.push(z.clone());
            } else {
                let mut ev = phi.clone();
                for (p, &zv) in psi.iter_mut().zip(&z) {
                    *p = ev.value(zv);
                }
                correlate_valid_transpose(&psi, w, h, rot, r, &mut q, wp);
            }
        }
        let mut out = vec![0.0; w * h];
        padder.fold_add(&q, &mut out);
        out
    }

    fn check_fits(&self, u: &Image) -> Result<()> {
        let r = self.filter_size;
        if r > 2 * u.width().min(u.height()) + 1 {
            return Err(Error::KernelTooLarge {
                size: r,
                width: u.width(),
                height: u.height(),
            });
        }
        Ok(())
    }

    /// Diffusion term `Σ_i k̄_i ∗ φ_i(k_i ∗ u)` of stage `t` under the given
    /// boundary rule.
    pub fn diffusion_term(&self, t: usize, u: &Image, boundary: Boundary) -> Result<Image> {
        self.check_stage(t)?;
        self.check_fits(u)?;
        let prep = self.prepare_stage(t - 1);
        let d = self.diffusion_term_raw(&prep, u.data(), u.width(), u.height(), boundary, None);
        Ok(Image::from_raw(u.width(), u.height(), d))
    }

    /// One reaction-diffusion stage: `u − (diffusion + λ_j (u − f))`.
    pub fn diffusion_step(&self, t: usize, u: &Image, f: &Image, j: usize) -> Result<Image> {
        self.check_stage(t)?;
        self.check_level(j)?;
        u.ensure_same_shape(f, "diffusion_step")?;
        let d = self.diffusion_term(t, u, Boundary::Symmetric)?;
        let lambda = self.lambda_unchecked(t - 1, j);
        let data = u
            .data()
            .iter()
            .zip(f.data())
            .zip(d.data())
            .map(|((&uv, &fv), &dv)| uv - (dv + lambda * (uv - fv)))
            .collect();
        Ok(Image::from_raw(u.width(), u.height(), data))
    }

    /// One stage with the reaction term omitted: `u − diffusion`.
    pub fn diffusion_only_step(&self, t: usize, u: &Image) -> Result<Image> {
        let d = self.diffusion_term(t, u, Boundary::Symmetric)?;
        let data = u.data().iter().zip(d.data()).map(|(a, b)| a - b).collect();
        Ok(Image::from_raw(u.width(), u.height(), data))
    }

    /// Runs all stages from `u_0 = f` at noise level `sigma`. Output is
    /// not clamped.
    pub fn denoise(&self, f: &Image, sigma: f64) -> Result<Image> {
        let j = self.level_index(sigma)?;
        self.denoise_level(f, j)
    }

    /// Runs all stages from `u_0 = f` at grid level `j`.
    pub fn denoise_level(&self, f: &Image, j: usize) -> Result<Image> {
        self.check_level(j)?;
        let mut u = f.clone();
        for t in 1..=self.num_stages() {
            u = self.diffusion_step(t, &u, f, j)?;
        }
        Ok(u)
    }

    /// Stage-`t` energy `(λ_j/2)‖u − f‖² + Σ_i Σ_p ρ_i((k_i ∗ u)_p)`.
    pub fn compute_energy(&self, t: usize, u: &Image, f: &Image, j: usize) -> Result<f64> {
        self.check_stage(t)?;
        self.check_level(j)?;
        self.check_fits(u)?;
        u.ensure_same_shape(f, "compute_energy")?;
        let lambda = self.lambda_unchecked(t - 1, j);
        let data_term = 0.5
            * lambda
            * u.data()
                .iter()
                .zip(f.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        let prep = self.prepare_stage(t - 1);
        let (w, h, r) = (u.width(), u.height(), prep.r);
        let padder = Padder::new(w, h, r / 2, Boundary::Symmetric);
        let pu = padder.padded(u.data());
        let mut z = vec![0.0; w * h];
        let mut row = vec![0.0; self.rbf.num_centers];
        let mut reg = 0.0;
        for (rot, phi) in prep.rot.iter().zip(&self.stages[t - 1].influence) {
            correlate_valid(&pu, padder.padded_width(), w, h, rot, r, &mut z);
            for &zv in &z {
                self.rbf.basis_integral_row(zv, &mut row);
                reg += row.iter().zip(&phi.weights).map(|(g, w)| g * w).sum::<f64>();
            }
        }
        Ok(data_term + reg)
    }

    /// Number of trainable values in one stage.
    pub fn stage_param_len(&self) -> usize {
        self.num_filters * (self.basis.len() + self.rbf.num_centers) + self.sigma_grid.len()
    }

    pub fn num_params(&self) -> usize {
        self.stages.len() * self.stage_param_len()
    }

    /// Flat parameter vector of stage `idx` (0-based): filter coefficients
    /// filter-major, then RBF weights filter-major, then `log λ`.
    pub fn stage_params(&self, idx: usize) -> Vec<f64> {
        let s = &self.stages[idx];
        let mut out = Vec::with_capacity(self.stage_param_len());
        for c in &s.filter_coeffs {
            out.extend_from_slice(c);
        }
        for p in &s.influence {
            out.extend_from_slice(&p.weights);
        }
        out.extend_from_slice(&s.log_lambda);
        out
    }

    pub fn set_stage_params(&mut self, idx: usize, params: &[f64]) -> Result<()> {
        if params.len() != self.stage_param_len() {
            return Err(Error::DimensionMismatch(format!(
                "{} stage parameters, expected {}",
                params.len(),
                self.stage_param_len()
            )));
        }
        let s = &mut self.stages[idx];
        let targets = s
            .filter_coeffs
            .iter_mut()
            .flatten()
            .chain(s.influence.iter_mut().flat_map(|p| p.weights.iter_mut()))
            .chain(s.log_lambda.iter_mut());
        for (dst, src) in targets.zip(params) {
            *dst = *src;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<f64> {
        (0..self.stages.len()).flat_map(|i| self.stage_params(i)).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.stage_param_len();
        if params.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters, expected {}",
                params.len(),
                self.num_params()
            )));
        }
        for (i, chunk) in params.chunks_exact(n).enumerate() {
            self.set_stage_params(i, chunk)?;
        }
        Ok(())
    }
}
