//! Central finite differences of the end-to-end loss against the analytic
//! gradient.

use super::backprop::{batch_gradient, batch_loss};
use super::TrainingSample;
use crate::error::Result;
use crate::imagecore::rng::{derive_seed, SplitMix64};
use crate::imagecore::{add_gaussian_noise, synthetic_scene};
use crate::model::{GenericDPModel, ModelConfig, RbfConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckOptions {
    /// Step is `eps · max(1, |θ|)`.
    pub eps: f64,
    pub tolerance: f64,
    /// Flip the sign of the analytic `log λ` gradient (negative control).
    pub corrupt_lambda_sign: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            tolerance: 1e-5,
            corrupt_lambda_sign: false,
        }
    }
}

/// Worst entry of one parameter block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockError {
    /// 1-based stage.
    pub stage: usize,
    /// `"filter"`, `"rbf"` or `"lambda"`.
    pub block: &'static str,
    pub max_rel_error: f64,
    /// Flat parameter index of the worst entry.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub num_params: usize,
    pub max_rel_error: f64,
    pub blocks: Vec<BlockError>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks every parameter of `model` on one sample.
///
/// The relative error of entry `k` is `|a − n| / max(|a|, |n|, τ)` with
/// `τ = 1e-3 · ‖a‖_∞ + 1e-10`, so entries far below the gradient's scale
/// are compared in absolute terms.
pub fn gradcheck(model: &GenericDPModel, sample: &TrainingSample, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let samples = std::slice::from_ref(sample);
    let (_, grad) = batch_gradient(model, samples, 0)?;
    let mut analytic = grad.flatten();
    let n_stage = model.stage_param_len();
    let n_filter = model.num_filters() * model.basis().len();
    let n_rbf = model.num_filters() * model.rbf_config().num_centers;
    if opts.corrupt_lambda_sign {
        for (k, a) in analytic.iter_mut().enumerate() {
            if k % n_stage >= n_filter + n_rbf {
                *a = -*a;
            }
        }
    }
    let params = model.params();
    let mut work = model.clone();
    let mut shifted = params.clone();
    let mut numeric = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let h = opts.eps * params[k].abs().max(1.0);
        shifted[k] = params[k] + h;
        work.set_params(&shifted)?;
        let plus = batch_loss(&work, samples);
        shifted[k] = params[k] - h;
        work.set_params(&shifted)?;
        let minus = batch_loss(&work, samples);
        shifted[k] = params[k];
        numeric.push((plus - minus) / (2.0 * h));
    }

    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-3 * scale + 1e-10;
    let mut blocks: Vec<BlockError> = Vec::new();
    for (k, (a, nv)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - nv).abs() / a.abs().max(nv.abs()).max(floor);
        let stage = k / n_stage + 1;
        let off = k % n_stage;
        let block = if off < n_filter {
            "filter"
        } else if off < n_filter + n_rbf {
            "rbf"
        } else {
            "lambda"
        };
        match blocks.iter_mut().find(|b| b.stage == stage && b.block == block) {
            Some(b) => {
                if rel > b.max_rel_error {
                    *b = BlockError {
                        stage,
                        block,
                        max_rel_error: rel,
                        worst_index: k,
                        analytic: *a,
                        numeric: *nv,
                    };
                }
            }
            None => blocks.push(BlockError {
                stage,
                block,
                max_rel_error: rel,
                worst_index: k,
                analytic: *a,
                numeric: *nv,
            }),
        }
    }
    let max_rel_error = blocks.iter().fold(0.0f64, |m, b| m.max(b.max_rel_error));
    Ok(GradcheckReport {
        num_params: params.len(),
        max_rel_error,
        blocks,
        tolerance: opts.tolerance,
        passed: max_rel_error < opts.tolerance,
    })
}

/// One randomly drawn configuration of [`gradcheck_suite`].
#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub config: ModelConfig,
    pub width: usize,
    pub height: usize,
    pub level_index: usize,
    pub report: GradcheckReport,
}

/// Gradient checks over `count` small random models and samples
/// (`T ∈ 1..=3`, `N ∈ {2, 4}`, `r ∈ {3, 5}`, `M ∈ 1..=3`, 8..=16 pixel
/// sides).
pub fn gradcheck_suite(count: usize, seed: u64, opts: &GradcheckOptions) -> Result<Vec<SuiteEntry>> {
    (0..count as u64)
        .map(|c| {
            let s = derive_seed(seed, c);
            let mut rng = SplitMix64::new(s);
            let num_stages = 1 + rng.below(3) as usize;
            let num_filters = 2 + 2 * rng.below(2) as usize;
            let filter_size = if rng.below(2) == 0 { 3 } else { 5 };
            let levels = 1 + rng.below(3) as usize;
            let width = 8 + rng.below(9) as usize;
            let height = 8 + rng.below(9) as usize;
            let config = ModelConfig {
                num_stages,
                filter_size,
                num_filters,
                sigma_grid: (1..=levels).map(|j| 10.0 * j as f64).collect(),
                rbf: RbfConfig::spaced(15, -280.0, 280.0),
            };
            let model = GenericDPModel::random(&config, derive_seed(s, 1))?;
            let level_index = rng.below(levels as u64) as usize;
            let clean = synthetic_scene(width, height, derive_seed(s, 2))?;
            let noisy = add_gaussian_noise(&clean, config.sigma_grid[level_index], derive_seed(s, 3))?;
            let sample = TrainingSample::new(noisy, clean, level_index)?;
            let report = gradcheck(&model, &sample, opts)?;
            Ok(SuiteEntry {
                config,
                width,
                height,
                level_index,
                report,
            })
        })
        .collect()
}
