//! Supervised end-to-end training.
//!
//! The objective is `L(Θ) = Σ_s ½‖u_T^s − u_gt^s‖²` over all samples, with
//! each sample's reaction term selected by its noise level. Gradients come
//! from exact reverse-mode differentiation through the unrolled stages;
//! reaction weights of level `j` only collect gradient from level-`j`
//! samples, while filters and influence functions learn from every sample.

mod backprop;
mod dataset;
mod gradcheck;
mod lbfgs;
mod schemes;

pub use backprop::{backprop_stage, forward_record, grad_full, Trajectory};
pub(crate) use dataset::image_files;
pub use dataset::{make_training_set, make_training_set_from_images, plan_training_set, realize_samples, SampleRecipe};
pub use gradcheck::{gradcheck, gradcheck_suite, BlockError, GradcheckOptions, GradcheckReport, SuiteEntry};
pub use lbfgs::{lbfgs_minimize, lbfgs_minimize_observed, IterationRecord, LbfgsOptions, LbfgsResult, LbfgsStatus};
pub use schemes::{train, train_greedy, train_joint, PhaseReport, Scheme, TrainOptions, TrainReport};

use crate::error::{Error, Result};
use crate::imagecore::Image;
use crate::model::GenericDPModel;

/// A noisy input, its ground truth, and the grid index of its noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub noisy: Image,
    pub clean: Image,
    pub level_index: usize,
}

impl TrainingSample {
    pub fn new(noisy: Image, clean: Image, level_index: usize) -> Result<Self> {
        noisy.ensure_same_shape(&clean, "training sample")?;
        Ok(Self {
            noisy,
            clean,
            level_index,
        })
    }

    pub(crate) fn check_against(&self, model: &GenericDPModel) -> Result<()> {
        self.noisy.ensure_same_shape(&self.clean, "training sample")?;
        if self.level_index >= model.num_levels() {
            return Err(Error::IndexOutOfRange(format!(
                "sample level {} of {}",
                self.level_index,
                model.num_levels()
            )));
        }
        let r = model.filter_size();
        if r > 2 * self.noisy.width().min(self.noisy.height()) + 1 {
            return Err(Error::KernelTooLarge {
                size: r,
                width: self.noisy.width(),
                height: self.noisy.height(),
            });
        }
        Ok(())
    }
}

/// Gradient of the loss with respect to one stage's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct StageGradient {
    pub d_filter_coeffs: Vec<Vec<f64>>,
    pub d_rbf_weights: Vec<Vec<f64>>,
    pub d_log_lambda: Vec<f64>,
}

impl StageGradient {
    pub fn zeros(model: &GenericDPModel) -> Self {
        Self {
            d_filter_coeffs: vec![vec![0.0; model.basis().len()]; model.num_filters()],
            d_rbf_weights: vec![vec![0.0; model.rbf_config().num_centers]; model.num_filters()],
            d_log_lambda: vec![0.0; model.num_levels()],
        }
    }

    /// Same layout as [`GenericDPModel::stage_params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.d_filter_coeffs
            .iter()
            .flatten()
            .chain(self.d_rbf_weights.iter().flatten())
            .chain(&self.d_log_lambda)
            .copied()
            .collect()
    }

    pub fn add_assign(&mut self, other: &StageGradient) {
        let pairs = self
            .d_filter_coeffs
            .iter_mut()
            .flatten()
            .chain(self.d_rbf_weights.iter_mut().flatten())
            .chain(self.d_log_lambda.iter_mut())
            .zip(other.flatten());
        for (a, b) in pairs {
            *a += b;
        }
    }
}

/// Per-stage gradient blocks mirroring the model's stage layout.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientVector {
    pub stages: Vec<StageGradient>,
}

impl GradientVector {
    pub fn zeros(model: &GenericDPModel) -> Self {
        Self {
            stages: (0..model.num_stages()).map(|_| StageGradient::zeros(model)).collect(),
        }
    }

    /// Same layout as [`GenericDPModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.flatten()).collect()
    }

    pub fn add_assign(&mut self, other: &GradientVector) {
        for (a, b) in self.stages.iter_mut().zip(&other.stages) {
            a.add_assign(b);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `(½‖u_T − u_gt‖², u_T − u_gt)`.
pub fn loss(u_t: &Image, u_gt: &Image) -> Result<(f64, Image)> {
    u_t.ensure_same_shape(u_gt, "loss")?;
    let residual = u_t.sub(u_gt);
    let value = 0.5 * residual.dot(&residual);
    Ok((value, residual))
}

#[cfg(test)]
mod tests;
