use super::backprop::batch_gradient;
use super::lbfgs::{lbfgs_minimize_observed, IterationRecord, LbfgsOptions, LbfgsStatus};
use super::TrainingSample;
use crate::error::Result;
use crate::model::GenericDPModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Greedy,
    Joint,
    /// Greedy stage-wise training followed by joint refinement.
    GreedyJoint,
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "greedy" => Ok(Scheme::Greedy),
            "joint" => Ok(Scheme::Joint),
            "greedy+joint" | "greedy-joint" => Ok(Scheme::GreedyJoint),
            _ => Err(format!("unknown training scheme '{s}' (greedy, joint, greedy+joint)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    /// Optimizer settings for each greedy stage.
    pub greedy: LbfgsOptions,
    /// Optimizer settings for the joint phase.
    pub joint: LbfgsOptions,
    /// When false the reaction term is removed from the model before
    /// training.
    pub reaction: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            greedy: LbfgsOptions::default(),
            joint: LbfgsOptions::default(),
            reaction: true,
        }
    }
}

/// Outcome of one optimizer run.
#[derive(Clone, Debug)]
pub struct PhaseReport {
    /// `"stage 2"` for a greedy stage, `"joint"` otherwise.
    pub name: String,
    pub status: LbfgsStatus,
    pub history: Vec<IterationRecord>,
}

impl PhaseReport {
    pub fn initial(&self) -> &IterationRecord {
        &self.history[0]
    }

    pub fn last(&self) -> &IterationRecord {
        self.history.last().expect("history holds the start point")
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub phases: Vec<PhaseReport>,
}

/// Optimizes the stages `first..T` (0-based) of `model` on the loss of its
/// output; earlier stages are left untouched.
fn optimize_tail(
    model: &mut GenericDPModel,
    samples: &[TrainingSample],
    first: usize,
    opts: &LbfgsOptions,
    name: String,
    observer: &mut dyn FnMut(&str, &IterationRecord),
) -> Result<PhaseReport> {
    // surface data errors before the optimizer sees them
    batch_gradient(model, &samples[..samples.len().min(1)], first)?;
    let n = model.stage_param_len();
    let stages = model.num_stages();
    let x0: Vec<f64> = (first..stages).flat_map(|i| model.stage_params(i)).collect();
    let mut work = model.clone();
    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        if x.iter().any(|v| !v.is_finite()) {
            return (f64::INFINITY, vec![0.0; x.len()]);
        }
        for (k, chunk) in x.chunks_exact(n).enumerate() {
            work.set_stage_params(first + k, chunk).expect("chunk length");
        }
        match batch_gradient(&work, samples, first) {
            Ok((v, g)) => {
                let flat: Vec<f64> = g.stages[first..].iter().flat_map(|s| s.flatten()).collect();
                (v, flat)
            }
            Err(_) => (f64::INFINITY, vec![0.0; x.len()]),
        }
    };
    let res = lbfgs_minimize_observed(objective, &x0, opts, |rec| observer(&name, rec));
    for (k, chunk) in res.x.chunks_exact(n).enumerate() {
        model.set_stage_params(first + k, chunk)?;
    }
    Ok(PhaseReport {
        name,
        status: res.status,
        history: res.history,
    })
}

fn prepare(model: &GenericDPModel, opts: &TrainOptions) -> GenericDPModel {
    let mut m = model.clone();
    if !opts.reaction {
        m.set_reaction(false);
    }
    m
}

/// All stages optimized together.
pub fn train_joint(
    model: &GenericDPModel,
    samples: &[TrainingSample],
    opts: &TrainOptions,
) -> Result<(GenericDPModel, TrainReport)> {
    train(model, samples, Scheme::Joint, opts, &mut |_, _| {})
}

/// Stage `t = 1..T` optimized on the `t`-stage output with stages before
/// `t` frozen.
pub fn train_greedy(
    model: &GenericDPModel,
    samples: &[TrainingSample],
    opts: &TrainOptions,
) -> Result<(GenericDPModel, TrainReport)> {
    train(model, samples, Scheme::Greedy, opts, &mut |_, _| {})
}

/// Runs `scheme`, reporting every accepted iterate to `observer` with the
/// phase name.
pub fn train(
    model: &GenericDPModel,
    samples: &[TrainingSample],
    scheme: Scheme,
    opts: &TrainOptions,
    observer: &mut dyn FnMut(&str, &IterationRecord),
) -> Result<(GenericDPModel, TrainReport)> {
    let mut model = prepare(model, opts);
    let mut report = TrainReport::default();
    if matches!(scheme, Scheme::Greedy | Scheme::GreedyJoint) {
        for t in 1..=model.num_stages() {
            let mut head = model.truncated(t)?;
            let phase = optimize_tail(&mut head, samples, t - 1, &opts.greedy, format!("stage {t}"), observer)?;
            model.set_stage_params(t - 1, &head.stage_params(t - 1))?;
            report.phases.push(phase);
        }
    }
    if matches!(scheme, Scheme::Joint | Scheme::GreedyJoint) {
        let phase = optimize_tail(&mut model, samples, 0, &opts.joint, "joint".into(), observer)?;
        report.phases.push(phase);
    }
    Ok((model, report))
}
