use rayon::prelude::*;

use super::{loss, GradientVector, StageGradient, TrainingSample};
use crate::error::{Error, Result};
use crate::imagecore::conv::{correlate_valid, correlate_valid_transpose, tap_correlation, Padder};
use crate::imagecore::{Boundary, Image};
use crate::model::{FilterRecord, GenericDPModel, PreparedStage, StageRecord};

/// States `u_0..u_T` of one forward pass and the filter responses
/// `k_i ∗ u_{t−1}` of every stage.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<Image>,
    /// `responses[t][i]`, row-major, for stage `t + 1` and filter `i`.
    pub responses: Vec<Vec<Vec<f64>>>,
    records: Vec<Vec<FilterRecord>>,
}

impl Trajectory {
    pub fn output(&self) -> &Image {
        self.states.last().expect("trajectory holds u_0")
    }
}

pub(crate) fn prepare_all(model: &GenericDPModel) -> Vec<PreparedStage> {
    (0..model.num_stages()).map(|i| model.prepare_stage(i)).collect()
}

fn forward_prepared(model: &GenericDPModel, preps: &[PreparedStage], sample: &TrainingSample) -> Trajectory {
    let f = &sample.noisy;
    let (w, h) = (f.width(), f.height());
    let j = sample.level_index;
    let mut states = Vec::with_capacity(preps.len() + 1);
    let mut responses = Vec::with_capacity(preps.len());
    let mut records = Vec::with_capacity(preps.len());
    states.push(f.clone());
    for (idx, prep) in preps.iter().enumerate() {
        let u = &states[idx];
        let mut rec = StageRecord::default();
        let d = model.diffusion_term_raw(prep, u.data(), w, h, Boundary::Symmetric, Some(&mut rec));
        let lambda = model.lambda_unchecked(idx, j);
        let next = u
            .data()
            .iter()
            .zip(f.data())
            .zip(&d)
            .map(|((&uv, &fv), &dv)| uv - (dv + lambda * (uv - fv)))
            .collect();
        states.push(Image::from_raw(w, h, next));
        responses.push(rec.responses);
        records.push(rec.filters);
    }
    Trajectory {
        states,
        responses,
        records,
    }
}

/// Forward pass that keeps every intermediate state and filter response.
pub fn forward_record(model: &GenericDPModel, sample: &TrainingSample) -> Result<Trajectory> {
    sample.check_against(model)?;
    Ok(forward_prepared(model, &prepare_all(model), sample))
}

/// Reverse step through stage `idx` (0-based). Returns `e_{t−1}` when
/// `need_adjoint` is set.
fn backprop_prepared(
    model: &GenericDPModel,
    idx: usize,
    prep: &PreparedStage,
    traj: &Trajectory,
    records: &[FilterRecord],
    e: &[f64],
    sample: &TrainingSample,
    need_adjoint: bool,
) -> (Option<Vec<f64>>, StageGradient) {
    let u = traj.states[idx].data();
    let f = sample.noisy.data();
    let (w, h) = (sample.noisy.width(), sample.noisy.height());
    let r = prep.r;
    let n = w * h;
    let rbf = model.rbf_config();
    let mut grad = StageGradient::zeros(model);

    let padder = Padder::new(w, h, r / 2, Boundary::Symmetric);
    let wp = padder.padded_width();
    let pu = padder.padded(u);
    let pe = padder.padded(e);
    let mut back = vec![0.0; if need_adjoint { padder.padded_len() } else { 0 }];
    let mut ke = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut drot = vec![0.0; r * r];

    for (i, ((rot, ev), rec)) in prep.rot.iter().zip(&prep.phis).zip(records).enumerate() {
        correlate_valid(&pe, wp, w, h, rot, r, &mut ke);
        let win = &ev.window;
        let len = win.len();
        let mut g = vec![0.0; len];
        let mut dw = vec![0.0; ev.padded.len()];
        for p in 0..n {
            let kep = ke[p];
            q[p] = rec.dpsi[p] * kep;
            win.refill(rec.dz[p], rec.g0[p], rec.e[p], &mut g);
            let m0 = rec.m0[p] as usize;
            for (d, gv) in dw[m0..m0 + len].iter_mut().zip(&g) {
                *d -= gv * kep;
            }
        }
        grad.d_rbf_weights[i].copy_from_slice(&dw[win.half..win.half + rbf.num_centers]);
        if need_adjoint {
            correlate_valid_transpose(&q, w, h, rot, r, &mut back, wp);
        }
        drot.iter_mut().for_each(|v| *v = 0.0);
        tap_correlation(&pe, wp, w, h, &rec.psi, r, &mut drot);
        tap_correlation(&pu, wp, w, h, &q, r, &mut drot);
        // rot is the reversed tap vector, so tap k pairs with drot[r²−1−k]
        for (c, atom) in grad.d_filter_coeffs[i].iter_mut().zip(model.basis().atoms()) {
            let s: f64 = atom.taps().iter().zip(drot.iter().rev()).map(|(a, g)| a * g).sum();
            *c = -s;
        }
    }

    let j = sample.level_index;
    let lambda = model.lambda_unchecked(idx, j);
    if model.reaction_enabled() {
        let inner: f64 = u.iter().zip(f).zip(e).map(|((uv, fv), ev)| (uv - fv) * ev).sum();
        grad.d_log_lambda[j] = -lambda * inner;
    }

    let adjoint = need_adjoint.then(|| {
        let mut kt = vec![0.0; n];
        padder.fold_add(&back, &mut kt);
        e.iter().zip(&kt).map(|(ev, kv)| ev - kv - lambda * ev).collect()
    });
    (adjoint, grad)
}

/// Reverse step through stage `t` (1-based): given `e_t = ∂ℓ/∂u_t`,
/// returns `e_{t−1}` and the gradient of the stage parameters.
pub fn backprop_stage(
    model: &GenericDPModel,
    t: usize,
    traj: &Trajectory,
    e_t: &Image,
    sample: &TrainingSample,
) -> Result<(Image, StageGradient)> {
    model.stage(t)?;
    sample.check_against(model)?;
    e_t.ensure_same_shape(&sample.noisy, "backprop_stage")?;
    if traj.states.len() < t || traj.responses.len() < t || !traj.states[t - 1].same_shape(e_t) {
        return Err(Error::DimensionMismatch(format!(
            "trajectory does not cover stage {t} for this sample"
        )));
    }
    let prep = model.prepare_stage(t - 1);
    let records: Vec<FilterRecord> = prep
        .phis
        .iter()
        .zip(&traj.responses[t - 1])
        .map(|(phi, z)| FilterRecord::from_responses(phi, z))
        .collect();
    let (e_prev, grad) = backprop_prepared(model, t - 1, &prep, traj, &records, e_t.data(), sample, true);
    let e_prev = e_prev.expect("adjoint requested");
    Ok((Image::from_raw(e_t.width(), e_t.height(), e_prev), grad))
}

/// Loss and gradient of one sample; stages before `first` are treated as
/// frozen and get zero gradient.
pub(crate) fn sample_gradient(
    model: &GenericDPModel,
    preps: &[PreparedStage],
    sample: &TrainingSample,
    first: usize,
) -> (f64, GradientVector) {
    let traj = forward_prepared(model, preps, sample);
    let (value, e_t) = loss(traj.output(), &sample.clean).expect("shapes checked");
    let mut grad = GradientVector::zeros(model);
    let mut e = e_t.into_data();
    for idx in (first..model.num_stages()).rev() {
        let need = idx > first;
        let (prev, g) = backprop_prepared(model, idx, &preps[idx], &traj, &traj.records[idx], &e, sample, need);
        grad.stages[idx] = g;
        if let Some(prev) = prev {
            e = prev;
        }
    }
    (value, grad)
}

/// Total loss and gradient over a batch. Samples are processed in
/// parallel and reduced in sample order.
pub(crate) fn batch_gradient(
    model: &GenericDPModel,
    samples: &[TrainingSample],
    first: usize,
) -> Result<(f64, GradientVector)> {
    if samples.is_empty() {
        return Err(Error::Empty("training batch".into()));
    }
    for s in samples {
        s.check_against(model)?;
    }
    let preps = prepare_all(model);
    let parts: Vec<(f64, GradientVector)> = samples
        .par_iter()
        .map(|s| sample_gradient(model, &preps, s, first))
        .collect();
    let mut total = 0.0;
    let mut grad = GradientVector::zeros(model);
    for (v, g) in &parts {
        total += v;
        grad.add_assign(g);
    }
    Ok((total, grad))
}

/// `(Σ_s ℓ_s, Σ_s ∂ℓ_s/∂Θ)` over the batch.
pub fn grad_full(model: &GenericDPModel, samples: &[TrainingSample]) -> Result<(f64, GradientVector)> {
    batch_gradient(model, samples, 0)
}

/// Loss only, without the reverse pass.
pub(crate) fn batch_loss(model: &GenericDPModel, samples: &[TrainingSample]) -> f64 {
    let preps = prepare_all(model);
    let parts: Vec<f64> = samples
        .par_iter()
        .map(|s| {
            let traj = forward_prepared(model, &preps, s);
            loss(traj.output(), &s.clean).expect("shapes checked").0
        })
        .collect();
    parts.iter().sum()
}
