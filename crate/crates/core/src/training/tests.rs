use super::*;
use crate::imagecore::{add_gaussian_noise, conv2_same_symmetric, synthetic_scene};
use crate::model::{ModelConfig, RbfConfig};
use crate::testutil::random_image;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        num_stages: 2,
        filter_size: 3,
        num_filters: 2,
        sigma_grid: vec![15.0, 25.0],
        rbf: RbfConfig::spaced(15, -280.0, 280.0),
    }
}

fn sample(w: usize, h: usize, j: usize, sigma: f64, seed: u64) -> TrainingSample {
    let clean = synthetic_scene(w, h, seed).unwrap();
    let noisy = add_gaussian_noise(&clean, sigma, seed + 1).unwrap();
    TrainingSample::new(noisy, clean, j).unwrap()
}

#[test]
fn loss_values() {
    let a = random_image(5, 4, 1);
    let (v, e) = loss(&a, &a).unwrap();
    assert_eq!(v, 0.0);
    assert!(e.data().iter().all(|&x| x == 0.0));

    let b = a.map(|x| x - 1.0);
    let (v, e) = loss(&a, &b).unwrap();
    assert!((v - 10.0).abs() < 1e-12);
    assert!(e.data().iter().all(|&x| (x - 1.0).abs() < 1e-12));

    assert!(loss(&a, &random_image(4, 5, 2)).is_err());
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let a = random_image(6, 5, 3);
    let b = random_image(6, 5, 4);
    let (_, e) = loss(&a, &b).unwrap();
    for k in [0, 7, 29] {
        let h = 1e-3;
        let mut p = a.clone();
        p.data_mut()[k] += h;
        let mut m = a.clone();
        m.data_mut()[k] -= h;
        let fd = (loss(&p, &b).unwrap().0 - loss(&m, &b).unwrap().0) / (2.0 * h);
        let an = e.data()[k];
        assert!((fd - an).abs() / an.abs().max(1e-12) < 1e-7, "{fd} vs {an}");
    }
}

#[test]
fn trajectory_matches_inference_exactly() {
    let model = GenericDPModel::random(&tiny_config(), 5).unwrap();
    let s = sample(12, 10, 1, 25.0, 6);
    let traj = forward_record(&model, &s).unwrap();
    assert_eq!(traj.states.len(), 3);
    assert_eq!(traj.output(), &model.denoise_level(&s.noisy, 1).unwrap());
    for t in 1..=2 {
        for i in 0..2 {
            let z = conv2_same_symmetric(&traj.states[t - 1], &model.filter(t, i).unwrap()).unwrap();
            assert_eq!(traj.responses[t - 1][i].as_slice(), z.data(), "stage {t} filter {i}");
        }
    }
}

#[test]
fn zero_model_backprop_is_identity() {
    let model = GenericDPModel::zeros(&tiny_config()).unwrap();
    let s = sample(8, 8, 0, 15.0, 7);
    let traj = forward_record(&model, &s).unwrap();
    let e = random_image(8, 8, 8);
    let (prev, g) = backprop_stage(&model, 2, &traj, &e, &s).unwrap();
    assert_eq!(prev, e);
    // influence weights still receive gradient: ∂/∂w_m = −⟨g_m(z), K e⟩
    assert!(g.d_rbf_weights.iter().flatten().any(|&v| v != 0.0));
    assert!(g.d_filter_coeffs.iter().flatten().all(|&v| v == 0.0));
    assert!(g.d_log_lambda.iter().all(|&v| v == 0.0));
}

#[test]
fn lambda_gradient_direct_evaluation() {
    // 2×1 image: u − f = [1, −1], e = [2, 3], λ = 1
    let mut model = GenericDPModel::zeros(&ModelConfig {
        num_stages: 1,
        ..tiny_config()
    })
    .unwrap();
    model.set_reaction(true);
    model.stage_mut(1).unwrap().log_lambda = vec![0.0, 0.0];
    let f = Image::new(2, 1, vec![10.0, 20.0]).unwrap();
    let s = TrainingSample::new(f.clone(), f.clone(), 1).unwrap();
    let mut traj = forward_record(&model, &s).unwrap();
    let u0 = Image::new(2, 1, vec![11.0, 19.0]).unwrap();
    traj.responses[0] = (0..2)
        .map(|i| {
            conv2_same_symmetric(&u0, &model.filter(1, i).unwrap())
                .unwrap()
                .into_data()
        })
        .collect();
    traj.states[0] = u0;
    let e = Image::new(2, 1, vec![2.0, 3.0]).unwrap();
    let (prev, g) = backprop_stage(&model, 1, &traj, &e, &s).unwrap();
    assert_eq!(g.d_log_lambda, vec![0.0, 1.0]);
    // λ = 1 removes the carried adjoint entirely
    assert_eq!(prev.data(), &[0.0, 0.0]);
}

#[test]
fn public_backprop_chain_matches_grad_full() {
    let model = GenericDPModel::random(&tiny_config(), 9).unwrap();
    let s = sample(9, 11, 0, 15.0, 10);
    let traj = forward_record(&model, &s).unwrap();
    let (value, mut e) = loss(traj.output(), &s.clean).unwrap();
    let mut blocks = Vec::new();
    for t in (1..=2).rev() {
        let (prev, g) = backprop_stage(&model, t, &traj, &e, &s).unwrap();
        blocks.push(g);
        e = prev;
    }
    blocks.reverse();
    let (total, grad) = grad_full(&model, std::slice::from_ref(&s)).unwrap();
    assert_eq!(total, value);
    assert_eq!(grad.stages, blocks);
}

#[test]
fn tiny_model_gradcheck() {
    let model = GenericDPModel::random(&tiny_config(), 11).unwrap();
    for (j, seed) in [(0, 12), (1, 13)] {
        let s = sample(8, 8, j, [15.0, 25.0][j], seed);
        let report = gradcheck(&model, &s, &GradcheckOptions::default()).unwrap();
        assert!(report.passed, "{report:#?}");
        assert_eq!(report.blocks.len(), 6);
    }
}

#[test]
fn random_configuration_gradchecks() {
    let entries = gradcheck_suite(12, 2024, &GradcheckOptions::default()).unwrap();
    for e in &entries {
        assert!(
            e.report.passed,
            "T={} N={} r={} M={} {}x{}: {:#?}",
            e.config.num_stages,
            e.config.num_filters,
            e.config.filter_size,
            e.config.sigma_grid.len(),
            e.width,
            e.height,
            e.report
        );
    }
}

#[test]
fn zero_model_gradcheck_passes() {
    let mut model = GenericDPModel::zeros(&tiny_config()).unwrap();
    model.set_reaction(true);
    let s = sample(8, 8, 0, 15.0, 14);
    let report = gradcheck(&model, &s, &GradcheckOptions::default()).unwrap();
    assert!(report.passed, "{report:#?}");
}

#[test]
fn corrupted_lambda_gradient_fails() {
    let model = GenericDPModel::random(&tiny_config(), 15).unwrap();
    let s = sample(8, 8, 1, 25.0, 16);
    let opts = GradcheckOptions {
        corrupt_lambda_sign: true,
        ..Default::default()
    };
    let report = gradcheck(&model, &s, &opts).unwrap();
    assert!(!report.passed);
    let worst = report
        .blocks
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    assert_eq!(worst.block, "lambda");
}

#[test]
fn batch_accumulation_is_linear() {
    let model = GenericDPModel::random(&tiny_config(), 17).unwrap();
    let a = sample(10, 10, 0, 15.0, 18);
    let b = sample(10, 10, 1, 25.0, 19);
    let c = sample(10, 10, 0, 15.0, 20);

    let (va, ga) = grad_full(&model, std::slice::from_ref(&a)).unwrap();
    let (vaa, gaa) = grad_full(&model, &[a.clone(), a.clone()]).unwrap();
    assert_eq!(vaa, 2.0 * va);
    let doubled: Vec<f64> = ga.flatten().iter().map(|v| 2.0 * v).collect();
    assert_eq!(gaa.flatten(), doubled);

    let (v1, mut g1) = grad_full(&model, &[a.clone(), b.clone()]).unwrap();
    let (v2, g2) = grad_full(&model, std::slice::from_ref(&c)).unwrap();
    let (v, g) = grad_full(&model, &[a, b, c]).unwrap();
    g1.add_assign(&g2);
    assert_eq!(v, v1 + v2);
    assert_eq!(g, g1);
}

#[test]
fn lambda_gradients_route_by_level() {
    let model = GenericDPModel::random(&tiny_config(), 21).unwrap();
    let batch: Vec<TrainingSample> = (0..5)
        .map(|k| sample(8, 9, k % 2, [15.0, 25.0][k % 2], 30 + k as u64))
        .collect();
    let mut expected = [[0.0; 2]; 2];
    for s in &batch {
        let (_, g) = grad_full(&model, std::slice::from_ref(s)).unwrap();
        for (t, stage) in g.stages.iter().enumerate() {
            let other = 1 - s.level_index;
            assert_eq!(stage.d_log_lambda[other], 0.0);
            // u_0 = f, so the first stage's data term has zero gradient
            if t > 0 {
                assert_ne!(stage.d_log_lambda[s.level_index], 0.0);
            }
            expected[t][s.level_index] += stage.d_log_lambda[s.level_index];
        }
    }
    let (_, g) = grad_full(&model, &batch).unwrap();
    for t in 0..2 {
        for j in 0..2 {
            let got = g.stages[t].d_log_lambda[j];
            assert!((got - expected[t][j]).abs() <= 1e-12 * expected[t][j].abs());
        }
    }
}

#[test]
fn grad_full_rejects_bad_batches() {
    let model = GenericDPModel::plain(&tiny_config()).unwrap();
    assert!(matches!(grad_full(&model, &[]), Err(crate::Error::Empty(_))));
    let bad = sample(8, 8, 0, 15.0, 1);
    let bad = TrainingSample { level_index: 2, ..bad };
    assert!(matches!(
        grad_full(&model, &[bad]),
        Err(crate::Error::IndexOutOfRange(_))
    ));
    let clean = random_image(8, 8, 2);
    assert!(TrainingSample::new(random_image(8, 7, 3), clean, 0).is_err());
}

fn small_batch() -> Vec<TrainingSample> {
    let images: Vec<Image> = (0..2).map(|k| synthetic_scene(40, 40, 100 + k).unwrap()).collect();
    make_training_set_from_images(&images, 16, 3, &[15.0, 25.0], 7).unwrap()
}

fn quick_opts(iters: usize) -> TrainOptions {
    let l = LbfgsOptions {
        max_iters: iters,
        ..Default::default()
    };
    TrainOptions {
        greedy: l,
        joint: l,
        reaction: true,
    }
}

#[test]
fn joint_training_reduces_loss_and_is_deterministic() {
    let batch = small_batch();
    let init = GenericDPModel::plain(&tiny_config()).unwrap();
    let (m1, r1) = train_joint(&init, &batch, &quick_opts(15)).unwrap();
    let (m2, _) = train_joint(&init, &batch, &quick_opts(15)).unwrap();
    assert_eq!(m1.params(), m2.params());
    let phase = &r1.phases[0];
    assert!(phase.last().value < phase.initial().value);
    for w in phase.history.windows(2) {
        assert!(w[1].value <= w[0].value);
    }
    let (v, _) = grad_full(&m1, &batch).unwrap();
    assert_eq!(v, phase.last().value);
}

#[test]
fn greedy_freezes_earlier_stages() {
    let batch = small_batch();
    let init = GenericDPModel::plain(&tiny_config()).unwrap();
    let (full, report) = train_greedy(&init, &batch, &quick_opts(5)).unwrap();
    assert_eq!(report.phases.len(), 2);
    let (first, _) = train_greedy(&init.truncated(1).unwrap(), &batch, &quick_opts(5)).unwrap();
    assert_eq!(full.stage_params(0), first.stage_params(0));
    assert_ne!(full.stage_params(1), init.stage_params(1));
}

#[test]
fn single_stage_greedy_equals_joint() {
    let batch = small_batch();
    let init = GenericDPModel::plain(&ModelConfig {
        num_stages: 1,
        ..tiny_config()
    })
    .unwrap();
    let (g, _) = train_greedy(&init, &batch, &quick_opts(6)).unwrap();
    let (j, _) = train_joint(&init, &batch, &quick_opts(6)).unwrap();
    assert_eq!(g.params(), j.params());
}

#[test]
fn clean_inputs_give_zero_gradients() {
    let mut model = GenericDPModel::zeros(&tiny_config()).unwrap();
    model.set_reaction(true);
    let batch: Vec<TrainingSample> = small_batch()
        .into_iter()
        .map(|s| TrainingSample::new(s.clean.clone(), s.clean, s.level_index).unwrap())
        .collect();
    let (v, g) = grad_full(&model, &batch).unwrap();
    assert_eq!(v, 0.0);
    assert_eq!(g.max_abs(), 0.0);
    let (trained, report) = train_joint(&model, &batch, &quick_opts(5)).unwrap();
    assert_eq!(report.phases[0].status, LbfgsStatus::Converged);
    assert_eq!(trained, model);
}

#[test]
fn training_without_reaction_keeps_lambda() {
    let batch = small_batch();
    let init = GenericDPModel::plain(&tiny_config()).unwrap();
    let opts = TrainOptions {
        reaction: false,
        ..quick_opts(4)
    };
    let (m, _) = train_joint(&init, &batch, &opts).unwrap();
    assert!(!m.reaction_enabled());
    for t in 1..=2 {
        assert_eq!(m.stage(t).unwrap().log_lambda, init.stage(t).unwrap().log_lambda);
    }
}

#[test]
fn training_set_construction() {
    let images: Vec<Image> = (0..3).map(|k| synthetic_scene(30, 24, k).unwrap()).collect();
    let a = make_training_set_from_images(&images, 12, 4, &[15.0, 25.0], 99).unwrap();
    let b = make_training_set_from_images(&images, 12, 4, &[15.0, 25.0], 99).unwrap();
    assert_eq!(a.len(), 12);
    assert_eq!(a, b);
    assert!(a.iter().any(|s| s.level_index == 0) && a.iter().any(|s| s.level_index == 1));
    let c = make_training_set_from_images(&images, 12, 4, &[15.0, 25.0], 100).unwrap();
    assert_ne!(a, c);

    let single = make_training_set_from_images(&images, 12, 4, &[20.0], 99).unwrap();
    assert!(single.iter().all(|s| s.level_index == 0));

    assert!(make_training_set_from_images(&images, 25, 1, &[15.0], 1).is_err());
    assert!(matches!(
        make_training_set_from_images(&[], 8, 1, &[15.0], 1),
        Err(crate::Error::Empty(_))
    ));
}

#[test]
fn sample_count_is_images_times_patches() {
    let images = vec![Image::filled(90, 90, 128.0).unwrap(); 1000];
    let recipes = plan_training_set(&images, 90, 2, 50, 5).unwrap();
    assert_eq!(recipes.len(), 2000);
}

#[test]
fn training_set_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<Image> = (0..2).map(|k| synthetic_scene(20, 20, k).unwrap()).collect();
    crate::imagecore::save_image(&images[1], dir.path().join("b.pgm")).unwrap();
    crate::imagecore::save_image(&images[0], dir.path().join("a.pgm")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    let from_dir = make_training_set(dir.path(), 10, 2, &[15.0, 25.0], 3).unwrap();
    let from_mem = make_training_set_from_images(&images, 10, 2, &[15.0, 25.0], 3).unwrap();
    assert_eq!(from_dir, from_mem);

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(
        make_training_set(empty.path(), 10, 2, &[15.0], 3),
        Err(crate::Error::Empty(_))
    ));
}
