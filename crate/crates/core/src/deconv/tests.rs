use nalgebra::{DMatrix, DVector};
use rustfft::num_complex::Complex64;

use super::*;
use crate::imagecore::rng::SplitMix64;
use crate::imagecore::{psnr, synthetic_scene};
use crate::model::ModelConfig;
use crate::testutil::{max_abs_diff, random_image};

fn random_psf(r: usize, seed: u64) -> Kernel {
    let mut rng = SplitMix64::new(seed);
    Kernel::new(r, (0..r * r).map(|_| rng.next_f64() + 0.05).collect())
        .unwrap()
        .normalized()
        .unwrap()
}

/// Dense periodic convolution matrix from `y[x,y] = Σ k[a,b] u[x+c−b, y+c−a]`
/// with wrapped indices.
fn dense_periodic(w: usize, h: usize, k: &Kernel) -> DMatrix<f64> {
    let r = k.size();
    let c = r / 2;
    let mut m = DMatrix::zeros(w * h, w * h);
    for y in 0..h {
        for x in 0..w {
            for a in 0..r {
                for b in 0..r {
                    let sy = (y + h + c - a) % h;
                    let sx = (x + w + c - b) % w;
                    m[(y * w + x, sy * w + sx)] += k.tap(a, b);
                }
            }
        }
    }
    m
}

fn small_config(stages: usize) -> ModelConfig {
    ModelConfig {
        num_stages: stages,
        filter_size: 3,
        num_filters: 4,
        sigma_grid: vec![10.0],
        rbf: crate::model::RbfConfig::spaced(15, -280.0, 280.0),
    }
}

#[test]
fn schedule_table_and_clamping() {
    let s = schedule_for_sigma(2.55).unwrap();
    assert_eq!((s.lambda_data, s.gamma), (100.0, 1.8));
    let s = schedule_for_sigma(5.10).unwrap();
    assert_eq!((s.lambda_data, s.gamma), (25.0, 1.7));
    let s = schedule_for_sigma(7.65).unwrap();
    assert_eq!((s.lambda_data, s.gamma), (100.0 / 9.0, 1.6));
    let s = schedule_for_sigma(10.20).unwrap();
    assert_eq!((s.lambda_data, s.gamma), (6.25, 1.5));
    assert_eq!(schedule_for_sigma(20.0).unwrap(), schedule_for_sigma(10.2).unwrap());
    assert_eq!(schedule_for_sigma(1.0).unwrap(), schedule_for_sigma(2.55).unwrap());
    let mid = schedule_for_sigma(3.825).unwrap();
    assert!((mid.lambda_data - 62.5).abs() < 1e-12);
    assert!((mid.gamma - 1.75).abs() < 1e-12);
    assert!(schedule_for_sigma(0.0).is_err());
    assert!(schedule_for_sigma(-1.0).is_err());
    assert!(schedule_for_sigma(f64::NAN).is_err());
    assert!(schedule_is_clamped(20.0) && !schedule_is_clamped(5.0));
}

#[test]
fn beta_grows_and_lambda1_shrinks() {
    let s = schedule_for_sigma(2.55).unwrap();
    assert_eq!(s.beta(1), 1.0);
    for t in 1..8 {
        assert_eq!(s.beta(t + 1), 1.8f64.powi(t as i32));
        assert!(((s.beta(t + 1) / s.beta(t)) - 1.8).abs() < 1e-14);
        assert!(s.lambda1(t + 1) < s.lambda1(t));
    }
    assert!(HqsSchedule::new(1.0, 1.0, None).is_err());
    assert!(HqsSchedule::new(0.0, 1.5, None).is_err());
    assert!(HqsSchedule::new(1.0, 1.5, Some(0)).is_err());
}

#[test]
fn otf_of_delta_is_all_ones_and_dc_is_one() {
    let otf = psf_to_otf(&Kernel::delta(5).unwrap(), 9, 8).unwrap();
    for c in otf.data() {
        assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }
    let otf = psf_to_otf(&random_psf(5, 3), 11, 7).unwrap();
    assert!((otf.get(0, 0) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
    assert!(psf_to_otf(&random_psf(5, 3), 5, 9).is_err());
}

#[test]
fn otf_matches_circulant_eigenvalues() {
    let (w, h) = (8, 8);
    let bx = Kernel::new(3, vec![1.0 / 9.0; 9]).unwrap();
    let m = dense_periodic(w, h, &bx);
    let otf = psf_to_otf(&bx, w, h).unwrap();
    for l in 0..h {
        for k in 0..w {
            // Fourier mode e^{-2πi(kx/w + ly/h)} is an eigenvector of the circulant
            let v: Vec<Complex64> = (0..w * h)
                .map(|p| {
                    let (x, y) = ((p % w) as f64, (p / w) as f64);
                    let ang = -2.0 * std::f64::consts::PI * (k as f64 * x / w as f64 + l as f64 * y / h as f64);
                    Complex64::from_polar(1.0, ang)
                })
                .collect();
            let lambda = otf.get(k, l);
            for row in 0..w * h {
                let mv: Complex64 = (0..w * h).map(|col| v[col] * m[(row, col)]).sum();
                assert!((mv - lambda * v[row]).norm() < 1e-12, "mode ({k},{l})");
            }
        }
    }
}

#[test]
fn otf_product_equals_periodic_convolution() {
    let img = random_image(12, 10, 1);
    let psf = random_psf(5, 2);
    let otf = psf_to_otf(&psf, 12, 10).unwrap();
    let fi = fft2_image(&img);
    let prod: Vec<Complex64> = otf.data().iter().zip(fi.data()).map(|(a, b)| a * b).collect();
    let via_fft = ifft2(&Spectrum::new(12, 10, prod)).real_image();
    let direct = conv2(&img, &psf, Boundary::Periodic).unwrap();
    assert!(max_abs_diff(via_fft.data(), direct.data()) < 1e-10);
}

#[test]
fn u_solve_matches_dense_solver() {
    let (w, h) = (16, 16);
    let z = random_image(w, h, 10);
    let f = random_image(w, h, 11);
    let psf = random_psf(3, 12);
    let l1 = 4.0;
    let hm = dense_periodic(w, h, &psf);
    let a = hm.transpose() * &hm * l1 + DMatrix::identity(w * h, w * h);
    let rhs = hm.transpose() * DVector::from_column_slice(f.data()) * l1 + DVector::from_column_slice(z.data());
    let dense = a.lu().solve(&rhs).unwrap();
    let otf = psf_to_otf(&psf, w, h).unwrap();
    let u = u_subproblem_solve(&z, &f, &otf, l1).unwrap();
    let err = max_abs_diff(u.data(), dense.as_slice());
    assert!(err < 1e-8, "max diff {err}");
    assert!(normal_equation_residual(&u, &z, &f, &psf, l1).unwrap() < 1e-8);
}

#[test]
fn u_solve_limits() {
    let z = random_image(10, 9, 1);
    let f = random_image(10, 9, 2);
    let otf = psf_to_otf(&random_psf(3, 3), 10, 9).unwrap();
    assert_eq!(u_subproblem_solve(&z, &f, &otf, 0.0).unwrap(), z);

    let delta = psf_to_otf(&Kernel::delta(3).unwrap(), 10, 9).unwrap();
    let u = u_subproblem_solve(&z, &f, &delta, 3.0).unwrap();
    let expect: Vec<f64> = f
        .data()
        .iter()
        .zip(z.data())
        .map(|(fv, zv)| (3.0 * fv + zv) / 4.0)
        .collect();
    assert!(max_abs_diff(u.data(), &expect) < 1e-10);

    assert!(u_subproblem_solve(&z, &f, &otf, -1.0).is_err());
    assert!(u_subproblem_solve(&z, &random_image(9, 9, 1), &otf, 1.0).is_err());
    let wrong = psf_to_otf(&random_psf(3, 3), 9, 9).unwrap();
    assert!(u_subproblem_solve(&z, &f, &wrong, 1.0).is_err());
}

#[test]
fn taper_keeps_interior_and_delta_is_identity() {
    let f = random_image(20, 17, 4);
    assert_eq!(edge_taper(&f, &Kernel::delta(1).unwrap()).unwrap(), f);
    let delta5 = Kernel::delta(5).unwrap();
    assert!(max_abs_diff(edge_taper(&f, &delta5).unwrap().data(), f.data()) < 1e-12);
    let psf = random_psf(5, 5);
    let t = edge_taper(&f, &psf).unwrap();
    for y in 2..15 {
        for x in 2..18 {
            assert_eq!(t.get(x, y), f.get(x, y));
        }
    }
    assert_ne!(t.get(0, 0), f.get(0, 0));
    assert!(edge_taper(&f, &random_psf(17, 1)).is_err());
}

fn border_gradient_energy(u: &Image, band: usize) -> f64 {
    let (w, h) = (u.width(), u.height());
    let mut e = 0.0;
    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let d = x.min(y).min(w - 1 - x).min(h - 1 - y);
            if d < band {
                let gx = u.get(x + 1, y) - u.get(x, y);
                let gy = u.get(x, y + 1) - u.get(x, y);
                e += gx * gx + gy * gy;
            }
        }
    }
    e
}

#[test]
fn taper_reduces_boundary_ringing() {
    let clean = synthetic_scene(64, 64, 7).unwrap();
    for psf in [gaussian_kernel(7, 1.6).unwrap(), motion_kernel(9, 7.0, 30.0).unwrap()] {
        let f = blur_and_noise(&clean, &psf, 1.0, 8).unwrap();
        let otf = psf_to_otf(&psf, 64, 64).unwrap();
        let plain = u_subproblem_solve(&f, &f, &otf, 100.0).unwrap();
        let tf = edge_taper(&f, &psf).unwrap();
        let tapered = u_subproblem_solve(&tf, &tf, &otf, 100.0).unwrap();
        let band = psf.radius();
        let (a, b) = (
            border_gradient_energy(&plain, band),
            border_gradient_energy(&tapered, band),
        );
        assert!(b < a, "tapered {b} vs plain {a}");
    }
}

#[test]
fn kernels_are_normalized() {
    let g = gaussian_kernel(7, 1.6).unwrap();
    assert!(g.is_normalized());
    assert_eq!(g.tap(3, 3), g.taps().iter().cloned().fold(0.0, f64::max));
    assert_eq!(g.tap(0, 2), g.tap(2, 0));
    let m = motion_kernel(9, 7.0, 0.0).unwrap();
    assert!(m.is_normalized());
    // horizontal blur stays on the centre row
    for a in 0..9 {
        if a != 4 {
            assert!(m.taps()[a * 9..a * 9 + 9].iter().all(|&v| v == 0.0));
        }
    }
    assert!(motion_kernel(9, 7.0, 45.0).unwrap().is_normalized());
    assert!(motion_kernel(8, 3.0, 0.0).is_err());
    assert!(motion_kernel(5, 6.0, 0.0).is_err());
    assert!(gaussian_kernel(5, 0.0).is_err());
}

#[test]
fn psf_text_roundtrip_and_normalization() {
    let k = motion_kernel(9, 6.0, 20.0).unwrap();
    let loaded = parse_psf(&format_psf(&k)).unwrap();
    assert!(max_abs_diff(loaded.kernel.taps(), k.taps()) < 1e-15);
    assert!(!loaded.was_unnormalized());

    let loaded = parse_psf("2 3\n1 2 3\n4 5 6\n").unwrap();
    assert_eq!((loaded.rows, loaded.cols), (2, 3));
    assert_eq!(loaded.raw_sum, 21.0);
    assert!(loaded.was_unnormalized());
    assert!(loaded.kernel.is_normalized());
    assert_eq!(loaded.kernel.size(), 3);

    assert!(parse_psf("2 2\n1 2 3").is_err());
    assert!(parse_psf("2 x\n1 2").is_err());
    assert!(parse_psf("1 2\n1 -1").is_err());
    assert!(parse_psf("").is_err());
    assert!(parse_psf("1 1\nnan").is_err());
}

#[test]
fn problem_validation() {
    let f = random_image(16, 16, 1);
    assert!(DeconvProblem::new(f.clone(), random_psf(5, 1), 2.55).is_ok());
    let unnorm = Kernel::new(3, vec![0.2; 9]).unwrap();
    assert!(DeconvProblem::new(f.clone(), unnorm, 2.55).is_err());
    assert!(DeconvProblem::new(f.clone(), random_psf(17, 1), 2.55).is_err());
    assert!(DeconvProblem::new(f.clone(), random_psf(5, 1), -1.0).is_err());
    let mut neg = vec![0.0; 9];
    neg[4] = 1.2;
    neg[0] = -0.2;
    let p = DeconvProblem::new(f, Kernel::new(3, neg).unwrap(), 1.0).unwrap();
    assert!(p.psf_has_negative_taps());
}

#[test]
fn huge_data_weight_with_delta_psf_returns_observation() {
    let model = GenericDPModel::zeros(&small_config(3)).unwrap();
    let f = synthetic_scene(24, 20, 3).unwrap();
    let problem = DeconvProblem::new(f.clone(), Kernel::delta(3).unwrap(), 1.0).unwrap();
    let schedule = HqsSchedule::new(1e12, 1.5, None).unwrap();
    let res = hqs_deconvolve(&model, &problem, &schedule).unwrap();
    assert!(res.zero_model);
    let rel = res.image.sub(&f).norm() / f.norm();
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn zero_model_keeps_z_equal_to_u() {
    // identity diffusion: one HQS step from u_0 is the u-update with z = u_0
    let model = GenericDPModel::zeros(&small_config(1)).unwrap();
    let clean = synthetic_scene(32, 32, 4).unwrap();
    let psf = gaussian_kernel(5, 1.0).unwrap();
    let f = blur_and_noise(&clean, &psf, 2.55, 5).unwrap();
    let problem = DeconvProblem::new(f.clone(), psf.clone(), 2.55).unwrap();
    let schedule = schedule_for_sigma(2.55).unwrap();
    let res = hqs_deconvolve(&model, &problem, &schedule).unwrap();
    let tf = edge_taper(&f, &psf).unwrap();
    let otf = psf_to_otf(&psf, 32, 32).unwrap();
    let expect = u_subproblem_solve(&tf, &tf, &otf, 100.0).unwrap();
    assert_eq!(res.image, expect);
}

#[test]
fn betas_residuals_and_determinism() {
    let model = GenericDPModel::random(&small_config(3), 9).unwrap();
    let clean = synthetic_scene(32, 28, 5).unwrap();
    let psf = motion_kernel(9, 6.0, 60.0).unwrap();
    let f = blur_and_noise(&clean, &psf, 2.55, 6).unwrap();
    let problem = DeconvProblem::new(f, psf, 2.55).unwrap();
    let schedule = schedule_for_sigma(2.55).unwrap();
    let a = hqs_deconvolve(&model, &problem, &schedule).unwrap();
    let b = hqs_deconvolve(&model, &problem, &schedule).unwrap();
    assert_eq!(a.image, b.image);
    assert_eq!(a.betas, vec![1.0, 1.8, 1.8 * 1.8]);
    assert_eq!(a.lambda1, vec![100.0, 100.0 / 1.8, 100.0 / (1.8 * 1.8)]);
    assert!(a.residuals.iter().all(|&r| r < 1e-8));
    assert!(!a.zero_model);

    let two = HqsSchedule {
        iterations: Some(2),
        ..schedule
    };
    assert_eq!(hqs_deconvolve(&model, &problem, &two).unwrap().betas.len(), 2);
    let many = HqsSchedule {
        iterations: Some(4),
        ..schedule
    };
    assert!(hqs_deconvolve(&model, &problem, &many).is_err());
}

#[test]
fn delta_psf_reduces_to_denoising() {
    let model = GenericDPModel::plain(&small_config(3)).unwrap();
    let clean = synthetic_scene(48, 48, 11).unwrap();
    let f = crate::imagecore::add_gaussian_noise(&clean, 10.2, 12).unwrap();
    let problem = DeconvProblem::new(f.clone(), Kernel::delta(3).unwrap(), 10.2).unwrap();
    let res = hqs_deconvolve(&model, &problem, &schedule_for_sigma(10.2).unwrap()).unwrap();
    assert!(psnr(&res.image, &clean).unwrap() >= psnr(&f, &clean).unwrap());
}
