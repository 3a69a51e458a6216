use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use super::{CliError, CliResult, EvalArgs, EvalMode};
use crate::deconv::{blur_and_noise, hqs_deconvolve, load_psf, schedule_for_sigma, DeconvProblem};
use crate::error::{Error, Result};
use crate::imagecore::rng::derive_seed;
use crate::imagecore::{add_gaussian_noise, load_image, psnr, ssim, Image, Kernel};
use crate::model::{deserialize, GenericDPModel};
use crate::training::image_files;

pub const CSV_HEADER: &str = "image,kernel,sigma,psnr_in,psnr_out,ssim_out,ms";
const DENOISE_SIGMAS: [f64; 4] = [5.0, 15.0, 25.0, 50.0];
const DECONV_SIGMAS: [f64; 4] = [2.55, 5.10, 7.65, 10.20];
/// Image and kernel label of aggregate rows.
pub const MEAN_LABEL: &str = "MEAN";
const NO_KERNEL: &str = "-";

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub image: String,
    pub kernel: String,
    pub sigma: f64,
    pub psnr_in: f64,
    pub psnr_out: f64,
    pub ssim_out: f64,
    pub ms: f64,
}

impl BenchmarkRow {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.image, self.kernel, self.sigma, self.psnr_in, self.psnr_out, self.ssim_out, self.ms
        )
    }
}

/// Per-image rows grouped by noise level, each group followed by its mean.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub means: Vec<BenchmarkRow>,
}

impl BenchmarkReport {
    fn from_rows(rows: Vec<BenchmarkRow>) -> Self {
        let mut sigmas: Vec<f64> = Vec::new();
        for r in &rows {
            if !sigmas.contains(&r.sigma) {
                sigmas.push(r.sigma);
            }
        }
        let means = sigmas
            .iter()
            .map(|&s| {
                let group: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.sigma == s).collect();
                let n = group.len() as f64;
                let mean = |f: fn(&BenchmarkRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
                BenchmarkRow {
                    image: MEAN_LABEL.into(),
                    kernel: if group.iter().all(|r| r.kernel == NO_KERNEL) {
                        NO_KERNEL.into()
                    } else {
                        MEAN_LABEL.into()
                    },
                    sigma: s,
                    psnr_in: mean(|r| r.psnr_in),
                    psnr_out: mean(|r| r.psnr_out),
                    ssim_out: mean(|r| r.ssim_out),
                    ms: mean(|r| r.ms),
                }
            })
            .collect();
        Self { rows, means }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for m in &self.means {
            for r in self.rows.iter().filter(|r| r.sigma == m.sigma) {
                out.push_str(&r.csv_line());
                out.push('\n');
            }
            out.push_str(&m.csv_line());
            out.push('\n');
        }
        out
    }
}

struct Task<'a> {
    name: &'a str,
    clean: &'a Image,
    kernel: Option<(&'a str, &'a Kernel)>,
    sigma: f64,
    seed: u64,
}

fn run_task(model: &GenericDPModel, t: &Task, timing: bool) -> Result<BenchmarkRow> {
    let (degraded, restored, ms) = match t.kernel {
        None => {
            let f = add_gaussian_noise(t.clean, t.sigma, t.seed)?;
            let start = Instant::now();
            let u = model.denoise(&f, t.sigma)?;
            (f, u, start.elapsed())
        }
        Some((_, psf)) => {
            let f = blur_and_noise(t.clean, psf, t.sigma, t.seed)?;
            let problem = DeconvProblem::new(f.clone(), psf.clone(), t.sigma)?;
            let schedule = schedule_for_sigma(t.sigma)?;
            let start = Instant::now();
            let res = hqs_deconvolve(model, &problem, &schedule)?;
            (f, res.image, start.elapsed())
        }
    };
    let out = restored.clamped();
    Ok(BenchmarkRow {
        image: t.name.to_string(),
        kernel: t.kernel.map_or(NO_KERNEL, |(k, _)| k).to_string(),
        sigma: t.sigma,
        psnr_in: psnr(&degraded, t.clean)?,
        psnr_out: psnr(&out, t.clean)?,
        ssim_out: ssim(&out, t.clean)?,
        ms: if timing { ms.as_secs_f64() * 1e3 } else { 0.0 },
    })
}

fn file_label(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn psf_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("txt") || e.eq_ignore_ascii_case("psf"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!("no .txt or .psf kernels in {}", dir.display())));
    }
    Ok(files)
}

/// Runs the benchmark; noise for (level `a`, kernel `b`, image `c`) is
/// seeded from `derive_seed(derive_seed(derive_seed(seed, a), b), c)`.
pub(crate) fn benchmark(
    model: &GenericDPModel,
    images: &[(String, Image)],
    kernels: &[(String, Kernel)],
    sigmas: &[f64],
    seed: u64,
    timing: bool,
) -> Result<BenchmarkReport> {
    if images.is_empty() {
        return Err(Error::Empty("no test images".into()));
    }
    let mut tasks = Vec::new();
    for (a, &sigma) in sigmas.iter().enumerate() {
        let sa = derive_seed(seed, a as u64);
        let kernel_list: Vec<Option<(&str, &Kernel)>> = if kernels.is_empty() {
            vec![None]
        } else {
            kernels.iter().map(|(n, k)| Some((n.as_str(), k))).collect()
        };
        for (b, kernel) in kernel_list.into_iter().enumerate() {
            let sb = derive_seed(sa, b as u64);
            for (c, (name, clean)) in images.iter().enumerate() {
                tasks.push(Task {
                    name,
                    clean,
                    kernel,
                    sigma,
                    seed: derive_seed(sb, c as u64),
                });
            }
        }
    }
    let rows = tasks
        .par_iter()
        .map(|t| run_task(model, t, timing))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport::from_rows(rows))
}

pub(crate) fn cmd_eval(args: &EvalArgs) -> CliResult {
    let model = deserialize(&args.model)?;
    let images = image_files(&args.images)?
        .iter()
        .map(|p| Ok((file_label(p), load_image(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let (sigmas, kernels) = match args.mode {
        EvalMode::Denoise => {
            if args.psfs.is_some() {
                return Err(CliError::Usage("--psfs only applies to --mode deconv".into()));
            }
            let sigmas = args.sigmas.clone().unwrap_or_else(|| DENOISE_SIGMAS.to_vec());
            for &s in &sigmas {
                model.level_index(s)?;
            }
            (sigmas, Vec::new())
        }
        EvalMode::Deconv => {
            let dir = args
                .psfs
                .as_ref()
                .ok_or_else(|| CliError::Usage("--mode deconv needs --psfs".into()))?;
            let kernels = psf_files(dir)?
                .iter()
                .map(|p| {
                    let psf = load_psf(p)?;
                    if psf.was_unnormalized() {
                        eprintln!("warning: {} sums to {}, normalized to 1", p.display(), psf.raw_sum);
                    }
                    let label = p
                        .file_stem()
                        .map(|n| n.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    Ok((label, psf.kernel))
                })
                .collect::<Result<Vec<_>>>()?;
            (args.sigmas.clone().unwrap_or_else(|| DECONV_SIGMAS.to_vec()), kernels)
        }
    };
    let report = benchmark(&model, &images, &kernels, &sigmas, args.seed, args.timing)?;
    let csv = report.to_csv();
    match &args.out {
        Some(path) => {
            fs::write(path, &csv).map_err(|e| CliError::from(Error::io(path, e)))?;
            for m in &report.means {
                println!(
                    "sigma {} kernel {}: psnr {:.4} -> {:.4}, ssim {:.4}",
                    m.sigma, m.kernel, m.psnr_in, m.psnr_out, m.ssim_out
                );
            }
        }
        None => print!("{csv}"),
    }
    Ok(())
}
