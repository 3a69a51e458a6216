use super::{CliResult, DeconvolveArgs, DenoiseArgs};
use crate::deconv::{hqs_deconvolve, load_psf, schedule_for_sigma, schedule_is_clamped, DeconvProblem};
use crate::error::Result;
use crate::imagecore::{load_image, psnr, save_image, ssim, Image};
use crate::model::deserialize;
use std::path::Path;

fn report(input: &Image, output: &Image, reference: Option<&Path>) -> Result<()> {
    if let Some(path) = reference {
        let clean = load_image(path)?;
        let out = output.clamped();
        println!(
            "psnr_in={:.4} psnr_out={:.4} ssim_out={:.6}",
            psnr(input, &clean)?,
            psnr(&out, &clean)?,
            ssim(&out, &clean)?
        );
    }
    Ok(())
}

pub(crate) fn cmd_denoise(args: &DenoiseArgs) -> CliResult {
    let model = deserialize(&args.model)?;
    let f = load_image(&args.input)?;
    let u = model.denoise(&f, args.sigma)?;
    save_image(&u, &args.out)?;
    report(&f, &u, args.reference.as_deref())?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub(crate) fn cmd_deconvolve(args: &DeconvolveArgs) -> CliResult {
    let model = deserialize(&args.model)?;
    let f = load_image(&args.input)?;
    let psf = load_psf(&args.psf)?;
    if psf.was_unnormalized() {
        eprintln!("warning: psf taps sum to {}, normalized to 1", psf.raw_sum);
    }
    if schedule_is_clamped(args.sigma) {
        eprintln!(
            "warning: noise level {} is outside [2.55, 10.2]; using the nearest tabulated schedule",
            args.sigma
        );
    }
    let mut schedule = schedule_for_sigma(args.sigma)?;
    schedule.iterations = args.iterations.map(|k| k as usize);
    let problem = DeconvProblem::new(f.clone(), psf.kernel, args.sigma)?;
    if problem.psf_has_negative_taps() {
        eprintln!("warning: psf has negative taps");
    }
    let res = hqs_deconvolve(&model, &problem, &schedule)?;
    if res.zero_model {
        eprintln!("warning: the model has no diffusion term; output is the data-term solution");
    }
    save_image(&res.image, &args.out)?;
    report(&f, &res.image, args.reference.as_deref())?;
    println!("wrote {}", args.out.display());
    Ok(())
}
