use std::fmt::Write as _;
use std::fs;

use super::data::{check_grid, load_manifest, load_samples};
use super::{sigma_grid, CliError, CliResult, InitKind, TrainArgs};
use crate::error::Error;
use crate::model::{serialize, GenericDPModel, ModelConfig, RbfConfig};
use crate::training::{train, IterationRecord, LbfgsOptions, LbfgsStatus, PhaseReport, Scheme, TrainOptions};

const RBF_RANGE: f64 = 310.0;

/// Per-stage greedy iterations and joint iterations for a total budget.
pub(crate) fn split_budget(
    scheme: Scheme,
    stages: usize,
    total: usize,
    greedy: Option<usize>,
) -> CliResult<(usize, usize)> {
    let per_stage = match (scheme, greedy) {
        (Scheme::Joint, _) => 0,
        (_, Some(g)) => g,
        (Scheme::Greedy, None) => total / stages,
        (Scheme::GreedyJoint, None) => total / (2 * stages),
    };
    let greedy_total = per_stage * stages;
    if greedy_total > total {
        return Err(CliError::Usage(format!(
            "{stages} greedy stages of {per_stage} iterations exceed the budget of {total}"
        )));
    }
    if scheme != Scheme::Joint && per_stage == 0 {
        return Err(CliError::Usage(format!(
            "a budget of {total} iterations cannot cover {stages} greedy stages"
        )));
    }
    let joint = match scheme {
        Scheme::Greedy => 0,
        _ => total - greedy_total,
    };
    if scheme == Scheme::GreedyJoint && joint == 0 {
        return Err(CliError::Usage("no iterations left for the joint phase".into()));
    }
    Ok((per_stage, joint))
}

/// A phase failed if it ended on a line-search failure without lowering
/// the loss, or on a non-finite loss.
fn phase_failed(p: &PhaseReport) -> bool {
    let last = p.last().value;
    !last.is_finite() || (p.status == LbfgsStatus::LineSearchFailed && last >= p.initial().value)
}

pub(crate) fn cmd_train(args: &TrainArgs) -> CliResult {
    let (manifest, base) = load_manifest(&args.data)?;
    let grid = manifest.sigma_grid.clone();
    check_grid(&grid)?;
    if let Some(requested) = sigma_grid(&args.grid) {
        if requested != grid {
            return Err(CliError::Usage(format!(
                "requested noise grid {requested:?} differs from the manifest grid {grid:?}"
            )));
        }
    }
    if args.filter_size % 2 == 0 {
        return Err(CliError::Usage(format!(
            "filter size must be odd, got {}",
            args.filter_size
        )));
    }
    let config = ModelConfig {
        num_stages: args.stages as usize,
        filter_size: args.filter_size as usize,
        num_filters: args.filters as usize,
        sigma_grid: grid,
        rbf: RbfConfig::spaced(args.rbf_centers as usize, -RBF_RANGE, RBF_RANGE),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (per_stage, joint) = split_budget(
        args.scheme,
        config.num_stages,
        args.lbfgs_iters as usize,
        args.greedy_iters.map(|g| g as usize),
    )?;
    let samples = load_samples(&manifest, &base)?;
    let init = match args.init {
        InitKind::Plain => GenericDPModel::plain(&config)?,
        InitKind::Random => GenericDPModel::random(&config, args.seed)?,
    };
    let opts = TrainOptions {
        greedy: LbfgsOptions {
            max_iters: per_stage,
            ..LbfgsOptions::default()
        },
        joint: LbfgsOptions {
            max_iters: joint,
            ..LbfgsOptions::default()
        },
        reaction: !args.no_reaction,
    };
    if !args.quiet {
        eprintln!(
            "training {} stages x {} filters ({}x{}) on {} samples, scheme {:?}, {} greedy iterations per stage, {} joint",
            config.num_stages,
            config.num_filters,
            config.filter_size,
            config.filter_size,
            samples.len(),
            args.scheme,
            per_stage,
            joint
        );
    }
    let mut csv = String::from("phase,iter,loss,grad_norm,evaluations,elapsed_s\n");
    let quiet = args.quiet;
    let mut observer = |phase: &str, r: &IterationRecord| {
        if !quiet {
            eprintln!(
                "[{phase}] iter {:>4} loss {:.6e} |g|inf {:.3e} evals {:>4} {:.1}s",
                r.iter, r.value, r.grad_norm, r.evaluations, r.elapsed_secs
            );
        }
        let _ = writeln!(
            csv,
            "{phase},{},{},{},{},{:.3}",
            r.iter, r.value, r.grad_norm, r.evaluations, r.elapsed_secs
        );
    };
    let (model, report) = train(&init, &samples, args.scheme, &opts, &mut observer)?;
    serialize(&model, &args.out)?;
    if let Some(path) = &args.log_csv {
        fs::write(path, csv).map_err(|e| CliError::from(Error::io(path, e)))?;
    }
    for p in &report.phases {
        println!(
            "{}: {:?}, loss {:.6e} -> {:.6e} in {} iterations",
            p.name,
            p.status,
            p.initial().value,
            p.last().value,
            p.last().iter
        );
    }
    if let Some(p) = report.phases.iter().find(|p| phase_failed(p)) {
        return Err(CliError::Numerical(format!(
            "optimizer failed in {} ({:?}); best model so far saved to {}",
            p.name,
            p.status,
            args.out.display()
        )));
    }
    println!("model saved to {}", args.out.display());
    Ok(())
}
