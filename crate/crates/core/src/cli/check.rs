use super::{CliError, CliResult, GradcheckArgs};
use crate::training::{gradcheck_suite, GradcheckOptions};

pub(crate) fn cmd_gradcheck(args: &GradcheckArgs) -> CliResult {
    let opts = GradcheckOptions {
        eps: args.eps,
        tolerance: args.tolerance,
        corrupt_lambda_sign: args.corrupt_lambda,
    };
    let suite = gradcheck_suite(args.count as usize, args.seed, &opts)?;
    let mut failed = 0;
    for (k, e) in suite.iter().enumerate() {
        let c = &e.config;
        let worst = e
            .report
            .blocks
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
            .map_or(String::from("-"), |b| format!("stage {} {}", b.stage, b.block));
        println!(
            "{k:>3} T={} N={} r={} M={} {}x{} params={:<5} max_rel={:.3e} ({worst}) {}",
            c.num_stages,
            c.num_filters,
            c.filter_size,
            c.sigma_grid.len(),
            e.width,
            e.height,
            e.report.num_params,
            e.report.max_rel_error,
            if e.report.passed { "PASS" } else { "FAIL" }
        );
        if !e.report.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(CliError::Numerical(format!(
            "{failed} of {} gradient checks exceeded relative error {}",
            suite.len(),
            args.tolerance
        )));
    }
    println!("all {} gradient checks passed", suite.len());
    Ok(())
}
