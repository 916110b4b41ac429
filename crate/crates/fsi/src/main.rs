//! Command-line front end.

use clap::{Parser, Subcommand};
use fsi::config::RunConfig;
use fsi::diagnostics::{ConditionStatus, Severity};

#[derive(Parser)]
#[command(name = "fsi", about = "Fluid-structure interaction solver on a fixed reference configuration", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full coupled solve described by a configuration file.
    Run { config: String },
    /// Evaluate the initial-data compatibility conditions only.
    Check { config: String },
    /// Measure the discrete inf-sup constant of the configured pair.
    Infsup { config: String },
    /// Verify the analytic coefficient tensors against finite differences.
    TensorSelftest,
}

fn init_threads(cfg_threads: usize) {
    let threads = std::env::var("FSI_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(cfg_threads);
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

fn main() {
    let cli = Cli::parse();
    let code = dispatch(cli);
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> i32 {
    match cli.command {
        Command::Run { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            init_threads(cfg.threads);
            match fsi::run::run(&cfg) {
                Ok(artifacts) => {
                    println!(
                        "converged in {} outer iteration(s) over {} step(s); outputs in {}",
                        artifacts.output.outer_log.iters.len(),
                        artifacts.output.trajectory.n_steps(),
                        cfg.output_dir
                    );
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Check { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            init_threads(cfg.threads);
            match fsi::run::check(&cfg) {
                Ok(report) => {
                    println!("condition  domain        severity  status   residual");
                    for c in &report.conditions {
                        let severity = match c.severity {
                            Severity::Enforced => "enforced",
                            Severity::Warn => "warn",
                        };
                        let status = match c.status {
                            ConditionStatus::Pass => "pass",
                            ConditionStatus::Fail => "FAIL",
                            ConditionStatus::Skipped => "skipped",
                        };
                        println!(
                            "{:>9}  {:<12}  {:<8}  {:<7}  {:.17e}",
                            c.index, c.domain, severity, status, c.residual
                        );
                    }
                    if report.passed() {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Infsup { config } => {
            let cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            init_threads(cfg.threads);
            match fsi::run::infsup(&cfg) {
                Ok(report) => {
                    println!(
                        "beta_h = {:.17e} (degree {}/{} pair, {} test dofs, {} pressure dofs): {}",
                        report.beta_h,
                        report.velocity_degree,
                        report.pressure_degree,
                        report.n_test_dofs,
                        report.n_pressure_dofs,
                        if report.pass { "pass" } else { "fail" }
                    );
                    0
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::TensorSelftest => {
            let report = fsi::run::tensor_selftest();
            println!(
                "elastic tangent max relative error:  {:.17e}",
                report.max_elastic_err
            );
            println!(
                "penalty tangent max relative error:  {:.17e}",
                report.max_penalty_err
            );
            println!(
                "{} samples, tolerance {:.1e}: {}",
                report.samples,
                report.tolerance,
                if report.passed() { "pass" } else { "FAIL" }
            );
            if report.passed() {
                0
            } else {
                1
            }
        }
    }
}
