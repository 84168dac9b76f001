//! The `pooltest` command line: threshold reports and sweeps, seeded Monte
//! Carlo experiments, exhaustive oracle checks, and CSV-to-SVG plotting.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on an internal
//! invariant violation.

use clap::{Parser, Subcommand};
use pooltest_core::{thresholds, NoisyChannel};
use pooltest_harness::experiment::{
    experiments_csv, run_experiment, sweep_csv, ChannelSpec, ExperimentConfig, Mode,
};
use pooltest_harness::svg::{render_svg, PlotSpec};
use pooltest_harness::{oracle_check, HarnessError};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pooltest",
    about = "Noisy group testing: thresholds, designs, decoders, and seeded experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the threshold constants for one (alpha, channel) pair.
    Thresholds {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        p01: f64,
        #[arg(long)]
        p10: f64,
        /// Population size at which to evaluate m_na and m_ad.
        #[arg(long, default_value_t = 10_000)]
        n: usize,
    },
    /// Sweep thresholds over alphas x channels and emit CSV.
    Sweep {
        /// Explicit alpha value; repeatable.
        #[arg(long = "alpha")]
        alphas: Vec<f64>,
        /// Inclusive range start:step:end, e.g. 0.01:0.01:0.45.
        #[arg(long)]
        alpha_range: Option<String>,
        /// Channel false-positive rate; repeat once per channel.
        #[arg(long = "p01")]
        p01: Vec<f64>,
        /// Channel false-negative rate; paired with --p01 by position.
        #[arg(long = "p10")]
        p10: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run seeded Monte Carlo experiments and emit a CSV summary.
    Simulate {
        /// JSON config file mirroring the experiment schema.
        #[arg(long, conflicts_with_all = ["mode", "n", "alpha", "p01", "p10"])]
        config: Option<PathBuf>,
        /// non-adaptive | adaptive
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        p01: Option<f64>,
        #[arg(long)]
        p10: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Budget multiplier; repeatable (default 1.0).
        #[arg(long = "multiplier")]
        multipliers: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustively verify the exact estimators on every small design.
    OracleCheck {
        #[arg(long, default_value_t = 3)]
        max_n: usize,
        #[arg(long, default_value_t = 3)]
        max_tests: usize,
    },
    /// Render CSV columns as an SVG line chart.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Column providing x coordinates.
        #[arg(long)]
        x: String,
        /// Column to plot as a series; repeatable.
        #[arg(long = "series")]
        series: Vec<String>,
        /// Partition rows by this column, one curve per value; repeatable.
        #[arg(long = "group-by")]
        group_by: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long, default_value_t = 720)]
        width: u32,
        #[arg(long, default_value_t = 480)]
        height: u32,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are not usage errors.
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err @ HarnessError::Invariant(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
        Ok(Err(err)) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("error: internal invariant violation (panic)");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), HarnessError> {
    match command {
        Command::Thresholds { alpha, p01, p10, n } => {
            let ch = NoisyChannel::new(p01, p10)?;
            let constants = ch.constants();
            let report = thresholds::report(n, alpha, &ch);
            println!("alpha       = {alpha}");
            println!("p01, p10    = {p01}, {p10}");
            println!("C           = {:.12}", constants.c_threshold);
            println!("beta        = {:.12}", constants.beta);
            println!("gamma*      = {}", report.gamma_star);
            println!("xi(gamma*)  = {:.12}", report.xi_at_gamma_star);
            println!("c_na        = {:.12}", report.c_na);
            println!("c_ad        = {:.12}", report.c_ad);
            println!("m_na(n={n}) = {:.3}", report.m_na);
            println!("m_ad(n={n}) = {:.3}", report.m_ad);
            Ok(())
        }
        Command::Sweep {
            alphas,
            alpha_range,
            p01,
            p10,
            n,
            out,
        } => {
            let mut all_alphas = alphas;
            if let Some(range) = alpha_range {
                all_alphas.extend(parse_range(&range)?);
            }
            if all_alphas.is_empty() {
                return Err(HarnessError::Usage(
                    "no alphas given; use --alpha or --alpha-range".into(),
                ));
            }
            if p01.is_empty() || p01.len() != p10.len() {
                return Err(HarnessError::Usage(
                    "channels come as positional pairs: one --p10 per --p01".into(),
                ));
            }
            let channels: Vec<NoisyChannel> = p01
                .iter()
                .zip(&p10)
                .map(|(&a, &b)| NoisyChannel::new(a, b))
                .collect::<Result<_, _>>()?;
            let reports = thresholds::sweep(n, &all_alphas, &channels);
            write_output(out.as_deref(), &sweep_csv(&reports))
        }
        Command::Simulate {
            config,
            mode,
            n,
            alpha,
            p01,
            p10,
            eps,
            trials,
            seed,
            multipliers,
            out,
        } => {
            let cfg = if let Some(path) = config {
                ExperimentConfig::from_json(&std::fs::read_to_string(path)?)?
            } else {
                let mode = match mode.as_deref() {
                    Some("non-adaptive") => Mode::NonAdaptive,
                    Some("adaptive") => Mode::Adaptive,
                    Some(other) => {
                        return Err(HarnessError::Usage(format!(
                            "unknown mode '{other}'; expected non-adaptive or adaptive"
                        )))
                    }
                    None => {
                        return Err(HarnessError::Usage(
                            "either --config or --mode/--n/--alpha/--p01/--p10 is required".into(),
                        ))
                    }
                };
                let missing = |what: &str| {
                    HarnessError::Usage(format!("--{what} is required without --config"))
                };
                ExperimentConfig {
                    mode,
                    n: n.ok_or_else(|| missing("n"))?,
                    alpha: alpha.ok_or_else(|| missing("alpha"))?,
                    channel: ChannelSpec {
                        p01: p01.ok_or_else(|| missing("p01"))?,
                        p10: p10.ok_or_else(|| missing("p10"))?,
                    },
                    eps,
                    trials,
                    seed,
                    budget_multipliers: if multipliers.is_empty() {
                        vec![1.0]
                    } else {
                        multipliers
                    },
                }
            };
            let rows = run_experiment(&cfg)?;
            write_output(out.as_deref(), &experiments_csv(&rows))
        }
        Command::OracleCheck { max_n, max_tests } => {
            let pairs = oracle_check::default_parameter_pairs();
            let report = oracle_check::run_exhaustive(max_n, max_tests, &pairs)?;
            println!(
                "checked {} designs x {} parameter pairs",
                report.designs_checked,
                pairs.len()
            );
            println!(
                "genie threshold-vs-direct comparisons: {}",
                report.equivalence_checks
            );
            println!(
                "success-probability orderings:         {}",
                report.ordering_checks
            );
            if report.passed() {
                println!("PASS: all exhaustive oracle checks hold");
                Ok(())
            } else {
                for violation in report.violations.iter().take(10) {
                    println!("FAIL: {violation}");
                }
                Err(HarnessError::Invariant(format!(
                    "{} oracle violations",
                    report.violations.len()
                )))
            }
        }
        Command::Plot {
            input,
            x,
            series,
            group_by,
            title,
            width,
            height,
            out,
        } => {
            if series.is_empty() {
                return Err(HarnessError::Usage(
                    "at least one --series is required".into(),
                ));
            }
            let csv_text = std::fs::read_to_string(input)?;
            let spec = PlotSpec {
                x_column: x,
                series,
                group_by,
                title,
                width,
                height,
            };
            let svg = render_svg(&csv_text, &spec)?;
            std::fs::write(out, svg)?;
            Ok(())
        }
    }
}

fn parse_range(range: &str) -> Result<Vec<f64>, HarnessError> {
    let parts: Vec<&str> = range.split(':').collect();
    let [start, step, end] = parts.as_slice() else {
        return Err(HarnessError::Usage(format!(
            "bad range '{range}'; expected start:step:end"
        )));
    };
    let parse = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| HarnessError::Usage(format!("bad range component '{s}': {e}")))
    };
    let (start, step, end) = (parse(start)?, parse(step)?, parse(end)?);
    if !step.is_finite() || step <= 0.0 || end < start {
        return Err(HarnessError::Usage(format!(
            "empty or reversed range '{range}'"
        )));
    }
    let mut values = Vec::new();
    let mut k = 0usize;
    loop {
        let value = start + step * k as f64;
        if value > end + step * 1e-9 {
            break;
        }
        values.push(value);
        k += 1;
    }
    Ok(values)
}

fn write_output(path: Option<&std::path::Path>, text: &str) -> Result<(), HarnessError> {
    match path {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
