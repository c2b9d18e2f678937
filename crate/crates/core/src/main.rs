//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 negative verdict (improvable allocation or
//! profitable deviation found), 2 input error, 3 internal invariant
//! violation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::Signed;

use clinch::combinatorial::run_combinatorial;
use clinch::divisible::{preprocessed_instance, run_divisible};
use clinch::error::EngineError;
use clinch::io;
use clinch::marginal::{demo_instance, marginal_deviation_grid, run_counterexample};
use clinch::model::{AuctionInstance, Mode};
use clinch::rational::fmt_rat;
use clinch::rounding::{run_rounds, DEFAULT_LAMBDA_CAP};
use clinch::selftest::run_selftest;
use clinch::verify::{ic_deviation_grid, Engine};

/// Environment variable overriding the cap on the least common denominator
/// used by the rounding pipeline.
const LAMBDA_CAP_ENV: &str = "CLINCH_LAMBDA_CAP";

#[derive(Parser)]
#[command(
    name = "clinch",
    version,
    about = "Budget-constrained clinching auctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GridEngine {
    Divisible,
    Rounds,
    Combinatorial,
    Marginal,
}

#[derive(Subcommand)]
enum Command {
    /// Run the divisible-slots clinching auction.
    RunDivisible {
        #[arg(long)]
        instance: PathBuf,
        /// Write the event trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the allocation to this file (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Round a divisible outcome into randomized per-round assignments.
    RunRounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run the single-valued combinatorial clinching auction.
    RunCombinatorial {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check legality and Pareto optimality of an allocation.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        allocation: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive incentive-compatibility deviation grid.
    IcGrid {
        #[arg(long, value_enum)]
        engine: GridEngine,
        #[arg(long, default_value_t = 4)]
        vmax: u64,
        /// Template instance whose valuations the grid replaces
        /// (default: a built-in two-bidder template).
        #[arg(long)]
        instance: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the diminishing-marginal-valuations impossibility.
    DemoTheorem7 {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in smoke checks.
    Selftest,
}

fn write_output(path: &Option<PathBuf>, content: &str) -> Result<(), EngineError> {
    match path {
        Some(p) => std::fs::write(p, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn lambda_cap() -> Result<u64, EngineError> {
    match std::env::var(LAMBDA_CAP_ENV) {
        Ok(s) => s
            .parse::<u64>()
            .map_err(|_| EngineError::parse(format!("{LAMBDA_CAP_ENV} must be an integer"))),
        Err(_) => Ok(DEFAULT_LAMBDA_CAP),
    }
}

fn cmd_run_divisible(
    instance: &Path,
    trace_path: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<ExitCode, EngineError> {
    let inst = io::parse_instance_file(instance)?;
    let (alloc, trace) = run_divisible(&inst)?;
    let pre = preprocessed_instance(&inst);
    write_output(out, &io::to_json(&io::divisible_to_doc(&pre.slots, &alloc)))?;
    if trace_path.is_some() {
        write_output(
            trace_path,
            &io::to_json(&io::trace_to_doc("divisible", &trace)),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run_rounds(
    instance: &Path,
    seed: u64,
    out: &Option<PathBuf>,
    trace_path: &Option<PathBuf>,
) -> Result<ExitCode, EngineError> {
    let inst = io::parse_instance_file(instance)?;
    let outcome = run_rounds(&inst, seed, lambda_cap()?)?;
    let pre = preprocessed_instance(&inst);
    write_output(out, &io::to_json(&io::rounds_to_doc(&pre.slots, &outcome)))?;
    if trace_path.is_some() {
        write_output(
            trace_path,
            &io::to_json(&io::trace_to_doc("rounds", &outcome.trace)),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_run_combinatorial(
    instance: &Path,
    trace_path: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<ExitCode, EngineError> {
    let inst = io::parse_instance_file(instance)?;
    let (alloc, trace) = run_combinatorial(&inst)?;
    write_output(out, &io::to_json(&io::combinatorial_to_doc(&alloc)))?;
    if trace_path.is_some() {
        write_output(
            trace_path,
            &io::to_json(&io::trace_to_doc("combinatorial", &trace)),
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_verify(
    instance: &Path,
    allocation: &Path,
    out: &Option<PathBuf>,
) -> Result<ExitCode, EngineError> {
    let inst = io::parse_instance_file(instance)?;
    let text = std::fs::read_to_string(allocation)?;
    let doc = io::verify_allocation(&inst, &text)?;
    let negative = !doc.legal || doc.verdict.as_deref() == Some("improvable");
    write_output(out, &io::to_json(&doc))?;
    Ok(if negative {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn default_grid_template(engine: GridEngine) -> AuctionInstance {
    use clinch::model::{Bidder, Slot, Valuation};
    use clinch::rational::rat_u;
    use std::collections::BTreeSet;
    match engine {
        GridEngine::Divisible | GridEngine::Rounds => AuctionInstance {
            mode: Mode::Divisible,
            bidders: (0..2)
                .map(|i| Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(1),
                    budget: rat_u([4, 7][i]),
                    demand_cap: 1,
                    interest: BTreeSet::new(),
                })
                .collect(),
            slots: vec![
                Slot {
                    id: 1,
                    quality: rat_u(1),
                },
                Slot {
                    id: 2,
                    quality: clinch::rational::rat(1, 2),
                },
            ],
            rounds: 1,
        },
        GridEngine::Combinatorial | GridEngine::Marginal => AuctionInstance {
            mode: Mode::Combinatorial,
            bidders: (0..2)
                .map(|i| Bidder {
                    id: i + 1,
                    valuation: Valuation::Flat(1),
                    budget: rat_u([4, 7][i]),
                    demand_cap: 1,
                    interest: [1, 2].into_iter().collect(),
                })
                .collect(),
            slots: vec![Slot {
                id: 1,
                quality: rat_u(1),
            }],
            rounds: 2,
        },
    }
}

fn cmd_ic_grid(
    engine: GridEngine,
    vmax: u64,
    instance: &Option<PathBuf>,
    out: &Option<PathBuf>,
) -> Result<ExitCode, EngineError> {
    if let GridEngine::Marginal = engine {
        let devs = marginal_deviation_grid(&demo_instance(), vmax)?;
        #[derive(serde::Serialize)]
        struct MarginalGridDoc {
            engine: String,
            vmax: u64,
            profitable_deviations: Vec<MarginalDeviationDoc>,
        }
        #[derive(serde::Serialize)]
        struct MarginalDeviationDoc {
            bidder: usize,
            truthful_marginals: Vec<u64>,
            reported_marginals: Vec<u64>,
            truthful_utility: String,
            deviating_utility: String,
        }
        let doc = MarginalGridDoc {
            engine: "marginal".to_string(),
            vmax,
            profitable_deviations: devs
                .iter()
                .map(|d| MarginalDeviationDoc {
                    bidder: d.bidder,
                    truthful_marginals: d.truthful_marginals.clone(),
                    reported_marginals: d.reported_marginals.clone(),
                    truthful_utility: fmt_rat(&d.truthful_utility),
                    deviating_utility: fmt_rat(&d.deviating_utility),
                })
                .collect(),
        };
        let negative = !devs.is_empty();
        write_output(out, &io::to_json(&doc))?;
        return Ok(if negative {
            ExitCode::from(1)
        } else {
            ExitCode::SUCCESS
        });
    }
    let template = match instance {
        Some(p) => io::parse_instance_file(p)?,
        None => default_grid_template(engine),
    };
    let verify_engine = match engine {
        GridEngine::Divisible => Engine::Divisible,
        GridEngine::Rounds => Engine::Rounds,
        GridEngine::Combinatorial => Engine::Combinatorial,
        GridEngine::Marginal => unreachable!(),
    };
    let name = match engine {
        GridEngine::Divisible => "divisible",
        GridEngine::Rounds => "rounds",
        GridEngine::Combinatorial => "combinatorial",
        GridEngine::Marginal => unreachable!(),
    };
    let devs = ic_deviation_grid(&template, verify_engine, vmax)?;
    let doc = io::deviations_to_doc(name, vmax, template.n(), &devs);
    let negative = !devs.is_empty();
    write_output(out, &io::to_json(&doc))?;
    Ok(if negative {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_demo(out: &Option<PathBuf>) -> Result<ExitCode, EngineError> {
    let report = run_counterexample()?;
    if !report.misreport_gain.is_positive() {
        return Err(EngineError::invariant(
            "the impossibility demo found no profitable misreport",
        ));
    }
    write_output(out, &io::to_json(&io::counterexample_to_doc(&report)))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_selftest() -> ExitCode {
    let checks = run_selftest();
    let mut failed = 0;
    for c in &checks {
        println!("{} {}", if c.passed { "ok  " } else { "FAIL" }, c.name);
        failed += u32::from(!c.passed);
    }
    println!("{} checks, {} failures", checks.len(), failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunDivisible {
            instance,
            trace,
            out,
        } => cmd_run_divisible(instance, trace, out),
        Command::RunRounds {
            instance,
            seed,
            out,
            trace,
        } => cmd_run_rounds(instance, *seed, out, trace),
        Command::RunCombinatorial {
            instance,
            trace,
            out,
        } => cmd_run_combinatorial(instance, trace, out),
        Command::Verify {
            instance,
            allocation,
            out,
        } => cmd_verify(instance, allocation, out),
        Command::IcGrid {
            engine,
            vmax,
            instance,
            out,
        } => cmd_ic_grid(*engine, *vmax, instance, out),
        Command::DemoTheorem7 { out } => cmd_demo(out),
        Command::Selftest => return cmd_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
