use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qcrb_cli::commands;
use qcrb_cli::config::{ExperimentConfig, Overrides};
use qcrb_cli::CliError;
use qcrb_core::format::sig;
use qcrb_core::states::Model;

#[derive(Parser)]
#[command(
    name = "qcrb",
    version,
    about = "Negativity estimation at the quantum Cramér–Rao limit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate, estimate and write reports for every experiment.
    Run(Common),
    /// Grid-search the measurement angles for maximal Fisher information.
    FisherScan(Common),
    /// Compare QFI, SLD and Fisher information at the main setting.
    QcrbCheck(Common),
    /// Simulated linear-inversion tomography as a model cross-check.
    Tomo(Common),
    /// Re-analyse existing runs files without simulating.
    Report {
        #[command(flatten)]
        common: Common,
        /// Directory holding `<label>_runs.csv` (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Experiment i uses seed + i.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    mean_total: Option<f64>,
    #[arg(long)]
    no_shuffle: bool,
    #[arg(long)]
    multinomial: bool,
    /// Analysis model for the main report.
    #[arg(long, default_value = "coherent")]
    model: Model,
}

impl Common {
    fn load(&self) -> Result<Vec<ExperimentConfig>, CliError> {
        let mut configs = commands::load_config(&self.config)?;
        Overrides {
            seed: self.seed,
            runs: self.runs,
            mean_total: self.mean_total,
            no_shuffle: self.no_shuffle,
            multinomial: self.multinomial,
        }
        .apply(&mut configs)?;
        Ok(configs)
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| sig(v, 6)).unwrap_or_else(|| "-".into())
}

fn opt_bool(x: Option<bool>) -> &'static str {
    match x {
        Some(true) => "yes",
        Some(false) => "no",
        None => "-",
    }
}

fn print_summaries(s: &[commands::ExperimentSummary]) {
    println!(
        "{:<28} {:>10} {:>10} {:>10} {:>8} {:>6} {:>6}",
        "label", "eps_true", "eps_hat", "VarK/QCRB", "3sigma", "coh", "wer"
    );
    for e in s {
        println!(
            "{:<28} {:>10} {:>10} {:>10} {:>8} {:>6} {:>6}",
            e.label,
            opt(e.eps_true),
            sig(e.eps_hat_mean, 6),
            opt(e.qcrb_ratio),
            opt_bool(e.consistent_3sigma),
            opt_bool(e.coherent_consistent),
            opt_bool(e.werner_consistent)
        );
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(c) => {
            let summaries = commands::cmd_run(&c.load()?, &c.out, c.model)?;
            print_summaries(&summaries);
        }
        Command::Report { common, input } => {
            let input = input.unwrap_or_else(|| common.out.clone());
            let summaries = commands::cmd_report(&common.load()?, &input, &common.out, common.model)?;
            print_summaries(&summaries);
        }
        Command::FisherScan(c) => {
            for s in commands::cmd_fisher_scan(&c.load()?, &c.out)? {
                match &s.skipped {
                    Some(reason) => println!("{:<28} skipped: {reason}", s.label),
                    None => println!(
                        "{:<28} best (α, β) = ({}°, {}°)  F = {}  H = {}",
                        s.label,
                        opt(s.best_alpha_degrees),
                        opt(s.best_beta_degrees),
                        opt(s.best_value),
                        sig(s.qfi, 6)
                    ),
                }
            }
        }
        Command::QcrbCheck(c) => {
            for q in commands::cmd_qcrb_check(&c.load()?, &c.out)? {
                println!(
                    "{:<28} eps = {:<10} H_ref = {:<10} H_sld = {:<10} F_main = {:<10} residual = {}",
                    q.label,
                    sig(q.epsilon, 6),
                    sig(q.qfi_reference, 6),
                    opt(q.qfi_numeric),
                    opt(q.fisher_main),
                    opt(q.sld_residual)
                );
            }
        }
        Command::Tomo(c) => {
            for (label, t) in commands::cmd_tomo(&c.load()?, &c.out)? {
                println!(
                    "{label:<28} fidelity = {:<10} trace distance = {:<10} negativity gap = {}",
                    sig(t.fidelity, 6),
                    sig(t.trace_distance, 6),
                    sig(t.negativity_gap, 6)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qcrb: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
