mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use homdetect::bayes::HypothesisPair;
use homdetect::fock_oracle::{compare_closed_form, OracleConfig, DEFAULT_FOCK_DIM};
use homdetect::io::format_float;
use homdetect::montecarlo::{simulate_ensemble, summarize, EnsembleConfig, EnsembleSummary, Truth, DEFAULT_TRAJECTORIES};
use homdetect::params::{Protocol, ProtocolParams};
use homdetect::photon_stats::build_detected;
use homdetect::sweep::{run_sweep, NcAxis, SweepResult, SweepSpec, DEFAULT_NC_BOUNDS};
use homdetect::Error;

use config::{Format, RunConfig};

const ORACLE_TOLERANCE: f64 = 1e-8;
const ORACLE_MAX_TOTAL: usize = 10;

#[derive(Parser)]
#[command(name = "homdetect", version, about = "Emitter detection statistics for direct and extended-HOM measurement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Photon-count distribution, or its change when the emitter is present.
    Dist(RunConfig),
    /// Monte Carlo ensemble of posterior trajectories.
    Simulate(RunConfig),
    /// Measurements needed to reach the target confidence.
    Nmeas(RunConfig),
    /// Measurement-count ratio of direct detection to HOM.
    Speedup(RunConfig),
    /// Grid sweep from a preset or a config document.
    Sweep(RunConfig),
    /// Compare the closed-form HOM distribution with the Fock-space oracle.
    ValidateOracle(RunConfig),
}

enum Failure {
    /// Bad flags, config or parameters.
    Input(anyhow::Error),
    /// The computation ran but its result is unusable or failed a check.
    Results(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Results(_) => 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::WrongProtocol { .. }
            | Error::Degenerate(_)
            | Error::MismatchedHypotheses(_)
            | Error::FockTruncation { .. }
            | Error::FockIndex { .. } => Failure::Input(e.into()),
            _ => Failure::Results(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Results(e)
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (Failure::Input(e) | Failure::Results(e)) = &failure;
            eprintln!("error: {e:#}");
            ExitCode::from(failure.code())
        }
    }
}

fn configure_threads() -> Outcome {
    let Ok(raw) = std::env::var("HOMDETECT_THREADS") else {
        return Ok(());
    };
    let threads: usize = match raw.trim().parse() {
        Ok(n) if n >= 1 => n,
        _ => {
            return Err(Failure::Input(anyhow::anyhow!(
                "HOMDETECT_THREADS must be a positive integer, got `{raw}`"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Results(e.into()))
}

fn dispatch(command: Command) -> Outcome {
    let load = |args: RunConfig| args.load().map_err(Failure::Input);
    match command {
        Command::Dist(args) => cmd_dist(&load(args)?),
        Command::Simulate(args) => cmd_simulate(&load(args)?),
        Command::Nmeas(args) => cmd_nmeas(&load(args)?, false),
        Command::Speedup(args) => cmd_nmeas(&load(args)?, true),
        Command::Sweep(args) => cmd_sweep(&load(args)?),
        Command::ValidateOracle(args) => cmd_validate_oracle(&load(args)?),
    }
}

fn validated_params(cfg: &RunConfig) -> Outcome<ProtocolParams> {
    let params = cfg.params();
    params.validate()?;
    Ok(params)
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("output serializes");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct DiffEntry {
    j: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    dp: f64,
}

#[derive(Serialize)]
struct DiffDocument {
    params: ProtocolParams,
    saturation: Option<usize>,
    k_max: usize,
    entries: Vec<DiffEntry>,
}

fn cmd_dist(cfg: &RunConfig) -> Outcome {
    let params = validated_params(cfg)?;
    let hom = params.protocol.is_hom();
    let text = if cfg.diff {
        let pair = HypothesisPair::new(&params, cfg.saturation(), cfg.tail_tol())?;
        let entries: Vec<DiffEntry> = pair
            .differences()
            .into_iter()
            .map(|(o, dp)| DiffEntry {
                j: o.j,
                k: hom.then_some(o.k),
                dp,
            })
            .collect();
        match cfg.format() {
            Format::Csv => {
                let mut out = String::from(if hom { "j,k,dp\n" } else { "j,dp\n" });
                for e in &entries {
                    match e.k {
                        Some(k) => out.push_str(&format!("{},{},{}\n", e.j, k, format_float(e.dp))),
                        None => out.push_str(&format!("{},{}\n", e.j, format_float(e.dp))),
                    }
                }
                out
            }
            Format::Json => to_json(&DiffDocument {
                params,
                saturation: cfg.saturation(),
                k_max: pair.present().k_max(),
                entries,
            }),
        }
    } else {
        let dist = build_detected(&params, cfg.saturation(), cfg.tail_tol())?;
        match cfg.format() {
            Format::Csv => dist.to_csv(),
            Format::Json => to_json(&dist.to_document()),
        }
    };
    output::emit(cfg.out.as_deref(), &text)?;
    Ok(())
}

#[derive(Serialize)]
struct StepRow {
    step: usize,
    #[serde(rename = "mean_Pe")]
    mean_pe: f64,
    q25: f64,
    q75: f64,
}

#[derive(Serialize)]
struct SimulationDocument {
    summary: EnsembleSummary,
    steps: Vec<StepRow>,
}

fn cmd_simulate(cfg: &RunConfig) -> Outcome {
    let params = validated_params(cfg)?;
    let pair = HypothesisPair::new(&params, cfg.saturation(), cfg.tail_tol())?;
    let ensemble_cfg = EnsembleConfig {
        pair: &pair,
        truth: cfg.truth.unwrap_or(Truth::Present),
        n_measurements: cfg.n_measurements.unwrap_or(50),
        n_trajectories: cfg.n_trajectories.unwrap_or(DEFAULT_TRAJECTORIES),
        seed: cfg.seed.unwrap_or(0),
        retain_final: false,
    };
    ensemble_cfg.validate()?;
    let ensemble = simulate_ensemble(&ensemble_cfg)?;
    let summary = summarize(&ensemble_cfg, &ensemble);
    match cfg.format() {
        Format::Csv => {
            output::emit(cfg.out.as_deref(), &ensemble.to_csv())?;
            let summary_text = to_json(&summary);
            match &cfg.out {
                Some(out) => output::write_atomic(&output::summary_path(out), &summary_text)?,
                None => eprint!("{summary_text}"),
            }
        }
        Format::Json => {
            let steps = (0..ensemble.n_measurements())
                .map(|s| StepRow {
                    step: s + 1,
                    mean_pe: ensemble.mean[s],
                    q25: ensemble.q25[s],
                    q75: ensemble.q75[s],
                })
                .collect();
            output::emit(cfg.out.as_deref(), &to_json(&SimulationDocument { summary, steps }))?;
        }
    }
    Ok(())
}

fn write_sweep(cfg: &RunConfig, result: &SweepResult) -> Outcome {
    let text = match cfg.format() {
        Format::Csv => result.to_csv(),
        Format::Json => {
            let mut t = result.to_json();
            t.push('\n');
            t
        }
    };
    output::emit(cfg.out.as_deref(), &text)?;
    Ok(())
}

/// Single-point sweep; `require_hom` rejects direct detection.
fn cmd_nmeas(cfg: &RunConfig, require_hom: bool) -> Outcome {
    let params = validated_params(cfg)?;
    if require_hom && !params.protocol.is_hom() {
        return Err(Error::WrongProtocol {
            expected: "coherent-hom or incoherent-hom",
            actual: params.protocol.name(),
        }
        .into());
    }
    let n_c = if cfg.optimize_nc && params.protocol.is_hom() {
        NcAxis::Optimize
    } else {
        NcAxis::Values(vec![params.n_c])
    };
    let spec = SweepSpec {
        template: params,
        protocols: vec![params.protocol],
        eta: vec![params.eta],
        n_e: vec![params.n_e],
        n_i: Some(vec![params.n_i]),
        n_c,
        saturation: vec![cfg.saturation()],
        c_target: cfg.c_target(),
        nc_bounds: DEFAULT_NC_BOUNDS,
    };
    let result = run_sweep(&spec)?;
    write_sweep(cfg, &result)?;
    match &result.rows[0].error {
        Some(e) => Err(Failure::Results(anyhow::anyhow!("{e}"))),
        None => Ok(()),
    }
}

fn cmd_sweep(cfg: &RunConfig) -> Outcome {
    let mut spec = match (&cfg.sweep, &cfg.preset) {
        (Some(_), Some(_)) => {
            return Err(Failure::Input(anyhow::anyhow!("give either a preset or a sweep specification, not both")))
        }
        (Some(spec), None) => spec.clone(),
        (None, Some(name)) => SweepSpec::preset(name)?,
        (None, None) => {
            return Err(Failure::Input(anyhow::anyhow!(
                "sweep needs --preset or a config with a `sweep` section"
            )))
        }
    };
    if let Some(c) = cfg.c_target {
        spec.c_target = c;
    }
    let result = run_sweep(&spec)?;
    write_sweep(cfg, &result)
}

#[derive(Serialize)]
struct OracleReport {
    protocol: Protocol,
    fock_dim: usize,
    max_abs: f64,
    worst_j: usize,
    worst_k: usize,
    outcomes_checked: usize,
    tolerance: f64,
    pass: bool,
}

fn cmd_validate_oracle(cfg: &RunConfig) -> Outcome {
    let params = validated_params(cfg)?;
    let oracle_cfg = OracleConfig::with_fock_dim(params, cfg.fock_dim.unwrap_or(DEFAULT_FOCK_DIM));
    oracle_cfg.validate()?;
    let dev = compare_closed_form(&oracle_cfg, ORACLE_MAX_TOTAL)?;
    let report = OracleReport {
        protocol: params.protocol,
        fock_dim: oracle_cfg.fock_dim,
        max_abs: dev.max_abs,
        worst_j: dev.worst.j,
        worst_k: dev.worst.k,
        outcomes_checked: dev.outcomes_checked,
        tolerance: ORACLE_TOLERANCE,
        pass: dev.max_abs <= ORACLE_TOLERANCE,
    };
    let text = match cfg.format() {
        Format::Csv => format!(
            "max_abs,worst_j,worst_k,outcomes_checked,tolerance,pass\n{},{},{},{},{},{}\n",
            format_float(report.max_abs),
            report.worst_j,
            report.worst_k,
            report.outcomes_checked,
            format_float(report.tolerance),
            report.pass
        ),
        Format::Json => to_json(&report),
    };
    output::emit(cfg.out.as_deref(), &text)?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Results(anyhow::anyhow!(
            "closed form deviates from the oracle by {:e} at (j, k) = ({}, {})",
            report.max_abs,
            report.worst_j,
            report.worst_k
        )))
    }
}
