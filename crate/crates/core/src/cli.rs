//! Command-line front end: `analyze`, `simulate`, `campaign` and `report`.
//!
//! Seed precedence for campaigns: `--seed`, then `campaign.seed` in the
//! config file, then the `SOFTLAND_SEED` environment variable, then 0.
//! Other flags override the matching config fields.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::campaign::{reaggregate_dir, run_campaign, CaseId, CaseSpec};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::feedforward::{initial_flux, sample_feedforward, ControlParams, PreCharge};
use crate::model::{ActuatorState, N_PARAMS, PARAM_NAMES};
use crate::plant::{simulate_operation, Drive};
use crate::sensitivity::{analyze, make_orthogonal_reduction, make_subset_reduction, Analysis};
use crate::trajectory::make_quintic;

pub const SEED_ENV: &str = "SOFTLAND_SEED";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "softland", version, about = "Run-to-run soft-landing control of reluctance actuators")]
pub struct Cli {
    /// JSON configuration file; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sensitivities, Fisher eigenpairs and suggested reductions of the nominal feedforward.
    Analyze(AnalyzeArgs),
    /// One closing operation on the nominal plant.
    Simulate(SimulateArgs),
    /// Monte-Carlo run-to-run campaign over reduction cases.
    Campaign(CampaignArgs),
    /// Recompute percentile and integrated-cost tables from raw campaign outputs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, default_value = "analysis")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Nine comma-separated feedforward multipliers.
    #[arg(long, value_parser = parse_theta, conflicts_with = "voltage", required_unless_present = "voltage")]
    pub theta: Option<ControlParams>,
    /// Constant coil voltage in volts.
    #[arg(long, allow_negative_numbers = true)]
    pub voltage: Option<f64>,
    #[arg(long, default_value = "simulation")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CampaignArgs {
    /// Comma-separated case letters, e.g. `A,D,G`.
    #[arg(long, value_delimiter = ',', value_parser = parse_case)]
    pub cases: Option<Vec<CaseId>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub ops: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    #[arg(long, default_value = "campaign")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding `raw_<case>.csv` files.
    #[arg(long, default_value = "campaign")]
    pub dir: PathBuf,
}

fn parse_theta(s: &str) -> std::result::Result<ControlParams, String> {
    let values = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let arr: [f64; N_PARAMS] = values
        .try_into()
        .map_err(|v: Vec<f64>| format!("expected {N_PARAMS} values, got {}", v.len()))?;
    if arr.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err("multipliers must be positive and finite".into());
    }
    Ok(ControlParams(arr))
}

fn parse_case(s: &str) -> std::result::Result<CaseId, String> {
    s.parse::<CaseId>().map_err(|e| match e {
        Error::Config(m) => m,
        other => other.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: Config,
    pub files: Vec<FileRecord>,
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

fn record(dir: &Path, path: &Path) -> Result<FileRecord> {
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileRecord {
        path: rel.to_string_lossy().into_owned(),
        bytes: fs::metadata(path)?.len(),
        sha256: sha256_file(path)?,
    })
}

fn write_manifest(
    dir: &Path,
    command: &str,
    seed: Option<u64>,
    started: f64,
    config: &Config,
    files: &[PathBuf],
) -> Result<PathBuf> {
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed,
        started_unix: started,
        finished_unix: unix_now(),
        config: config.clone(),
        files: files.iter().map(|f| record(dir, f)).collect::<Result<_>>()?,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).map_err(|e| Error::Config(format!("{}: {e}", p.display()))),
        None => Ok(Config::default()),
    }
}

/// Resolves the campaign seed from flag, config and environment.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        None => Ok(0),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&config, &a.out),
        Command::Simulate(a) => cmd_simulate(&config, &a),
        Command::Campaign(a) => cmd_campaign(config, &a),
        Command::Report(a) => cmd_report(&a.dir),
    }
}

fn write_file(path: &Path, body: &[u8], written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, body)?;
    written.push(path.to_path_buf());
    Ok(())
}

pub fn cmd_analyze(config: &Config, out: &Path) -> Result<()> {
    let started = unix_now();
    let traj = make_quintic(config.trajectory)?;
    let analysis = analyze(&traj, &config.plant, config.sensitivity.n_nodes, config.sensitivity.fd_step)?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();

    let mut w = Vec::new();
    writeln!(w, "index,parameter,S_IS")?;
    for (i, s) in analysis.s_is.iter().enumerate() {
        writeln!(w, "{},{},{s}", i + 1, PARAM_NAMES[i])?;
    }
    write_file(&out.join("s_is.csv"), &w, &mut written)?;

    let mut w = Vec::new();
    writeln!(w, "k,eigenvalue")?;
    for (k, v) in analysis.basis.values.iter().enumerate() {
        writeln!(w, "{},{v}", k + 1)?;
    }
    write_file(&out.join("eigenvalues.csv"), &w, &mut written)?;

    // row i, column k: component i of eigenvector k
    let mut w = Vec::new();
    write!(w, "parameter")?;
    for k in 1..=N_PARAMS {
        write!(w, ",v{k}")?;
    }
    writeln!(w)?;
    for i in 0..N_PARAMS {
        write!(w, "theta_{}", i + 1)?;
        for k in 0..N_PARAMS {
            write!(w, ",{}", analysis.basis.vectors[k][i])?;
        }
        writeln!(w)?;
    }
    write_file(&out.join("eigenvectors.csv"), &w, &mut written)?;

    write_file(&out.join("reductions.txt"), reduction_report(&analysis, config)?.as_bytes(), &mut written)?;
    write_manifest(out, "analyze", None, started, config, &written)?;
    Ok(())
}

/// Human-readable ranking and the suggested reduction of every case.
pub fn reduction_report(analysis: &Analysis, config: &Config) -> Result<String> {
    let mut order: Vec<usize> = (0..N_PARAMS).collect();
    order.sort_by(|&a, &b| analysis.s_is[b].total_cmp(&analysis.s_is[a]).then(a.cmp(&b)));
    let mut s = String::new();
    s.push_str("integral-square sensitivity, most to least influential\n");
    for (rank, &i) in order.iter().enumerate() {
        s.push_str(&format!(
            "  {:>2}. theta_{} ({:<8}) {:.6e}\n",
            rank + 1,
            i + 1,
            PARAM_NAMES[i],
            analysis.s_is[i]
        ));
    }
    s.push_str(&format!(
        "least influential: theta_{}, theta_{}\n\n",
        order[N_PARAMS - 1] + 1,
        order[N_PARAMS - 2] + 1
    ));
    s.push_str("Fisher eigenvalues, descending\n");
    for (k, v) in analysis.basis.values.iter().enumerate() {
        s.push_str(&format!("  lambda_{} {:.6e}\n", k + 1, v));
    }
    s.push_str("\nreduction cases\n");
    for case in CaseId::ALL {
        let (_, r) = case.kind_and_dim();
        let spec = CaseSpec::Named(case);
        let line = match spec.kind_and_dim().0 {
            crate::campaign::ReductionKind::Subset => {
                let red = make_subset_reduction(&analysis.s_is, r)?;
                let free = match &red {
                    crate::sensitivity::Reduction::Subset { free } => free.clone(),
                    _ => unreachable!(),
                };
                let names: Vec<String> = free.iter().map(|i| format!("theta_{}", i + 1)).collect();
                format!("  {case}: subset r={r}: {{{}}}\n", names.join(", "))
            }
            crate::campaign::ReductionKind::Orthogonal => {
                make_orthogonal_reduction(&analysis.basis, r, config.sensitivity.orthogonal_map)?;
                let ks: Vec<String> = (1..=r).map(|k| format!("v{k}")).collect();
                format!("  {case}: orthogonal r={r}: span{{{}}}\n", ks.join(", "))
            }
        };
        s.push_str(&line);
    }
    Ok(s)
}

pub fn cmd_simulate(config: &Config, args: &SimulateArgs) -> Result<()> {
    let started = unix_now();
    let spec = config.trajectory;
    let (result, signal) = match (&args.theta, args.voltage) {
        (Some(theta), None) => {
            let traj = make_quintic(spec)?;
            let signal = sample_feedforward(theta, &traj, &config.plant, config.feedforward.n_samples)?;
            let lambda0 = match config.feedforward.pre_charge {
                PreCharge::Ideal => initial_flux(theta, &traj, &config.plant)?,
                PreCharge::Zero => 0.0,
            };
            let init = ActuatorState::new(spec.z0, 0.0, lambda0);
            let res = simulate_operation(&config.plant, Drive::Feedforward(&signal), init, &spec, &config.sim, true)?;
            (res, Some(signal))
        }
        (None, Some(v)) => {
            let init = ActuatorState::new(spec.z0, 0.0, 0.0);
            let res = simulate_operation(&config.plant, Drive::Constant(v), init, &spec, &config.sim, true)?;
            (res, None)
        }
        _ => return Err(Error::Config("exactly one of --theta and --voltage is required".into())),
    };
    fs::create_dir_all(&args.out)?;
    let mut written = Vec::new();
    let mut w = Vec::new();
    result.write_trace_csv(&mut w)?;
    write_file(&args.out.join("trace.csv"), &w, &mut written)?;
    if let Some(sig) = signal {
        let mut w = Vec::new();
        sig.write_csv(&mut w)?;
        write_file(&args.out.join("feedforward.csv"), &w, &mut written)?;
    }
    let mut text = serde_json::to_string_pretty(&result)?;
    text.push('\n');
    write_file(&args.out.join("result.json"), text.as_bytes(), &mut written)?;
    write_manifest(&args.out, "simulate", None, started, config, &written)?;
    Ok(())
}

pub fn cmd_campaign(mut config: Config, args: &CampaignArgs) -> Result<()> {
    let started = unix_now();
    if let Some(cases) = &args.cases {
        config.campaign.cases = cases.iter().map(|&c| CaseSpec::Named(c)).collect();
    }
    if let Some(n) = args.trials {
        config.campaign.n_trials = n;
    }
    if let Some(n) = args.ops {
        config.campaign.n_ops = n;
    }
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(args.seed, config.campaign.seed, env.as_deref())?;
    config.campaign.seed = Some(seed);
    config.validate()?;
    let output = run_campaign(&config, args.jobs.map(|j| j as usize))?;
    let files = output.write_outputs(&args.out)?;
    write_manifest(&args.out, "campaign", Some(seed), started, &config, &files)?;
    for c in &output.cases {
        let halve = c
            .metrics
            .ops_to_halve
            .map_or_else(|| "not reached".to_string(), |n| n.to_string());
        println!(
            "case {:<3} ops_to_halve {:>11}  mean I[{}] {:.6e}  failed {}",
            c.spec.label(),
            halve,
            config.campaign.n_ops,
            c.metrics.final_mean_integrated(),
            c.metrics.failed_trials
        );
    }
    Ok(())
}

pub fn cmd_report(dir: &Path) -> Result<()> {
    let metrics = reaggregate_dir(dir)?;
    for (label, m) in &metrics {
        let halve = m.ops_to_halve.map_or_else(|| "not reached".to_string(), |n| n.to_string());
        println!(
            "case {label:<3} ops_to_halve {halve:>11}  mean I {:.6e}  trials {} ok / {} failed",
            m.final_mean_integrated(),
            m.valid_trials,
            m.failed_trials
        );
    }
    Ok(())
}
