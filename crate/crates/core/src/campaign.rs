//! Monte-Carlo campaigns: perturbed plants, one run-to-run trial per plant and
//! reduction case, and the summary statistics of the resulting cost series.
//!
//! Trial `i` of a campaign with seed `s` draws its plant from a ChaCha8
//! stream seeded with `splitmix64(s ^ splitmix64(i))`; the nine multipliers
//! are drawn in parameter order as `1 - w + 2 w U`, `U` uniform on `[0, 1)`.
//! The same plants are used for every case, and enlarging the campaign never
//! changes the plants of existing trial indices.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::feedforward::{initial_flux, sample_feedforward, PreCharge};
use crate::model::{ActuatorState, PhysicalParams, N_PARAMS};
use crate::optimizer::{new_search, Evaluation, SearchConfig};
use crate::plant::{constant_voltage_cost, simulate_operation, Drive};
use crate::sensitivity::{analyze, make_orthogonal_reduction, make_subset_reduction, Analysis, Reduction};
use crate::trajectory::{make_quintic, Trajectory};

/// Fraction of trials that must reach half the uncontrolled cost.
pub const HALVING_QUANTILE: f64 = 0.9;

/// Maximum tolerated share of failed trials per case.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReductionKind {
    Subset,
    Orthogonal,
}

/// The seven reference reduction cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CaseId {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl CaseId {
    pub const ALL: [CaseId; 7] = [CaseId::A, CaseId::B, CaseId::C, CaseId::D, CaseId::E, CaseId::F, CaseId::G];

    pub fn kind_and_dim(self) -> (ReductionKind, usize) {
        use ReductionKind::*;
        match self {
            CaseId::A => (Subset, 9),
            CaseId::B => (Subset, 7),
            CaseId::C => (Subset, 4),
            CaseId::D => (Subset, 2),
            CaseId::E => (Orthogonal, 7),
            CaseId::F => (Orthogonal, 4),
            CaseId::G => (Orthogonal, 2),
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .iter()
            .copied()
            .find(|c| c.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown case `{s}`; valid cases are A, B, C, D, E, F, G")))
    }
}

/// A reference case or a custom reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaseSpec {
    Named(CaseId),
    Custom { kind: ReductionKind, r: usize },
}

impl CaseSpec {
    pub fn all_named() -> Vec<CaseSpec> {
        CaseId::ALL.iter().map(|&c| CaseSpec::Named(c)).collect()
    }

    pub fn kind_and_dim(&self) -> (ReductionKind, usize) {
        match *self {
            CaseSpec::Named(c) => c.kind_and_dim(),
            CaseSpec::Custom { kind, r } => (kind, r),
        }
    }

    /// File-name label: the case letter, or `subset_r<r>` / `orthogonal_r<r>`.
    pub fn label(&self) -> String {
        match self {
            CaseSpec::Named(c) => c.to_string(),
            CaseSpec::Custom { kind, r } => match kind {
                ReductionKind::Subset => format!("subset_r{r}"),
                ReductionKind::Orthogonal => format!("orthogonal_r{r}"),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (_, r) = self.kind_and_dim();
        if !(1..=N_PARAMS).contains(&r) {
            return Err(Error::Config(format!("case {} has dimension {r}, need 1..=9", self.label())));
        }
        Ok(())
    }

    pub fn reduction(&self, analysis: &Analysis, cfg: &Config) -> Result<Reduction> {
        match self.kind_and_dim() {
            (ReductionKind::Subset, r) => make_subset_reduction(&analysis.s_is, r),
            (ReductionKind::Orthogonal, r) => {
                make_orthogonal_reduction(&analysis.basis, r, cfg.sensitivity.orthogonal_map)
            }
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the random stream of trial `trial_index`.
pub fn trial_seed(seed: u64, trial_index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial_index))
}

/// Multipliers of the perturbed plant of one trial.
pub fn perturbation_factors(seed: u64, trial_index: u64, half_width: f64) -> [f64; N_PARAMS] {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, trial_index));
    std::array::from_fn(|_| 1.0 - half_width + 2.0 * half_width * rng.gen::<f64>())
}

/// The true plant of one trial. The coil resistance is never perturbed.
pub fn perturb_params(seed: u64, trial_index: u64, nominal: &PhysicalParams, half_width: f64) -> PhysicalParams {
    nominal.scaled(&perturbation_factors(seed, trial_index, half_width))
}

/// Shared, immutable inputs of every trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub config: Config,
    pub trajectory: Trajectory,
}

impl TrialContext {
    pub fn new(config: Config) -> Result<Self> {
        config.validate()?;
        let trajectory = make_quintic(config.trajectory)?;
        Ok(TrialContext { config, trajectory })
    }

    /// Runs one operation with multipliers `theta` against `p_true`.
    pub fn evaluate(&self, theta: &crate::feedforward::ControlParams, p_true: &PhysicalParams) -> Result<Evaluation> {
        let cfg = &self.config;
        let penalty = cfg.sim.penalty_cost;
        let signal = match sample_feedforward(theta, &self.trajectory, &cfg.plant, cfg.feedforward.n_samples) {
            Ok(s) => s,
            Err(Error::InfeasibleFlatness { .. } | Error::SaturationInfeasible { .. } | Error::SingularFlatness { .. }) => {
                return Ok(Evaluation::Penalty {
                    cost: penalty,
                    shortfall: f64::INFINITY,
                });
            }
            Err(e) => return Err(e),
        };
        let lambda0 = match cfg.feedforward.pre_charge {
            PreCharge::Ideal => initial_flux(theta, &self.trajectory, &cfg.plant)?,
            PreCharge::Zero => 0.0,
        };
        let init = ActuatorState::new(cfg.trajectory.z0, 0.0, lambda0);
        let res = simulate_operation(p_true, Drive::Feedforward(&signal), init, &cfg.trajectory, &cfg.sim, false)?;
        Ok(if res.impacted() {
            Evaluation::Valid(res.cost)
        } else {
            Evaluation::Penalty {
                cost: res.cost,
                shortfall: res.closest_gap,
            }
        })
    }

    /// Uncontrolled cost of a plant.
    pub fn baseline(&self, p_true: &PhysicalParams) -> Result<f64> {
        let cfg = &self.config;
        constant_voltage_cost(p_true, cfg.campaign.baseline_voltage, &cfg.trajectory, &cfg.sim)
    }
}

/// Runs `n_ops` operations of the adaptation loop and returns the raw
/// per-operation costs.
pub fn run_trial(reduction: Arc<Reduction>, p_true: &PhysicalParams, n_ops: usize, ctx: &TrialContext) -> Result<Vec<f64>> {
    let mut state = new_search(SearchConfig::new(reduction, ctx.config.search)?);
    let mut costs = Vec::with_capacity(n_ops);
    for _ in 0..n_ops {
        let cand = state.ask();
        let eval = ctx.evaluate(&cand.theta, p_true)?;
        costs.push(eval.cost());
        state.tell(eval)?;
    }
    Ok(costs)
}

/// Prefix sums of a cost series.
pub fn integrated_cost(series: &[f64]) -> Vec<f64> {
    series
        .iter()
        .scan(0.0, |acc, j| {
            *acc += j;
            Some(*acc)
        })
        .collect()
}

/// Running minimum of a cost series.
pub fn best_so_far(series: &[f64]) -> Vec<f64> {
    series
        .iter()
        .scan(f64::INFINITY, |acc, j| {
            *acc = acc.min(*j);
            Some(*acc)
        })
        .collect()
}

/// Percentile `p` in `[0, 100]` with linear interpolation between order
/// statistics at rank `p / 100 * (N - 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput("percentile of an empty sample"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = (p / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Smallest operation count after which at least a fraction `q` of trials
/// has a best-so-far cost at or below half its uncontrolled cost. `None`
/// when that never happens.
pub fn ops_to_halve(series: &[Vec<f64>], baselines: &[f64], q: f64) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    let n_ops = series.iter().map(Vec::len).min().unwrap_or(0);
    let bests: Vec<Vec<f64>> = series.iter().map(|s| best_so_far(s)).collect();
    let needed = q * series.len() as f64 - 1e-9;
    (0..n_ops)
        .find(|&n| {
            let hits = bests.iter().zip(baselines).filter(|(b, base)| b[n] <= 0.5 * **base).count();
            hits as f64 >= needed
        })
        .map(|n| n + 1)
}

/// Outcome of one trial of one case.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Completed(Vec<f64>),
    Failed(String),
}

/// Aggregated statistics of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub p10: Vec<f64>,
    pub p50: Vec<f64>,
    pub p90: Vec<f64>,
    pub mean_best: Vec<f64>,
    pub mean_integrated: Vec<f64>,
    pub ops_to_halve: Option<usize>,
    pub valid_trials: usize,
    pub failed_trials: usize,
}

impl CaseMetrics {
    pub fn final_mean_integrated(&self) -> f64 {
        self.mean_integrated.last().copied().unwrap_or(0.0)
    }
}

/// Aggregates trial outcomes in trial-index order.
pub fn aggregate(outcomes: &[TrialOutcome], baselines: &[f64], n_ops: usize) -> Result<CaseMetrics> {
    let mut series = Vec::new();
    let mut bases = Vec::new();
    for (o, b) in outcomes.iter().zip(baselines) {
        if let TrialOutcome::Completed(s) = o {
            if s.len() != n_ops {
                return Err(Error::Parse(format!("trial series has {} operations, expected {n_ops}", s.len())));
            }
            series.push(s.clone());
            bases.push(*b);
        }
    }
    let failed_trials = outcomes.len() - series.len();
    if series.is_empty() {
        return Err(Error::Campaign("no trial completed".into()));
    }
    let m = series.len() as f64;
    let bests: Vec<Vec<f64>> = series.iter().map(|s| best_so_far(s)).collect();
    let integrated: Vec<Vec<f64>> = series.iter().map(|s| integrated_cost(s)).collect();
    let mut metrics = CaseMetrics {
        p10: Vec::with_capacity(n_ops),
        p50: Vec::with_capacity(n_ops),
        p90: Vec::with_capacity(n_ops),
        mean_best: Vec::with_capacity(n_ops),
        mean_integrated: Vec::with_capacity(n_ops),
        ops_to_halve: ops_to_halve(&series, &bases, HALVING_QUANTILE),
        valid_trials: series.len(),
        failed_trials,
    };
    let mut column = vec![0.0; series.len()];
    for n in 0..n_ops {
        for (c, s) in column.iter_mut().zip(&series) {
            *c = s[n];
        }
        column.sort_by(f64::total_cmp);
        metrics.p10.push(percentile_sorted(&column, 10.0));
        metrics.p50.push(percentile_sorted(&column, 50.0));
        metrics.p90.push(percentile_sorted(&column, 90.0));
        metrics.mean_best.push(bests.iter().map(|b| b[n]).sum::<f64>() / m);
        metrics.mean_integrated.push(integrated.iter().map(|b| b[n]).sum::<f64>() / m);
    }
    Ok(metrics)
}

/// Raw results and metrics of one case.
#[derive(Debug, Clone)]
pub struct CaseResult {
    pub spec: CaseSpec,
    pub reduction: Arc<Reduction>,
    pub outcomes: Vec<TrialOutcome>,
    pub metrics: CaseMetrics,
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub config: Config,
    pub seed: u64,
    pub analysis: Analysis,
    /// Uncontrolled cost of every trial's plant, in trial order.
    pub baselines: Vec<f64>,
    pub nominal_baseline: f64,
    pub cases: Vec<CaseResult>,
}

/// Runs every configured case on the same perturbed plants. `jobs` caps the
/// worker pool; `None` uses all cores. Results do not depend on `jobs`.
pub fn run_campaign(config: &Config, jobs: Option<usize>) -> Result<CampaignOutput> {
    let ctx = TrialContext::new(config.clone())?;
    let camp = &config.campaign;
    let seed = camp.seed.unwrap_or(0);
    let analysis = analyze(&ctx.trajectory, &config.plant, config.sensitivity.n_nodes, config.sensitivity.fd_step)?;
    let reductions = camp
        .cases
        .iter()
        .map(|c| c.reduction(&analysis, config).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Campaign(e.to_string()))?;

    let plants: Vec<PhysicalParams> = (0..camp.n_trials as u64)
        .map(|i| perturb_params(seed, i, &config.plant, camp.half_width))
        .collect();
    let nominal_baseline = ctx.baseline(&config.plant)?;
    let baselines = pool.install(|| plants.par_iter().map(|p| ctx.baseline(p)).collect::<Vec<_>>());
    // a plant whose baseline cannot be simulated fails in every case
    let baseline_ok: Vec<Option<f64>> = baselines.iter().map(|b| b.as_ref().ok().copied()).collect();

    let work: Vec<(usize, usize)> = (0..reductions.len())
        .flat_map(|c| (0..camp.n_trials).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<TrialOutcome> = pool.install(|| {
        work.par_iter()
            .map(|&(c, t)| match &baselines[t] {
                Err(e) => TrialOutcome::Failed(format!("baseline: {e}")),
                Ok(_) => match run_trial(reductions[c].clone(), &plants[t], camp.n_ops, &ctx) {
                    Ok(s) => TrialOutcome::Completed(s),
                    Err(e) => TrialOutcome::Failed(e.to_string()),
                },
            })
            .collect()
    });

    let baselines: Vec<f64> = baseline_ok.iter().map(|b| b.unwrap_or(f64::NAN)).collect();
    let mut cases = Vec::with_capacity(reductions.len());
    for (c, (spec, reduction)) in camp.cases.iter().zip(reductions).enumerate() {
        let outs = outcomes[c * camp.n_trials..(c + 1) * camp.n_trials].to_vec();
        let metrics = aggregate(&outs, &baselines, camp.n_ops)?;
        if metrics.failed_trials as f64 > MAX_FAILURE_RATE * camp.n_trials as f64 {
            let first = outs.iter().find_map(|o| match o {
                TrialOutcome::Failed(m) => Some(m.clone()),
                _ => None,
            });
            return Err(Error::Campaign(format!(
                "case {}: {} of {} trials failed (first: {})",
                spec.label(),
                metrics.failed_trials,
                camp.n_trials,
                first.unwrap_or_default()
            )));
        }
        cases.push(CaseResult {
            spec: *spec,
            reduction,
            outcomes: outs,
            metrics,
        });
    }
    Ok(CampaignOutput {
        config: config.clone(),
        seed,
        analysis,
        baselines,
        nominal_baseline,
        cases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub case: String,
    pub kind: ReductionKind,
    pub r: usize,
    pub reduction: Reduction,
    /// `null` when the halving criterion was never met.
    pub ops_to_halve: Option<usize>,
    pub final_mean_integrated: f64,
    pub valid_trials: usize,
    pub failed_trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub n_trials: usize,
    pub n_ops: usize,
    pub halving_quantile: f64,
    pub nominal_baseline: f64,
    pub cases: Vec<CaseSummary>,
    pub config: Config,
}

impl CampaignOutput {
    pub fn summary(&self) -> Summary {
        let cases = self
            .cases
            .iter()
            .map(|c| {
                let (kind, r) = c.spec.kind_and_dim();
                CaseSummary {
                    case: c.spec.label(),
                    kind,
                    r,
                    reduction: (*c.reduction).clone(),
                    ops_to_halve: c.metrics.ops_to_halve,
                    final_mean_integrated: c.metrics.final_mean_integrated(),
                    valid_trials: c.metrics.valid_trials,
                    failed_trials: c.metrics.failed_trials,
                }
            })
            .collect();
        let mut config = self.config.clone();
        config.campaign.seed = Some(self.seed);
        Summary {
            seed: self.seed,
            n_trials: self.config.campaign.n_trials,
            n_ops: self.config.campaign.n_ops,
            halving_quantile: HALVING_QUANTILE,
            nominal_baseline: self.nominal_baseline,
            cases,
            config,
        }
    }

    pub fn case(&self, label: &str) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.spec.label() == label)
    }

    /// Writes `costs_<case>.csv`, `integrated_<case>.csv`, `raw_<case>.csv`
    /// and `summary.json` into `dir`; returns the written paths in order.
    pub fn write_outputs(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for c in &self.cases {
            let label = c.spec.label();
            written.push(write_metrics_csvs(dir, &label, &c.metrics)?.0);
            written.push(dir.join(format!("integrated_{label}.csv")));
            let raw = dir.join(format!("raw_{label}.csv"));
            write_raw_csv(&raw, &c.outcomes, &self.baselines, self.config.campaign.n_ops)?;
            written.push(raw);
        }
        let summary = dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&self.summary())?;
        text.push('\n');
        fs::write(&summary, text)?;
        written.push(summary);
        Ok(written)
    }
}

/// Writes the percentile and integrated-cost tables of one case.
pub fn write_metrics_csvs(dir: &Path, label: &str, m: &CaseMetrics) -> Result<(PathBuf, PathBuf)> {
    let costs = dir.join(format!("costs_{label}.csv"));
    let mut w = Vec::new();
    writeln!(w, "n,P10,P50,P90,mean_best")?;
    for n in 0..m.p50.len() {
        writeln!(w, "{},{},{},{},{}", n + 1, m.p10[n], m.p50[n], m.p90[n], m.mean_best[n])?;
    }
    fs::write(&costs, w)?;
    let integrated = dir.join(format!("integrated_{label}.csv"));
    let mut w = Vec::new();
    writeln!(w, "n,mean_I")?;
    for (n, v) in m.mean_integrated.iter().enumerate() {
        writeln!(w, "{},{}", n + 1, v)?;
    }
    fs::write(&integrated, w)?;
    Ok((costs, integrated))
}

/// One row per trial: `trial,status,J_unc,J_1..J_n`; failed trials leave the
/// cost columns empty.
pub fn write_raw_csv(path: &Path, outcomes: &[TrialOutcome], baselines: &[f64], n_ops: usize) -> Result<()> {
    let mut w = Vec::new();
    write!(w, "trial,status,J_unc")?;
    for n in 1..=n_ops {
        write!(w, ",J_{n}")?;
    }
    writeln!(w)?;
    for (i, (o, b)) in outcomes.iter().zip(baselines).enumerate() {
        match o {
            TrialOutcome::Completed(s) => {
                write!(w, "{i},ok,{b}")?;
                for j in s {
                    write!(w, ",{j}")?;
                }
            }
            TrialOutcome::Failed(_) => {
                write!(w, "{i},failed,{b}")?;
                for _ in 0..n_ops {
                    write!(w, ",")?;
                }
            }
        }
        writeln!(w)?;
    }
    fs::write(path, w)?;
    Ok(())
}

/// Raw trial table of one case as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCase {
    pub outcomes: Vec<TrialOutcome>,
    pub baselines: Vec<f64>,
    pub n_ops: usize,
}

pub fn read_raw_csv(path: &Path) -> Result<RawCase> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let n_ops = header.split(',').count().saturating_sub(3);
    let bad = |line: usize, what: &str| Error::Parse(format!("{}:{}: {what}", path.display(), line + 2));
    let mut outcomes = Vec::new();
    let mut baselines = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != n_ops + 3 {
            return Err(bad(k, "wrong number of columns"));
        }
        let base: f64 = fields[2].parse().map_err(|_| bad(k, "bad baseline"))?;
        baselines.push(base);
        match fields[1] {
            "ok" => {
                let s = fields[3..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad(k, "bad cost")))
                    .collect::<Result<Vec<_>>>()?;
                outcomes.push(TrialOutcome::Completed(s));
            }
            "failed" => outcomes.push(TrialOutcome::Failed("failed".into())),
            other => return Err(bad(k, &format!("unknown status `{other}`"))),
        }
    }
    Ok(RawCase {
        outcomes,
        baselines,
        n_ops,
    })
}

/// Re-aggregates every `raw_<case>.csv` in `dir`, rewriting the percentile
/// and integrated-cost tables. Returns metrics keyed by case label.
pub fn reaggregate_dir(dir: &Path) -> Result<BTreeMap<String, CaseMetrics>> {
    let mut out = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("raw_") && n.ends_with(".csv"))
        })
        .collect();
    entries.sort();
    for path in entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let label = name["raw_".len()..name.len() - ".csv".len()].to_string();
        let raw = read_raw_csv(&path)?;
        let metrics = aggregate(&raw.outcomes, &raw.baselines, raw.n_ops)?;
        write_metrics_csvs(dir, &label, &metrics)?;
        out.insert(label, metrics);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("no raw_<case>.csv files found"));
    }
    Ok(out)
}
