//! Command-line surface. Exit codes: 0 success, 2 usage, 3 parse or I/O,
//! 4 infeasible budget under `--strict-budget`, 5 internal.

use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::binomial::{Budget, RiskBudget};
use crate::calibrate::Threshold;
use crate::detection::{
    calibrate_detector, evaluate_detector, examples, ComponentBudgets, ComponentErrors, ComposeMode, ComposedBudgets,
    DetectorThresholds, MatchRule,
};
use crate::error::{Error, Result};
use crate::io::dump::{parse_dump, write_dump, Dataset, ParseMode};
use crate::report::{composed_table, error_bars_report, tracking_table, ComposedRow, MethodMetrics, Report};
use crate::sim::experiments::DetectionOutcome;
use crate::sim::theorems::{theorem_suite, SuiteConfig, SuiteWorld, TheoremReport};
use crate::sim::world::{gen_world, WorldConfig};
use crate::tracking::{
    calibrate_edges, edge_metrics, frame_pairs, topk_baseline, AfpMode, DetectionProvider, EdgeMetrics, EdgeThreshold,
};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_INFEASIBLE: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Domain(_) => EXIT_USAGE,
        Error::Parse { .. }
        | Error::Integrity(_)
        | Error::UnsupportedVersion(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Config(_)
        | Error::Csv(_) => EXIT_PARSE,
        Error::InfeasibleBudget(_) => EXIT_INFEASIBLE,
    }
}

#[derive(Debug, Parser)]
#[command(name = "pacset", version, about = "PAC prediction sets for detection and tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Calibrate proposal, presence and location thresholds on a dump.
    CalibrateDetector(CalibrateDetectorArgs),
    /// Calibrate the edge threshold on the true transitions of a dump.
    CalibrateEdges(CalibrateEdgesArgs),
    /// Measure errors of calibrated thresholds on a dump.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic world and write it as a dump.
    Simulate(SimulateArgs),
    /// Monte Carlo check of every composed guarantee on a synthetic world.
    VerifyTheorems(VerifyArgs),
    /// Render an evaluation file as tables.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Dump file; `-` reads stdin.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Drop dangling records instead of failing.
    #[arg(long)]
    pub lenient: bool,
}

#[derive(Debug, Args)]
pub struct OutputArg {
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Split {
    /// epsilon 0.15 / 0.05 / 0.30 of the total, delta split evenly.
    Standard,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ComposeArg {
    Strict,
    Shared,
}

impl From<ComposeArg> for ComposeMode {
    fn from(c: ComposeArg) -> Self {
        match c {
            ComposeArg::Strict => ComposeMode::StrictChain,
            ComposeArg::Shared => ComposeMode::SharedEvent,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MatchArg {
    Smallest,
    Union,
}

impl From<MatchArg> for MatchRule {
    fn from(m: MatchArg) -> Self {
        match m {
            MatchArg::Smallest => MatchRule::SmallestScore,
            MatchArg::Union => MatchRule::Union,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AfpArg {
    Anchored,
    Global,
}

impl From<AfpArg> for AfpMode {
    fn from(a: AfpArg) -> Self {
        match a {
            AfpArg::Anchored => AfpMode::Anchored,
            AfpArg::Global => AfpMode::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Default,
    Noiseless,
    Crowded,
}

#[derive(Debug, Args)]
pub struct DetectorBudgetArgs {
    #[arg(long)]
    pub eps_prp: Option<f64>,
    #[arg(long)]
    pub delta_prp: Option<f64>,
    #[arg(long)]
    pub eps_prs: Option<f64>,
    #[arg(long)]
    pub delta_prs: Option<f64>,
    #[arg(long)]
    pub eps_loc: Option<f64>,
    #[arg(long)]
    pub delta_loc: Option<f64>,
    /// Total detector epsilon, split with `--split`.
    #[arg(long, requires = "total_delta", conflicts_with_all = ["eps_prp", "eps_prs", "eps_loc"])]
    pub total_eps: Option<f64>,
    #[arg(long, requires = "total_eps")]
    pub total_delta: Option<f64>,
    #[arg(long, value_enum, default_value = "standard")]
    pub split: Split,
}

impl DetectorBudgetArgs {
    pub fn resolve(&self) -> Result<ComponentBudgets> {
        if let (Some(e), Some(d)) = (self.total_eps, self.total_delta) {
            return match self.split {
                Split::Standard => ComponentBudgets::split_default(RiskBudget::new(e, d)?),
            };
        }
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::domain(format!("missing --{name} (or give --total-eps and --total-delta)")))
        };
        Ok(ComponentBudgets {
            prp: RiskBudget::new(need(self.eps_prp, "eps-prp")?, need(self.delta_prp, "delta-prp")?)?,
            prs: RiskBudget::new(need(self.eps_prs, "eps-prs")?, need(self.delta_prs, "delta-prs")?)?,
            loc: RiskBudget::new(need(self.eps_loc, "eps-loc")?, need(self.delta_loc, "delta-loc")?)?,
        })
    }
}

#[derive(Debug, Args)]
pub struct CalibrateDetectorArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub budgets: DetectorBudgetArgs,
    #[arg(long = "match", value_enum, default_value = "smallest")]
    pub match_rule: MatchArg,
    /// Fail when a budget is infeasible for the calibration size.
    #[arg(long)]
    pub strict_budget: bool,
    #[command(flatten)]
    pub output: OutputArg,
}

#[derive(Debug, Args)]
pub struct CalibrateEdgesArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub eps_edge: f64,
    #[arg(long)]
    pub delta_edge: f64,
    #[arg(long)]
    pub strict_budget: bool,
    #[command(flatten)]
    pub output: OutputArg,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Detector thresholds from `calibrate-detector`.
    #[arg(long)]
    pub detector: Option<PathBuf>,
    /// Edge threshold from `calibrate-edges`.
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "shared")]
    pub compose: ComposeArg,
    #[arg(long, value_enum, default_value = "anchored")]
    pub afp: AfpArg,
    /// Evaluate top-1 .. top-k baselines.
    #[arg(long, default_value_t = 5)]
    pub topk: usize,
    #[command(flatten)]
    pub output: OutputArg,
}

#[derive(Debug, Args)]
pub struct WorldArgs {
    /// WorldConfig TOML file.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl WorldArgs {
    pub fn resolve(&self) -> Result<WorldConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => WorldConfig::from_toml(&fs::read_to_string(path)?)?,
            (None, Some(Preset::Noiseless)) => WorldConfig::noiseless(),
            (None, Some(Preset::Crowded)) => WorldConfig::crowded(),
            (None, _) => WorldConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    #[command(flatten)]
    pub output: OutputArg,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub world: WorldArgs,
    /// Epsilon of every component and of the edge threshold.
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.2)]
    pub delta: f64,
    /// Calibration size per trial.
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Seed of the trial stream.
    #[arg(long, default_value_t = 0)]
    pub trial_seed: u64,
    #[arg(long, value_enum, default_value = "strict")]
    pub compose: ComposeArg,
    #[arg(long = "match", value_enum, default_value = "smallest")]
    pub match_rule: MatchArg,
    /// Write the JSON report here; the text table always goes to stdout.
    #[command(flatten)]
    pub output: OutputArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation JSON from `evaluate`.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
    #[command(flatten)]
    pub output: OutputArg,
}

/// Edge results of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeEvaluation {
    pub threshold: EdgeThreshold,
    pub budget: Option<Budget>,
    pub ground_truth: EdgeMetrics,
    /// Edge set over the calibrated detection set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimated: Option<EdgeMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub composed: Option<Budget>,
    pub topk: Vec<EdgeMetrics>,
}

/// Output of `evaluate`, input of `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionOutcome>,
    /// Detector errors when the thresholds carry no budgets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detection_errors: Option<ComponentErrors>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<EdgeEvaluation>,
}

impl EvaluationReport {
    pub fn tables(&self) -> Vec<Report> {
        let mut out = Vec::new();
        if let Some(d) = &self.detection {
            out.push(error_bars_report(d));
        }
        if let Some(e) = &self.edges {
            let budget = e.budget.unwrap_or(Budget::new(f64::NAN, f64::NAN));
            let edge = MethodMetrics { method: "edge".into(), metrics: e.ground_truth };
            let base: Vec<MethodMetrics> = e
                .topk
                .iter()
                .enumerate()
                .map(|(i, m)| MethodMetrics { method: format!("top-{}", i + 1), metrics: *m })
                .collect();
            out.push(tracking_table(&edge, budget, &base));
            if let (Some(m), Some(det)) = (e.estimated, self.detection.as_ref()) {
                let det_budget = det.composed.detector(det.mode);
                out.push(composed_table(&[ComposedRow { det: det_budget, edge: budget, metrics: m }]));
            }
        }
        out
    }
}

fn read_dataset(input: &InputArgs) -> Result<Dataset> {
    let mode = if input.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    let (data, stats) = if input.input.as_os_str() == "-" {
        parse_dump(io::stdin().lock(), mode)?
    } else {
        parse_dump(BufReader::new(fs::File::open(&input.input)?), mode)?
    };
    if stats.dropped() > 0 {
        log::warn!(
            "dropped {} presence, {} location and {} truth records with dangling references",
            stats.dropped_presence,
            stats.dropped_location,
            stats.dropped_truth
        );
    }
    Ok(data)
}

fn write_output(out: &OutputArg, bytes: &[u8]) -> Result<()> {
    match &out.output {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut so = io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &OutputArg, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_output(out, s.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn check_feasible(name: &str, tau: &Threshold, strict: bool) -> Result<()> {
    if !tau.is_infeasible() {
        return Ok(());
    }
    let c = tau.calibration.expect("infeasible thresholds are calibrated");
    let msg = format!(
        "{name}: budget (epsilon {}, delta {}) is infeasible with {} calibration examples; using tau = 0",
        c.budget.epsilon(),
        c.budget.delta(),
        c.n_calibration
    );
    if strict {
        Err(Error::InfeasibleBudget(msg))
    } else {
        log::warn!("{msg}");
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::CalibrateDetector(a) => {
            let budgets = a.budgets.resolve()?;
            let data = read_dataset(&a.input)?;
            let th = calibrate_detector(&data, budgets, a.match_rule.into())?;
            check_feasible("proposal", &th.tau_prp, a.strict_budget)?;
            check_feasible("presence", &th.tau_prs, a.strict_budget)?;
            check_feasible("location", &th.tau_loc, a.strict_budget)?;
            write_json(&a.output, &th)
        }
        Command::CalibrateEdges(a) => {
            let budget = RiskBudget::new(a.eps_edge, a.delta_edge)?;
            let data = read_dataset(&a.input)?;
            let th = calibrate_edges(&frame_pairs(&data), budget)?;
            check_feasible("edge", &th.tau, a.strict_budget)?;
            write_json(&a.output, &th)
        }
        Command::Evaluate(a) => {
            if a.detector.is_none() && a.edges.is_none() {
                return Err(Error::domain("evaluate needs --detector and/or --edges"));
            }
            let data = read_dataset(&a.input)?;
            let detector: Option<DetectorThresholds> = a.detector.as_deref().map(read_json).transpose()?;
            let mut report = EvaluationReport { detection: None, detection_errors: None, edges: None };
            if let Some(th) = &detector {
                let errors = evaluate_detector(&examples(&data), th)?;
                match th.budgets {
                    Some(budgets) => {
                        report.detection = Some(DetectionOutcome {
                            thresholds: *th,
                            errors,
                            budgets,
                            composed: ComposedBudgets::from_components(&budgets),
                            mode: a.compose.into(),
                        })
                    }
                    None => report.detection_errors = Some(errors),
                }
            }
            if let Some(path) = &a.edges {
                let tau: EdgeThreshold = read_json(path)?;
                let pairs = frame_pairs(&data);
                let mode: AfpMode = a.afp.into();
                let budget = tau.budget().map(Budget::from);
                let ground_truth = edge_metrics(&pairs, &tau, DetectionProvider::GroundTruth, mode)?;
                let estimated = detector
                    .as_ref()
                    .map(|th| edge_metrics(&pairs, &tau, DetectionProvider::Estimated(th), mode))
                    .transpose()?;
                let composed = match (&report.detection, budget) {
                    (Some(d), Some(b)) => Some(crate::tracking::composed_edge_budget(d.composed.detector(d.mode), b)),
                    _ => None,
                };
                let topk = (1..=a.topk)
                    .map(|k| topk_baseline(&pairs, k, DetectionProvider::GroundTruth, mode))
                    .collect::<Result<_>>()?;
                report.edges = Some(EdgeEvaluation { threshold: tau, budget, ground_truth, estimated, composed, topk });
            }
            write_json(&a.output, &report)
        }
        Command::Simulate(a) => {
            let cfg = a.world.resolve()?;
            let world = gen_world(&cfg)?;
            let mut buf = Vec::new();
            write_dump(&world, &mut buf)?;
            write_output(&a.output, &buf)
        }
        Command::VerifyTheorems(a) => {
            let cfg = a.world.resolve()?;
            let world = SuiteWorld::new(gen_world(&cfg)?)?;
            let budget = RiskBudget::new(a.eps, a.delta)?;
            let suite = SuiteConfig {
                mode: a.compose.into(),
                match_rule: a.match_rule.into(),
                ..SuiteConfig::uniform(budget, a.n, a.trials, a.trial_seed)
            };
            let report = theorem_suite(&world, &suite)?;
            print!("{}", theorem_text(&report));
            if a.output.output.is_some() {
                write_json(&a.output, &report)?;
            }
            Ok(())
        }
        Command::Report(a) => {
            let eval: EvaluationReport = read_json(&a.input)?;
            let tables = eval.tables();
            let mut text = String::new();
            for t in &tables {
                match a.format {
                    Format::Text => {
                        text.push_str(&t.to_text());
                        text.push('\n');
                    }
                    Format::Csv => text.push_str(&t.to_csv()?),
                }
            }
            write_output(&a.output, text.as_bytes())
        }
    }
}

/// Fixed-width summary of a theorem report.
pub fn theorem_text(r: &TheoremReport) -> String {
    let mut s = format!(
        "{:<18} {:>7} {:>7} {:>9} {:>9} {:>9}  status\n",
        "guarantee", "eps", "delta", "violated", "mean_err", "max_err"
    );
    for row in &r.rows {
        let status = if row.degenerate {
            "vacuous"
        } else if row.holds() {
            "ok"
        } else {
            "VIOLATED"
        };
        s.push_str(&format!(
            "{:<18} {:>7.3} {:>7.3} {:>9.3} {:>9.4} {:>9.4}  {}{}\n",
            row.name,
            row.budget.epsilon,
            row.budget.delta,
            row.summary.fraction,
            row.summary.mean_error,
            row.summary.max_error,
            status,
            if row.below_floor { " (below proposal floor)" } else { "" }
        ));
    }
    s.push_str(&format!("proposal floor {:.4}\n", r.proposal_floor));
    s
}
