//! Scenario files and the experiment runner behind the command-line tool.
//!
//! A scenario is one TOML document naming a game, a guide, a value-pair
//! source, a partition, the guide policies and the experiment to run. Every
//! random draw derives from `seed`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::equilibrium::{
    build_profile, deviation_gain, estimate_equilibrium, gap_series, limit_experiment, mean_path, nash_payoff_check, uniform_partition,
    verify_tracking_bounds, CorrelatedProfile, DeviationPolicy, DeviationSpec, ProfileOptions, ProfilePolicies, PsiMode, RolloutRecord,
};
use crate::error::{Error, Result};
use crate::game::{GameSpec, Payoff, Trajectory};
use crate::guide::{check_condition_c, ConditionPolicies, ConditionSettings, DeltaConvention, GeneratorSpec, PlayerLaw, RelaxedControlPolicy};
use crate::lattice::GridPair;
use crate::report::{emit_report, to_tree, Cell, Report, Table};
use crate::shift::ShiftConstants;
use crate::value::{solve_parabolic_system, truncation_box, ClosedFormKind, FeedbackLaw, PdeParams, ValuePair};
use crate::zero_sum::{solve_zero_sum_value, DpParams, ZeroSumValue};

pub const GAME_IDS: &[&str] = &["example2", "scalar-affine"];
pub const CLOSED_FORM_IDS: &[&str] = &["example2-solution", "example2-alt"];
pub const PAIR_SOURCES: &[&str] = &["closed-form", "solve-pde", "lattice-file"];
pub const DEVIATION_KINDS: &[&str] = &["constant", "random", "feedback", "zero-sum"];

/// Experiment executed by a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Constants,
    SolvePde,
    CheckConditionC,
    Simulate,
    Deviate,
    VerifyBounds,
    Limit,
    NashCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Constants => "constants",
            Self::SolvePde => "solve-pde",
            Self::CheckConditionC => "check-condition-c",
            Self::Simulate => "simulate",
            Self::Deviate => "deviate",
            Self::VerifyBounds => "verify-bounds",
            Self::Limit => "limit",
            Self::NashCheck => "nash-check",
        }
    }
}

fn default_controls() -> usize {
    21
}
fn default_substeps() -> usize {
    16
}
fn default_convention() -> DeltaConvention {
    DeltaConvention::DimensionAdjusted
}
fn default_rollouts() -> usize {
    2000
}
fn default_ode_substeps() -> usize {
    4
}
fn default_tol() -> f64 {
    0.05
}
fn default_samples() -> usize {
    100_000
}
fn default_intervals() -> Vec<Vec<f64>> {
    vec![vec![0.0, 0.5]]
}
fn default_dp_h() -> f64 {
    0.05
}
fn default_dp_dt() -> f64 {
    0.02
}
fn default_true() -> bool {
    true
}
fn default_store() -> usize {
    1
}
fn default_eq() -> LawSpec {
    LawSpec::Frozen(vec![-1.0])
}
fn default_punish() -> LawSpec {
    LawSpec::Frozen(vec![1.0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<f64>,
    #[serde(default = "default_controls")]
    pub controls_per_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    /// `[weight, offset]` of a linear payoff.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuideConfig {
    pub delta: f64,
    #[serde(default = "default_convention")]
    pub convention: DeltaConvention,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    pub source: String,
    /// Closed-form id; for `solve-pde` an optional reference to compare with.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    /// `sign` or `clip`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub law_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default = "default_store")]
    pub store_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nodes: Option<Vec<f64>>,
}

/// A frozen control or `"feedback"` on the value pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Frozen(Vec<f64>),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_eq")]
    pub eq_u: LawSpec,
    #[serde(default = "default_eq")]
    pub eq_v: LawSpec,
    #[serde(default = "default_punish")]
    pub punish_u: LawSpec,
    #[serde(default = "default_punish")]
    pub punish_v: LawSpec,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { eq_u: default_eq(), eq_v: default_eq(), punish_u: default_punish(), punish_v: default_punish() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviationConfig {
    pub player: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_rollouts")]
    pub n_rollouts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    /// Inner samples for `Ψ`; 0 selects the closed form.
    #[serde(default)]
    pub psi_inner: usize,
    #[serde(default = "default_ode_substeps")]
    pub ode_substeps: usize,
    /// Tolerance of the nash check, the PDE reference error and the sharp gap check.
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Also assert `|mean payoff − c| ≤ sharp_gap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharp_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fineness: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<f64>,
    #[serde(default = "default_true")]
    pub assert_empirical: bool,
    #[serde(default = "default_true")]
    pub assert_limit: bool,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default = "default_intervals")]
    pub intervals: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_u: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_v: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_dp_h")]
    pub dp_h: f64,
    #[serde(default = "default_dp_dt")]
    pub dp_dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<CounterexampleConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<DeviationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("run defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

/// One experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub experiment: Experiment,
    pub game: GameConfig,
    pub guide: GuideConfig,
    pub pair: PairConfig,
    pub partition: PartitionConfig,
    #[serde(default)]
    pub policies: PolicyConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

fn check_id(field: &str, id: &str, known: &[&str]) -> Result<()> {
    if known.contains(&id) {
        Ok(())
    } else {
        Err(field_err(field, format!("unknown id `{id}` (expected one of {})", known.join(", "))))
    }
}

fn check_law(field: &str, law: &LawSpec) -> Result<()> {
    match law {
        LawSpec::Named(s) if s != "feedback" => Err(field_err(field, format!("expected a control vector or \"feedback\", got `{s}`"))),
        _ => Ok(()),
    }
}

impl Scenario {
    /// Parses and validates; parse errors carry line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_id("game.id", &self.game.id, GAME_IDS)?;
        if self.game.id == "example2" && self.game.zeta.is_none() {
            return Err(field_err("game.zeta", "required for example2"));
        }
        if self.game.id == "scalar-affine" {
            for (name, v) in [("game.gamma1", &self.game.gamma1), ("game.gamma2", &self.game.gamma2)] {
                if v.as_ref().is_none_or(|w| w.len() != 2) {
                    return Err(field_err(name, "scalar-affine needs [weight, offset]"));
                }
            }
        }
        if self.game.controls_per_dim == 0 {
            return Err(field_err("game.controls_per_dim", "must be positive"));
        }
        if !(self.guide.delta >= 0.0) {
            return Err(field_err("guide.delta", "must be nonnegative"));
        }
        check_id("pair.source", &self.pair.source, PAIR_SOURCES)?;
        match self.pair.source.as_str() {
            "closed-form" => {
                let id = self.pair.id.as_deref().ok_or_else(|| field_err("pair.id", "closed-form pairs need an id"))?;
                check_id("pair.id", id, CLOSED_FORM_IDS)?;
                if self.game.id != "example2" {
                    return Err(field_err("pair.id", "closed-form pairs exist only for example2"));
                }
            }
            "solve-pde" => {
                if let Some(id) = &self.pair.id {
                    check_id("pair.id", id, CLOSED_FORM_IDS)?;
                }
                if self.pair.h.is_none() || self.pair.dt.is_none() {
                    return Err(field_err("pair.h", "solve-pde needs h and dt"));
                }
            }
            _ => {
                if self.pair.path.is_none() {
                    return Err(field_err("pair.path", "lattice-file pairs need a path"));
                }
            }
        }
        if let Some(law) = &self.pair.law {
            check_id("pair.law", law, &["sign", "clip"])?;
        }
        match (&self.partition.steps, &self.partition.nodes) {
            (Some(0), _) => return Err(field_err("partition.steps", "must be positive")),
            (Some(_), Some(_)) | (None, None) => return Err(field_err("partition", "give exactly one of steps or nodes")),
            _ => {}
        }
        check_law("policies.eq_u", &self.policies.eq_u)?;
        check_law("policies.eq_v", &self.policies.eq_v)?;
        check_law("policies.punish_u", &self.policies.punish_u)?;
        check_law("policies.punish_v", &self.policies.punish_v)?;
        for (i, d) in self.run.deviations.iter().enumerate() {
            check_id(&format!("run.deviations[{i}].kind"), &d.kind, DEVIATION_KINDS)?;
            if d.player != 1 && d.player != 2 {
                return Err(field_err(&format!("run.deviations[{i}].player"), "must be 1 or 2"));
            }
            if d.kind == "constant" && d.control.is_none() {
                return Err(field_err(&format!("run.deviations[{i}].control"), "constant deviations need a control"));
            }
        }
        if self.run.intervals.iter().any(|w| w.len() != 2 || !(w[0] < w[1])) {
            return Err(field_err("run.intervals", "each interval is [s, r] with s < r"));
        }
        if self.experiment == Experiment::Limit && self.run.deltas.is_empty() {
            return Err(field_err("run.deltas", "the limit experiment needs noise scales"));
        }
        Ok(())
    }

    pub fn build_game(&self) -> Result<GameSpec> {
        let g = &self.game;
        match g.id.as_str() {
            "example2" => GameSpec::example2(g.zeta.unwrap_or(0.25), g.controls_per_dim),
            _ => {
                let lin = |w: &Option<Vec<f64>>| {
                    let w = w.as_ref().expect("validated");
                    Payoff::Linear { weights: vec![w[0]], offset: w[1] }
                };
                GameSpec::scalar_affine(
                    g.u_gain.unwrap_or(1.0),
                    g.v_gain.unwrap_or(1.0),
                    g.drift.unwrap_or(0.0),
                    lin(&g.gamma1),
                    lin(&g.gamma2),
                    g.horizon.unwrap_or(1.0),
                    g.controls_per_dim,
                )
            }
        }
    }

    pub fn x0(&self, game: &GameSpec) -> Result<Vec<f64>> {
        let x0 = self.run.x0.clone().unwrap_or_else(|| vec![0.0; game.dim]);
        if x0.len() != game.dim {
            return Err(field_err("run.x0", format!("needs {} coordinates", game.dim)));
        }
        Ok(x0)
    }

    pub fn partition(&self, game: &GameSpec) -> Vec<f64> {
        match (&self.partition.steps, &self.partition.nodes) {
            (Some(n), _) => uniform_partition(0.0, game.horizon, *n),
            (_, Some(nodes)) => nodes.clone(),
            _ => unreachable!("validated"),
        }
    }

    /// Feedback law used by `solve-pde` pairs and `"feedback"` policies.
    pub fn law(&self, game: &GameSpec, delta: f64) -> FeedbackLaw {
        match self.pair.law.as_deref() {
            Some("clip") => FeedbackLaw::clip_for(game, self.pair.law_scale.unwrap_or(delta).max(f64::MIN_POSITIVE)),
            _ => FeedbackLaw::sign_for(game),
        }
    }

    fn closed_form_kind(id: &str) -> ClosedFormKind {
        if id == "example2-solution" {
            ClosedFormKind::Example2Solution
        } else {
            ClosedFormKind::Example2Alt
        }
    }

    fn pde_params(&self, game: &GameSpec, x0: &[f64], delta: f64) -> PdeParams {
        let (lo, hi) = truncation_box(game, x0, delta);
        PdeParams {
            lower: self.pair.lower.clone().unwrap_or(lo),
            upper: self.pair.upper.clone().unwrap_or(hi),
            h: self.pair.h.unwrap_or(0.05),
            dt: self.pair.dt.unwrap_or(0.002),
            t0: 0.0,
            store_every: self.pair.store_every.max(1),
        }
    }

    /// Value pair at noise scale `delta`.
    pub fn build_pair(&self, game: &GameSpec, delta: f64) -> Result<ValuePair> {
        match self.pair.source.as_str() {
            "closed-form" => {
                let id = self.pair.id.as_deref().unwrap_or("example2-alt");
                Ok(ValuePair::closed_form(Self::closed_form_kind(id), self.game.zeta.unwrap_or(0.25), game.horizon))
            }
            "solve-pde" => {
                let guide = GeneratorSpec::tracking_diffusion(game, delta)?;
                let x0 = self.x0(game)?;
                solve_parabolic_system(game, &guide, &self.law(game, delta), &self.pde_params(game, &x0, delta))
            }
            _ => ValuePair::grid(GridPair::load(Path::new(self.pair.path.as_deref().unwrap_or_default()))?),
        }
    }

    fn player_law(spec: &LawSpec, law: &Arc<FeedbackLaw>, pair: &Arc<ValuePair>) -> PlayerLaw {
        match spec {
            LawSpec::Frozen(c) => PlayerLaw::Frozen(c.clone()),
            LawSpec::Named(_) => PlayerLaw::Feedback { law: law.clone(), pair: pair.clone() },
        }
    }

    pub fn policies(&self, game: &GameSpec, delta: f64, pair: &Arc<ValuePair>) -> ProfilePolicies {
        let law = Arc::new(self.law(game, delta));
        let p = &self.policies;
        let eq = match (&p.eq_u, &p.eq_v) {
            (LawSpec::Frozen(u), LawSpec::Frozen(v)) => RelaxedControlPolicy::dirac(u.clone(), v.clone()),
            (LawSpec::Named(_), LawSpec::Named(_)) => RelaxedControlPolicy::dirac_feedback(law.clone(), pair.clone()),
            (u, v) => RelaxedControlPolicy::Product { u: Self::player_law(u, &law, pair), v: Self::player_law(v, &law, pair) },
        };
        ProfilePolicies { eq, punish1: Self::player_law(&p.punish_u, &law, pair), punish2: Self::player_law(&p.punish_v, &law, pair) }
    }

    pub fn options(&self) -> ProfileOptions {
        ProfileOptions {
            psi_mode: if self.run.psi_inner == 0 { PsiMode::ClosedForm } else { PsiMode::MonteCarlo { n_inner: self.run.psi_inner } },
            guide_substeps: self.guide.substeps,
            ode_substeps: self.run.ode_substeps,
            convention: self.guide.convention,
            master_seed: self.seed,
            ..ProfileOptions::default()
        }
    }

    /// Profile at noise scale `delta` with a freshly built pair.
    pub fn build_profile_at(&self, delta: f64) -> Result<CorrelatedProfile> {
        let game = self.build_game()?;
        let pair = Arc::new(self.build_pair(&game, delta)?);
        self.profile_with_pair(game, pair, delta)
    }

    pub fn profile_with_pair(&self, game: GameSpec, pair: Arc<ValuePair>, delta: f64) -> Result<CorrelatedProfile> {
        let guide = GeneratorSpec::tracking_diffusion(&game, delta)?;
        let policies = self.policies(&game, delta, &pair);
        let partition = self.partition(&game);
        build_profile(game, guide, pair, partition, policies, self.options())
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(self.output.dir.clone().unwrap_or_else(|| format!("out/{}", self.name)))
    }
}

/// One asserted check of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub pass: bool,
}

/// Result of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub experiment: Experiment,
    pub summary: Value,
    pub verdicts: Vec<Verdict>,
    pub files: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }
}

struct Sink {
    dir: PathBuf,
    files: Vec<PathBuf>,
    verdicts: Vec<Verdict>,
    lines: Vec<String>,
}

impl Sink {
    fn write(&mut self, name: &str, report: Report<'_>) -> Result<()> {
        let path = self.dir.join(name);
        emit_report(report, &path)?;
        self.files.push(path);
        Ok(())
    }

    fn verdict(&mut self, name: &str, pass: bool) {
        self.verdicts.push(Verdict { name: name.into(), pass });
    }

    fn line(&mut self, s: String) {
        self.lines.push(s);
    }
}

/// Caps the worker count of the global pool; the first call wins.
pub fn configure_threads(n: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Runs the scenario's experiment and writes its artifacts under `out`.
pub fn run_scenario(scenario: &Scenario, out: &Path) -> Result<RunOutcome> {
    scenario.validate()?;
    fs::create_dir_all(out)?;
    let mut sink = Sink { dir: out.to_path_buf(), files: Vec::new(), verdicts: Vec::new(), lines: Vec::new() };
    let body = match scenario.experiment {
        Experiment::Constants => run_constants(scenario, &mut sink)?,
        Experiment::SolvePde => run_solve_pde(scenario, &mut sink)?,
        Experiment::CheckConditionC => run_condition(scenario, &mut sink)?,
        Experiment::Simulate => run_simulate(scenario, &mut sink)?,
        Experiment::Deviate => run_deviate(scenario, &mut sink)?,
        Experiment::VerifyBounds => run_verify_bounds(scenario, &mut sink)?,
        Experiment::Limit => run_limit(scenario, &mut sink)?,
        Experiment::NashCheck => run_nash(scenario, &mut sink)?,
    };
    let verdict_tree: serde_json::Map<String, Value> = sink.verdicts.iter().map(|v| (v.name.clone(), Value::Bool(v.pass))).collect();
    let pass = sink.verdicts.iter().all(|v| v.pass);
    let summary = json!({
        "scenario": scenario.name,
        "experiment": scenario.experiment.name(),
        "seed": scenario.seed,
        "result": body,
        "verdicts": verdict_tree,
        "pass": pass,
    });
    sink.write("summary.json", Report::Tree(&summary))?;
    for v in &sink.verdicts {
        sink.lines.push(format!("{} {}", if v.pass { "PASS" } else { "FAIL" }, v.name));
    }
    Ok(RunOutcome { experiment: scenario.experiment, summary, verdicts: sink.verdicts, files: sink.files, lines: sink.lines })
}

fn run_constants(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let game = s.build_game()?;
    let c = ShiftConstants::new(&game, s.guide.delta);
    let part = s.partition(&game);
    let d = part.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let fineness = if s.run.fineness.is_empty() { vec![0.0, d] } else { s.run.fineness.clone() };
    let table = c.table(&fineness);
    let mut t = Table::new(&["fineness", "alpha_tilde", "epsilon", "theorem_epsilon", "terminal_gap_bound"]);
    sink.line(format!("beta = {}", crate::report::format_float(c.beta)));
    sink.line(format!("C = {}", crate::report::format_float(c.big_c)));
    sink.line(format!("M = {}  K = {}  R = {}  T = {}  delta = {}", c.m, c.k, c.r, c.horizon, c.delta));
    sink.line("fineness  alpha_tilde  epsilon  theorem_epsilon".into());
    for r in &table.rows {
        t.push(vec![r.fineness.into(), r.alpha_tilde.into(), r.epsilon.into(), r.theorem_epsilon.into(), r.terminal_gap_bound.into()]);
        sink.line(format!(
            "{}  {}  {}  {}",
            crate::report::format_float(r.fineness),
            crate::report::format_float(r.alpha_tilde),
            crate::report::format_float(r.epsilon),
            crate::report::format_float(r.theorem_epsilon)
        ));
    }
    sink.write("constants.csv", Report::Csv(&t))?;
    let want_c = 2.0 * (c.horizon * (c.beta * c.horizon).exp()).sqrt();
    sink.verdict("beta", c.beta == 5.0 + 2.0 * c.k);
    sink.verdict("big_c", (c.big_c - want_c).abs() <= 1e-12 * want_c.max(1.0));
    sink.verdict("zero_fineness", c.alpha_tilde(0.0) == 0.0 && c.epsilon_modulus(0.0)? == 0.0);
    let te0 = (c.r * c.big_c + c.horizon) * c.delta;
    sink.verdict("theorem_epsilon_zero", (c.theorem_epsilon(0.0) - te0).abs() <= 1e-12 * te0.max(1.0));
    to_tree(&table)
}

fn run_solve_pde(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    if s.pair.source != "solve-pde" {
        return Err(field_err("pair.source", "the solve-pde experiment needs source = \"solve-pde\""));
    }
    let game = s.build_game()?;
    let x0 = s.x0(&game)?;
    let pair = s.build_pair(&game, s.guide.delta)?;
    let ValuePair::Grid(grid) = &pair else { unreachable!("solve-pde yields a grid pair") };
    let lattice_path = sink.dir.join("pair.lattice");
    grid.save(&lattice_path)?;
    sink.files.push(lattice_path.clone());
    let probes: Vec<Vec<f64>> = (0..grid.lattice.len()).filter(|&i| grid.lattice.is_interior(i)).map(|i| grid.lattice.node(i)).collect();
    let boundary = pair.boundary_error(&game, &probes)?;
    let at0 = pair.eval(grid.times[0], &x0)?;
    sink.verdict("terminal_condition", boundary <= 1e-9);
    let mut body = json!({
        "lattice": lattice_path.file_name().and_then(|n| n.to_str()),
        "nodes": grid.lattice.nodes,
        "levels": grid.times.len(),
        "boundary_error": boundary,
        "c1_at_x0": at0.c1,
        "c2_at_x0": at0.c2,
    });
    if let Some(id) = &s.pair.id {
        let reference = ValuePair::closed_form(Scenario::closed_form_kind(id), s.game.zeta.unwrap_or(0.25), game.horizon);
        let mut series = Table::new(&["t", "max_error"]);
        let mut worst: f64 = 0.0;
        for (k, &t) in grid.times.iter().enumerate() {
            let mut err: f64 = 0.0;
            for i in (0..grid.lattice.len()).filter(|&i| grid.lattice.is_interior(i)) {
                let x = grid.lattice.node(i);
                let r = reference.eval(t, &x)?;
                err = err.max((grid.c1[k][i] - r.c1).abs()).max((grid.c2[k][i] - r.c2).abs());
            }
            worst = worst.max(err);
            series.push(vec![t.into(), err.into()]);
        }
        sink.write("pde_error.csv", Report::Plotdata(&series))?;
        sink.line(format!("max interior error against {id}: {}", crate::report::format_float(worst)));
        sink.verdict("reference_error", worst <= s.run.tol);
        body["max_reference_error"] = json!(worst);
    }
    Ok(body)
}

fn run_condition(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let game = s.build_game()?;
    let pair = Arc::new(s.build_pair(&game, s.guide.delta)?);
    let guide = GeneratorSpec::tracking_diffusion(&game, s.guide.delta)?;
    let pol = s.policies(&game, s.guide.delta, &pair);
    let settings = ConditionSettings {
        intervals: s.run.intervals.iter().map(|w| (w[0], w[1])).collect(),
        states: s.run.states.clone().unwrap_or_else(|| vec![s.x0(&game).unwrap_or_default()]),
        frozen_u: s.run.frozen_u.clone().unwrap_or_else(|| game.u_grid.points().to_vec()),
        frozen_v: s.run.frozen_v.clone().unwrap_or_else(|| game.v_grid.points().to_vec()),
        n_samples: s.run.n_samples,
        substeps: s.guide.substeps,
        tol: 0.0,
        seed: s.seed,
    };
    let report = check_condition_c(&guide, &pair, &ConditionPolicies { eta: pol.eq, mu: Some(pol.punish1), nu: Some(pol.punish2) }, &settings)?;
    let mut t = Table::new(&["part", "player", "s", "r", "frozen", "mean", "std_err", "pass"]);
    for e in &report.entries {
        let frozen = e.frozen.as_ref().map(|c| c.iter().map(|v| crate::report::format_float(*v)).collect::<Vec<_>>().join(" "));
        t.push(vec![
            Cell::from(e.part as usize),
            e.player.into(),
            e.s.into(),
            e.r.into(),
            Cell::Text(frozen.unwrap_or_default()),
            e.estimate.mean.into(),
            e.estimate.std_err.into(),
            e.pass.into(),
        ]);
    }
    sink.write("condition_c.csv", Report::Csv(&t))?;
    for part in 1..=3u8 {
        if let Some(w) = report.worst(part) {
            sink.line(format!("part {part}: worst mean {} (se {})", crate::report::format_float(w.estimate.mean), crate::report::format_float(w.estimate.std_err)));
        }
        sink.verdict(&format!("part_{part}"), report.entries.iter().filter(|e| e.part == part).all(|e| e.pass));
    }
    to_tree(&report)
}

fn rollout_table(records: &[RolloutRecord]) -> Table {
    let mut t = Table::new(&["rollout_id", "payoff1", "payoff2", "theta", "terminal_gap", "switched"]);
    for r in records {
        t.push(vec![r.rollout_id.into(), r.payoffs.0.into(), r.payoffs.1.into(), r.theta.into(), r.terminal_gap().into(), r.theta.is_some().into()]);
    }
    t
}

fn gap_plot(profile: &CorrelatedProfile, records: &[RolloutRecord]) -> Table {
    let mut t = Table::new(&["t", "mean_gap"]);
    if records.is_empty() {
        return t;
    }
    let series: Vec<Vec<f64>> = records.iter().map(gap_series).collect();
    for (k, &tk) in profile.partition.iter().enumerate() {
        let m = series.iter().map(|s| s[k]).sum::<f64>() / series.len() as f64;
        t.push(vec![tk.into(), m.into()]);
    }
    t
}

fn run_simulate(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let profile = s.build_profile_at(s.guide.delta)?;
    let x0 = s.x0(&profile.game)?;
    let (report, records) = estimate_equilibrium(&profile, &x0, s.run.n_rollouts)?;
    sink.write("rollouts.csv", Report::Csv(&rollout_table(&records)))?;
    sink.write("gap.csv", Report::Plotdata(&gap_plot(&profile, &records)))?;
    sink.line(format!(
        "mean payoffs ({}, {}) against ({}, {}); theorem epsilon {}",
        crate::report::format_float(report.payoff1.mean),
        crate::report::format_float(report.payoff2.mean),
        crate::report::format_float(report.c1),
        crate::report::format_float(report.c2),
        crate::report::format_float(report.theorem_epsilon)
    ));
    sink.verdict("theorem_gap", report.pass);
    if let Some(sharp) = s.run.sharp_gap {
        sink.verdict("sharp_gap", report.gap1.max(report.gap2) <= sharp);
    }
    to_tree(&report)
}

fn deviation_spec(s: &Scenario, profile: &CorrelatedProfile, d: &DeviationConfig, idx: usize) -> Result<DeviationSpec> {
    let game = &profile.game;
    let policy = match d.kind.as_str() {
        "constant" => DeviationPolicy::Constant(d.control.clone().unwrap_or_default()),
        "random" => DeviationPolicy::Random,
        "feedback" => DeviationPolicy::Feedback { law: Arc::new(s.law(game, s.guide.delta)), pair: profile.pair.clone() },
        _ => {
            let x0 = s.x0(game)?;
            DeviationPolicy::ZeroSumOptimal(Arc::new(solve_zero_sum_value(game, d.player, &dp_params(s, game, &x0))?))
        }
    };
    Ok(DeviationSpec { player: d.player, policy, stream_id: idx as u64 + 1 })
}

fn run_deviate(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let profile = s.build_profile_at(s.guide.delta)?;
    let x0 = s.x0(&profile.game)?;
    let mut t = Table::new(&["player", "kind", "gain", "gain_se", "switch_fraction", "theorem_epsilon", "pass_theorem", "pass_empirical"]);
    let mut reports = Vec::new();
    for (i, d) in s.run.deviations.iter().enumerate() {
        let spec = deviation_spec(s, &profile, d, i)?;
        let (rep, _) = deviation_gain(&profile, &x0, &spec, s.run.n_rollouts)?;
        t.push(vec![
            d.player.into(),
            d.kind.as_str().into(),
            rep.gain.mean.into(),
            rep.gain.std_err.into(),
            rep.switch_fraction.into(),
            rep.theorem_epsilon.into(),
            rep.pass_theorem.into(),
            rep.pass_empirical.into(),
        ]);
        sink.line(format!(
            "player {} {}: gain {} (se {}), switched in {} of rollouts",
            d.player,
            d.kind,
            crate::report::format_float(rep.gain.mean),
            crate::report::format_float(rep.gain.std_err),
            crate::report::format_float(rep.switch_fraction)
        ));
        sink.verdict(&format!("deviation_{i}_theorem"), rep.pass_theorem);
        if s.run.assert_empirical {
            sink.verdict(&format!("deviation_{i}_empirical"), rep.pass_empirical);
            sink.verdict(&format!("deviation_{i}_switch"), rep.switch_fraction >= 0.99);
        }
        reports.push(to_tree(&rep)?);
    }
    sink.write("deviations.csv", Report::Csv(&t))?;
    Ok(Value::Array(reports))
}

fn run_verify_bounds(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let profile = s.build_profile_at(s.guide.delta)?;
    let x0 = s.x0(&profile.game)?;
    let (_, records) = estimate_equilibrium(&profile, &x0, s.run.n_rollouts)?;
    let report = verify_tracking_bounds(&profile, &records);
    let mut plot = Table::new(&["step", "mean_gap", "bound"]);
    let mut full = Table::new(&["step", "mean_gap", "mean_bound", "std_err", "pass"]);
    for st in &report.steps {
        plot.push(vec![st.step.into(), st.mean_gap.into(), st.mean_bound.into()]);
        full.push(vec![st.step.into(), st.mean_gap.into(), st.mean_bound.into(), st.std_err.into(), st.pass.into()]);
    }
    sink.write("tracking.csv", Report::Plotdata(&plot))?;
    sink.write("tracking_steps.csv", Report::Csv(&full))?;
    sink.write("rollouts.csv", Report::Csv(&rollout_table(&records)))?;
    sink.line(format!(
        "identity {}  step pass {}  terminal gap {} <= {}",
        crate::report::format_float(report.identity_fraction),
        crate::report::format_float(report.step_pass_fraction),
        crate::report::format_float(report.terminal_mean_gap.mean),
        crate::report::format_float(report.terminal_bound)
    ));
    sink.verdict("pre_switch_identity", report.identity_fraction == 1.0);
    sink.verdict("per_step_bound", report.step_pass_fraction >= 0.99);
    sink.verdict("terminal_bound", report.terminal_pass);
    to_tree(&report)
}

fn dp_params(s: &Scenario, game: &GameSpec, x0: &[f64]) -> DpParams {
    let pad = game.m * game.horizon + 0.25 + 3.0 * s.guide.delta;
    DpParams {
        lower: x0.iter().map(|v| v - pad).collect(),
        upper: x0.iter().map(|v| v + pad).collect(),
        h: s.run.dp_h,
        dt: s.run.dp_dt,
        t0: 0.0,
        store_every: 1,
        x0: x0.to_vec(),
    }
}

fn zero_sum_pair(s: &Scenario, game: &GameSpec, x0: &[f64]) -> Result<(ZeroSumValue, ZeroSumValue)> {
    let p = dp_params(s, game, x0);
    Ok((solve_zero_sum_value(game, 1, &p)?, solve_zero_sum_value(game, 2, &p)?))
}

fn run_limit(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let game = s.build_game()?;
    let x0 = s.x0(&game)?;
    let vals = zero_sum_pair(s, &game, &x0)?;
    let table = limit_experiment(&s.run.deltas, |d| s.build_profile_at(d), &x0, s.run.n_rollouts, Some((&vals.0, &vals.1)), s.run.tol)?;
    let mut t = Table::new(&["delta", "c1", "c2", "payoff1", "payoff1_se", "payoff2", "payoff2_se", "gap", "theorem_epsilon", "nash_pass"]);
    let mut plot = Table::new(&["delta", "gap", "theorem_epsilon"]);
    for r in &table.rows {
        t.push(vec![
            r.delta.into(),
            r.c1.into(),
            r.c2.into(),
            r.payoff1.mean.into(),
            r.payoff1.std_err.into(),
            r.payoff2.mean.into(),
            r.payoff2.std_err.into(),
            r.gap.into(),
            r.theorem_epsilon.into(),
            r.nash.as_ref().is_none_or(|n| n.pass).into(),
        ]);
        plot.push(vec![r.delta.into(), r.gap.into(), r.theorem_epsilon.into()]);
        sink.line(format!(
            "delta {}: c = ({}, {}), outcome ({}, {})",
            crate::report::format_float(r.delta),
            crate::report::format_float(r.c1),
            crate::report::format_float(r.c2),
            crate::report::format_float(r.payoff1.mean),
            crate::report::format_float(r.payoff2.mean)
        ));
    }
    sink.write("limit.csv", Report::Csv(&t))?;
    sink.write("limit_gap.csv", Report::Plotdata(&plot))?;
    if s.run.assert_limit {
        sink.verdict("monotone", table.monotone);
        sink.verdict("nash_membership", table.nash_pass);
        if s.pair.source == "closed-form" {
            let (c1, c2) = table.limit_point;
            sink.verdict("stable_values", table.rows.iter().all(|r| (r.c1 - c1).abs() <= 1e-12 && (r.c2 - c2).abs() <= 1e-12));
        }
    }
    to_tree(&table)
}

/// Path under constant controls on the partition nodes.
pub fn constant_path(game: &GameSpec, partition: &[f64], x0: &[f64], u: &[f64], v: &[f64], substeps: usize) -> Result<Trajectory> {
    let mut traj = Trajectory::new(partition[0], x0.to_vec());
    for w in partition.windows(2) {
        let x = game.integrate_step(w[0], traj.last(), u, v, w[1] - w[0], substeps)?;
        traj.push(w[1], x);
    }
    Ok(traj)
}

fn run_nash(s: &Scenario, sink: &mut Sink) -> Result<Value> {
    let profile = s.build_profile_at(s.guide.delta)?;
    let x0 = s.x0(&profile.game)?;
    let (_, records) = estimate_equilibrium(&profile, &x0, s.run.n_rollouts)?;
    let (v1, v2) = zero_sum_pair(s, &profile.game, &x0)?;
    let path = mean_path(&records).ok_or_else(|| field_err("run.n_rollouts", "needs at least one rollout"))?;
    let check = nash_payoff_check(&profile.game, &path, &v1, &v2, s.run.tol)?;
    let mut plot = Table::new(&["t", "x1", "x2"]);
    for (t, x) in path.times.iter().zip(&path.states) {
        let mut row = vec![Cell::from(*t)];
        row.extend(x.iter().take(2).map(|&v| Cell::from(v)));
        while row.len() < 3 {
            row.push(Cell::Text(String::new()));
        }
        plot.push(row);
    }
    sink.write("mean_path.csv", Report::Plotdata(&plot))?;
    sink.line(format!(
        "mean path margins ({}, {}), hull excess {}",
        crate::report::format_float(check.margin1),
        crate::report::format_float(check.margin2),
        crate::report::format_float(check.hull_excess)
    ));
    sink.verdict("mean_path_in_nash_set", check.pass);
    let mut body = json!({ "mean_path": to_tree(&check)? });
    if let Some(ce) = &s.run.counterexample {
        let traj = constant_path(&profile.game, &profile.partition, &x0, &ce.u, &ce.v, s.run.ode_substeps)?;
        let bad = nash_payoff_check(&profile.game, &traj, &v1, &v2, s.run.tol)?;
        sink.line(format!(
            "counterexample margins ({}, {})",
            crate::report::format_float(bad.margin1),
            crate::report::format_float(bad.margin2)
        ));
        sink.verdict("counterexample_rejected", !bad.pass);
        body["counterexample"] = to_tree(&bad)?;
    }
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
name = "ex2"
seed = 7
experiment = "simulate"

[game]
id = "example2"
zeta = 0.25

[guide]
delta = 0.05

[pair]
source = "closed-form"
id = "example2-alt"

[partition]
steps = 100
"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_toml(EXAMPLE).unwrap();
        assert_eq!(s.game.controls_per_dim, 21);
        assert_eq!(s.run.n_rollouts, 2000);
        assert_eq!(s.guide.convention, DeltaConvention::DimensionAdjusted);
        assert_eq!(s.policies.eq_u, LawSpec::Frozen(vec![-1.0]));
        assert_eq!(s.output_dir(), PathBuf::from("out/ex2"));
    }

    #[test]
    fn round_trip() {
        let mut s = Scenario::from_toml(EXAMPLE).unwrap();
        s.run.deviations.push(DeviationConfig { player: 2, kind: "constant".into(), control: Some(vec![1.0]) });
        s.run.deltas = vec![0.2, 0.1];
        s.policies.eq_v = LawSpec::Named("feedback".into());
        let text = s.to_toml().unwrap();
        assert_eq!(Scenario::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn unknown_game_id_names_the_field() {
        let text = EXAMPLE.replace("id = \"example2\"", "id = \"example9\"");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("game.id") && err.contains("example9"), "{err}");
    }

    #[test]
    fn parse_errors_carry_lines() {
        let text = EXAMPLE.replace("seed = 7", "seed = \"seven\"");
        let err = Scenario::from_toml(&text).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn partition_needs_one_form() {
        let text = EXAMPLE.replace("steps = 100", "steps = 100\nnodes = [0.0, 1.0]");
        assert!(Scenario::from_toml(&text).unwrap_err().to_string().contains("partition"));
    }
}
