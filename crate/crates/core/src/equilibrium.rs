//! The public-signal correlated profile: guide processes `Y⁰, Y¹, Y²`, the
//! switching rule, rollouts with unilateral deviations and the verification
//! reports built on top of them.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Control, GameSpec, State, Trajectory};
use crate::guide::{DeltaConvention, GeneratorSpec, PlayerLaw, RelaxedControlPolicy};
use crate::linalg::{add, axpy, dist_sq, dot, norm_sq, scale, sub};
use crate::rng::{branch, stream};
use crate::shift::{select_extremal, SelectorMode, ShiftConstants};
use crate::stats::Estimate;
use crate::value::{FeedbackLaw, ValuePair};
use crate::zero_sum::ZeroSumValue;

/// How `Ψ` is evaluated in the switching rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    ClosedForm,
    MonteCarlo { n_inner: usize },
}

/// Guide policies of the profile.
#[derive(Debug, Clone)]
pub struct ProfilePolicies {
    /// Joint policy `η` driving `Y⁰`.
    pub eq: RelaxedControlPolicy,
    /// First player's law `μ` driving `Y¹` against a frozen second player.
    pub punish1: PlayerLaw,
    /// Second player's law `ν` driving `Y²` against a frozen first player.
    pub punish2: PlayerLaw,
}

/// Numerical options of the profile.
#[derive(Debug, Clone, Copy)]
pub struct ProfileOptions {
    pub psi_mode: PsiMode,
    pub guide_substeps: usize,
    pub ode_substeps: usize,
    pub convention: DeltaConvention,
    pub boundary_tol: f64,
    pub master_seed: u64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            psi_mode: PsiMode::ClosedForm,
            guide_substeps: 16,
            ode_substeps: 4,
            convention: DeltaConvention::DimensionAdjusted,
            boundary_tol: 1e-6,
            master_seed: 0,
        }
    }
}

/// Uniform partition of `[t0, horizon]` into `n` steps.
pub fn uniform_partition(t0: f64, horizon: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| if k == n { horizon } else { t0 + (horizon - t0) * k as f64 / n as f64 }).collect()
}

/// The correlated strategy profile.
#[derive(Debug, Clone)]
pub struct CorrelatedProfile {
    pub game: GameSpec,
    pub guide: GeneratorSpec,
    pub pair: Arc<ValuePair>,
    pub partition: Vec<f64>,
    pub policies: ProfilePolicies,
    pub constants: ShiftConstants,
    pub options: ProfileOptions,
}

impl CorrelatedProfile {
    pub fn fineness(&self) -> f64 {
        self.partition.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub fn steps(&self) -> usize {
        self.partition.len() - 1
    }

    pub fn t0(&self) -> f64 {
        self.partition[0]
    }

    fn psi_inner(&self) -> usize {
        match self.options.psi_mode {
            PsiMode::ClosedForm => 0,
            PsiMode::MonteCarlo { n_inner } => n_inner,
        }
    }
}

/// Assembles and validates a profile.
pub fn build_profile(
    game: GameSpec,
    guide: GeneratorSpec,
    pair: Arc<ValuePair>,
    partition: Vec<f64>,
    policies: ProfilePolicies,
    options: ProfileOptions,
) -> Result<CorrelatedProfile> {
    if partition.len() < 2 || partition.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("partition must have at least two increasing nodes".into()));
    }
    if (partition[partition.len() - 1] - game.horizon).abs() > 1e-12 || partition[0] < 0.0 {
        return Err(Error::Config(format!("partition must end at the horizon {}", game.horizon)));
    }
    if (pair.horizon() - game.horizon).abs() > 1e-12 {
        return Err(Error::Config("value pair horizon differs from the game horizon".into()));
    }
    if guide.dim != game.dim || options.guide_substeps == 0 || options.ode_substeps == 0 {
        return Err(Error::Config("guide dimension or substep counts inconsistent with the game".into()));
    }
    let probes: Vec<State> = (0..3usize.pow(game.dim as u32))
        .map(|m| (0..game.dim).map(|i| ((m / 3usize.pow(i as u32)) % 3) as f64 * 0.5 - 0.5).collect())
        .collect();
    let boundary = pair.boundary_error(&game, &probes)?;
    if boundary > options.boundary_tol {
        return Err(Error::Config(format!("value pair misses the terminal condition by {boundary:.3e}")));
    }
    let cloud: Vec<(f64, State)> = probes.iter().map(|x| (partition[0], x.clone())).collect();
    let audit = guide.check_noise_conditions(&game, &cloud, options.convention)?;
    if !audit.passes {
        return Err(Error::Config(format!("guide fails the noise conditions: {audit:?}")));
    }
    policies.eq.validate(&game.u_grid, &game.v_grid)?;
    let probe_v = PlayerLaw::Frozen(game.v_grid.points()[0].clone());
    let probe_u = PlayerLaw::Frozen(game.u_grid.points()[0].clone());
    RelaxedControlPolicy::Product { u: policies.punish1.clone(), v: probe_v }.validate(&game.u_grid, &game.v_grid)?;
    RelaxedControlPolicy::Product { u: probe_u, v: policies.punish2.clone() }.validate(&game.u_grid, &game.v_grid)?;
    if options.psi_mode == PsiMode::ClosedForm
        && guide.psi_closed_form(0.0, 1.0, &probes[0], &probes[0], &policies.eq, options.guide_substeps).is_none()
    {
        return Err(Error::Config("closed-form Ψ is unavailable for this guide and policy".into()));
    }
    let constants = ShiftConstants::new(&game, guide.delta);
    Ok(CorrelatedProfile { game, guide, pair, partition, policies, constants, options })
}

/// Shared-signal state after processing node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalState {
    pub k: usize,
    pub y0: State,
    pub y1: State,
    pub y2: State,
    pub switched: bool,
    pub theta: Option<f64>,
    /// `‖x(t_k) − Y⁰(t_k)‖²`, the carry of the next decision bound.
    pub carry: f64,
}

impl SignalState {
    pub fn initial(x0: &[f64]) -> Self {
        Self { k: 0, y0: x0.to_vec(), y1: x0.to_vec(), y2: x0.to_vec(), switched: false, theta: None, carry: 0.0 }
    }
}

/// Diagnostics of one decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepDiagnostics {
    pub psi: f64,
    pub half_width: f64,
    pub bound: f64,
}

/// Profile controls `u♮(t, x, Y¹)`, `v♮(t, x, Y²)` at a node.
pub fn profile_controls(profile: &CorrelatedProfile, t: f64, x: &[f64], state: &SignalState) -> (Control, Control) {
    let (_, u) = select_extremal(&profile.game, SelectorMode::UMin, t, x, &state.y1);
    let (_, v) = select_extremal(&profile.game, SelectorMode::VMin, t, x, &state.y2);
    (u, v)
}

/// Processes node `k+1`: evaluates the switching rule with `x_now = x(t_{k+1})`,
/// advances the guides over `[t_k, t_{k+1}]` and returns the profile
/// controls for the next interval `[t_{k+1}, t_{k+2})`.
pub fn advance_signal(
    profile: &CorrelatedProfile,
    state: &SignalState,
    x_prev: &[f64],
    x_now: &[f64],
    rollout_id: u64,
) -> Result<(SignalState, Control, Control, StepDiagnostics)> {
    let k = state.k;
    if k + 1 >= profile.partition.len() {
        return Err(Error::Domain("signal already reached the horizon".into()));
    }
    let (s, r) = (profile.partition[k], profile.partition[k + 1]);
    let seed = profile.options.master_seed;
    let sub = profile.options.guide_substeps;
    let guide = &profile.guide;
    let mut psi_rng = stream(seed, rollout_id, (k + 1) as u64, branch::PSI);
    let psi = guide
        .estimate_psi(s, r, x_now, &state.y0, &profile.policies.eq, sub, profile.psi_inner(), &mut psi_rng)
        .map_err(|e| Error::Numeric(format!("Ψ estimation failed at step {}: {e}", k + 1)))?;
    let carry = dist_sq(x_prev, &state.y0);
    let bound = profile.constants.decision_bound(carry, r - s);
    let mut next = state.clone();
    next.k = k + 1;
    if !state.switched && psi.value + psi.half_width > bound {
        next.switched = true;
        next.theta = Some(s);
    }
    let mut rng0 = stream(seed, rollout_id, (k + 1) as u64, branch::GUIDE0);
    next.y0 = guide.sample_guide_path(s, r, &state.y0, &profile.policies.eq, sub, false, &mut rng0)?.terminal().to_vec();
    if next.switched {
        let (_, v_sharp) = select_extremal(&profile.game, SelectorMode::VMax, s, x_prev, &state.y1);
        let (_, u_sharp) = select_extremal(&profile.game, SelectorMode::UMax, s, x_prev, &state.y2);
        let p1 = RelaxedControlPolicy::Product { u: profile.policies.punish1.clone(), v: PlayerLaw::Frozen(v_sharp) };
        let p2 = RelaxedControlPolicy::Product { u: PlayerLaw::Frozen(u_sharp), v: profile.policies.punish2.clone() };
        let mut rng1 = stream(seed, rollout_id, (k + 1) as u64, branch::GUIDE1);
        let mut rng2 = stream(seed, rollout_id, (k + 1) as u64, branch::GUIDE2);
        next.y1 = guide.sample_guide_path(s, r, &state.y1, &p1, sub, false, &mut rng1)?.terminal().to_vec();
        next.y2 = guide.sample_guide_path(s, r, &state.y2, &p2, sub, false, &mut rng2)?.terminal().to_vec();
    } else {
        next.y1 = next.y0.clone();
        next.y2 = next.y0.clone();
    }
    next.carry = dist_sq(x_now, &next.y0);
    let (u, v) = profile_controls(profile, r, x_now, &next);
    Ok((next, u, v, StepDiagnostics { psi: psi.value, half_width: psi.half_width, bound }))
}

/// Replacement rule of a unilaterally deviating player.
#[derive(Debug, Clone)]
pub enum DeviationPolicy {
    None,
    Constant(Control),
    /// Uniform draw from the player's grid at every step.
    Random,
    /// Feedback law on the gradients of `pair` at the realized state.
    Feedback { law: Arc<FeedbackLaw>, pair: Arc<ValuePair> },
    /// One-step greedy play against the player's zero-sum value.
    ZeroSumOptimal(Arc<ZeroSumValue>),
}

#[derive(Debug, Clone)]
pub struct DeviationSpec {
    pub player: usize,
    pub policy: DeviationPolicy,
    /// Key of the deviator's private random stream.
    pub stream_id: u64,
}

impl DeviationSpec {
    pub fn none() -> Self {
        Self { player: 1, policy: DeviationPolicy::None, stream_id: 0 }
    }

    pub fn constant(player: usize, control: Control) -> Self {
        Self { player, policy: DeviationPolicy::Constant(control), stream_id: 0 }
    }

    pub fn is_none(&self) -> bool {
        matches!(self.policy, DeviationPolicy::None)
    }

    fn control(&self, profile: &CorrelatedProfile, k: usize, x: &[f64], rollout_id: u64) -> Result<Option<Control>> {
        let game = &profile.game;
        let grid = if self.player == 1 { &game.u_grid } else { &game.v_grid };
        let t = profile.partition[k];
        Ok(match &self.policy {
            DeviationPolicy::None => None,
            DeviationPolicy::Constant(c) => Some(c.clone()),
            DeviationPolicy::Random => {
                let mut rng = stream(profile.options.master_seed ^ self.stream_id.rotate_left(32), rollout_id, k as u64, branch::DEVIATION);
                Some(grid.points()[rng.random_range(0..grid.len())].clone())
            }
            DeviationPolicy::Feedback { law, pair } => {
                let s = pair.eval(t, x)?;
                Some(if self.player == 1 { law.u(&s.grad1, &s.grad2) } else { law.v(&s.grad1, &s.grad2) })
            }
            DeviationPolicy::ZeroSumOptimal(val) => {
                let dt = profile.partition[k + 1] - t;
                let other = if self.player == 1 { &game.v_grid } else { &game.u_grid };
                let mut best = (f64::NEG_INFINITY, grid.points()[0].clone());
                for own in grid.points() {
                    let worst = other
                        .points()
                        .iter()
                        .map(|b| {
                            let (u, v) = if self.player == 1 { (own, b) } else { (b, own) };
                            let mut y = x.to_vec();
                            axpy(dt, &add(&game.f1.eval(t, x, u), &game.f2.eval(t, x, v)), &mut y);
                            val.eval(t + dt, &y).0
                        })
                        .fold(f64::INFINITY, f64::min);
                    if worst > best.0 {
                        best = (worst, own.clone());
                    }
                }
                Some(best.1)
            }
        })
    }
}

/// One realization of the motion under the profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutRecord {
    pub rollout_id: u64,
    pub trajectory: Trajectory,
    pub y0: Vec<State>,
    pub y1: Vec<State>,
    pub y2: Vec<State>,
    /// Profile controls `u*`, `v*` per interval.
    pub u_star: Vec<Control>,
    pub v_star: Vec<Control>,
    /// Controls actually applied per interval.
    pub u_applied: Vec<Control>,
    pub v_applied: Vec<Control>,
    pub theta: Option<f64>,
    pub switched_flags: Vec<bool>,
    pub payoffs: (f64, f64),
    pub diagnostics: Vec<StepDiagnostics>,
}

impl RolloutRecord {
    pub fn terminal_gap(&self) -> f64 {
        dist_sq(self.trajectory.last(), self.y0.last().unwrap())
    }
}

/// Runs one realization from `x0`.
pub fn rollout(profile: &CorrelatedProfile, x0: &[f64], deviation: &DeviationSpec, rollout_id: u64) -> Result<RolloutRecord> {
    let game = &profile.game;
    let n = profile.steps();
    let mut state = SignalState::initial(x0);
    let mut x = x0.to_vec();
    let (mut u_star, mut v_star) = profile_controls(profile, profile.t0(), x0, &state);
    let mut rec = RolloutRecord {
        rollout_id,
        trajectory: Trajectory::new(profile.t0(), x0.to_vec()),
        y0: vec![x0.to_vec()],
        y1: vec![x0.to_vec()],
        y2: vec![x0.to_vec()],
        u_star: Vec::with_capacity(n),
        v_star: Vec::with_capacity(n),
        u_applied: Vec::with_capacity(n),
        v_applied: Vec::with_capacity(n),
        theta: None,
        switched_flags: vec![false],
        payoffs: (0.0, 0.0),
        diagnostics: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (s, r) = (profile.partition[k], profile.partition[k + 1]);
        let (mut u, mut v) = (u_star.clone(), v_star.clone());
        if let Some(c) = deviation.control(profile, k, &x, rollout_id)? {
            if deviation.player == 1 {
                u = c;
            } else {
                v = c;
            }
        }
        let x_next = game.integrate_step(s, &x, &u, &v, r - s, profile.options.ode_substeps)?;
        rec.u_star.push(u_star);
        rec.v_star.push(v_star);
        rec.u_applied.push(u);
        rec.v_applied.push(v);
        let (next, un, vn, diag) = advance_signal(profile, &state, &x, &x_next, rollout_id)?;
        u_star = un;
        v_star = vn;
        state = next;
        x = x_next;
        rec.trajectory.push(r, x.clone());
        rec.y0.push(state.y0.clone());
        rec.y1.push(state.y1.clone());
        rec.y2.push(state.y2.clone());
        rec.switched_flags.push(state.switched);
        rec.diagnostics.push(diag);
    }
    rec.theta = state.theta;
    rec.payoffs = game.terminal_payoffs(&x)?;
    Ok(rec)
}

/// Profile controls recomputed from a given node path and the shared signal.
pub fn replay_controls(profile: &CorrelatedProfile, rollout_id: u64, states: &[State]) -> Result<Vec<(Control, Control)>> {
    let mut state = SignalState::initial(&states[0]);
    let mut out = vec![profile_controls(profile, profile.t0(), &states[0], &state)];
    for k in 0..states.len().saturating_sub(1).min(profile.steps()) {
        let (next, u, v, _) = advance_signal(profile, &state, &states[k], &states[k + 1], rollout_id)?;
        state = next;
        out.push((u, v));
    }
    Ok(out)
}

/// Rollouts with ids `first_id..first_id+n`, in id order.
pub fn run_rollouts(profile: &CorrelatedProfile, x0: &[f64], deviation: &DeviationSpec, first_id: u64, n: usize) -> Result<Vec<RolloutRecord>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| rollout(profile, x0, deviation, first_id + i))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub n: usize,
    pub fineness: f64,
    pub delta: f64,
    pub payoff1: Estimate,
    pub payoff2: Estimate,
    pub c1: f64,
    pub c2: f64,
    pub gap1: f64,
    pub gap2: f64,
    pub theorem_epsilon: f64,
    pub switch_fraction: f64,
    pub pass: bool,
}

pub fn summarize_equilibrium(profile: &CorrelatedProfile, x0: &[f64], records: &[RolloutRecord]) -> Result<EquilibriumReport> {
    let p1: Vec<f64> = records.iter().map(|r| r.payoffs.0).collect();
    let p2: Vec<f64> = records.iter().map(|r| r.payoffs.1).collect();
    let start = profile.pair.eval(profile.t0(), x0)?;
    let (e1, e2) = (Estimate::from_samples(&p1), Estimate::from_samples(&p2));
    let eps = profile.constants.theorem_epsilon(profile.fineness());
    let gap1 = (e1.mean - start.c1).abs();
    let gap2 = (e2.mean - start.c2).abs();
    Ok(EquilibriumReport {
        n: records.len(),
        fineness: profile.fineness(),
        delta: profile.guide.delta,
        payoff1: e1,
        payoff2: e2,
        c1: start.c1,
        c2: start.c2,
        gap1,
        gap2,
        theorem_epsilon: eps,
        switch_fraction: fraction(records.iter().filter(|r| r.theta.is_some()).count(), records.len()),
        pass: gap1 <= eps && gap2 <= eps,
    })
}

/// Monte Carlo outcome of the undeviated profile compared with `c_i(t0, x0)`.
pub fn estimate_equilibrium(profile: &CorrelatedProfile, x0: &[f64], n_rollouts: usize) -> Result<(EquilibriumReport, Vec<RolloutRecord>)> {
    if n_rollouts < 2 {
        return Err(Error::Config("estimate_equilibrium needs at least two rollouts".into()));
    }
    let records = run_rollouts(profile, x0, &DeviationSpec::none(), 0, n_rollouts)?;
    Ok((summarize_equilibrium(profile, x0, &records)?, records))
}

fn fraction(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub player: usize,
    pub n: usize,
    pub baseline: Estimate,
    pub deviated: Estimate,
    /// Paired differences under common random numbers.
    pub gain: Estimate,
    pub switch_fraction: f64,
    pub theorem_epsilon: f64,
    pub pass_theorem: bool,
    pub pass_empirical: bool,
}

/// Gain of the deviator over the undeviated profile, rollout by rollout.
pub fn deviation_gain(profile: &CorrelatedProfile, x0: &[f64], deviation: &DeviationSpec, n_rollouts: usize) -> Result<(DeviationReport, Vec<RolloutRecord>)> {
    if deviation.player != 1 && deviation.player != 2 {
        return Err(Error::Config("deviation player must be 1 or 2".into()));
    }
    let base = run_rollouts(profile, x0, &DeviationSpec::none(), 0, n_rollouts)?;
    let dev = run_rollouts(profile, x0, deviation, 0, n_rollouts)?;
    let pick = |r: &RolloutRecord| if deviation.player == 1 { r.payoffs.0 } else { r.payoffs.1 };
    let b: Vec<f64> = base.iter().map(pick).collect();
    let d: Vec<f64> = dev.iter().map(pick).collect();
    let diff: Vec<f64> = d.iter().zip(&b).map(|(x, y)| x - y).collect();
    let gain = Estimate::from_samples(&diff);
    let eps = profile.constants.theorem_epsilon(profile.fineness());
    let se = if gain.std_err.is_finite() { gain.std_err } else { 0.0 };
    let report = DeviationReport {
        player: deviation.player,
        n: n_rollouts,
        baseline: Estimate::from_samples(&b),
        deviated: Estimate::from_samples(&d),
        gain,
        switch_fraction: fraction(dev.iter().filter(|r| r.theta.is_some()).count(), dev.len()),
        theorem_epsilon: eps,
        pass_theorem: gain.mean <= eps + 3.0 * se,
        pass_empirical: gain.mean <= 3.0 * se,
    };
    Ok((report, dev))
}

#[derive(Debug, Clone, Serialize)]
pub struct StepCheck {
    pub step: usize,
    pub mean_gap: f64,
    pub mean_bound: f64,
    pub std_err: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackingReport {
    pub n: usize,
    /// Fraction of rollouts with `Y¹ = Y² = Y⁰` bit-exactly at every pre-switch node.
    pub identity_fraction: f64,
    pub steps: Vec<StepCheck>,
    pub step_pass_fraction: f64,
    pub terminal_mean_gap: Estimate,
    pub terminal_bound: f64,
    pub terminal_pass: bool,
}

/// Checks the tracking estimates on undeviated rollouts.
pub fn verify_tracking_bounds(profile: &CorrelatedProfile, records: &[RolloutRecord]) -> TrackingReport {
    let n_steps = profile.steps();
    let identity = records
        .iter()
        .filter(|r| {
            (0..r.y0.len()).all(|k| r.switched_flags[k] || (r.y1[k] == r.y0[k] && r.y2[k] == r.y0[k]))
        })
        .count();
    let mut steps = Vec::with_capacity(n_steps);
    for k in 1..=n_steps {
        let dt = profile.partition[k] - profile.partition[k - 1];
        let gaps: Vec<f64> = records.iter().map(|r| dist_sq(&r.trajectory.states[k], &r.y0[k])).collect();
        let bounds: Vec<f64> = records
            .iter()
            .map(|r| profile.constants.decision_bound(dist_sq(&r.trajectory.states[k - 1], &r.y0[k - 1]), dt))
            .collect();
        let diff: Vec<f64> = gaps.iter().zip(&bounds).map(|(g, b)| g - b).collect();
        let d = Estimate::from_samples(&diff);
        let se = if d.std_err.is_finite() { d.std_err } else { 0.0 };
        steps.push(StepCheck {
            step: k,
            mean_gap: Estimate::from_samples(&gaps).mean,
            mean_bound: Estimate::from_samples(&bounds).mean,
            std_err: se,
            pass: records.is_empty() || d.mean <= 3.0 * se,
        });
    }
    let terminal: Vec<f64> = records.iter().map(RolloutRecord::terminal_gap).collect();
    let terminal_mean_gap = Estimate::from_samples(&terminal);
    let terminal_bound = profile.constants.terminal_gap_bound(profile.fineness());
    let se = if terminal_mean_gap.std_err.is_finite() { terminal_mean_gap.std_err } else { 0.0 };
    TrackingReport {
        n: records.len(),
        identity_fraction: if records.is_empty() { 1.0 } else { fraction(identity, records.len()) },
        step_pass_fraction: fraction(steps.iter().filter(|s| s.pass).count(), steps.len()),
        steps,
        terminal_pass: records.is_empty() || terminal_mean_gap.mean <= terminal_bound + 3.0 * se,
        terminal_mean_gap,
        terminal_bound,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NashCheck {
    pub pass: bool,
    /// `min_k γ_i(x(T)) − Val_i(t_k, x(t_k))` per player.
    pub margin1: f64,
    pub margin2: f64,
    /// Largest violation of the velocity-hull support test.
    pub hull_excess: f64,
}

/// Unit directions for the support-function hull test: coordinate axes and
/// pairwise diagonals, both signs.
fn hull_directions(d: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        dirs.push(e.clone());
        dirs.push(scale(-1.0, &e));
        for j in i + 1..d {
            for sj in [1.0, -1.0] {
                let mut e = vec![0.0; d];
                e[i] = std::f64::consts::FRAC_1_SQRT_2;
                e[j] = sj * std::f64::consts::FRAC_1_SQRT_2;
                dirs.push(e.clone());
                dirs.push(scale(-1.0, &e));
            }
        }
    }
    dirs
}

/// Membership test of a trajectory's terminal payoffs in the Nash payoff set.
pub fn nash_payoff_check(game: &GameSpec, trajectory: &Trajectory, val1: &ZeroSumValue, val2: &ZeroSumValue, tol: f64) -> Result<NashCheck> {
    for x in &trajectory.states {
        if !val1.lattice.contains(x) || !val2.lattice.contains(x) {
            return Err(Error::OutOfLattice { lower: val1.lattice.lower.clone(), upper: val1.lattice.upper() });
        }
    }
    let (g1, g2) = game.terminal_payoffs(trajectory.last())?;
    let mut margin1 = f64::INFINITY;
    let mut margin2 = f64::INFINITY;
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        margin1 = margin1.min(g1 - val1.eval(*t, x).0);
        margin2 = margin2.min(g2 - val2.eval(*t, x).0);
    }
    let dirs = hull_directions(game.dim);
    let mut hull_excess: f64 = f64::NEG_INFINITY;
    for k in 0..trajectory.times.len().saturating_sub(1) {
        let (t, x) = (trajectory.times[k], &trajectory.states[k]);
        let w = scale(1.0 / (trajectory.times[k + 1] - t), &sub(&trajectory.states[k + 1], x));
        for e in &dirs {
            let support = game
                .u_grid
                .points()
                .iter()
                .flat_map(|u| game.v_grid.points().iter().map(move |v| (u, v)))
                .map(|(u, v)| dot(e, &add(&game.f1.eval(t, x, u), &game.f2.eval(t, x, v))))
                .fold(f64::NEG_INFINITY, f64::max);
            hull_excess = hull_excess.max(dot(e, &w) - support);
        }
    }
    let hull_ok = hull_excess <= tol.max(1e-9);
    Ok(NashCheck {
        pass: tol.is_infinite() || (margin1 >= -tol && margin2 >= -tol && hull_ok),
        margin1,
        margin2,
        hull_excess,
    })
}

/// Node-wise mean of the realized trajectories.
pub fn mean_path(records: &[RolloutRecord]) -> Option<Trajectory> {
    let first = records.first()?;
    let n = records.len() as f64;
    let states = (0..first.trajectory.states.len())
        .map(|k| {
            let mut acc = vec![0.0; first.trajectory.states[k].len()];
            for r in records {
                axpy(1.0 / n, &r.trajectory.states[k], &mut acc);
            }
            acc
        })
        .collect();
    Some(Trajectory { times: first.trajectory.times.clone(), states })
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitRow {
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
    pub payoff1: Estimate,
    pub payoff2: Estimate,
    pub theorem_epsilon: f64,
    pub gap: f64,
    pub nash: Option<NashCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LimitTable {
    pub rows: Vec<LimitRow>,
    /// `(c1, c2)(t0, x0)` at the smallest noise scale.
    pub limit_point: (f64, f64),
    /// Gaps nonincreasing as `δ` shrinks, within the combined 95% half-widths.
    pub monotone: bool,
    pub nash_pass: bool,
}

/// Runs the profile family over the noise scales and tabulates outcomes.
pub fn limit_experiment(
    deltas: &[f64],
    build: impl Fn(f64) -> Result<CorrelatedProfile>,
    x0: &[f64],
    n_rollouts: usize,
    vals: Option<(&ZeroSumValue, &ZeroSumValue)>,
    tol: f64,
) -> Result<LimitTable> {
    let mut order: Vec<f64> = deltas.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut rows = Vec::with_capacity(order.len());
    for &delta in &order {
        let profile = build(delta)?;
        let (rep, records) = estimate_equilibrium(&profile, x0, n_rollouts)?;
        let nash = match (vals, mean_path(&records)) {
            (Some((v1, v2)), Some(path)) => Some(nash_payoff_check(&profile.game, &path, v1, v2, tol)?),
            _ => None,
        };
        rows.push(LimitRow {
            delta,
            c1: rep.c1,
            c2: rep.c2,
            payoff1: rep.payoff1,
            payoff2: rep.payoff2,
            theorem_epsilon: rep.theorem_epsilon,
            gap: rep.gap1.max(rep.gap2),
            nash,
        });
    }
    let hw = |r: &LimitRow| r.payoff1.half_width95().max(r.payoff2.half_width95());
    let monotone = rows.windows(2).all(|w| w[1].gap <= w[0].gap + hw(&w[0]) + hw(&w[1]));
    let last = rows.last().ok_or_else(|| Error::Config("limit experiment needs at least one noise scale".into()))?;
    Ok(LimitTable {
        limit_point: (last.c1, last.c2),
        monotone,
        nash_pass: rows.iter().all(|r| r.nash.as_ref().is_none_or(|n| n.pass)),
        rows,
    })
}

/// `‖x − y‖²` per node of a record, for plots.
pub fn gap_series(record: &RolloutRecord) -> Vec<f64> {
    record.trajectory.states.iter().zip(&record.y0).map(|(x, y)| norm_sq(&sub(x, y))).collect()
}
