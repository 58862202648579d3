//! The auxiliary stochastic model driving the guides: a Lévy–Khintchine type
//! generator with drift, constant diffusion and a finite jump table, plus
//! relaxed control policies, path sampling, the Ψ forecast statistic and the
//! Condition (𝒞) checker.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::game::{Control, ControlGrid, GameSpec, PlayerDynamics, State, Trajectory};
use crate::linalg::{add, axpy, dist_sq, dot, mat_vec, norm_sq, outer_self, sub};
use crate::stats::Estimate;
use crate::value::{FeedbackLaw, ValuePair};

/// Tolerance on mixture weights summing to one.
pub const WEIGHT_TOL: f64 = 1e-12;

/// Noise part of the generator.
#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    /// `σ = scale · I`.
    ScaledIdentity { scale: f64 },
    /// Constant `σ` with one row per state coordinate.
    Matrix { sigma: Vec<Vec<f64>> },
    /// Finite jump table on top of an optional `scale · I` diffusion.
    Jumps { offsets: Vec<Vec<f64>>, rates: JumpRates, diffusion_scale: f64 },
}

/// Jump intensities per offset.
#[derive(Debug, Clone, PartialEq)]
pub enum JumpRates {
    Constant(Vec<f64>),
    /// `base_j + u_coef_j · u[0] + v_coef_j · v[0]`.
    ControlAffine { base: Vec<f64>, u_coef: Vec<f64>, v_coef: Vec<f64> },
}

impl JumpRates {
    fn eval(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Self::Constant(r) => r.clone(),
            Self::ControlAffine { base, u_coef, v_coef } => base
                .iter()
                .zip(u_coef.iter().zip(v_coef))
                .map(|(b, (cu, cv))| b + cu * u[0] + cv * v[0])
                .collect(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Constant(r) => r.len(),
            Self::ControlAffine { base, u_coef, v_coef } if base.len() == u_coef.len() && base.len() == v_coef.len() => base.len(),
            Self::ControlAffine { .. } => usize::MAX,
        }
    }
}

/// Running reward `h(t, x, u, v)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Reward {
    Zero,
    Constant(f64),
    /// `u_coef · u[0] + v_coef · v[0]`.
    ControlLinear { u_coef: f64, v_coef: f64 },
}

impl Reward {
    pub fn eval(&self, _t: f64, _x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::ControlLinear { u_coef, v_coef } => u_coef * u[0] + v_coef * v[0],
        }
    }
}

/// How the `Σ ≤ δ²` audit treats the state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaConvention {
    Strict,
    /// Compares `Σ` with `d · δ²`.
    DimensionAdjusted,
}

/// The generator `Λ[u,v]` with drift `b = b1(u) + b2(v) + shift`.
#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub dim: usize,
    pub b1: PlayerDynamics,
    pub b2: PlayerDynamics,
    pub shift: Vec<f64>,
    pub noise: Noise,
    pub h1: Reward,
    pub h2: Reward,
    pub delta: f64,
    /// Row-major `G = σσᵀ` for the diffusion part.
    g_matrix: Vec<f64>,
}

impl GeneratorSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dim: usize,
        b1: PlayerDynamics,
        b2: PlayerDynamics,
        shift: Vec<f64>,
        noise: Noise,
        h1: Reward,
        h2: Reward,
        delta: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0) || shift.len() != dim {
            return Err(Error::Config(format!("bad generator: delta={delta}, shift {shift:?}")));
        }
        let g_matrix = match &noise {
            Noise::ScaledIdentity { scale } => diag(dim, scale * scale),
            Noise::Matrix { sigma } => {
                if sigma.len() != dim {
                    return Err(Error::Config("sigma must have one row per state coordinate".into()));
                }
                outer_self(sigma)
            }
            Noise::Jumps { offsets, rates, diffusion_scale } => {
                if offsets.iter().any(|y| y.len() != dim || norm_sq(y) == 0.0) || rates.len() != offsets.len() {
                    return Err(Error::Config("jump offsets must be non-zero d-vectors, one rate each".into()));
                }
                diag(dim, diffusion_scale * diffusion_scale)
            }
        };
        Ok(Self { dim, b1, b2, shift, noise, h1, h2, delta, g_matrix })
    }

    /// Guide with `b = f`, `σ = δI`, no rewards.
    pub fn tracking_diffusion(game: &GameSpec, delta: f64) -> Result<Self> {
        Self::new(
            game.dim,
            game.f1.clone(),
            game.f2.clone(),
            vec![0.0; game.dim],
            Noise::ScaledIdentity { scale: delta },
            Reward::Zero,
            Reward::Zero,
            delta,
        )
    }

    pub fn with_noise(mut self, noise: Noise) -> Result<Self> {
        self.noise = noise;
        Self::new(self.dim, self.b1, self.b2, self.shift, self.noise, self.h1, self.h2, self.delta)
    }

    pub fn with_rewards(mut self, h1: Reward, h2: Reward) -> Self {
        self.h1 = h1;
        self.h2 = h2;
        self
    }

    pub fn with_shift(mut self, shift: Vec<f64>) -> Result<Self> {
        self.shift = shift;
        Self::new(self.dim, self.b1, self.b2, self.shift, self.noise, self.h1, self.h2, self.delta)
    }

    /// Row-major diffusion matrix `G`.
    pub fn g_matrix(&self) -> &[f64] {
        &self.g_matrix
    }

    pub fn drift(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut b = add(&self.b1.eval(t, x, u), &self.b2.eval(t, x, v));
        axpy(1.0, &self.shift, &mut b);
        b
    }

    fn jumps(&self, u: &[f64], v: &[f64]) -> Option<(&[Vec<f64>], Vec<f64>)> {
        match &self.noise {
            Noise::Jumps { offsets, rates, .. } => Some((offsets, rates.eval(u, v))),
            _ => None,
        }
    }

    pub fn reward(&self, player: usize, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> f64 {
        if player == 1 {
            self.h1.eval(t, x, u, v)
        } else {
            self.h2.eval(t, x, u, v)
        }
    }

    /// `Σ = tr G + Σ_j ‖y_j‖² λ_j` and `g = b + Σ_{‖y_j‖>1} y_j λ_j`.
    pub fn sigma_and_g(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> (f64, Vec<f64>) {
        let mut sigma: f64 = (0..self.dim).map(|i| self.g_matrix[i * self.dim + i]).sum();
        let mut g = self.drift(t, x, u, v);
        if let Some((offsets, rates)) = self.jumps(u, v) {
            for (y, lam) in offsets.iter().zip(rates) {
                let n2 = norm_sq(y);
                sigma += n2 * lam;
                if n2 > 1.0 {
                    axpy(lam, y, &mut g);
                }
            }
        }
        (sigma, g)
    }

    /// True when drift, diffusion and jump rates ignore `(t, x)`.
    pub fn is_state_independent(&self) -> bool {
        self.b1.is_state_independent() && self.b2.is_state_independent()
    }

    /// Audits the closeness conditions over `cloud × U-grid × V-grid`.
    pub fn check_noise_conditions(
        &self,
        game: &GameSpec,
        cloud: &[(f64, State)],
        convention: DeltaConvention,
    ) -> Result<NoiseAudit> {
        if cloud.is_empty() {
            return Err(Error::Config("noise audit needs a non-empty sample cloud".into()));
        }
        let d2 = self.delta * self.delta;
        let mut a = NoiseAudit {
            sigma_ratio_strict: 0.0,
            sigma_ratio_adjusted: 0.0,
            drift_ratio: 0.0,
            reward_ratio: 0.0,
            convention,
            passes: false,
            strict_passes: false,
        };
        for (t, x) in cloud {
            for u in game.u_grid.points() {
                for v in game.v_grid.points() {
                    let (sigma, g) = self.sigma_and_g(*t, x, u, v);
                    let f = game.eval_rhs(*t, x, u, v)?;
                    a.sigma_ratio_strict = a.sigma_ratio_strict.max(ratio(sigma, d2));
                    a.sigma_ratio_adjusted = a.sigma_ratio_adjusted.max(ratio(sigma, self.dim as f64 * d2));
                    a.drift_ratio = a.drift_ratio.max(ratio(dist_sq(&f, &g), 2.0 * d2));
                    let h = self.h1.eval(*t, x, u, v).abs().max(self.h2.eval(*t, x, u, v).abs());
                    a.reward_ratio = a.reward_ratio.max(ratio(h, self.delta));
                }
            }
        }
        let limit = 1.0 + 1e-9;
        let rest = a.drift_ratio <= limit && a.reward_ratio <= limit;
        a.strict_passes = rest && a.sigma_ratio_strict <= limit;
        a.passes = rest
            && match convention {
                DeltaConvention::Strict => a.sigma_ratio_strict <= limit,
                DeltaConvention::DimensionAdjusted => a.sigma_ratio_adjusted <= limit,
            };
        Ok(a)
    }

    /// `Λ[u,v]φ(x)` evaluated from the derivatives of `φ`.
    pub fn apply_generator(&self, t: f64, x: &[f64], u: &[f64], v: &[f64], phi: &dyn SmoothFn) -> f64 {
        let d = self.dim;
        let grad = phi.gradient(x);
        let hess = phi.hessian(x);
        let diffusion = 0.5 * (0..d * d).map(|k| self.g_matrix[k] * hess[k]).sum::<f64>();
        let mut out = diffusion + dot(&self.drift(t, x, u, v), &grad);
        if let Some((offsets, rates)) = self.jumps(u, v) {
            let base = phi.value(x);
            for (y, lam) in offsets.iter().zip(rates) {
                let mut jump = phi.value(&add(x, y)) - base;
                if norm_sq(y) <= 1.0 {
                    jump -= dot(y, &grad);
                }
                out += lam * jump;
            }
        }
        out
    }

    /// Drift used by the sampler: `b` minus the small-jump compensator.
    fn sampling_drift(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        let mut b = self.drift(t, x, u, v);
        if let Some((offsets, rates)) = self.jumps(u, v) {
            for (y, lam) in offsets.iter().zip(rates) {
                if norm_sq(y) <= 1.0 {
                    axpy(-lam, y, &mut b);
                }
            }
        }
        b
    }

    fn diffuse<R: Rng + ?Sized>(&self, sqrt_tau: f64, y: &mut [f64], rng: &mut R) {
        match &self.noise {
            Noise::ScaledIdentity { scale } | Noise::Jumps { diffusion_scale: scale, .. } => {
                if *scale != 0.0 {
                    for yi in y.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *yi += scale * sqrt_tau * z;
                    }
                }
            }
            Noise::Matrix { sigma } => {
                let q = sigma.first().map_or(0, Vec::len);
                let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
                axpy(sqrt_tau, &mat_vec(sigma, &z), y);
            }
        }
    }

    /// Simulates the guide on `[s, r]` from `y` under `policy`.
    #[allow(clippy::too_many_arguments)]
    pub fn sample_guide_path<R: Rng + ?Sized>(
        &self,
        s: f64,
        r: f64,
        y: &[f64],
        policy: &RelaxedControlPolicy,
        substeps: usize,
        keep_path: bool,
        rng: &mut R,
    ) -> Result<GuidePath> {
        if !(s < r) || substeps == 0 {
            return Err(Error::Domain(format!("guide interval [{s}, {r}] with {substeps} substeps")));
        }
        let tau = (r - s) / substeps as f64;
        let sqrt_tau = tau.sqrt();
        let mut state = y.to_vec();
        let mut out = GuidePath {
            path: Trajectory::new(s, y.to_vec()),
            controls: Vec::new(),
            rewards: [0.0, 0.0],
            jumps: 0,
        };
        let rewarded = self.h1 != Reward::Zero || self.h2 != Reward::Zero;
        for j in 0..substeps {
            let t = s + j as f64 * tau;
            let t_next = if j + 1 == substeps { r } else { s + (j + 1) as f64 * tau };
            let mix = policy.mixture(t, &state)?;
            let atom = mix.sample(rng);
            let (u, v) = (atom.u.clone(), atom.v.clone());
            let before = if rewarded { Some(state.clone()) } else { None };
            axpy(tau, &self.sampling_drift(t, &state, &u, &v), &mut state);
            self.diffuse(sqrt_tau, &mut state, rng);
            if let Some((offsets, rates)) = self.jumps(&u, &v) {
                for (off, lam) in offsets.iter().zip(rates) {
                    if lam > 0.0 {
                        let count = Poisson::new(lam * tau)
                            .map_err(|e| Error::Numeric(format!("jump rate {lam}: {e}")))?
                            .sample(rng) as u64;
                        if count > 0 {
                            axpy(count as f64, off, &mut state);
                            out.jumps += count as usize;
                        }
                    }
                }
            }
            ensure_finite(&state, "guide state")?;
            if let Some(prev) = before {
                for (p, acc) in out.rewards.iter_mut().enumerate() {
                    let lo = mix.expect(|a, b| self.reward(p + 1, t, &prev, a, b));
                    let hi = mix.expect(|a, b| self.reward(p + 1, t_next, &state, a, b));
                    *acc += 0.5 * tau * (lo + hi);
                }
            }
            if keep_path {
                out.path.push(t_next, state.clone());
                out.controls.push((u, v));
            }
        }
        if !keep_path {
            out.path.push(r, state);
        }
        Ok(out)
    }

    /// Closed-form Ψ when the guide is state independent and the policy is a
    /// constant mixture; `None` otherwise.
    pub fn psi_closed_form(&self, s: f64, r: f64, x: &[f64], y: &[f64], policy: &RelaxedControlPolicy, substeps: usize) -> Option<f64> {
        if !self.is_state_independent() || substeps == 0 || !(s < r) {
            return None;
        }
        let mix = policy.constant_mixture()?;
        let tau = (r - s) / substeps as f64;
        let mut mean_g = vec![0.0; self.dim];
        let mut second = 0.0;
        let mut mean_sigma = 0.0;
        for atom in &mix.atoms {
            let (sigma, g) = self.sigma_and_g(s, y, &atom.u, &atom.v);
            axpy(atom.weight, &g, &mut mean_g);
            second += atom.weight * norm_sq(&g);
            mean_sigma += atom.weight * sigma;
        }
        let cov_trace = (second - norm_sq(&mean_g)).max(0.0);
        let mut gap = sub(x, y);
        axpy(-(r - s), &mean_g, &mut gap);
        Some(norm_sq(&gap) + (r - s) * mean_sigma + (r - s) * tau * cov_trace)
    }

    /// Monte Carlo Ψ with its 95% half-width.
    #[allow(clippy::too_many_arguments)]
    pub fn psi_monte_carlo<R: Rng + ?Sized>(
        &self,
        s: f64,
        r: f64,
        x: &[f64],
        y: &[f64],
        policy: &RelaxedControlPolicy,
        substeps: usize,
        n_inner: usize,
        rng: &mut R,
    ) -> Result<PsiEstimate> {
        if n_inner < 2 {
            return Err(Error::Config("Monte Carlo Ψ needs n_inner >= 2".into()));
        }
        let samples = (0..n_inner)
            .map(|_| {
                self.sample_guide_path(s, r, y, policy, substeps, false, rng)
                    .map(|p| dist_sq(x, p.terminal()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let e = Estimate::from_samples(&samples);
        Ok(PsiEstimate { value: e.mean, half_width: e.half_width95() })
    }

    /// Ψ from the closed form when `n_inner == 0`, else by Monte Carlo.
    #[allow(clippy::too_many_arguments)]
    pub fn estimate_psi<R: Rng + ?Sized>(
        &self,
        s: f64,
        r: f64,
        x: &[f64],
        y: &[f64],
        policy: &RelaxedControlPolicy,
        substeps: usize,
        n_inner: usize,
        rng: &mut R,
    ) -> Result<PsiEstimate> {
        if n_inner == 0 {
            self.psi_closed_form(s, r, x, y, policy, substeps)
                .map(|value| PsiEstimate { value, half_width: 0.0 })
                .ok_or_else(|| Error::Config("no closed-form Ψ for this guide and policy".into()))
        } else {
            self.psi_monte_carlo(s, r, x, y, policy, substeps, n_inner, rng)
        }
    }

    /// Mean and SE of `φ(Y(r)) − φ(Y(s)) − ∫ Λφ dt` over recorded paths.
    pub fn martingale_residual(&self, paths: &[GuidePath], phi: &dyn SmoothFn) -> Result<Estimate> {
        let mut samples = Vec::with_capacity(paths.len());
        for p in paths {
            if p.controls.len() + 1 != p.path.states.len() {
                return Err(Error::Config("martingale residual needs paths sampled with keep_path".into()));
            }
            let xs = &p.path.states;
            let ts = &p.path.times;
            let mut integral = 0.0;
            for (j, (u, v)) in p.controls.iter().enumerate() {
                let lo = self.apply_generator(ts[j], &xs[j], u, v, phi);
                let hi = self.apply_generator(ts[j + 1], &xs[j + 1], u, v, phi);
                integral += 0.5 * (ts[j + 1] - ts[j]) * (lo + hi);
            }
            samples.push(phi.value(xs.last().unwrap()) - phi.value(&xs[0]) - integral);
        }
        Ok(Estimate::from_samples(&samples))
    }
}

fn diag(d: usize, value: f64) -> Vec<f64> {
    let mut g = vec![0.0; d * d];
    for i in 0..d {
        g[i * d + i] = value;
    }
    g
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Result of [`GeneratorSpec::check_noise_conditions`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseAudit {
    pub sigma_ratio_strict: f64,
    pub sigma_ratio_adjusted: f64,
    pub drift_ratio: f64,
    pub reward_ratio: f64,
    pub convention: DeltaConvention,
    /// Verdict under `convention`.
    pub passes: bool,
    /// Verdict under the strict convention, reported for comparison.
    pub strict_passes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PsiEstimate {
    pub value: f64,
    pub half_width: f64,
}

/// One sampled guide realization.
#[derive(Debug, Clone)]
pub struct GuidePath {
    pub path: Trajectory,
    /// Control pair drawn on each substep (empty unless the path was kept).
    pub controls: Vec<(Control, Control)>,
    /// `∫∫ h_i dη dt` for players 1 and 2.
    pub rewards: [f64; 2],
    pub jumps: usize,
}

impl GuidePath {
    pub fn terminal(&self) -> &[f64] {
        self.path.last()
    }
}

/// One atom of a mixture over `U × V`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub u: Control,
    pub v: Control,
}

/// Finite probability mixture over control pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub atoms: Vec<Atom>,
}

impl Mixture {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.weight).sum();
        if atoms.is_empty() || atoms.iter().any(|a| !(a.weight >= 0.0)) || (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::Config(format!("mixture weights must be nonnegative and sum to 1 (sum {total})")));
        }
        Ok(Self { atoms })
    }

    pub fn dirac(u: Control, v: Control) -> Self {
        Self { atoms: vec![Atom { weight: 1.0, u, v }] }
    }

    pub fn product(us: &[(f64, Control)], vs: &[(f64, Control)]) -> Result<Self> {
        Self::new(
            us.iter()
                .flat_map(|(wu, u)| vs.iter().map(move |(wv, v)| Atom { weight: wu * wv, u: u.clone(), v: v.clone() }))
                .collect(),
        )
    }

    /// Draws an atom; a single-atom mixture consumes no randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Atom {
        if self.atoms.len() == 1 {
            return &self.atoms[0];
        }
        let mut p: f64 = rng.random();
        for a in &self.atoms {
            if p < a.weight {
                return a;
            }
            p -= a.weight;
        }
        self.atoms.last().unwrap()
    }

    pub fn expect(&self, f: impl Fn(&Control, &Control) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * f(&a.u, &a.v)).sum()
    }

    pub fn within(&self, u_grid: &ControlGrid, v_grid: &ControlGrid) -> bool {
        self.atoms.iter().all(|a| u_grid.contains(&a.u) && v_grid.contains(&a.v))
    }
}

/// One player's part of a product policy.
#[derive(Debug, Clone)]
pub enum PlayerLaw {
    Frozen(Control),
    Mixture(Vec<(f64, Control)>),
    /// Feedback from the gradients of a value pair.
    Feedback { law: Arc<FeedbackLaw>, pair: Arc<ValuePair> },
}

/// Relaxed control of the guide: a rule `(t, y) ↦` mixture over `U × V`.
#[derive(Debug, Clone)]
pub enum RelaxedControlPolicy {
    Joint(Mixture),
    Product { u: PlayerLaw, v: PlayerLaw },
}

impl RelaxedControlPolicy {
    pub fn dirac(u: Control, v: Control) -> Self {
        Self::Joint(Mixture::dirac(u, v))
    }

    /// Both players follow `law` driven by `pair`.
    pub fn dirac_feedback(law: Arc<FeedbackLaw>, pair: Arc<ValuePair>) -> Self {
        Self::Product {
            u: PlayerLaw::Feedback { law: law.clone(), pair: pair.clone() },
            v: PlayerLaw::Feedback { law, pair },
        }
    }

    pub fn mixture(&self, t: f64, y: &[f64]) -> Result<Mixture> {
        match self {
            Self::Joint(m) => Ok(m.clone()),
            Self::Product { u, v } => Mixture::product(&Self::side(u, true, t, y)?, &Self::side(v, false, t, y)?),
        }
    }

    fn side(law: &PlayerLaw, first: bool, t: f64, y: &[f64]) -> Result<Vec<(f64, Control)>> {
        Ok(match law {
            PlayerLaw::Frozen(c) => vec![(1.0, c.clone())],
            PlayerLaw::Mixture(m) => m.clone(),
            PlayerLaw::Feedback { law, pair } => {
                let s = pair.eval(t, y)?;
                let c = if first { law.u(&s.grad1, &s.grad2) } else { law.v(&s.grad1, &s.grad2) };
                vec![(1.0, c)]
            }
        })
    }

    /// The mixture when it does not depend on `(t, y)`.
    pub fn constant_mixture(&self) -> Option<Mixture> {
        let fixed = |l: &PlayerLaw| !matches!(l, PlayerLaw::Feedback { .. });
        match self {
            Self::Joint(m) => Some(m.clone()),
            Self::Product { u, v } if fixed(u) && fixed(v) => self.mixture(0.0, &[]).ok(),
            Self::Product { .. } => None,
        }
    }

    /// Checks weights and that fixed supports lie in the grids.
    pub fn validate(&self, u_grid: &ControlGrid, v_grid: &ControlGrid) -> Result<()> {
        let ok = match self {
            Self::Joint(m) => Mixture::new(m.atoms.clone())?.within(u_grid, v_grid),
            Self::Product { u, v } => side_ok(u, u_grid, true)? && side_ok(v, v_grid, false)?,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config("policy support lies outside the control grids".into()))
        }
    }
}

fn side_ok(law: &PlayerLaw, grid: &ControlGrid, first: bool) -> Result<bool> {
    Ok(match law {
        PlayerLaw::Frozen(c) => grid.contains(c),
        PlayerLaw::Mixture(m) => {
            let total: f64 = m.iter().map(|(w, _)| w).sum();
            if m.iter().any(|(w, _)| !(*w >= 0.0)) || (total - 1.0).abs() > WEIGHT_TOL {
                return Err(Error::Config(format!("player mixture weights sum to {total}")));
            }
            m.iter().all(|(_, c)| grid.contains(c))
        }
        PlayerLaw::Feedback { law, .. } => law.within(grid, first),
    })
}

/// Smooth function with derivatives, as consumed by the generator.
pub trait SmoothFn {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    /// Row-major `d × d` Hessian.
    fn hessian(&self, x: &[f64]) -> Vec<f64>;
}

/// Test functions from the class 𝒟.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// `⟨a, x⟩`
    Linear(Vec<f64>),
    /// `‖x − a‖²`
    Quadratic(Vec<f64>),
    /// `cos⟨k, x⟩`, bounded with bounded derivatives.
    Cosine(Vec<f64>),
}

impl SmoothFn for TestFunction {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear(a) => dot(a, x),
            Self::Quadratic(a) => dist_sq(x, a),
            Self::Cosine(k) => dot(k, x).cos(),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Linear(a) => a.clone(),
            Self::Quadratic(a) => sub(x, a).iter().map(|v| 2.0 * v).collect(),
            Self::Cosine(k) => {
                let s = -dot(k, x).sin();
                k.iter().map(|ki| s * ki).collect()
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        match self {
            Self::Linear(_) => vec![0.0; d * d],
            Self::Quadratic(_) => diag(d, 2.0),
            Self::Cosine(k) => {
                let c = -dot(k, x).cos();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = c * k[i] * k[j];
                    }
                }
                h
            }
        }
    }
}

/// One statistic of the Condition (𝒞) check.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionEntry {
    pub part: u8,
    pub player: usize,
    pub s: f64,
    pub r: f64,
    pub y: Vec<f64>,
    pub frozen: Option<Vec<f64>>,
    /// Sample of `c_i(r, Y(r)) + ∫h_i − c_i(s, y)`.
    pub estimate: Estimate,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub passes: bool,
}

impl ConditionReport {
    /// Entry with the largest statistic relative to its allowance in `part`.
    pub fn worst(&self, part: u8) -> Option<&ConditionEntry> {
        let score = |e: &ConditionEntry| {
            if part == 1 {
                e.estimate.mean.abs() - 3.0 * e.estimate.std_err
            } else {
                e.estimate.mean - 3.0 * e.estimate.std_err
            }
        };
        self.entries
            .iter()
            .filter(|e| e.part == part)
            .max_by(|a, b| score(a).total_cmp(&score(b)))
    }
}

/// Policies entering Condition (𝒞).
#[derive(Debug, Clone)]
pub struct ConditionPolicies {
    pub eta: RelaxedControlPolicy,
    /// First player's punishment law against a frozen second player.
    pub mu: Option<PlayerLaw>,
    /// Second player's punishment law against a frozen first player.
    pub nu: Option<PlayerLaw>,
}

/// Settings for [`check_condition_c`].
#[derive(Debug, Clone)]
pub struct ConditionSettings {
    pub intervals: Vec<(f64, f64)>,
    pub states: Vec<State>,
    pub frozen_u: Vec<Control>,
    pub frozen_v: Vec<Control>,
    pub n_samples: usize,
    pub substeps: usize,
    pub tol: f64,
    pub seed: u64,
}

/// Statistical check of parts (i)–(iii) of Condition (𝒞).
pub fn check_condition_c(
    spec: &GeneratorSpec,
    pair: &ValuePair,
    policies: &ConditionPolicies,
    settings: &ConditionSettings,
) -> Result<ConditionReport> {
    use rayon::prelude::*;
    let (Some(mu), Some(nu)) = (&policies.mu, &policies.nu) else {
        return Err(Error::Config("Condition (C) needs both punishment policies".into()));
    };
    let mut jobs: Vec<(u8, usize, RelaxedControlPolicy, Option<Control>)> = vec![(1, 1, policies.eta.clone(), None), (1, 2, policies.eta.clone(), None)];
    for v in &settings.frozen_v {
        jobs.push((2, 2, RelaxedControlPolicy::Product { u: mu.clone(), v: PlayerLaw::Frozen(v.clone()) }, Some(v.clone())));
    }
    for u in &settings.frozen_u {
        jobs.push((3, 1, RelaxedControlPolicy::Product { u: PlayerLaw::Frozen(u.clone()), v: nu.clone() }, Some(u.clone())));
    }
    let mut tasks = Vec::new();
    for &(s, r) in &settings.intervals {
        for y in &settings.states {
            for job in &jobs {
                tasks.push((s, r, y.clone(), job.clone()));
            }
        }
    }
    let entries = tasks
        .into_par_iter()
        .enumerate()
        .map(|(idx, (s, r, y, (part, player, policy, frozen)))| {
            let start = pair.value(player, s, &y)?;
            let mut samples = Vec::with_capacity(settings.n_samples);
            for n in 0..settings.n_samples {
                let mut rng = crate::rng::stream(settings.seed, idx as u64, n as u64, crate::rng::branch::GUIDE0);
                let p = spec.sample_guide_path(s, r, &y, &policy, settings.substeps, false, &mut rng)?;
                samples.push(pair.value(player, r, p.terminal())? + p.rewards[player - 1] - start);
            }
            let estimate = Estimate::from_samples(&samples);
            let allowance = 3.0 * estimate.std_err + settings.tol;
            let pass = if part == 1 { estimate.mean.abs() <= allowance } else { estimate.mean <= allowance };
            Ok(ConditionEntry { part, player, s, r, y, frozen, estimate, pass })
        })
        .collect::<Result<Vec<_>>>()?;
    let passes = entries.iter().all(|e| e.pass);
    Ok(ConditionReport { entries, passes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::value::ClosedFormKind;

    fn ex2(delta: f64) -> (GameSpec, GeneratorSpec) {
        let g = GameSpec::example2(0.25, 21).unwrap();
        let s = GeneratorSpec::tracking_diffusion(&g, delta).unwrap();
        (g, s)
    }

    fn jump_spec(offsets: Vec<Vec<f64>>, rates: Vec<f64>, b: Vec<f64>) -> GeneratorSpec {
        let zero = PlayerDynamics::Affine { gain: vec![vec![0.0], vec![0.0]], drift: vec![0.0, 0.0] };
        GeneratorSpec::new(
            2,
            zero.clone(),
            zero,
            b,
            Noise::Jumps { offsets, rates: JumpRates::Constant(rates), diffusion_scale: 0.0 },
            Reward::Zero,
            Reward::Zero,
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn sigma_and_g_examples() {
        let (_, s) = ex2(0.05);
        let (sigma, g) = s.sigma_and_g(0.0, &[0.0, 0.0], &[1.0], &[-1.0]);
        assert!((sigma - 0.005).abs() < 1e-15);
        assert_eq!(g, vec![1.0, -1.0]);

        let s = jump_spec(vec![vec![0.5, 0.0]], vec![2.0], vec![0.0, 0.0]);
        let (sigma, g) = s.sigma_and_g(0.0, &[0.0, 0.0], &[0.0], &[0.0]);
        assert_eq!(sigma, 0.5);
        assert_eq!(g, vec![0.0, 0.0]);

        let s = jump_spec(vec![vec![2.0, 0.0]], vec![0.1], vec![1.0, 0.0]);
        let (sigma, g) = s.sigma_and_g(0.0, &[0.0, 0.0], &[0.0], &[0.0]);
        assert!((sigma - 0.4).abs() < 1e-15);
        assert!((g[0] - 1.2).abs() < 1e-15 && g[1] == 0.0);
    }

    #[test]
    fn noise_audit_examples() {
        let (game, s) = ex2(0.05);
        let cloud = vec![(0.0, vec![0.0, 0.0]), (0.5, vec![1.0, -2.0])];
        let strict = s.check_noise_conditions(&game, &cloud, DeltaConvention::Strict).unwrap();
        assert!(!strict.passes);
        assert!((strict.sigma_ratio_strict - 2.0).abs() < 1e-12);
        let adj = s.check_noise_conditions(&game, &cloud, DeltaConvention::DimensionAdjusted).unwrap();
        assert!(adj.passes);
        assert!((adj.sigma_ratio_adjusted - 1.0).abs() < 1e-12);

        let h = s.clone().with_rewards(Reward::Constant(0.05), Reward::Zero);
        let a = h.check_noise_conditions(&game, &cloud, DeltaConvention::DimensionAdjusted).unwrap();
        assert!((a.reward_ratio - 1.0).abs() < 1e-12 && a.passes);

        let bad = s.with_shift(vec![0.1, 0.0]).unwrap();
        let a = bad.check_noise_conditions(&game, &cloud, DeltaConvention::DimensionAdjusted).unwrap();
        assert!((a.drift_ratio - 2.0).abs() < 1e-9 && !a.passes);
        assert!(s_empty_cloud_rejected());
    }

    fn s_empty_cloud_rejected() -> bool {
        let (game, s) = ex2(0.05);
        s.check_noise_conditions(&game, &[], DeltaConvention::Strict).is_err()
    }

    #[test]
    fn psi_closed_form_example() {
        let (_, s) = ex2(0.05);
        let pol = RelaxedControlPolicy::dirac(vec![-1.0], vec![-1.0]);
        let psi = s.psi_closed_form(0.0, 0.1, &[0.0, 0.0], &[0.0, 0.0], &pol, 16).unwrap();
        assert!((psi - 0.0205).abs() < 1e-15, "{psi}");
        let (_, s0) = ex2(0.0);
        let psi = s0.psi_closed_form(0.0, 0.1, &[-0.1, -0.1], &[0.0, 0.0], &pol, 16).unwrap();
        assert!(psi.abs() < 1e-15);
    }

    #[test]
    fn psi_mixture_adds_control_variance() {
        let (_, s) = ex2(0.0);
        let pol = RelaxedControlPolicy::Product {
            u: PlayerLaw::Mixture(vec![(0.5, vec![-1.0]), (0.5, vec![1.0])]),
            v: PlayerLaw::Frozen(vec![0.0]),
        };
        // increments are ±τ per substep on the first axis: variance (r−s)τ
        let psi = s.psi_closed_form(0.0, 0.1, &[0.0, 0.0], &[0.0, 0.0], &pol, 10).unwrap();
        assert!((psi - 0.1 * 0.01).abs() < 1e-15);
        let mc = s.psi_monte_carlo(0.0, 0.1, &[0.0, 0.0], &[0.0, 0.0], &pol, 10, 20_000, &mut seeded(3)).unwrap();
        assert!((mc.value - psi).abs() <= 3.0 * mc.half_width, "{mc:?} vs {psi}");
    }

    #[test]
    fn estimate_psi_requires_closed_form_for_zero_inner() {
        let (_, s) = ex2(0.05);
        let pair = Arc::new(ValuePair::closed_form(ClosedFormKind::Example2Alt, 0.25, 1.0));
        let law = Arc::new(FeedbackLaw::sign_for(&GameSpec::example2(0.25, 21).unwrap()));
        let pol = RelaxedControlPolicy::dirac_feedback(law, pair);
        assert!(s.estimate_psi(0.0, 0.1, &[0.0, 0.0], &[0.0, 0.0], &pol, 4, 0, &mut seeded(1)).is_err());
        assert!(s.estimate_psi(0.0, 0.1, &[0.0, 0.0], &[0.0, 0.0], &pol, 4, 8, &mut seeded(1)).is_ok());
    }

    #[test]
    fn zero_noise_path_is_deterministic_trajectory() {
        let (game, s) = ex2(0.0);
        let pol = RelaxedControlPolicy::dirac(vec![0.5], vec![-1.0]);
        let p = s.sample_guide_path(0.0, 1.0, &[0.2, 0.1], &pol, 16, true, &mut seeded(0)).unwrap();
        let x = game.integrate_step(0.0, &[0.2, 0.1], &[0.5], &[-1.0], 1.0, 4).unwrap();
        assert!(dist_sq(p.terminal(), &x) < 1e-24);
        assert_eq!(p.path.states.len(), 17);
        assert_eq!(p.controls.len(), 16);
    }

    #[test]
    fn rewards_accumulate_by_quadrature() {
        let (_, s) = ex2(0.0);
        let s = s.with_rewards(Reward::ControlLinear { u_coef: 0.5, v_coef: 0.0 }, Reward::Constant(-0.25));
        let pol = RelaxedControlPolicy::Product {
            u: PlayerLaw::Mixture(vec![(0.25, vec![-1.0]), (0.75, vec![1.0])]),
            v: PlayerLaw::Frozen(vec![0.0]),
        };
        let p = s.sample_guide_path(0.0, 2.0, &[0.0, 0.0], &pol, 8, false, &mut seeded(0)).unwrap();
        assert!((p.rewards[0] - 2.0 * 0.5 * 0.5).abs() < 1e-14);
        assert!((p.rewards[1] + 0.5).abs() < 1e-14);
    }

    #[test]
    fn mixture_validation() {
        assert!(Mixture::new(vec![Atom { weight: 0.5, u: vec![0.0], v: vec![0.0] }]).is_err());
        let g = ControlGrid::uniform(&[-1.0], &[1.0], 3).unwrap();
        let pol = RelaxedControlPolicy::dirac(vec![2.0], vec![0.0]);
        assert!(pol.validate(&g, &g).is_err());
        let pol = RelaxedControlPolicy::dirac(vec![1.0], vec![0.0]);
        assert!(pol.validate(&g, &g).is_ok());
    }

    #[test]
    fn generator_on_test_functions() {
        let (_, s) = ex2(0.1);
        let x = [0.3, -0.4];
        let lin = TestFunction::Linear(vec![2.0, 1.0]);
        assert!((s.apply_generator(0.0, &x, &[1.0], &[-1.0], &lin) - 1.0).abs() < 1e-15);
        let quad = TestFunction::Quadratic(vec![0.0, 0.0]);
        // ½ tr(G·2I) + ⟨b, 2x⟩ = 2δ² + 2(0.3 + 0.4)
        let want = 2.0 * 0.01 + 1.4;
        assert!((s.apply_generator(0.0, &x, &[1.0], &[-1.0], &quad) - want).abs() < 1e-14);
        let jumps = jump_spec(vec![vec![0.5, 0.0]], vec![2.0], vec![0.0, 0.0]);
        // λ(‖x+y‖² − ‖x‖² − ⟨y, 2x⟩) = λ‖y‖²
        assert!((jumps.apply_generator(0.0, &x, &[0.0], &[0.0], &quad) - 0.5).abs() < 1e-14);
    }
}
