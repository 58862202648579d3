//! The deterministic differential game: separated dynamics
//! `f(t,x,u,v) = f1(t,x,u) + f2(t,x,v)`, terminal payoffs and the regularity
//! constants the strategy construction consumes.

use rand::Rng;
use serde::Serialize;

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{add, axpy, dist_sq, dot, mat_vec, norm};

pub type State = Vec<f64>;
pub type Control = Vec<f64>;

/// Slack used by bound checks on computed velocities.
pub const BOUND_TOL: f64 = 1e-9;

/// Finite stand-in for a compact control set.
///
/// The order of `points` is fixed and is what breaks ties in the extremal
/// selectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlGrid {
    points: Vec<Control>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlGrid {
    pub fn new(points: Vec<Control>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Config("control grid is empty".into()));
        }
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::Config(format!("bad control bounds {lower:?}..{upper:?}")));
        }
        let grid = Self { points, lower, upper };
        if let Some(p) = grid.points.iter().find(|p| !grid.contains(p)) {
            return Err(Error::Config(format!("control {p:?} lies outside its bounds")));
        }
        Ok(grid)
    }

    /// Tensor-product grid with `per_dim` points per coordinate, first
    /// coordinate varying slowest.
    pub fn uniform(lower: &[f64], upper: &[f64], per_dim: usize) -> Result<Self> {
        if per_dim == 0 || lower.is_empty() {
            return Err(Error::Config("uniform control grid needs per_dim >= 1 and dim >= 1".into()));
        }
        let axes: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .map(|(&lo, &hi)| {
                if per_dim == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..per_dim)
                        .map(|i| {
                            if i + 1 == per_dim {
                                hi
                            } else {
                                lo + (hi - lo) * i as f64 / (per_dim - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut points: Vec<Control> = vec![Vec::new()];
        for axis in &axes {
            points = points
                .iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&a| {
                        let mut p = prefix.clone();
                        p.push(a);
                        p
                    })
                })
                .collect();
        }
        Self::new(points, lower.to_vec(), upper.to_vec())
    }

    pub fn points(&self) -> &[Control] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.len() == self.dim()
            && c.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= lo - BOUND_TOL && *v <= hi + BOUND_TOL)
    }

    /// Corners of the bounding box.
    pub fn vertices(&self) -> Vec<Control> {
        let m = self.dim();
        (0..1usize << m)
            .map(|mask| {
                (0..m)
                    .map(|j| if mask >> j & 1 == 1 { self.upper[j] } else { self.lower[j] })
                    .collect()
            })
            .collect()
    }
}

/// Catalog of per-player velocity fields.
#[derive(Debug, Clone, PartialEq)]
pub enum PlayerDynamics {
    /// `gain · c + drift`; `gain` has one row per state coordinate.
    Affine { gain: Vec<Vec<f64>>, drift: Vec<f64> },
    /// `-rate · x`, ignoring the control. Bounds are declared on the ball of
    /// the given radius.
    LinearDecay { rate: f64, radius: f64 },
    /// Velocity of the nearest listed control.
    Table { controls: Vec<Control>, velocities: Vec<Vec<f64>> },
}

impl PlayerDynamics {
    pub fn eval(&self, _t: f64, x: &[f64], c: &[f64]) -> Vec<f64> {
        match self {
            Self::Affine { gain, drift } => add(&mat_vec(gain, c), drift),
            Self::LinearDecay { rate, .. } => x.iter().map(|v| -rate * v).collect(),
            Self::Table { controls, velocities } => {
                let best = controls
                    .iter()
                    .enumerate()
                    .map(|(i, k)| (i, dist_sq(k, c)))
                    .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
                velocities[best.0].clone()
            }
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::LinearDecay { rate, .. } => rate.abs(),
            _ => 0.0,
        }
    }

    pub fn is_state_independent(&self) -> bool {
        !matches!(self, Self::LinearDecay { .. })
    }

    /// Velocities whose convex hull contains every value of this field over
    /// the control box, when such a finite set exists.
    fn extreme_velocities(&self, grid: &ControlGrid) -> Option<Vec<Vec<f64>>> {
        match self {
            Self::Affine { .. } => Some(grid.vertices().iter().map(|c| self.eval(0.0, &[], c)).collect()),
            Self::Table { velocities, .. } => Some(velocities.clone()),
            Self::LinearDecay { .. } => None,
        }
    }

    fn bound(&self, grid: &ControlGrid) -> f64 {
        match self {
            Self::LinearDecay { rate, radius } => rate.abs() * radius,
            _ => self
                .extreme_velocities(grid)
                .unwrap_or_default()
                .iter()
                .map(|v| norm(v))
                .fold(0.0, f64::max),
        }
    }

    fn check_dim(&self, d: usize, m: usize) -> Result<()> {
        let ok = match self {
            Self::Affine { gain, drift } => gain.len() == d && drift.len() == d && gain.iter().all(|r| r.len() == m),
            Self::LinearDecay { rate, radius } => *rate >= 0.0 && *radius > 0.0,
            Self::Table { controls, velocities } => {
                !controls.is_empty()
                    && controls.len() == velocities.len()
                    && controls.iter().all(|c| c.len() == m)
                    && velocities.iter().all(|v| v.len() == d)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("dynamics descriptor inconsistent with d={d}, m={m}: {self:?}")))
        }
    }
}

/// Terminal payoff catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum Payoff {
    /// `<w, x> + offset`
    Linear { weights: Vec<f64>, offset: f64 },
    /// `<w, x> + offset + amplitude · sin(<k, x>)`
    LinearSine { weights: Vec<f64>, offset: f64, amplitude: f64, frequency: Vec<f64> },
    /// `<w, x> + offset + Σ q_i x_i² + Σ k_i x_i³`; `R` is taken over the ball
    /// of the given radius.
    Cubic { weights: Vec<f64>, offset: f64, quadratic: Vec<f64>, cubic: Vec<f64>, radius: f64 },
}

impl Payoff {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { weights, offset } => dot(weights, x) + offset,
            Self::LinearSine { weights, offset, amplitude, frequency } => {
                dot(weights, x) + offset + amplitude * dot(frequency, x).sin()
            }
            Self::Cubic { weights, offset, quadratic, cubic, .. } => {
                dot(weights, x)
                    + offset
                    + x.iter().zip(quadratic.iter().zip(cubic)).map(|(v, (q, k))| q * v * v + k * v * v * v).sum::<f64>()
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Linear { weights, .. } => weights.clone(),
            Self::LinearSine { weights, amplitude, frequency, .. } => {
                let c = amplitude * dot(frequency, x).cos();
                weights.iter().zip(frequency).map(|(w, k)| w + c * k).collect()
            }
            Self::Cubic { weights, quadratic, cubic, .. } => (0..x.len())
                .map(|i| weights[i] + 2.0 * quadratic[i] * x[i] + 3.0 * cubic[i] * x[i] * x[i])
                .collect(),
        }
    }

    /// Analytic Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Linear { weights, .. } => norm(weights),
            Self::LinearSine { weights, amplitude, frequency, .. } => norm(weights) + amplitude.abs() * norm(frequency),
            Self::Cubic { weights, quadratic, cubic, radius, .. } => {
                let curv: Vec<f64> = quadratic
                    .iter()
                    .zip(cubic)
                    .map(|(q, k)| 2.0 * q.abs() * radius + 3.0 * k.abs() * radius * radius)
                    .collect();
                norm(weights) + norm(&curv)
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            Self::Linear { weights, .. } => weights.len(),
            Self::LinearSine { weights, frequency, .. } => {
                if weights.len() == frequency.len() {
                    weights.len()
                } else {
                    usize::MAX
                }
            }
            Self::Cubic { weights, quadratic, cubic, .. } => {
                if weights.len() == quadratic.len() && weights.len() == cubic.len() {
                    weights.len()
                } else {
                    usize::MAX
                }
            }
        }
    }
}

/// Temporal modulus `α(θ) = coef · |θ|^exponent`; zero for autonomous games.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Modulus {
    Zero,
    Power { coef: f64, exponent: f64 },
}

impl Modulus {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Power { coef, exponent } => coef * theta.abs().powf(*exponent),
        }
    }
}

/// A two-player game with separated dynamics and terminal payoffs.
#[derive(Debug, Clone)]
pub struct GameSpec {
    pub horizon: f64,
    pub dim: usize,
    pub f1: PlayerDynamics,
    pub f2: PlayerDynamics,
    pub gamma1: Payoff,
    pub gamma2: Payoff,
    pub u_grid: ControlGrid,
    pub v_grid: ControlGrid,
    /// Velocity bound.
    pub m: f64,
    /// Spatial Lipschitz constant of the dynamics.
    pub k: f64,
    /// Lipschitz constant of the payoffs.
    pub r: f64,
    pub alpha: Modulus,
}

impl GameSpec {
    /// Assembles a game and derives `M`, `K`, `R` from the descriptors.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        horizon: f64,
        dim: usize,
        f1: PlayerDynamics,
        f2: PlayerDynamics,
        gamma1: Payoff,
        gamma2: Payoff,
        u_grid: ControlGrid,
        v_grid: ControlGrid,
    ) -> Result<Self> {
        if !(horizon > 0.0) || dim == 0 {
            return Err(Error::Config(format!("horizon {horizon} and dim {dim} must be positive")));
        }
        f1.check_dim(dim, u_grid.dim())?;
        f2.check_dim(dim, v_grid.dim())?;
        if gamma1.dim() != dim || gamma2.dim() != dim {
            return Err(Error::Config("payoff dimension does not match the state".into()));
        }
        let m = match (f1.extreme_velocities(&u_grid), f2.extreme_velocities(&v_grid)) {
            (Some(a), Some(b)) => a
                .iter()
                .flat_map(|p| b.iter().map(move |q| norm(&add(p, q))))
                .fold(0.0, f64::max),
            _ => f1.bound(&u_grid) + f2.bound(&v_grid),
        };
        let k = f1.lipschitz() + f2.lipschitz();
        let r = gamma1.lipschitz().max(gamma2.lipschitz());
        Ok(Self { horizon, dim, f1, f2, gamma1, gamma2, u_grid, v_grid, m, k, r, alpha: Modulus::Zero })
    }

    /// `ẋ1 = u, ẋ2 = v` on `[0, 1]` with `γ1 = ζx1 − x2`, `γ2 = ζx2 − x1`.
    pub fn example2(zeta: f64, controls_per_dim: usize) -> Result<Self> {
        let grid = ControlGrid::uniform(&[-1.0], &[1.0], controls_per_dim)?;
        Self::new(
            1.0,
            2,
            PlayerDynamics::Affine { gain: vec![vec![1.0], vec![0.0]], drift: vec![0.0, 0.0] },
            PlayerDynamics::Affine { gain: vec![vec![0.0], vec![1.0]], drift: vec![0.0, 0.0] },
            Payoff::Linear { weights: vec![zeta, -1.0], offset: 0.0 },
            Payoff::Linear { weights: vec![-1.0, zeta], offset: 0.0 },
            grid.clone(),
            grid,
        )
    }

    /// Scalar game `ẋ = a·u + b·v + c` with `u, v ∈ [−1, 1]`.
    pub fn scalar_affine(
        u_gain: f64,
        v_gain: f64,
        drift: f64,
        gamma1: Payoff,
        gamma2: Payoff,
        horizon: f64,
        controls_per_dim: usize,
    ) -> Result<Self> {
        let grid = ControlGrid::uniform(&[-1.0], &[1.0], controls_per_dim)?;
        Self::new(
            horizon,
            1,
            PlayerDynamics::Affine { gain: vec![vec![u_gain]], drift: vec![drift] },
            PlayerDynamics::Affine { gain: vec![vec![v_gain]], drift: vec![0.0] },
            gamma1,
            gamma2,
            grid.clone(),
            grid,
        )
    }

    /// Control-free decay `ẋ = −rate·x` used to check the integrator.
    pub fn linear_decay(rate: f64, radius: f64, dim: usize, horizon: f64) -> Result<Self> {
        let grid = ControlGrid::uniform(&[0.0], &[0.0], 1)?;
        let zero = Payoff::Linear { weights: vec![0.0; dim], offset: 0.0 };
        Self::new(
            horizon,
            dim,
            PlayerDynamics::LinearDecay { rate, radius },
            PlayerDynamics::Affine { gain: vec![vec![0.0]; dim], drift: vec![0.0; dim] },
            zero.clone(),
            zero,
            grid.clone(),
            grid,
        )
    }

    pub fn with_modulus(mut self, alpha: Modulus) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn eval_rhs(&self, t: f64, x: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        if !self.u_grid.contains(u) || !self.v_grid.contains(v) {
            return Err(Error::Domain(format!("controls u={u:?} v={v:?} outside their bounds")));
        }
        let out = add(&self.f1.eval(t, x, u), &self.f2.eval(t, x, v));
        ensure_finite(&out, "velocity")?;
        Ok(out)
    }

    /// Classical RK4 over `substeps` equal pieces with the controls frozen.
    pub fn integrate_step(&self, t0: f64, x0: &[f64], u: &[f64], v: &[f64], dt: f64, substeps: usize) -> Result<State> {
        if !(dt > 0.0) || substeps == 0 {
            return Err(Error::Domain(format!("integrate_step needs dt > 0 and substeps >= 1 (dt={dt})")));
        }
        let h = dt / substeps as f64;
        let mut x = x0.to_vec();
        for s in 0..substeps {
            let t = t0 + s as f64 * h;
            let k1 = self.eval_rhs(t, &x, u, v)?;
            let mut y = x.clone();
            axpy(0.5 * h, &k1, &mut y);
            let k2 = self.eval_rhs(t + 0.5 * h, &y, u, v)?;
            y.copy_from_slice(&x);
            axpy(0.5 * h, &k2, &mut y);
            let k3 = self.eval_rhs(t + 0.5 * h, &y, u, v)?;
            y.copy_from_slice(&x);
            axpy(h, &k3, &mut y);
            let k4 = self.eval_rhs(t + h, &y, u, v)?;
            for i in 0..x.len() {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        ensure_finite(&x, "state")?;
        Ok(x)
    }

    pub fn terminal_payoffs(&self, x: &[f64]) -> Result<(f64, f64)> {
        ensure_finite(x, "terminal state")?;
        Ok((self.gamma1.eval(x), self.gamma2.eval(x)))
    }

    pub fn payoff(&self, player: usize, x: &[f64]) -> f64 {
        if player == 1 {
            self.gamma1.eval(x)
        } else {
            self.gamma2.eval(x)
        }
    }

    /// Sampled audit of the declared `M`, `K` and `α` over a box of states.
    pub fn audit<R: Rng + ?Sized>(&self, lower: &[f64], upper: &[f64], samples: usize, rng: &mut R) -> GameAudit {
        let mut audit = GameAudit { max_speed: 0.0, max_lipschitz_ratio: 0.0, max_modulus_excess: f64::NEG_INFINITY, passes: true };
        let draw = |rng: &mut R| -> State { lower.iter().zip(upper).map(|(l, h)| rng.random_range(*l..=*h)).collect() };
        for _ in 0..samples {
            let t = rng.random_range(0.0..=self.horizon);
            let s = rng.random_range(0.0..=self.horizon);
            let x = draw(rng);
            let y = draw(rng);
            let u = &self.u_grid.points()[rng.random_range(0..self.u_grid.len())];
            let v = &self.v_grid.points()[rng.random_range(0..self.v_grid.len())];
            let (Ok(fx), Ok(fy), Ok(fs)) = (self.eval_rhs(t, &x, u, v), self.eval_rhs(t, &y, u, v), self.eval_rhs(s, &x, u, v)) else {
                audit.passes = false;
                continue;
            };
            audit.max_speed = audit.max_speed.max(norm(&fx));
            let dx = dist_sq(&x, &y).sqrt();
            if dx > 0.0 {
                audit.max_lipschitz_ratio = audit.max_lipschitz_ratio.max(dist_sq(&fx, &fy).sqrt() / dx);
            }
            audit.max_modulus_excess = audit.max_modulus_excess.max(dist_sq(&fx, &fs).sqrt() - self.alpha.eval(t - s));
        }
        audit.passes &= audit.max_speed <= self.m + BOUND_TOL
            && audit.max_lipschitz_ratio <= self.k + 1e-7
            && audit.max_modulus_excess <= 1e-7;
        audit
    }
}

/// Result of [`GameSpec::audit`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GameAudit {
    pub max_speed: f64,
    pub max_lipschitz_ratio: f64,
    pub max_modulus_excess: f64,
    pub passes: bool,
}

/// Motion sampled at increasing times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
}

impl Trajectory {
    pub fn new(t0: f64, x0: State) -> Self {
        Self { times: vec![t0], states: vec![x0] }
    }

    pub fn push(&mut self, t: f64, x: State) {
        self.times.push(t);
        self.states.push(x);
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// `‖x(t_{i+1}) − x(t_i)‖ ≤ (M + tol)(t_{i+1} − t_i)` for every pair.
    pub fn respects_speed(&self, m: f64, tol: f64) -> bool {
        self.times.windows(2).zip(self.states.windows(2)).all(|(t, x)| {
            t[1] > t[0] && dist_sq(&x[1], &x[0]).sqrt() <= (m + tol) * (t[1] - t[0]) + 1e-12
        })
    }
}
