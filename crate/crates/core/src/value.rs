//! Value pairs `(c1, c2)`: closed forms, finite-difference solutions of the
//! coupled parabolic system and smooth-case residual checks.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Control, ControlGrid, GameSpec, PlayerDynamics};
use crate::guide::{GeneratorSpec, JumpRates, Noise, SmoothFn};
use crate::lattice::{GridPair, Lattice};
use crate::linalg::{solve_tridiagonal, sub};

/// `a` on `[−1, 1]`, `sign(a)` outside.
pub fn clip(a: f64) -> f64 {
    a.clamp(-1.0, 1.0)
}

/// Box that holds the reachable tube plus a diffusion tail.
pub fn truncation_box(game: &GameSpec, x0: &[f64], delta: f64) -> (Vec<f64>, Vec<f64>) {
    let r = game.m * game.horizon + 6.0 * delta * game.horizon.sqrt() + 0.5;
    (x0.iter().map(|v| v - r).collect(), x0.iter().map(|v| v + r).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    /// Bang-bang: upper bound when the switching function is `≥ 0`.
    Sign,
    /// `clip(a / scale)` rescaled to the control box.
    Clip { scale: f64 },
}

/// Feedback `u^N(t,x,p1,p2)`, `v^N(t,x,p1,p2)` for affine-in-control dynamics.
///
/// Player 1 reads `a_j = Σ_i p1_i · u_gain[i][j]`, player 2 reads the same
/// with `p2` and `v_gain`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackLaw {
    pub kind: LawKind,
    pub u_gain: Vec<Vec<f64>>,
    pub v_gain: Vec<Vec<f64>>,
    pub u_bounds: (Vec<f64>, Vec<f64>),
    pub v_bounds: (Vec<f64>, Vec<f64>),
}

impl FeedbackLaw {
    fn gains(game: &GameSpec) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let gain = |f: &PlayerDynamics, m: usize| match f {
            PlayerDynamics::Affine { gain, .. } => gain.clone(),
            _ => vec![vec![0.0; m]; game.dim],
        };
        (gain(&game.f1, game.u_grid.dim()), gain(&game.f2, game.v_grid.dim()))
    }

    fn bounds(g: &ControlGrid) -> (Vec<f64>, Vec<f64>) {
        (g.lower().to_vec(), g.upper().to_vec())
    }

    /// Bang-bang law maximizing each player's own Hamiltonian.
    pub fn sign_for(game: &GameSpec) -> Self {
        let (u_gain, v_gain) = Self::gains(game);
        Self { kind: LawKind::Sign, u_gain, v_gain, u_bounds: Self::bounds(&game.u_grid), v_bounds: Self::bounds(&game.v_grid) }
    }

    /// Saturated linear law `clip(a / scale)`.
    pub fn clip_for(game: &GameSpec, scale: f64) -> Self {
        let (u_gain, v_gain) = Self::gains(game);
        Self {
            kind: LawKind::Clip { scale },
            u_gain,
            v_gain,
            u_bounds: Self::bounds(&game.u_grid),
            v_bounds: Self::bounds(&game.v_grid),
        }
    }

    fn apply(&self, p: &[f64], gain: &[Vec<f64>], bounds: &(Vec<f64>, Vec<f64>)) -> Control {
        (0..bounds.0.len())
            .map(|j| {
                let a: f64 = p.iter().zip(gain).map(|(pi, row)| pi * row[j]).sum();
                let (lo, hi) = (bounds.0[j], bounds.1[j]);
                match self.kind {
                    LawKind::Sign => {
                        if a >= 0.0 {
                            hi
                        } else {
                            lo
                        }
                    }
                    LawKind::Clip { scale } => {
                        0.5 * (lo + hi) + 0.5 * (hi - lo) * clip(a / scale)
                    }
                }
            })
            .collect()
    }

    pub fn u(&self, p1: &[f64], _p2: &[f64]) -> Control {
        self.apply(p1, &self.u_gain, &self.u_bounds)
    }

    pub fn v(&self, _p1: &[f64], p2: &[f64]) -> Control {
        self.apply(p2, &self.v_gain, &self.v_bounds)
    }

    /// Outputs of player 1 (`first`) or player 2 stay inside `grid`'s bounds.
    pub fn within(&self, grid: &ControlGrid, first: bool) -> bool {
        let (lo, hi) = if first { &self.u_bounds } else { &self.v_bounds };
        grid.contains(lo) && grid.contains(hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosedFormKind {
    /// `c1 = ζx1 − x2 − (1−ζ)(T−t)`, symmetric `c2`.
    Example2Solution,
    /// `c1 = ζx1 − x2 + (1−ζ)(T−t)`, symmetric `c2`.
    Example2Alt,
}

/// Values and gradients of a pair at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSample {
    pub c1: f64,
    pub c2: f64,
    pub grad1: Vec<f64>,
    pub grad2: Vec<f64>,
    pub extrapolated: bool,
}

/// Candidate value pair.
#[derive(Debug, Clone)]
pub enum ValuePair {
    ClosedForm { kind: ClosedFormKind, zeta: f64, horizon: f64 },
    Grid(Box<GridPair>),
}

impl ValuePair {
    pub fn closed_form(kind: ClosedFormKind, zeta: f64, horizon: f64) -> Self {
        Self::ClosedForm { kind, zeta, horizon }
    }

    pub fn grid(pair: GridPair) -> Result<Self> {
        pair.validate()?;
        Ok(Self::Grid(Box::new(pair)))
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Self::ClosedForm { horizon, .. } => *horizon,
            Self::Grid(g) => *g.times.last().unwrap(),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Result<ValueSample> {
        match self {
            Self::ClosedForm { kind, zeta, horizon } => {
                if x.len() != 2 {
                    return Err(Error::Domain("closed-form pairs live in two dimensions".into()));
                }
                let sign = match kind {
                    ClosedFormKind::Example2Solution => -1.0,
                    ClosedFormKind::Example2Alt => 1.0,
                };
                let tail = sign * (1.0 - zeta) * (horizon - t);
                Ok(ValueSample {
                    c1: zeta * x[0] - x[1] + tail,
                    c2: zeta * x[1] - x[0] + tail,
                    grad1: vec![*zeta, -1.0],
                    grad2: vec![-1.0, *zeta],
                    extrapolated: false,
                })
            }
            Self::Grid(g) => {
                let (lo, hi, w) = g.bracket(t);
                let lat = &g.lattice;
                let blend = |a: f64, b: f64| (1.0 - w) * a + w * b;
                let (a1, e1) = lat.interpolate(&g.c1[lo], x);
                let (b1, _) = lat.interpolate(&g.c1[hi], x);
                let (a2, _) = lat.interpolate(&g.c2[lo], x);
                let (b2, _) = lat.interpolate(&g.c2[hi], x);
                let ga1 = lat.interpolate_gradient(&g.c1[lo], x);
                let gb1 = lat.interpolate_gradient(&g.c1[hi], x);
                let ga2 = lat.interpolate_gradient(&g.c2[lo], x);
                let gb2 = lat.interpolate_gradient(&g.c2[hi], x);
                let out_of_time = t < g.times[0] - 1e-12 || t > *g.times.last().unwrap() + 1e-12;
                Ok(ValueSample {
                    c1: blend(a1, b1),
                    c2: blend(a2, b2),
                    grad1: ga1.iter().zip(&gb1).map(|(a, b)| blend(*a, *b)).collect(),
                    grad2: ga2.iter().zip(&gb2).map(|(a, b)| blend(*a, *b)).collect(),
                    extrapolated: e1 || out_of_time,
                })
            }
        }
    }

    pub fn value(&self, player: usize, t: f64, x: &[f64]) -> Result<f64> {
        let s = self.eval(t, x)?;
        Ok(if player == 1 { s.c1 } else { s.c2 })
    }

    /// Largest `|c_i(T, x) − γ_i(x)|` over `xs`.
    pub fn boundary_error(&self, game: &GameSpec, xs: &[Vec<f64>]) -> Result<f64> {
        let t = self.horizon();
        let mut worst: f64 = 0.0;
        for x in xs {
            let s = self.eval(t, x)?;
            let (g1, g2) = game.terminal_payoffs(x)?;
            worst = worst.max((s.c1 - g1).abs()).max((s.c2 - g2).abs());
        }
        Ok(worst)
    }
}

/// Lattice and time-step settings of the parabolic solver.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeParams {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub dt: f64,
    pub t0: f64,
    /// Keep every `store_every`-th time level (plus both ends).
    pub store_every: usize,
}

/// Upper bound of `|b_i|` over the control grids, probed at the box corners.
fn drift_bounds(game: &GameSpec, guide: &GeneratorSpec, lat: &Lattice) -> Vec<f64> {
    let d = lat.dim();
    let upper = lat.upper();
    let corners: Vec<Vec<f64>> = (0..1usize << d)
        .map(|m| (0..d).map(|i| if m >> i & 1 == 1 { upper[i] } else { lat.lower[i] }).collect())
        .collect();
    let mut out = vec![0.0f64; d];
    for x in &corners {
        let m1: Vec<f64> = (0..d)
            .map(|i| game.u_grid.points().iter().map(|u| guide.b1.eval(0.0, x, u)[i].abs()).fold(0.0, f64::max))
            .collect();
        let m2: Vec<f64> = (0..d)
            .map(|i| game.v_grid.points().iter().map(|v| guide.b2.eval(0.0, x, v)[i].abs()).fold(0.0, f64::max))
            .collect();
        for i in 0..d {
            out[i] = out[i].max(m1[i] + m2[i] + guide.shift[i].abs());
        }
    }
    out
}

/// Backward sweep for the coupled system
/// `∂c_i/∂t + Λ[u⁰, v⁰] c_i + h_i = 0`, `c_i(T, ·) = γ_i`, with the
/// feedback `(u⁰, v⁰) = law(∇c1, ∇c2)` frozen per time level.
pub fn solve_parabolic_system(game: &GameSpec, guide: &GeneratorSpec, law: &FeedbackLaw, params: &PdeParams) -> Result<ValuePair> {
    if let Noise::Jumps { rates, .. } = &guide.noise {
        let active = match rates {
            JumpRates::Constant(r) => r.iter().any(|v| *v != 0.0),
            JumpRates::ControlAffine { .. } => true,
        };
        if active {
            return Err(Error::Config("the parabolic solver handles diffusion guides only".into()));
        }
    }
    let lat = Lattice::covering(&params.lower, &params.upper, params.h)?;
    let d = lat.dim();
    if d != game.dim || params.store_every == 0 || !(params.dt > 0.0) || !(params.t0 < game.horizon) {
        return Err(Error::Config("PDE parameters inconsistent with the game".into()));
    }
    let steps = ((game.horizon - params.t0) / params.dt).round().max(1.0) as usize;
    let dt = (game.horizon - params.t0) / steps as f64;
    let g = guide.g_matrix().to_vec();
    let bounds = drift_bounds(game, guide, &lat);
    let mut courant: f64 = (0..d).map(|i| bounds[i] / lat.step[i]).sum::<f64>() * dt;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                courant += dt * g[i * d + j].abs() / (lat.step[i] * lat.step[j]);
            }
        }
    }
    if courant > 1.0 {
        return Err(Error::Cfl { courant, suggested_dt: 0.9 * dt / courant });
    }

    let nodes: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.node(i)).collect();
    let mut c1: Vec<f64> = nodes.iter().map(|x| game.gamma1.eval(x)).collect();
    let mut c2: Vec<f64> = nodes.iter().map(|x| game.gamma2.eval(x)).collect();
    let mut times = vec![game.horizon];
    let mut levels1 = vec![c1.clone()];
    let mut levels2 = vec![c2.clone()];

    for n in (0..steps).rev() {
        let t_next = params.t0 + (n + 1) as f64 * dt;
        let t_now = params.t0 + n as f64 * dt;
        let (a1, a2): (Vec<f64>, Vec<f64>) = (0..lat.len())
            .into_par_iter()
            .map(|i| {
                if !lat.is_interior(i) {
                    return (c1[i], c2[i]);
                }
                let x = &nodes[i];
                let p1 = lat.nodal_gradient(&c1, i);
                let p2 = lat.nodal_gradient(&c2, i);
                let u = law.u(&p1, &p2);
                let v = law.v(&p1, &p2);
                let b = guide.drift(t_next, x, &u, &v);
                let explicit = |c: &[f64], h: f64| {
                    let mut acc = h;
                    for (k, bk) in b.iter().enumerate() {
                        let s = lat.stride(k);
                        let step = lat.step[k];
                        acc += if *bk >= 0.0 {
                            bk * (c[i + s] - c[i]) / step
                        } else {
                            bk * (c[i] - c[i - s]) / step
                        };
                    }
                    for k in 0..d {
                        for l in 0..d {
                            let gkl = g[k * d + l];
                            if k != l && gkl != 0.0 {
                                let (sk, sl) = (lat.stride(k), lat.stride(l));
                                let mixed = (c[i + sk + sl] - c[i + sk - sl] - c[i - sk + sl] + c[i - sk - sl])
                                    / (4.0 * lat.step[k] * lat.step[l]);
                                acc += 0.5 * gkl * mixed;
                            }
                        }
                    }
                    c[i] + dt * acc
                };
                (
                    explicit(&c1, guide.h1.eval(t_next, x, &u, &v)),
                    explicit(&c2, guide.h2.eval(t_next, x, &u, &v)),
                )
            })
            .unzip();
        c1 = a1;
        c2 = a2;
        for c in [&mut c1, &mut c2] {
            lat.extrapolate_faces(c);
            for axis in 0..d {
                let coef = 0.5 * g[axis * d + axis] * dt / (lat.step[axis] * lat.step[axis]);
                if coef > 0.0 {
                    implicit_axis(&lat, c, axis, coef)?;
                }
            }
            lat.extrapolate_faces(c);
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parabolic solve produced non-finite values at t={t_now}")));
            }
        }
        if n == 0 || n % params.store_every == 0 {
            times.push(t_now);
            levels1.push(c1.clone());
            levels2.push(c2.clone());
        }
    }
    times.reverse();
    levels1.reverse();
    levels2.reverse();
    let mut meta = BTreeMap::new();
    meta.insert("delta".to_string(), guide.delta);
    meta.insert("dt".to_string(), dt);
    meta.insert("h".to_string(), params.h);
    ValuePair::grid(GridPair { lattice: lat, times, c1: levels1, c2: levels2, params: meta })
}

/// `(I − coef·δ²_axis) c = c_old` on interior lines, face values as Dirichlet data.
fn implicit_axis(lat: &Lattice, c: &mut [f64], axis: usize, coef: f64) -> Result<()> {
    let s = lat.stride(axis);
    let n = lat.nodes[axis];
    let m = n - 2;
    let starts: Vec<usize> = (0..c.len())
        .filter(|&i| {
            (i / s).is_multiple_of(n) && (0..lat.dim()).filter(|&k| k != axis).all(|k| {
                let idx = i / lat.stride(k) % lat.nodes[k];
                idx > 0 && idx + 1 < lat.nodes[k]
            })
        })
        .collect();
    let lower = vec![-coef; m];
    let diag = vec![1.0 + 2.0 * coef; m];
    let upper = vec![-coef; m];
    let solved: Vec<(usize, Vec<f64>)> = starts
        .par_iter()
        .map(|&start| {
            let mut rhs: Vec<f64> = (1..=m).map(|k| c[start + k * s]).collect();
            rhs[0] += coef * c[start];
            rhs[m - 1] += coef * c[start + (n - 1) * s];
            solve_tridiagonal(&lower, &diag, &upper, &mut rhs).map(|_| (start, rhs))
        })
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| Error::Numeric("tridiagonal solve failed".into()))?;
    for (start, line) in solved {
        for (k, v) in line.into_iter().enumerate() {
            c[start + (k + 1) * s] = v;
        }
    }
    Ok(())
}

/// One component of a pair at a fixed time, seen as a smooth function.
struct PairSlice<'a> {
    pair: &'a ValuePair,
    t: f64,
    player: usize,
    fd: f64,
}

impl SmoothFn for PairSlice<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.pair.value(self.player, self.t, x).unwrap_or(f64::NAN)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self.pair.eval(self.t, x) {
            Ok(s) if self.player == 1 => s.grad1,
            Ok(s) => s.grad2,
            Err(_) => vec![f64::NAN; x.len()],
        }
    }

    fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut h = vec![0.0; d * d];
        for j in 0..d {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += self.fd;
            xm[j] -= self.fd;
            let diff = sub(&self.gradient(&xp), &self.gradient(&xm));
            for i in 0..d {
                h[i * d + j] = diff[i] / (2.0 * self.fd);
            }
        }
        for i in 0..d {
            for j in 0..i {
                let m = 0.5 * (h[i * d + j] + h[j * d + i]);
                h[i * d + j] = m;
                h[j * d + i] = m;
            }
        }
        h
    }
}

/// Residuals of the smooth-case system and of the Nash conditions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmoothReport {
    pub max_pde_residual: f64,
    pub max_nash_violation: f64,
    pub max_boundary_residual: f64,
    pub points: usize,
}

impl SmoothReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_pde_residual <= tol && self.max_nash_violation <= tol && self.max_boundary_residual <= tol
    }
}

/// Evaluates `∂c_i/∂t + Λ[u⁰,v⁰]c_i + h_i` and the Nash maximality gaps at
/// each `(t, x)`; `fd` is the finite-difference step for second and time
/// derivatives.
pub fn smooth_case_residuals(
    game: &GameSpec,
    pair: &ValuePair,
    guide: &GeneratorSpec,
    law: &FeedbackLaw,
    points: &[(f64, Vec<f64>)],
    fd: f64,
) -> Result<SmoothReport> {
    let horizon = pair.horizon();
    let t_min = match pair {
        ValuePair::Grid(g) => g.times[0],
        ValuePair::ClosedForm { .. } => f64::NEG_INFINITY,
    };
    let mut report = SmoothReport { max_pde_residual: 0.0, max_nash_violation: 0.0, max_boundary_residual: 0.0, points: points.len() };
    for (t, x) in points {
        let s = pair.eval(*t, x)?;
        let u0 = law.u(&s.grad1, &s.grad2);
        let v0 = law.v(&s.grad1, &s.grad2);
        let (ta, tb) = ((t - fd).max(t_min), (t + fd).min(horizon));
        for player in [1, 2] {
            let dt = (pair.value(player, tb, x)? - pair.value(player, ta, x)?) / (tb - ta);
            let slice = PairSlice { pair, t: *t, player, fd };
            let lam = |u: &[f64], v: &[f64]| guide.apply_generator(*t, x, u, v, &slice) + guide.reward(player, *t, x, u, v);
            let on_path = lam(&u0, &v0);
            report.max_pde_residual = report.max_pde_residual.max((dt + on_path).abs());
            let best = if player == 1 {
                game.u_grid.points().iter().map(|u| lam(u, &v0)).fold(f64::NEG_INFINITY, f64::max)
            } else {
                game.v_grid.points().iter().map(|v| lam(&u0, v)).fold(f64::NEG_INFINITY, f64::max)
            };
            report.max_nash_violation = report.max_nash_violation.max(best - on_path);
        }
        let e = pair.boundary_error(game, std::slice::from_ref(x))?;
        report.max_boundary_residual = report.max_boundary_residual.max(e);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::Payoff;

    #[test]
    fn clip_examples() {
        assert_eq!(clip(0.5), 0.5);
        assert_eq!(clip(3.0), 1.0);
        assert_eq!(clip(-2.0), -1.0);
    }

    #[test]
    fn closed_form_values() {
        let alt = ValuePair::closed_form(ClosedFormKind::Example2Alt, 0.25, 1.0);
        let s = alt.eval(0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(s.c1, 0.75);
        assert_eq!(s.c2, 0.75);
        assert_eq!(s.grad1, vec![0.25, -1.0]);
        let sol = ValuePair::closed_form(ClosedFormKind::Example2Solution, 0.25, 1.0);
        let game = GameSpec::example2(0.25, 21).unwrap();
        let e = sol.boundary_error(&game, &[vec![0.3, -1.2], vec![2.0, 5.0]]).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn sign_law_prefers_upper_on_ties() {
        let game = GameSpec::example2(0.25, 21).unwrap();
        let law = FeedbackLaw::sign_for(&game);
        assert_eq!(law.u(&[0.0, 3.0], &[0.0, 0.0]), vec![1.0]);
        assert_eq!(law.u(&[-0.1, 3.0], &[0.0, 0.0]), vec![-1.0]);
        assert_eq!(law.v(&[0.0, 0.0], &[5.0, -0.1]), vec![-1.0]);
        let clip_law = FeedbackLaw::clip_for(&game, 0.5);
        assert_eq!(clip_law.u(&[0.25, 0.0], &[0.0, 0.0]), vec![0.5]);
        assert_eq!(clip_law.u(&[2.0, 0.0], &[0.0, 0.0]), vec![1.0]);
    }

    #[test]
    fn zero_drift_linear_payoff_is_stationary() {
        let lin = Payoff::Linear { weights: vec![1.0, -2.0], offset: 0.5 };
        let grid = ControlGrid::uniform(&[-1.0], &[1.0], 3).unwrap();
        let zero = PlayerDynamics::Affine { gain: vec![vec![0.0], vec![0.0]], drift: vec![0.0, 0.0] };
        let game = GameSpec::new(1.0, 2, zero.clone(), zero, lin.clone(), lin, grid.clone(), grid).unwrap();
        let guide = GeneratorSpec::tracking_diffusion(&game, 0.3).unwrap();
        let law = FeedbackLaw::sign_for(&game);
        let params = PdeParams { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0], h: 0.1, dt: 0.01, t0: 0.0, store_every: 10 };
        let pair = solve_parabolic_system(&game, &guide, &law, &params).unwrap();
        for t in [0.0, 0.37, 1.0] {
            let s = pair.eval(t, &[0.2, 0.3]).unwrap();
            assert!((s.c1 - (0.2 - 0.6 + 0.5)).abs() < 1e-12, "{}", s.c1);
        }
    }

    #[test]
    fn cfl_violation_suggests_step() {
        let game = GameSpec::example2(0.25, 21).unwrap();
        let guide = GeneratorSpec::tracking_diffusion(&game, 0.1).unwrap();
        let law = FeedbackLaw::sign_for(&game);
        let params = PdeParams { lower: vec![-1.0, -1.0], upper: vec![1.0, 1.0], h: 0.05, dt: 0.1, t0: 0.0, store_every: 1 };
        match solve_parabolic_system(&game, &guide, &law, &params) {
            Err(Error::Cfl { courant, suggested_dt }) => {
                assert!(courant > 1.0 && suggested_dt < 0.05);
            }
            other => panic!("expected CFL refusal, got {other:?}"),
        }
    }

    #[test]
    fn residuals_discriminate_closed_forms() {
        let game = GameSpec::example2(0.25, 21).unwrap();
        let guide = GeneratorSpec::tracking_diffusion(&game, 0.1).unwrap();
        let law = FeedbackLaw::sign_for(&game);
        let pts: Vec<(f64, Vec<f64>)> = vec![(0.0, vec![0.0, 0.0]), (0.5, vec![1.0, -0.5]), (0.9, vec![-2.0, 0.3])];
        let sol = ValuePair::closed_form(ClosedFormKind::Example2Solution, 0.25, 1.0);
        let r = smooth_case_residuals(&game, &sol, &guide, &law, &pts, 1e-3).unwrap();
        assert!(r.max_pde_residual < 1e-9 && r.max_nash_violation < 1e-9, "{r:?}");
        let alt = ValuePair::closed_form(ClosedFormKind::Example2Alt, 0.25, 1.0);
        let r = smooth_case_residuals(&game, &alt, &guide, &law, &pts, 1e-3).unwrap();
        assert!((r.max_pde_residual - 1.5).abs() < 1e-9, "{r:?}");
    }
}
