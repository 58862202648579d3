//! Zero-sum values `Val_i`: player `i` maximizes `γ_i(x(T))` against an
//! adversary minimizing it. Backward semi-Lagrangian dynamic programming on a
//! lattice.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::GameSpec;
use crate::lattice::Lattice;
use crate::linalg::{add, axpy};

/// Lattice and step settings of the dynamic programming sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DpParams {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub h: f64,
    pub dt: f64,
    pub t0: f64,
    pub store_every: usize,
    /// Initial state whose reachable tube the lattice must cover.
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ZeroSumValue {
    pub player: usize,
    pub lattice: Lattice,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ZeroSumValue {
    /// Linear in time between stored levels, multilinear in space; the flag
    /// marks extrapolation.
    pub fn eval(&self, t: f64, x: &[f64]) -> (f64, bool) {
        let ts = &self.times;
        let (lo, hi, w) = if t <= ts[0] {
            (0, 0, 0.0)
        } else if t >= *ts.last().unwrap() {
            (ts.len() - 1, ts.len() - 1, 0.0)
        } else {
            let hi = ts.partition_point(|&s| s <= t);
            (hi - 1, hi, (t - ts[hi - 1]) / (ts[hi] - ts[hi - 1]))
        };
        let (a, ea) = self.lattice.interpolate(&self.values[lo], x);
        let (b, _) = self.lattice.interpolate(&self.values[hi], x);
        ((1.0 - w) * a + w * b, ea)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }
}

/// Solves for `Val_player` with `Val(t_n, x) = max_own min_adv Val(t_{n+1}, x + Δt·f)`.
pub fn solve_zero_sum_value(game: &GameSpec, player: usize, params: &DpParams) -> Result<ZeroSumValue> {
    if player != 1 && player != 2 {
        return Err(Error::Config(format!("player index must be 1 or 2, got {player}")));
    }
    let reach = game.m * (game.horizon - params.t0);
    let need_lo: Vec<f64> = params.x0.iter().map(|v| v - reach).collect();
    let need_hi: Vec<f64> = params.x0.iter().map(|v| v + reach).collect();
    let lat = Lattice::covering(&params.lower, &params.upper, params.h)?;
    if params.x0.len() != game.dim || !lat.contains(&need_lo) || !lat.contains(&need_hi) {
        return Err(Error::OutOfLattice { lower: need_lo, upper: need_hi });
    }
    if params.store_every == 0 || !(params.dt > 0.0) || !(params.t0 < game.horizon) {
        return Err(Error::Config("bad dynamic programming parameters".into()));
    }
    let steps = ((game.horizon - params.t0) / params.dt).round().max(1.0) as usize;
    let dt = (game.horizon - params.t0) / steps as f64;
    let nodes: Vec<Vec<f64>> = (0..lat.len()).map(|i| lat.node(i)).collect();
    let mut current: Vec<f64> = nodes.iter().map(|x| game.payoff(player, x)).collect();
    let mut times = vec![game.horizon];
    let mut values = vec![current.clone()];
    let (own, adv) = if player == 1 { (&game.u_grid, &game.v_grid) } else { (&game.v_grid, &game.u_grid) };
    for n in (0..steps).rev() {
        let t = params.t0 + n as f64 * dt;
        current = nodes
            .par_iter()
            .map(|x| {
                own.points()
                    .iter()
                    .map(|a| {
                        adv.points()
                            .iter()
                            .map(|b| {
                                let (u, v) = if player == 1 { (a, b) } else { (b, a) };
                                let vel = add(&game.f1.eval(t, x, u), &game.f2.eval(t, x, v));
                                let mut y = x.clone();
                                axpy(dt, &vel, &mut y);
                                lat.interpolate(&current, &y).0
                            })
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("zero-sum sweep produced non-finite values at t={t}")));
        }
        if n == 0 || n % params.store_every == 0 {
            times.push(t);
            values.push(current.clone());
        }
    }
    times.reverse();
    values.reverse();
    Ok(ZeroSumValue { player, lattice: lat, times, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(h: f64) -> DpParams {
        DpParams { lower: vec![-2.0, -2.0], upper: vec![2.0, 2.0], h, dt: 0.05, t0: 0.0, store_every: 2, x0: vec![0.0, 0.0] }
    }

    #[test]
    fn example2_values_match_analytic() {
        let zeta = 0.25;
        let game = GameSpec::example2(zeta, 5).unwrap();
        for player in [1, 2] {
            let val = solve_zero_sum_value(&game, player, &params(0.1)).unwrap();
            for (t, x) in [(0.0, [0.0, 0.0]), (0.5, [0.3, -0.7]), (1.0, [1.0, 1.0])] {
                let (own, other) = if player == 1 { (x[0], x[1]) } else { (x[1], x[0]) };
                let want = zeta * own - other - (1.0 - zeta) * (1.0 - t);
                let (got, _) = val.eval(t, &x);
                assert!((got - want).abs() < 1e-9, "player {player} t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn small_lattice_is_refused() {
        let game = GameSpec::example2(0.25, 5).unwrap();
        let mut p = params(0.1);
        p.lower = vec![-1.0, -1.0];
        p.upper = vec![1.0, 1.0];
        match solve_zero_sum_value(&game, 1, &p) {
            Err(Error::OutOfLattice { lower, upper }) => {
                assert!((lower[0] + 2f64.sqrt()).abs() < 1e-12 && (upper[1] - 2f64.sqrt()).abs() < 1e-12);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
    }
}
