//! Extremal-shift selectors and the quantitative constants of the tracking
//! construction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{Control, GameSpec, Modulus};
use crate::linalg::{dot, sub};

/// `(4/3) M √(1+M²) e^{T/2} √|θ|`
pub fn alpha_tilde(m: f64, horizon: f64, theta: f64) -> f64 {
    4.0 / 3.0 * m * (1.0 + m * m).sqrt() * (horizon / 2.0).exp() * theta.abs().sqrt()
}

/// Constants fixed by the game and the noise scale.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ShiftConstants {
    pub beta: f64,
    pub big_c: f64,
    pub m: f64,
    pub k: f64,
    pub r: f64,
    pub alpha: Modulus,
    pub delta: f64,
    pub horizon: f64,
}

impl ShiftConstants {
    pub fn new(game: &GameSpec, delta: f64) -> Self {
        Self::from_parts(game.m, game.k, game.r, game.alpha, delta, game.horizon)
    }

    pub fn from_parts(m: f64, k: f64, r: f64, alpha: Modulus, delta: f64, horizon: f64) -> Self {
        let beta = 5.0 + 2.0 * k;
        let big_c = 2.0 * (horizon * (beta * horizon).exp()).sqrt();
        Self { beta, big_c, m, k, r, alpha, delta, horizon }
    }

    pub fn alpha_tilde(&self, theta: f64) -> f64 {
        alpha_tilde(self.m, self.horizon, theta)
    }

    /// `ε(θ) = 2M²θ + 2α̃(θ) + 2α(θ)² + (KM)²θ² + K²α̃(θ)θ + K²θ`
    pub fn epsilon_modulus(&self, theta: f64) -> Result<f64> {
        if theta < 0.0 || theta.is_nan() {
            return Err(Error::Domain(format!("epsilon modulus needs theta >= 0, got {theta}")));
        }
        let at = self.alpha_tilde(theta);
        let a = self.alpha.eval(theta);
        let (k, m) = (self.k, self.m);
        Ok(2.0 * m * m * theta + 2.0 * at + 2.0 * a * a + (k * m * theta).powi(2) + k * k * at * theta + k * k * theta)
    }

    fn eps(&self, theta: f64) -> f64 {
        self.epsilon_modulus(theta.max(0.0)).unwrap_or(f64::NAN)
    }

    /// `prev·(1 + β·dt) + (4δ² + ε(dt))·dt`
    pub fn decision_bound(&self, prev_sq_dist: f64, dt: f64) -> f64 {
        prev_sq_dist * (1.0 + self.beta * dt) + (4.0 * self.delta * self.delta + self.eps(dt)) * dt
    }

    /// `R √(C²δ² + ε(d)·T·e^{βT}) + T·δ`
    pub fn theorem_epsilon(&self, fineness: f64) -> f64 {
        let growth = self.horizon * (self.beta * self.horizon).exp();
        self.r * (self.big_c * self.big_c * self.delta * self.delta + self.eps(fineness) * growth).sqrt() + self.horizon * self.delta
    }

    /// `(4δ² + ε(d))·T·e^{βT}`
    pub fn terminal_gap_bound(&self, fineness: f64) -> f64 {
        (4.0 * self.delta * self.delta + self.eps(fineness)) * self.horizon * (self.beta * self.horizon).exp()
    }

    pub fn table(&self, fineness: &[f64]) -> ConstantsTable {
        ConstantsTable {
            constants: *self,
            rows: fineness
                .iter()
                .map(|&d| ConstantsRow {
                    fineness: d,
                    alpha_tilde: self.alpha_tilde(d),
                    epsilon: self.eps(d),
                    theorem_epsilon: self.theorem_epsilon(d),
                    terminal_gap_bound: self.terminal_gap_bound(d),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsRow {
    pub fineness: f64,
    pub alpha_tilde: f64,
    pub epsilon: f64,
    pub theorem_epsilon: f64,
    pub terminal_gap_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConstantsTable {
    pub constants: ShiftConstants,
    pub rows: Vec<ConstantsRow>,
}

/// Which player and which extremum of `⟨x − y, f_player⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SelectorMode {
    /// `u♮`: minimizes over `U`.
    UMin,
    /// `u♯`: maximizes over `U`.
    UMax,
    /// `v♮`: minimizes over `V`.
    VMin,
    /// `v♯`: maximizes over `V`.
    VMax,
}

/// Grid index and control of the extremal selector; ties go to the smallest index.
pub fn select_extremal(game: &GameSpec, mode: SelectorMode, t: f64, x: &[f64], y: &[f64]) -> (usize, Control) {
    let gap = sub(x, y);
    let (grid, f, sign) = match mode {
        SelectorMode::UMin => (&game.u_grid, &game.f1, 1.0),
        SelectorMode::UMax => (&game.u_grid, &game.f1, -1.0),
        SelectorMode::VMin => (&game.v_grid, &game.f2, 1.0),
        SelectorMode::VMax => (&game.v_grid, &game.f2, -1.0),
    };
    let mut best = (0, f64::INFINITY);
    for (i, c) in grid.points().iter().enumerate() {
        let score = sign * dot(&gap, &f.eval(t, x, c));
        if score < best.1 {
            best = (i, score);
        }
    }
    (best.0, grid.points()[best.0].clone())
}
