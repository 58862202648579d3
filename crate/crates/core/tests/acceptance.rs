//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#![allow(clippy::excessive_precision)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use dgame_core::equilibrium::{
    build_profile, deviation_gain, estimate_equilibrium, limit_experiment, mean_path, nash_payoff_check, uniform_partition, verify_tracking_bounds,
    CorrelatedProfile, DeviationSpec, EquilibriumReport, ProfileOptions, ProfilePolicies, RolloutRecord,
};
use dgame_core::guide::{check_condition_c, ConditionPolicies, ConditionSettings, GeneratorSpec, PlayerLaw, RelaxedControlPolicy};
use dgame_core::scenario::{constant_path, run_scenario, Scenario};
use dgame_core::shift::ShiftConstants;
use dgame_core::value::{smooth_case_residuals, solve_parabolic_system, ClosedFormKind, FeedbackLaw, PdeParams, ValuePair};
use dgame_core::zero_sum::{solve_zero_sum_value, DpParams, ZeroSumValue};
use dgame_core::{GameSpec, Modulus, Payoff};

const ZETA: f64 = 0.25;
const SEED: u64 = 20240601;
const N_ROLLOUTS: usize = 2000;

// Independent 40-digit evaluations.
const BIG_C_EX2: f64 = 24.36498792140694687614;
const THEOREM_EPS_D0: [(f64, f64); 4] = [
    (0.2, 5.22297093834296662075),
    (0.1, 2.61148546917148331038),
    (0.05, 1.30574273458574165519),
    (0.025, 0.65287136729287082759),
];
const LIPSCHITZ_CASE: (f64, f64, f64) = (3101.746971195138319191, 2.807429400512034290535, 5.973131683039429609788);

struct Outcome {
    pass: bool,
    detail: String,
}

fn example2() -> GameSpec {
    GameSpec::example2(ZETA, 21).unwrap()
}

fn profile(delta: f64, steps: usize) -> CorrelatedProfile {
    let game = example2();
    let guide = GeneratorSpec::tracking_diffusion(&game, delta).unwrap();
    let pair = Arc::new(ValuePair::closed_form(ClosedFormKind::Example2Alt, ZETA, 1.0));
    let policies = ProfilePolicies {
        eq: RelaxedControlPolicy::dirac(vec![-1.0], vec![-1.0]),
        punish1: PlayerLaw::Frozen(vec![1.0]),
        punish2: PlayerLaw::Frozen(vec![1.0]),
    };
    let options = ProfileOptions { master_seed: SEED, ..ProfileOptions::default() };
    build_profile(game, guide, pair, uniform_partition(0.0, 1.0, steps), policies, options).unwrap()
}

fn gap(r: &EquilibriumReport) -> f64 {
    r.gap1.max(r.gap2)
}

fn hw(r: &EquilibriumReport) -> f64 {
    r.payoff1.half_width95().max(r.payoff2.half_width95())
}

fn criterion1() -> Outcome {
    let c = ShiftConstants::new(&example2(), 0.05);
    let mut ok = c.beta == 5.0 && (c.big_c - BIG_C_EX2).abs() <= 1e-12 && (c.big_c - 2.0 * 2.5f64.exp()).abs() <= 1e-12;
    ok &= c.alpha_tilde(0.0) == 0.0 && c.epsilon_modulus(0.0).unwrap() == 0.0;
    for (delta, want) in THEOREM_EPS_D0 {
        let c = ShiftConstants::new(&example2(), delta);
        ok &= (c.theorem_epsilon(0.0) - want).abs() <= 1e-12;
        ok &= (c.theorem_epsilon(0.0) - (c.r * c.big_c + c.horizon) * delta).abs() <= 1e-12;
    }
    let l = ShiftConstants::from_parts(2.0, 1.0, 1.0, Modulus::Power { coef: 0.5, exponent: 1.0 }, 0.1, 2.0);
    ok &= l.beta == 7.0 && (l.big_c - LIPSCHITZ_CASE.0).abs() <= 1e-12 * LIPSCHITZ_CASE.0;
    ok &= (l.alpha_tilde(0.03) - LIPSCHITZ_CASE.1).abs() <= 1e-12 && (l.epsilon_modulus(0.03).unwrap() - LIPSCHITZ_CASE.2).abs() <= 1e-12;
    Outcome { pass: ok, detail: format!("beta={} C={:.15} theorem_epsilon(0)={:.15}", c.beta, c.big_c, c.theorem_epsilon(0.0)) }
}

fn pde_params(h: f64, dt: f64) -> PdeParams {
    PdeParams { lower: vec![-3.0, -3.0], upper: vec![3.0, 3.0], h, dt, t0: 0.0, store_every: 50 }
}

/// Exact value at `(t, x)` of the cubic-payoff game under the sign law.
fn cubic_exact(t: f64, x: &[f64], delta: f64, q: f64, k: f64) -> f64 {
    let tau = 1.0 - t;
    let y = x[0] + tau;
    ZETA * y - (x[1] + tau) + q * (y * y + delta * delta * tau) + k * (y * y * y + 3.0 * y * delta * delta * tau)
}

fn criterion2() -> Outcome {
    let delta = 0.1;
    let game = example2();
    let guide = GeneratorSpec::tracking_diffusion(&game, delta).unwrap();
    let law = FeedbackLaw::sign_for(&game);
    let pair = solve_parabolic_system(&game, &guide, &law, &pde_params(0.05, 0.002)).unwrap();
    let ValuePair::Grid(g) = &pair else { unreachable!() };
    let mut linear_err: f64 = 0.0;
    for (k, &t) in g.times.iter().enumerate() {
        for i in (0..g.lattice.len()).filter(|&i| g.lattice.is_interior(i)) {
            let x = g.lattice.node(i);
            linear_err = linear_err.max((g.c1[k][i] - (ZETA * x[0] - x[1] - (1.0 - ZETA) * (1.0 - t))).abs());
        }
    }
    // Linear data is reproduced to roundoff, so the refinement order is read
    // from a cubic payoff with a known solution.
    let (q, kc) = (0.03, 0.005);
    let mut cubic = example2();
    cubic.gamma1 = Payoff::Cubic { weights: vec![ZETA, -1.0], offset: 0.0, quadratic: vec![q, 0.0], cubic: vec![kc, 0.0], radius: 4.0 };
    let want = cubic_exact(0.0, &[0.0, 0.0], delta, q, kc);
    let err_at = |h: f64, dt: f64| {
        let p = solve_parabolic_system(&cubic, &guide, &law, &pde_params(h, dt)).unwrap();
        (p.value(1, 0.0, &[0.0, 0.0]).unwrap() - want).abs()
    };
    let (e1, e2) = (err_at(0.05, 0.002), err_at(0.025, 0.001));
    let order = (e1 / e2).log2();
    Outcome {
        pass: linear_err <= 1e-3 && e2 < e1 && order >= 1.0,
        detail: format!("linear max interior error {linear_err:.3e}; cubic errors {e1:.4e} -> {e2:.4e}, order {order:.4}"),
    }
}

fn residual_points() -> Vec<(f64, Vec<f64>)> {
    let mut pts = Vec::new();
    for t in [0.0, 0.3, 0.6, 0.9] {
        for a in [-1.0, 0.0, 0.7] {
            for b in [-0.5, 0.0, 1.2] {
                pts.push((t, vec![a, b]));
            }
        }
    }
    pts
}

fn criterion3() -> Outcome {
    let game = example2();
    let guide = GeneratorSpec::tracking_diffusion(&game, 0.1).unwrap();
    let law = FeedbackLaw::sign_for(&game);
    let pts = residual_points();
    let sol = ValuePair::closed_form(ClosedFormKind::Example2Solution, ZETA, 1.0);
    let alt = ValuePair::closed_form(ClosedFormKind::Example2Alt, ZETA, 1.0);
    let r1 = smooth_case_residuals(&game, &sol, &guide, &law, &pts, 1e-3).unwrap();
    let r2 = smooth_case_residuals(&game, &alt, &guide, &law, &pts, 1e-3).unwrap();
    let target = 2.0 * (1.0 - ZETA);
    Outcome {
        pass: r1.max_pde_residual <= 1e-6 && r1.passes(1e-6) && r2.max_pde_residual >= 1.4 && (r2.max_pde_residual - target).abs() <= 0.05 * target,
        detail: format!("solution pair {:.3e}, alternative pair {:.6}", r1.max_pde_residual, r2.max_pde_residual),
    }
}

fn criterion4() -> Outcome {
    let game = example2();
    let guide = GeneratorSpec::tracking_diffusion(&game, 0.05).unwrap();
    let pair = ValuePair::closed_form(ClosedFormKind::Example2Alt, ZETA, 1.0);
    let policies = ConditionPolicies {
        eta: RelaxedControlPolicy::dirac(vec![-1.0], vec![-1.0]),
        mu: Some(PlayerLaw::Frozen(vec![1.0])),
        nu: Some(PlayerLaw::Frozen(vec![1.0])),
    };
    let settings = ConditionSettings {
        intervals: vec![(0.0, 0.5)],
        states: vec![vec![0.0, 0.0]],
        frozen_u: game.u_grid.points().to_vec(),
        frozen_v: game.v_grid.points().to_vec(),
        n_samples: 100_000,
        substeps: 16,
        tol: 0.0,
        seed: SEED,
    };
    let rep = check_condition_c(&guide, &pair, &policies, &settings).unwrap();
    let part1: Vec<_> = rep.entries.iter().filter(|e| e.part == 1).collect();
    let ok1 = part1.iter().all(|e| e.estimate.mean.abs() <= 3.0 * e.estimate.std_err);
    let pick = |part: u8| rep.entries.iter().find(|e| e.part == part && e.frozen.as_deref() == Some(&[1.0][..])).unwrap();
    let (e2, e3) = (pick(2), pick(3));
    // Entries are increments c(r, Y(r)) − c(s, y), so "≤ c − 0.75" reads "≤ −0.75".
    let ok2 = e2.estimate.mean <= -0.75 + 3.0 * e2.estimate.std_err;
    let ok3 = e3.estimate.mean <= -0.75 + 3.0 * e3.estimate.std_err;
    Outcome {
        pass: ok1 && ok2 && ok3 && rep.passes,
        detail: format!(
            "part (i) means {:.2e}/{:.2e} (se {:.1e}); part (ii) v=+1 {:.5} against -0.75; part (iii) u=+1 {:.5}; all frozen controls pass: {}",
            part1[0].estimate.mean,
            part1[1].estimate.mean,
            part1[0].estimate.std_err,
            e2.estimate.mean,
            e3.estimate.mean,
            rep.passes
        ),
    }
}

struct Sweep {
    reports: Vec<(f64, usize, EquilibriumReport)>,
    central: (CorrelatedProfile, Vec<RolloutRecord>),
}

fn run_sweep() -> Sweep {
    let mut reports = Vec::new();
    let mut central = None;
    for delta in [0.1, 0.05, 0.025] {
        for steps in [50, 100, 200] {
            let p = profile(delta, steps);
            let (rep, records) = estimate_equilibrium(&p, &[0.0, 0.0], N_ROLLOUTS).unwrap();
            if delta == 0.05 && steps == 100 {
                central = Some((p, records));
            }
            reports.push((delta, steps, rep));
        }
    }
    Sweep { reports, central: central.unwrap() }
}

fn criterion5(sweep: &Sweep) -> Outcome {
    let find = |d: f64, s: usize| &sweep.reports.iter().find(|(a, b, _)| *a == d && *b == s).unwrap().2;
    let c = find(0.05, 100);
    let mut ok = gap(c) <= c.theorem_epsilon && gap(c) <= 0.1;
    ok &= sweep.reports.iter().all(|(_, _, r)| gap(r) <= r.theorem_epsilon);
    for delta in [0.1, 0.05, 0.025] {
        for w in [50, 100, 200].windows(2) {
            let (a, b) = (find(delta, w[0]), find(delta, w[1]));
            ok &= gap(b) <= gap(a) + hw(a) + hw(b);
        }
    }
    for steps in [50, 100, 200] {
        for w in [0.1, 0.05, 0.025].windows(2) {
            let (a, b) = (find(w[0], steps), find(w[1], steps));
            ok &= gap(b) <= gap(a) + hw(a) + hw(b);
        }
    }
    let table: Vec<String> = sweep.reports.iter().map(|(d, s, r)| format!("({d},{}):{:.4}", 1.0 / *s as f64, gap(r))).collect();
    Outcome {
        pass: ok,
        detail: format!(
            "delta=0.05 d=0.01: payoffs ({:.4}, {:.4}), gap {:.4} <= {:.4} and <= 0.1; sweep gaps {}",
            c.payoff1.mean,
            c.payoff2.mean,
            gap(c),
            c.theorem_epsilon,
            table.join(" ")
        ),
    }
}

fn criterion6() -> Outcome {
    let p = profile(0.05, 200);
    let mut ok = true;
    let mut parts = Vec::new();
    for player in [1, 2] {
        let (rep, _) = deviation_gain(&p, &[0.0, 0.0], &DeviationSpec::constant(player, vec![1.0]), N_ROLLOUTS).unwrap();
        ok &= rep.pass_theorem && rep.pass_empirical && rep.switch_fraction >= 0.99;
        parts.push(format!("player {player}: gain {:.4} (se {:.1e}), switched {:.3}", rep.gain.mean, rep.gain.std_err, rep.switch_fraction));
    }
    Outcome { pass: ok, detail: format!("d=0.005, delta=0.05; {}", parts.join("; ")) }
}

/// The same deviations at d = 0.01, reported but not asserted: there the
/// decision allowance per step exceeds what a constant deviation can add.
fn deviation_note() -> String {
    let p = profile(0.05, 100);
    let (rep, _) = deviation_gain(&p, &[0.0, 0.0], &DeviationSpec::constant(1, vec![1.0]), 500).unwrap();
    format!("d=0.01 player 1: gain {:.4}, switched {:.3}, beta*eps(0.01)={:.3} vs squared velocity gap 4", rep.gain.mean, rep.switch_fraction, p.constants.beta * p.constants.epsilon_modulus(0.01).unwrap())
}

fn criterion7(sweep: &Sweep) -> Outcome {
    let (p, records) = &sweep.central;
    let rep = verify_tracking_bounds(p, records);
    Outcome {
        pass: rep.identity_fraction == 1.0 && rep.step_pass_fraction >= 0.99 && rep.terminal_pass,
        detail: format!(
            "identity {:.3}, steps passing {:.4}, terminal gap {:.3e} <= {:.3}",
            rep.identity_fraction, rep.step_pass_fraction, rep.terminal_mean_gap.mean, rep.terminal_bound
        ),
    }
}

fn zero_sum_values() -> (ZeroSumValue, ZeroSumValue) {
    let game = example2();
    let p = DpParams { lower: vec![-2.0, -2.0], upper: vec![2.0, 2.0], h: 0.05, dt: 0.02, t0: 0.0, store_every: 1, x0: vec![0.0, 0.0] };
    (solve_zero_sum_value(&game, 1, &p).unwrap(), solve_zero_sum_value(&game, 2, &p).unwrap())
}

fn criterion8(vals: &(ZeroSumValue, ZeroSumValue), sweep: &Sweep) -> Outcome {
    let mut err: f64 = 0.0;
    for v in [&vals.0, &vals.1] {
        for (k, &t) in v.times.iter().enumerate() {
            for i in 0..v.lattice.len() {
                let x = v.lattice.node(i);
                let (own, other) = if v.player == 1 { (x[0], x[1]) } else { (x[1], x[0]) };
                err = err.max((v.values[k][i] - (ZETA * own - other - (1.0 - ZETA) * (1.0 - t))).abs());
            }
        }
    }
    let (p, records) = &sweep.central;
    let path = mean_path(records).unwrap();
    let good = nash_payoff_check(&p.game, &path, &vals.0, &vals.1, 0.05).unwrap();
    let greedy = constant_path(&p.game, &p.partition, &[0.0, 0.0], &[1.0], &[-1.0], 4).unwrap();
    let bad = nash_payoff_check(&p.game, &greedy, &vals.0, &vals.1, 0.05).unwrap();
    Outcome {
        pass: err <= 1e-2 && good.pass && !bad.pass,
        detail: format!(
            "max value error {err:.3e}; mean path margins ({:.3e}, {:.3e}) pass={}; greedy path margins ({:.3}, {:.3}) pass={}",
            good.margin1, good.margin2, good.pass, bad.margin1, bad.margin2, bad.pass
        ),
    }
}

fn criterion9(vals: &(ZeroSumValue, ZeroSumValue)) -> Outcome {
    let table = limit_experiment(&[0.2, 0.1, 0.05, 0.025], |d| Ok(profile(d, 100)), &[0.0, 0.0], N_ROLLOUTS, Some((&vals.0, &vals.1)), 0.05).unwrap();
    let stable = table.rows.iter().all(|r| r.c1 == 0.75 && r.c2 == 0.75);
    let last_nash = table.rows.last().and_then(|r| r.nash.as_ref()).is_some_and(|n| n.pass);
    let outcomes: Vec<String> = table.rows.iter().map(|r| format!("{}:({:.4},{:.4})", r.delta, r.payoff1.mean, r.payoff2.mean)).collect();
    Outcome {
        pass: stable && table.monotone && table.nash_pass && last_nash && table.limit_point == (0.75, 0.75),
        detail: format!("limit point {:?}; outcomes {}; monotone {}", table.limit_point, outcomes.join(" "), table.monotone),
    }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion10() -> Outcome {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = true;
    let mut checked = 0;
    for name in ["example2_equilibrium", "example2_deviations", "example2_bounds"] {
        let mut s = Scenario::load(&root.join(format!("{name}.toml"))).unwrap();
        s.run.n_rollouts = 300;
        let (a, b) = (tmp.path().join(format!("{name}_a")), tmp.path().join(format!("{name}_b")));
        run_scenario(&s, &a).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        pool.install(|| run_scenario(&s, &b)).unwrap();
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        ok &= !fa.is_empty() && fa == fb;
        checked += fa.len();
    }
    Outcome { pass: ok, detail: format!("{checked} output files identical across reruns with different worker counts") }
}

fn report(n: usize, limit_s: f64, start: Instant, out: Outcome, failures: &mut usize) {
    let secs = start.elapsed().as_secs_f64();
    let pass = out.pass && secs <= limit_s;
    if !pass {
        *failures += 1;
    }
    println!("{} criterion {n}: {} [{secs:.1}s, limit {limit_s}s]", if pass { "PASS" } else { "FAIL" }, out.detail);
}

fn main() {
    let mut failures = 0;
    let t = Instant::now();
    report(1, 1.0, t, criterion1(), &mut failures);
    let t = Instant::now();
    report(2, 120.0, t, criterion2(), &mut failures);
    let t = Instant::now();
    report(3, 60.0, t, criterion3(), &mut failures);
    let t = Instant::now();
    report(4, 60.0, t, criterion4(), &mut failures);
    let t = Instant::now();
    let sweep = run_sweep();
    report(5, 300.0, t, criterion5(&sweep), &mut failures);
    let t = Instant::now();
    report(6, 300.0, t, criterion6(), &mut failures);
    println!("INFO criterion 6: {}", deviation_note());
    let t = Instant::now();
    report(7, 60.0, t, criterion7(&sweep), &mut failures);
    let t = Instant::now();
    let vals = zero_sum_values();
    report(8, 300.0, t, criterion8(&vals, &sweep), &mut failures);
    let t = Instant::now();
    report(9, 300.0, t, criterion9(&vals), &mut failures);
    let t = Instant::now();
    report(10, 300.0, t, criterion10(), &mut failures);
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria pass");
}
