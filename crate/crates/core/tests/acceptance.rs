//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Criteria 4 and 8 cannot be met by the model as written (see README,
//! "Known gaps"). They are evaluated and reported like every other criterion,
//! and their failures are listed separately so that any *other* regression
//! still fails this target.

use std::time::{Duration, Instant};

use hps_core::analysis::{consumption_reduction, dissipation_check, metrics, MonitorConfig};
use hps_core::dynamics::{assemble_closed_loop, equilibrium, initial_state, interconnect, spectrum, split_state, ClosedLoopSystem};
use hps_core::integrator::{simulate, step_exact, ExactStepper, Rk4Stepper, SimConfig};
use hps_core::kkt::{port_shifted_residual, solve_kkt};
use hps_core::model::{social_laplacian, steady_grid, steady_norms, ControllerGains, ScenarioParams, SocialCase};
use hps_core::scenario::{paper_table2, random_scenario, reference_values as rv};
use hps_core::HpsModel;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;

/// Criteria whose failure is explained in the README and expected.
const KNOWN_GAPS: [u32; 2] = [4, 8];

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn bundled(case: SocialCase) -> HpsModel {
    let mut p = paper_table2();
    p.social_case = case;
    HpsModel::new(p).unwrap()
}

fn randomized(count: usize) -> Vec<ScenarioParams> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    (0..count).map(|_| random_scenario(&mut rng)).collect()
}

fn closed_loop(model: &HpsModel) -> ClosedLoopSystem {
    assemble_closed_loop(model, &model.default_p1().unwrap()).unwrap()
}

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Every equilibrium the criteria talk about: closed loops of the bundled
/// scenario in both cases and of the randomized scenarios.
fn equilibrium_models() -> Vec<HpsModel> {
    let mut models = vec![bundled(SocialCase::CaseI), bundled(SocialCase::CaseII)];
    models.extend(randomized(20).into_iter().map(|p| HpsModel::new(p).unwrap()));
    models
}

fn c1() -> (bool, String) {
    let model = bundled(SocialCase::CaseI);
    let human = &model.params.human;
    let mut best = Duration::MAX;
    let mut p = DVector::zeros(4);
    for _ in 0..20 {
        let t = Instant::now();
        p = steady_norms(human, &model.laplacian, SocialCase::CaseI).unwrap();
        best = best.min(t.elapsed());
    }
    let dev = max_dev(p.as_slice(), &rv::P_BAR_CASE_I);
    (
        dev <= 1e-12 && best < Duration::from_millis(1),
        format!("p̄ = {:.12?}, max dev {dev:.1e}, {best:?}", p.as_slice()),
    )
}

fn c2() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for model in equilibrium_models() {
        let sys = closed_loop(&model);
        let x = equilibrium(&sys).unwrap();
        let (xs, xc) = split_state(&sys.layout, &x).unwrap();
        worst = worst.max((&xs.z_l - (&model.p_bar - model.h.component_mul(&xc.s))).amax());
        let kkt = solve_kkt(&model, &model.p_bar).unwrap();
        for i in 0..model.n() {
            worst = worst.max((kkt.primal.z_l[i] - (model.p_bar[i] - model.h[i] * kkt.primal.s[i])).abs());
        }
    }
    let model = bundled(SocialCase::CaseI);
    let z: Vec<f64> = (0..4).map(|i| model.p_bar[i] - model.h[i] * rv::S_BAR[i]).collect();
    let exact_dev = max_dev(&z, &[0.531, 0.567, 0.528, 0.582]);
    let rounded_dev = max_dev(&z, &rv::Z_L_CASE_I);
    (
        worst <= 1e-6 && exact_dev < 1e-9 && rounded_dev <= 0.005,
        format!("max |z̄ - (p̄ - H s̄)| = {worst:.1e}; z̄ from reported s̄ = {z:.3?}"),
    )
}

fn c3() -> (bool, String) {
    let i_ld = [30.0, 25.0, 30.0, 26.0];
    let (a1, p1) = consumption_reduction(&i_ld, &rv::Z_L_CASE_I);
    let (a2, p2) = consumption_reduction(&i_ld, &rv::Z_L_CASE_II);
    let ok = (a1 - rv::REDUCTION_AMPS_CASE_I).abs() <= 0.01
        && (p1 - rv::REDUCTION_PERCENT_CASE_I).abs() <= 0.01
        && (a2 - rv::REDUCTION_AMPS_CASE_II).abs() <= 0.01
        && (p2 - rv::REDUCTION_PERCENT_CASE_II).abs() <= 0.01;
    (ok, format!("case i {a1:.2} A / {p1:.2}%, case ii {a2:.2} A / {p2:.2}%"))
}

fn c4() -> (bool, String) {
    let mut worst_eq: f64 = 0.0;
    let mut worst_sim: f64 = 0.0;
    let mut worst_shifted: f64 = 0.0;
    let mut scenarios = vec![paper_table2()];
    scenarios.extend(randomized(20));
    for params in scenarios {
        let model = HpsModel::new(params).unwrap();
        let sys = closed_loop(&model);
        let kkt = solve_kkt(&model, &model.p_bar).unwrap().to_vector();
        let x = equilibrium(&sys).unwrap();
        let np = sys.layout.plant_dim();
        worst_eq = worst_eq.max(rel(&x.rows(np, x.len() - np).into_owned(), &kkt));
        let (xs, xc) = split_state(&sys.layout, &x).unwrap();
        let ports = interconnect(&model, &xs, &xc, &sys.p1).unwrap().controller_ports();
        worst_shifted = worst_shifted.max(port_shifted_residual(&model, &xc, &ports).unwrap());

        let x0 = initial_state(&sys.layout, &vec![0.8; model.n()]).unwrap();
        let cfg = SimConfig {
            t_final: 120.0,
            output_step: 0.05,
            ..SimConfig::default()
        };
        let traj = simulate(&sys, &x0, &cfg).unwrap();
        let xt = traj.last_state();
        worst_sim = worst_sim.max(rel(&xt.rows(np, xt.len() - np).into_owned(), &kkt));
    }
    (
        worst_eq <= 1e-6 && worst_sim <= 1e-6,
        format!("max relative gap to KKT: equilibrium {worst_eq:.2e}, simulation {worst_sim:.2e} (21 scenarios); port-shifted KKT residual at the equilibria {worst_shifted:.1e}"),
    )
}

fn c5() -> (bool, String) {
    let model = bundled(SocialCase::CaseI);
    let sys = closed_loop(&model);
    let rep = spectrum(&sys.m);
    let x0 = initial_state(&sys.layout, &rv::P_INITIAL).unwrap();
    let cfg = SimConfig::default();
    let traj = simulate(&sys, &x0, &cfg).unwrap();
    let res = *traj.residuals.last().unwrap();
    let tol = 1e-8 * (1.0 + sys.b.norm());
    (
        rep.max_real <= 1e-9 && rep.is_stable(1e-9) && res < tol,
        format!(
            "max Re λ = {:.3e}, ‖Mx+b‖ = {res:.2e} < {tol:.2e} at t = {:.2} s",
            rep.max_real,
            traj.final_time()
        ),
    )
}

fn c6_and_7() -> (f64, f64) {
    let mut vq: f64 = 0.0;
    let mut matching: f64 = 0.0;
    for model in equilibrium_models() {
        let sys = closed_loop(&model);
        let x = equilibrium(&sys).unwrap();
        let (xs, _) = split_state(&sys.layout, &x).unwrap();
        let m = metrics(&model, &xs);
        vq = vq.max(m.max_abs_v_q);
        matching = matching.max(m.current_matching_residual);

        // plant equilibrium induced by the optimal inputs
        let kkt = solve_kkt(&model, &model.p_bar).unwrap();
        let v = |s: &[f64]| DVector::from_column_slice(s);
        let grid = steady_grid(&model, &v(&kkt.primal.z_l), &v(&kkt.primal.u_d), &v(&kkt.primal.u_q)).unwrap();
        vq = vq.max(grid.v_q.amax());
        let demand: f64 = (0..model.n())
            .map(|i| model.i_ld[i] * kkt.primal.z_l[i] + grid.v_d[i] / model.r_load[i])
            .sum();
        matching = matching.max((demand - grid.i_td.sum()).abs());
    }
    (vq, matching)
}

fn c8() -> (bool, String) {
    let model = bundled(SocialCase::CaseI);
    let sol = solve_kkt(&model, &model.p_bar).unwrap();
    let s_dev = max_dev(&sol.primal.s, &rv::S_BAR);
    let mut sweep = paper_table2();
    sweep.nodes[3].pi_c = 100.0;
    let sweep = HpsModel::new(sweep).unwrap();
    let i_td = solve_kkt(&sweep, &sweep.p_bar).unwrap().primal.i_td;
    let i_rel = i_td
        .iter()
        .zip(rv::I_TD_PI_C4_100)
        .map(|(a, b)| ((a - b) / b).abs())
        .fold(0.0, f64::max);
    (
        s_dev <= 0.01 && i_rel <= 0.10,
        format!(
            "s̄ = {:.3?} (max dev {s_dev:.3}), Ī_td = {:.1?} (max rel dev {:.0}%)",
            sol.primal.s,
            i_td,
            100.0 * i_rel
        ),
    )
}

fn c9() -> (bool, String) {
    let model = bundled(SocialCase::CaseI);
    let mon = MonitorConfig::sufficient(&model);
    let sys = assemble_closed_loop(&model, &mon.p1(&model).unwrap()).unwrap();
    let x0 = initial_state(&sys.layout, &rv::P_INITIAL).unwrap();
    let traj = simulate(&sys, &x0, &SimConfig::default()).unwrap();
    let rep = dissipation_check(&traj, &model, &sys, &mon).unwrap();
    (
        rep.passed && rep.sufficiency.holds(),
        format!(
            "Q₁ = {:.0}·I, Q₂ = {:.0}·I, ζ₁ = {:.3}; max increment {:.2e} ≤ {:.2e} over {} samples",
            mon.q1[0],
            mon.q2[0],
            rep.sufficiency.zeta_1.unwrap_or(f64::NAN),
            rep.max_increment,
            rep.tolerance,
            rep.samples
        ),
    )
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn c10() -> (bool, String) {
    let model = bundled(SocialCase::CaseII);
    let human = &model.params.human;
    let spread = |p: &DVector<f64>| p.max() - p.min();
    let base = spread(&steady_norms(human, &model.laplacian, SocialCase::CaseII).unwrap());
    let case_i = spread(&steady_norms(human, &model.laplacian, SocialCase::CaseI).unwrap());
    let mut spreads = Vec::new();
    for kappa in [1.0, 10.0, 100.0, 1000.0] {
        let mut topo = model.params.topology.clone();
        topo.social_weights *= kappa;
        let lap = social_laplacian(&topo).unwrap();
        spreads.push(spread(&steady_norms(human, &lap, SocialCase::CaseII).unwrap()));
    }
    let monotone = spreads.windows(2).all(|w| w[1] <= w[0] + 1e-15);
    (
        base < case_i && (case_i - 0.06).abs() < 1e-12 && monotone,
        format!("case i spread {case_i:.3}, case ii spread {base:.4}; κ sweep {}", fmt_list(&spreads)),
    )
}

/// Same network with every storage element and controller gain scaled up, so
/// the fastest mode slows by the same factor.
fn destiffened(factor: f64) -> HpsModel {
    let mut p = paper_table2();
    for node in &mut p.nodes {
        node.c_t *= factor;
        node.l_t *= factor;
    }
    for line in &mut p.lines {
        line.inductance *= factor;
    }
    p.gains = ControllerGains::uniform(4, 1e-3 * factor);
    HpsModel::new(p).unwrap()
}

fn c11() -> (bool, String) {
    let (m, b) = (DMatrix::from_element(1, 1, -1.0), DVector::zeros(1));
    let scalar = ExactStepper::new(&m, &b, 1.0).unwrap().step(&DVector::from_element(1, 1.0))[0];
    let scalar_err = (scalar - (-1.0f64).exp()).abs();

    let model = bundled(SocialCase::CaseI);
    let sys = closed_loop(&model);
    let x0 = initial_state(&sys.layout, &rv::P_INITIAL).unwrap();
    let full = step_exact(&sys, &x0, 0.02).unwrap();
    let half = step_exact(&sys, &step_exact(&sys, &x0, 0.01).unwrap(), 0.01).unwrap();
    let semigroup = rel(&half, &full);

    let slow = destiffened(100.0);
    let sys = closed_loop(&slow);
    let (steps, h) = (20_000usize, 2e-5);
    let rk = Rk4Stepper::new(&sys.m, &sys.b, h).unwrap();
    let mut x = x0.clone();
    for _ in 0..steps {
        x = rk.step(&x);
    }
    let exact = step_exact(&sys, &x0, steps as f64 * h).unwrap();
    let cross = rel(&x, &exact);
    (
        scalar_err <= 1e-12 && semigroup <= 1e-11 && cross <= 1e-8,
        format!("scalar {scalar_err:.1e}, semigroup {semigroup:.1e}, RK4 vs exact {cross:.1e} (fastest rate ÷100)"),
    )
}

fn run(id: u32, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (passed, detail) = f();
    Outcome {
        id,
        title,
        passed,
        detail,
        elapsed: t.elapsed(),
    }
}

fn timed(id: u32, title: &'static str, budget: Duration, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let mut o = run(id, title, f);
    if o.elapsed > budget {
        o.passed = false;
        o.detail = format!("{} [over budget {budget:?}]", o.detail);
    }
    o
}

fn main() {
    let mut outcomes = vec![
        run(1, "closed-form personal norms", c1),
        run(2, "behavior/incentive consistency", c2),
        run(3, "consumption reduction", c3),
        timed(4, "oracle-controller agreement", Duration::from_secs(5), c4),
        timed(5, "closed-loop spectrum and convergence", Duration::from_secs(2), c5),
    ];
    let t = Instant::now();
    let (vq, matching) = c6_and_7();
    let elapsed = t.elapsed();
    outcomes.push(Outcome {
        id: 6,
        title: "voltage decoupling",
        passed: vq < 1e-8,
        detail: format!("max |V̄_q| = {vq:.1e} V over 22 closed loops and their KKT-induced grids"),
        elapsed,
    });
    outcomes.push(Outcome {
        id: 7,
        title: "current matching",
        passed: matching < 1e-8,
        detail: format!("max residual = {matching:.1e} A"),
        elapsed,
    });
    outcomes.push(run(8, "calibrated reproduction", c8));
    outcomes.push(timed(9, "dissipation", Duration::from_secs(3), c9));
    outcomes.push(run(10, "consensus tendency", c10));
    outcomes.push(run(11, "integrator correctness", c11));

    for o in &outcomes {
        println!(
            "criterion {:>2} {} {:<38} {} ({:.2?})",
            o.id,
            if o.passed { "PASS" } else { "FAIL" },
            o.title,
            o.detail,
            o.elapsed
        );
    }
    let unexpected: Vec<u32> = outcomes
        .iter()
        .filter(|o| !o.passed && !KNOWN_GAPS.contains(&o.id))
        .map(|o| o.id)
        .collect();
    let known: Vec<u32> = outcomes.iter().filter(|o| !o.passed && KNOWN_GAPS.contains(&o.id)).map(|o| o.id).collect();
    println!(
        "{} of {} criteria pass; known gaps failing: {known:?}; unexpected failures: {unexpected:?}",
        outcomes.iter().filter(|o| o.passed).count(),
        outcomes.len()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
