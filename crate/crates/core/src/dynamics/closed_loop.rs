use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::dynamics::controller::{controller_rhs, ControllerPorts};
use crate::dynamics::plant::plant_rhs;
use crate::dynamics::state::{join_state, split_state, ControllerState, PlantState, StateLayout};
use crate::error::{HpsError, Result};
use crate::linalg::{self, CONDITION_WARN};
use crate::model::{HpsModel, SocialCase};

/// Signals exchanged between plant and controller at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct PortValues {
    pub u_d: DVector<f64>,
    pub u_q: DVector<f64>,
    pub s: DVector<f64>,
    pub p_a: DVector<f64>,
    pub p_b: DVector<f64>,
    pub p_c: DVector<f64>,
}

impl PortValues {
    pub fn controller_ports(&self) -> ControllerPorts {
        ControllerPorts {
            p_a: self.p_a.clone(),
            p_b: self.p_b.clone(),
            p_c: self.p_c.clone(),
        }
    }
}

/// Plant inputs copy the controller's decisions; the controller sees the
/// generated currents and `p_C = -2 Hᵀ Aᵀ P₁ᵀ z_l`.
pub fn interconnect(model: &HpsModel, x_s: &PlantState, x_c: &ControllerState, p1: &DMatrix<f64>) -> Result<PortValues> {
    let n = model.n();
    if p1.nrows() != n || p1.ncols() != n {
        return Err(HpsError::Dimension(format!("P1 is {}x{}, expected {n}x{n}", p1.nrows(), p1.ncols())));
    }
    let p1t_z = p1.tr_mul(&x_s.z_l);
    let p_c = DVector::from_fn(n, |i, _| -2.0 * model.h[i] * model.a[i] * p1t_z[i]);
    Ok(PortValues {
        u_d: x_c.u_d.clone(),
        u_q: x_c.u_q.clone(),
        s: x_c.s.clone(),
        p_a: x_s.i_td.clone(),
        p_b: x_s.i_tq.clone(),
        p_c,
    })
}

/// Block-wise closed-loop vector field, built from [`plant_rhs`],
/// [`controller_rhs`] and [`interconnect`].
pub fn closed_loop_rhs(model: &HpsModel, p1: &DMatrix<f64>, x: &DVector<f64>) -> Result<DVector<f64>> {
    let layout = StateLayout::new(model.n(), model.e());
    let (xs, xc) = split_state(&layout, x)?;
    let ports = interconnect(model, &xs, &xc, p1)?;
    let dxs = plant_rhs(model, &xs, &ports.u_d, &ports.u_q, &ports.s)?;
    let dxc = controller_rhs(model, &xc, &ports.controller_ports(), &model.p_bar)?;
    Ok(join_state(&dxs, &dxc))
}

/// The closed loop as `ẋ = M x + b` over `[plant; controller]`.
#[derive(Debug, Clone)]
pub struct ClosedLoopSystem {
    pub m: DMatrix<f64>,
    pub b: DVector<f64>,
    pub layout: StateLayout,
    pub p1: DMatrix<f64>,
    pub p_bar: DVector<f64>,
    pub social_case: SocialCase,
}

impl ClosedLoopSystem {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn rhs(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.m * x + &self.b
    }

    pub fn residual_norm(&self, x: &DVector<f64>) -> f64 {
        self.rhs(x).norm()
    }
}

struct Assembler<'a> {
    layout: &'a StateLayout,
    m: DMatrix<f64>,
    b: DVector<f64>,
}

impl Assembler<'_> {
    fn add(&mut self, row: &str, col: &str, block: &DMatrix<f64>) {
        let r = self.layout.range(row).start;
        let c = self.layout.range(col).start;
        let mut view = self.m.view_mut((r, c), (block.nrows(), block.ncols()));
        view += block;
    }

    fn add_diag(&mut self, row: &str, col: &str, d: &DVector<f64>) {
        self.add(row, col, &DMatrix::from_diagonal(d));
    }

    fn add_const(&mut self, row: &str, v: &DVector<f64>) {
        let r = self.layout.range(row);
        let mut view = self.b.rows_mut(r.start, r.len());
        view += v;
    }
}

fn inv(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| 1.0 / x)
}

/// Assembles `(M, b)` from the model matrices directly, without calling the
/// block-wise right-hand sides.
pub fn assemble_closed_loop(model: &HpsModel, p1: &DMatrix<f64>) -> Result<ClosedLoopSystem> {
    let n = model.n();
    let e = model.e();
    if p1.nrows() != n || p1.ncols() != n {
        return Err(HpsError::Dimension(format!("P1 is {}x{}, expected {n}x{n}", p1.nrows(), p1.ncols())));
    }
    let layout = StateLayout::new(n, e);
    let dim = layout.dim();
    let mut asm = Assembler {
        layout: &layout,
        m: DMatrix::zeros(dim, dim),
        b: DVector::zeros(dim),
    };
    let w0 = model.omega0;
    let eye_n = DVector::from_element(n, 1.0);
    let eye_e = DVector::from_element(e, 1.0);
    let bmat = &model.incidence;

    // grid: node voltages
    let ci = inv(&model.c_t);
    let g_load = inv(&model.r_load);
    for (v, other, it, il, load) in [("V_d", "V_q", "I_td", "I_d", &model.i_ld), ("V_q", "V_d", "I_tq", "I_q", &model.i_lq)] {
        asm.add_diag(v, v, &-ci.component_mul(&g_load));
        let skew = if v == "V_d" { w0 } else { -w0 };
        asm.add_diag(v, other, &(&eye_n * skew));
        asm.add_diag(v, it, &ci);
        asm.add(v, il, &(DMatrix::from_diagonal(&ci) * bmat));
        asm.add_diag(v, "z_l", &-ci.component_mul(load));
    }
    // grid: filter currents, driven by u_d*, u_q*
    let lti = inv(&model.l_t);
    for (it, other, v, u) in [("I_td", "I_tq", "V_d", "u_d*"), ("I_tq", "I_td", "V_q", "u_q*")] {
        asm.add_diag(it, v, &-&lti);
        asm.add_diag(it, it, &-model.r_t.component_mul(&lti));
        let skew = if it == "I_td" { w0 } else { -w0 };
        asm.add_diag(it, other, &(&eye_n * skew));
        asm.add_diag(it, u, &lti);
    }
    // grid: line currents
    let li = inv(&model.line_l);
    for (il, other, v) in [("I_d", "I_q", "V_d"), ("I_q", "I_d", "V_q")] {
        asm.add(il, v, &-(DMatrix::from_diagonal(&li) * bmat.transpose()));
        asm.add_diag(il, il, &-model.line_r.component_mul(&li));
        let skew = if il == "I_d" { w0 } else { -w0 };
        asm.add_diag(il, other, &(&eye_e * skew));
    }
    // behavior, driven by s*
    asm.add_diag("z_l", "z_l", &-&model.a);
    asm.add_diag("z_l", "p", &model.a);
    asm.add_diag("z_l", "s*", &-model.a.component_mul(&model.h));
    // personal norms
    asm.add("p", "p", &-model.norm_matrix());
    asm.add_const("p", &(model.c.component_mul(&model.p_ego) + model.d.component_mul(&model.p_bio)));

    // controller
    let g = &model.params.gains;
    let w = &model.params.weights;
    let tau = |k: usize| inv(&DVector::from_column_slice(g.blocks()[k]));
    let ga = model.active_coupling();
    let gb = model.reactive_coupling();
    let il2 = model.load_magnitude_sq();
    let lt_w0 = &model.l_t * w0;

    // τ_z ż* = α Π_u I_L² (1 - z*) - I_Ld λ_a - I_Lq λ_b + λ_e
    let t = tau(0);
    let alpha_term = (model.pi_u.component_mul(&il2) * w.alpha).component_mul(&t);
    asm.add_diag("z_l*", "z_l*", &-&alpha_term);
    asm.add_const("z_l*", &alpha_term);
    asm.add_diag("z_l*", "lambda_a", &-model.i_ld.component_mul(&t));
    asm.add_diag("z_l*", "lambda_b", &-model.i_lq.component_mul(&t));
    asm.add_diag("z_l*", "lambda_e", &t);

    let t = tau(1);
    asm.add_diag("I_td*", "I_td*", &-(model.pi_c.component_mul(&t) * w.beta));
    asm.add_diag("I_td*", "lambda_a", &t);
    asm.add_diag("I_td*", "lambda_c", &-model.r_t.component_mul(&t));
    asm.add_diag("I_td*", "lambda_d", &lt_w0.component_mul(&t));

    let t = tau(2);
    asm.add_diag("I_tq*", "lambda_b", &t);
    asm.add_diag("I_tq*", "lambda_c", &lt_w0.component_mul(&t));
    asm.add_diag("I_tq*", "lambda_d", &model.r_t.component_mul(&t));

    let t = tau(3);
    asm.add_diag("u_d*", "u_d*", &-(&t * w.gamma));
    asm.add_diag("u_d*", "lambda_c", &t);
    asm.add_diag("u_d*", "I_td", &-&t);

    let t = tau(4);
    asm.add_diag("u_q*", "u_q*", &-(&t * w.delta));
    asm.add_diag("u_q*", "lambda_d", &-&t);
    asm.add_diag("u_q*", "I_tq", &-&t);

    let t = tau(5);
    let td = DMatrix::from_diagonal(&t);
    asm.add_diag("V_d*", "V_d*", &-(&t * w.epsilon));
    asm.add_const("V_d*", &(model.v_ref.component_mul(&t) * w.epsilon));
    asm.add("V_d*", "lambda_a", &(&td * ga.transpose()));
    asm.add("V_d*", "lambda_b", &-(&td * gb.transpose()));
    asm.add_diag("V_d*", "lambda_c", &-&t);

    // τ_s ṡ* = -η s* + H λ_e + 2 H A P₁ᵀ z_l
    let t = tau(6);
    asm.add_diag("s*", "s*", &-(&t * w.eta));
    asm.add_diag("s*", "lambda_e", &model.h.component_mul(&t));
    let port_gain = DMatrix::from_diagonal(&(model.h.component_mul(&model.a).component_mul(&t) * 2.0)) * p1.transpose();
    asm.add("s*", "z_l", &port_gain);

    let t = tau(7);
    let td = DMatrix::from_diagonal(&t);
    asm.add_diag("lambda_a", "z_l*", &model.i_ld.component_mul(&t));
    asm.add_diag("lambda_a", "I_td*", &-&t);
    asm.add("lambda_a", "V_d*", &-(&td * &ga));

    let t = tau(8);
    let td = DMatrix::from_diagonal(&t);
    asm.add_diag("lambda_b", "z_l*", &model.i_lq.component_mul(&t));
    asm.add_diag("lambda_b", "I_tq*", &-&t);
    asm.add("lambda_b", "V_d*", &(&td * &gb));

    let t = tau(9);
    asm.add_diag("lambda_c", "V_d*", &t);
    asm.add_diag("lambda_c", "I_td*", &model.r_t.component_mul(&t));
    asm.add_diag("lambda_c", "I_tq*", &-lt_w0.component_mul(&t));
    asm.add_diag("lambda_c", "u_d*", &-&t);

    let t = tau(10);
    asm.add_diag("lambda_d", "I_td*", &-lt_w0.component_mul(&t));
    asm.add_diag("lambda_d", "I_tq*", &-model.r_t.component_mul(&t));
    asm.add_diag("lambda_d", "u_q*", &t);

    let t = tau(11);
    asm.add_diag("lambda_e", "z_l*", &-&t);
    asm.add_diag("lambda_e", "s*", &-model.h.component_mul(&t));
    asm.add_const("lambda_e", &model.p_bar.component_mul(&t));

    let Assembler { m, b, .. } = asm;
    Ok(ClosedLoopSystem {
        m,
        b,
        layout,
        p1: p1.clone(),
        p_bar: model.p_bar.clone(),
        social_case: model.social_case(),
    })
}

/// Unique equilibrium `x̄ = -M⁻¹ b`.
pub fn equilibrium(sys: &ClosedLoopSystem) -> Result<DVector<f64>> {
    let cond = linalg::condition_number(&sys.m);
    if !(cond <= CONDITION_WARN) {
        return Err(HpsError::Singular {
            context: "closed-loop equilibrium".into(),
            condition: cond,
        });
    }
    let lu = sys.m.clone().lu();
    let rhs = -&sys.b;
    let mut x = lu.solve(&rhs).ok_or_else(|| HpsError::Singular {
        context: "closed-loop equilibrium".into(),
        condition: cond,
    })?;
    // one step of iterative refinement; cheap and tightens the residual on
    // the wide dynamic range between volt and per-unit coordinates
    let r = sys.rhs(&x);
    if let Some(dx) = lu.solve(&r) {
        x -= dx;
    }
    let res = sys.residual_norm(&x);
    let bound = 1e-10 * sys.b.norm().max(f64::MIN_POSITIVE);
    if res > bound {
        log::warn!("equilibrium residual {res:.3e} exceeds {bound:.3e}");
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenCluster {
    pub re: f64,
    pub im: f64,
    pub algebraic: usize,
    pub geometric: usize,
}

/// Eigenvalues of `M` plus the semisimplicity check on the imaginary axis.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub max_real: f64,
    pub min_abs_real: f64,
    pub max_abs: f64,
    #[serde(skip)]
    pub eigenvalues: Vec<Complex<f64>>,
    /// Eigenvalue clusters on the imaginary axis (usually empty).
    pub axis_clusters: Vec<EigenCluster>,
}

impl SpectrumReport {
    /// No eigenvalue right of `tol` and no defective axis eigenvalue.
    pub fn is_stable(&self, tol: f64) -> bool {
        self.max_real <= tol && self.axis_clusters.iter().all(|c| c.algebraic == c.geometric)
    }
}

pub fn spectrum(m: &DMatrix<f64>) -> SpectrumReport {
    let eig = linalg::eigenvalues(m);
    let norm = m.norm();
    let rank_tol = 1e-8 * norm;
    // eigenvalues of a well-conditioned M are accurate to about eps·‖M‖, so
    // only real parts within a small multiple of that count as on the axis
    let axis_tol = 1e-12 * norm.max(1.0);
    let max_real = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let min_abs_real = eig.iter().map(|l| l.re.abs()).fold(f64::INFINITY, f64::min);
    let max_abs = eig.iter().map(|l| l.norm()).fold(0.0, f64::max);

    let mut axis_clusters: Vec<EigenCluster> = Vec::new();
    for l in eig.iter().filter(|l| l.re.abs() <= axis_tol) {
        if let Some(c) = axis_clusters
            .iter_mut()
            .find(|c| (Complex::new(c.re, c.im) - l).norm() <= 1e-6 * norm.max(1.0))
        {
            c.algebraic += 1;
        } else {
            axis_clusters.push(EigenCluster {
                re: l.re,
                im: l.im,
                algebraic: 1,
                geometric: 0,
            });
        }
    }
    let n = m.nrows();
    for c in &mut axis_clusters {
        let shifted = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(m[(i, j)], 0.0) - if i == j { Complex::new(c.re, c.im) } else { Complex::new(0.0, 0.0) }
        });
        let rank = shifted.svd(false, false).rank(rank_tol);
        c.geometric = (n - rank).min(c.algebraic);
    }
    SpectrumReport {
        max_real,
        min_abs_real,
        max_abs,
        eigenvalues: eig,
        axis_clusters,
    }
}

#[derive(Serialize)]
struct IndexMap<'a> {
    dim: usize,
    n_nodes: usize,
    n_lines: usize,
    blocks: &'a [crate::dynamics::state::StateBlock],
    coordinates: Vec<String>,
}

/// Writes `M.mtx` (coordinate format, 1-based), `b.vec` and `index_map.json`.
pub fn export_system(sys: &ClosedLoopSystem, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, text) in export_files(sys)? {
        std::fs::write(dir.join(name), text)?;
    }
    Ok(())
}

/// Contents of `M.mtx`, `b.vec` and `index_map.json`, for callers that stage
/// their own writes.
pub fn export_files(sys: &ClosedLoopSystem) -> Result<Vec<(&'static str, String)>> {
    let n = sys.dim();
    let nnz = sys.m.iter().filter(|v| **v != 0.0).count();
    let mut mtx = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(mtx, "{n} {n} {nnz}").unwrap();
    for j in 0..n {
        for i in 0..n {
            let v = sys.m[(i, j)];
            if v != 0.0 {
                writeln!(mtx, "{} {} {:.16e}", i + 1, j + 1, v).unwrap();
            }
        }
    }

    let mut bvec = String::new();
    for v in sys.b.iter() {
        writeln!(bvec, "{v:.16e}").unwrap();
    }

    let map = IndexMap {
        dim: n,
        n_nodes: sys.layout.n_nodes,
        n_lines: sys.layout.n_lines,
        blocks: &sys.layout.blocks,
        coordinates: sys.layout.coordinate_names(),
    };
    Ok(vec![
        ("M.mtx", mtx),
        ("b.vec", bvec),
        ("index_map.json", serde_json::to_string_pretty(&map)?),
    ])
}

/// Starting point used for the reported runs: de-energized grid, idle
/// controller, behavior and norms at `p0`.
pub fn initial_state(layout: &StateLayout, p0: &[f64]) -> Result<DVector<f64>> {
    let n = layout.n_nodes;
    if p0.len() != n {
        return Err(HpsError::Dimension(format!("initial norms have {} entries, expected {n}", p0.len())));
    }
    let mut x = DVector::zeros(layout.dim());
    for (block, values) in [("z_l", p0), ("p", p0)] {
        let r = layout.range(block);
        x.rows_mut(r.start, n).copy_from_slice(values);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::regulated_steady_grid;
    use crate::scenario::paper_table2;

    fn model(case: SocialCase) -> HpsModel {
        let mut p = paper_table2();
        p.social_case = case;
        HpsModel::new(p).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> DVector<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DVector::from_fn(n, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn assembly_matches_blockwise_rhs() {
        for case in [SocialCase::CaseI, SocialCase::CaseII] {
            let model = model(case);
            let p1 = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 + i as f64 } else { 0.1 * (i + 2 * j) as f64 });
            let sys = assemble_closed_loop(&model, &p1).unwrap();
            assert_eq!(sys.dim(), 80);
            for seed in 0..200 {
                let x = pseudo_random(80, seed) * 200.0;
                let a = sys.rhs(&x);
                let b = closed_loop_rhs(&model, &p1, &x).unwrap();
                let scale = 1.0 + a.amax();
                assert!((&a - &b).amax() <= 1e-12 * scale, "{case:?} seed {seed}: {}", (&a - &b).amax() / scale);
            }
        }
    }

    #[test]
    fn ports_follow_interconnection() {
        let model = model(SocialCase::CaseI);
        let mut xs = PlantState::zeros(4, 4);
        let xc = ControllerState::zeros(4);
        let p1 = DMatrix::identity(4, 4);
        assert_eq!(interconnect(&model, &xs, &xc, &p1).unwrap().p_c.amax(), 0.0);
        xs.z_l.fill(1.0);
        xs.i_td = DVector::from_column_slice(&[1.0 / 3.0, 2.5, -7.1, 1e-17]);
        let ports = interconnect(&model, &xs, &xc, &p1).unwrap();
        for i in 0..4 {
            assert!((ports.p_c[i] + 0.9).abs() < 1e-15);
        }
        assert_eq!(ports.p_a, xs.i_td);
    }

    #[test]
    fn equilibrium_is_stationary_and_regulates_v_q() {
        let model = model(SocialCase::CaseI);
        let sys = assemble_closed_loop(&model, &model.default_p1().unwrap()).unwrap();
        let x = equilibrium(&sys).unwrap();
        assert!(sys.residual_norm(&x) <= 1e-10 * sys.b.norm());
        let blockwise = closed_loop_rhs(&model, &sys.p1, &x).unwrap();
        assert!(blockwise.amax() <= 1e-9 * sys.b.amax());
        let (xs, xc) = split_state(&sys.layout, &x).unwrap();
        assert!(xs.v_q.amax() < 1e-8);
        assert!((&xs.p - &model.p_bar).amax() < 1e-12);
        // plant part is the forced equilibrium for the controller's inputs
        let (reg, u_q) = regulated_steady_grid(&model, &xs.z_l, &xc.u_d).unwrap();
        assert!((&reg.v_d - &xs.v_d).amax() < 1e-8 * xs.v_d.amax());
        assert!((&u_q - &xc.u_q).amax() < 1e-8 * (1.0 + u_q.amax()));
    }

    #[test]
    fn skew_terms_are_opposite() {
        let model = model(SocialCase::CaseI);
        let sys = assemble_closed_loop(&model, &DMatrix::identity(4, 4)).unwrap();
        for (d, q) in [("V_d", "V_q"), ("I_td", "I_tq"), ("I_d", "I_q")] {
            let rd = sys.layout.range(d);
            let rq = sys.layout.range(q);
            for k in 0..rd.len() {
                let dq = sys.m[(rd.start + k, rq.start + k)];
                let qd = sys.m[(rq.start + k, rd.start + k)];
                assert_eq!(dq, model.omega0);
                assert_eq!(qd, -dq);
            }
        }
    }

    #[test]
    fn bundled_spectrum_is_stable() {
        let model = model(SocialCase::CaseI);
        let sys = assemble_closed_loop(&model, &model.default_p1().unwrap()).unwrap();
        let report = spectrum(&sys.m);
        assert!(report.is_stable(1e-9), "max real {}", report.max_real);
        assert!(report.axis_clusters.is_empty());
    }

    #[test]
    fn defective_axis_eigenvalue_is_detected() {
        let jordan = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]);
        let report = spectrum(&jordan);
        assert_eq!(report.axis_clusters.len(), 1);
        assert_eq!(report.axis_clusters[0].algebraic, 2);
        assert_eq!(report.axis_clusters[0].geometric, 1);
        assert!(!report.is_stable(1e-9));
        let rotation = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectrum(&rotation).is_stable(1e-9));
    }

    #[test]
    fn export_writes_three_files() {
        let model = model(SocialCase::CaseI);
        let sys = assemble_closed_loop(&model, &DMatrix::identity(4, 4)).unwrap();
        let dir = std::env::temp_dir().join(format!("hps-export-{}", std::process::id()));
        export_system(&sys, &dir).unwrap();
        let mtx = std::fs::read_to_string(dir.join("M.mtx")).unwrap();
        assert!(mtx.lines().nth(1).unwrap().starts_with("80 80 "));
        assert_eq!(std::fs::read_to_string(dir.join("b.vec")).unwrap().lines().count(), 80);
        let map: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("index_map.json")).unwrap()).unwrap();
        assert_eq!(map["coordinates"].as_array().unwrap().len(), 80);
        std::fs::remove_dir_all(dir).ok();
    }
}
