//! Domain types, parameter validation and the closed-form algebraic maps:
//! social Laplacian, line reduction, steady states and Lyapunov solutions.

pub mod lyapunov;
pub mod network;
pub mod params;
pub mod steady;

use nalgebra::{DMatrix, DVector};

pub use lyapunov::lyapunov_solve;
pub use network::{line_reduction, social_laplacian, LineReduction};
pub use params::{
    validate, ControllerGains, GridConstants, HumanParams, LineParams, NodeParams, ScenarioParams,
    SocialCase, Topology, WelfareWeights,
};
pub use steady::{regulated_steady_grid, steady_grid, steady_norms, GridSteadyState};

use crate::error::Result;

/// A validated scenario together with the matrices every other module needs.
///
/// Values are immutable after construction; the struct is `Send + Sync`.
#[derive(Debug, Clone)]
pub struct HpsModel {
    pub params: ScenarioParams,
    pub omega0: f64,
    pub incidence: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub lines: LineReduction,
    /// Steady personal norms for the scenario's social case.
    pub p_bar: DVector<f64>,

    pub c_t: DVector<f64>,
    pub l_t: DVector<f64>,
    pub r_t: DVector<f64>,
    pub r_load: DVector<f64>,
    pub i_ld: DVector<f64>,
    pub i_lq: DVector<f64>,
    pub v_ref: DVector<f64>,
    pub pi_c: DVector<f64>,
    pub pi_u: DVector<f64>,
    pub line_r: DVector<f64>,
    pub line_l: DVector<f64>,
    pub a: DVector<f64>,
    pub c: DVector<f64>,
    pub d: DVector<f64>,
    pub p_ego: DVector<f64>,
    pub p_bio: DVector<f64>,
    /// Incentive gain, equal to `p_ego`.
    pub h: DVector<f64>,
}

impl HpsModel {
    pub fn new(params: ScenarioParams) -> Result<Self> {
        let params = validate(params)?;
        let omega0 = params.omega0();
        let incidence = params.topology.incidence.clone();
        let laplacian = social_laplacian(&params.topology)?;
        let lines = line_reduction(&params.lines, &incidence, omega0)?;
        let p_bar = steady_norms(&params.human, &laplacian, params.social_case)?;
        let hv = |v: &Vec<f64>| DVector::from_column_slice(v);
        Ok(Self {
            omega0,
            c_t: params.node_vec(|n| n.c_t),
            l_t: params.node_vec(|n| n.l_t),
            r_t: params.node_vec(|n| n.r_t),
            r_load: params.node_vec(|n| n.r_load),
            i_ld: params.node_vec(|n| n.i_ld),
            i_lq: params.node_vec(|n| n.i_lq),
            v_ref: params.node_vec(|n| n.v_ref),
            pi_c: params.node_vec(|n| n.pi_c),
            pi_u: params.node_vec(|n| n.pi_u),
            line_r: params.line_vec(|l| l.resistance),
            line_l: params.line_vec(|l| l.inductance),
            a: hv(&params.human.a),
            c: hv(&params.human.c),
            d: hv(&params.human.d),
            p_ego: hv(&params.human.p_ego),
            p_bio: hv(&params.human.p_bio),
            h: params.human.incentive_gain(),
            incidence,
            laplacian,
            lines,
            p_bar,
            params,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n_nodes()
    }

    pub fn e(&self) -> usize {
        self.params.n_lines()
    }

    pub fn social_case(&self) -> SocialCase {
        self.params.social_case
    }

    /// `-R_L⁻¹ + B J`: coefficient of `V_d` in the active current balance.
    pub fn active_coupling(&self) -> DMatrix<f64> {
        let mut g = &self.incidence * &self.lines.j;
        for i in 0..self.n() {
            g[(i, i)] -= 1.0 / self.r_load[i];
        }
        g
    }

    /// `ω₀ C_t - B K`: coefficient of `V_d` in the reactive constraint as written
    /// in the Lagrangian (note the sign relative to the steady-state map).
    pub fn reactive_coupling(&self) -> DMatrix<f64> {
        let mut g = -(&self.incidence * &self.lines.k);
        for i in 0..self.n() {
            g[(i, i)] += self.omega0 * self.c_t[i];
        }
        g
    }

    /// Matrix driving the norm error: `C + D` (case i) or `C + D + L` (case ii).
    pub fn norm_matrix(&self) -> DMatrix<f64> {
        self.norm_matrix_for(self.social_case())
    }

    pub fn norm_matrix_for(&self, case: SocialCase) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&(&self.c + &self.d));
        if case == SocialCase::CaseII {
            m += &self.laplacian;
        }
        m
    }

    /// `(I_Ld² + I_Lq²)` per prosumer.
    pub fn load_magnitude_sq(&self) -> DVector<f64> {
        self.i_ld.component_mul(&self.i_ld) + self.i_lq.component_mul(&self.i_lq)
    }

    /// Default `P₁` for the incentive port: Lyapunov solution for `A` with `Q₁`
    /// taken from the scenario's monitor block, or the identity.
    pub fn default_p1(&self) -> Result<DMatrix<f64>> {
        let q1 = match &self.params.monitor {
            Some(m) => DMatrix::from_diagonal(&DVector::from_column_slice(&m.q1)),
            None => DMatrix::identity(self.n(), self.n()),
        };
        lyapunov_solve(&DMatrix::from_diagonal(&self.a), &q1)
    }
}
