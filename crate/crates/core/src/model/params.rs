//! Scenario parameters and their validation.
//!
//! The JSON layout keeps the physical symbols as keys (`C_t`, `R_L`, `I_Ld`, ...)
//! so that a scenario file reads like a parameter table. All quantities are SI.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::analysis::MonitorConfig;
use crate::error::{HpsError, Result, ValidationReport};

/// Load resistance standing in for "no base load"; kept finite so every matrix stays finite.
pub const OPEN_CIRCUIT_LOAD: f64 = 1e9;

pub const DEFAULT_F0: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    /// Filter capacitance (F).
    #[serde(rename = "C_t")]
    pub c_t: f64,
    /// Filter inductance (H).
    #[serde(rename = "L_t")]
    pub l_t: f64,
    /// Filter resistance (Ω).
    #[serde(rename = "R_t")]
    pub r_t: f64,
    /// Load impedance (Ω).
    #[serde(rename = "R_L")]
    pub r_load: f64,
    /// d-axis load current demand (A).
    #[serde(rename = "I_Ld")]
    pub i_ld: f64,
    /// q-axis load current demand (A), non-positive for inductive loads.
    #[serde(rename = "I_Lq")]
    pub i_lq: f64,
    /// d-axis voltage reference (V).
    #[serde(rename = "V_r")]
    pub v_ref: f64,
    pub pi_c: f64,
    pub pi_u: f64,
}

impl NodeParams {
    /// Magnitude of the load current, `(I_Ld² + I_Lq²)^½`.
    pub fn load_magnitude(&self) -> f64 {
        self.i_ld.hypot(self.i_lq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    #[serde(rename = "R_k")]
    pub resistance: f64,
    #[serde(rename = "L_k")]
    pub inductance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    /// N×E node-line incidence, row-major by node.
    pub incidence: DMatrix<f64>,
    /// N×N social influence weights `b_ij` (not required to be symmetric).
    pub social_weights: DMatrix<f64>,
}

impl Topology {
    pub fn n_nodes(&self) -> usize {
        self.incidence.nrows()
    }

    pub fn n_lines(&self) -> usize {
        self.incidence.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanParams {
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub p_ego: Vec<f64>,
    pub p_bio: Vec<f64>,
    /// Incentive gain. It is derived from `p_ego`; a file may only repeat it verbatim.
    #[serde(default, skip_serializing)]
    pub h: Option<Vec<f64>>,
}

impl HumanParams {
    /// `h_i = p_ego_i`.
    pub fn incentive_gain(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.p_ego)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl WelfareWeights {
    pub fn as_array(&self) -> [f64; 6] {
        [self.alpha, self.beta, self.gamma, self.delta, self.epsilon, self.eta]
    }

    pub fn from_array(w: [f64; 6]) -> Self {
        Self {
            alpha: w[0],
            beta: w[1],
            gamma: w[2],
            delta: w[3],
            epsilon: w[4],
            eta: w[5],
        }
    }
}

/// Diagonal time constants of the primal-dual controller, one vector per block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub tau_z: Vec<f64>,
    pub tau_td: Vec<f64>,
    pub tau_tq: Vec<f64>,
    pub tau_ud: Vec<f64>,
    pub tau_uq: Vec<f64>,
    #[serde(rename = "tau_V")]
    pub tau_v: Vec<f64>,
    pub tau_s: Vec<f64>,
    pub tau_a: Vec<f64>,
    pub tau_b: Vec<f64>,
    pub tau_c: Vec<f64>,
    pub tau_d: Vec<f64>,
    pub tau_e: Vec<f64>,
}

pub const GAIN_NAMES: [&str; 12] = [
    "tau_z", "tau_td", "tau_tq", "tau_ud", "tau_uq", "tau_V", "tau_s", "tau_a", "tau_b", "tau_c",
    "tau_d", "tau_e",
];

impl ControllerGains {
    pub fn uniform(n: usize, tau: f64) -> Self {
        let v = vec![tau; n];
        Self {
            tau_z: v.clone(),
            tau_td: v.clone(),
            tau_tq: v.clone(),
            tau_ud: v.clone(),
            tau_uq: v.clone(),
            tau_v: v.clone(),
            tau_s: v.clone(),
            tau_a: v.clone(),
            tau_b: v.clone(),
            tau_c: v.clone(),
            tau_d: v.clone(),
            tau_e: v,
        }
    }

    /// Blocks in controller-state order: seven primal blocks then five multipliers.
    pub fn blocks(&self) -> [&[f64]; 12] {
        [
            &self.tau_z,
            &self.tau_td,
            &self.tau_tq,
            &self.tau_ud,
            &self.tau_uq,
            &self.tau_v,
            &self.tau_s,
            &self.tau_a,
            &self.tau_b,
            &self.tau_c,
            &self.tau_d,
            &self.tau_e,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 12] {
        [
            &mut self.tau_z,
            &mut self.tau_td,
            &mut self.tau_tq,
            &mut self.tau_ud,
            &mut self.tau_uq,
            &mut self.tau_v,
            &mut self.tau_s,
            &mut self.tau_a,
            &mut self.tau_b,
            &mut self.tau_c,
            &mut self.tau_d,
            &mut self.tau_e,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConstants {
    /// Nominal frequency (Hz).
    #[serde(rename = "f_0", default = "default_f0")]
    pub f0: f64,
}

fn default_f0() -> f64 {
    DEFAULT_F0
}

impl Default for GridConstants {
    fn default() -> Self {
        Self { f0: DEFAULT_F0 }
    }
}

impl GridConstants {
    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.f0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SocialCase {
    /// Personal norms driven by values only.
    #[serde(rename = "i")]
    CaseI,
    /// Personal norms additionally coupled through the social Laplacian.
    #[serde(rename = "ii")]
    CaseII,
}

impl std::str::FromStr for SocialCase {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "i" | "I" | "1" => Ok(Self::CaseI),
            "ii" | "II" | "2" => Ok(Self::CaseII),
            other => Err(format!("unknown social case `{other}` (expected i or ii)")),
        }
    }
}

/// A complete experiment: grid, humans, welfare weights and controller tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioFile", into = "ScenarioFile")]
pub struct ScenarioParams {
    pub nodes: Vec<NodeParams>,
    pub lines: Vec<LineParams>,
    pub topology: Topology,
    pub human: HumanParams,
    pub weights: WelfareWeights,
    pub gains: ControllerGains,
    pub constants: GridConstants,
    pub social_case: SocialCase,
    pub monitor: Option<MonitorConfig>,
}

/// On-disk layout of a scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    nodes: Vec<NodeParams>,
    lines: Vec<LineParams>,
    incidence: Vec<Vec<f64>>,
    human: HumanParams,
    #[serde(default)]
    social_weights: Option<Vec<Vec<f64>>>,
    welfare_weights: WelfareWeights,
    controller_gains: ControllerGains,
    #[serde(default)]
    constants: GridConstants,
    social_case: SocialCase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    monitor: Option<MonitorConfig>,
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> std::result::Result<DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(format!(
            "{what}: row {i} has {} entries, expected {ncols}",
            r.len()
        ));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl TryFrom<ScenarioFile> for ScenarioParams {
    type Error = String;

    fn try_from(f: ScenarioFile) -> std::result::Result<Self, String> {
        let incidence = rows_to_matrix(&f.incidence, "incidence")?;
        let n = incidence.nrows();
        let social_weights = match f.social_weights {
            Some(rows) if !rows.is_empty() => rows_to_matrix(&rows, "social_weights")?,
            _ => DMatrix::zeros(n, n),
        };
        Ok(Self {
            nodes: f.nodes,
            lines: f.lines,
            topology: Topology {
                incidence,
                social_weights,
            },
            human: f.human,
            weights: f.welfare_weights,
            gains: f.controller_gains,
            constants: f.constants,
            social_case: f.social_case,
            monitor: f.monitor,
        })
    }
}

impl From<ScenarioParams> for ScenarioFile {
    fn from(p: ScenarioParams) -> Self {
        Self {
            nodes: p.nodes,
            lines: p.lines,
            incidence: matrix_to_rows(&p.topology.incidence),
            human: p.human,
            social_weights: Some(matrix_to_rows(&p.topology.social_weights)),
            welfare_weights: p.weights,
            controller_gains: p.gains,
            constants: p.constants,
            social_case: p.social_case,
            monitor: p.monitor,
        }
    }
}

impl ScenarioParams {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn omega0(&self) -> f64 {
        self.constants.omega0()
    }

    /// Collects a per-node field into a vector.
    pub fn node_vec(&self, f: impl Fn(&NodeParams) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.nodes.len(), self.nodes.iter().map(f))
    }

    pub fn line_vec(&self, f: impl Fn(&LineParams) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.lines.len(), self.lines.iter().map(f))
    }

    /// Every violated invariant, with indices.
    pub fn check(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        let n = self.nodes.len();
        let e = self.lines.len();

        if n < 2 {
            r.push("nodes", format!("need at least 2 prosumers, got {n}"));
        }
        if e < 1 {
            r.push("lines", "need at least 1 line");
        }

        for (i, node) in self.nodes.iter().enumerate() {
            let positive = [
                ("C_t", node.c_t),
                ("L_t", node.l_t),
                ("R_t", node.r_t),
                ("R_L", node.r_load),
                ("pi_c", node.pi_c),
                ("I_Ld", node.i_ld),
                ("V_r", node.v_ref),
            ];
            for (name, v) in positive {
                if !(v > 0.0 && v.is_finite()) {
                    r.push(format!("nodes[{i}].{name}"), format!("must be positive, got {v}"));
                }
            }
            if !(node.pi_u >= 0.0 && node.pi_u.is_finite()) {
                r.push(format!("nodes[{i}].pi_u"), format!("must be non-negative, got {}", node.pi_u));
            }
            if !(node.i_lq <= 0.0 && node.i_lq.is_finite()) {
                r.push(
                    format!("nodes[{i}].I_Lq"),
                    format!("loads absorb reactive power, so I_Lq must be <= 0, got {}", node.i_lq),
                );
            }
        }

        for (k, line) in self.lines.iter().enumerate() {
            for (name, v) in [("R_k", line.resistance), ("L_k", line.inductance)] {
                if !(v > 0.0 && v.is_finite()) {
                    r.push(format!("lines[{k}].{name}"), format!("must be positive, got {v}"));
                }
            }
        }

        let inc = &self.topology.incidence;
        if inc.nrows() != n || inc.ncols() != e {
            r.push(
                "incidence",
                format!("expected {n}x{e}, got {}x{}", inc.nrows(), inc.ncols()),
            );
        } else {
            for k in 0..e {
                let col = inc.column(k);
                let plus = col.iter().filter(|&&v| v == 1.0).count();
                let minus = col.iter().filter(|&&v| v == -1.0).count();
                let zero = col.iter().filter(|&&v| v == 0.0).count();
                if plus != 1 || minus != 1 || zero != n - 2 {
                    r.push(
                        format!("incidence[:,{k}]"),
                        format!("line {k} needs exactly one +1 and one -1, got {:?}", col.as_slice()),
                    );
                }
            }
        }

        let sw = &self.topology.social_weights;
        if sw.nrows() != n || sw.ncols() != n {
            r.push(
                "social_weights",
                format!("expected {n}x{n}, got {}x{}", sw.nrows(), sw.ncols()),
            );
        } else {
            for i in 0..n {
                for j in 0..n {
                    let v = sw[(i, j)];
                    if i == j && v != 0.0 {
                        r.push(format!("social_weights[{i}][{j}]"), "diagonal must be zero");
                    } else if !(v >= 0.0 && v.is_finite()) {
                        r.push(
                            format!("social_weights[{i}][{j}]"),
                            format!("must be non-negative, got {v}"),
                        );
                    }
                }
            }
        }

        let h = &self.human;
        for (name, v) in [("a", &h.a), ("c", &h.c), ("d", &h.d), ("p_ego", &h.p_ego), ("p_bio", &h.p_bio)] {
            if v.len() != n {
                r.push(format!("human.{name}"), format!("expected {n} entries, got {}", v.len()));
            }
        }
        for (i, &v) in h.a.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                r.push(format!("human.a[{i}]"), format!("must be positive, got {v}"));
            }
        }
        for (name, vals) in [("c", &h.c), ("d", &h.d)] {
            for (i, &v) in vals.iter().enumerate() {
                if !(v >= 0.0 && v.is_finite()) {
                    r.push(format!("human.{name}[{i}]"), format!("must be non-negative, got {v}"));
                }
            }
        }
        for (i, (c, d)) in h.c.iter().zip(&h.d).enumerate() {
            if !(c + d > 0.0) {
                r.push(format!("human.c[{i}]+d[{i}]"), "c + d must be positive");
            }
        }
        for (name, vals) in [("p_ego", &h.p_ego), ("p_bio", &h.p_bio)] {
            for (i, &v) in vals.iter().enumerate() {
                if !(0.0..=1.0).contains(&v) {
                    r.push(format!("human.{name}[{i}]"), format!("must lie in [0, 1], got {v}"));
                }
            }
        }
        if let Some(hv) = &h.h {
            if hv.len() != h.p_ego.len() || hv.iter().zip(&h.p_ego).any(|(a, b)| a != b) {
                r.push("human.h", "h is fixed to p_ego; remove it or make it identical");
            }
        }

        for (name, v) in [
            ("alpha", self.weights.alpha),
            ("beta", self.weights.beta),
            ("gamma", self.weights.gamma),
            ("delta", self.weights.delta),
            ("epsilon", self.weights.epsilon),
            ("eta", self.weights.eta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                r.push(format!("welfare_weights.{name}"), format!("must be positive, got {v}"));
            }
        }

        for (name, block) in GAIN_NAMES.iter().zip(self.gains.blocks()) {
            if block.len() != n {
                r.push(
                    format!("controller_gains.{name}"),
                    format!("expected {n} entries, got {}", block.len()),
                );
            }
            for (i, &v) in block.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    r.push(format!("controller_gains.{name}[{i}]"), format!("must be positive, got {v}"));
                }
            }
        }

        if !(self.constants.f0 > 0.0 && self.constants.f0.is_finite()) {
            r.push("constants.f_0", format!("must be positive, got {}", self.constants.f0));
        }

        if let Some(m) = &self.monitor {
            m.check(n, &mut r);
        }
        r
    }
}

/// Returns the parameters unchanged when every invariant holds.
pub fn validate(params: ScenarioParams) -> Result<ScenarioParams> {
    let report = params.check();
    if report.is_empty() {
        Ok(params)
    } else {
        Err(HpsError::Validation(report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::paper_table2;

    fn issues(p: &ScenarioParams) -> Vec<String> {
        p.check().issues.into_iter().map(|i| i.path).collect()
    }

    #[test]
    fn bundled_scenario_is_valid() {
        assert!(paper_table2().check().is_empty());
    }

    #[test]
    fn zero_filter_resistance_names_the_node_and_field() {
        let mut p = paper_table2();
        p.nodes[0].r_t = 0.0;
        assert_eq!(issues(&p), vec!["nodes[0].R_t".to_string()]);
    }

    #[test]
    fn every_violation_is_reported() {
        let mut p = paper_table2();
        p.nodes[2].c_t = -1.0;
        p.weights.eta = -1.0;
        p.gains.tau_e[1] = 0.0;
        let found = issues(&p);
        for path in ["nodes[2].C_t", "welfare_weights.eta", "controller_gains.tau_e[1]"] {
            assert!(found.iter().any(|f| f == path), "{path} missing from {found:?}");
        }
    }

    #[test]
    fn malformed_incidence_column() {
        let mut p = paper_table2();
        p.topology.incidence[(0, 1)] = 1.0;
        p.topology.incidence[(1, 1)] = 1.0;
        p.topology.incidence[(2, 1)] = 0.0;
        p.topology.incidence[(3, 1)] = 0.0;
        assert!(p.check().mentions("incidence[:,1]"));
    }

    #[test]
    fn incentive_gain_must_equal_ego_norm() {
        let mut p = paper_table2();
        let mut h = p.human.p_ego.clone();
        h[0] += 0.1;
        p.human.h = Some(h);
        assert!(p.check().mentions("human.h"));
        p.human.h = Some(p.human.p_ego.clone());
        assert!(p.check().is_empty());
    }

    #[test]
    fn reactive_load_sign() {
        let mut p = paper_table2();
        p.nodes[1].i_lq = 3.0;
        assert!(p.check().mentions("nodes[1].I_Lq"));
    }

    #[test]
    fn negative_social_weight_rejected() {
        let mut p = paper_table2();
        p.topology.social_weights[(0, 1)] = -0.2;
        assert!(p.check().mentions("social_weights[0][1]"));
    }

    #[test]
    fn json_round_trip() {
        let p = paper_table2();
        let text = serde_json::to_string(&p).unwrap();
        let back: ScenarioParams = serde_json::from_str(&text).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut doc: serde_json::Value = serde_json::to_value(paper_table2()).unwrap();
        doc["surprise"] = serde_json::json!(1);
        assert!(serde_json::from_value::<ScenarioParams>(doc).is_err());
    }
}
