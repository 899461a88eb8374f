use std::ops::Range;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{HpsError, Result};

pub const PLANT_BLOCKS: [&str; 8] = ["V_d", "V_q", "I_td", "I_tq", "I_d", "I_q", "z_l", "p"];
pub const CONTROLLER_BLOCKS: [&str; 12] = [
    "z_l*", "I_td*", "I_tq*", "u_d*", "u_q*", "V_d*", "s*", "lambda_a", "lambda_b", "lambda_c", "lambda_d",
    "lambda_e",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateBlock {
    pub name: String,
    pub start: usize,
    pub len: usize,
}

impl StateBlock {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// Named slices of the concatenated closed-loop state `[plant; controller]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StateLayout {
    pub n_nodes: usize,
    pub n_lines: usize,
    pub blocks: Vec<StateBlock>,
}

impl StateLayout {
    pub fn new(n_nodes: usize, n_lines: usize) -> Self {
        let mut blocks = Vec::with_capacity(20);
        let mut start = 0;
        for name in PLANT_BLOCKS {
            let len = if name == "I_d" || name == "I_q" { n_lines } else { n_nodes };
            blocks.push(StateBlock {
                name: name.to_string(),
                start,
                len,
            });
            start += len;
        }
        for name in CONTROLLER_BLOCKS {
            blocks.push(StateBlock {
                name: name.to_string(),
                start,
                len: n_nodes,
            });
            start += n_nodes;
        }
        Self {
            n_nodes,
            n_lines,
            blocks,
        }
    }

    /// `18N + 2E`.
    pub fn dim(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.start + b.len)
    }

    pub fn plant_dim(&self) -> usize {
        6 * self.n_nodes + 2 * self.n_lines
    }

    pub fn range(&self, name: &str) -> Range<usize> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .unwrap_or_else(|| panic!("unknown state block `{name}`"))
            .range()
    }

    /// One name per coordinate, `V_d_1 ... lambda_e_N`, 1-based.
    pub fn coordinate_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| (1..=b.len).map(move |i| format!("{}_{}", b.name, i)))
            .collect()
    }
}

/// Grid, behavior and personal-norm state.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub v_d: DVector<f64>,
    pub v_q: DVector<f64>,
    pub i_td: DVector<f64>,
    pub i_tq: DVector<f64>,
    pub i_d: DVector<f64>,
    pub i_q: DVector<f64>,
    pub z_l: DVector<f64>,
    pub p: DVector<f64>,
}

impl PlantState {
    pub fn zeros(n: usize, e: usize) -> Self {
        Self {
            v_d: DVector::zeros(n),
            v_q: DVector::zeros(n),
            i_td: DVector::zeros(n),
            i_tq: DVector::zeros(n),
            i_d: DVector::zeros(e),
            i_q: DVector::zeros(e),
            z_l: DVector::zeros(n),
            p: DVector::zeros(n),
        }
    }

    pub fn blocks(&self) -> [&DVector<f64>; 8] {
        [&self.v_d, &self.v_q, &self.i_td, &self.i_tq, &self.i_d, &self.i_q, &self.z_l, &self.p]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        let data: Vec<f64> = self.blocks().iter().flat_map(|b| b.iter().copied()).collect();
        DVector::from_vec(data)
    }

    pub fn from_slice(n: usize, e: usize, x: &[f64]) -> Result<Self> {
        if x.len() < 6 * n + 2 * e {
            return Err(HpsError::Dimension(format!(
                "plant state needs {} entries, got {}",
                6 * n + 2 * e,
                x.len()
            )));
        }
        let mut at = 0;
        let mut take = |len: usize| {
            let v = DVector::from_column_slice(&x[at..at + len]);
            at += len;
            v
        };
        Ok(Self {
            v_d: take(n),
            v_q: take(n),
            i_td: take(n),
            i_tq: take(n),
            i_d: take(e),
            i_q: take(e),
            z_l: take(n),
            p: take(n),
        })
    }

    pub fn check_dims(&self, n: usize, e: usize) -> Result<()> {
        let expected = [n, n, n, n, e, e, n, n];
        for ((name, block), len) in PLANT_BLOCKS.iter().zip(self.blocks()).zip(expected) {
            if block.len() != len {
                return Err(HpsError::Dimension(format!("plant block {name} has {} entries, expected {len}", block.len())));
            }
        }
        Ok(())
    }
}

/// Primal-dual controller state: seven optimization variables and five multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub z_l: DVector<f64>,
    pub i_td: DVector<f64>,
    pub i_tq: DVector<f64>,
    pub u_d: DVector<f64>,
    pub u_q: DVector<f64>,
    pub v_d: DVector<f64>,
    pub s: DVector<f64>,
    pub lambda_a: DVector<f64>,
    pub lambda_b: DVector<f64>,
    pub lambda_c: DVector<f64>,
    pub lambda_d: DVector<f64>,
    pub lambda_e: DVector<f64>,
}

impl ControllerState {
    pub fn zeros(n: usize) -> Self {
        Self::from_blocks(std::array::from_fn(|_| DVector::zeros(n)))
    }

    pub fn from_blocks(b: [DVector<f64>; 12]) -> Self {
        let [z_l, i_td, i_tq, u_d, u_q, v_d, s, lambda_a, lambda_b, lambda_c, lambda_d, lambda_e] = b;
        Self {
            z_l,
            i_td,
            i_tq,
            u_d,
            u_q,
            v_d,
            s,
            lambda_a,
            lambda_b,
            lambda_c,
            lambda_d,
            lambda_e,
        }
    }

    pub fn blocks(&self) -> [&DVector<f64>; 12] {
        [
            &self.z_l,
            &self.i_td,
            &self.i_tq,
            &self.u_d,
            &self.u_q,
            &self.v_d,
            &self.s,
            &self.lambda_a,
            &self.lambda_b,
            &self.lambda_c,
            &self.lambda_d,
            &self.lambda_e,
        ]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(self.blocks().iter().flat_map(|b| b.iter().copied()).collect())
    }

    pub fn from_slice(n: usize, x: &[f64]) -> Result<Self> {
        if x.len() < 12 * n {
            return Err(HpsError::Dimension(format!("controller state needs {} entries, got {}", 12 * n, x.len())));
        }
        Ok(Self::from_blocks(std::array::from_fn(|k| {
            DVector::from_column_slice(&x[k * n..(k + 1) * n])
        })))
    }

    pub fn check_dims(&self, n: usize) -> Result<()> {
        for (name, block) in CONTROLLER_BLOCKS.iter().zip(self.blocks()) {
            if block.len() != n {
                return Err(HpsError::Dimension(format!("controller block {name} has {} entries, expected {n}", block.len())));
            }
        }
        Ok(())
    }
}

/// Splits a closed-loop state vector into its plant and controller parts.
pub fn split_state(layout: &StateLayout, x: &DVector<f64>) -> Result<(PlantState, ControllerState)> {
    if x.len() != layout.dim() {
        return Err(HpsError::Dimension(format!("state has {} entries, expected {}", x.len(), layout.dim())));
    }
    let np = layout.plant_dim();
    let plant = PlantState::from_slice(layout.n_nodes, layout.n_lines, &x.as_slice()[..np])?;
    let ctrl = ControllerState::from_slice(layout.n_nodes, &x.as_slice()[np..])?;
    Ok((plant, ctrl))
}

pub fn join_state(plant: &PlantState, ctrl: &ControllerState) -> DVector<f64> {
    let mut v: Vec<f64> = plant.to_vector().iter().copied().collect();
    v.extend(ctrl.to_vector().iter());
    DVector::from_vec(v)
}
