//! Fits the welfare weights to the reference steady values.
//!
//! `α` is fixed to one (the objective is scale free). The remaining five weights
//! are searched in log space: a coarse grid first, then a compass search from
//! the best grid point. The loss combines the incentive and behavior vectors of
//! the bundled scenario with the generated currents when prosumer 4 has
//! `π_c = 100`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{HpsError, Result};
use crate::kkt::assemble_kkt;
use crate::model::{HpsModel, ScenarioParams, WelfareWeights};
use crate::scenario::reference_values as rv;

/// Loss scales: absolute on `s̄` and `z̄_l`, relative on `Ī_td`.
pub const S_SCALE: f64 = 0.01;
pub const Z_SCALE: f64 = 0.005;
pub const I_TD_RELATIVE: f64 = 0.1;
/// Weight of the log-space ridge `Σ (log₁₀ w)²`. It only matters along
/// directions where the data term is flat, pulling those weights towards one.
pub const RIDGE: f64 = 1e-2;
/// Default search box in `log₁₀` units. The upper end keeps the fastest
/// controller rate `max(ε, η)/τ` near the electrical time scales; beyond it the
/// closed loop becomes too stiff and ill-conditioned to solve reliably.
pub const LOG_LO: f64 = -4.0;
pub const LOG_HI: f64 = 4.0;
pub const GRID_POINTS: usize = 9;
/// Grid points refined by the compass search.
pub const STARTS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationResult {
    pub weights: WelfareWeights,
    pub loss: f64,
    pub s: Vec<f64>,
    pub z_l: Vec<f64>,
    pub i_td_sweep: Vec<f64>,
    pub evaluations: usize,
}

fn with_weights(base: &ScenarioParams, w: WelfareWeights) -> ScenarioParams {
    let mut p = base.clone();
    p.weights = w;
    p
}

fn weights_from_log(log_w: &[f64; 5]) -> WelfareWeights {
    let e = |k: usize| 10f64.powf(log_w[k]);
    WelfareWeights::from_array([1.0, e(0), e(1), e(2), e(3), e(4)])
}

fn kkt_vector(model: &HpsModel) -> Result<DVector<f64>> {
    let (a, r) = assemble_kkt(model, &model.p_bar)?;
    a.lu().solve(&r).ok_or_else(|| HpsError::Singular {
        context: "KKT system".into(),
        condition: f64::INFINITY,
    })
}

/// Steady `(s̄, z̄_l)` for the base scenario and `Ī_td` with `π_c4 = 100`.
///
/// Uses a bare LU solve: the search evaluates this ~10⁵ times and does not
/// need the residual and duality diagnostics of [`crate::kkt::solve_kkt`].
pub fn predictions(base: &ScenarioParams, w: WelfareWeights) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let params = with_weights(base, w);
    let model = HpsModel::new(params.clone())?;
    let n = model.n();
    let x = kkt_vector(&model)?;
    let mut sweep = params;
    if let Some(last) = sweep.nodes.last_mut() {
        last.pi_c = 100.0;
    }
    let y = kkt_vector(&HpsModel::new(sweep)?)?;
    let block = |v: &DVector<f64>, k: usize| v.rows(k * n, n).iter().copied().collect::<Vec<_>>();
    Ok((block(&x, 6), block(&x, 0), block(&y, 1)))
}

pub fn loss(base: &ScenarioParams, w: WelfareWeights) -> f64 {
    let Ok((s, z, i_td)) = predictions(base, w) else {
        return f64::INFINITY;
    };
    let mut l = 0.0;
    for i in 0..s.len().min(4) {
        l += ((s[i] - rv::S_BAR[i]) / S_SCALE).powi(2);
        l += ((z[i] - rv::Z_L_CASE_I[i]) / Z_SCALE).powi(2);
        let r = rv::I_TD_PI_C4_100[i];
        l += ((i_td[i] - r) / (I_TD_RELATIVE * r)).powi(2);
    }
    l += RIDGE * w.as_array().iter().map(|v| v.log10().powi(2)).sum::<f64>();
    if l.is_finite() {
        l
    } else {
        f64::INFINITY
    }
}

/// Grid over `10^{lo..hi}` with `points` values per weight, then compass
/// search restricted to the same box.
pub fn calibrate(base: &ScenarioParams, lo: f64, hi: f64, points: usize) -> Result<CalibrationResult> {
    let mut evaluations = 0;
    let mut eval = |x: &[f64; 5]| {
        evaluations += 1;
        loss(base, weights_from_log(x))
    };

    let axis: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points.max(2) - 1) as f64)
        .collect();
    let mut ranked: Vec<([f64; 5], f64)> = Vec::with_capacity(axis.len().pow(5));
    for flat in 0..axis.len().pow(5) {
        let mut x = [0.0; 5];
        let mut rest = flat;
        for xi in &mut x {
            *xi = axis[rest % axis.len()];
            rest /= axis.len();
        }
        let l = eval(&x);
        ranked.push((x, l));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    log::info!("grid best loss {:.4e} at {:?}", ranked[0].1, ranked[0].0);

    // compass search inside the box from the best few grid points
    let mut best = ([0.0; 5], f64::INFINITY);
    for &(start, f_start) in ranked.iter().take(STARTS) {
        let (mut x, mut fx) = (start, f_start);
        let mut step = (hi - lo) / (points.max(2) - 1) as f64;
        while step > 1e-7 {
            let mut improved = false;
            for k in 0..5 {
                for dir in [1.0, -1.0] {
                    let mut y = x;
                    y[k] = (y[k] + dir * step).clamp(lo, hi);
                    if y[k] == x[k] {
                        continue;
                    }
                    let fy = eval(&y);
                    if fy < fx {
                        x = y;
                        fx = fy;
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        if fx < best.1 {
            best = (x, fx);
        }
    }
    let (x, fx) = best;

    let weights = weights_from_log(&x);
    let (s, z_l, i_td_sweep) = predictions(base, weights)?;
    Ok(CalibrationResult {
        weights,
        loss: fx,
        s,
        z_l,
        i_td_sweep,
        evaluations,
    })
}

/// Loss contributions broken out per target, useful for reports.
pub fn mismatch(values: &[f64], target: &[f64]) -> DVector<f64> {
    DVector::from_iterator(values.len(), values.iter().zip(target).map(|(v, t)| v - t))
}
