//! Time stepping of `ẋ = M x + b`.
//!
//! Exact stepping uses the exponential of the augmented matrix
//! `[[M, b], [0, 0]] h`, whose top-right column is `∫₀ʰ e^{Ms} ds · b`.
//! Classical RK4 is kept as an independent cross-check for de-stiffened systems.

use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ClosedLoopSystem;
use crate::error::{HpsError, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ExactExp,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub t_final: f64,
    pub output_step: f64,
    pub method: Method,
    /// Only used by [`Method::Rk4`].
    pub rk4_step: f64,
    /// Stop once `‖Mx+b‖` falls below this; `None` means `1e-8 (1 + ‖b‖)`.
    pub convergence_tol: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            t_final: 60.0,
            output_step: 0.01,
            method: Method::ExactExp,
            rk4_step: 1e-7,
            convergence_tol: None,
        }
    }
}

impl SimConfig {
    pub fn check(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HpsError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("t_final", self.t_final)?;
        positive("output_step", self.output_step)?;
        positive("rk4_step", self.rk4_step)?;
        if let Some(tol) = self.convergence_tol {
            positive("convergence_tol", tol)?;
        }
        if self.output_step > self.t_final {
            return Err(HpsError::Config(format!(
                "output_step {} exceeds t_final {}",
                self.output_step, self.t_final
            )));
        }
        Ok(())
    }

    pub fn tolerance_for(&self, b: &DVector<f64>) -> f64 {
        self.convergence_tol.unwrap_or(1e-8 * (1.0 + b.norm()))
    }
}

/// Exact one-step map `x ↦ Φ x + γ` for a fixed step `h`.
#[derive(Debug, Clone)]
pub struct ExactStepper {
    pub h: f64,
    pub phi: DMatrix<f64>,
    pub gamma: DVector<f64>,
}

impl ExactStepper {
    pub fn new(m: &DMatrix<f64>, b: &DVector<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(HpsError::Config(format!("step must be positive, got {h}")));
        }
        let n = m.nrows();
        if m.ncols() != n || b.len() != n {
            return Err(HpsError::Dimension(format!("M is {}x{}, b has {}", m.nrows(), m.ncols(), b.len())));
        }
        let mut aug = DMatrix::zeros(n + 1, n + 1);
        aug.view_mut((0, 0), (n, n)).copy_from(&(m * h));
        aug.view_mut((0, n), (n, 1)).copy_from(&(b * h));
        let e = aug.exp();
        Ok(Self {
            h,
            phi: e.view((0, 0), (n, n)).into_owned(),
            gamma: e.view((0, n), (n, 1)).column(0).into_owned(),
        })
    }

    pub fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.phi * x + &self.gamma
    }
}

pub fn step_exact(sys: &ClosedLoopSystem, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    Ok(ExactStepper::new(&sys.m, &sys.b, h)?.step(x))
}

/// `|1 + z + z²/2 + z³/6 + z⁴/24|`, the RK4 amplification factor.
pub fn rk4_amplification(z: Complex<f64>) -> f64 {
    let z2 = z * z;
    let z3 = z2 * z;
    let z4 = z3 * z;
    (Complex::new(1.0, 0.0) + z + z2 / 2.0 + z3 / 6.0 + z4 / 24.0).norm()
}

/// Fixed-step RK4 for `ẋ = M x + b`, with the spectrum checked up front.
#[derive(Debug, Clone)]
pub struct Rk4Stepper {
    pub h: f64,
    m: DMatrix<f64>,
    b: DVector<f64>,
}

impl Rk4Stepper {
    /// Fails with [`HpsError::Rk4Unstable`] when some `hλ` leaves the stability region.
    pub fn new(m: &DMatrix<f64>, b: &DVector<f64>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(HpsError::Config(format!("step must be positive, got {h}")));
        }
        let eig = linalg::eigenvalues(m);
        // a little slack keeps purely imaginary modes of lossless blocks admissible
        let limiting = eig
            .iter()
            .map(|l| (*l, rk4_amplification(l * h)))
            .filter(|(_, g)| *g > 1.0 + 1e-12)
            .max_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((eigenvalue, _)) = limiting {
            return Err(HpsError::Rk4Unstable { step: h, eigenvalue });
        }
        Ok(Self {
            h,
            m: m.clone(),
            b: b.clone(),
        })
    }

    pub fn step(&self, x: &DVector<f64>) -> DVector<f64> {
        let f = |y: &DVector<f64>| &self.m * y + &self.b;
        let h = self.h;
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (h / 2.0)));
        let k3 = f(&(x + &k2 * (h / 2.0)));
        let k4 = f(&(x + &k3 * h));
        x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }
}

pub fn step_rk4(sys: &ClosedLoopSystem, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    Ok(Rk4Stepper::new(&sys.m, &sys.b, h)?.step(x))
}

/// Decimated samples of one run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `‖M x + b‖` at each sample.
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub convergence_tol: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least one sample")
    }

    /// First sample time after which coordinate `k` stays within
    /// `fraction · |x_k(0) - x_k(T)|` of its terminal value.
    pub fn settling_time(&self, k: usize, fraction: f64) -> f64 {
        let target = self.last_state()[k];
        let band = fraction * (self.states[0][k] - target).abs();
        let mut settled = self.final_time();
        for (t, x) in self.times.iter().zip(&self.states).rev() {
            if (x[k] - target).abs() > band {
                break;
            }
            settled = *t;
        }
        settled
    }

    /// CSV with header `t,<names>,residual[,<extra names>]`, 17 significant digits.
    pub fn to_csv(&self, names: &[String], extra: &[(String, Vec<f64>)]) -> Result<String> {
        if let Some(x) = self.states.first() {
            if x.len() != names.len() {
                return Err(HpsError::Dimension(format!("{} names for {} coordinates", names.len(), x.len())));
            }
        }
        if let Some((name, _)) = extra.iter().find(|(_, v)| v.len() != self.len()) {
            return Err(HpsError::Dimension(format!("monitor channel {name} has the wrong length")));
        }
        let mut out = String::from("t");
        for name in names.iter().chain(std::iter::once(&"residual".to_string())).chain(extra.iter().map(|(n, _)| n)) {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (row, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            write!(out, "{t:.16e}").unwrap();
            for v in x.iter() {
                write!(out, ",{v:.16e}").unwrap();
            }
            write!(out, ",{:.16e}", self.residuals[row]).unwrap();
            for (_, channel) in extra {
                write!(out, ",{:.16e}", channel[row]).unwrap();
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Integrates from `x0`, recording every `output_step` and stopping early on convergence.
pub fn simulate(sys: &ClosedLoopSystem, x0: &DVector<f64>, config: &SimConfig) -> Result<Trajectory> {
    config.check()?;
    if x0.len() != sys.dim() {
        return Err(HpsError::Dimension(format!("x0 has {} entries, expected {}", x0.len(), sys.dim())));
    }
    let tol = config.tolerance_for(&sys.b);
    let steps = (config.t_final / config.output_step).round().max(1.0) as usize;
    let dt = config.t_final / steps as f64;

    let advance: Box<dyn Fn(&DVector<f64>) -> DVector<f64>> = match config.method {
        Method::ExactExp => {
            let stepper = ExactStepper::new(&sys.m, &sys.b, dt)?;
            Box::new(move |x| stepper.step(x))
        }
        Method::Rk4 => {
            let sub = (dt / config.rk4_step).ceil().max(1.0) as usize;
            let stepper = Rk4Stepper::new(&sys.m, &sys.b, dt / sub as f64)?;
            Box::new(move |x| {
                let mut y = x.clone();
                for _ in 0..sub {
                    y = stepper.step(&y);
                }
                y
            })
        }
    };

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.clone()],
        residuals: vec![sys.residual_norm(x0)],
        converged: false,
        convergence_tol: tol,
    };
    if traj.residuals[0] < tol {
        traj.converged = true;
        return Ok(traj);
    }
    let mut x = x0.clone();
    for k in 1..=steps {
        x = advance(&x);
        let r = sys.residual_norm(&x);
        if !r.is_finite() {
            return Err(HpsError::Config(format!("state diverged at t = {}", k as f64 * dt)));
        }
        traj.times.push(k as f64 * dt);
        traj.states.push(x.clone());
        traj.residuals.push(r);
        if r < tol {
            traj.converged = true;
            break;
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct RateCluster {
    /// `floor(log10 |Re λ|)`.
    pub decade: i32,
    pub count: usize,
    pub min_rate: f64,
    pub max_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimescaleReport {
    pub clusters: Vec<RateCluster>,
    /// Largest decay rate `|Re λ|`.
    pub fastest: f64,
    /// Smallest nonzero decay rate.
    pub slowest: f64,
    pub stiffness_ratio: f64,
}

/// Groups the decay rates `|Re λ(M)|` by decade.
pub fn timescale_report(m: &DMatrix<f64>) -> TimescaleReport {
    let mut rates: Vec<f64> = linalg::eigenvalues(m)
        .iter()
        .map(|l| l.re.abs())
        .filter(|r| *r > 1e-12 * m.amax().max(1.0))
        .collect();
    rates.sort_by(f64::total_cmp);
    let mut clusters: Vec<RateCluster> = Vec::new();
    for r in &rates {
        let decade = r.log10().floor() as i32;
        match clusters.last_mut() {
            Some(c) if c.decade == decade => {
                c.count += 1;
                c.max_rate = *r;
            }
            _ => clusters.push(RateCluster {
                decade,
                count: 1,
                min_rate: *r,
                max_rate: *r,
            }),
        }
    }
    let fastest = rates.last().copied().unwrap_or(0.0);
    let slowest = rates.first().copied().unwrap_or(0.0);
    TimescaleReport {
        clusters,
        fastest,
        slowest,
        stiffness_ratio: if slowest > 0.0 { fastest / slowest } else { f64::INFINITY },
    }
}
