//! Synthetic degradation trajectories and analytic oracles.

mod generate;
mod raw;

pub use generate::{generate_dataset, SynthConfig, SyntheticDataset, CHANNEL_COEFFS};
pub use raw::{generate_raw, RawConfig};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DataError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("non-finite rate at t = {t}, u = {u}")]
    NonFiniteRate { t: f64, u: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// `u(t) = C + (K - C) / (1 + A exp(-r t))` with `A = (K - u0) / (u0 - C)`.
pub fn logistic_closed_form(t: f64, r: f64, k: f64, c: f64, u0: f64) -> Result<f64, SynthError> {
    if !(c < u0 && u0 < k) {
        return Err(SynthError::InvalidParams(format!("need C < u0 < K, got C={c}, u0={u0}, K={k}")));
    }
    if t == 0.0 {
        return Ok(u0);
    }
    let a = (k - u0) / (u0 - c);
    Ok(c + (k - c) / (1.0 + a * (-r * t).exp()))
}

pub fn logistic_rate(u: f64, r: f64, k: f64, c: f64) -> f64 {
    let v = u - c;
    r * v * (1.0 - v / (k - c))
}

pub fn xu_rate(u: f64, theta: f64) -> f64 {
    theta * (1.0 - u)
}

pub fn exp_rate(u: f64, r: f64) -> f64 {
    r * u
}

/// Coefficients of the SEI-growth rate law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpModelParams {
    pub theta: [f64; 6],
    /// First evaluation time; the `t^(-1/2)` term is singular at 0.
    pub t1: f64,
}

impl Default for SpModelParams {
    fn default() -> Self {
        // fast early growth that settles into a slow, nearly linear trend
        SpModelParams { theta: [1.0, 1e-3, 0.5, 2e-3, 1e-4, 1e-6], t1: 1.0 }
    }
}

impl SpModelParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.theta.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidParams("theta must be finite".into()));
        }
        if self.theta[2] == 2.0 {
            return Err(SynthError::InvalidParams("theta3 must differ from 2".into()));
        }
        if !(self.t1 > 0.0) {
            return Err(SynthError::InvalidParams(format!("t1 must be positive, got {}", self.t1)));
        }
        Ok(())
    }

    fn exponent(&self) -> f64 {
        self.theta[2] / (2.0 - self.theta[2])
    }
}

/// Rate at `t` given the earlier evaluation times `history` (increasing, all `< t`).
pub fn sp_rate(t: f64, history: &[f64], p: &SpModelParams) -> Result<f64, SynthError> {
    p.validate()?;
    if !(t > 0.0) || t < p.t1 {
        return Err(SynthError::InvalidParams(format!("t = {t} is before t1 = {}", p.t1)));
    }
    for (i, w) in history.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(SynthError::InvalidParams(format!("history not increasing at index {}", i + 1)));
        }
    }
    if history.last().is_some_and(|&l| l >= t) {
        return Err(SynthError::InvalidParams(format!("history reaches t = {t}")));
    }
    let [t1, t2, _, t4, t5, t6] = p.theta;
    let e = p.exponent();
    let head = t1 * t5 * (1.0 + t2 * t).powf(e) + t4 / t.sqrt();
    let memory: f64 = history
        .iter()
        .map(|&tl| {
            let d = t - tl;
            (1.0 + t2 * d).powf(e) / d.sqrt()
        })
        .sum();
    Ok(head + t1 * t6 * memory)
}

/// Degradation law used to synthesise a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Generator {
    Logistic { r: f64, k: f64, c: f64, u0: f64 },
    Exponential { r: f64, u0: f64 },
    Xu { theta: f64, u0: f64 },
    Sp { params: SpModelParams, u0: f64 },
}

impl Default for Generator {
    fn default() -> Self {
        Generator::Logistic { r: 0.01, k: 0.5, c: 0.05, u0: 0.1 }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Logistic { r, k, c, u0 } => write!(f, "logistic(r={r}, K={k}, C={c}, u0={u0})"),
            Generator::Exponential { r, u0 } => write!(f, "exponential(r={r}, u0={u0})"),
            Generator::Xu { theta, u0 } => write!(f, "xu(theta={theta}, u0={u0})"),
            Generator::Sp { params, u0 } => write!(f, "sp(theta={:?}, t1={}, u0={u0})", params.theta, params.t1),
        }
    }
}

impl Generator {
    pub fn validate(&self) -> Result<(), SynthError> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(SynthError::InvalidParams(format!("{what} in {self}")))
            }
        };
        match self {
            Generator::Logistic { r, k, c, u0 } => {
                check(*r > 0.0 && r.is_finite(), "r must be positive")?;
                check(*c >= 0.0 && c < u0 && u0 < k && *k < 1.0, "need 0 <= C < u0 < K < 1")
            }
            Generator::Exponential { r, u0 } => {
                check(*r > 0.0 && r.is_finite(), "r must be positive")?;
                check(*u0 > 0.0 && *u0 < 1.0, "u0 must lie in (0, 1)")
            }
            Generator::Xu { theta, u0 } => {
                check(*theta > 0.0 && theta.is_finite(), "theta must be positive")?;
                check(*u0 >= 0.0 && *u0 < 1.0, "u0 must lie in [0, 1)")
            }
            Generator::Sp { params, u0 } => {
                params.validate()?;
                check(params.theta.iter().all(|&v| v >= 0.0), "theta must be non-negative")?;
                check(*u0 >= 0.0 && *u0 < 1.0, "u0 must lie in [0, 1)")
            }
        }
    }

    pub fn u0(&self) -> f64 {
        match self {
            Generator::Logistic { u0, .. }
            | Generator::Exponential { u0, .. }
            | Generator::Xu { u0, .. }
            | Generator::Sp { u0, .. } => *u0,
        }
    }

    /// Same law with its rate constant multiplied by `factor`.
    pub fn with_rate_factor(&self, factor: f64) -> Generator {
        let mut g = self.clone();
        match &mut g {
            Generator::Logistic { r, .. } | Generator::Exponential { r, .. } => *r *= factor,
            Generator::Xu { theta, .. } => *theta *= factor,
            Generator::Sp { params, .. } => params.theta[0] *= factor,
        }
        g
    }

    /// Analytic solution at time `t` (from `u(0) = u0`); `None` for the SP law.
    pub fn closed_form(&self, t: f64) -> Option<f64> {
        match *self {
            Generator::Logistic { r, k, c, u0 } => logistic_closed_form(t, r, k, c, u0).ok(),
            Generator::Exponential { r, u0 } => Some(u0 * (r * t).exp()),
            Generator::Xu { theta, u0 } => Some(1.0 - (1.0 - u0) * (-theta * t).exp()),
            Generator::Sp { .. } => None,
        }
    }

    /// Autonomous rate `du/dt`; `None` for the history-dependent SP law.
    pub fn rate(&self, u: f64) -> Option<f64> {
        match *self {
            Generator::Logistic { r, k, c, .. } => Some(logistic_rate(u, r, k, c)),
            Generator::Exponential { r, .. } => Some(exp_rate(u, r)),
            Generator::Xu { theta, .. } => Some(xu_rate(u, theta)),
            Generator::Sp { .. } => None,
        }
    }

    /// Noiseless values at integer cycles `1..=cycles`, stopping early once
    /// the capacity would be exhausted (`u >= 1`).
    pub fn trajectory(&self, cycles: u32) -> Result<Trajectory, SynthError> {
        self.validate()?;
        let mut times = Vec::with_capacity(cycles as usize);
        let mut values = Vec::with_capacity(cycles as usize);
        match self {
            Generator::Sp { params, u0 } => {
                let mut u = *u0;
                let mut history: Vec<f64> = Vec::new();
                for k in 1..=cycles {
                    let t = params.t1 + f64::from(k - 1);
                    if k > 1 {
                        u += sp_rate(t, &history, params)?;
                    }
                    if u >= 1.0 {
                        break;
                    }
                    times.push(f64::from(k));
                    values.push(u);
                    history.push(t);
                }
            }
            _ => {
                for k in 1..=cycles {
                    let t = f64::from(k);
                    let u = self.closed_form(t).expect("closed form exists for ODE laws");
                    if u >= 1.0 {
                        break;
                    }
                    times.push(t);
                    values.push(u);
                }
            }
        }
        Ok(Trajectory { times, values, generator: self.to_string(), noise_std: 0.0 })
    }
}

/// Sampled solution; times strictly increase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub generator: String,
    pub noise_std: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_abs_error(&self, exact: impl Fn(f64) -> f64) -> f64 {
        self.times.iter().zip(&self.values).map(|(&t, &u)| (u - exact(t)).abs()).fold(0.0, f64::max)
    }
}

/// Classical fourth-order Runge-Kutta for `du/dt = rate(t, u)` over `span`.
///
/// Takes `ceil(span / step)` steps; the last one is shortened to land on the
/// end point.
pub fn rk4_integrate<F>(rate: F, u_start: f64, span: (f64, f64), step: f64) -> Result<Trajectory, SynthError>
where
    F: Fn(f64, f64) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(SynthError::InvalidStep(step));
    }
    let (t0, t1) = span;
    if !(t1 > t0) {
        return Err(SynthError::InvalidParams(format!("empty span [{t0}, {t1}]")));
    }
    let eval = |t: f64, u: f64| {
        let v = rate(t, u);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(SynthError::NonFiniteRate { t, u })
        }
    };
    let n = ((t1 - t0) / step * (1.0 - 1e-12)).ceil() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let (mut t, mut u) = (t0, u_start);
    times.push(t);
    values.push(u);
    for i in 0..n {
        let next = if i + 1 == n { t1 } else { t0 + (i + 1) as f64 * step };
        let h = next - t;
        let k1 = eval(t, u)?;
        let k2 = eval(t + h / 2.0, u + h / 2.0 * k1)?;
        let k3 = eval(t + h / 2.0, u + h / 2.0 * k2)?;
        let k4 = eval(t + h, u + h * k3)?;
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = next;
        times.push(t);
        values.push(u);
    }
    Ok(Trajectory { times, values, generator: "rk4".into(), noise_std: 0.0 })
}

/// Least-squares slope of `log(error)` against `log(step)`.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let xb = xs.iter().sum::<f64>() / n;
    let yb = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xb) * (y - yb)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xb).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests;
