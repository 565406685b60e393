//! Scalar Riccati solution, certainty-equivalent feedback gain and the map
//! from time-averaged estimation error to LQG cost.

use thiserror::Error;

use crate::config::{ControlGainForm, SystemParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LqgError {
    #[error("unstabilizable: b = 0 with |a| = {a} ≥ 1")]
    Unstabilizable { a: f64 },
    #[error("Riccati equation has no finite nonnegative solution")]
    NoSolution,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqgSolution {
    /// Stabilising Riccati solution P.
    pub p_ric: f64,
    /// Feedback gain L in u = L·x̂.
    pub l_gain: f64,
    /// Initial-condition constant x0²P + σ_p²P.
    pub c0: f64,
    /// Weight multiplying the estimation error: L²(W + b²P).
    pub error_weight: f64,
}

impl LqgSolution {
    pub fn new(params: &SystemParams, form: ControlGainForm, x0: f64) -> Result<Self, LqgError> {
        let p_ric = solve_dare(params)?;
        let l_gain = control_gain(p_ric, params, form);
        Ok(Self {
            p_ric,
            l_gain,
            c0: (x0 * x0 + params.sigma_p2) * p_ric,
            error_weight: error_weight(p_ric, l_gain, params, form),
        })
    }

    /// |a + bL|
    pub fn closed_loop_pole(&self, params: &SystemParams) -> f64 {
        (params.a + params.b * self.l_gain).abs()
    }
}

/// Stabilising root of b²P² + [R(1−a²) − Qb²]P − QR = 0.
pub fn solve_dare(params: &SystemParams) -> Result<f64, LqgError> {
    let SystemParams {
        a,
        b,
        q_weight: q,
        r_weight: r,
        ..
    } = *params;
    let b2 = b * b;
    let lin = r * (1.0 - a * a) - q * b2;
    if b2 == 0.0 {
        // P = Q + a²P
        if a.abs() >= 1.0 {
            return Err(LqgError::Unstabilizable { a });
        }
        return Ok(q / (1.0 - a * a));
    }
    let disc = lin * lin + 4.0 * b2 * q * r;
    if !(disc >= 0.0) {
        return Err(LqgError::NoSolution);
    }
    let sq = disc.sqrt();
    // larger root, written to avoid cancellation when lin > 0
    let p = if lin <= 0.0 {
        (-lin + sq) / (2.0 * b2)
    } else {
        2.0 * q * r / (lin + sq)
    };
    if p.is_finite() && p >= 0.0 {
        Ok(p)
    } else {
        Err(LqgError::NoSolution)
    }
}

/// Riccati value iteration P ← Q + a²P − (abP)²/(R + b²P), from P = Q.
pub fn dare_by_iteration(params: &SystemParams, tol: f64, max_iter: usize) -> Option<f64> {
    let SystemParams {
        a,
        b,
        q_weight: q,
        r_weight: r,
        ..
    } = *params;
    let mut p = q;
    for _ in 0..max_iter {
        let next = q + a * a * p - (a * b * p).powi(2) / (r + b * b * p);
        if (next - p).abs() <= tol * next.abs().max(1e-300) {
            return Some(next);
        }
        p = next;
    }
    None
}

fn gain_weight(params: &SystemParams, form: ControlGainForm) -> f64 {
    match form {
        ControlGainForm::InputWeight => params.r_weight,
        ControlGainForm::StateWeight => params.q_weight,
    }
}

/// L = −abP/(W + b²P), W = R (or Q for the state-weight form).
pub fn control_gain(p_ric: f64, params: &SystemParams, form: ControlGainForm) -> f64 {
    let denom = gain_weight(params, form) + params.b * params.b * p_ric;
    if denom == 0.0 {
        return 0.0;
    }
    -params.a * params.b * p_ric / denom
}

fn error_weight(p_ric: f64, l_gain: f64, params: &SystemParams, form: ControlGainForm) -> f64 {
    l_gain * l_gain * (gain_weight(params, form) + params.b * params.b * p_ric)
}

/// J = c0 + L²(W + b²P)·J_E with the initial-condition constant c0 = x0²P + σ_p²P.
pub fn lqg_cost_from_je(j_e: f64, sol: &LqgSolution) -> f64 {
    sol.c0 + sol.error_weight * j_e
}

/// Expected time-averaged cost over `horizon` slots:
/// σ_p²P + x0²P/T + L²(W + b²P)·J_E.
///
/// The initial condition enters a time average only through x0²P/T; the
/// remaining O(1/T) boundary term −P·E[x²(T)]/T is dropped.
pub fn lqg_cost_time_average(j_e: f64, sol: &LqgSolution, params: &SystemParams, x0: f64, horizon: u64) -> f64 {
    let t = horizon.max(1) as f64;
    params.sigma_p2 * sol.p_ric + x0 * x0 * sol.p_ric / t + sol.error_weight * j_e
}

/// (1/T) Σ_t [Q·x²(t) + R·u²(t)]
pub fn empirical_lqg(x: &[f64], u: &[f64], params: &SystemParams) -> f64 {
    assert_eq!(x.len(), u.len(), "state and input traces must align");
    if x.is_empty() {
        return 0.0;
    }
    let total: f64 = x
        .iter()
        .zip(u)
        .map(|(x, u)| params.q_weight * x * x + params.r_weight * u * u)
        .sum();
    total / x.len() as f64
}
