//! Mean-square estimation error as a function of the age and noise-variance
//! processes of the received observations.
//!
//! The error obeys
//!
//! ```text
//! E[e²(t)] = a²(1 − k(t))² E[e²(t−1)] + f(t)
//! f(t)     = C_p + C_s + C_e
//! ```
//!
//! where `C_p` collects process noise that the delayed observation cannot
//! see, `C_s` is the propagated observation noise, and `C_e` is the
//! correlation between e(t−1) and the process noise re-injected by the
//! delayed update. [`CoreFunction`] evaluates `f` over an arbitrary realised
//! history; [`f_corollary1`] is the closed form for a constant gain and
//! [`f_prior_baseline`] is the same closed form without `C_e`.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::config::SystemParams;
use crate::history::{Lookback, ReceptionRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("reception history is empty")]
    EmptyHistory,
    #[error("age {age} needs {needed} earlier slots of history, only {available} available")]
    InsufficientHistory {
        age: u32,
        needed: usize,
        available: usize,
    },
    #[error("constant-gain closed form requires |a(1−k)|<1 (a = {a}, k = {k})")]
    UnstableGain { a: f64, k: f64 },
    #[error("constant-gain closed form is singular for a = {a}, k = {k}")]
    SingularClosedForm { a: f64, k: f64 },
}

/// The three additive parts of the core function and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CoreFunctionBreakdown {
    pub c_p: f64,
    pub c_s: f64,
    pub c_e: f64,
    pub f: f64,
}

impl CoreFunctionBreakdown {
    pub fn new(c_p: f64, c_s: f64, c_e: f64) -> Self {
        Self {
            c_p,
            c_s,
            c_e,
            f: c_p + c_s + c_e,
        }
    }

    /// Value of the functional that omits the correlation term.
    pub fn without_correlation(&self) -> f64 {
        self.c_p + self.c_s
    }

    fn prediction_only(sigma_p2: f64) -> Self {
        Self::new(sigma_p2, 0.0, 0.0)
    }
}

/// Coefficients of the one-step error as a function of the current gain:
/// `E(k) = constant + carry·(1−k)² + direct·k² + cross·k(1−k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainQuadratic {
    pub constant: f64,
    pub carry: f64,
    pub direct: f64,
    pub cross: f64,
}

impl GainQuadratic {
    pub fn eval(&self, k: f64) -> f64 {
        self.constant + self.carry * (1.0 - k) * (1.0 - k) + self.direct * k * k + self.cross * k * (1.0 - k)
    }

    /// Second derivative halved; the quadratic is strictly convex iff positive.
    pub fn curvature(&self) -> f64 {
        self.carry + self.direct - self.cross
    }

    /// Vertex of the parabola, `None` when the curvature vanishes.
    pub fn minimizer(&self) -> Option<f64> {
        let c = self.curvature();
        let scale = self.carry.abs() + self.direct.abs() + self.cross.abs();
        if c <= 1e-14 * scale.max(f64::MIN_POSITIVE) || c <= 0.0 {
            return None;
        }
        Some((self.carry - 0.5 * self.cross) / c)
    }
}

/// Newest record viewed one slot back: `back(0)` is the record before the newest.
struct Previous<'a, L: ?Sized>(&'a L);

impl<L: Lookback + ?Sized> Lookback for Previous<'_, L> {
    #[inline]
    fn back(&self, n: usize) -> Option<&ReceptionRecord> {
        self.0.back(n + 1)
    }

    #[inline]
    fn depth(&self) -> usize {
        self.0.depth().saturating_sub(1)
    }
}

/// Evaluator for the core function with cached powers of `a`.
#[derive(Debug, Clone)]
pub struct CoreFunction {
    params: SystemParams,
    /// a^i
    pow: Vec<f64>,
    /// Σ_{l=1}^{j} a^{2l}
    sq_sum: Vec<f64>,
}

impl CoreFunction {
    /// Tables cover ages up to `max_age`; larger ages fall back to direct evaluation.
    pub fn new(params: SystemParams, max_age: u32) -> Self {
        let max_age = max_age as usize + 2;
        let a = params.a;
        let mut pow = Vec::with_capacity(2 * max_age + 1);
        let mut p = 1.0;
        for _ in 0..=2 * max_age {
            pow.push(p);
            p *= a;
        }
        let sq_sum = (0..=max_age)
            .scan(NeumaierSum::default(), |acc, j| {
                if j > 0 {
                    acc.add(pow[2 * j]);
                }
                Some(acc.value())
            })
            .collect();
        Self { params, pow, sq_sum }
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    #[inline]
    fn a_pow(&self, i: usize) -> f64 {
        match self.pow.get(i) {
            Some(&v) => v,
            None => self.params.a.powi(i as i32),
        }
    }

    #[inline]
    fn sq_sum(&self, j: usize) -> f64 {
        match self.sq_sum.get(j) {
            Some(&v) => v,
            None => {
                let mut acc = NeumaierSum::default();
                for l in 1..=j {
                    acc.add(self.a_pow(2 * l));
                }
                acc.value()
            }
        }
    }

    /// Correlation coefficient `X` with `C_e = k(1−k)·X` for a reception of
    /// age `age` arriving right after `before`.
    fn cross_coefficient<L: Lookback + ?Sized>(&self, before: &L, age: u32) -> Result<f64, AnalyticsError> {
        let tau = age as usize;
        if tau < 2 {
            return Ok(0.0);
        }
        if before.back(tau - 2).is_none() {
            return Err(AnalyticsError::InsufficientHistory {
                age,
                needed: tau - 1,
                available: before.depth(),
            });
        }
        let a = self.params.a;
        let rec = |j: usize| before.back(j).expect("depth checked");
        let alpha = |r: &ReceptionRecord| a * (1.0 - r.effective_gain());

        // Σ_{l=2}^{τ} a^{l} Π_{j=1}^{l−2} α(t−j) · c(t−l+1)
        let mut first = 0.0;
        let mut prod = 1.0;
        for l in 2..=tau {
            if l >= 3 {
                prod *= alpha(rec(l - 3));
            }
            first += self.a_pow(l) * prod * rec(l - 2).fresh_noise_coefficient();
        }

        // Σ_{n=1}^{τ−2} k(t−n) a Π_{j=1}^{n−1} α(t−j) · a^n Σ_{l=1}^{m−1} a^{2l},
        // m = min(τ−n, τ(t−n))
        let mut second = 0.0;
        let mut prod = 1.0;
        for n in 1..=tau.saturating_sub(2) {
            if n >= 2 {
                prod *= alpha(rec(n - 2));
            }
            let r = rec(n - 1);
            let k_n = r.effective_gain();
            if k_n == 0.0 {
                continue;
            }
            let m = (tau - n).min(r.age as usize);
            if m < 2 {
                continue;
            }
            second += k_n * a * prod * self.a_pow(n) * self.sq_sum(m - 1);
        }
        Ok(2.0 * self.params.sigma_p2 * (first + second))
    }

    /// One-step error as a quadratic in the gain applied at the new slot.
    pub fn gain_quadratic<L: Lookback + ?Sized>(
        &self,
        before: &L,
        age: u32,
        noise_var: f64,
        prev_ms_error: f64,
    ) -> Result<GainQuadratic, AnalyticsError> {
        let sp = self.params.sigma_p2;
        let a2m = self.params.a * self.params.a * prev_ms_error;
        let tau = age as usize;
        let (constant, carry) = if tau == 0 { (0.0, a2m + sp) } else { (sp, a2m) };
        let direct = sp * self.sq_sum(tau.saturating_sub(1)) + self.a_pow(2 * tau) * noise_var;
        Ok(GainQuadratic {
            constant,
            carry,
            direct,
            cross: self.cross_coefficient(before, age)?,
        })
    }

    /// Core function for a hypothetical reception `(age, noise_var, gain)`
    /// arriving right after the records in `before`.
    pub fn evaluate_next<L: Lookback + ?Sized>(
        &self,
        before: &L,
        age: u32,
        noise_var: f64,
        gain: f64,
    ) -> Result<CoreFunctionBreakdown, AnalyticsError> {
        let sp = self.params.sigma_p2;
        if gain == 0.0 {
            return Ok(CoreFunctionBreakdown::prediction_only(sp));
        }
        let tau = age as usize;
        let k2 = gain * gain;
        let c = if tau == 0 { 1.0 - gain } else { 1.0 };
        let c_p = c * c * sp + k2 * sp * self.sq_sum(tau.saturating_sub(1));
        let c_s = k2 * self.a_pow(2 * tau) * noise_var;
        let c_e = gain * (1.0 - gain) * self.cross_coefficient(before, age)?;
        Ok(CoreFunctionBreakdown::new(c_p, c_s, c_e))
    }

    /// Core function at the newest slot of `history`.
    pub fn evaluate<L: Lookback + ?Sized>(&self, history: &L) -> Result<CoreFunctionBreakdown, AnalyticsError> {
        let cur = history.back(0).ok_or(AnalyticsError::EmptyHistory)?;
        if !cur.updated {
            return Ok(CoreFunctionBreakdown::prediction_only(self.params.sigma_p2));
        }
        self.evaluate_next(&Previous(history), cur.age, cur.noise_var, cur.gain)
    }
}

/// Core function at the newest slot of `history` for an arbitrary gain process.
pub fn f_theorem1<L: Lookback + ?Sized>(
    history: &L,
    params: &SystemParams,
) -> Result<CoreFunctionBreakdown, AnalyticsError> {
    let age = history.back(0).map_or(0, |r| r.age);
    CoreFunction::new(*params, age).evaluate(history)
}

fn check_constant_gain(params: &SystemParams, k: f64) -> Result<(), AnalyticsError> {
    let a = params.a;
    if !((a * (1.0 - k)).abs() < 1.0) {
        return Err(AnalyticsError::UnstableGain { a, k });
    }
    let a2 = a * a;
    if (a2 - 1.0).abs() < 1e-12 || (a2 * (1.0 - k) - 1.0).abs() < 1e-12 {
        return Err(AnalyticsError::SingularClosedForm { a, k });
    }
    Ok(())
}

/// Closed-form core function for a constant gain `k`.
///
/// `before` supplies the ages τ(t−n) of the earlier receptions (newest
/// first); their recorded gains are ignored and taken to be `k`.
pub fn f_corollary1<L: Lookback + ?Sized>(
    tau_now: u32,
    noise_var: f64,
    before: &L,
    k: f64,
    params: &SystemParams,
) -> Result<CoreFunctionBreakdown, AnalyticsError> {
    check_constant_gain(params, k)?;
    let sp = params.sigma_p2;
    let a2 = params.a * params.a;
    let tau = tau_now as i32;
    let k2 = k * k;
    if tau == 0 {
        return Ok(CoreFunctionBreakdown::new(
            (1.0 - k) * (1.0 - k) * sp,
            k2 * noise_var,
            0.0,
        ));
    }
    let tau_u = tau_now as usize;
    if tau_u >= 2 && before.back(tau_u - 2).is_none() {
        return Err(AnalyticsError::InsufficientHistory {
            age: tau_now,
            needed: tau_u - 1,
            available: before.depth(),
        });
    }
    let beta = a2 * (1.0 - k);
    let a2tau = a2.powi(tau);

    let c_p = k2 * sp * (a2tau - a2) / (a2 - 1.0) + sp;
    let c_s = k2 * noise_var * a2tau;

    let mut c_e = 2.0 * (beta.powi(tau) - beta) * k * sp / (beta - 1.0);
    // zero-age updates in the lookback filter their own fresh process noise
    for l in 2..=tau_u {
        if before.back(l - 2).is_some_and(|r| r.age == 0) {
            c_e -= 2.0 * k2 * sp * beta.powi(l as i32 - 1);
        }
    }
    for n in 1..=tau_u.saturating_sub(2) {
        let prev_age = before.back(n - 1).map_or(0, |r| r.age as usize);
        let m = (tau_u - n).min(prev_age).max(1) as i32;
        c_e += 2.0 * k2 * sp * beta.powi(n as i32) / (a2 - 1.0) * (a2.powi(m) - a2);
    }
    Ok(CoreFunctionBreakdown::new(c_p, c_s, c_e))
}

/// Constant-gain closed form restricted to `C_p + C_s`.
pub fn f_prior_baseline<L: Lookback + ?Sized>(
    tau_now: u32,
    noise_var: f64,
    before: &L,
    k: f64,
    params: &SystemParams,
) -> Result<CoreFunctionBreakdown, AnalyticsError> {
    let full = f_corollary1(tau_now, noise_var, before, k, params)?;
    Ok(CoreFunctionBreakdown::new(full.c_p, full.c_s, 0.0))
}

/// E[e²(t)] = a²(1−k)²·E[e²(t−1)] + f
#[inline]
pub fn error_recursion_step(prev_ms_error: f64, f: f64, k: f64, params: &SystemParams) -> f64 {
    let alpha = params.a * (1.0 - k);
    alpha * alpha * prev_ms_error + f
}

/// Per-slot mean-square errors over a history and their time average.
#[derive(Debug, Clone, PartialEq)]
pub struct JeEvaluation {
    pub breakdown: Vec<CoreFunctionBreakdown>,
    pub ms_error: Vec<f64>,
    pub mean: f64,
}

/// Runs the error recursion over `records` (consecutive slots, oldest first)
/// starting from `initial_ms_error` and averages the per-slot errors.
pub fn j_e_time_average(
    records: &[ReceptionRecord],
    params: &SystemParams,
    initial_ms_error: f64,
) -> Result<JeEvaluation, AnalyticsError> {
    let max_age = records.iter().map(|r| r.age).max().unwrap_or(0);
    let core = CoreFunction::new(*params, max_age);
    let mut m = initial_ms_error;
    let mut breakdown = Vec::with_capacity(records.len());
    let mut ms_error = Vec::with_capacity(records.len());
    let mut acc = NeumaierSum::default();
    for i in 0..records.len() {
        let b = core.evaluate(&records[..=i])?;
        m = error_recursion_step(m, b.f, records[i].effective_gain(), params);
        acc.add(m);
        breakdown.push(b);
        ms_error.push(m);
    }
    let mean = if records.is_empty() {
        0.0
    } else {
        acc.value() / records.len() as f64
    };
    Ok(JeEvaluation {
        breakdown,
        ms_error,
        mean,
    })
}

/// Long-run average error for a constant gain: mean(f) / (1 − (a(1−k))²).
pub fn j_e_steady(f_stream: &[f64], k: f64, params: &SystemParams) -> Result<f64, AnalyticsError> {
    let alpha = params.a * (1.0 - k);
    if !(alpha.abs() < 1.0) {
        return Err(AnalyticsError::UnstableGain { a: params.a, k });
    }
    if f_stream.is_empty() {
        return Ok(0.0);
    }
    let mut acc = NeumaierSum::default();
    f_stream.iter().for_each(|&f| acc.add(f));
    Ok(acc.value() / f_stream.len() as f64 / (1.0 - alpha * alpha))
}

/// Row of the per-slot breakdown export.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownRow {
    pub t: u64,
    pub tau: u32,
    pub c_p: f64,
    pub c_s: f64,
    pub c_e: f64,
    pub f: f64,
    pub ms_error: f64,
}

pub fn breakdown_rows(records: &[ReceptionRecord], eval: &JeEvaluation) -> Vec<BreakdownRow> {
    records
        .iter()
        .zip(eval.breakdown.iter().zip(&eval.ms_error))
        .map(|(r, (b, &m))| BreakdownRow {
            t: r.slot,
            tau: r.age,
            c_p: b.c_p,
            c_s: b.c_s,
            c_e: b.c_e,
            f: b.f,
            ms_error: m,
        })
        .collect()
}

/// Writes `t,tau,c_p,c_s,c_e,f,ms_error` rows.
pub fn write_breakdown_csv<W: Write>(out: W, rows: &[BreakdownRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}
