//! Greedy and sliding-window scheduling.
//!
//! Choosing sensor `d` at slot `t + n` puts a reception of age `Δ_d` at slot
//! `t + t_d + n`. The window problem minimises
//!
//! ```text
//! E Σ_{n=0}^{N−1} w(n)·f(t + t_d + n),   w(n) = Σ_{i=0}^{N−n} γ^i,  γ = a²(1−k)²
//! ```
//!
//! by backward induction over the sensor ages, eligibility flags and the
//! ages received inside the window.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::analytics::{AnalyticsError, CoreFunction};
use crate::history::{Lookback, ReceptionRecord};
use crate::traffic::TrafficState;

use super::{select_best, PolicyDecision, ScheduleError, SchedulerContext};

const CACHE_LIMIT: usize = 1 << 22;

/// Planning view of one sensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DpSensor {
    pub age: u32,
    pub fresh: bool,
}

/// Node of the window tree: per-sensor state plus the receptions already
/// placed inside the window (oldest first).
#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    pub sensors: Vec<DpSensor>,
    pub records: Vec<ReceptionRecord>,
}

impl DpState {
    /// Root state with ages saturated at the planning cap.
    pub fn from_traffic(traffic: &TrafficState, cap: u32) -> Self {
        let sensors = (0..traffic.len())
            .map(|m| {
                let fresh = traffic.is_eligible(m);
                DpSensor {
                    age: if fresh { traffic.age(m).unwrap_or(cap).min(cap) } else { 0 },
                    fresh,
                }
            })
            .collect();
        Self {
            sensors,
            records: Vec::new(),
        }
    }
}

/// w(n) for n = 0 … N−1.
pub fn stage_weights(gamma: f64, window: usize) -> Vec<f64> {
    (0..window)
        .map(|n| {
            let mut w = 0.0;
            let mut g = 1.0;
            for _ in 0..=(window - n) {
                w += g;
                g *= gamma;
            }
            w
        })
        .collect()
}

/// Successor distribution after scheduling `action` (or idling) in `state`.
///
/// The chosen sensor's observation is consumed; then every sensor either
/// regenerates (age `t_d`, eligible) with its own probability or ages by one
/// slot, saturating at `dp_age_cap`.
pub fn dp_transition(
    state: &DpState,
    action: Option<usize>,
    ctx: &SchedulerContext,
) -> Result<Vec<(f64, DpState)>, ScheduleError> {
    let mut cleared = state.clone();
    let record = match action {
        Some(d) => {
            let s = state
                .sensors
                .get(d)
                .filter(|s| s.fresh)
                .ok_or(ScheduleError::IneligibleAction { sensor: d })?;
            cleared.sensors[d].fresh = false;
            ReceptionRecord::delivered(0, s.age, ctx.sensors[d].sigma_o2, ctx.gain)
        }
        None => ReceptionRecord::idle(0),
    };
    cleared.records.push(record);

    let mut out = vec![(1.0, cleared)];
    for (m, spec) in ctx.sensors.iter().enumerate() {
        let p = spec.p_obs;
        let mut next = Vec::with_capacity(out.len() * 2);
        for (prob, s) in out {
            if p > 0.0 {
                let mut r = s.clone();
                r.sensors[m] = DpSensor { age: ctx.t_d, fresh: true };
                next.push((prob * p, r));
            }
            if p < 1.0 {
                let mut r = s;
                r.sensors[m].age = (r.sensors[m].age + 1).min(ctx.dp_age_cap);
                next.push((prob * (1.0 - p), r));
            }
        }
        out = next;
    }
    Ok(out)
}

/// Records preceding the first window reception, oldest first.
///
/// Packets already in flight occupy the slots `t … t + t_d − 1` (assumed to
/// be applied with the planning gain); earlier slots come from `history`.
/// Only the newest `depth` records are returned.
pub fn window_prefix<L: Lookback + ?Sized>(
    traffic: &TrafficState,
    history: &L,
    gain: f64,
    depth: usize,
) -> Vec<ReceptionRecord> {
    let t = traffic.slot();
    let mut out = Vec::with_capacity(depth);
    let first = t + u64::from(traffic.t_d());
    let mut slot = first;
    while out.len() < depth && slot > t {
        slot -= 1;
        if slot == 0 {
            break;
        }
        let rec = traffic
            .in_flight()
            .find(|p| p.delivery_slot == slot)
            .map_or(ReceptionRecord::idle(slot), |p| {
                ReceptionRecord::delivered(slot, p.age(), p.noise_var, gain)
            });
        out.push(rec);
    }
    if slot > t || slot == 0 {
        out.reverse();
        return out;
    }
    let mut n = 0;
    while out.len() < depth {
        match history.back(n) {
            Some(r) => out.push(*r),
            None => break,
        }
        n += 1;
    }
    out.reverse();
    out
}

fn candidate_age(traffic: &TrafficState, m: usize, cap: u32) -> u32 {
    traffic.age(m).unwrap_or(cap).min(cap)
}

/// Myopic policy: argmin over eligible sensors of w(0)·f for the next reception.
pub fn greedy_decide<L: Lookback + ?Sized>(
    traffic: &TrafficState,
    history: &L,
    ctx: &SchedulerContext,
    core: &CoreFunction,
) -> Result<PolicyDecision, ScheduleError> {
    let cap = ctx.dp_age_cap;
    let w0 = stage_weights(ctx.gamma(), 1)[0];
    let max_age = traffic.eligible().map(|m| candidate_age(traffic, m, cap)).max();
    let Some(max_age) = max_age else {
        return Ok(PolicyDecision::idle());
    };
    let before = window_prefix(traffic, history, ctx.gain, max_age.saturating_sub(1) as usize);
    let mut candidates = Vec::new();
    for m in traffic.eligible() {
        let age = candidate_age(traffic, m, cap);
        let var = ctx.sensors[m].sigma_o2;
        let f = core.evaluate_next(before.as_slice(), age, var, ctx.gain)?.f;
        candidates.push((m, w0 * f, var));
    }
    let (choice, value) = select_best(candidates).expect("at least one eligible sensor");
    Ok(PolicyDecision {
        choice: Some(choice),
        value: Some(value),
    })
}

/// Uncached sliding-window decision with window size `window`.
pub fn sliding_window_decide<L: Lookback + ?Sized>(
    traffic: &TrafficState,
    history: &L,
    window: usize,
    ctx: &SchedulerContext,
) -> Result<PolicyDecision, ScheduleError> {
    WindowPlanner::new(ctx.clone(), window, false).decide(traffic, history)
}

type DecisionCache = HashMap<Vec<u8>, (Option<usize>, f64)>;

/// Sliding-window policy with its tables and an optional decision cache.
///
/// The cache key is the canonical root: eligible sensors' capped ages and
/// the part of the prefix the window can read, with each past age clipped
/// to the largest value the core function can distinguish there.
#[derive(Debug)]
pub struct WindowPlanner {
    ctx: SchedulerContext,
    core: CoreFunction,
    weights: Vec<f64>,
    window: usize,
    cache: Option<Mutex<DecisionCache>>,
}

impl WindowPlanner {
    pub fn new(ctx: SchedulerContext, window: usize, cached: bool) -> Self {
        assert!(window >= 1, "window size must be at least 1");
        Self {
            core: ctx.core_function(),
            weights: stage_weights(ctx.gamma(), window),
            window,
            cache: cached.then(|| Mutex::new(HashMap::new())),
            ctx,
        }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn context(&self) -> &SchedulerContext {
        &self.ctx
    }

    pub fn cache_len(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.lock().expect("cache lock").len())
    }

    /// Canonical root and the prefix it depends on.
    fn root(&self, traffic: &TrafficState, history: &(impl Lookback + ?Sized)) -> (Vec<DpSensor>, Vec<ReceptionRecord>) {
        let state = DpState::from_traffic(traffic, self.ctx.dp_age_cap).sensors;
        let reach = state
            .iter()
            .filter(|s| s.fresh)
            .map(|s| s.age)
            .max()
            .unwrap_or(0)
            .max(self.ctx.t_d);
        let depth = reach.saturating_sub(1) as usize;
        let mut prefix = window_prefix(traffic, history, self.ctx.gain, depth);
        let len = prefix.len();
        for (i, r) in prefix.iter_mut().enumerate() {
            let pos = (len - 1 - i) as u32;
            let clip = reach - 1 - pos;
            *r = ReceptionRecord {
                slot: r.slot,
                age: r.age.min(clip),
                noise_var: 0.0,
                gain: r.effective_gain(),
                updated: r.updated,
            };
        }
        (state, prefix)
    }

    fn key(state: &[DpSensor], prefix: &[ReceptionRecord]) -> Vec<u8> {
        let mut key = Vec::with_capacity(state.len() * 4 + prefix.len() * 13 + 4);
        for s in state {
            let a = if s.fresh { s.age } else { u32::MAX };
            key.extend_from_slice(&a.to_le_bytes());
        }
        key.extend_from_slice(&(prefix.len() as u32).to_le_bytes());
        for r in prefix {
            key.extend_from_slice(&r.age.to_le_bytes());
            key.push(r.updated as u8);
            key.extend_from_slice(&r.gain.to_bits().to_le_bytes());
        }
        key
    }

    /// Root decision and its expected weighted window cost.
    pub fn decide<L: Lookback + ?Sized>(&self, traffic: &TrafficState, history: &L) -> Result<PolicyDecision, ScheduleError> {
        let (state, prefix) = self.root(traffic, history);
        let key = self.cache.as_ref().map(|_| Self::key(&state, &prefix));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(&(choice, value)) = cache.lock().expect("cache lock").get(key) {
                return Ok(PolicyDecision {
                    choice,
                    value: Some(value),
                });
            }
        }
        let mut solver = Solver {
            planner: self,
            buf: prefix,
        };
        let mut candidates = Vec::new();
        for (m, s) in state.iter().enumerate() {
            if s.fresh {
                let v = solver.action_value(0, &state, Some(m))?;
                candidates.push((m, v, self.ctx.sensors[m].sigma_o2));
            }
        }
        let (choice, value) = match select_best(candidates) {
            Some((m, v)) => (Some(m), v),
            None => (None, solver.action_value(0, &state, None)?),
        };
        if let (Some(cache), Some(key)) = (&self.cache, key) {
            let mut c = cache.lock().expect("cache lock");
            if c.len() >= CACHE_LIMIT {
                c.clear();
            }
            c.insert(key, (choice, value));
        }
        Ok(PolicyDecision {
            choice,
            value: Some(value),
        })
    }

    /// Expected weighted window cost under the optimal policy from an
    /// arbitrary root (`prefix` oldest first).
    pub fn window_value(&self, state: &DpState, prefix: &[ReceptionRecord]) -> Result<f64, ScheduleError> {
        let mut buf = prefix.to_vec();
        buf.extend_from_slice(&state.records);
        let stage = state.records.len();
        assert!(stage < self.window, "state lies beyond the window");
        let mut solver = Solver { planner: self, buf };
        Ok(solver.stage_value(stage, &state.sensors)?)
    }
}

struct Solver<'a> {
    planner: &'a WindowPlanner,
    /// Prefix followed by the receptions on the current path.
    buf: Vec<ReceptionRecord>,
}

impl Solver<'_> {
    fn stage_cost(&self, n: usize, sensor: Option<(u32, f64)>) -> Result<f64, AnalyticsError> {
        let p = self.planner;
        let f = match sensor {
            Some((age, var)) => p.core.evaluate_next(self.buf.as_slice(), age, var, p.ctx.gain)?.f,
            None => p.ctx.params.sigma_p2,
        };
        Ok(p.weights[n] * f)
    }

    fn stage_value(&mut self, n: usize, state: &[DpSensor]) -> Result<f64, AnalyticsError> {
        let mut best = f64::INFINITY;
        let mut any = false;
        for (m, s) in state.iter().enumerate() {
            if s.fresh {
                any = true;
                best = best.min(self.action_value(n, state, Some(m))?);
            }
        }
        if !any {
            best = self.action_value(n, state, None)?;
        }
        Ok(best)
    }

    fn action_value(&mut self, n: usize, state: &[DpSensor], action: Option<usize>) -> Result<f64, AnalyticsError> {
        let ctx = &self.planner.ctx;
        let (cost, record) = match action {
            Some(m) => {
                let age = state[m].age;
                let var = ctx.sensors[m].sigma_o2;
                (
                    self.stage_cost(n, Some((age, var)))?,
                    ReceptionRecord::delivered(0, age, var, ctx.gain),
                )
            }
            None => (self.stage_cost(n, None)?, ReceptionRecord::idle(0)),
        };
        if n + 1 == self.planner.window {
            return Ok(cost);
        }
        let mut cleared = state.to_vec();
        if let Some(m) = action {
            cleared[m].fresh = false;
        }
        self.buf.push(record);
        let cont = if n + 2 == self.planner.window {
            self.expected_last(&cleared)
        } else {
            self.expected_next(n + 1, &cleared)
        };
        self.buf.pop();
        Ok(cost + cont?)
    }

    /// Σ over regeneration outcomes of probability × optimal value at stage `n`.
    fn expected_next(&mut self, n: usize, cleared: &[DpSensor]) -> Result<f64, AnalyticsError> {
        let ctx = &self.planner.ctx;
        let uncertain: Vec<usize> = (0..cleared.len()).filter(|&m| ctx.sensors[m].p_obs < 1.0).collect();
        let mut next = cleared.to_vec();
        let mut total = 0.0;
        for mask in 0u64..(1u64 << uncertain.len()) {
            let mut prob = 1.0;
            for (m, s) in cleared.iter().enumerate() {
                let p = ctx.sensors[m].p_obs;
                let regen = match uncertain.iter().position(|&u| u == m) {
                    None => true,
                    Some(bit) => mask >> bit & 1 == 1,
                };
                if regen {
                    prob *= p;
                    next[m] = DpSensor { age: ctx.t_d, fresh: true };
                } else {
                    prob *= 1.0 - p;
                    next[m] = DpSensor {
                        age: (s.age + 1).min(ctx.dp_age_cap),
                        fresh: s.fresh,
                    };
                }
            }
            if prob == 0.0 {
                continue;
            }
            total += prob * self.stage_value(n, &next)?;
        }
        Ok(total)
    }

    /// Expected value of the last stage: the minimum over independently
    /// available sensors, without enumerating their joint outcomes.
    fn expected_last(&mut self, cleared: &[DpSensor]) -> Result<f64, AnalyticsError> {
        let n = self.planner.window - 1;
        let ctx = &self.planner.ctx;
        let mut options: Vec<(f64, usize, f64)> = Vec::with_capacity(2 * cleared.len());
        let mut regen_cost: Vec<(u32, f64, f64)> = Vec::new();
        for (m, s) in cleared.iter().enumerate() {
            let p = ctx.sensors[m].p_obs;
            let var = ctx.sensors[m].sigma_o2;
            if p > 0.0 {
                let cached = regen_cost.iter().find(|c| c.0 == ctx.t_d && c.1 == var).map(|c| c.2);
                let v = match cached {
                    Some(v) => v,
                    None => {
                        let v = self.stage_cost(n, Some((ctx.t_d, var)))?;
                        regen_cost.push((ctx.t_d, var, v));
                        v
                    }
                };
                options.push((v, m, p));
            }
            if p < 1.0 && s.fresh {
                let age = (s.age + 1).min(ctx.dp_age_cap);
                options.push((self.stage_cost(n, Some((age, var)))?, m, 1.0 - p));
            }
        }
        options.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut remaining = vec![1.0; cleared.len()];
        let mut total = 0.0;
        for (v, m, prob) in options {
            let others: f64 = remaining
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != m)
                .map(|(_, q)| q)
                .product();
            total += v * prob * others;
            remaining[m] -= prob;
        }
        let idle: f64 = remaining.iter().map(|q| q.max(0.0)).product();
        if idle > 0.0 {
            total += idle * self.stage_cost(n, None)?;
        }
        Ok(total)
    }
}
