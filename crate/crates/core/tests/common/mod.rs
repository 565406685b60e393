#![allow(dead_code)]

use rand::Rng;

use wncs::analytics::f_theorem1;
use wncs::history::ReceptionRecord;
use wncs::scheduler::SchedulerContext;
use wncs::traffic::TrafficState;
use wncs::{SensorSpec, SystemParams};

/// A traffic state reached by random play, with the matching reception history.
pub struct Instance {
    pub ctx: SchedulerContext,
    pub traffic: TrafficState,
    pub history: Vec<ReceptionRecord>,
}

pub fn random_context<R: Rng>(rng: &mut R, max_sensors: usize, max_cap: u32) -> SchedulerContext {
    let m = rng.gen_range(1..=max_sensors);
    let sensors = (0..m)
        .map(|_| {
            let p = if rng.gen_bool(0.3) { 1.0 } else { rng.gen_range(0.05..0.95) };
            SensorSpec::new(rng.gen_range(0.01..1.0), p)
        })
        .collect();
    let t_d = rng.gen_range(0..=2u32);
    let params = SystemParams {
        a: rng.gen_range(0.6..1.6),
        b: 1.0,
        sigma_p2: rng.gen_range(0.01..0.5),
        q_weight: 1.0,
        r_weight: 1.0,
    };
    SchedulerContext {
        params,
        sensors,
        t_d,
        gain: rng.gen_range(0.1..0.9),
        dp_age_cap: rng.gen_range((t_d + 1).max(2)..=max_cap),
        variable_gain: false,
    }
}

/// Random context played for a random number of slots with random
/// transmissions, stopped right after sensors sample at the final slot.
pub fn random_instance<R: Rng>(rng: &mut R, max_sensors: usize, max_cap: u32) -> Instance {
    let ctx = random_context(rng, max_sensors, max_cap);
    play(ctx, rng)
}

/// Random play under a fixed context.
pub fn play<R: Rng>(ctx: SchedulerContext, rng: &mut R) -> Instance {
    let slots = rng.gen_range(1..=25u64);
    let mut traffic = TrafficState::new(&ctx.sensors, ctx.t_d, 64);
    let mut history = Vec::new();
    for t in 0..=slots {
        traffic.advance_to(t);
        for (m, s) in ctx.sensors.iter().enumerate() {
            if rng.gen::<f64>() < s.p_obs {
                traffic.observe(m, t, 0.0);
            }
        }
        if t == slots {
            break;
        }
        let eligible: Vec<usize> = traffic.eligible().collect();
        if !eligible.is_empty() && rng.gen_bool(0.8) {
            let d = eligible[rng.gen_range(0..eligible.len())];
            traffic.channel_transmit(d, t).unwrap();
        }
        let delivered = traffic.channel_deliver(t);
        if t >= 1 {
            history.push(match delivered {
                Some(d) => ReceptionRecord::delivered(t, d.age, d.noise_var, ctx.gain),
                None => ReceptionRecord::idle(t),
            });
        }
    }
    Instance { ctx, traffic, history }
}

/// Full history extended by the packets still in flight, oldest first.
pub fn extended_history(inst: &Instance) -> Vec<ReceptionRecord> {
    let t = inst.traffic.slot();
    let mut recs = inst.history.clone();
    for slot in t..t + u64::from(inst.ctx.t_d) {
        if slot == 0 {
            continue;
        }
        let rec = inst
            .traffic
            .in_flight()
            .find(|p| p.delivery_slot == slot)
            .map_or(ReceptionRecord::idle(slot), |p| {
                ReceptionRecord::delivered(slot, p.age(), p.noise_var, inst.ctx.gain)
            });
        recs.push(rec);
    }
    recs
}

/// Optimal expected weighted window cost by exhaustive expectimax over every
/// action and every joint regeneration outcome, evaluating each reception
/// on the full uncapped history.
pub fn brute_force_value(inst: &Instance, window: usize) -> f64 {
    let ctx = &inst.ctx;
    let cap = ctx.dp_age_cap;
    let ages: Vec<Option<u32>> = (0..inst.traffic.len())
        .map(|m| {
            inst.traffic
                .is_eligible(m)
                .then(|| inst.traffic.true_age(m).unwrap().min(u64::from(cap)) as u32)
        })
        .collect();
    let gamma = (ctx.params.a * (1.0 - ctx.gain)).powi(2);
    let weights: Vec<f64> = (0..window)
        .map(|n| (1.0 - gamma.powi((window - n + 1) as i32)) / (1.0 - gamma))
        .collect();
    let mut recs = extended_history(inst);
    expectimax(ctx, &weights, 0, &ages, &mut recs)
}

fn expectimax(
    ctx: &SchedulerContext,
    weights: &[f64],
    stage: usize,
    ages: &[Option<u32>],
    recs: &mut Vec<ReceptionRecord>,
) -> f64 {
    if stage == weights.len() {
        return 0.0;
    }
    let mut actions: Vec<Option<usize>> = (0..ages.len()).filter(|&m| ages[m].is_some()).map(Some).collect();
    if actions.is_empty() {
        actions.push(None);
    }
    let slot = recs.last().map_or(1, |r| r.slot + 1);
    let mut best = f64::INFINITY;
    for action in actions {
        let rec = match action {
            Some(m) => ReceptionRecord::delivered(slot, ages[m].unwrap(), ctx.sensors[m].sigma_o2, ctx.gain),
            None => ReceptionRecord::idle(slot),
        };
        recs.push(rec);
        let f = f_theorem1(recs, &ctx.params).unwrap().f;
        let mut value = weights[stage] * f;
        let m_count = ages.len();
        for mask in 0u32..(1 << m_count) {
            let mut prob = 1.0;
            let mut next = ages.to_vec();
            if let Some(m) = action {
                next[m] = None;
            }
            for m in 0..m_count {
                let p = ctx.sensors[m].p_obs;
                if mask >> m & 1 == 1 {
                    prob *= p;
                    next[m] = Some(ctx.t_d);
                } else {
                    prob *= 1.0 - p;
                    next[m] = next[m].map(|a| (a + 1).min(ctx.dp_age_cap));
                }
            }
            if prob > 0.0 {
                value += prob * expectimax(ctx, weights, stage + 1, &next, recs);
            }
        }
        recs.pop();
        best = best.min(value);
    }
    best
}
