use rand::Rng;

use crate::traffic::TrafficState;

use super::PolicyDecision;

/// Smallest age first, then highest precision, then lowest id.
pub fn age_minimal(traffic: &TrafficState) -> PolicyDecision {
    let best = traffic.eligible().min_by(|&i, &j| {
        let (ai, aj) = (traffic.age(i), traffic.age(j));
        let (vi, vj) = (traffic.sensor(i).spec.sigma_o2, traffic.sensor(j).spec.sigma_o2);
        ai.cmp(&aj).then(vi.total_cmp(&vj)).then(i.cmp(&j))
    });
    PolicyDecision::pick(best)
}

/// Highest precision first, then smallest age, then lowest id.
pub fn variance_minimal(traffic: &TrafficState) -> PolicyDecision {
    let best = traffic.eligible().min_by(|&i, &j| {
        let (ai, aj) = (traffic.age(i), traffic.age(j));
        let (vi, vj) = (traffic.sensor(i).spec.sigma_o2, traffic.sensor(j).spec.sigma_o2);
        vi.total_cmp(&vj).then(ai.cmp(&aj)).then(i.cmp(&j))
    });
    PolicyDecision::pick(best)
}

/// Uniform over the eligible sensors.
pub fn random_policy<R: Rng + ?Sized>(traffic: &TrafficState, rng: &mut R) -> PolicyDecision {
    let eligible: Vec<usize> = traffic.eligible().collect();
    if eligible.is_empty() {
        return PolicyDecision::idle();
    }
    PolicyDecision::pick(Some(eligible[rng.gen_range(0..eligible.len())]))
}
