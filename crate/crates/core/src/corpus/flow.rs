use super::StateNetwork;
use crate::error::{Error, Result};

/// Next-step distribution of a state, or the explicit marker for states without out-links.
#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    /// `(target, probability)` pairs sorted by target id.
    Distribution(Vec<(u32, f64)>),
    Dangling,
}

impl Transition {
    pub fn distribution(&self) -> Option<&[(u32, f64)]> {
        match self {
            Transition::Distribution(d) => Some(d),
            Transition::Dangling => None,
        }
    }
}

/// `P_uv = w_uv / w_u` over target states.
pub fn transition_probabilities(net: &StateNetwork, u: u32) -> Transition {
    let wu = net.out_weight(u);
    if wu <= 0.0 {
        return Transition::Dangling;
    }
    Transition::Distribution(net.links(u).map(|(v, w)| (v, w / wu)).collect())
}

/// Raw out-weight of `u` aggregated by the physical node of each target, sorted by
/// physical id.
pub fn physical_counts(net: &StateNetwork, u: u32) -> Vec<(u32, f64)> {
    let mut counts: Vec<(u32, f64)> = net.links(u).map(|(v, w)| (net.physical(v), w)).collect();
    if net.order() > 2 || counts.windows(2).any(|p| p[0].0 >= p[1].0) {
        counts.sort_by_key(|&(j, _)| j);
        counts.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
    }
    counts
}

/// `P_uj = sum over targets v with physical node j of P_uv`.
pub fn physical_projection(net: &StateNetwork, u: u32) -> Transition {
    let wu = net.out_weight(u);
    if wu <= 0.0 {
        return Transition::Dangling;
    }
    Transition::Distribution(physical_counts(net, u).into_iter().map(|(j, w)| (j, w / wu)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    /// `p_u = w_u / W`: observed out-flow shares.
    #[default]
    Empirical,
    /// Stationary distribution of the state chain by lazy power iteration.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct VisitRates {
    pub rates: Vec<f64>,
    pub mode: RateMode,
    pub converged: bool,
    pub iterations: usize,
    /// L1 change of the last iteration (0 in empirical mode).
    pub last_change: f64,
}

pub const STATIONARY_TOLERANCE: f64 = 1e-12;
pub const STATIONARY_MAX_ITERATIONS: usize = 1000;

/// Visit rates of every state.
///
/// Empirical rates are zero on dangling states. In stationary mode the mass reaching a
/// dangling state is restarted in proportion to the empirical rates, so the chain stays
/// stochastic without introducing uniform teleportation; the iteration uses the lazy
/// chain `(I + P) / 2`, which has the same fixed point and also converges on periodic
/// chains.
pub fn visit_rates(net: &StateNetwork, mode: RateMode) -> Result<VisitRates> {
    let total = net.total_weight();
    if total <= 0.0 {
        return Err(Error::InvalidParameter("network has no out-weight".into()));
    }
    let empirical: Vec<f64> = net.out_weights().iter().map(|w| w / total).collect();
    if mode == RateMode::Empirical {
        return Ok(VisitRates {
            rates: empirical,
            mode,
            converged: true,
            iterations: 0,
            last_change: 0.0,
        });
    }

    let n = net.state_count();
    let mut pi = empirical.clone();
    let mut next = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < STATIONARY_MAX_ITERATIONS {
        iterations += 1;
        next.iter_mut().for_each(|x| *x = 0.0);
        let mut dangling_mass = 0.0;
        for u in 0..n as u32 {
            let p = pi[u as usize];
            let wu = net.out_weight(u);
            if wu <= 0.0 {
                dangling_mass += p;
                continue;
            }
            for (v, w) in net.links(u) {
                next[v as usize] += p * w / wu;
            }
        }
        let mut sum = 0.0;
        for i in 0..n {
            next[i] = 0.5 * (pi[i] + next[i] + dangling_mass * empirical[i]);
            sum += next[i];
        }
        change = 0.0;
        for i in 0..n {
            next[i] /= sum;
            change += (next[i] - pi[i]).abs();
        }
        std::mem::swap(&mut pi, &mut next);
        if change < STATIONARY_TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(VisitRates {
        rates: pi,
        mode,
        converged,
        iterations,
        last_change: change,
    })
}
