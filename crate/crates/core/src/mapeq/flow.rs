use crate::corpus::{visit_rates, RateMode, StateNetwork};
use crate::error::{Error, Result};

/// Flow quantities of a state network in raw units: normalized values are the raw
/// values divided by [`FlowNetwork::total`].
///
/// Empirical flows are the link weights themselves, so sums of integer weights stay
/// exact. Stationary flows are `pi_u P_uv` with total 1.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    physical: Vec<u32>,
    node_flow: Vec<f64>,
    offsets: Vec<usize>,
    targets: Vec<u32>,
    flows: Vec<f64>,
    total: f64,
    mode: RateMode,
}

impl FlowNetwork {
    pub fn new(net: &StateNetwork, mode: RateMode) -> Result<Self> {
        let n = net.state_count();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::with_capacity(net.link_count());
        let mut flows = Vec::with_capacity(net.link_count());
        offsets.push(0);
        let (node_flow, total) = match mode {
            RateMode::Empirical => {
                if net.total_weight() <= 0.0 {
                    return Err(Error::InvalidParameter("network has no out-weight".into()));
                }
                for u in 0..n as u32 {
                    for (v, w) in net.links(u) {
                        targets.push(v);
                        flows.push(w);
                    }
                    offsets.push(targets.len());
                }
                (net.out_weights().to_vec(), net.total_weight())
            }
            RateMode::Stationary => {
                let rates = visit_rates(net, mode)?.rates;
                for u in 0..n as u32 {
                    let wu = net.out_weight(u);
                    for (v, w) in net.links(u) {
                        targets.push(v);
                        flows.push(rates[u as usize] * w / wu);
                    }
                    offsets.push(targets.len());
                }
                (rates, 1.0)
            }
        };
        Ok(Self {
            physical: (0..n as u32).map(|u| net.physical(u)).collect(),
            node_flow,
            offsets,
            targets,
            flows,
            total,
            mode,
        })
    }

    /// Builds a flow network directly from raw node flows and links, used for
    /// aggregated or projected networks.
    pub fn from_raw(physical: Vec<u32>, node_flow: Vec<f64>, mut links: Vec<(u32, u32, f64)>, total: f64) -> Result<Self> {
        let n = physical.len();
        if node_flow.len() != n {
            return Err(Error::InvalidParameter("node flow length mismatch".into()));
        }
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("total flow must be positive".into()));
        }
        if links.iter().any(|&(u, v, f)| u as usize >= n || v as usize >= n || !(f >= 0.0)) {
            return Err(Error::InvalidParameter("invalid link".into()));
        }
        links.sort_by_key(|&(u, v, _)| (u, v));
        let mut offsets = vec![0usize; n + 1];
        let mut targets: Vec<u32> = Vec::with_capacity(links.len());
        let mut flows: Vec<f64> = Vec::with_capacity(links.len());
        let mut last: Option<(u32, u32)> = None;
        for (u, v, f) in links {
            if last == Some((u, v)) {
                *flows.last_mut().unwrap() += f;
            } else {
                targets.push(v);
                flows.push(f);
                offsets[u as usize + 1] += 1;
                last = Some((u, v));
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            physical,
            node_flow,
            offsets,
            targets,
            flows,
            total,
            mode: RateMode::Empirical,
        })
    }

    pub fn len(&self) -> usize {
        self.physical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.physical.is_empty()
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn physical(&self, u: u32) -> u32 {
        self.physical[u as usize]
    }

    pub fn physicals(&self) -> &[u32] {
        &self.physical
    }

    /// Raw visit flow of state `u`.
    pub fn node_flow(&self, u: u32) -> f64 {
        self.node_flow[u as usize]
    }

    pub fn node_flows(&self) -> &[f64] {
        &self.node_flow
    }

    /// Normalized visit rate of state `u`.
    pub fn rate(&self, u: u32) -> f64 {
        self.node_flow[u as usize] / self.total
    }

    pub fn links(&self, u: u32) -> impl Iterator<Item = (u32, f64)> + '_ {
        let r = self.offsets[u as usize]..self.offsets[u as usize + 1];
        self.targets[r.clone()].iter().copied().zip(self.flows[r].iter().copied())
    }

    pub fn all_links(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        (0..self.len() as u32).flat_map(move |u| self.links(u).map(move |(v, f)| (u, v, f)))
    }

    pub fn link_count(&self) -> usize {
        self.targets.len()
    }
}
