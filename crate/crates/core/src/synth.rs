//! Synthetic pathway generator with memory at hub nodes.
//!
//! Non-hub nodes are split evenly over modules. A walk starts at a uniformly chosen
//! non-hub and runs [`BURN_IN`] steps before its nodes are recorded, so recorded paths
//! also start at hubs and every state of the chain can have successors. From a non-hub
//! it steps to a uniform hub with probability `hub_prob`, and otherwise to another
//! non-hub of the same module. From a hub it returns to a uniform non-hub of the module
//! it came from with probability `rho`, and otherwise moves to a uniform non-hub of a
//! uniformly chosen other module. With `rho = 1 / modules` the hub step forgets the
//! origin and the chain is first order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{PathCorpus, PathRecord, PhysicalNode};
use crate::error::{Error, Result};

/// Unrecorded steps at the start of every walk.
pub const BURN_IN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Total physical nodes, hubs included.
    pub nodes: usize,
    pub modules: usize,
    pub hubs: usize,
    /// Probability that a step out of a hub returns to the origin module.
    pub rho: f64,
    /// Probability that a step out of a non-hub goes to a hub.
    pub hub_prob: f64,
    /// Nodes per path.
    pub path_len: usize,
    pub paths: usize,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            nodes: 50,
            modules: 4,
            hubs: 4,
            rho: 0.9,
            hub_prob: 0.05,
            path_len: 3,
            paths: 100_000,
            seed: 1,
        }
    }
}

/// Generated corpus with its planted structure.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: PathCorpus,
    /// Module of each physical node; `None` for hubs.
    pub module_of: Vec<Option<u32>>,
    pub params: SynthParams,
}

impl SynthCorpus {
    pub fn is_hub(&self, physical: u32) -> bool {
        self.module_of[physical as usize].is_none()
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(0.0..=1.0).contains(&self.rho) {
            return bad("rho must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.hub_prob) {
            return bad("hub probability must lie in [0, 1]");
        }
        if self.modules == 0 {
            return bad("at least one module is required");
        }
        if self.modules < 2 && self.rho < 1.0 && self.hub_prob > 0.0 {
            return bad("rho < 1 needs at least two modules");
        }
        if self.hubs == 0 && self.hub_prob > 0.0 {
            return bad("hub probability > 0 needs at least one hub");
        }
        if self.nodes < self.hubs + 2 * self.modules {
            return bad("every module needs at least two non-hub nodes");
        }
        if self.path_len < 2 {
            return bad("paths need at least two nodes");
        }
        if self.paths == 0 {
            return bad("at least one path is required");
        }
        Ok(())
    }
}

/// Samples `params.paths` unit-weight paths. Hubs get ids `0..hubs` and names `hub{i}`;
/// non-hub `i` of module `c` is named `m{c}n{i}`.
pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    params.validate()?;
    let mut nodes = Vec::with_capacity(params.nodes);
    let mut module_of = Vec::with_capacity(params.nodes);
    for h in 0..params.hubs {
        nodes.push(PhysicalNode {
            id: h as u32,
            name: format!("hub{h}"),
        });
        module_of.push(None);
    }
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); params.modules];
    for i in 0..params.nodes - params.hubs {
        let c = i % params.modules;
        let id = nodes.len() as u32;
        nodes.push(PhysicalNode {
            id,
            name: format!("m{c}n{}", members[c].len()),
        });
        members[c].push(id);
        module_of.push(Some(c as u32));
    }
    let non_hubs: Vec<u32> = (params.hubs as u32..params.nodes as u32).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut paths = Vec::with_capacity(params.paths);
    for _ in 0..params.paths {
        let mut path = Vec::with_capacity(params.path_len);
        let mut x = non_hubs[rng.gen_range(0..non_hubs.len())];
        let mut origin = module_of[x as usize].unwrap() as usize;
        let mut steps = 0;
        loop {
            if steps >= BURN_IN {
                path.push(x);
                if path.len() == params.path_len {
                    break;
                }
            }
            steps += 1;
            x = match module_of[x as usize] {
                Some(c) => {
                    origin = c as usize;
                    if rng.gen::<f64>() < params.hub_prob {
                        rng.gen_range(0..params.hubs) as u32
                    } else {
                        let m = &members[origin];
                        // Uniform over the other members of the module.
                        let pos = m.iter().position(|&y| y == x).unwrap();
                        let k = rng.gen_range(0..m.len() - 1);
                        m[if k >= pos { k + 1 } else { k }]
                    }
                }
                None => {
                    let target = if params.modules == 1 || rng.gen::<f64>() < params.rho {
                        origin
                    } else {
                        let k = rng.gen_range(0..params.modules - 1);
                        if k >= origin {
                            k + 1
                        } else {
                            k
                        }
                    };
                    let m = &members[target];
                    m[rng.gen_range(0..m.len())]
                }
            };
        }
        paths.push(PathRecord {
            nodes: path,
            weight: 1.0,
            group: None,
        });
    }
    Ok(SynthCorpus {
        corpus: PathCorpus::new(nodes, paths)?,
        module_of,
        params: *params,
    })
}
