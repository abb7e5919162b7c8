use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::flow::FlowNetwork;
use super::ModuleMap;
use crate::corpus::StateNetwork;
use crate::error::{Error, Result};
use crate::util::{fmt_sig, quote, tokenize};

/// One line of a `.tree` file.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEntry {
    /// One-based module coordinates followed by the state's rank inside its leaf module.
    pub path: Vec<u32>,
    pub flow: f64,
    pub name: String,
    pub state: u32,
    pub physical: u32,
}

impl TreeEntry {
    /// Coordinates of the leaf module.
    pub fn module_path(&self) -> &[u32] {
        &self.path[..self.path.len() - 1]
    }
}

fn path_string(p: &[u32]) -> String {
    p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(":")
}

/// Writes `path flow "physicalName" stateId physicalId` lines, leaf modules in path
/// order and states by descending visit rate.
pub fn write_tree<W: Write>(net: &StateNetwork, flow: &FlowNetwork, map: &ModuleMap, mut w: W) -> Result<()> {
    writeln!(w, "# flowlump map")?;
    writeln!(w, "# codelength {} bits", fmt_sig(map.codelength, 12))?;
    if let Some(h) = &map.hierarchy {
        writeln!(w, "# hierarchical codelength {} bits", fmt_sig(h.codelength, 12))?;
    }
    writeln!(w, "# path flow name stateId physicalId")?;
    let paths = map.leaf_paths();
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); paths.len()];
    for (u, &a) in map.assignment.iter().enumerate() {
        members[a as usize].push(u as u32);
    }
    let mut order: Vec<usize> = (0..paths.len()).collect();
    order.sort_by(|&a, &b| paths[a].cmp(&paths[b]));
    for leaf in order {
        let states = &mut members[leaf];
        states.sort_by(|&a, &b| flow.node_flow(b).total_cmp(&flow.node_flow(a)).then(a.cmp(&b)));
        let prefix: Vec<u32> = paths[leaf].iter().map(|c| c + 1).collect();
        for (rank, &u) in states.iter().enumerate() {
            let mut p = prefix.clone();
            p.push(rank as u32 + 1);
            let phys = net.physical(u);
            writeln!(
                w,
                "{} {} {} {} {}",
                path_string(&p),
                fmt_sig(flow.rate(u), 12),
                quote(net.physical_name(phys)),
                u,
                phys
            )?;
        }
    }
    Ok(())
}

pub fn read_tree<R: BufRead>(reader: R) -> Result<Vec<TreeEntry>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let err = |m: String| Error::Format { line: idx + 1, message: m };
        let toks = tokenize(t).map_err(err)?;
        if toks.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", toks.len())));
        }
        let path = toks[0]
            .split(':')
            .map(|x| x.parse::<u32>().ok().filter(|&c| c > 0))
            .collect::<Option<Vec<u32>>>()
            .filter(|p| p.len() >= 2)
            .ok_or_else(|| err(format!("bad path '{}'", toks[0])))?;
        out.push(TreeEntry {
            path,
            flow: toks[1].parse().map_err(|_| err(format!("bad flow '{}'", toks[1])))?,
            name: toks[2].clone(),
            state: toks[3].parse().map_err(|_| err(format!("bad state id '{}'", toks[3])))?,
            physical: toks[4].parse().map_err(|_| err(format!("bad physical id '{}'", toks[4])))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalFlow {
    pub id: u32,
    pub name: String,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleExport {
    /// One-based leaf module index.
    pub id: u32,
    /// One-based colon-separated module coordinates.
    pub path: String,
    pub flow: f64,
    pub exit: f64,
    pub enter: f64,
    pub physical: Vec<PhysicalFlow>,
    pub states: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModuleLink {
    pub source: u32,
    pub target: u32,
    pub flow: f64,
}

/// Map summary for external rendering: modules with aggregated physical flows and the
/// flow between leaf modules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapExport {
    pub codelength: f64,
    pub hierarchical_codelength: Option<f64>,
    pub state_count: usize,
    pub modules: Vec<ModuleExport>,
    pub links: Vec<ModuleLink>,
}

pub fn export_json(net: &StateNetwork, flow: &FlowNetwork, map: &ModuleMap) -> MapExport {
    let paths = map.leaf_paths();
    let mut states: Vec<Vec<u32>> = vec![Vec::new(); paths.len()];
    for (u, &a) in map.assignment.iter().enumerate() {
        states[a as usize].push(u as u32);
    }
    let modules = map
        .modules
        .iter()
        .enumerate()
        .map(|(i, m)| ModuleExport {
            id: i as u32 + 1,
            path: path_string(&paths[i].iter().map(|c| c + 1).collect::<Vec<_>>()),
            flow: m.flow,
            exit: m.exit,
            enter: m.enter,
            physical: m
                .physical
                .iter()
                .map(|&(j, f)| PhysicalFlow {
                    id: j,
                    name: net.physical_name(j).to_string(),
                    flow: f,
                })
                .collect(),
            states: std::mem::take(&mut states[i]),
        })
        .collect();
    let mut between: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for (u, v, f) in flow.all_links() {
        let (a, b) = (map.assignment[u as usize], map.assignment[v as usize]);
        if a != b {
            *between.entry((a + 1, b + 1)).or_insert(0.0) += f;
        }
    }
    MapExport {
        codelength: map.codelength,
        hierarchical_codelength: map.hierarchy.as_ref().map(|h| h.codelength),
        state_count: map.assignment.len(),
        modules,
        links: between
            .into_iter()
            .map(|((source, target), f)| ModuleLink {
                source,
                target,
                flow: f / flow.total(),
            })
            .collect(),
    }
}
