//! Map evaluation: module flow persistence, per-node module overlap, state allocation
//! and agreement with external classifications.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::StateNetwork;
use crate::error::{Error, LineDiagnostic, Result};
use crate::lumping::Expander;
use crate::mapeq::FlowNetwork;
use crate::util::{fmt_sig, quote};

/// Default reporting threshold for counting modules, as a fraction of total flow.
pub const MODULE_FLOW_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModulePersistence {
    pub module: u32,
    /// Normalized flow leaving the module's states in one step.
    pub flow: f64,
    pub persistence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub basis: String,
    pub per_module: Vec<ModulePersistence>,
    pub overall: f64,
    pub notes: Vec<String>,
}

impl PersistenceReport {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# basis {}", self.basis)?;
        writeln!(w, "module\tflow\tpersistence")?;
        for m in &self.per_module {
            writeln!(w, "{}\t{}\t{}", m.module, fmt_sig(m.flow, 12), fmt_sig(m.persistence, 12))?;
        }
        for n in &self.notes {
            writeln!(w, "# note {n}")?;
        }
        writeln!(w, "# overall {}", fmt_sig(self.overall, 12))?;
        Ok(())
    }
}

/// Fraction of each module's outgoing one-step flow that lands in the same module.
/// Dangling states contribute no step and are left out of the denominator. Modules
/// without outgoing flow are omitted with a note. The overall value is the mean over
/// modules weighted by their step flow.
pub fn flow_persistence(flow: &FlowNetwork, assignment: &[u32], basis: &str) -> Result<PersistenceReport> {
    check_assignment(flow, assignment)?;
    let mut out: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
    for &m in assignment {
        out.entry(m).or_insert((0.0, 0.0));
    }
    for (u, v, f) in flow.all_links() {
        let m = assignment[u as usize];
        let e = out.get_mut(&m).unwrap();
        e.0 += f;
        if assignment[v as usize] == m {
            e.1 += f;
        }
    }
    let mut per_module = Vec::new();
    let mut notes = Vec::new();
    let (mut stay, mut step) = (0.0, 0.0);
    for (m, (total, within)) in out {
        if total <= 0.0 {
            notes.push(format!("module {m} has no outgoing flow"));
            continue;
        }
        per_module.push(ModulePersistence {
            module: m,
            flow: total / flow.total(),
            persistence: (within / total).min(1.0),
        });
        stay += within;
        step += total;
    }
    if step <= 0.0 {
        return Err(Error::InvalidParameter("network has no flow".into()));
    }
    Ok(PersistenceReport {
        basis: basis.to_string(),
        per_module,
        overall: (stay / step).min(1.0),
        notes,
    })
}

/// Module of every physical node carrying the largest share of its visit flow, ties to
/// the smaller module id. Nodes whose states have no visit flow of their own fall back
/// to the flow entering them; `None` for nodes without any flow.
pub fn majority_assignment(flow: &FlowNetwork, assignment: &[u32], physical_count: usize) -> Result<Vec<Option<u32>>> {
    check_assignment(flow, assignment)?;
    let mut shares: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); physical_count];
    let mut entering: Vec<BTreeMap<u32, f64>> = vec![BTreeMap::new(); physical_count];
    for (u, &m) in assignment.iter().enumerate() {
        let p = flow.physical(u as u32) as usize;
        if p >= physical_count {
            return Err(Error::InvalidParameter(format!("physical node {p} out of range")));
        }
        *shares[p].entry(m).or_default() += flow.node_flow(u as u32);
    }
    for (_, v, f) in flow.all_links() {
        *entering[flow.physical(v) as usize].entry(assignment[v as usize]).or_default() += f;
    }
    let heaviest = |s: &BTreeMap<u32, f64>| {
        s.iter()
            .filter(|&(_, &f)| f > 0.0)
            .fold(None, |best: Option<(u32, f64)>, (&m, &f)| match best {
                Some((_, bf)) if bf >= f => best,
                _ => Some((m, f)),
            })
            .map(|(m, _)| m)
    };
    Ok(shares
        .iter()
        .zip(&entering)
        .map(|(s, e)| heaviest(s).or_else(|| heaviest(e)))
        .collect())
}

/// Persistence of the physical-level projection: steps aggregated between physical
/// nodes, each node placed in its majority module.
pub fn physical_persistence(flow: &FlowNetwork, assignment: &[u32], physical_count: usize) -> Result<PersistenceReport> {
    let majority = majority_assignment(flow, assignment, physical_count)?;
    let mut links = Vec::with_capacity(flow.link_count());
    let mut node_flow = vec![0.0; physical_count];
    for u in 0..flow.len() as u32 {
        node_flow[flow.physical(u) as usize] += flow.node_flow(u);
    }
    for (u, v, f) in flow.all_links() {
        links.push((flow.physical(u), flow.physical(v), f));
    }
    let projected = FlowNetwork::from_raw((0..physical_count as u32).collect(), node_flow, links, flow.total())?;
    // nodes without flow get their own label so they never join a module
    let labels: Vec<u32> = majority
        .iter()
        .enumerate()
        .map(|(p, m)| m.unwrap_or(u32::MAX - p as u32))
        .collect();
    flow_persistence(&projected, &labels, "physical projection")
}

/// Category labels of physical nodes by name; a node may carry several.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub categories: BTreeMap<String, BTreeSet<String>>,
    #[serde(skip)]
    pub diagnostics: Vec<LineDiagnostic>,
}

impl Classification {
    pub fn insert(&mut self, name: &str, category: &str) {
        self.categories.entry(name.to_string()).or_default().insert(category.to_string());
    }
}

/// Reads `name<TAB>category` lines; repeated names add memberships. Blank lines and
/// lines starting with `#` are ignored, malformed lines are kept as diagnostics.
pub fn read_classification<R: BufRead>(reader: R) -> Result<Classification> {
    let mut c = Classification::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim_end_matches(['\r', '\n']);
        if t.trim().is_empty() || t.starts_with('#') {
            continue;
        }
        match t.split_once('\t') {
            Some((name, cat)) if !name.trim().is_empty() && !cat.trim().is_empty() && !cat.contains('\t') => {
                c.insert(name.trim(), cat.trim())
            }
            _ => c.diagnostics.push(LineDiagnostic {
                line: i + 1,
                message: "expected `name<TAB>category`".into(),
            }),
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPersistence {
    /// Fraction of covered step flow staying within a shared category.
    pub persistence: f64,
    /// Fraction of all step flow whose endpoints are both classified.
    pub coverage: f64,
    /// Physical nodes carrying flow but missing from the classification.
    pub unmatched: Vec<String>,
}

impl ExternalPersistence {
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "persistence\tcoverage\tunmatched")?;
        writeln!(
            w,
            "{}\t{}\t{}",
            fmt_sig(self.persistence, 12),
            fmt_sig(self.coverage, 12),
            self.unmatched.len()
        )?;
        for n in &self.unmatched {
            writeln!(w, "# unmatched {}", quote(n))?;
        }
        Ok(())
    }
}

/// A step persists when the categories of its two physical nodes intersect. Steps with
/// an unclassified endpoint are excluded and lower the coverage.
pub fn external_persistence(net: &StateNetwork, flow: &FlowNetwork, classes: &Classification) -> Result<ExternalPersistence> {
    let phys_cats: Vec<Option<&BTreeSet<String>>> = net.nodes().iter().map(|n| classes.categories.get(&n.name)).collect();
    let (mut all, mut covered, mut stay) = (0.0, 0.0, 0.0);
    let mut unmatched = BTreeSet::new();
    for (u, v, f) in flow.all_links() {
        all += f;
        let (pu, pv) = (flow.physical(u) as usize, flow.physical(v) as usize);
        match (phys_cats[pu], phys_cats[pv]) {
            (Some(a), Some(b)) => {
                covered += f;
                if !a.is_disjoint(b) {
                    stay += f;
                }
            }
            (a, b) => {
                if a.is_none() {
                    unmatched.insert(pu);
                }
                if b.is_none() {
                    unmatched.insert(pv);
                }
            }
        }
    }
    if covered <= 0.0 {
        return Err(Error::ZeroCoverage);
    }
    Ok(ExternalPersistence {
        persistence: (stay / covered).min(1.0),
        coverage: covered / all,
        unmatched: unmatched.into_iter().map(|p| net.nodes()[p].name.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub physical: u32,
    pub name: String,
    pub module: u32,
    /// Share of the physical node's visit flow through states in this module.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    pub rows: Vec<OverlapRow>,
}

impl OverlapTable {
    /// Modules of a physical node, as listed in the table.
    pub fn modules_of(&self, physical: u32) -> Vec<u32> {
        self.rows.iter().filter(|r| r.physical == physical).map(|r| r.module).collect()
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "physical\tname\tmodule\tpercent")?;
        for r in &self.rows {
            writeln!(w, "{}\t{}\t{}\t{}", r.physical, quote(&r.name), r.module, fmt_sig(100.0 * r.fraction, 6))?;
        }
        Ok(())
    }
}

/// Distributes every physical node's visit flow over the modules of its states. Rows
/// below `threshold` (a fraction of the node's flow) are left out, so rows of a node sum
/// to one only without a threshold. Rows are ordered by node, then descending share.
pub fn overlap_table(net: &StateNetwork, flow: &FlowNetwork, assignment: &[u32], threshold: Option<f64>) -> Result<OverlapTable> {
    check_assignment(flow, assignment)?;
    let mut shares: BTreeMap<u32, BTreeMap<u32, f64>> = BTreeMap::new();
    for (u, &m) in assignment.iter().enumerate() {
        let f = flow.node_flow(u as u32);
        if f > 0.0 {
            *shares.entry(flow.physical(u as u32)).or_default().entry(m).or_default() += f;
        }
    }
    let min = threshold.unwrap_or(0.0);
    let mut rows = Vec::new();
    for (p, modules) in shares {
        let total: f64 = modules.values().fold(0.0, |a, b| a + b);
        let mut node_rows: Vec<OverlapRow> = modules
            .into_iter()
            .map(|(m, f)| OverlapRow {
                physical: p,
                name: net.physical_name(p).to_string(),
                module: m,
                fraction: f / total,
            })
            .filter(|r| r.fraction >= min)
            .collect();
        node_rows.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then(a.module.cmp(&b.module)));
        rows.extend(node_rows);
    }
    Ok(OverlapTable { rows })
}

/// Number of modules whose visit flow is at least `threshold` of the total.
pub fn count_modules(flow: &FlowNetwork, assignment: &[u32], threshold: f64) -> Result<usize> {
    check_assignment(flow, assignment)?;
    let mut module_flow: BTreeMap<u32, f64> = BTreeMap::new();
    for (u, &m) in assignment.iter().enumerate() {
        *module_flow.entry(m).or_default() += flow.rate(u as u32);
    }
    Ok(module_flow.values().filter(|&&f| f >= threshold).count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationRow {
    pub r: usize,
    pub physical: u32,
    pub states: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateAllocation {
    pub rows: Vec<AllocationRow>,
}

impl StateAllocation {
    pub fn counts_at(&self, r: usize) -> Vec<usize> {
        self.rows.iter().filter(|x| x.r == r).map(|x| x.states).collect()
    }

    pub fn write_tsv<W: Write>(&self, net: &StateNetwork, mut w: W) -> Result<()> {
        writeln!(w, "r\tphysical\tname\tstates")?;
        for x in &self.rows {
            writeln!(w, "{}\t{}\t{}\t{}", x.r, x.physical, quote(net.physical_name(x.physical)), x.states)?;
        }
        Ok(())
    }
}

/// Lumped states per physical node at each model size, for nodes owning states.
pub fn state_allocation(expander: &Expander<'_>, sizes: &[usize]) -> Result<StateAllocation> {
    let mut rows = Vec::new();
    for &r in sizes {
        for (physical, states) in expander.physical_state_counts(r)? {
            rows.push(AllocationRow { r, physical, states });
        }
    }
    Ok(StateAllocation { rows })
}

fn check_assignment(flow: &FlowNetwork, assignment: &[u32]) -> Result<()> {
    if assignment.len() != flow.len() {
        return Err(Error::InvalidParameter(format!(
            "assignment covers {} states, network has {}",
            assignment.len(),
            flow.len()
        )));
    }
    Ok(())
}
