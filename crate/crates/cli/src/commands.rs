use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use flowlump::corpus::{build_state_network, parse_paths, write_paths, ParseOptions, PathCorpus, StateNetwork};
use flowlump::crossval::{geometric_schedule, sweep, CvOptions};
use flowlump::lumping::{build_dendrograms, read_dendrograms, write_dendrograms, Expander, LumpDendrogram, LumpOptions};
use flowlump::mapeq::{
    export_json, hierarchical, hierarchical_codelength, map_equation, module_stats, optimize, read_tree, write_tree,
    FlowNetwork, Hierarchy, HierarchyOptions, ModuleMap, OptimizeOptions, TreeEntry,
};
use flowlump::metrics::{
    count_modules, external_persistence, flow_persistence, overlap_table, physical_persistence, read_classification,
    state_allocation,
};
use flowlump::synth::{generate, SynthParams};
use flowlump::util::fmt_sig;
use serde_json::json;

use crate::config::{Artifacts, RunConfig};
use crate::{BuildArgs, ClusterArgs, CorpusArgs, CvArgs, ExportArgs, LumpArgs, MapArgs, MetricsArgs, SynthArgs};

/// Flag combination that cannot be honored.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn load_corpus(a: &CorpusArgs) -> Result<PathCorpus> {
    let corpus = parse_paths(open(&a.input)?, ParseOptions { grouped: a.grouped })
        .with_context(|| format!("cannot read paths from {}", a.input.display()))?;
    let diags = corpus.diagnostics();
    if !diags.is_empty() {
        eprintln!("warning: skipped {} malformed lines in {} (first: {})", diags.len(), a.input.display(), diags[0]);
    }
    Ok(corpus)
}

fn load_network(a: &CorpusArgs) -> Result<(PathCorpus, StateNetwork)> {
    let corpus = load_corpus(a)?;
    let (net, report) = build_state_network(&corpus, a.order)?;
    if report.skipped_paths > 0 {
        eprintln!(
            "warning: {} paths (weight {}) are shorter than order {} + 1 and were skipped",
            report.skipped_paths,
            fmt_sig(report.skipped_weight, 12),
            a.order
        );
    }
    Ok((corpus, net))
}

fn read_network(path: &Path) -> Result<StateNetwork> {
    StateNetwork::read(open(path)?).with_context(|| format!("cannot read state network {}", path.display()))
}

fn lump_options(exact: bool) -> LumpOptions {
    if exact {
        LumpOptions::exact()
    } else {
        LumpOptions::default()
    }
}

fn load_dendrograms(path: &Path, net: &StateNetwork) -> Result<Vec<LumpDendrogram>> {
    let dendros = read_dendrograms(open(path)?).with_context(|| format!("cannot read dendrograms {}", path.display()))?;
    let mut seen = vec![false; net.state_count()];
    for d in &dendros {
        for &s in &d.states {
            let ok = (s as usize) < seen.len() && net.physical(s) == d.physical && !seen[s as usize];
            if !ok {
                bail!("{} does not match the state network (state {s})", path.display());
            }
            seen[s as usize] = true;
        }
    }
    if seen.iter().any(|&x| !x) {
        bail!("{} does not cover every state of the network", path.display());
    }
    Ok(dendros)
}

fn map_model(flow: &FlowNetwork, a: &MapArgs) -> ModuleMap {
    let map = optimize(
        flow,
        &OptimizeOptions {
            trials: a.trials,
            seed: a.seed,
        },
    );
    if a.two_level {
        return map;
    }
    hierarchical(
        flow,
        &map,
        &HierarchyOptions {
            max_depth: a.max_depth,
            seed: a.seed,
            ..Default::default()
        },
    )
}

/// Rebuilds a map from `.tree` entries. Leaf modules are numbered in path order.
fn map_from_tree(entries: &[TreeEntry], flow: &FlowNetwork) -> Result<ModuleMap> {
    let mut leaves: BTreeMap<Vec<u32>, u32> = BTreeMap::new();
    for e in entries {
        leaves.insert(e.module_path().to_vec(), 0);
    }
    for (i, v) in leaves.values_mut().enumerate() {
        *v = i as u32;
    }
    let mut assignment = vec![u32::MAX; flow.len()];
    for e in entries {
        let s = e.state as usize;
        if s >= flow.len() || flow.physical(e.state) != e.physical {
            bail!("map state {} does not match the state network", e.state);
        }
        if assignment[s] != u32::MAX {
            bail!("map lists state {} twice", e.state);
        }
        assignment[s] = leaves[e.module_path()];
    }
    if let Some(s) = assignment.iter().position(|&a| a == u32::MAX) {
        bail!("map does not assign state {s}");
    }
    let paths: Vec<Vec<u32>> = leaves.keys().map(|p| p.iter().map(|c| c - 1).collect()).collect();
    for w in paths.windows(2) {
        if w[1].starts_with(&w[0]) {
            bail!("map module paths are inconsistent: a leaf module contains another module");
        }
    }
    let hierarchy = paths.iter().any(|p| p.len() > 1).then(|| Hierarchy {
        codelength: hierarchical_codelength(flow, &assignment, &paths),
        leaf_paths: paths.clone(),
    });
    Ok(ModuleMap {
        modules: module_stats(flow, &assignment),
        codelength: map_equation(flow, &assignment),
        assignment,
        hierarchy,
    })
}

fn write_map<T: serde::Serialize>(
    out: &Artifacts,
    config: &mut RunConfig<'_, T>,
    model_net: &StateNetwork,
    r: usize,
    a: &MapArgs,
) -> Result<ModuleMap> {
    let flow = FlowNetwork::new(model_net, a.mode.into())?;
    let map = map_model(&flow, a);
    out.write(config, &format!("r{r}.snet"), |w| Ok(model_net.write(w)?))?;
    out.write(config, &format!("r{r}.tree"), |w| Ok(write_tree(model_net, &flow, &map, w)?))?;
    println!(
        "r = {r}: {} modules, codelength {} bits",
        map.module_count(),
        fmt_sig(map.best_codelength(), 10)
    );
    Ok(map)
}

pub fn build(a: &BuildArgs, threads: usize) -> Result<()> {
    let out = Artifacts::new(&a.output, &a.corpus.input)?;
    let mut config = RunConfig::new("build", &a.output, threads, a).input(&a.corpus.input);
    config.order = Some(a.corpus.order);
    let (_, net) = load_network(&a.corpus)?;
    out.write(&mut config, "snet", |w| Ok(net.write(w)?))?;
    println!(
        "{} states over {} physical nodes, {} links",
        net.state_count(),
        net.physical_with_states(),
        net.link_count()
    );
    config.write(&out)
}

pub fn lump(a: &LumpArgs, threads: usize) -> Result<()> {
    let out = Artifacts::new(&a.output, &a.corpus.input)?;
    let mut config = RunConfig::new("lump", &a.output, threads, a).input(&a.corpus.input);
    config.order = Some(a.corpus.order);
    let (_, net) = load_network(&a.corpus)?;
    let dendros = build_dendrograms(&net, &lump_options(a.exact));
    out.write(&mut config, "dendro", |w| Ok(write_dendrograms(&net, &dendros, w)?))?;
    if let Some(r) = a.target_r {
        let model = Expander::new(&net, &dendros).model(r)?;
        config.target_r = Some(r);
        out.write(&mut config, &format!("r{r}.snet"), |w| Ok(model.network.write(w)?))?;
        println!("r = {r}: entropy rate {} bits", fmt_sig(model.entropy_rate_bits, 10));
    }
    config.write(&out)
}

pub fn cluster(a: &ClusterArgs, threads: usize) -> Result<()> {
    let out = Artifacts::new(&a.output, &a.corpus.input)?;
    let mut config = RunConfig::new("cluster", &a.output, threads, a).input(&a.corpus.input);
    config.order = Some(a.corpus.order);
    config.seed = Some(a.map.seed);
    config.trials = Some(a.map.trials);
    let (_, net) = load_network(&a.corpus)?;
    let dendros = match &a.dendro {
        Some(p) => {
            config.inputs.push(p.display().to_string());
            load_dendrograms(p, &net)?
        }
        None => build_dendrograms(&net, &lump_options(a.exact)),
    };
    let ex = Expander::new(&net, &dendros);
    let r = a.target_r.unwrap_or(ex.max_states());
    let model = ex.model(r)?;
    config.target_r = Some(r);
    write_map(&out, &mut config, &model.network, r, &a.map)?;
    config.write(&out)
}

pub fn cv(a: &CvArgs, threads: usize) -> Result<()> {
    if a.target_r.is_some() {
        return Err(Usage("--target-r cannot be combined with cv: cross-validation selects the model size".into()).into());
    }
    let out = Artifacts::new(&a.output, &a.corpus.input)?;
    let mut config = RunConfig::new("cv", &a.output, threads, a).input(&a.corpus.input);
    config.cv = true;
    config.order = Some(a.corpus.order);
    config.k = Some(a.k);
    config.seed = Some(a.seed);
    config.trials = Some(a.fold_trials);
    config.schedule_factor = Some(a.schedule_factor);
    let (corpus, net) = load_network(&a.corpus)?;
    let opts = CvOptions {
        k: a.k,
        seed: a.seed,
        order: a.corpus.order,
        grouped: a.corpus.grouped,
        schedule_factor: a.schedule_factor,
        schedule: a.schedule.clone(),
        trials: a.fold_trials,
        mode: a.mode.into(),
        early_stop: !a.no_early_stop,
        lump: lump_options(a.exact),
    };
    let report = sweep(&corpus, &opts)?;
    out.write(&mut config, "cv.tsv", |w| Ok(report.write_tsv(w)?))?;
    out.write(&mut config, "cv.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })?;
    for (r, fold) in &report.clamped {
        eprintln!("warning: fold {fold} has fewer than {r} training states; clamped");
    }
    let r = report.selected_r;
    config.target_r = Some(r);
    println!("selected r = {r} of {} states (N = {})", report.total_states, report.n);

    let dendros = build_dendrograms(&net, &opts.lump);
    out.write(&mut config, "dendro", |w| Ok(write_dendrograms(&net, &dendros, w)?))?;
    let model = Expander::new(&net, &dendros).model(r)?;
    write_map(&out, &mut config, &model.network, r, &a.final_map())?;
    config.write(&out)
}

pub fn metrics(a: &MetricsArgs, threads: usize) -> Result<()> {
    if a.map.is_none() && a.dendro.is_none() {
        return Err(Usage("metrics needs --map, --dendro or both".into()).into());
    }
    let main_input = a.map.as_deref().unwrap_or(&a.network);
    let out = Artifacts::new(&a.output, main_input)?;
    let mut config = RunConfig::new("metrics", &a.output, threads, a).input(&a.network);
    let net = read_network(&a.network)?;
    let mut summary = serde_json::Map::new();

    if let Some(map_path) = &a.map {
        config.inputs.push(map_path.display().to_string());
        let flow = FlowNetwork::new(&net, a.mode.into())?;
        let entries = read_tree(open(map_path)?).with_context(|| format!("cannot read map {}", map_path.display()))?;
        let map = map_from_tree(&entries, &flow)?;
        let basis = format!("{} ({} states)", map_path.display(), net.state_count());
        let persistence = flow_persistence(&flow, &map.assignment, &basis)?;
        let physical = physical_persistence(&flow, &map.assignment, net.nodes().len())?;
        let threshold = (a.overlap_threshold > 0.0).then_some(a.overlap_threshold);
        let overlap = overlap_table(&net, &flow, &map.assignment, threshold)?;
        let modules = count_modules(&flow, &map.assignment, a.module_threshold)?;
        out.write(&mut config, "persistence.tsv", |w| Ok(persistence.write_tsv(w)?))?;
        out.write(&mut config, "overlap.tsv", |w| Ok(overlap.write_tsv(w)?))?;
        println!(
            "persistence {} (physical projection {}), {modules} modules above {}",
            fmt_sig(persistence.overall, 6),
            fmt_sig(physical.overall, 6),
            fmt_sig(a.module_threshold, 6)
        );
        summary.insert("persistence".into(), serde_json::to_value(&persistence)?);
        summary.insert("physical_persistence".into(), serde_json::to_value(&physical)?);
        summary.insert("modules_above_threshold".into(), json!(modules));
        summary.insert("overlap".into(), serde_json::to_value(&overlap)?);
        if let Some(cpath) = &a.classification {
            config.inputs.push(cpath.display().to_string());
            let classes = read_classification(open(cpath)?)?;
            if !classes.diagnostics.is_empty() {
                eprintln!(
                    "warning: skipped {} malformed lines in {} (first: {})",
                    classes.diagnostics.len(),
                    cpath.display(),
                    classes.diagnostics[0]
                );
            }
            let ext = external_persistence(&net, &flow, &classes)?;
            out.write(&mut config, "external.tsv", |w| Ok(ext.write_tsv(w)?))?;
            println!(
                "classification persistence {} at coverage {}",
                fmt_sig(ext.persistence, 6),
                fmt_sig(ext.coverage, 6)
            );
            summary.insert("external".into(), serde_json::to_value(&ext)?);
        }
    }

    if let Some(dpath) = &a.dendro {
        config.inputs.push(dpath.display().to_string());
        let dendros = load_dendrograms(dpath, &net)?;
        let ex = Expander::new(&net, &dendros);
        let sizes = match &a.sizes {
            Some(s) => s.clone(),
            None => geometric_schedule(ex.min_states(), ex.max_states(), a.schedule_factor)?,
        };
        config.schedule_factor = a.sizes.is_none().then_some(a.schedule_factor);
        let alloc = state_allocation(&ex, &sizes)?;
        out.write(&mut config, "allocation.tsv", |w| Ok(alloc.write_tsv(&net, w)?))?;
        summary.insert("allocation".into(), serde_json::to_value(&alloc)?);
    }

    out.write(&mut config, "metrics.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &summary)?;
        Ok(writeln!(w)?)
    })?;
    config.write(&out)
}

pub fn export(a: &ExportArgs, threads: usize) -> Result<()> {
    let out = Artifacts::new(&a.output, &a.map)?;
    let mut config = RunConfig::new("export", &a.output, threads, a).input(&a.network).input(&a.map);
    let net = read_network(&a.network)?;
    let flow = FlowNetwork::new(&net, a.mode.into())?;
    let entries = read_tree(open(&a.map)?).with_context(|| format!("cannot read map {}", a.map.display()))?;
    let map = map_from_tree(&entries, &flow)?;
    let exported = export_json(&net, &flow, &map);
    if a.json || !a.tsv {
        out.write(&mut config, "map.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &exported)?;
            Ok(writeln!(w)?)
        })?;
    }
    if a.tsv {
        out.write(&mut config, "modules.tsv", |w| {
            writeln!(w, "id\tpath\tflow\texit\tenter\tstates\tphysical")?;
            for m in &exported.modules {
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    m.id,
                    m.path,
                    fmt_sig(m.flow, 12),
                    fmt_sig(m.exit, 12),
                    fmt_sig(m.enter, 12),
                    m.states.len(),
                    m.physical.len()
                )?;
            }
            Ok(())
        })?;
    }
    config.write(&out)
}

pub fn synth(a: &SynthArgs, threads: usize) -> Result<()> {
    let params = SynthParams {
        nodes: a.n,
        modules: a.modules,
        hubs: a.planted_hubs,
        rho: a.rho,
        hub_prob: a.hub_prob,
        path_len: a.path_len,
        paths: a.paths,
        seed: a.seed,
    };
    let stem = format!("synth_n{}_h{}_seed{}", a.n, a.planted_hubs, a.seed);
    let out = Artifacts::new(&a.output, Path::new(&stem))?;
    let mut config = RunConfig::new("synth", &a.output, threads, a);
    config.seed = Some(a.seed);
    let s = generate(&params)?;
    out.write(&mut config, "paths", |w| Ok(write_paths(&s.corpus, w)?))?;
    out.write(&mut config, "truth.tsv", |w| {
        writeln!(w, "name\tmodule")?;
        for node in s.corpus.nodes() {
            let m = s.module_of[node.id as usize].map_or("hub".to_string(), |m| m.to_string());
            writeln!(w, "{}\t{m}", node.name)?;
        }
        Ok(())
    })?;
    config.write(&out)
}
