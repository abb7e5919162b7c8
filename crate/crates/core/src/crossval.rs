//! k-fold cross-validation of the model size by validation code length.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::corpus::{build_state_network, PathCorpus, RateMode, StateNetwork};
use crate::error::{Error, Result};
use crate::lumping::{build_dendrograms, Expander, LumpDendrogram, LumpOptions, SparseModel};
use crate::mapeq::{map_equation, optimize, FlowNetwork, ModuleMap, OptimizeOptions};
use crate::util::{derive_seed, fmt_sig, median};

/// Fold id of every path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub fold_of: Vec<u32>,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] as usize == f).collect()
    }

    pub fn complement(&self, f: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] as usize != f).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f as usize] += 1;
        }
        s
    }
}

/// Shuffles paths within each group (groups in key order) and deals them to folds
/// round-robin with one counter running across groups. Without grouping all paths form
/// one group.
pub fn split_folds(corpus: &PathCorpus, k: usize, seed: u64, grouped: bool) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 folds, got {k}")));
    }
    if k > corpus.len() {
        return Err(Error::TooManyFolds {
            k,
            population: corpus.len(),
        });
    }
    let mut groups: BTreeMap<Option<&str>, Vec<usize>> = BTreeMap::new();
    for (i, p) in corpus.paths().iter().enumerate() {
        let key = if grouped { p.group.as_deref() } else { None };
        groups.entry(key).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0u32; corpus.len()];
    let mut counter = 0usize;
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = (counter % k) as u32;
            counter += 1;
        }
    }
    Ok(FoldPlan { k, fold_of })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    pub order: usize,
    pub grouped: bool,
    pub schedule_factor: f64,
    /// Explicit model sizes; overrides the geometric schedule.
    pub schedule: Option<Vec<usize>>,
    /// Optimizer trials per fold and model size.
    pub trials: usize,
    pub mode: RateMode,
    pub early_stop: bool,
    pub lump: LumpOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 7,
            order: 2,
            grouped: false,
            schedule_factor: std::f64::consts::SQRT_2,
            schedule: None,
            trials: 3,
            mode: RateMode::Empirical,
            early_stop: true,
            lump: LumpOptions::default(),
        }
    }
}

/// `ceil(n * factor^i)` for `i = 0, 1, ...`, deduplicated and capped at `max`, which is
/// always the last entry.
pub fn geometric_schedule(n: usize, max: usize, factor: f64) -> Result<Vec<usize>> {
    if !(factor > 1.0) || !factor.is_finite() {
        return Err(Error::InvalidSchedule(format!("factor must exceed 1, got {factor}")));
    }
    if n == 0 || n > max {
        return Err(Error::InvalidSchedule(format!("bad range {n}..={max}")));
    }
    let mut out = vec![n];
    let mut i = 1;
    loop {
        let r = ((n as f64) * factor.powi(i)).ceil() as usize;
        if r >= max {
            break;
        }
        if r > *out.last().unwrap() {
            out.push(r);
        }
        i += 1;
    }
    if *out.last().unwrap() < max {
        out.push(max);
    }
    Ok(out)
}

/// Result of one fold at one model size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub r: usize,
    pub fold: usize,
    /// Model size actually used after clamping to the fold's training range.
    pub r_used: usize,
    pub train_bits: Option<f64>,
    pub valid_bits: Option<f64>,
    /// Validation weight on physical nodes unseen in training.
    pub dropped_weight: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub r: usize,
    pub valid_folds: usize,
    pub median_train: Option<f64>,
    pub median_valid: Option<f64>,
    pub min_valid: Option<f64>,
    pub max_valid: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub seed: u64,
    pub order: usize,
    pub trials: usize,
    pub mode: RateMode,
    /// Physical nodes owning states in the full corpus.
    pub n: usize,
    pub total_states: usize,
    /// Planned model sizes; evaluation may stop early.
    pub schedule: Vec<usize>,
    pub points: Vec<CvPoint>,
    pub summary: Vec<CvSummary>,
    pub selected_r: usize,
    pub stopped_early: bool,
    /// Points where some fold's model size was clamped.
    pub clamped: Vec<(usize, usize)>,
}

impl CvReport {
    pub fn median_valid(&self, r: usize) -> Option<f64> {
        self.summary.iter().find(|s| s.r == r).and_then(|s| s.median_valid)
    }

    /// Tab-separated `r fold train_bits valid_bits dropped_weight` rows followed by a
    /// `#`-prefixed summary block.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        let opt = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| fmt_sig(v, 17));
        writeln!(w, "r\tfold\ttrain_bits\tvalid_bits\tdropped_weight")?;
        for p in &self.points {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                p.r,
                p.fold,
                opt(p.train_bits),
                opt(p.valid_bits),
                fmt_sig(p.dropped_weight, 17)
            )?;
        }
        writeln!(w, "# summary")?;
        writeln!(w, "# r\tvalid_folds\tmedian_train\tmedian_valid\tmin_valid\tmax_valid")?;
        for s in &self.summary {
            writeln!(
                w,
                "# {}\t{}\t{}\t{}\t{}\t{}",
                s.r,
                s.valid_folds,
                opt(s.median_train),
                opt(s.median_valid),
                opt(s.min_valid),
                opt(s.max_valid)
            )?;
        }
        writeln!(w, "# k {} seed {} order {} trials {}", self.k, self.seed, self.order, self.trials)?;
        writeln!(w, "# stopped_early {}", self.stopped_early)?;
        writeln!(w, "# selected_r {}", self.selected_r)?;
        Ok(())
    }
}

/// Training side of one fold: lumped models of any size and their maps.
pub struct TrainedFold {
    pub network: StateNetwork,
    pub dendrograms: Vec<LumpDendrogram>,
}

impl TrainedFold {
    pub fn new(training: &PathCorpus, order: usize, lump: &LumpOptions) -> Result<Self> {
        let (network, _) = build_state_network(training, order)?;
        let dendrograms = build_dendrograms(&network, lump);
        Ok(Self { network, dendrograms })
    }

    pub fn expander(&self) -> Expander<'_> {
        Expander::new(&self.network, &self.dendrograms)
    }
}

/// Expands the training model to `r` states and maps it.
pub fn train_fold(fold: &TrainedFold, r: usize, mode: RateMode, opts: &OptimizeOptions) -> Result<(SparseModel, ModuleMap)> {
    let model = fold.expander().model(r)?;
    let flow = FlowNetwork::new(&model.network, mode)?;
    let map = optimize(&flow, opts);
    Ok((model, map))
}

/// Validation flow projected onto a training model.
#[derive(Debug, Clone)]
pub struct Projection {
    /// Training lumped states with validation link weights.
    pub network: StateNetwork,
    pub dropped_weight: f64,
}

/// Maps validation states onto the training model's lumped states: an exact
/// `(context, physical)` match goes to that training state's block; otherwise the
/// lumped state of the same physical node with the largest training weight. Links
/// touching physical nodes without training states are dropped.
pub fn project_validation(train_net: &StateNetwork, model: &SparseModel, validation: &StateNetwork) -> Result<Projection> {
    let index = train_net.state_index();
    let lumped = &model.network;
    let mut heaviest: FxHashMap<u32, u32> = FxHashMap::default();
    for s in lumped.states() {
        let w = lumped.out_weight(s.id);
        heaviest
            .entry(s.physical)
            .and_modify(|best| {
                if w > lumped.out_weight(*best) {
                    *best = s.id;
                }
            })
            .or_insert(s.id);
    }
    let target: Vec<Option<u32>> = validation
        .states()
        .iter()
        .map(|s| {
            let mut key = s.context.clone();
            key.push(s.physical);
            match index.get(&key) {
                Some(&t) => Some(model.partition[t as usize]),
                None => heaviest.get(&s.physical).copied(),
            }
        })
        .collect();
    let mut links = Vec::with_capacity(validation.link_count());
    let mut dropped = 0.0;
    for (u, v, w) in validation.all_links() {
        match (target[u as usize], target[v as usize]) {
            (Some(a), Some(b)) => links.push((a, b, w)),
            _ => dropped += w,
        }
    }
    if links.is_empty() {
        return Err(Error::NoProjectableFlow);
    }
    let network = StateNetwork::from_parts(lumped.order(), lumped.shared_nodes(), lumped.states().to_vec(), links)?;
    Ok(Projection {
        network,
        dropped_weight: dropped,
    })
}

/// Validation code length: the map equation of the projected validation flow under the
/// training assignment.
pub fn validate_fold(
    train_net: &StateNetwork,
    model: &SparseModel,
    map: &ModuleMap,
    validation: &StateNetwork,
    mode: RateMode,
) -> Result<(f64, f64)> {
    let p = project_validation(train_net, model, validation)?;
    let flow = FlowNetwork::new(&p.network, mode)?;
    Ok((map_equation(&flow, &map.assignment), p.dropped_weight))
}

struct FoldJob {
    trained: TrainedFold,
    validation: Option<StateNetwork>,
    setup_error: Option<String>,
}

/// Cross-validated sweep over model sizes. Each schedule point is evaluated on all folds
/// (in parallel); the sweep stops early once the median validation code length has
/// exceeded the best median at two consecutive points after it.
pub fn sweep(corpus: &PathCorpus, opts: &CvOptions) -> Result<CvReport> {
    let (full, _) = build_state_network(corpus, opts.order)?;
    let n = full.physical_with_states();
    let total_states = full.state_count();
    let schedule = match &opts.schedule {
        Some(s) => {
            if s.is_empty() || s[0] != n || s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidSchedule(format!(
                    "schedule must be strictly increasing and start at {n}"
                )));
            }
            s.clone()
        }
        None => geometric_schedule(n, total_states, opts.schedule_factor)?,
    };
    let plan = split_folds(corpus, opts.k, opts.seed, opts.grouped)?;
    let lump = opts.lump;

    let jobs: Vec<FoldJob> = (0..opts.k)
        .into_par_iter()
        .map(|f| {
            let setup = || -> Result<(TrainedFold, StateNetwork)> {
                let training = corpus.subset(plan.complement(f))?;
                let validation = corpus.subset(plan.fold(f))?;
                let trained = TrainedFold::new(&training, opts.order, &lump)?;
                let (vnet, _) = build_state_network(&validation, opts.order)?;
                Ok((trained, vnet))
            };
            match setup() {
                Ok((trained, v)) => FoldJob {
                    trained,
                    validation: Some(v),
                    setup_error: None,
                },
                Err(e) => FoldJob {
                    trained: TrainedFold {
                        network: full.clone(),
                        dendrograms: Vec::new(),
                    },
                    validation: None,
                    setup_error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut points = Vec::new();
    let mut summary: Vec<CvSummary> = Vec::new();
    let mut clamped = Vec::new();
    let mut best: Option<(f64, usize)> = None;
    let mut worse_in_a_row = 0;
    let mut stopped_early = false;
    for &r in &schedule {
        let row: Vec<CvPoint> = jobs
            .par_iter()
            .enumerate()
            .map(|(f, job)| evaluate(job, f, r, opts))
            .collect();
        for p in &row {
            if p.r_used != r && p.error.is_none() {
                clamped.push((r, p.fold));
            }
        }
        let valid: Vec<&CvPoint> = row.iter().filter(|p| p.valid_bits.is_some()).collect();
        let enough = valid.len() + 2 >= opts.k && !valid.is_empty();
        let vals: Vec<f64> = valid.iter().map(|p| p.valid_bits.unwrap()).collect();
        let trains: Vec<f64> = valid.iter().map(|p| p.train_bits.unwrap()).collect();
        let s = CvSummary {
            r,
            valid_folds: valid.len(),
            median_train: enough.then(|| median(&trains)),
            median_valid: enough.then(|| median(&vals)),
            min_valid: enough.then(|| vals.iter().copied().fold(f64::INFINITY, f64::min)),
            max_valid: enough.then(|| vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        };
        points.extend(row);
        if let Some(m) = s.median_valid {
            if best.is_none_or(|(b, _)| m < b) {
                best = Some((m, r));
                worse_in_a_row = 0;
            } else {
                worse_in_a_row += 1;
            }
        }
        summary.push(s);
        if opts.early_stop && worse_in_a_row >= 2 && r != *schedule.last().unwrap() {
            stopped_early = true;
            break;
        }
    }
    let selected_r = best
        .ok_or(Error::TooFewValidFolds {
            r: schedule[0],
            valid: summary.first().map_or(0, |s| s.valid_folds),
            k: opts.k,
        })?
        .1;
    Ok(CvReport {
        k: opts.k,
        seed: opts.seed,
        order: opts.order,
        trials: opts.trials,
        mode: opts.mode,
        n,
        total_states,
        schedule,
        points,
        summary,
        selected_r,
        stopped_early,
        clamped,
    })
}

fn evaluate(job: &FoldJob, fold: usize, r: usize, opts: &CvOptions) -> CvPoint {
    let mut point = CvPoint {
        r,
        fold,
        r_used: r,
        train_bits: None,
        valid_bits: None,
        dropped_weight: 0.0,
        error: job.setup_error.clone(),
    };
    let Some(validation) = &job.validation else {
        return point;
    };
    let ex = job.trained.expander();
    let r_used = r.clamp(ex.min_states(), ex.max_states());
    point.r_used = r_used;
    let run = || -> Result<(f64, f64, f64)> {
        let oo = OptimizeOptions {
            trials: opts.trials,
            seed: derive_seed(opts.seed, &[fold as u64, r as u64]),
        };
        let (model, map) = train_fold(&job.trained, r_used, opts.mode, &oo)?;
        let (valid, dropped) = validate_fold(&job.trained.network, &model, &map, validation, opts.mode)?;
        Ok((map.codelength, valid, dropped))
    };
    match run() {
        Ok((t, v, d)) => {
            point.train_bits = Some(t);
            point.valid_bits = Some(v);
            point.dropped_weight = d;
        }
        Err(e) => point.error = Some(e.to_string()),
    }
    point
}
