//! Artificial trials from recombined IMF layers of same-class trials.
//!
//! Every trial of a class is reduced to exactly `max_imf` layers (its selected
//! IMFs, topped up with discarded ones or zero layers). An artificial trial
//! takes layer `i` from the `i`-th trial of a random tuple of distinct
//! sources and sums the layers.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::SelectionReport;
use crate::signal::{ClassLabel, DatasetMetadata, ImfDecomposition, Trial, TrialDataset};

/// Rejected draws tolerated before giving up on finding fresh tuples.
pub const MAX_REJECTIONS: usize = 10_000;

/// Largest selected-set size among the given reports.
pub fn max_imf_count(reports: &[SelectionReport]) -> Result<usize> {
    reports
        .iter()
        .map(|r| r.selected.len())
        .max()
        .ok_or_else(|| Error::domain("max_imf needs at least one selection report"))
}

/// Exactly `max_imf` layers of `d`, ordered by IMF index, zero layers last.
pub fn normalize_imf_set(d: &ImfDecomposition, report: &SelectionReport, max_imf: usize) -> Result<Vec<Array2<f64>>> {
    let n = d.n_imfs();
    if report.selected.len() > max_imf {
        return Err(Error::domain(format!(
            "trial {} has {} selected IMFs, more than max_imf = {max_imf}",
            d.source_trial_id,
            report.selected.len()
        )));
    }
    if let Some(&bad) = report.selected.iter().find(|&&i| i == 0 || i > n) {
        return Err(Error::domain(format!("selected IMF {bad} outside 1..={n}")));
    }
    let mut chosen: Vec<usize> = report.selected.clone();
    if n >= max_imf {
        let entropy = report.index_mean_entropy();
        let mut discarded: Vec<usize> = (1..=n).filter(|i| !chosen.contains(i)).collect();
        // stable sort keeps the faster mode first among equal entropies
        discarded.sort_by(|&a, &b| {
            let ea = entropy.get(a - 1).copied().unwrap_or(0.0);
            let eb = entropy.get(b - 1).copied().unwrap_or(0.0);
            eb.total_cmp(&ea)
        });
        chosen.extend(discarded.into_iter().take(max_imf - chosen.len()));
    } else {
        chosen = (1..=n).collect();
    }
    chosen.sort_unstable();
    let shape = d.residuum.dim();
    let mut layers: Vec<Array2<f64>> = chosen.iter().map(|&i| d.imfs[i - 1].clone()).collect();
    layers.resize(max_imf, Array2::zeros(shape));
    Ok(layers)
}

/// One original trial and its normalised layers.
#[derive(Debug, Clone)]
pub struct SourceTrial {
    pub trial: Trial,
    pub layers: Vec<Array2<f64>>,
}

impl SourceTrial {
    /// Sum of all layers, the trial as seen downstream.
    pub fn reconstructed(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.trial.signal.data().dim());
        for l in &self.layers {
            acc += l;
        }
        acc
    }
}

/// Source tuples drawn for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecombinationPlan {
    pub class: ClassLabel,
    pub max_imf: usize,
    pub rng_seed: u64,
    /// Entry `i` of a tuple names the trial that contributes layer `i + 1`.
    pub tuples: Vec<Vec<u32>>,
    pub artificial_ids: Vec<u32>,
}

/// Number of ordered tuples of `k` distinct items out of `n`, saturating.
pub fn tuple_capacity(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

fn draw_tuples(n: usize, k: usize, count: usize, rng: &mut ChaCha8Rng, context: &str) -> Result<Vec<Vec<usize>>> {
    let bound = tuple_capacity(n, k);
    if count as u128 > bound {
        return Err(Error::Capacity {
            requested: count as u128,
            bound,
            context: context.to_string(),
        });
    }
    let mut seen = HashSet::with_capacity(count);
    let mut tuples = Vec::with_capacity(count);
    let mut rejections = 0usize;
    while tuples.len() < count {
        let t: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        let distinct = (0..k).all(|i| !t[..i].contains(&t[i]));
        if distinct && seen.insert(t.clone()) {
            tuples.push(t);
        } else {
            rejections += 1;
            if rejections > MAX_REJECTIONS {
                return Err(Error::Capacity {
                    requested: count as u128,
                    bound,
                    context: format!("{context}: gave up after {MAX_REJECTIONS} rejected draws"),
                });
            }
        }
    }
    Ok(tuples)
}

fn assemble(sources: &[&SourceTrial], tuple: &[usize]) -> Array2<f64> {
    let mut acc = Array2::zeros(sources[tuple[0]].layers[0].dim());
    for (slot, &src) in tuple.iter().enumerate() {
        acc += &sources[src].layers[slot];
    }
    acc
}

/// Draws `count` artificial trials from same-class `sources`.
///
/// Trials get ids `first_id, first_id + 1, …` and borrow run, segments and
/// label from the first source.
pub fn generate_artificial_trials(
    sources: &[SourceTrial],
    count: usize,
    seed: u64,
    first_id: u32,
) -> Result<(Vec<Trial>, RecombinationPlan)> {
    let refs: Vec<&SourceTrial> = sources.iter().collect();
    generate_from(&refs, count, seed, first_id)
}

fn generate_from(
    sources: &[&SourceTrial],
    count: usize,
    seed: u64,
    first_id: u32,
) -> Result<(Vec<Trial>, RecombinationPlan)> {
    let first = sources
        .first()
        .ok_or_else(|| Error::domain("no source trials"))?;
    let max_imf = first.layers.len();
    let class = first.trial.label;
    if sources.iter().any(|s| s.layers.len() != max_imf || s.trial.label != class) {
        return Err(Error::domain("sources must share one class and one layer count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tuples = if count == 0 {
        Vec::new()
    } else {
        draw_tuples(sources.len(), max_imf, count, &mut rng, &format!("class {class}"))?
    };
    let mut trials = Vec::with_capacity(count);
    let mut plan = RecombinationPlan {
        class,
        max_imf,
        rng_seed: seed,
        tuples: Vec::with_capacity(count),
        artificial_ids: Vec::with_capacity(count),
    };
    for (k, t) in tuples.iter().enumerate() {
        let id = first_id + k as u32;
        let signal = first.trial.signal.with_data(assemble(sources, t))?;
        trials.push(Trial::new(
            signal,
            class,
            first.trial.run_id,
            id,
            first.trial.segments.clone(),
        )?);
        plan.tuples.push(t.iter().map(|&i| sources[i].trial.trial_id).collect());
        plan.artificial_ids.push(id);
    }
    Ok((trials, plan))
}

#[derive(Debug, Clone)]
struct ClassPool {
    max_imf: usize,
    // positions in the dataset, in dataset order
    members: Vec<usize>,
}

/// Normalised layers of every trial of a run, grouped by class.
#[derive(Debug, Clone)]
pub struct AugmentPool {
    sources: Vec<SourceTrial>,
    classes: BTreeMap<ClassLabel, ClassPool>,
    metadata: DatasetMetadata,
    reconstructed: TrialDataset,
}

impl AugmentPool {
    /// Pairs each trial with its decomposition and selection report by trial id.
    pub fn new(d: &TrialDataset, decs: &[ImfDecomposition], reports: &[SelectionReport]) -> Result<Self> {
        let dec_by_id: BTreeMap<u32, &ImfDecomposition> = decs.iter().map(|x| (x.source_trial_id, x)).collect();
        let rep_by_id: BTreeMap<u32, &SelectionReport> = reports.iter().map(|x| (x.trial_id, x)).collect();
        let mut classes: BTreeMap<ClassLabel, ClassPool> = BTreeMap::new();
        for (pos, t) in d.trials().iter().enumerate() {
            let rep = rep_by_id
                .get(&t.trial_id)
                .ok_or_else(|| Error::domain(format!("no selection report for trial {}", t.trial_id)))?;
            let entry = classes.entry(t.label).or_insert(ClassPool {
                max_imf: 0,
                members: Vec::new(),
            });
            entry.max_imf = entry.max_imf.max(rep.selected.len());
            entry.members.push(pos);
        }
        let mut sources = Vec::with_capacity(d.len());
        for t in d.trials() {
            let dec = dec_by_id
                .get(&t.trial_id)
                .ok_or_else(|| Error::domain(format!("no decomposition for trial {}", t.trial_id)))?;
            if dec.shape() != t.signal.data().dim() {
                return Err(Error::domain(format!(
                    "decomposition of trial {} has shape {:?}, trial is {:?}",
                    t.trial_id,
                    dec.shape(),
                    t.signal.data().dim()
                )));
            }
            let max_imf = classes[&t.label].max_imf;
            let layers = normalize_imf_set(dec, rep_by_id[&t.trial_id], max_imf)?;
            sources.push(SourceTrial {
                trial: t.clone(),
                layers,
            });
        }
        let metadata = d.metadata.clone();
        let rebuilt = sources
            .iter()
            .map(|s| {
                let mut t = s.trial.clone();
                t.signal = t.signal.with_data(s.reconstructed())?;
                Ok(t)
            })
            .collect::<Result<Vec<_>>>()?;
        let reconstructed = TrialDataset::new(rebuilt, metadata.clone())?;
        Ok(Self {
            sources,
            classes,
            metadata,
            reconstructed,
        })
    }

    /// Originals rebuilt from their normalised layers (the pct = 0 dataset).
    pub fn reconstructed(&self) -> &TrialDataset {
        &self.reconstructed
    }

    pub fn max_imf(&self, class: &ClassLabel) -> Option<usize> {
        self.classes.get(class).map(|c| c.max_imf)
    }

    pub fn sources(&self) -> &[SourceTrial] {
        &self.sources
    }
}

/// Per-class record of one substitution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSubstitution {
    pub plan: RecombinationPlan,
    pub substituted_ids: Vec<u32>,
}

/// What [`substitute_trials`] did.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionPlan {
    pub seed: u64,
    pub pct: f64,
    pub classes: Vec<ClassSubstitution>,
}

impl SubstitutionPlan {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Number of trials substituted in a class of `n` at `pct` percent.
pub fn substitution_count(n: usize, pct: f64) -> usize {
    (pct / 100.0 * n as f64).round() as usize
}

/// Replaces `pct` percent of each class by artificial trials, in place.
///
/// Kept trials are the pool's reconstructed originals. Artificial trials take
/// the slot, run and segments of the trial they replace and fresh ids above
/// every existing id.
pub fn substitute_trials(pool: &AugmentPool, pct: f64, seed: u64) -> Result<(TrialDataset, SubstitutionPlan)> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::domain(format!("substitution percentage {pct} outside [0, 100]")));
    }
    let mut trials: Vec<Trial> = pool.reconstructed.trials().to_vec();
    let mut next_id = trials.iter().map(|t| t.trial_id).max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = SubstitutionPlan {
        seed,
        pct,
        classes: Vec::new(),
    };
    for (class, cp) in &pool.classes {
        let n = cp.members.len();
        let count = substitution_count(n, pct);
        if count > n {
            return Err(Error::Capacity {
                requested: count as u128,
                bound: n as u128,
                context: format!("substituting class {class}"),
            });
        }
        let mut picked: Vec<usize> = sample(&mut rng, n, count).into_vec();
        picked.sort_unstable();
        let class_sources: Vec<&SourceTrial> = cp.members.iter().map(|&p| &pool.sources[p]).collect();
        let class_seed = rng.random::<u64>();
        let (artificial, rplan) = generate_from(&class_sources, count, class_seed, next_id)?;
        next_id += count as u32;
        let mut substituted_ids = Vec::with_capacity(count);
        for (slot, mut art) in picked.iter().zip(artificial) {
            let pos = cp.members[*slot];
            let replaced = &trials[pos];
            substituted_ids.push(replaced.trial_id);
            art.run_id = replaced.run_id;
            art.segments = replaced.segments.clone();
            trials[pos] = art;
        }
        plan.classes.push(ClassSubstitution {
            plan: rplan,
            substituted_ids,
        });
    }
    Ok((TrialDataset::new(trials, pool.metadata.clone())?, plan))
}
