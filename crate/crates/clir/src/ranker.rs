//! Linear ranking models over candidate feature vectors: a coordinate-ascent
//! trainer that directly maximizes mean average precision, a pairwise
//! hinge-loss trainer, and the scoring path that filters and normalizes a
//! candidate list into translation weights.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::labeling::TrainingInstance;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub final_training_map: f64,
    #[serde(default)]
    pub final_training_mrr: f64,
    /// Training metric after the start point and each accepted step of the
    /// winning search (coordinate ascent), or mean pair loss per epoch
    /// (hinge).
    #[serde(default)]
    pub trajectory: Vec<f64>,
    #[serde(default)]
    pub accepted_steps: u64,
    #[serde(default)]
    pub restarts: u32,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub learning_rate: f64,
    #[serde(default)]
    pub epochs: u32,
    #[serde(default)]
    pub reg: f64,
    #[serde(default)]
    pub final_pair_violations: u64,
    #[serde(default)]
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingModel {
    pub schema_hash: String,
    pub trainer: String,
    pub weights: Vec<f64>,
    pub meta: ModelMeta,
}

pub fn write_model(model: &RankingModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, model)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize model: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_model(path: &Path) -> Result<RankingModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let model: RankingModel = serde_json::from_reader(file)
        .map_err(|e| Error::parse(path, 0, format!("bad model file: {e}")))?;
    if model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput("model has non-finite weights".into()));
    }
    Ok(model)
}

/// Training points flattened into list-aware matrices: row-major for dot
/// products, column-major so a single-coordinate change can be re-scored in
/// O(points).
struct DataSet {
    rows: Vec<Vec<f64>>,
    cols: Vec<Vec<f64>>,
    labels: Vec<bool>,
    lists: Vec<(usize, usize)>,
    n_features: usize,
}

fn dataset_from_instances(instances: &[TrainingInstance], schema: &FeatureSchema) -> Result<DataSet> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("no training instances".into()));
    }
    let n_features = schema.len();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut lists = Vec::new();
    let mut has_mixed_list = false;
    for inst in instances {
        let start = rows.len();
        let mut pos = 0usize;
        let mut neg = 0usize;
        for cand in &inst.candidates {
            let features = cand.features.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "candidate {:?} of query {} has no features",
                    cand.word, inst.query_id
                ))
            })?;
            if features.len() != n_features {
                return Err(Error::SchemaMismatch {
                    expected: format!("{n_features} features"),
                    actual: format!("{}", features.len()),
                });
            }
            rows.push(features.clone());
            labels.push(cand.label);
            if cand.label {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos > 0 && neg > 0 {
            has_mixed_list = true;
        }
        lists.push((start, rows.len()));
    }
    if !has_mixed_list {
        return Err(Error::Degenerate(
            "training data has no list with both a positive and a negative candidate".into(),
        ));
    }
    let mut cols = vec![vec![0.0; rows.len()]; n_features];
    for (j, row) in rows.iter().enumerate() {
        for (k, &x) in row.iter().enumerate() {
            cols[k][j] = x;
        }
    }
    Ok(DataSet {
        rows,
        cols,
        labels,
        lists,
        n_features,
    })
}

/// Average precision of one list under `scores`; stable sort keeps candidate
/// order on ties. `None` when the list has no positive.
fn list_ap(
    scores: &[f64],
    labels: &[bool],
    start: usize,
    end: usize,
    order: &mut Vec<u32>,
) -> Option<f64> {
    let total_rel = labels[start..end].iter().filter(|&&l| l).count();
    if total_rel == 0 {
        return None;
    }
    order.clear();
    order.extend((start as u32)..(end as u32));
    order.sort_by(|&a, &b| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("scores are finite")
    });
    let mut rel_seen = 0usize;
    let mut sum = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx as usize] {
            rel_seen += 1;
            sum += rel_seen as f64 / (rank0 + 1) as f64;
        }
    }
    Some(sum / total_rel as f64)
}

fn mean_map(scores: &[f64], data: &DataSet, order: &mut Vec<u32>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for &(start, end) in &data.lists {
        if let Some(ap) = list_ap(scores, &data.labels, start, end, order) {
            total += ap;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn mean_mrr(scores: &[f64], data: &DataSet, order: &mut Vec<u32>) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for &(start, end) in &data.lists {
        if !data.labels[start..end].iter().any(|&l| l) {
            continue;
        }
        order.clear();
        order.extend((start as u32)..(end as u32));
        order.sort_by(|&a, &b| {
            scores[b as usize]
                .partial_cmp(&scores[a as usize])
                .expect("scores are finite")
        });
        let first = order
            .iter()
            .position(|&idx| data.labels[idx as usize])
            .expect("list has a positive");
        total += 1.0 / (first + 1) as f64;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        total / n as f64
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone)]
pub struct CaOptions {
    pub restarts: u32,
    pub epsilon: f64,
    pub seed: u64,
    pub max_passes: u32,
    /// Coordinates the search may move; the rest stay at their start value.
    pub active: Option<Vec<usize>>,
    /// Replaces the uniform default start, e.g. to warm-start from a
    /// previously trained model.
    pub init: Option<Vec<f64>>,
}

impl Default for CaOptions {
    fn default() -> Self {
        CaOptions {
            restarts: 8,
            epsilon: 1e-5,
            seed: 7,
            max_passes: 12,
            active: None,
            init: None,
        }
    }
}

const SEARCH_BOUND: f64 = 10.0;
const PROBE_GRID: [f64; 23] = [
    -10.0, -7.0, -5.0, -3.0, -2.0, -1.5, -1.0, -0.7, -0.4, -0.2, -0.1, 0.0, 0.1, 0.2, 0.4, 0.7,
    1.0, 1.5, 2.0, 3.0, 5.0, 7.0, 10.0,
];
const GOLDEN_ITERS: u32 = 24;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

struct SearchRun {
    weights: Vec<f64>,
    map: f64,
    trajectory: Vec<f64>,
    accepted: u64,
}

/// Cyclic single-coordinate maximization of training MAP from a fixed start:
/// each coordinate is probed on a coarse grid over [-10, 10] and the best
/// bracket is refined by golden-section search; a move is accepted only when
/// it beats the incumbent metric by more than `epsilon`.
fn coordinate_ascent_from(
    data: &DataSet,
    start: &[f64],
    active: &[usize],
    epsilon: f64,
    max_passes: u32,
) -> SearchRun {
    let points = data.rows.len();
    let mut w = start.to_vec();
    let mut scores: Vec<f64> = data.rows.iter().map(|row| dot(&w, row)).collect();
    let mut order: Vec<u32> = Vec::new();
    let mut current_map = mean_map(&scores, data, &mut order);
    let mut trajectory = vec![current_map];
    let mut accepted = 0u64;
    let mut base = vec![0.0; points];
    let mut trial = vec![0.0; points];

    for _ in 0..max_passes {
        let mut improved = false;
        for &k in active {
            let col = &data.cols[k];
            for j in 0..points {
                base[j] = scores[j] - w[k] * col[j];
            }
            let mut probes: Vec<f64> = PROBE_GRID.to_vec();
            if !probes.contains(&w[k]) {
                probes.push(w[k]);
                probes.sort_by(|a, b| a.partial_cmp(b).expect("finite weights"));
            }
            let mut best_x = w[k];
            let mut best_map = current_map;
            for &x in &probes {
                let m = eval_at(x, &base, col, &mut trial, data, &mut order);
                if m > best_map {
                    best_map = m;
                    best_x = x;
                }
            }
            // Golden-section refinement between the grid neighbors of the
            // best point seen so far.
            let pos = probes
                .iter()
                .position(|&x| x == best_x)
                .unwrap_or_else(|| probes.iter().position(|&x| x == w[k]).expect("w[k] probed"));
            let mut lo = if pos == 0 { -SEARCH_BOUND } else { probes[pos - 1] };
            let mut hi = if pos + 1 == probes.len() {
                SEARCH_BOUND
            } else {
                probes[pos + 1]
            };
            let mut x1 = hi - INV_PHI * (hi - lo);
            let mut x2 = lo + INV_PHI * (hi - lo);
            let mut f1 = eval_at(x1, &base, col, &mut trial, data, &mut order);
            let mut f2 = eval_at(x2, &base, col, &mut trial, data, &mut order);
            for (f, x) in [(f1, x1), (f2, x2)] {
                if f > best_map {
                    best_map = f;
                    best_x = x;
                }
            }
            for _ in 0..GOLDEN_ITERS {
                if f1 >= f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - INV_PHI * (hi - lo);
                    f1 = eval_at(x1, &base, col, &mut trial, data, &mut order);
                    if f1 > best_map {
                        best_map = f1;
                        best_x = x1;
                    }
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + INV_PHI * (hi - lo);
                    f2 = eval_at(x2, &base, col, &mut trial, data, &mut order);
                    if f2 > best_map {
                        best_map = f2;
                        best_x = x2;
                    }
                }
            }
            if best_map > current_map + epsilon {
                w[k] = best_x;
                for j in 0..points {
                    scores[j] = base[j] + best_x * col[j];
                }
                current_map = best_map;
                trajectory.push(current_map);
                accepted += 1;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    SearchRun {
        weights: w,
        map: current_map,
        trajectory,
        accepted,
    }
}

fn eval_at(
    x: f64,
    base: &[f64],
    col: &[f64],
    trial: &mut [f64],
    data: &DataSet,
    order: &mut Vec<u32>,
) -> f64 {
    for j in 0..base.len() {
        trial[j] = base[j] + x * col[j];
    }
    mean_map(trial, data, order)
}

/// Trains a linear model by coordinate ascent on training MAP with random
/// restarts. The default start spreads weight uniformly over the active
/// coordinates; every single-feature model (both signs) also competes for
/// selection, and if no search step is ever accepted the default start is
/// returned unchanged.
pub fn train_coordinate_ascent(
    instances: &[TrainingInstance],
    schema: &FeatureSchema,
    options: &CaOptions,
) -> Result<RankingModel> {
    let data = dataset_from_instances(instances, schema)?;
    let active: Vec<usize> = match &options.active {
        Some(list) => {
            for &k in list {
                if k >= data.n_features {
                    return Err(Error::InvalidInput(format!(
                        "active feature index {k} out of range (schema has {})",
                        data.n_features
                    )));
                }
            }
            list.clone()
        }
        None => (0..data.n_features).collect(),
    };
    if active.is_empty() {
        return Err(Error::InvalidInput("no active features".into()));
    }

    let uniform_start = match &options.init {
        Some(init) => {
            if init.len() != data.n_features {
                return Err(Error::InvalidInput(format!(
                    "init weight count {} does not match schema size {}",
                    init.len(),
                    data.n_features
                )));
            }
            init.clone()
        }
        None => {
            let mut w = vec![0.0; data.n_features];
            for &k in &active {
                w[k] = 1.0 / active.len() as f64;
            }
            w
        }
    };

    let mut starts = vec![uniform_start.clone()];
    for i in 1..options.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(
            options.seed.wrapping_add((i as u64).wrapping_mul(0x9E3779B97F4A7C15)),
        );
        let mut w = vec![0.0; data.n_features];
        for &k in &active {
            w[k] = rng.gen::<f64>() * 2.0 - 1.0;
        }
        starts.push(w);
    }

    let runs: Vec<SearchRun> = starts
        .par_iter()
        .map(|s| coordinate_ascent_from(&data, s, &active, options.epsilon, options.max_passes))
        .collect();
    let accepted_total: u64 = runs.iter().map(|r| r.accepted).sum();

    let finish = |run: SearchRun| -> RankingModel {
        let scores: Vec<f64> = data.rows.iter().map(|row| dot(&run.weights, row)).collect();
        let mut order = Vec::new();
        let mrr = mean_mrr(&scores, &data, &mut order);
        RankingModel {
            schema_hash: schema.hash.clone(),
            trainer: "coordinate_ascent".into(),
            weights: run.weights,
            meta: ModelMeta {
                final_training_map: run.map,
                final_training_mrr: mrr,
                trajectory: run.trajectory,
                accepted_steps: run.accepted,
                restarts: options.restarts,
                epsilon: options.epsilon,
                seed: options.seed,
                normalization: "per_list_minmax".into(),
                ..ModelMeta::default()
            },
        }
    };

    // Convergence contract: when epsilon rejects every candidate step in
    // every search, the default start is the result.
    if accepted_total == 0 {
        let mut runs = runs;
        return Ok(finish(runs.swap_remove(0)));
    }

    // Selection pool: the default-start search, every signed single-feature
    // model, then the random restarts; first strict maximum wins.
    let mut order = Vec::new();
    let mut trial = vec![0.0; data.rows.len()];
    let mut pool: Vec<SearchRun> = Vec::new();
    let mut runs_iter = runs.into_iter();
    pool.push(runs_iter.next().expect("at least one start"));
    for &k in &active {
        for sign in [1.0, -1.0] {
            for j in 0..trial.len() {
                trial[j] = sign * data.cols[k][j];
            }
            let m = mean_map(&trial, &data, &mut order);
            let mut w = vec![0.0; data.n_features];
            w[k] = sign;
            pool.push(SearchRun {
                weights: w,
                map: m,
                trajectory: vec![m],
                accepted: 0,
            });
        }
    }
    pool.extend(runs_iter);

    let mut best = 0;
    for (i, run) in pool.iter().enumerate() {
        if run.map > pool[best].map {
            best = i;
        }
    }
    Ok(finish(pool.swap_remove(best)))
}

#[derive(Debug, Clone)]
pub struct HingeOptions {
    pub learning_rate: f64,
    pub epochs: u32,
    pub reg: f64,
    pub seed: u64,
}

impl Default for HingeOptions {
    fn default() -> Self {
        HingeOptions {
            learning_rate: 0.1,
            epochs: 100,
            reg: 0.0,
            seed: 7,
        }
    }
}

/// Subgradient descent on margin-1 hinge loss over all (positive, negative)
/// pairs within each list, each pair weighted by the inverse pair count of
/// its list so long candidate lists do not dominate. An L2 penalty is applied
/// as a proximal shrink after every update.
pub fn train_pairwise_hinge(
    instances: &[TrainingInstance],
    schema: &FeatureSchema,
    options: &HingeOptions,
) -> Result<RankingModel> {
    let data = dataset_from_instances(instances, schema)?;
    let mut pairs: Vec<(u32, u32, f64)> = Vec::new();
    for &(start, end) in &data.lists {
        let positives: Vec<u32> = (start..end).filter(|&j| data.labels[j]).map(|j| j as u32).collect();
        let negatives: Vec<u32> = (start..end).filter(|&j| !data.labels[j]).map(|j| j as u32).collect();
        let count = positives.len() * negatives.len();
        if count == 0 {
            continue;
        }
        let weight = 1.0 / count as f64;
        for &p in &positives {
            for &n in &negatives {
                pairs.push((p, n, weight));
            }
        }
    }

    let mut w = vec![0.0; data.n_features];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut trajectory = Vec::with_capacity(options.epochs as usize);
    let shrink = 1.0 / (1.0 + options.learning_rate * options.reg);
    for _ in 0..options.epochs {
        shuffle(&mut pairs, &mut rng);
        let mut loss = 0.0;
        for &(p, n, pair_weight) in &pairs {
            let xp = &data.rows[p as usize];
            let xn = &data.rows[n as usize];
            let margin = dot(&w, xp) - dot(&w, xn);
            loss += pair_weight * (1.0 - margin).max(0.0);
            if margin < 1.0 {
                let step = options.learning_rate * pair_weight;
                for k in 0..w.len() {
                    w[k] += step * (xp[k] - xn[k]);
                }
            }
            if options.reg > 0.0 {
                for k in 0..w.len() {
                    w[k] *= shrink;
                }
            }
        }
        if !loss.is_finite() {
            return Err(Error::Degenerate(format!(
                "hinge loss became non-finite ({loss}); reduce the learning rate"
            )));
        }
        trajectory.push(loss / pairs.len().max(1) as f64);
    }

    let scores: Vec<f64> = data.rows.iter().map(|row| dot(&w, row)).collect();
    let violations = pairs
        .iter()
        .filter(|&&(p, n, _)| scores[p as usize] <= scores[n as usize])
        .count() as u64;
    let mut order = Vec::new();
    let map = mean_map(&scores, &data, &mut order);
    let mrr = mean_mrr(&scores, &data, &mut order);
    Ok(RankingModel {
        schema_hash: schema.hash.clone(),
        trainer: "pairwise_hinge".into(),
        weights: w,
        meta: ModelMeta {
            final_training_map: map,
            final_training_mrr: mrr,
            trajectory,
            learning_rate: options.learning_rate,
            epochs: options.epochs,
            reg: options.reg,
            seed: options.seed,
            final_pair_violations: violations,
            normalization: "per_list_minmax".into(),
            ..ModelMeta::default()
        },
    })
}

/// Fisher-Yates with our own index arithmetic so shuffles depend only on the
/// seeded stream, not on library version details.
fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.gen::<u64>() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub word: String,
    pub raw_score: f64,
    /// Share of the retained list's score mass, in [0, 1].
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RankedCandidates {
    pub entries: Vec<RankedCandidate>,
}

impl RankedCandidates {
    pub fn words(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.word.as_str()).collect()
    }

    pub fn top(&self) -> Option<&RankedCandidate> {
        self.entries.first()
    }
}

/// Scores candidates with the model, sorts descending (ties by word), drops
/// negative-scoring candidates, and normalizes the remaining scores to sum
/// to 1. When every candidate scores negative the single best one is kept
/// with weight 1; when all retained scores are 0 the mass is spread evenly.
pub fn score_and_rank(
    model: &RankingModel,
    schema: &FeatureSchema,
    candidates: &[(String, Vec<f64>)],
) -> Result<RankedCandidates> {
    if model.schema_hash != schema.hash {
        return Err(Error::SchemaMismatch {
            expected: model.schema_hash.clone(),
            actual: schema.hash.clone(),
        });
    }
    let mut scored: Vec<(String, f64)> = Vec::with_capacity(candidates.len());
    for (word, features) in candidates {
        if features.len() != schema.len() {
            return Err(Error::InvalidInput(format!(
                "candidate {:?} has {} features, schema has {}",
                word,
                features.len(),
                schema.len()
            )));
        }
        scored.push((word.clone(), dot(&model.weights, features)));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    let retained: Vec<(String, f64)> = if scored.iter().all(|(_, s)| *s < 0.0) {
        scored.into_iter().take(1).collect()
    } else {
        scored.into_iter().filter(|(_, s)| *s >= 0.0).collect()
    };
    Ok(RankedCandidates {
        entries: normalized(retained),
    })
}

fn normalized(retained: Vec<(String, f64)>) -> Vec<RankedCandidate> {
    if retained.is_empty() {
        return Vec::new();
    }
    let positive_sum: f64 = retained.iter().map(|(_, s)| s.max(0.0)).sum();
    let uniform = 1.0 / retained.len() as f64;
    retained
        .into_iter()
        .map(|(word, raw_score)| RankedCandidate {
            word,
            raw_score,
            weight: if positive_sum > 0.0 {
                raw_score.max(0.0) / positive_sum
            } else {
                uniform
            },
        })
        .collect()
}

/// Keeps the first `n` candidates and renormalizes their weights to sum to 1.
pub fn top_n(ranked: &RankedCandidates, n: usize) -> RankedCandidates {
    let mut entries: Vec<RankedCandidate> = ranked.entries.iter().take(n).cloned().collect();
    let sum: f64 = entries.iter().map(|e| e.weight).sum();
    if sum > 0.0 {
        for e in &mut entries {
            e.weight /= sum;
        }
    } else if !entries.is_empty() {
        let uniform = 1.0 / entries.len() as f64;
        for e in &mut entries {
            e.weight = uniform;
        }
    }
    RankedCandidates { entries }
}

/// Convenience for tests and diagnostics: candidate lists scored by a raw
/// weight vector without a trained model file.
pub fn model_from_weights(weights: Vec<f64>, schema: &FeatureSchema) -> RankingModel {
    RankingModel {
        schema_hash: schema.hash.clone(),
        trainer: "fixed".into(),
        weights,
        meta: ModelMeta::default(),
    }
}

/// Builds candidate lists for `score_and_rank` out of word/feature pairs.
pub fn candidate_list(words: &[String], matrix: Vec<Vec<f64>>) -> Vec<(String, Vec<f64>)> {
    words.iter().cloned().zip(matrix).collect()
}
