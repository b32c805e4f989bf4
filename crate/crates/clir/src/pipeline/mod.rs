//! Experiment orchestration: resource loading, lexicon mixing, the three
//! retrieval methods (single resource, linear combination, learned
//! reranking), significance testing, forward feature selection, and the
//! deterministic run manifest.

pub mod config;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, TokenizedText};
use crate::error::{Error, Result};
use crate::features::{self, FeatureSchema, Resource, ResourceKind};
use crate::labeling::{self, TrainingInstance};
use crate::lexicon::{self, Direction, Lexicon};
use crate::ranker::{
    self, CaOptions, HingeOptions, RankedCandidate, RankedCandidates, RankingModel,
};
use crate::retrieval::{
    self, Bm25Params, EvalResult, InvertedIndex, PairedTTest, Qrels, RunFile,
};

pub use config::{
    check_lambdas, load_config, resolve, AmbiguityConfig, ExperimentConfig, LabelingConfig,
    LinearConfig, LtrConfig, Model1Config, ResourceConfig, RetrievalConfig, TrainerConfig,
};
pub use synthetic::{generate_synthetic_world, SyntheticOptions, SyntheticSummary};

/// P(t|s) = Σ_i λ_i · P_i(t|s) over the union of entries; zero-probability
/// results are dropped and each source's list is re-sorted. Weights must be
/// non-negative and sum to 1 (±1e-9), covering every supplied lexicon.
pub fn linear_combine(
    lexicons: &[&Lexicon],
    lambdas: &BTreeMap<String, f64>,
    resource_id: &str,
) -> Result<Lexicon> {
    if lexicons.is_empty() {
        return Err(Error::InvalidInput("no lexicons to combine".into()));
    }
    let direction = lexicons[0].direction;
    let mut sum = 0.0;
    for (id, &l) in lambdas {
        if l < 0.0 {
            return Err(Error::InvalidInput(format!(
                "lambda for {id:?} is negative ({l})"
            )));
        }
        sum += l;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "lambdas must sum to 1 (±1e-9), got {sum}"
        )));
    }
    for lex in lexicons {
        if lex.direction != direction {
            return Err(Error::InvalidInput(
                "cannot combine lexicons of different directions".into(),
            ));
        }
        if !lambdas.contains_key(&lex.resource_id) {
            return Err(Error::InvalidInput(format!(
                "no lambda for resource {:?}",
                lex.resource_id
            )));
        }
    }
    let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut combined: HashMap<&str, HashMap<&str, f64>> = HashMap::new();
    for lex in lexicons {
        let lambda = lambdas[&lex.resource_id];
        for (src, entries) in lex.table() {
            let slot = combined.entry(src.as_str()).or_default();
            for (tgt, p) in entries {
                *slot.entry(tgt.as_str()).or_insert(0.0) += lambda * p;
            }
        }
    }
    // Deterministic accumulation: the sums above are per-pair (one term per
    // lexicon in slice order); assembly below only filters and copies.
    for (src, entries) in combined {
        let kept: Vec<(String, f64)> = entries
            .into_iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(t, p)| (t.to_string(), p))
            .collect();
        if !kept.is_empty() {
            table.insert(src.to_string(), kept);
        }
    }
    Ok(Lexicon::new(resource_id, direction, table))
}

/// Translation candidates for one word straight out of a lexicon:
/// probabilities are the raw scores, weights their normalized share.
pub fn lexicon_candidates(lex: &Lexicon, word: &str) -> RankedCandidates {
    let entries = lex.translations(word);
    let total: f64 = entries.iter().map(|(_, p)| p).sum();
    RankedCandidates {
        entries: entries
            .iter()
            .map(|(t, p)| RankedCandidate {
                word: t.clone(),
                raw_score: *p,
                weight: if total > 0.0 { p / total } else { 0.0 },
            })
            .collect(),
    }
}

/// Candidate pool for one source word: union of the top `pool_k`
/// translations from every resource, lexicographically ordered — the same
/// pooling rule the labeling stage uses.
pub fn pool_candidates(resources: &[Resource], word: &str, pool_k: usize) -> Vec<String> {
    let mut pool: BTreeSet<&str> = BTreeSet::new();
    for r in resources {
        for (t, _) in r.forward.translations(word).iter().take(pool_k) {
            pool.insert(t.as_str());
        }
    }
    pool.into_iter().map(|t| t.to_string()).collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub kind: String,
    pub source_words: usize,
    pub reverse_source_words: usize,
    pub n: usize,
}

/// Loads every configured resource: parallel corpora get EM lexicons in both
/// directions, comparable corpora alignment-weighted co-occurrence lexicons,
/// dictionaries uniform ones. Corpus-backed resources also carry document
/// statistics for the context features.
pub fn build_resources(
    config: &ExperimentConfig,
    base: &Path,
) -> Result<(Vec<Resource>, BTreeMap<String, ResourceReport>)> {
    let mut resources = Vec::new();
    let mut reports = BTreeMap::new();
    for (id, res) in &config.resources {
        let resource = match res {
            ResourceConfig::Parallel { path, .. } => {
                let corpus = corpus::load_parallel(&resolve(base, path), id)?;
                let m1 = &config.model1;
                let forward =
                    lexicon::train_model1(&corpus, id, m1.iterations, m1.use_null)?.lexicon;
                let mut reverse = lexicon::train_model1(
                    &corpus.swapped(),
                    id,
                    m1.iterations,
                    m1.use_null,
                )?
                .lexicon;
                reverse.direction = Direction::TargetToSource;
                let forward = lexicon::prune_lexicon(&forward, m1.prune_top_k, m1.prune_min_prob)?;
                let reverse = lexicon::prune_lexicon(&reverse, m1.prune_top_k, m1.prune_min_prob)?;
                let src_docs: Vec<&TokenizedText> = corpus.pairs.iter().map(|(s, _)| s).collect();
                let tgt_docs: Vec<&TokenizedText> = corpus.pairs.iter().map(|(_, t)| t).collect();
                Resource::new(
                    id.clone(),
                    ResourceKind::Parallel,
                    forward,
                    reverse,
                    Some(corpus::compute_stats(&src_docs)?),
                    Some(corpus::compute_stats(&tgt_docs)?),
                    Some(corpus::CrossStats::from_parallel(&corpus)),
                )?
            }
            ResourceConfig::Comparable {
                source_docs,
                target_docs,
                alignments,
                top_k,
                ..
            } => {
                let corpus = corpus::load_comparable(
                    &resolve(base, source_docs),
                    &resolve(base, target_docs),
                    &resolve(base, alignments),
                    id,
                )?;
                let forward = lexicon::extract_comparable_lexicon(&corpus, id, *top_k)?;
                let mut reverse =
                    lexicon::extract_comparable_lexicon(&corpus.swapped(), id, *top_k)?;
                reverse.direction = Direction::TargetToSource;
                let src_docs: Vec<&TokenizedText> = corpus.src_docs.values().collect();
                let tgt_docs: Vec<&TokenizedText> = corpus.tgt_docs.values().collect();
                Resource::new(
                    id.clone(),
                    ResourceKind::Comparable,
                    forward,
                    reverse,
                    Some(corpus::compute_stats(&src_docs)?),
                    Some(corpus::compute_stats(&tgt_docs)?),
                    Some(corpus::CrossStats::from_comparable(&corpus)),
                )?
            }
            ResourceConfig::Dictionary { path, .. } => {
                let dict = corpus::load_dictionary(&resolve(base, path))?;
                Resource::new(
                    id.clone(),
                    ResourceKind::Dictionary,
                    lexicon::dictionary_lexicon(&dict, id, Direction::SourceToTarget),
                    lexicon::dictionary_lexicon(&dict, id, Direction::TargetToSource),
                    None,
                    None,
                    None,
                )?
            }
        };
        reports.insert(
            id.clone(),
            ResourceReport {
                kind: res.kind_name().to_string(),
                source_words: resource.forward.len(),
                reverse_source_words: resource.reverse.len(),
                n: res.n(),
            },
        );
        resources.push(resource);
    }
    Ok((resources, reports))
}

pub struct RetrievalSetup {
    pub index: InvertedIndex,
    pub topics: Vec<(String, String)>,
    pub qrels: Qrels,
    pub params: Bm25Params,
    pub depth: usize,
    pub weighted: bool,
}

impl RetrievalSetup {
    pub fn load(config: &RetrievalConfig, base: &Path) -> Result<RetrievalSetup> {
        let docs = corpus::load_documents(&resolve(base, &config.documents))?;
        Ok(RetrievalSetup {
            index: retrieval::build_index(&docs)?,
            topics: retrieval::read_topics(&resolve(base, &config.topics))?,
            qrels: retrieval::read_qrels(&resolve(base, &config.qrels))?,
            params: Bm25Params {
                k1: config.k1,
                b: config.b,
            },
            depth: config.depth,
            weighted: config.weighted,
        })
    }
}

fn run_queries<F>(
    setup: &RetrievalSetup,
    tag: &str,
    n: usize,
    mut translate: F,
) -> Result<(EvalResult, RunFile)>
where
    F: FnMut(&[String]) -> Result<Vec<RankedCandidates>>,
{
    let mut run = RunFile {
        tag: tag.to_string(),
        rankings: Vec::new(),
    };
    let mut oov_words = 0usize;
    for (qid, title) in &setup.topics {
        let words = corpus::tokenize(title);
        let candidates = translate(&words)?;
        let built = retrieval::construct_query(&words, &candidates, n, setup.weighted)?;
        oov_words += built.oov_words;
        let hits = retrieval::bm25_search(&setup.index, &built.query, setup.depth, setup.params);
        run.rankings.push((
            qid.clone(),
            hits.into_iter().map(|h| (h.doc_id, h.score)).collect(),
        ));
    }
    let mut result = retrieval::evaluate(&run, &setup.qrels)?;
    result.oov_words = oov_words;
    result.meta.insert("tag".to_string(), tag.to_string());
    result
        .meta
        .insert("weighted".to_string(), setup.weighted.to_string());
    Ok((result, run))
}

/// Single-resource baseline: per query word the top `n` lexicon translations
/// with renormalized probabilities as weights.
pub fn run_single_resource(
    setup: &RetrievalSetup,
    lex: &Lexicon,
    n: usize,
    tag: &str,
) -> Result<(EvalResult, RunFile)> {
    let (mut result, run) = run_queries(setup, tag, n, |words| {
        Ok(words.iter().map(|w| lexicon_candidates(lex, w)).collect())
    })?;
    result.meta.insert("method".to_string(), "single".to_string());
    result.meta.insert("resource".to_string(), lex.resource_id.clone());
    result.meta.insert("n".to_string(), n.to_string());
    Ok((result, run))
}

/// Target-side context for a query: the top `context_top` translations of
/// every query word under the context lexicon.
pub fn query_target_context(
    context_lexicon: &Lexicon,
    words: &[String],
    context_top: usize,
) -> Vec<String> {
    let mut context = Vec::new();
    for w in words {
        for (t, _) in context_lexicon.translations(w).iter().take(context_top) {
            context.push(t.clone());
        }
    }
    context
}

/// Learned reranking: pool candidates across resources, extract features
/// against the query as source context plus a translated target context,
/// score with the model, and keep the top `n` per word.
pub fn run_ltr(
    setup: &RetrievalSetup,
    model: &RankingModel,
    schema: &FeatureSchema,
    resources: &[Resource],
    context_lexicon: &Lexicon,
    pool_k: usize,
    n: usize,
    context_top: usize,
    tag: &str,
) -> Result<(EvalResult, RunFile)> {
    let (mut result, run) = run_queries(setup, tag, n, |words| {
        let target_context = query_target_context(context_lexicon, words, context_top);
        words
            .iter()
            .map(|w| rank_word(w, words, &target_context, model, schema, resources, pool_k))
            .collect()
    })?;
    result.meta.insert("method".to_string(), "ltr".to_string());
    result.meta.insert("n".to_string(), n.to_string());
    result
        .meta
        .insert("context_resource".to_string(), context_lexicon.resource_id.clone());
    Ok((result, run))
}

/// Reranks the pooled candidates of one word with a trained model, given the
/// word's source-language sentence and a target-language context.
pub fn rank_word(
    word: &str,
    source_sentence: &[String],
    target_context: &[String],
    model: &RankingModel,
    schema: &FeatureSchema,
    resources: &[Resource],
    pool_k: usize,
) -> Result<RankedCandidates> {
    let pool = pool_candidates(resources, word, pool_k);
    if pool.is_empty() {
        return Ok(RankedCandidates::default());
    }
    let ctx = features::ContextSpec {
        source_sentence,
        target_sentence: target_context,
    };
    let matrix = features::candidate_feature_matrix(word, &pool, &ctx, resources, schema)?;
    ranker::score_and_rank(model, schema, &ranker::candidate_list(&pool, matrix))
}

/// All weight assignments over `k` resources on a 0.1 grid (shares of ten),
/// in lexicographic order; includes every one-hot assignment.
pub fn lambda_grid(k: usize) -> Vec<Vec<f64>> {
    fn fill(k: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<f64>>) {
        if k == 1 {
            prefix.push(left);
            out.push(prefix.iter().map(|&t| t as f64 / 10.0).collect());
            prefix.pop();
            return;
        }
        for t in 0..=left {
            prefix.push(t);
            fill(k - 1, left - t, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(k, 10, &mut Vec::new(), &mut out);
    out
}

/// Grid-search over mixture weights, maximizing MAP on the supplied queries;
/// the first strictly-best grid point wins, so ties resolve deterministically.
pub fn tune_lambdas(
    setup: &RetrievalSetup,
    resources: &[Resource],
    n: usize,
) -> Result<(BTreeMap<String, f64>, EvalResult, RunFile)> {
    let ids: Vec<&str> = resources.iter().map(|r| r.id.as_str()).collect();
    let lexicons: Vec<&Lexicon> = resources.iter().map(|r| &r.forward).collect();
    let mut best: Option<(BTreeMap<String, f64>, EvalResult, RunFile)> = None;
    for point in lambda_grid(ids.len()) {
        let lambdas: BTreeMap<String, f64> = ids
            .iter()
            .zip(&point)
            .map(|(id, &l)| (id.to_string(), l))
            .collect();
        let combined = linear_combine(&lexicons, &lambdas, "linear")?;
        let (result, run) = run_single_resource(setup, &combined, n, "linear")?;
        if best.as_ref().map_or(true, |(_, b, _)| result.map > b.map) {
            best = Some((lambdas, result, run));
        }
    }
    let (lambdas, mut result, run) = best.expect("grid is never empty");
    result.meta.insert("method".to_string(), "linear".to_string());
    Ok((lambdas, result, run))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub feature: usize,
    pub name: String,
    pub resource: String,
    pub map: f64,
}

/// Greedy forward selection: repeatedly adds the feature whose addition
/// maximizes training MAP, warm-starting each fit from the previous weights
/// so the reported metric never decreases.
pub fn forward_selection(
    instances: &[TrainingInstance],
    schema: &FeatureSchema,
    base_options: &CaOptions,
    max_features: usize,
) -> Result<Vec<SelectionStep>> {
    if schema.len() < 2 {
        return Err(Error::InvalidInput(
            "forward selection needs at least two features".into(),
        ));
    }
    let limit = max_features.min(schema.len()).max(1);
    let mut selected: Vec<usize> = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut report = Vec::new();
    for _ in 0..limit {
        let mut best: Option<(usize, RankingModel)> = None;
        for f in 0..schema.len() {
            if selected.contains(&f) {
                continue;
            }
            let mut active = selected.clone();
            active.push(f);
            let options = CaOptions {
                restarts: 1,
                active: Some(active),
                init: warm.clone(),
                ..base_options.clone()
            };
            let model = ranker::train_coordinate_ascent(instances, schema, &options)?;
            if best
                .as_ref()
                .map_or(true, |(_, b)| model.meta.final_training_map > b.meta.final_training_map)
            {
                best = Some((f, model));
            }
        }
        let (f, model) = best.expect("at least one unselected feature");
        selected.push(f);
        warm = Some(model.weights.clone());
        let slot = &schema.slots[f];
        report.push(SelectionStep {
            feature: f,
            name: slot.name.clone(),
            resource: slot.resource.clone(),
            map: model.meta.final_training_map,
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub instances: usize,
    pub instances_before_cap: usize,
    pub dropped_no_positive: u64,
    pub skipped_no_candidates: u64,
    pub skipped_short: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaReport {
    pub version: u32,
    pub hash: String,
    pub slots: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub trainer: String,
    pub final_training_map: f64,
    pub final_training_mrr: f64,
    pub accepted_steps: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub map: f64,
    pub p5: f64,
    pub p10: f64,
    pub queries_evaluated: usize,
    pub zero_relevant_queries: usize,
    pub oov_words: usize,
    pub n: usize,
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resource: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_resource: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Significance {
    Test {
        t: f64,
        df: f64,
        p: f64,
        mean_diff: f64,
        significant_at_0_05: bool,
        significant_at_0_005: bool,
    },
    Degenerate {
        error: String,
    },
}

impl Significance {
    fn from_test(test: PairedTTest) -> Significance {
        Significance::Test {
            t: test.t,
            df: test.df,
            p: test.p,
            mean_diff: test.mean_diff,
            significant_at_0_05: test.p < 0.05,
            significant_at_0_005: test.p < 0.005,
        }
    }

    pub fn p_value(&self) -> Option<f64> {
        match self {
            Significance::Test { p, .. } => Some(*p),
            Significance::Degenerate { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityReport {
    pub instances: usize,
    pub ltr_top1_accuracy: f64,
    /// Context-free top-1 accuracy of each resource lexicon on the same
    /// instances.
    pub lexicon_top1_accuracy: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub inputs: BTreeMap<String, String>,
    pub resources: BTreeMap<String, ResourceReport>,
    pub training: TrainingReport,
    pub schema: SchemaReport,
    pub model: ModelReport,
    pub runs: BTreeMap<String, RunReport>,
    pub significance: BTreeMap<String, Significance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<AmbiguityReport>,
    pub artifacts: BTreeMap<String, String>,
}

pub struct ExperimentOutcome {
    pub manifest: Manifest,
    pub out_dir: PathBuf,
    pub manifest_path: PathBuf,
}

/// Per-query AP vectors over the queries both results evaluated, qid-aligned.
fn aligned_ap(a: &EvalResult, b: &EvalResult) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (qid, ap) in &a.per_query_ap {
        if let Some(bp) = b.per_query_ap.get(qid) {
            xs.push(*ap);
            ys.push(*bp);
        }
    }
    (xs, ys)
}

fn significance_entry(a: &EvalResult, b: &EvalResult) -> Significance {
    let (xs, ys) = aligned_ap(a, b);
    match retrieval::paired_ttest(&xs, &ys) {
        Ok(test) => Significance::from_test(test),
        Err(e) => Significance::Degenerate {
            error: e.to_string(),
        },
    }
}

/// One word-in-context instance of the held-out ambiguity evaluation.
struct AmbiguityInstance {
    word: String,
    context: TokenizedText,
    expected: String,
}

fn read_ambiguity_eval(path: &Path) -> Result<Vec<AmbiguityInstance>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                path,
                i + 1,
                "expected `word<TAB>context<TAB>expected`",
            ));
        }
        out.push(AmbiguityInstance {
            word: fields[0].to_string(),
            context: corpus::tokenize(fields[1]),
            expected: fields[2].to_string(),
        });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_ambiguity(
    path: &Path,
    model: &RankingModel,
    schema: &FeatureSchema,
    resources: &[Resource],
    context_lexicon: &Lexicon,
    pool_k: usize,
    context_top: usize,
) -> Result<AmbiguityReport> {
    let instances = read_ambiguity_eval(path)?;
    if instances.is_empty() {
        return Err(Error::InvalidInput(format!(
            "ambiguity evaluation file {path:?} has no instances"
        )));
    }
    let mut ltr_hits = 0usize;
    let mut lexicon_hits: BTreeMap<String, usize> =
        resources.iter().map(|r| (r.id.clone(), 0)).collect();
    for inst in &instances {
        let target_context = query_target_context(context_lexicon, &inst.context, context_top);
        let ranked = rank_word(
            &inst.word,
            &inst.context,
            &target_context,
            model,
            schema,
            resources,
            pool_k,
        )?;
        if ranked.top().map(|c| c.word.as_str()) == Some(inst.expected.as_str()) {
            ltr_hits += 1;
        }
        for r in resources {
            let top = r.forward.translations(&inst.word).first();
            if top.map(|(t, _)| t.as_str()) == Some(inst.expected.as_str()) {
                *lexicon_hits.get_mut(&r.id).expect("initialized above") += 1;
            }
        }
    }
    let n = instances.len() as f64;
    Ok(AmbiguityReport {
        instances: instances.len(),
        ltr_top1_accuracy: ltr_hits as f64 / n,
        lexicon_top1_accuracy: lexicon_hits
            .into_iter()
            .map(|(id, hits)| (id, hits as f64 / n))
            .collect(),
    })
}

fn input_paths(config: &ExperimentConfig) -> Vec<String> {
    let mut paths = Vec::new();
    for res in config.resources.values() {
        match res {
            ResourceConfig::Parallel { path, .. } | ResourceConfig::Dictionary { path, .. } => {
                paths.push(path.clone());
            }
            ResourceConfig::Comparable {
                source_docs,
                target_docs,
                alignments,
                ..
            } => {
                paths.push(source_docs.clone());
                paths.push(target_docs.clone());
                paths.push(alignments.clone());
            }
        }
    }
    paths.push(config.labeling.corpus.clone());
    paths.push(config.retrieval.documents.clone());
    paths.push(config.retrieval.topics.clone());
    paths.push(config.retrieval.qrels.clone());
    if let Some(eval) = &config.ambiguity.eval {
        paths.push(eval.clone());
    }
    paths.sort();
    paths.dedup();
    paths
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize {path:?}: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs the full experiment described by a config file and writes every
/// artifact plus a deterministic manifest into the output directory
/// (`out_override` replaces the configured one). Identical inputs and seed
/// produce byte-identical artifacts.
pub fn run_experiment(config_path: &Path, out_override: Option<&Path>) -> Result<ExperimentOutcome> {
    let (config, base) = load_config(config_path)?;
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| resolve(&base, &config.output_dir));
    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;

    let mut inputs = BTreeMap::new();
    for rel in input_paths(&config) {
        inputs.insert(rel.clone(), sha256_file(&resolve(&base, &rel))?);
    }
    let config_sha256 = sha256_file(config_path)?;

    let (resources, resource_reports) = build_resources(&config, &base)?;

    // Labeling: align the held-out corpus and pool candidates per word.
    let labeling_corpus =
        corpus::load_parallel(&resolve(&base, &config.labeling.corpus), "labeling")?;
    let aligner = lexicon::train_model1(
        &labeling_corpus,
        "aligner",
        config.labeling.aligner_iterations,
        config.model1.use_null,
    )?
    .lexicon;
    let forward_lexicons: Vec<&Lexicon> = resources.iter().map(|r| &r.forward).collect();
    let labeled = labeling::build_training_data(
        &labeling_corpus,
        &forward_lexicons,
        &aligner,
        config.labeling.pool_k,
        config.labeling.validation_mode()?,
        config.model1.use_null,
    )?;
    let mut instances = labeled.instances;
    let instances_before_cap = instances.len();
    instances.truncate(config.labeling.max_instances);
    let training = TrainingReport {
        instances: instances.len(),
        instances_before_cap,
        dropped_no_positive: labeled.dropped_no_positive,
        skipped_no_candidates: labeled.skipped_no_candidates,
        skipped_short: labeled.skipped_short,
    };

    let schema = FeatureSchema::for_resources(&resources);
    features::attach_features(&mut instances, &resources, &schema)?;
    schema.write(&out_dir.join("schema.json"))?;
    labeling::write_training_file(&instances, &schema, &out_dir.join("training.letor"))?;

    let model = match config.trainer.kind.as_str() {
        "coordinate_ascent" => ranker::train_coordinate_ascent(
            &instances,
            &schema,
            &CaOptions {
                restarts: config.trainer.restarts,
                epsilon: config.trainer.epsilon,
                seed: config.seed,
                max_passes: config.trainer.max_passes,
                active: None,
                init: None,
            },
        )?,
        "pairwise_hinge" => ranker::train_pairwise_hinge(
            &instances,
            &schema,
            &HingeOptions {
                learning_rate: config.trainer.learning_rate,
                epochs: config.trainer.epochs,
                reg: config.trainer.reg,
                seed: config.seed,
            },
        )?,
        other => {
            return Err(Error::InvalidInput(format!("unknown trainer kind {other:?}")));
        }
    };
    ranker::write_model(&model, &out_dir.join("model.json"))?;

    let setup = RetrievalSetup::load(&config.retrieval, &base)?;

    // Single-resource baselines.
    let mut runs: BTreeMap<String, RunReport> = BTreeMap::new();
    let mut run_files: Vec<(String, RunFile)> = Vec::new();
    let mut single_results: BTreeMap<String, EvalResult> = BTreeMap::new();
    for r in &resources {
        let n = config.resources[&r.id].n();
        let tag = format!("single_{}", r.id);
        let (result, run) = run_single_resource(&setup, &r.forward, n, &tag)?;
        let file = format!("runs/{tag}.run");
        runs.insert(
            tag.clone(),
            RunReport {
                map: result.map,
                p5: result.p5,
                p10: result.p10,
                queries_evaluated: result.queries_evaluated,
                zero_relevant_queries: result.zero_relevant_queries,
                oov_words: result.oov_words,
                n,
                file: file.clone(),
                resource: Some(r.id.clone()),
                lambdas: None,
                context_resource: None,
            },
        );
        run_files.push((file, run));
        single_results.insert(r.id.clone(), result);
    }

    let best_single_id = single_results
        .iter()
        .max_by(|(ia, a), (ib, b)| {
            a.map
                .partial_cmp(&b.map)
                .expect("finite MAP")
                .then_with(|| ib.cmp(ia)) // earliest id wins ties
        })
        .map(|(id, _)| id.clone())
        .expect("at least one resource");

    // Linear combination: fixed weights or a 0.1-step grid search.
    let linear_n = config.linear.n();
    let (lambdas, linear_result, linear_run) = if config.linear.lambdas.is_empty() {
        tune_lambdas(&setup, &resources, linear_n)?
    } else {
        let lexicons: Vec<&Lexicon> = resources.iter().map(|r| &r.forward).collect();
        let combined = linear_combine(&lexicons, &config.linear.lambdas, "linear")?;
        let (mut result, run) = run_single_resource(&setup, &combined, linear_n, "linear")?;
        result.meta.insert("method".to_string(), "linear".to_string());
        (config.linear.lambdas.clone(), result, run)
    };
    runs.insert(
        "linear".to_string(),
        RunReport {
            map: linear_result.map,
            p5: linear_result.p5,
            p10: linear_result.p10,
            queries_evaluated: linear_result.queries_evaluated,
            zero_relevant_queries: linear_result.zero_relevant_queries,
            oov_words: linear_result.oov_words,
            n: linear_n,
            file: "runs/linear.run".to_string(),
            resource: None,
            lambdas: Some(lambdas),
            context_resource: None,
        },
    );
    run_files.push(("runs/linear.run".to_string(), linear_run));

    // Learned reranking.
    let context_id = if config.ltr.context_resource.is_empty() {
        best_single_id.clone()
    } else {
        config.ltr.context_resource.clone()
    };
    let context_lexicon = &resources
        .iter()
        .find(|r| r.id == context_id)
        .ok_or_else(|| {
            Error::InvalidInput(format!("context resource {context_id:?} not loaded"))
        })?
        .forward;
    let (ltr_result, ltr_run) = run_ltr(
        &setup,
        &model,
        &schema,
        &resources,
        context_lexicon,
        config.labeling.pool_k,
        config.ltr.n,
        config.ltr.context_top,
        "ltr",
    )?;
    runs.insert(
        "ltr".to_string(),
        RunReport {
            map: ltr_result.map,
            p5: ltr_result.p5,
            p10: ltr_result.p10,
            queries_evaluated: ltr_result.queries_evaluated,
            zero_relevant_queries: ltr_result.zero_relevant_queries,
            oov_words: ltr_result.oov_words,
            n: config.ltr.n,
            file: "runs/ltr.run".to_string(),
            resource: None,
            lambdas: None,
            context_resource: Some(context_id.clone()),
        },
    );
    run_files.push(("runs/ltr.run".to_string(), ltr_run));

    let mut significance = BTreeMap::new();
    significance.insert(
        "ltr_vs_best_single".to_string(),
        significance_entry(&ltr_result, &single_results[&best_single_id]),
    );
    significance.insert(
        "ltr_vs_linear".to_string(),
        significance_entry(&ltr_result, &linear_result),
    );

    let ambiguity = match &config.ambiguity.eval {
        Some(rel) => Some(evaluate_ambiguity(
            &resolve(&base, rel),
            &model,
            &schema,
            &resources,
            context_lexicon,
            config.labeling.pool_k,
            config.ltr.context_top,
        )?),
        None => None,
    };

    for (rel, run) in &run_files {
        retrieval::write_run(run, &out_dir.join(rel))?;
    }

    let mut artifacts = BTreeMap::new();
    for rel in ["schema.json", "training.letor", "model.json"] {
        artifacts.insert(rel.to_string(), sha256_file(&out_dir.join(rel))?);
    }
    for (rel, _) in &run_files {
        artifacts.insert(rel.clone(), sha256_file(&out_dir.join(rel))?);
    }

    let manifest = Manifest {
        seed: config.seed,
        config_sha256,
        config,
        inputs,
        resources: resource_reports,
        training,
        schema: SchemaReport {
            version: schema.version,
            hash: schema.hash.clone(),
            slots: schema.len(),
        },
        model: ModelReport {
            trainer: model.trainer.clone(),
            final_training_map: model.meta.final_training_map,
            final_training_mrr: model.meta.final_training_mrr,
            accepted_steps: model.meta.accepted_steps,
            file: "model.json".to_string(),
        },
        runs,
        significance,
        ambiguity,
        artifacts,
    };
    let manifest_path = out_dir.join("manifest.json");
    write_json(&manifest, &manifest_path)?;
    Ok(ExperimentOutcome {
        manifest,
        out_dir,
        manifest_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::Candidate;

    fn lex(resource: &str, entries: &[(&str, &[(&str, f64)])]) -> Lexicon {
        let table: HashMap<String, Vec<(String, f64)>> = entries
            .iter()
            .map(|(src, targets)| {
                (
                    src.to_string(),
                    targets
                        .iter()
                        .map(|&(t, p)| (t.to_string(), p))
                        .collect(),
                )
            })
            .collect();
        Lexicon::new(resource, Direction::SourceToTarget, table)
    }

    fn lambdas(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    #[test]
    fn linear_combine_weighted_sum_example() {
        // Published probabilities for the candidate under each resource:
        // 0.4, absent, 0.22, 0.25 with weights 0.7/0.2/0.1/0.
        let l1 = lex("r20m", &[("cup", &[("جام", 0.4), ("فنجان", 0.46)])]);
        let l2 = lex("rtep", &[("cup", &[("فنجان", 1.0)])]);
        let l3 = lex("rcomp", &[("cup", &[("جام", 0.22)])]);
        let l4 = lex("rdict", &[("cup", &[("جام", 0.25), ("فنجان", 0.25)])]);
        let combined = linear_combine(
            &[&l1, &l2, &l3, &l4],
            &lambdas(&[("r20m", 0.7), ("rtep", 0.2), ("rcomp", 0.1), ("rdict", 0.0)]),
            "mix",
        )
        .unwrap();
        assert!((combined.prob("cup", "جام") - 0.302).abs() < 1e-12);
    }

    #[test]
    fn linear_combine_one_hot_is_identity() {
        let l1 = lex(
            "a",
            &[("w", &[("x", 0.6), ("y", 0.4)]), ("v", &[("z", 1.0)])],
        );
        let l2 = lex("b", &[("w", &[("q", 1.0)])]);
        let combined =
            linear_combine(&[&l1, &l2], &lambdas(&[("a", 1.0), ("b", 0.0)]), "mix").unwrap();
        assert_eq!(combined.table(), l1.table());
    }

    #[test]
    fn linear_combine_agreeing_lexicons_keep_value() {
        let l1 = lex("a", &[("w", &[("x", 0.5)])]);
        let l2 = lex("b", &[("w", &[("x", 0.5)])]);
        let combined =
            linear_combine(&[&l1, &l2], &lambdas(&[("a", 0.5), ("b", 0.5)]), "mix").unwrap();
        assert!((combined.prob("w", "x") - 0.5).abs() < 1e-12);
    }

    #[test]
    fn linear_combine_validates_weights() {
        let l1 = lex("a", &[("w", &[("x", 1.0)])]);
        assert!(linear_combine(&[&l1], &lambdas(&[("a", 0.9)]), "m").is_err());
        assert!(linear_combine(&[&l1], &lambdas(&[("b", 1.0)]), "m").is_err());
        assert!(
            linear_combine(&[&l1], &lambdas(&[("a", 1.5), ("b", -0.5)]), "m").is_err()
        );
    }

    #[test]
    fn lambda_grid_covers_simplex_with_one_hots() {
        let grid = lambda_grid(3);
        assert_eq!(grid.len(), 66);
        for point in &grid {
            let sum: f64 = point.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        for hot in 0..3 {
            assert!(grid
                .iter()
                .any(|p| (p[hot] - 1.0).abs() < 1e-12
                    && p.iter().map(|x| x.abs()).sum::<f64>() < 1.0 + 1e-12));
        }
    }

    #[test]
    fn lexicon_candidates_normalize_and_keep_order() {
        let l = lex("a", &[("w", &[("x", 0.6), ("y", 0.2), ("z", 0.2)])]);
        let ranked = lexicon_candidates(&l, "w");
        assert_eq!(ranked.words(), vec!["x", "y", "z"]);
        assert!((ranked.entries[0].weight - 0.6).abs() < 1e-12);
        let top = ranker::top_n(&ranked, 2);
        assert!((top.entries[0].weight - 0.75).abs() < 1e-12);
        assert!(lexicon_candidates(&l, "missing").entries.is_empty());
    }

    fn sep_instances() -> Vec<TrainingInstance> {
        (0..6)
            .map(|q| TrainingInstance {
                query_id: q + 1,
                source_word: format!("w{q}"),
                source_sentence: vec![],
                target_sentence: vec![],
                candidates: vec![
                    Candidate {
                        word: "bad".to_string(),
                        label: false,
                        features: Some(vec![0.1, 0.8, 0.1]),
                    },
                    Candidate {
                        word: "good".to_string(),
                        label: true,
                        features: Some(vec![0.9, 0.2, 0.1]),
                    },
                ],
            })
            .collect()
    }

    #[test]
    fn forward_selection_picks_the_predictive_feature_first() {
        let schema = FeatureSchema::from_slots(
            1,
            vec![
                ("predictive".to_string(), "r".to_string()),
                ("noise".to_string(), "r".to_string()),
                ("constant".to_string(), "r".to_string()),
            ],
        );
        let report =
            forward_selection(&sep_instances(), &schema, &CaOptions::default(), 3).unwrap();
        assert_eq!(report[0].name, "predictive");
        assert!((report[0].map - 1.0).abs() < 1e-12);
        for w in report.windows(2) {
            assert!(w[1].map >= w[0].map - 1e-12);
        }
    }

    #[test]
    fn forward_selection_duplicate_column_adds_nothing() {
        let instances: Vec<TrainingInstance> = sep_instances()
            .into_iter()
            .map(|mut inst| {
                for c in &mut inst.candidates {
                    let f = c.features.as_mut().unwrap();
                    let first = f[0];
                    f[1] = first; // exact duplicate of the predictive column
                }
                inst
            })
            .collect();
        let schema = FeatureSchema::from_slots(
            1,
            vec![
                ("predictive".to_string(), "r".to_string()),
                ("copy".to_string(), "r".to_string()),
                ("constant".to_string(), "r".to_string()),
            ],
        );
        let report = forward_selection(&instances, &schema, &CaOptions::default(), 2).unwrap();
        assert!(report[1].map - report[0].map <= 1e-9);
    }
}
