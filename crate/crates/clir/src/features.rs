//! Candidate-scoring features: translation-table evidence (probability,
//! rank, entropy), collection statistics (TF, IDF), and monolingual /
//! cross-lingual PMI context scores, assembled into fixed-schema vectors.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusStats, CrossStats};
use crate::error::{Error, Result};
use crate::labeling::TrainingInstance;
use crate::lexicon::{Direction, Lexicon};

/// Pointwise mutual information over documents: ln(p12 / (p1 * p2)) with
/// p12 = cooccur/N and pi = df/N. Any zero count yields 0 so values stay
/// finite ("no evidence" rather than negative infinity).
pub fn pmi(stats: &CorpusStats, w1: &str, w2: &str) -> f64 {
    let c = stats.cooccur(w1, w2);
    let df1 = stats.df(w1);
    let df2 = stats.df(w2);
    if c == 0 || df1 == 0 || df2 == 0 {
        return 0.0;
    }
    ((c as f64 * stats.doc_count() as f64) / (df1 as f64 * df2 as f64)).ln()
}

/// Correlation of a word with its sentence: the PMI sum over the sentence's
/// other distinct words.
pub fn context_score(stats: &CorpusStats, word: &str, sentence: &[String]) -> f64 {
    let distinct: BTreeSet<&str> = sentence.iter().map(|w| w.as_str()).collect();
    distinct
        .into_iter()
        .filter(|w| *w != word)
        .map(|w| pmi(stats, word, w))
        .sum()
}

/// Cross-lingual PMI over aligned document pairs: ln(p12 / (ps * pt)) with
/// p12 = mutual/|A|, ps and pt the per-side occurrence fractions. Zero on any
/// zero count.
pub fn clpmi(cross: &CrossStats, w_src: &str, w_tgt: &str) -> f64 {
    let m = cross.mutual_count(w_src, w_tgt);
    let s = cross.src_count(w_src);
    let t = cross.tgt_count(w_tgt);
    if m == 0 || s == 0 || t == 0 {
        return 0.0;
    }
    ((m as f64 * cross.align_count() as f64) / (s as f64 * t as f64)).ln()
}

/// Correlation of a source word with a target-language sentence: the CLPMI
/// sum over the sentence's distinct words.
pub fn cross_context_source(cross: &CrossStats, w_src: &str, tgt_sentence: &[String]) -> f64 {
    let distinct: BTreeSet<&str> = tgt_sentence.iter().map(|w| w.as_str()).collect();
    distinct.into_iter().map(|w| clpmi(cross, w_src, w)).sum()
}

/// Symmetric variant: a target word against a source-language sentence.
pub fn cross_context_target(cross: &CrossStats, w_tgt: &str, src_sentence: &[String]) -> f64 {
    let distinct: BTreeSet<&str> = src_sentence.iter().map(|w| w.as_str()).collect();
    distinct.into_iter().map(|w| clpmi(cross, w, w_tgt)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceKind {
    Parallel,
    Comparable,
    Dictionary,
}

impl ResourceKind {
    /// Corpus-backed resources carry collection statistics and can answer
    /// context queries; a dictionary cannot.
    pub fn has_corpus(self) -> bool {
        !matches!(self, ResourceKind::Dictionary)
    }
}

/// One translation resource bundled with everything feature extraction needs:
/// both lexicon directions, collection statistics per language side, the
/// cross-lingual co-occurrence counts, and precomputed word entropies.
pub struct Resource {
    pub id: String,
    pub kind: ResourceKind,
    pub forward: Lexicon,
    pub reverse: Lexicon,
    pub src_stats: Option<CorpusStats>,
    pub tgt_stats: Option<CorpusStats>,
    pub cross: Option<CrossStats>,
    ent_tgt: HashMap<String, f64>,
    ent_src: HashMap<String, f64>,
}

impl Resource {
    pub fn new(
        id: impl Into<String>,
        kind: ResourceKind,
        forward: Lexicon,
        reverse: Lexicon,
        src_stats: Option<CorpusStats>,
        tgt_stats: Option<CorpusStats>,
        cross: Option<CrossStats>,
    ) -> Result<Resource> {
        if forward.direction != Direction::SourceToTarget {
            return Err(Error::InvalidInput(
                "forward lexicon must have direction s2t".into(),
            ));
        }
        if reverse.direction != Direction::TargetToSource {
            return Err(Error::InvalidInput(
                "reverse lexicon must have direction t2s".into(),
            ));
        }
        let ent_tgt = entropies(&forward);
        let ent_src = entropies(&reverse);
        Ok(Resource {
            id: id.into(),
            kind,
            forward,
            reverse,
            src_stats,
            tgt_stats,
            cross,
            ent_tgt,
            ent_src,
        })
    }

    /// Entropy of a target word over the source words it translates, under
    /// the forward table: -sum p(t|s) ln p(t|s).
    pub fn entropy_tgt(&self, word: &str) -> f64 {
        self.ent_tgt.get(word).copied().unwrap_or(0.0)
    }

    /// Entropy of a source word under the reverse table.
    pub fn entropy_src(&self, word: &str) -> f64 {
        self.ent_src.get(word).copied().unwrap_or(0.0)
    }
}

/// Per-word entropies of a lexicon's right-hand side: for every entry word t,
/// -sum over left-hand words s of p(t|s) ln p(t|s). Source words are visited
/// in sorted order so the accumulation order is fixed.
fn entropies(lex: &Lexicon) -> HashMap<String, f64> {
    let mut ent: HashMap<String, f64> = HashMap::new();
    for src in lex.source_words() {
        for (tgt, p) in lex.translations(src) {
            *ent.entry(tgt.clone()).or_insert(0.0) -= p * p.ln();
        }
    }
    ent
}

/// Sentence context of a word occurrence. At query time the target side may
/// be empty until a target context has been constructed.
pub struct ContextSpec<'a> {
    pub source_sentence: &'a [String],
    pub target_sentence: &'a [String],
}

const RESOURCE_SLOTS: [&str; 12] = [
    "prob", "revprob", "rank", "probdiff", "tf_src", "tf_tgt", "idf_src", "idf_tgt", "ent_src",
    "ent_tgt", "n_relevant", "presence",
];
const CORPUS_SLOTS: [&str; 4] = ["pmi_src", "pmi_tgt", "clpmi_s2t", "clpmi_t2s"];
const GLOBAL_RESOURCE: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSlot {
    pub name: String,
    pub resource: String,
}

/// The fixed feature layout for a resource configuration. The hash binds
/// models to the exact slot list they were trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub version: u32,
    pub slots: Vec<SchemaSlot>,
    pub hash: String,
}

impl FeatureSchema {
    pub fn from_slots(version: u32, slots: Vec<(String, String)>) -> FeatureSchema {
        let slots: Vec<SchemaSlot> = slots
            .into_iter()
            .map(|(name, resource)| SchemaSlot { name, resource })
            .collect();
        let hash = schema_hash(version, &slots);
        FeatureSchema {
            version,
            slots,
            hash,
        }
    }

    /// The layout for a resource list: twelve slots per resource, four extra
    /// context slots per corpus-backed resource, and a final pooled
    /// relevant-word count. Resource order is significant.
    pub fn for_resources(resources: &[Resource]) -> FeatureSchema {
        let mut slots = Vec::new();
        for r in resources {
            for name in RESOURCE_SLOTS {
                slots.push((name.to_string(), r.id.clone()));
            }
            if r.kind.has_corpus() {
                for name in CORPUS_SLOTS {
                    slots.push((name.to_string(), r.id.clone()));
                }
            }
        }
        slots.push(("n_relevant_pool".to_string(), GLOBAL_RESOURCE.to_string()));
        Self::from_slots(1, slots)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    /// Index of a slot by name and resource id.
    pub fn slot_index(&self, name: &str, resource: &str) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.name == name && s.resource == resource)
    }

    fn expect_matches(&self, resources: &[Resource]) -> Result<()> {
        let expected = FeatureSchema::for_resources(resources);
        if expected.hash != self.hash {
            return Err(Error::SchemaMismatch {
                expected: self.hash.clone(),
                actual: expected.hash,
            });
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, self)
            .map_err(|e| Error::InvalidInput(format!("cannot serialize schema: {e}")))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<FeatureSchema> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let schema: FeatureSchema = serde_json::from_reader(file)
            .map_err(|e| Error::parse(path, 0, format!("bad schema file: {e}")))?;
        let expected = schema_hash(schema.version, &schema.slots);
        if schema.hash != expected {
            return Err(Error::SchemaMismatch {
                expected,
                actual: schema.hash,
            });
        }
        Ok(schema)
    }
}

fn schema_hash(version: u32, slots: &[SchemaSlot]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(format!("v{version}\n"));
    for slot in slots {
        hasher.update(&slot.name);
        hasher.update("\t");
        hasher.update(&slot.resource);
        hasher.update("\n");
    }
    hex::encode(hasher.finalize())
}

/// Fills one feature vector for (source word, candidate translation) in the
/// given sentence context. Slots whose resource lacks the word are 0; the
/// presence flag lets a ranker tell "unknown here" from "known but unlikely".
pub fn extract_vector(
    src_word: &str,
    candidate: &str,
    ctx: &ContextSpec,
    resources: &[Resource],
    schema: &FeatureSchema,
) -> Result<Vec<f64>> {
    schema.expect_matches(resources)?;
    Ok(extract_unchecked(src_word, candidate, ctx, resources))
}

fn extract_unchecked(
    src_word: &str,
    candidate: &str,
    ctx: &ContextSpec,
    resources: &[Resource],
) -> Vec<f64> {
    let mut v = Vec::new();
    for r in resources {
        let prob = r.forward.prob(src_word, candidate);
        let rank = r.forward.rank(src_word, candidate);
        let probdiff = if rank > 0 {
            r.forward.top_prob(src_word) - prob
        } else {
            0.0
        };
        v.push(prob);
        v.push(r.reverse.prob(candidate, src_word));
        v.push(rank as f64);
        v.push(probdiff);
        v.push(r.src_stats.as_ref().map_or(0.0, |s| s.tf(src_word) as f64));
        v.push(r.tgt_stats.as_ref().map_or(0.0, |s| s.tf(candidate) as f64));
        v.push(r.src_stats.as_ref().map_or(0.0, |s| s.idf(src_word)));
        v.push(r.tgt_stats.as_ref().map_or(0.0, |s| s.idf(candidate)));
        v.push(r.entropy_src(src_word));
        v.push(r.entropy_tgt(candidate));
        v.push(n_relevant(ctx.source_sentence, candidate, |w| {
            r.forward.prob(w, candidate) > 0.0
        }));
        v.push(if rank > 0 { 1.0 } else { 0.0 });
        if r.kind.has_corpus() {
            let src_stats = r.src_stats.as_ref();
            let tgt_stats = r.tgt_stats.as_ref();
            let cross = r.cross.as_ref();
            v.push(src_stats.map_or(0.0, |s| context_score(s, src_word, ctx.source_sentence)));
            v.push(tgt_stats.map_or(0.0, |s| context_score(s, candidate, ctx.target_sentence)));
            v.push(cross.map_or(0.0, |c| {
                cross_context_source(c, src_word, ctx.target_sentence)
            }));
            v.push(cross.map_or(0.0, |c| {
                cross_context_target(c, candidate, ctx.source_sentence)
            }));
        }
    }
    v.push(n_relevant(ctx.source_sentence, candidate, |w| {
        resources
            .iter()
            .any(|r| r.forward.prob(w, candidate) > 0.0)
    }));
    debug_assert!(v.iter().all(|x| x.is_finite()));
    v
}

/// Distinct source-sentence words holding a translation relation to the
/// candidate under the given predicate.
fn n_relevant(sentence: &[String], _candidate: &str, related: impl Fn(&str) -> bool) -> f64 {
    let distinct: BTreeSet<&str> = sentence.iter().map(|w| w.as_str()).collect();
    distinct.into_iter().filter(|w| related(w)).count() as f64
}

/// Min-max scales every slot to [0, 1] within one candidate list; constant
/// slots become 0. Applied identically at training and prediction time.
pub fn normalize_list(vectors: &mut [Vec<f64>]) {
    if vectors.is_empty() {
        return;
    }
    let slots = vectors[0].len();
    for k in 0..slots {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in vectors.iter() {
            lo = lo.min(v[k]);
            hi = hi.max(v[k]);
        }
        let range = hi - lo;
        for v in vectors.iter_mut() {
            v[k] = if range > 0.0 { (v[k] - lo) / range } else { 0.0 };
        }
    }
}

/// Extracts and normalizes the feature matrix for one candidate list, in
/// candidate order.
pub fn candidate_feature_matrix(
    src_word: &str,
    candidates: &[String],
    ctx: &ContextSpec,
    resources: &[Resource],
    schema: &FeatureSchema,
) -> Result<Vec<Vec<f64>>> {
    schema.expect_matches(resources)?;
    let mut matrix: Vec<Vec<f64>> = candidates
        .iter()
        .map(|c| extract_unchecked(src_word, c, ctx, resources))
        .collect();
    normalize_list(&mut matrix);
    Ok(matrix)
}

/// Computes normalized feature vectors for every candidate of every
/// instance. Instances are independent, so extraction runs in parallel;
/// output order follows input order.
pub fn attach_features(
    instances: &mut [TrainingInstance],
    resources: &[Resource],
    schema: &FeatureSchema,
) -> Result<()> {
    schema.expect_matches(resources)?;
    instances.par_iter_mut().for_each(|inst| {
        let ctx = ContextSpec {
            source_sentence: &inst.source_sentence,
            target_sentence: &inst.target_sentence,
        };
        let mut matrix: Vec<Vec<f64>> = inst
            .candidates
            .iter()
            .map(|c| extract_unchecked(&inst.source_word, &c.word, &ctx, resources))
            .collect();
        normalize_list(&mut matrix);
        for (cand, features) in inst.candidates.iter_mut().zip(matrix) {
            cand.features = Some(features);
        }
    });
    Ok(())
}
