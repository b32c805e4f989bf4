//! Okapi BM25 retrieval over tokenized documents, weighted structured
//! queries, TREC-style qrels/run-file I/O, and rank-based evaluation with a
//! paired significance test.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::corpus::TokenizedText;
use crate::error::{Error, Result};
use crate::ranker::{top_n, RankedCandidates};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Inverted index; postings keep documents in insertion order so scoring is
/// reproducible.
pub struct InvertedIndex {
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    postings: HashMap<String, Vec<(u32, u32)>>,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, |p| p.len())
    }

    /// ln((N - df + 0.5) / (df + 0.5) + 1); strictly positive for any df <= N.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }
}

pub fn build_index(docs: &[(String, TokenizedText)]) -> Result<InvertedIndex> {
    if docs.is_empty() {
        return Err(Error::InvalidInput("cannot index an empty document collection".into()));
    }
    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut doc_lens = Vec::with_capacity(docs.len());
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(docs.len());
    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut total_len = 0u64;
    for (idx, (id, tokens)) in docs.iter().enumerate() {
        if seen.insert(id, ()).is_some() {
            return Err(Error::InvalidInput(format!("duplicate document id {id:?}")));
        }
        doc_ids.push(id.clone());
        doc_lens.push(tokens.len() as u32);
        total_len += tokens.len() as u64;
        let mut tf: BTreeMap<&str, u32> = BTreeMap::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term.to_string()).or_default().push((idx as u32, count));
        }
    }
    Ok(InvertedIndex {
        avg_doc_len: total_len as f64 / docs.len() as f64,
        doc_ids,
        doc_lens,
        postings,
    })
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    doc_ids: Vec<String>,
    doc_lens: Vec<u32>,
    avg_doc_len: f64,
    postings: BTreeMap<String, Vec<(u32, u32)>>,
}

/// Writes the index as JSON with sorted terms, so identical collections
/// produce identical files.
pub fn write_index(index: &InvertedIndex, path: &Path) -> Result<()> {
    let file = IndexFile {
        doc_ids: index.doc_ids.clone(),
        doc_lens: index.doc_lens.clone(),
        avg_doc_len: index.avg_doc_len,
        postings: index
            .postings
            .iter()
            .map(|(t, p)| (t.clone(), p.clone()))
            .collect(),
    };
    let out = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(out);
    serde_json::to_writer(&mut w, &file)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize index to {path:?}: {e}")))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_index(path: &Path) -> Result<InvertedIndex> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parsed: IndexFile = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(path, 0, format!("bad index file: {e}")))?;
    if parsed.doc_ids.len() != parsed.doc_lens.len() {
        return Err(Error::parse(path, 0, "document id/length count mismatch"));
    }
    Ok(InvertedIndex {
        doc_ids: parsed.doc_ids,
        doc_lens: parsed.doc_lens,
        avg_doc_len: parsed.avg_doc_len,
        postings: parsed.postings.into_iter().collect(),
    })
}

/// Query terms with weights, kept in construction order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedQuery {
    pub terms: Vec<(String, f64)>,
}

/// Merges repeated terms by summing their weights (first occurrence keeps
/// the position) and drops terms whose merged weight is not positive.
pub fn merge_weighted_terms(parts: Vec<(String, f64)>) -> WeightedQuery {
    let mut order: Vec<String> = Vec::new();
    let mut weights: HashMap<String, f64> = HashMap::new();
    for (term, weight) in parts {
        match weights.get_mut(&term) {
            Some(w) => *w += weight,
            None => {
                weights.insert(term.clone(), weight);
                order.push(term);
            }
        }
    }
    WeightedQuery {
        terms: order
            .into_iter()
            .filter_map(|term| {
                let w = weights[&term];
                (w > 0.0).then_some((term, w))
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructedQuery {
    pub query: WeightedQuery,
    /// Source words that produced no translation candidate; they enter the
    /// query verbatim.
    pub oov_words: usize,
}

/// Builds the target-language query from per-word ranked translation
/// candidates: the top `n` candidates of every word enter with their
/// renormalized weights (or weight 1 in unweighted mode); a word with no
/// candidates keeps its source token with weight 1 and counts as OOV.
pub fn construct_query(
    words: &[String],
    candidates: &[RankedCandidates],
    n: usize,
    weighted: bool,
) -> Result<ConstructedQuery> {
    if n == 0 {
        return Err(Error::InvalidInput("query construction needs n >= 1".into()));
    }
    if words.len() != candidates.len() {
        return Err(Error::InvalidInput(format!(
            "{} query words but {} candidate lists",
            words.len(),
            candidates.len()
        )));
    }
    let mut parts: Vec<(String, f64)> = Vec::new();
    let mut oov_words = 0usize;
    for (word, ranked) in words.iter().zip(candidates) {
        let kept = top_n(ranked, n);
        if kept.entries.is_empty() {
            parts.push((word.clone(), 1.0));
            oov_words += 1;
            continue;
        }
        for entry in kept.entries {
            parts.push((entry.word, if weighted { entry.weight } else { 1.0 }));
        }
    }
    Ok(ConstructedQuery {
        query: merge_weighted_terms(parts),
        oov_words,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
}

/// BM25 with weighted query terms: each term contributes
/// weight * idf * tf*(k1+1) / (tf + k1*(1 - b + b*len/avg)), accumulated in
/// query-term order. Results sort by score descending, ties by document id.
pub fn bm25_search(
    index: &InvertedIndex,
    query: &WeightedQuery,
    k: usize,
    params: Bm25Params,
) -> Vec<SearchHit> {
    let mut acc = vec![0.0f64; index.doc_count()];
    let mut touched = vec![false; index.doc_count()];
    for (term, weight) in &query.terms {
        let Some(postings) = index.postings.get(term) else { continue };
        let idf = index.idf(term);
        for &(doc, tf) in postings {
            let tf = tf as f64;
            let len = index.doc_lens[doc as usize] as f64;
            let part = tf * (params.k1 + 1.0)
                / (tf + params.k1 * (1.0 - params.b + params.b * len / index.avg_doc_len));
            acc[doc as usize] += weight * idf * part;
            touched[doc as usize] = true;
        }
    }
    let mut hits: Vec<(u32, f64)> = (0..index.doc_count() as u32)
        .filter(|&d| touched[d as usize])
        .map(|d| (d, acc[d as usize]))
        .collect();
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| index.doc_ids[a.0 as usize].cmp(&index.doc_ids[b.0 as usize]))
    });
    hits.truncate(k);
    hits.into_iter()
        .map(|(d, score)| SearchHit {
            doc_id: index.doc_ids[d as usize].clone(),
            score,
        })
        .collect()
}

/// Relevant document ids per query.
pub type Qrels = BTreeMap<String, BTreeSet<String>>;

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut qrels: Qrels = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, i + 1, "expected `qid 0 docid rel`"));
        }
        let rel: i64 = fields[3]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad relevance {:?}", fields[3])))?;
        let entry = qrels.entry(fields[0].to_string()).or_default();
        if rel > 0 {
            entry.insert(fields[2].to_string());
        }
    }
    if qrels.is_empty() {
        return Err(Error::parse(path, 0, "no judgments found"));
    }
    Ok(qrels)
}

/// Ranked results per query, preserving query order of the producing run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunFile {
    pub tag: String,
    pub rankings: Vec<(String, Vec<(String, f64)>)>,
}

pub fn write_run(run: &RunFile, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (qid, hits) in &run.rankings {
        for (rank0, (doc, score)) in hits.iter().enumerate() {
            writeln!(w, "{} Q0 {} {} {} {}", qid, doc, rank0 + 1, score, run.tag)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_run(path: &Path) -> Result<RunFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tag = String::new();
    let mut rankings: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::parse(path, i + 1, "expected `qid Q0 docid rank score tag`"));
        }
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad score {:?}", fields[4])))?;
        tag = fields[5].to_string();
        match rankings.last_mut() {
            Some((qid, hits)) if qid == fields[0] => hits.push((fields[2].to_string(), score)),
            _ => rankings.push((fields[0].to_string(), vec![(fields[2].to_string(), score)])),
        }
    }
    Ok(RunFile { tag, rankings })
}

/// `qid<TAB>title` per line.
pub fn read_topics(path: &Path) -> Result<Vec<(String, String)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut topics = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let Some((qid, title)) = line.split_once('\t') else {
            return Err(Error::parse(path, i + 1, "expected `qid<TAB>title`"));
        };
        if !seen.insert(qid.to_string()) {
            return Err(Error::parse(path, i + 1, format!("duplicate topic id {qid:?}")));
        }
        topics.push((qid.to_string(), title.to_string()));
    }
    if topics.is_empty() {
        return Err(Error::parse(path, 0, "no topics found"));
    }
    Ok(topics)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub map: f64,
    pub p5: f64,
    pub p10: f64,
    /// Average precision for every query that has at least one relevant
    /// document, keyed by query id.
    pub per_query_ap: BTreeMap<String, f64>,
    pub queries_evaluated: usize,
    /// Queries present in the qrels or the run with no relevant documents;
    /// they are excluded from all averages.
    pub zero_relevant_queries: usize,
    /// Query words without any translation candidate; filled by the caller
    /// that constructed the queries.
    pub oov_words: usize,
    /// Free-form run metadata (method, resource, N, weighting mode, ...).
    pub meta: BTreeMap<String, String>,
}

/// MAP / P@5 / P@10 of a run against judgments. Queries without relevant
/// documents are excluded from the averages and counted; judged queries
/// missing from the run score zero.
pub fn evaluate(run: &RunFile, qrels: &Qrels) -> Result<EvalResult> {
    let run_by_query: HashMap<&str, &Vec<(String, f64)>> = run
        .rankings
        .iter()
        .map(|(qid, hits)| (qid.as_str(), hits))
        .collect();
    let mut result = EvalResult::default();
    let mut p5_sum = 0.0;
    let mut p10_sum = 0.0;
    for (qid, relevant) in qrels {
        if relevant.is_empty() {
            result.zero_relevant_queries += 1;
            continue;
        }
        let empty = Vec::new();
        let hits = run_by_query.get(qid.as_str()).copied().unwrap_or(&empty);
        let mut rel_seen = 0usize;
        let mut ap_sum = 0.0;
        let mut rel_at_5 = 0usize;
        let mut rel_at_10 = 0usize;
        for (rank0, (doc, _)) in hits.iter().enumerate() {
            if relevant.contains(doc) {
                rel_seen += 1;
                ap_sum += rel_seen as f64 / (rank0 + 1) as f64;
                if rank0 < 5 {
                    rel_at_5 += 1;
                }
                if rank0 < 10 {
                    rel_at_10 += 1;
                }
            }
        }
        let ap = ap_sum / relevant.len() as f64;
        result.per_query_ap.insert(qid.clone(), ap);
        result.map += ap;
        p5_sum += rel_at_5 as f64 / 5.0;
        p10_sum += rel_at_10 as f64 / 10.0;
        result.queries_evaluated += 1;
    }
    for (qid, _) in &run.rankings {
        if !qrels.contains_key(qid) {
            result.zero_relevant_queries += 1;
        }
    }
    if result.queries_evaluated == 0 {
        return Err(Error::Degenerate("no query has relevant documents".into()));
    }
    let n = result.queries_evaluated as f64;
    result.map /= n;
    result.p5 = p5_sum / n;
    result.p10 = p10_sum / n;
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedTTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p: f64,
    pub mean_diff: f64,
}

/// Paired Student t-test over per-query metric pairs (a - b). Errors when
/// fewer than two pairs exist or every difference is identical.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "paired test needs equal-length samples, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidInput("paired test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return Err(Error::Degenerate(
            "every per-query difference is identical; t statistic is undefined".into(),
        ));
    }
    let t = mean / (sd / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidInput(format!("bad t distribution: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(PairedTTest {
        t,
        df,
        p,
        mean_diff: mean,
    })
}
