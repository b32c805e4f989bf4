//! Directed probabilistic bilingual lexicons and the ways to build them:
//! EM-trained word-translation tables from sentence-aligned text, score-
//! weighted co-occurrence tables from document-aligned text, and uniform
//! tables from a dictionary. Also the per-target-word argmax alignment used
//! by the training-data labeler.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{BilingualDictionary, ComparableCorpus, SentencePairCorpus, TokenizedText};
use crate::error::{Error, Result};

/// Artificial empty source word competing for alignments; the tokenizer can
/// never produce `<`, so it cannot collide with real vocabulary.
pub const NULL_TOKEN: &str = "<null>";

/// Probability assigned to translation pairs absent from a lexicon when an
/// argmax still needs a comparable score.
pub const ALIGN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    SourceToTarget,
    TargetToSource,
}

impl Direction {
    pub fn flipped(self) -> Direction {
        match self {
            Direction::SourceToTarget => Direction::TargetToSource,
            Direction::TargetToSource => Direction::SourceToTarget,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SourceToTarget => "s2t",
            Direction::TargetToSource => "t2s",
        }
    }

    pub fn parse(s: &str) -> Result<Direction> {
        match s {
            "s2t" => Ok(Direction::SourceToTarget),
            "t2s" => Ok(Direction::TargetToSource),
            other => Err(Error::InvalidInput(format!(
                "unknown lexicon direction {other:?} (expected s2t or t2s)"
            ))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A directed translation table: every known source word maps to candidate
/// translations sorted by descending probability, ties broken by word.
#[derive(Debug, Clone)]
pub struct Lexicon {
    pub resource_id: String,
    pub direction: Direction,
    table: HashMap<String, Vec<(String, f64)>>,
}

impl Lexicon {
    /// Wraps a raw table, sorting every entry list into canonical order.
    pub fn new(
        resource_id: impl Into<String>,
        direction: Direction,
        mut table: HashMap<String, Vec<(String, f64)>>,
    ) -> Lexicon {
        for entries in table.values_mut() {
            sort_entries(entries);
        }
        Lexicon {
            resource_id: resource_id.into(),
            direction,
            table,
        }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains_source(&self, word: &str) -> bool {
        self.table.contains_key(word)
    }

    /// Candidate translations in canonical order; empty for unknown words.
    pub fn translations(&self, word: &str) -> &[(String, f64)] {
        self.table.get(word).map_or(&[], |v| v.as_slice())
    }

    /// p(target | source); 0 when the pair is absent.
    pub fn prob(&self, source: &str, target: &str) -> f64 {
        self.translations(source)
            .iter()
            .find(|(w, _)| w == target)
            .map_or(0.0, |(_, p)| *p)
    }

    /// 1-based position of `target` in the entry list; 0 when absent.
    pub fn rank(&self, source: &str, target: &str) -> usize {
        self.translations(source)
            .iter()
            .position(|(w, _)| w == target)
            .map_or(0, |i| i + 1)
    }

    /// Highest probability in the word's entry list; 0 for unknown words.
    pub fn top_prob(&self, source: &str) -> f64 {
        self.translations(source).first().map_or(0.0, |(_, p)| *p)
    }

    /// Source words in lexicographic order.
    pub fn source_words(&self) -> Vec<&str> {
        let mut words: Vec<&str> = self.table.keys().map(|s| s.as_str()).collect();
        words.sort_unstable();
        words
    }

    pub fn table(&self) -> &HashMap<String, Vec<(String, f64)>> {
        &self.table
    }
}

fn sort_entries(entries: &mut [(String, f64)]) {
    entries.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("probabilities are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
}

/// Keeps at most `top_k` entries per source word, discarding entries below
/// `min_prob`. Probabilities are left unchanged: rank and probability-
/// difference features need the original values.
pub fn prune_lexicon(lex: &Lexicon, top_k: usize, min_prob: f64) -> Result<Lexicon> {
    if top_k == 0 {
        return Err(Error::InvalidInput("prune top_k must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&min_prob) {
        return Err(Error::InvalidInput(format!(
            "prune min_prob {min_prob} outside [0, 1)"
        )));
    }
    let table = lex
        .table
        .iter()
        .filter_map(|(src, entries)| {
            let kept: Vec<(String, f64)> = entries
                .iter()
                .filter(|(_, p)| *p >= min_prob)
                .take(top_k)
                .cloned()
                .collect();
            if kept.is_empty() {
                None
            } else {
                Some((src.clone(), kept))
            }
        })
        .collect();
    Ok(Lexicon {
        resource_id: lex.resource_id.clone(),
        direction: lex.direction,
        table,
    })
}

/// EM training output: the lexicon plus the corpus log-likelihood measured
/// under the parameters entering each iteration.
#[derive(Debug)]
pub struct Model1Result {
    pub lexicon: Lexicon,
    pub log_likelihood: Vec<f64>,
}

/// Trains a word-translation table by expectation maximization from uniform
/// initialization over co-occurring pairs. With `use_null` an artificial
/// empty word is prepended to every source sentence and competes for
/// probability mass like any other source word.
pub fn train_model1(
    corpus: &SentencePairCorpus,
    resource_id: &str,
    iterations: usize,
    use_null: bool,
) -> Result<Model1Result> {
    if iterations == 0 {
        return Err(Error::InvalidInput("EM needs at least one iteration".into()));
    }
    if corpus.pairs.is_empty() {
        return Err(Error::InvalidInput(format!(
            "corpus {:?} has no sentence pairs",
            corpus.name
        )));
    }

    let mut src_vocab: Vec<String> = Vec::new();
    let mut src_ids: HashMap<String, u32> = HashMap::new();
    let mut tgt_vocab: Vec<String> = Vec::new();
    let mut tgt_ids: HashMap<String, u32> = HashMap::new();
    if use_null {
        src_ids.insert(NULL_TOKEN.to_string(), 0);
        src_vocab.push(NULL_TOKEN.to_string());
    }
    let intern = |word: &str, vocab: &mut Vec<String>, ids: &mut HashMap<String, u32>| -> u32 {
        match ids.get(word) {
            Some(&id) => id,
            None => {
                let id = vocab.len() as u32;
                ids.insert(word.to_string(), id);
                vocab.push(word.to_string());
                id
            }
        }
    };

    // Sentence pairs as id sequences; source side gets NULL prepended.
    let mut pairs_ids: Vec<(Vec<u32>, Vec<u32>)> = Vec::with_capacity(corpus.pairs.len());
    for (src, tgt) in &corpus.pairs {
        if src.is_empty() || tgt.is_empty() {
            return Err(Error::InvalidInput(
                "sentence pair with an empty side".into(),
            ));
        }
        let mut s_ids: Vec<u32> = Vec::with_capacity(src.len() + 1);
        if use_null {
            s_ids.push(0);
        }
        for w in src {
            s_ids.push(intern(w, &mut src_vocab, &mut src_ids));
        }
        let t_ids: Vec<u32> = tgt
            .iter()
            .map(|w| intern(w, &mut tgt_vocab, &mut tgt_ids))
            .collect();
        pairs_ids.push((s_ids, t_ids));
    }
    if src_vocab.is_empty() || tgt_vocab.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }

    // Support of the translation table: distinct co-occurring target ids per
    // source id, in ascending id order so every later sum has a fixed order.
    let mut support: Vec<HashSet<u32>> = vec![HashSet::new(); src_vocab.len()];
    for (srcs, tgts) in &pairs_ids {
        for &e in srcs {
            for &f in tgts {
                support[e as usize].insert(f);
            }
        }
    }
    let targets_of: Vec<Vec<u32>> = support
        .into_iter()
        .map(|set| {
            let mut v: Vec<u32> = set.into_iter().collect();
            v.sort_unstable();
            v
        })
        .collect();
    let pos_of: Vec<HashMap<u32, usize>> = targets_of
        .iter()
        .map(|tgts| tgts.iter().enumerate().map(|(i, &f)| (f, i)).collect())
        .collect();

    let mut t: Vec<Vec<f64>> = targets_of
        .iter()
        .map(|tgts| vec![1.0 / tgts.len() as f64; tgts.len()])
        .collect();

    let mut log_likelihood = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut counts: Vec<Vec<f64>> = targets_of.iter().map(|x| vec![0.0; x.len()]).collect();
        let mut ll = 0.0;
        for (srcs, tgts) in &pairs_ids {
            let len_norm = (srcs.len() as f64).ln();
            for &f in tgts {
                let mut denom = 0.0;
                for &e in srcs {
                    denom += t[e as usize][pos_of[e as usize][&f]];
                }
                ll += denom.ln() - len_norm;
                for &e in srcs {
                    let pos = pos_of[e as usize][&f];
                    counts[e as usize][pos] += t[e as usize][pos] / denom;
                }
            }
        }
        if let Some(&prev) = log_likelihood.last() {
            if ll < prev - 1e-9 {
                return Err(Error::Degenerate(format!(
                    "EM log-likelihood decreased from {prev} to {ll}"
                )));
            }
        }
        log_likelihood.push(ll);
        for e in 0..t.len() {
            let total: f64 = counts[e].iter().sum();
            if total > 0.0 {
                for k in 0..t[e].len() {
                    t[e][k] = counts[e][k] / total;
                }
            }
        }
    }

    let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::with_capacity(src_vocab.len());
    for (e, word) in src_vocab.iter().enumerate() {
        let entries: Vec<(String, f64)> = targets_of[e]
            .iter()
            .zip(&t[e])
            .filter(|(_, &p)| p > 0.0)
            .map(|(&f, &p)| (tgt_vocab[f as usize].clone(), p))
            .collect();
        if !entries.is_empty() {
            table.insert(word.clone(), entries);
        }
    }
    Ok(Model1Result {
        lexicon: Lexicon::new(resource_id, Direction::SourceToTarget, table),
        log_likelihood,
    })
}

/// One alignment of a sentence pair: for each target position, the linked
/// source position (`None` = the artificial empty word).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordAlignment {
    pub links: Vec<Option<usize>>,
}

/// Links every target token to the source token maximizing p(target|source).
/// The empty word (when enabled) is considered before position 0, and ties go
/// to the earliest candidate, so an all-unknown target word links to NULL.
pub fn viterbi_align(
    source: &[String],
    target: &[String],
    lexicon: &Lexicon,
    use_null: bool,
) -> WordAlignment {
    let links = target
        .iter()
        .map(|t| {
            let mut best: Option<usize> = None;
            let mut best_p = if use_null {
                lexicon.prob(NULL_TOKEN, t).max(ALIGN_FLOOR)
            } else {
                f64::NEG_INFINITY
            };
            for (i, s) in source.iter().enumerate() {
                let p = lexicon.prob(s, t).max(ALIGN_FLOOR);
                if p > best_p {
                    best_p = p;
                    best = Some(i);
                }
            }
            if !use_null && best.is_none() {
                // Without NULL the leftmost source token wins the all-floor tie.
                best = Some(0);
            }
            best
        })
        .collect();
    WordAlignment { links }
}

/// Builds a translation table from a document-aligned corpus: each candidate
/// pair is scored by the summed alignment scores of the document pairs it
/// co-occurs in, normalized per source word, keeping the `top_k` strongest
/// translations. A deliberately simple stand-in for published
/// comparable-corpus extraction methods.
pub fn extract_comparable_lexicon(
    corpus: &ComparableCorpus,
    resource_id: &str,
    top_k: usize,
) -> Result<Lexicon> {
    if corpus.alignments.is_empty() {
        return Err(Error::InvalidInput(format!(
            "comparable corpus {:?} has no alignments",
            corpus.name
        )));
    }
    if top_k == 0 {
        return Err(Error::InvalidInput("top_k must be at least 1".into()));
    }
    let mut src_vocab: Vec<String> = Vec::new();
    let mut src_ids: HashMap<String, u32> = HashMap::new();
    let mut tgt_vocab: Vec<String> = Vec::new();
    let mut tgt_ids: HashMap<String, u32> = HashMap::new();
    let mut assoc: HashMap<(u32, u32), f64> = HashMap::new();

    for (src_id, tgt_id, score) in &corpus.alignments {
        let src_doc = &corpus.src_docs[src_id];
        let tgt_doc = &corpus.tgt_docs[tgt_id];
        let s_ids = distinct_ids(src_doc, &mut src_vocab, &mut src_ids);
        let t_ids = distinct_ids(tgt_doc, &mut tgt_vocab, &mut tgt_ids);
        for &s in &s_ids {
            for &t in &t_ids {
                *assoc.entry((s, t)).or_insert(0.0) += score;
            }
        }
    }

    let mut keys: Vec<(u32, u32)> = assoc.keys().copied().collect();
    keys.sort_unstable();
    let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    let mut i = 0;
    while i < keys.len() {
        let s = keys[i].0;
        let mut j = i;
        while j < keys.len() && keys[j].0 == s {
            j += 1;
        }
        let total: f64 = keys[i..j].iter().map(|k| assoc[k]).sum();
        let mut entries: Vec<(String, f64)> = keys[i..j]
            .iter()
            .map(|k| (tgt_vocab[k.1 as usize].clone(), assoc[k] / total))
            .collect();
        sort_entries(&mut entries);
        entries.truncate(top_k);
        table.insert(src_vocab[s as usize].clone(), entries);
        i = j;
    }
    Ok(Lexicon {
        resource_id: resource_id.to_string(),
        direction: Direction::SourceToTarget,
        table,
    })
}

fn distinct_ids(
    doc: &TokenizedText,
    vocab: &mut Vec<String>,
    ids: &mut HashMap<String, u32>,
) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::with_capacity(doc.len());
    for w in doc {
        let id = match ids.get(w) {
            Some(&id) => id,
            None => {
                let id = vocab.len() as u32;
                ids.insert(w.clone(), id);
                vocab.push(w.clone());
                id
            }
        };
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out.sort_unstable();
    out
}

/// Uniform translation table from a dictionary: an entry with k targets gives
/// each probability 1/k. The reverse direction inverts the entries first and
/// then distributes uniformly over each target's sources.
pub fn dictionary_lexicon(
    dict: &BilingualDictionary,
    resource_id: &str,
    direction: Direction,
) -> Lexicon {
    let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    match direction {
        Direction::SourceToTarget => {
            for (src, targets) in &dict.entries {
                let p = 1.0 / targets.len() as f64;
                table.insert(src.clone(), targets.iter().map(|t| (t.clone(), p)).collect());
            }
        }
        Direction::TargetToSource => {
            let mut inverted: HashMap<String, Vec<String>> = HashMap::new();
            for (src, targets) in &dict.entries {
                for t in targets {
                    inverted.entry(t.clone()).or_default().push(src.clone());
                }
            }
            for (tgt, sources) in inverted {
                let p = 1.0 / sources.len() as f64;
                table.insert(tgt, sources.into_iter().map(|s| (s, p)).collect());
            }
        }
    }
    Lexicon::new(resource_id, direction, table)
}

/// Writes a lexicon as TSV: a `#lexicon` header, then one
/// `source<TAB>target<TAB>probability` row per entry, grouped by source word
/// in lexicographic order. Probabilities are printed with 17 significant
/// digits so reading the file back reproduces them bit-exactly.
pub fn write_lexicon(lex: &Lexicon, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(
        w,
        "#lexicon resource={} direction={}",
        lex.resource_id, lex.direction
    )
    .map_err(io_err)?;
    for src in lex.source_words() {
        for (tgt, p) in lex.translations(src) {
            writeln!(w, "{src}\t{tgt}\t{p:.16e}").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

pub fn read_lexicon(path: &Path) -> Result<Lexicon> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(path, 1, "empty lexicon file"))?;
    let header = header.map_err(|e| Error::io(path, e))?;
    let rest = header
        .strip_prefix("#lexicon ")
        .ok_or_else(|| Error::parse(path, 1, "expected #lexicon header"))?;
    let mut resource_id = None;
    let mut direction = None;
    for field in rest.split_whitespace() {
        if let Some(v) = field.strip_prefix("resource=") {
            resource_id = Some(v.to_string());
        } else if let Some(v) = field.strip_prefix("direction=") {
            direction = Some(Direction::parse(v)?);
        }
    }
    let resource_id =
        resource_id.ok_or_else(|| Error::parse(path, 1, "header missing resource="))?;
    let direction = direction.ok_or_else(|| Error::parse(path, 1, "header missing direction="))?;

    let mut table: HashMap<String, Vec<(String, f64)>> = HashMap::new();
    for (idx, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(src), Some(tgt), Some(prob)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(
                path,
                idx + 1,
                "expected source<TAB>target<TAB>probability",
            ));
        };
        let prob: f64 = prob
            .parse()
            .map_err(|e| Error::parse(path, idx + 1, format!("bad probability: {e}")))?;
        if !(prob > 0.0 && prob <= 1.0 + 1e-9) {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("probability {prob} outside (0, 1]"),
            ));
        }
        table
            .entry(src.to_string())
            .or_default()
            .push((tgt.to_string(), prob));
    }
    Ok(Lexicon::new(resource_id, direction, table))
}
