//! Builds ranking training data from a sentence-aligned corpus: every source
//! word occurrence becomes one candidate list, the word's alignment supplies
//! the positive label, and the other translation resources validate it.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::{SentencePairCorpus, TokenizedText};
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::lexicon::{viterbi_align, Lexicon};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub word: String,
    pub label: bool,
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingInstance {
    pub query_id: u64,
    pub source_word: String,
    pub source_sentence: TokenizedText,
    pub target_sentence: TokenizedText,
    /// Candidates in lexicographic word order; exactly one carries label 1.
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// The aligned word must hold a translation relation in at least one
    /// resource lexicon.
    Any,
    /// Every resource lexicon that knows the source word must agree.
    All,
}

impl ValidationMode {
    pub fn parse(s: &str) -> Result<ValidationMode> {
        match s {
            "any" => Ok(ValidationMode::Any),
            "all" => Ok(ValidationMode::All),
            other => Err(Error::InvalidInput(format!(
                "unknown validation mode {other:?} (expected any or all)"
            ))),
        }
    }
}

#[derive(Debug)]
pub struct LabelingOutput {
    pub instances: Vec<TrainingInstance>,
    /// Word occurrences whose aligned translation was missing from the pool
    /// or failed cross-resource validation.
    pub dropped_no_positive: u64,
    /// Word occurrences absent from every resource lexicon.
    pub skipped_no_candidates: u64,
    /// Occurrences of words shorter than two characters.
    pub skipped_short: u64,
}

/// Runs the labeling pipeline over every sentence pair: align the pair with
/// the aligner lexicon, pool the top `pool_k` translations of each source
/// word from every resource, and label the aligned target word positive when
/// it is pooled and validated. Lists without a positive are dropped and
/// counted. One instance is emitted per distinct source word per sentence.
pub fn build_training_data(
    labeling_corpus: &SentencePairCorpus,
    resources: &[&Lexicon],
    aligner: &Lexicon,
    pool_k: usize,
    validation: ValidationMode,
    use_null: bool,
) -> Result<LabelingOutput> {
    if resources.is_empty() {
        return Err(Error::InvalidInput(
            "labeling needs at least one resource lexicon".into(),
        ));
    }
    if pool_k == 0 {
        return Err(Error::InvalidInput("pool_k must be at least 1".into()));
    }
    let mut out = LabelingOutput {
        instances: Vec::new(),
        dropped_no_positive: 0,
        skipped_no_candidates: 0,
        skipped_short: 0,
    };
    for (src, tgt) in &labeling_corpus.pairs {
        let alignment = viterbi_align(src, tgt, aligner, use_null);
        // Leftmost target token linked to each source position.
        let mut aligned_to: HashMap<usize, &str> = HashMap::new();
        for (j, link) in alignment.links.iter().enumerate() {
            if let Some(i) = link {
                aligned_to.entry(*i).or_insert(tgt[j].as_str());
            }
        }
        let mut seen: HashSet<&str> = HashSet::new();
        for (i, word) in src.iter().enumerate() {
            if !seen.insert(word.as_str()) {
                continue;
            }
            if word.chars().count() < 2 {
                out.skipped_short += 1;
                continue;
            }
            let mut pool: BTreeSet<&str> = BTreeSet::new();
            for lex in resources {
                for (t, _) in lex.translations(word).iter().take(pool_k) {
                    pool.insert(t.as_str());
                }
            }
            if pool.is_empty() {
                out.skipped_no_candidates += 1;
                continue;
            }
            let positive = aligned_to
                .get(&i)
                .copied()
                .filter(|t| pool.contains(t) && is_validated(word, t, resources, validation));
            let Some(positive) = positive else {
                out.dropped_no_positive += 1;
                continue;
            };
            let candidates = pool
                .iter()
                .map(|&t| Candidate {
                    word: t.to_string(),
                    label: t == positive,
                    features: None,
                })
                .collect();
            out.instances.push(TrainingInstance {
                query_id: out.instances.len() as u64 + 1,
                source_word: word.clone(),
                source_sentence: src.clone(),
                target_sentence: tgt.clone(),
                candidates,
            });
        }
    }
    Ok(out)
}

fn is_validated(
    source: &str,
    target: &str,
    resources: &[&Lexicon],
    validation: ValidationMode,
) -> bool {
    match validation {
        ValidationMode::Any => resources.iter().any(|lex| lex.prob(source, target) > 0.0),
        ValidationMode::All => {
            let knowing: Vec<_> = resources
                .iter()
                .filter(|lex| lex.contains_source(source))
                .collect();
            !knowing.is_empty() && knowing.iter().all(|lex| lex.prob(source, target) > 0.0)
        }
    }
}

/// Writes instances in LETOR style: `label qid:<id> 1:<v> 2:<v> ... #src=<w>
/// tgt=<w>`, one candidate per line, preceded by a header comment carrying
/// the feature schema version and hash. Every candidate must already have
/// features attached.
pub fn write_training_file(
    instances: &[TrainingInstance],
    schema: &FeatureSchema,
    path: &Path,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    writeln!(w, "# schema version={} hash={}", schema.version, schema.hash).map_err(io_err)?;
    for inst in instances {
        for cand in &inst.candidates {
            let features = cand.features.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!(
                    "candidate {:?} of query {} has no feature vector",
                    cand.word, inst.query_id
                ))
            })?;
            write!(w, "{} qid:{}", u8::from(cand.label), inst.query_id).map_err(io_err)?;
            for (k, v) in features.iter().enumerate() {
                write!(w, " {}:{}", k + 1, v).map_err(io_err)?;
            }
            writeln!(w, " #src={} tgt={}", inst.source_word, cand.word).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[derive(Debug)]
pub struct TrainingFile {
    pub instances: Vec<TrainingInstance>,
    pub schema_version: Option<u32>,
    pub schema_hash: Option<String>,
}

/// Reads a file produced by [`write_training_file`]. Sentences are not
/// serialized, so read-back instances carry empty contexts; labels, feature
/// vectors, and words round-trip exactly.
pub fn read_training_file(path: &Path) -> Result<TrainingFile> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = TrainingFile {
        instances: Vec::new(),
        schema_version: None,
        schema_hash: None,
    };
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            for field in rest.split_whitespace() {
                if let Some(v) = field.strip_prefix("version=") {
                    out.schema_version = Some(v.parse().map_err(|e| {
                        Error::parse(path, line_no, format!("bad schema version: {e}"))
                    })?);
                } else if let Some(h) = field.strip_prefix("hash=") {
                    out.schema_hash = Some(h.to_string());
                }
            }
            continue;
        }
        let (body, comment) = line
            .split_once(" #")
            .ok_or_else(|| Error::parse(path, line_no, "missing #src=... tgt=... comment"))?;
        let mut src_word = None;
        let mut tgt_word = None;
        for field in comment.split_whitespace() {
            if let Some(v) = field.strip_prefix("src=") {
                src_word = Some(v.to_string());
            } else if let Some(v) = field.strip_prefix("tgt=") {
                tgt_word = Some(v.to_string());
            }
        }
        let (Some(src_word), Some(tgt_word)) = (src_word, tgt_word) else {
            return Err(Error::parse(path, line_no, "comment missing src= or tgt="));
        };
        let mut fields = body.split_whitespace();
        let label = match fields.next() {
            Some("0") => false,
            Some("1") => true,
            other => {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected binary label, got {other:?}"),
                ))
            }
        };
        let qid: u64 = fields
            .next()
            .and_then(|f| f.strip_prefix("qid:"))
            .ok_or_else(|| Error::parse(path, line_no, "expected qid:<int>"))?
            .parse()
            .map_err(|e| Error::parse(path, line_no, format!("bad qid: {e}")))?;
        let mut features = Vec::new();
        for field in fields {
            let (k, v) = field
                .split_once(':')
                .ok_or_else(|| Error::parse(path, line_no, format!("bad feature {field:?}")))?;
            let k: usize = k
                .parse()
                .map_err(|e| Error::parse(path, line_no, format!("bad feature index: {e}")))?;
            if k != features.len() + 1 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("feature indices must be contiguous from 1, got {k}"),
                ));
            }
            let v: f64 = v
                .parse()
                .map_err(|e| Error::parse(path, line_no, format!("bad feature value: {e}")))?;
            features.push(v);
        }
        let candidate = Candidate {
            word: tgt_word,
            label,
            features: Some(features),
        };
        match out.instances.last_mut() {
            Some(inst) if inst.query_id == qid => {
                if inst.source_word != src_word {
                    return Err(Error::parse(
                        path,
                        line_no,
                        format!("qid {qid} mixes source words"),
                    ));
                }
                inst.candidates.push(candidate);
            }
            _ => out.instances.push(TrainingInstance {
                query_id: qid,
                source_word: src_word,
                source_sentence: Vec::new(),
                target_sentence: Vec::new(),
                candidates: vec![candidate],
            }),
        }
    }
    Ok(out)
}
