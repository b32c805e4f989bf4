//! Corpus ingestion, tokenization, and the document-level count statistics
//! (document frequency, co-occurrence, cross-lingual co-occurrence) that the
//! feature extractors consume.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub type TokenizedText = Vec<String>;

/// NFKC-normalizes, lowercases, and splits into maximal alphanumeric runs,
/// so punctuation and control characters act as separators: `"a,b.  c"`
/// tokenizes to `["a", "b", "c"]`. Applied to a fixpoint so that
/// re-tokenizing joined output is a no-op.
pub fn tokenize(text: &str) -> TokenizedText {
    let mut tokens = tokenize_once(text);
    for _ in 0..4 {
        let again = tokenize_once(&tokens.join(" "));
        if again == tokens {
            break;
        }
        tokens = again;
    }
    tokens
}

fn tokenize_once(text: &str) -> TokenizedText {
    let normalized: String = text.nfkc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in normalized.chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Single-word form of [`tokenize`] for dictionary entries and query terms;
/// multi-token input keeps only the first token.
pub fn normalize_word(word: &str) -> Option<String> {
    tokenize(word).into_iter().next()
}

#[derive(Debug, Clone)]
pub struct SentencePairCorpus {
    pub name: String,
    pub pairs: Vec<(TokenizedText, TokenizedText)>,
    /// Lines dropped because one side tokenized to nothing.
    pub skipped: u64,
}

impl SentencePairCorpus {
    /// The same pairs with source and target sides exchanged, for training
    /// reverse-direction lexicons.
    pub fn swapped(&self) -> SentencePairCorpus {
        SentencePairCorpus {
            name: self.name.clone(),
            pairs: self
                .pairs
                .iter()
                .map(|(s, t)| (t.clone(), s.clone()))
                .collect(),
            skipped: self.skipped,
        }
    }
}

/// Reads a tab-separated sentence-pair file: one `source<TAB>target` pair per
/// line. Blank lines and lines where either side tokenizes to nothing are
/// skipped and counted; a non-blank line without a tab is an error.
pub fn load_parallel(path: &Path, name: &str) -> Result<SentencePairCorpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    let mut skipped = 0u64;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let (src, tgt) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, idx + 1, "expected source<TAB>target"))?;
        let src = tokenize(src);
        let tgt = tokenize(tgt);
        if src.is_empty() || tgt.is_empty() {
            skipped += 1;
            continue;
        }
        pairs.push((src, tgt));
    }
    Ok(SentencePairCorpus {
        name: name.to_string(),
        pairs,
        skipped,
    })
}

#[derive(Debug, Clone)]
pub struct ComparableCorpus {
    pub name: String,
    pub src_docs: BTreeMap<String, TokenizedText>,
    pub tgt_docs: BTreeMap<String, TokenizedText>,
    /// (source doc id, target doc id, alignment score in (0, 1]).
    pub alignments: Vec<(String, String, f64)>,
}

impl ComparableCorpus {
    pub fn swapped(&self) -> ComparableCorpus {
        ComparableCorpus {
            name: self.name.clone(),
            src_docs: self.tgt_docs.clone(),
            tgt_docs: self.src_docs.clone(),
            alignments: self
                .alignments
                .iter()
                .map(|(s, t, score)| (t.clone(), s.clone(), *score))
                .collect(),
        }
    }
}

#[derive(Deserialize)]
struct DocLine {
    id: String,
    text: String,
}

#[derive(Deserialize)]
struct AlignLine {
    src: String,
    tgt: String,
    score: f64,
}

fn load_doc_file(path: &Path) -> Result<BTreeMap<String, TokenizedText>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if docs.insert(doc.id.clone(), tokenize(&doc.text)).is_some() {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("duplicate document id {:?}", doc.id),
            ));
        }
    }
    Ok(docs)
}

/// Reads retrieval documents (JSON-lines `{"id", "text"}`) preserving file
/// order; duplicate ids are an error.
pub fn load_documents(path: &Path) -> Result<Vec<(String, TokenizedText)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: DocLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("duplicate document id {:?}", doc.id),
            ));
        }
        docs.push((doc.id, tokenize(&doc.text)));
    }
    Ok(docs)
}

/// Loads a document-aligned corpus: two JSON-lines document files plus a
/// JSON-lines alignment file `{"src", "tgt", "score"}`. Every alignment must
/// reference existing documents and carry a score in (0, 1].
pub fn load_comparable(
    src_path: &Path,
    tgt_path: &Path,
    align_path: &Path,
    name: &str,
) -> Result<ComparableCorpus> {
    let src_docs = load_doc_file(src_path)?;
    let tgt_docs = load_doc_file(tgt_path)?;
    let file = File::open(align_path).map_err(|e| Error::io(align_path, e))?;
    let mut alignments = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(align_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let a: AlignLine = serde_json::from_str(&line)
            .map_err(|e| Error::parse(align_path, idx + 1, e.to_string()))?;
        if !src_docs.contains_key(&a.src) {
            return Err(Error::parse(
                align_path,
                idx + 1,
                format!("alignment references unknown source document {:?}", a.src),
            ));
        }
        if !tgt_docs.contains_key(&a.tgt) {
            return Err(Error::parse(
                align_path,
                idx + 1,
                format!("alignment references unknown target document {:?}", a.tgt),
            ));
        }
        if !(a.score > 0.0 && a.score <= 1.0) {
            return Err(Error::parse(
                align_path,
                idx + 1,
                format!("alignment score {} outside (0, 1]", a.score),
            ));
        }
        alignments.push((a.src, a.tgt, a.score));
    }
    Ok(ComparableCorpus {
        name: name.to_string(),
        src_docs,
        tgt_docs,
        alignments,
    })
}

#[derive(Debug, Clone, Default)]
pub struct BilingualDictionary {
    /// Source word -> sorted, deduplicated target words.
    pub entries: BTreeMap<String, Vec<String>>,
}

/// Reads a dictionary file: `source<TAB>tgt1|tgt2|...` per line. Repeated
/// source words merge their target sets; every entry must keep at least one
/// target after normalization.
pub fn load_dictionary(path: &Path) -> Result<BilingualDictionary> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (src, tgts) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, idx + 1, "expected source<TAB>tgt1|tgt2|..."))?;
        let src = normalize_word(src)
            .ok_or_else(|| Error::parse(path, idx + 1, "source word empty after normalization"))?;
        let targets: BTreeSet<String> = tgts.split('|').filter_map(normalize_word).collect();
        if targets.is_empty() {
            return Err(Error::parse(path, idx + 1, "entry has no target words"));
        }
        entries.entry(src).or_default().extend(targets);
    }
    Ok(BilingualDictionary {
        entries: entries
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect(),
    })
}

/// Reads a stoplist: one word per line, `#` comments allowed.
pub fn load_stoplist(path: &Path) -> Result<HashSet<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut stops = HashSet::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(w) = normalize_word(line) {
            stops.insert(w);
        }
    }
    Ok(stops)
}

/// Document-collection count statistics: document frequency, collection term
/// frequency, and within-document co-occurrence counts. Words are interned so
/// pair lookups avoid allocation.
#[derive(Debug, Clone)]
pub struct CorpusStats {
    vocab: HashMap<String, u32>,
    df: Vec<u64>,
    tf: Vec<u64>,
    /// Keyed (min id, max id); the diagonal is implicit (cooccur(w,w) = df(w)).
    cooccur: HashMap<(u32, u32), u64>,
    doc_count: u64,
    avg_doc_len: f64,
}

impl CorpusStats {
    pub fn doc_count(&self) -> u64 {
        self.doc_count
    }

    pub fn avg_doc_len(&self) -> f64 {
        self.avg_doc_len
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn df(&self, word: &str) -> u64 {
        self.vocab.get(word).map_or(0, |&id| self.df[id as usize])
    }

    pub fn tf(&self, word: &str) -> u64 {
        self.vocab.get(word).map_or(0, |&id| self.tf[id as usize])
    }

    /// Number of documents containing both words at least once.
    pub fn cooccur(&self, w1: &str, w2: &str) -> u64 {
        let (Some(&a), Some(&b)) = (self.vocab.get(w1), self.vocab.get(w2)) else {
            return 0;
        };
        if a == b {
            return self.df[a as usize];
        }
        let key = if a < b { (a, b) } else { (b, a) };
        self.cooccur.get(&key).copied().unwrap_or(0)
    }

    /// Natural-log inverse document frequency ln(N / df), 0 for unseen words.
    pub fn idf(&self, word: &str) -> f64 {
        let df = self.df(word);
        if df == 0 {
            return 0.0;
        }
        (self.doc_count as f64 / df as f64).ln()
    }
}

/// Builds [`CorpusStats`] treating each entry of `docs` as one document.
pub fn compute_stats<D: AsRef<[String]>>(docs: &[D]) -> Result<CorpusStats> {
    if docs.is_empty() {
        return Err(Error::InvalidInput(
            "cannot compute statistics of an empty document set".into(),
        ));
    }
    let mut vocab: HashMap<String, u32> = HashMap::new();
    let mut df: Vec<u64> = Vec::new();
    let mut tf: Vec<u64> = Vec::new();
    let mut cooccur: HashMap<(u32, u32), u64> = HashMap::new();
    let mut total_len = 0u64;
    for doc in docs {
        let doc = doc.as_ref();
        total_len += doc.len() as u64;
        let mut distinct: Vec<u32> = Vec::new();
        for word in doc {
            let id = match vocab.get(word) {
                Some(&id) => id,
                None => {
                    let id = df.len() as u32;
                    vocab.insert(word.clone(), id);
                    df.push(0);
                    tf.push(0);
                    id
                }
            };
            tf[id as usize] += 1;
            if !distinct.contains(&id) {
                distinct.push(id);
            }
        }
        distinct.sort_unstable();
        for (i, &a) in distinct.iter().enumerate() {
            df[a as usize] += 1;
            for &b in &distinct[i + 1..] {
                *cooccur.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    Ok(CorpusStats {
        vocab,
        df,
        tf,
        cooccur,
        doc_count: docs.len() as u64,
        avg_doc_len: total_len as f64 / docs.len() as f64,
    })
}

/// Cross-lingual co-occurrence counts over an aligned document collection:
/// how many alignments have a given source word on their source side, a given
/// target word on their target side, or both. For a sentence-pair corpus each
/// pair counts as one alignment; alignment scores do not enter these counts.
#[derive(Debug, Clone)]
pub struct CrossStats {
    src_vocab: HashMap<String, u32>,
    tgt_vocab: HashMap<String, u32>,
    src_count: Vec<u64>,
    tgt_count: Vec<u64>,
    mutual: HashMap<(u32, u32), u64>,
    align_count: u64,
}

impl CrossStats {
    pub fn from_parallel(corpus: &SentencePairCorpus) -> CrossStats {
        Self::from_doc_pairs(corpus.pairs.iter().map(|(s, t)| (s, t)))
    }

    pub fn from_comparable(corpus: &ComparableCorpus) -> CrossStats {
        Self::from_doc_pairs(
            corpus
                .alignments
                .iter()
                .map(|(s, t, _)| (&corpus.src_docs[s], &corpus.tgt_docs[t])),
        )
    }

    fn from_doc_pairs<'a, I>(pairs: I) -> CrossStats
    where
        I: Iterator<Item = (&'a TokenizedText, &'a TokenizedText)>,
    {
        let mut stats = CrossStats {
            src_vocab: HashMap::new(),
            tgt_vocab: HashMap::new(),
            src_count: Vec::new(),
            tgt_count: Vec::new(),
            mutual: HashMap::new(),
            align_count: 0,
        };
        for (src_doc, tgt_doc) in pairs {
            stats.align_count += 1;
            let src_ids = intern_distinct(src_doc, &mut stats.src_vocab, &mut stats.src_count);
            let tgt_ids = intern_distinct(tgt_doc, &mut stats.tgt_vocab, &mut stats.tgt_count);
            for &s in &src_ids {
                stats.src_count[s as usize] += 1;
            }
            for &t in &tgt_ids {
                stats.tgt_count[t as usize] += 1;
            }
            for &s in &src_ids {
                for &t in &tgt_ids {
                    *stats.mutual.entry((s, t)).or_insert(0) += 1;
                }
            }
        }
        stats
    }

    pub fn align_count(&self) -> u64 {
        self.align_count
    }

    /// Alignments whose source document contains the word.
    pub fn src_count(&self, word: &str) -> u64 {
        self.src_vocab
            .get(word)
            .map_or(0, |&id| self.src_count[id as usize])
    }

    /// Alignments whose target document contains the word.
    pub fn tgt_count(&self, word: &str) -> u64 {
        self.tgt_vocab
            .get(word)
            .map_or(0, |&id| self.tgt_count[id as usize])
    }

    /// Alignments containing the source word on one side and the target word
    /// on the other.
    pub fn mutual_count(&self, src_word: &str, tgt_word: &str) -> u64 {
        let (Some(&s), Some(&t)) = (self.src_vocab.get(src_word), self.tgt_vocab.get(tgt_word))
        else {
            return 0;
        };
        self.mutual.get(&(s, t)).copied().unwrap_or(0)
    }
}

fn intern_distinct(
    doc: &[String],
    vocab: &mut HashMap<String, u32>,
    counts: &mut Vec<u64>,
) -> Vec<u32> {
    let mut ids: Vec<u32> = Vec::with_capacity(doc.len());
    for word in doc {
        let id = match vocab.get(word) {
            Some(&id) => id,
            None => {
                let id = counts.len() as u32;
                vocab.insert(word.clone(), id);
                counts.push(0);
                id
            }
        };
        if !ids.contains(&id) {
            ids.push(id);
        }
    }
    ids.sort_unstable();
    ids
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("Brazil hosts football World Cup"),
            vec!["brazil", "hosts", "football", "world", "cup"]
        );
    }

    #[test]
    fn tokenize_empty() {
        assert_eq!(tokenize(""), Vec::<String>::new());
    }

    #[test]
    fn tokenize_splits_on_punctuation() {
        assert_eq!(tokenize("a,b.  c"), vec!["a", "b", "c"]);
    }

    #[test]
    fn tokenize_handles_persian() {
        assert_eq!(tokenize("جام جهانی"), vec!["جام", "جهانی"]);
    }

    #[test]
    fn tokenize_is_idempotent_on_samples() {
        for text in ["Hello, WORLD!", "a,b.  c", "x² + y²", "İstanbul 2002"] {
            let once = tokenize(text);
            let twice = tokenize(&once.join(" "));
            assert_eq!(once, twice, "input {text:?}");
        }
    }

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_parallel_basic() {
        let f = write_temp("hello world\tسلام دنیا\n");
        let corpus = load_parallel(f.path(), "p").unwrap();
        assert_eq!(corpus.pairs.len(), 1);
        assert_eq!(corpus.pairs[0].0.len(), 2);
        assert_eq!(corpus.skipped, 0);
    }

    #[test]
    fn load_parallel_missing_tab_is_error() {
        let f = write_temp("no tab here\n");
        let err = load_parallel(f.path(), "p").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn load_parallel_skips_empty_sides() {
        let f = write_temp("a\tx\nb\t...\nc\ty\n");
        let corpus = load_parallel(f.path(), "p").unwrap();
        assert_eq!(corpus.pairs.len(), 2);
        assert_eq!(corpus.skipped, 1);
    }

    fn docs(texts: &[&str]) -> Vec<TokenizedText> {
        texts.iter().map(|t| tokenize(t)).collect()
    }

    #[test]
    fn stats_counts_df_and_cooccur() {
        let stats = compute_stats(&docs(&["a b", "a"])).unwrap();
        assert_eq!(stats.doc_count(), 2);
        assert_eq!(stats.df("a"), 2);
        assert_eq!(stats.df("b"), 1);
        assert_eq!(stats.cooccur("a", "b"), 1);
    }

    #[test]
    fn stats_tf_counts_tokens() {
        let stats = compute_stats(&docs(&["a a a"])).unwrap();
        assert_eq!(stats.df("a"), 1);
        assert_eq!(stats.tf("a"), 3);
    }

    #[test]
    fn stats_disjoint_words_do_not_cooccur() {
        let stats = compute_stats(&docs(&["a", "b"])).unwrap();
        assert_eq!(stats.cooccur("a", "b"), 0);
        assert_eq!(stats.cooccur("b", "a"), 0);
    }

    #[test]
    fn stats_diagonal_equals_df() {
        let stats = compute_stats(&docs(&["a b", "a", "c a"])).unwrap();
        assert_eq!(stats.cooccur("a", "a"), stats.df("a"));
    }

    #[test]
    fn stats_empty_input_is_error() {
        assert!(compute_stats::<TokenizedText>(&[]).is_err());
    }

    #[test]
    fn comparable_loads_and_validates() {
        let src = write_temp("{\"id\":\"s1\",\"text\":\"a b\"}\n{\"id\":\"s2\",\"text\":\"c\"}\n");
        let tgt = write_temp("{\"id\":\"t1\",\"text\":\"x\"}\n{\"id\":\"t2\",\"text\":\"y z\"}\n");
        let aln = write_temp(
            "{\"src\":\"s1\",\"tgt\":\"t1\",\"score\":1.0}\n{\"src\":\"s2\",\"tgt\":\"t2\",\"score\":0.5}\n",
        );
        let corpus = load_comparable(src.path(), tgt.path(), aln.path(), "c").unwrap();
        assert_eq!(corpus.alignments.len(), 2);
        assert_eq!(corpus.alignments[1].2, 0.5);
    }

    #[test]
    fn comparable_rejects_dangling_alignment() {
        let src = write_temp("{\"id\":\"s1\",\"text\":\"a\"}\n");
        let tgt = write_temp("{\"id\":\"t1\",\"text\":\"x\"}\n");
        let aln = write_temp("{\"src\":\"s1\",\"tgt\":\"nope\",\"score\":1.0}\n");
        let err = load_comparable(src.path(), tgt.path(), aln.path(), "c").unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn dictionary_merges_and_dedups() {
        let f = write_temp("cup\tفنجان|پیاله\ncup\tجام|جام\n");
        let dict = load_dictionary(f.path()).unwrap();
        assert_eq!(dict.entries["cup"].len(), 3);
    }

    #[test]
    fn cross_stats_counts_alignments() {
        let corpus = SentencePairCorpus {
            name: "p".into(),
            pairs: vec![
                (docs(&["a b"])[0].clone(), docs(&["x"])[0].clone()),
                (docs(&["a"])[0].clone(), docs(&["y"])[0].clone()),
                (docs(&["c"])[0].clone(), docs(&["x y"])[0].clone()),
            ],
            skipped: 0,
        };
        let cross = CrossStats::from_parallel(&corpus);
        assert_eq!(cross.align_count(), 3);
        assert_eq!(cross.src_count("a"), 2);
        assert_eq!(cross.tgt_count("x"), 2);
        assert_eq!(cross.mutual_count("a", "x"), 1);
        assert_eq!(cross.mutual_count("a", "z"), 0);
    }

    #[test]
    fn cross_stats_from_comparable_follows_alignments() {
        let mut src_docs = BTreeMap::new();
        src_docs.insert("s1".to_string(), vec!["a".to_string()]);
        let mut tgt_docs = BTreeMap::new();
        tgt_docs.insert("t1".to_string(), vec!["x".to_string()]);
        let corpus = ComparableCorpus {
            name: "c".into(),
            src_docs,
            tgt_docs,
            alignments: vec![
                ("s1".into(), "t1".into(), 0.9),
                ("s1".into(), "t1".into(), 0.4),
            ],
        };
        let cross = CrossStats::from_comparable(&corpus);
        // One document pair aligned twice counts as two alignments.
        assert_eq!(cross.align_count(), 2);
        assert_eq!(cross.mutual_count("a", "x"), 2);
    }
}
