//! Independent reference implementations used to cross-check the library:
//! an alignment-enumerating EM, a full-scan BM25 scorer, counting-based
//! PMI, and direct AP / P@k computations. They share no code with the
//! production paths.

#![allow(dead_code)] // each integration test binary uses a subset

use std::collections::{BTreeMap, BTreeSet};

pub const NULL: &str = "<null>";

/// Model-1 EM that enumerates every alignment function of every sentence
/// pair (the production code uses the factorized per-token E-step instead).
/// Returns `t[source][target]` after the given number of iterations,
/// starting uniform over the targets each source co-occurs with.
pub fn brute_force_model1(
    pairs: &[(Vec<String>, Vec<String>)],
    iterations: usize,
    use_null: bool,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    let with_null: Vec<(Vec<String>, Vec<String>)> = pairs
        .iter()
        .map(|(src, tgt)| {
            let mut s = Vec::with_capacity(src.len() + 1);
            if use_null {
                s.push(NULL.to_string());
            }
            s.extend(src.iter().cloned());
            (s, tgt.clone())
        })
        .collect();

    let mut t: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for (src, tgt) in &with_null {
        for e in src {
            let row = t.entry(e.clone()).or_default();
            for f in tgt {
                row.insert(f.clone(), 0.0);
            }
        }
    }
    for row in t.values_mut() {
        let u = 1.0 / row.len() as f64;
        for p in row.values_mut() {
            *p = u;
        }
    }

    for _ in 0..iterations {
        let mut counts: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (src, tgt) in &with_null {
            // Every alignment a: target position -> source position.
            let m = tgt.len();
            let l = src.len();
            let total_alignments = (l as u64).pow(m as u32);
            let mut weights = Vec::with_capacity(total_alignments as usize);
            let mut z = 0.0;
            for code in 0..total_alignments {
                let mut c = code;
                let mut w = 1.0;
                for f in tgt {
                    let e = &src[(c % l as u64) as usize];
                    c /= l as u64;
                    w *= t[e][f];
                }
                weights.push(w);
                z += w;
            }
            for (code, w) in weights.into_iter().enumerate() {
                if z == 0.0 {
                    continue;
                }
                let posterior = w / z;
                let mut c = code as u64;
                for f in tgt {
                    let e = &src[(c % l as u64) as usize];
                    c /= l as u64;
                    *counts
                        .entry(e.clone())
                        .or_default()
                        .entry(f.clone())
                        .or_insert(0.0) += posterior;
                }
            }
        }
        for (e, row) in &mut t {
            let empty = BTreeMap::new();
            let c_row = counts.get(e).unwrap_or(&empty);
            let total: f64 = c_row.values().sum();
            for (f, p) in row.iter_mut() {
                *p = if total > 0.0 {
                    c_row.get(f).copied().unwrap_or(0.0) / total
                } else {
                    0.0
                };
            }
        }
    }
    t
}

/// BM25 scores computed by scanning every document for every query term,
/// with document frequencies recounted from scratch. Accumulates per
/// document in query-term order, ranks score-descending with ascending id
/// tie-break, truncates to `k`.
pub fn oracle_bm25(
    docs: &[(String, Vec<String>)],
    query: &[(String, f64)],
    k1: f64,
    b: f64,
    k: usize,
) -> Vec<(String, f64)> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, d)| d.len() as f64).sum::<f64>() / n;
    let mut idf: BTreeMap<&str, f64> = BTreeMap::new();
    for (term, _) in query {
        let df = docs
            .iter()
            .filter(|(_, d)| d.iter().any(|w| w == term))
            .count() as f64;
        idf.insert(term, ((n - df + 0.5) / (df + 0.5) + 1.0).ln());
    }
    let mut hits: Vec<(String, f64)> = Vec::new();
    for (id, tokens) in docs {
        let len = tokens.len() as f64;
        let mut score = 0.0;
        let mut matched = false;
        for (term, weight) in query {
            let tf = tokens.iter().filter(|w| *w == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            matched = true;
            let part = tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
            score += weight * idf[term.as_str()] * part;
        }
        if matched {
            hits.push((id.clone(), score));
        }
    }
    hits.sort_by(|a, b_| {
        b_.1.partial_cmp(&a.1)
            .expect("finite scores")
            .then_with(|| a.0.cmp(&b_.0))
    });
    hits.truncate(k);
    hits
}

/// Average precision with the number of relevant documents as denominator;
/// `None` when nothing is relevant.
pub fn reference_ap(ranking: &[String], relevant: &BTreeSet<String>) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranking.iter().enumerate() {
        if relevant.contains(doc) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(sum / relevant.len() as f64)
}

pub fn reference_p_at(ranking: &[String], relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranking
        .iter()
        .take(k)
        .filter(|d| relevant.contains(*d))
        .count() as f64
        / k as f64
}

/// PMI by direct counting over document token lists: natural log of
/// `(cooccur/N) / ((df1/N)(df2/N))`, zero when any count is zero.
pub fn counting_pmi(docs: &[Vec<String>], w1: &str, w2: &str) -> f64 {
    let n = docs.len() as f64;
    let has = |d: &Vec<String>, w: &str| d.iter().any(|t| t == w);
    let df1 = docs.iter().filter(|d| has(d, w1)).count() as f64;
    let df2 = docs.iter().filter(|d| has(d, w2)).count() as f64;
    let both = docs.iter().filter(|d| has(d, w1) && has(d, w2)).count() as f64;
    if df1 == 0.0 || df2 == 0.0 || both == 0.0 {
        return 0.0;
    }
    ((both / n) / ((df1 / n) * (df2 / n))).ln()
}
