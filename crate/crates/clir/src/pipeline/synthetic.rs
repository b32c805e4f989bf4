//! Seeded generator for a small bilingual world with known ground truth:
//! topic-clustered vocabulary, sense-ambiguous words whose correct
//! translation depends on sentence topic, complementary per-resource
//! coverage gaps, and a retrieval collection with topics and judgments.
//! Everything is a pure function of the seed.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pipeline::config::{
    AmbiguityConfig, ExperimentConfig, LabelingConfig, LinearConfig, LtrConfig, Model1Config,
    ResourceConfig, RetrievalConfig, TrainerConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub seed: u64,
    /// Source word types; must be a multiple of 10 and of `topics`.
    pub vocab_size: usize,
    pub topics: usize,
    /// Fraction of words with two sense-dependent translations, in steps
    /// of 0.1 up to 0.6.
    pub ambiguity_fraction: f64,
    /// Sentence pairs per parallel corpus.
    pub parallel_pairs: usize,
    /// Sentence pairs in the held-out labeling corpus.
    pub labeling_pairs: usize,
    pub comparable_docs: usize,
    pub target_docs: usize,
    pub queries: usize,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            seed: 7,
            vocab_size: 240,
            topics: 12,
            ambiguity_fraction: 0.3,
            parallel_pairs: 2600,
            labeling_pairs: 3000,
            comparable_docs: 160,
            target_docs: 480,
            queries: 60,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SyntheticSummary {
    pub vocab_size: usize,
    pub ambiguous_words: usize,
    pub held_out_words: usize,
    pub parallel_pairs: usize,
    pub labeling_pairs: usize,
    pub comparable_pairs: usize,
    pub documents: usize,
    pub queries: usize,
    pub eval_instances: usize,
    pub files: Vec<String>,
}

/// How often a sentence slot draws a far-topic (secondary-sense) word; keeps
/// primary senses roughly twice as frequent as secondary ones in corpora.
const FAR_SENSE_PROB: f64 = 0.13;
/// Secondary-sense rate inside target-language documents, raised so queries
/// translated to a secondary sense still match their topic's documents.
const DOC_FAR_PROB: f64 = 0.25;
const QUERY_AMBIGUOUS_PROB: f64 = 0.7;

struct World {
    vocab: usize,
    topics: usize,
    ambig_slots: usize,
    /// natives[k] = word ids whose home topic is k.
    natives: Vec<Vec<usize>>,
    /// far_members[k] = ambiguous word ids whose secondary sense lives in k.
    far_members: Vec<Vec<usize>>,
}

impl World {
    fn new(vocab: usize, topics: usize, ambig_slots: usize) -> World {
        let mut natives = vec![Vec::new(); topics];
        let mut far_members = vec![Vec::new(); topics];
        for i in 0..vocab {
            natives[i % topics].push(i);
            if i % 10 < ambig_slots {
                far_members[(i % topics + topics / 2) % topics].push(i);
            }
        }
        World {
            vocab,
            topics,
            ambig_slots,
            natives,
            far_members,
        }
    }

    fn is_ambiguous(&self, i: usize) -> bool {
        i % 10 < self.ambig_slots
    }

    /// Held out of the labeling corpus entirely so the ranker never trains
    /// on them; used for the word-in-context evaluation.
    fn is_held_out(&self, i: usize) -> bool {
        self.ambig_slots > 0 && i % 10 == self.ambig_slots - 1
    }

    fn source(&self, i: usize) -> String {
        format!("sw{i:03}")
    }

    fn target_primary(&self, i: usize) -> String {
        format!("ta{i:03}")
    }

    fn target_secondary(&self, i: usize) -> String {
        format!("tb{i:03}")
    }

    fn translation(&self, i: usize, secondary: bool) -> String {
        if secondary {
            self.target_secondary(i)
        } else {
            self.target_primary(i)
        }
    }

    /// Samples distinct words for a topic; `secondary` marks far-topic picks.
    fn sample_words(
        &self,
        rng: &mut ChaCha8Rng,
        topic: usize,
        len: usize,
        far_prob: f64,
        exclude: &dyn Fn(usize) -> bool,
    ) -> Vec<(usize, bool)> {
        let natives: Vec<usize> = self.natives[topic]
            .iter()
            .copied()
            .filter(|&i| !exclude(i))
            .collect();
        let far: Vec<usize> = self.far_members[topic]
            .iter()
            .copied()
            .filter(|&i| !exclude(i))
            .collect();
        let mut chosen: Vec<(usize, bool)> = Vec::with_capacity(len);
        'slots: for _ in 0..len {
            for _ in 0..40 {
                let use_far = !far.is_empty() && rng.gen::<f64>() < far_prob;
                let (pool, secondary) = if use_far {
                    (&far, true)
                } else if !natives.is_empty() {
                    (&natives, false)
                } else if !far.is_empty() {
                    (&far, true)
                } else {
                    break 'slots;
                };
                let word = pool[rng.gen_range(0..pool.len())];
                if !chosen.iter().any(|&(w, _)| w == word) {
                    chosen.push((word, secondary));
                    continue 'slots;
                }
            }
            break;
        }
        chosen
    }

    /// One sentence pair of the given topic: source tokens plus their
    /// sense-correct translations, in the same order.
    fn sample_pair(
        &self,
        rng: &mut ChaCha8Rng,
        topic: usize,
        exclude: &dyn Fn(usize) -> bool,
    ) -> (Vec<String>, Vec<String>) {
        let len = 5 + rng.gen_range(0..4);
        let words = self.sample_words(rng, topic, len, FAR_SENSE_PROB, exclude);
        let source = words.iter().map(|&(i, _)| self.source(i)).collect();
        let target = words
            .iter()
            .map(|&(i, secondary)| self.translation(i, secondary))
            .collect();
        (source, target)
    }
}

#[derive(Serialize)]
struct DocLine<'a> {
    id: &'a str,
    text: String,
}

#[derive(Serialize)]
struct AlignLine<'a> {
    src: &'a str,
    tgt: &'a str,
    score: f64,
}

#[derive(Serialize)]
struct AmbiguousEntry {
    primary: String,
    secondary: String,
    home_topic: usize,
    far_topic: usize,
    held_out: bool,
}

#[derive(Serialize)]
struct GroundTruth {
    vocab_size: usize,
    topics: usize,
    ambiguity_fraction: f64,
    translations: BTreeMap<String, String>,
    ambiguous: BTreeMap<String, AmbiguousEntry>,
    coverage_gaps: BTreeMap<String, Vec<String>>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn validate(options: &SyntheticOptions) -> Result<usize> {
    if options.vocab_size < 200 {
        return Err(Error::InvalidInput(
            "synthetic world needs at least 200 word types".into(),
        ));
    }
    if options.topics < 4 || options.topics % 2 != 0 {
        return Err(Error::InvalidInput("topic count must be even and at least 4".into()));
    }
    if options.vocab_size % 10 != 0 || options.vocab_size % options.topics != 0 {
        return Err(Error::InvalidInput(format!(
            "vocabulary size must be a multiple of 10 and of the topic count, got {}",
            options.vocab_size
        )));
    }
    let slots = (options.ambiguity_fraction * 10.0).round();
    if (options.ambiguity_fraction * 10.0 - slots).abs() > 1e-9 || !(0.0..=6.0).contains(&slots) {
        return Err(Error::InvalidInput(format!(
            "ambiguity fraction must be a multiple of 0.1 in [0, 0.6], got {}",
            options.ambiguity_fraction
        )));
    }
    if options.parallel_pairs < 2000 || options.labeling_pairs < 2000 {
        return Err(Error::InvalidInput(
            "synthetic corpora need at least 2000 sentence pairs".into(),
        ));
    }
    if options.comparable_docs < options.topics
        || options.target_docs < options.topics
        || options.queries == 0
    {
        return Err(Error::InvalidInput(
            "document and query counts are too small for the topic count".into(),
        ));
    }
    Ok(slots as usize)
}

/// Writes the full synthetic world into `out_dir`: two parallel corpora with
/// complementary coverage gaps, a labeling corpus, a comparable corpus, a
/// dictionary with decoys, target documents, topics, qrels, a held-out
/// word-in-context evaluation file, the ground truth, and a ready-to-run
/// experiment config (`exp.toml`).
pub fn generate_synthetic_world(
    options: &SyntheticOptions,
    out_dir: &Path,
) -> Result<SyntheticSummary> {
    let ambig_slots = validate(options)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let world = World::new(options.vocab_size, options.topics, ambig_slots);
    let mut summary = SyntheticSummary {
        vocab_size: world.vocab,
        ..SyntheticSummary::default()
    };

    // Parallel corpora: one coverage gap each (word slots 6 and 7).
    for (stream, name, gap_slot) in [(1u64, "para_a.tsv", 6usize), (2, "para_b.tsv", 7)] {
        let mut rng = stream_rng(options.seed, stream);
        let path = out_dir.join(name);
        let mut w = create(&path)?;
        for p in 0..options.parallel_pairs {
            let topic = p % world.topics;
            let (src, tgt) = world.sample_pair(&mut rng, topic, &|i| i % 10 == gap_slot);
            writeln!(w, "{}\t{}", src.join(" "), tgt.join(" ")).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push(name.to_string());
    }
    summary.parallel_pairs = options.parallel_pairs;

    // Labeling corpus: full vocabulary except the held-out evaluation words.
    {
        let mut rng = stream_rng(options.seed, 3);
        let path = out_dir.join("labeling.tsv");
        let mut w = create(&path)?;
        for p in 0..options.labeling_pairs {
            let topic = p % world.topics;
            let (src, tgt) = world.sample_pair(&mut rng, topic, &|i| world.is_held_out(i));
            writeln!(w, "{}\t{}", src.join(" "), tgt.join(" ")).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push("labeling.tsv".to_string());
        summary.labeling_pairs = options.labeling_pairs;
    }

    // Comparable corpus: aligned document pairs; the target side keeps about
    // 60% of the source translations plus extra on-topic words.
    {
        let mut rng = stream_rng(options.seed, 4);
        let src_path = out_dir.join("comp_src.jsonl");
        let tgt_path = out_dir.join("comp_tgt.jsonl");
        let align_path = out_dir.join("comp_align.jsonl");
        let mut src_w = create(&src_path)?;
        let mut tgt_w = create(&tgt_path)?;
        let mut align_w = create(&align_path)?;
        for d in 0..options.comparable_docs {
            let topic = d % world.topics;
            let src_words =
                world.sample_words(&mut rng, topic, 12, FAR_SENSE_PROB, &|i| i % 10 == 8);
            let mut tgt_words: Vec<String> = Vec::new();
            for &(i, secondary) in &src_words {
                if rng.gen::<f64>() < 0.6 {
                    tgt_words.push(world.translation(i, secondary));
                }
            }
            for (i, secondary) in world.sample_words(&mut rng, topic, 3, DOC_FAR_PROB, &|_| false)
            {
                let t = world.translation(i, secondary);
                if !tgt_words.contains(&t) {
                    tgt_words.push(t);
                }
            }
            let src_id = format!("cs{d:04}");
            let tgt_id = format!("ct{d:04}");
            let src_line = DocLine {
                id: &src_id,
                text: src_words
                    .iter()
                    .map(|&(i, _)| world.source(i))
                    .collect::<Vec<_>>()
                    .join(" "),
            };
            let tgt_line = DocLine {
                id: &tgt_id,
                text: tgt_words.join(" "),
            };
            let score = 0.5 + 0.5 * rng.gen::<f64>();
            let align_line = AlignLine {
                src: &src_id,
                tgt: &tgt_id,
                score,
            };
            writeln!(src_w, "{}", serde_json::to_string(&src_line).expect("serializable"))
                .map_err(|e| Error::io(&src_path, e))?;
            writeln!(tgt_w, "{}", serde_json::to_string(&tgt_line).expect("serializable"))
                .map_err(|e| Error::io(&tgt_path, e))?;
            writeln!(align_w, "{}", serde_json::to_string(&align_line).expect("serializable"))
                .map_err(|e| Error::io(&align_path, e))?;
        }
        src_w.flush().map_err(|e| Error::io(&src_path, e))?;
        tgt_w.flush().map_err(|e| Error::io(&tgt_path, e))?;
        align_w.flush().map_err(|e| Error::io(&align_path, e))?;
        summary.files.extend(
            ["comp_src.jsonl", "comp_tgt.jsonl", "comp_align.jsonl"]
                .iter()
                .map(|s| s.to_string()),
        );
        summary.comparable_pairs = options.comparable_docs;
    }

    // Dictionary: both senses for ambiguous words, a quarter of the entries
    // carry a decoy target that appears in no corpus.
    {
        let mut rng = stream_rng(options.seed, 5);
        let path = out_dir.join("dict.tsv");
        let mut w = create(&path)?;
        for i in 0..world.vocab {
            let decoy = rng.gen::<f64>() < 0.25;
            if i % 10 == 9 {
                continue;
            }
            let mut targets = vec![world.target_primary(i)];
            if world.is_ambiguous(i) {
                targets.push(world.target_secondary(i));
            }
            if decoy {
                targets.push(format!("tx{i:03}"));
            }
            writeln!(w, "{}\t{}", world.source(i), targets.join("|"))
                .map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push("dict.tsv".to_string());
    }

    // Target-language retrieval collection.
    {
        let mut rng = stream_rng(options.seed, 6);
        let path = out_dir.join("docs.jsonl");
        let mut w = create(&path)?;
        for d in 0..options.target_docs {
            let topic = d % world.topics;
            let len = 12 + rng.gen_range(0..5);
            let words = world.sample_words(&mut rng, topic, len, DOC_FAR_PROB, &|_| false);
            let id = format!("doc{d:04}");
            let line = DocLine {
                id: &id,
                text: words
                    .iter()
                    .map(|&(i, secondary)| world.translation(i, secondary))
                    .collect::<Vec<_>>()
                    .join(" "),
            };
            writeln!(w, "{}", serde_json::to_string(&line).expect("serializable"))
                .map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push("docs.jsonl".to_string());
        summary.documents = options.target_docs;
    }

    // Topics and judgments: a query is on-topic words, usually including one
    // ambiguous word in either its home or its far sense; every document of
    // the query's topic is relevant.
    {
        let mut rng = stream_rng(options.seed, 7);
        let topics_path = out_dir.join("topics.tsv");
        let qrels_path = out_dir.join("qrels.txt");
        let mut topics_w = create(&topics_path)?;
        let mut qrels_w = create(&qrels_path)?;
        for q in 0..options.queries {
            let topic = q % world.topics;
            let unambiguous: Vec<usize> = world.natives[topic]
                .iter()
                .copied()
                .filter(|&i| !world.is_ambiguous(i))
                .collect();
            let mut words: Vec<String> = Vec::new();
            for _ in 0..40 {
                if words.len() >= 2 {
                    break;
                }
                let w = world.source(unambiguous[rng.gen_range(0..unambiguous.len())]);
                if !words.contains(&w) {
                    words.push(w);
                }
            }
            if rng.gen::<f64>() < QUERY_AMBIGUOUS_PROB {
                let far = rng.gen::<bool>();
                let pool: Vec<usize> = if far {
                    world.far_members[topic].clone()
                } else {
                    world.natives[topic]
                        .iter()
                        .copied()
                        .filter(|&i| world.is_ambiguous(i))
                        .collect()
                };
                if !pool.is_empty() {
                    let word = world.source(pool[rng.gen_range(0..pool.len())]);
                    let pos = rng.gen_range(0..=words.len());
                    words.insert(pos, word);
                }
            }
            let qid = format!("q{:03}", q + 1);
            writeln!(topics_w, "{}\t{}", qid, words.join(" "))
                .map_err(|e| Error::io(&topics_path, e))?;
            for d in 0..options.target_docs {
                if d % world.topics == topic {
                    writeln!(qrels_w, "{} 0 doc{:04} 1", qid, d)
                        .map_err(|e| Error::io(&qrels_path, e))?;
                }
            }
        }
        topics_w.flush().map_err(|e| Error::io(&topics_path, e))?;
        qrels_w.flush().map_err(|e| Error::io(&qrels_path, e))?;
        summary.files.push("topics.tsv".to_string());
        summary.files.push("qrels.txt".to_string());
        summary.queries = options.queries;
    }

    // Held-out ambiguous evaluation: for each held-out word, one context per
    // sense, built only from unambiguous topic words.
    {
        let mut rng = stream_rng(options.seed, 8);
        let path = out_dir.join("ambig_eval.tsv");
        let mut w = create(&path)?;
        for i in 0..world.vocab {
            if !world.is_held_out(i) {
                continue;
            }
            let home = i % world.topics;
            let far = (home + world.topics / 2) % world.topics;
            for (topic, secondary) in [(home, false), (far, true)] {
                let context: Vec<usize> = {
                    let pool: Vec<usize> = world.natives[topic]
                        .iter()
                        .copied()
                        .filter(|&j| !world.is_ambiguous(j))
                        .collect();
                    let mut picked: Vec<usize> = Vec::new();
                    for _ in 0..60 {
                        if picked.len() >= 4 {
                            break;
                        }
                        let cand = pool[rng.gen_range(0..pool.len())];
                        if !picked.contains(&cand) {
                            picked.push(cand);
                        }
                    }
                    picked
                };
                let mut tokens: Vec<String> =
                    context.iter().map(|&j| world.source(j)).collect();
                let pos = rng.gen_range(0..=tokens.len());
                tokens.insert(pos, world.source(i));
                writeln!(
                    w,
                    "{}\t{}\t{}",
                    world.source(i),
                    tokens.join(" "),
                    world.translation(i, secondary)
                )
                .map_err(|e| Error::io(&path, e))?;
                summary.eval_instances += 1;
            }
            summary.held_out_words += 1;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push("ambig_eval.tsv".to_string());
    }

    summary.ambiguous_words = (0..world.vocab).filter(|&i| world.is_ambiguous(i)).count();

    // Ground truth for external verification.
    {
        let path = out_dir.join("ground_truth.json");
        let mut translations = BTreeMap::new();
        let mut ambiguous = BTreeMap::new();
        for i in 0..world.vocab {
            translations.insert(world.source(i), world.target_primary(i));
            if world.is_ambiguous(i) {
                ambiguous.insert(
                    world.source(i),
                    AmbiguousEntry {
                        primary: world.target_primary(i),
                        secondary: world.target_secondary(i),
                        home_topic: i % world.topics,
                        far_topic: (i % world.topics + world.topics / 2) % world.topics,
                        held_out: world.is_held_out(i),
                    },
                );
            }
        }
        let mut coverage_gaps = BTreeMap::new();
        for (resource, slot) in [("para_a", 6usize), ("para_b", 7), ("comp", 8), ("dict", 9)] {
            coverage_gaps.insert(
                resource.to_string(),
                (0..world.vocab)
                    .filter(|&i| i % 10 == slot)
                    .map(|i| world.source(i))
                    .collect::<Vec<_>>(),
            );
        }
        let truth = GroundTruth {
            vocab_size: world.vocab,
            topics: world.topics,
            ambiguity_fraction: options.ambiguity_fraction,
            translations,
            ambiguous,
            coverage_gaps,
        };
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &truth)
            .map_err(|e| Error::InvalidInput(format!("cannot serialize ground truth: {e}")))?;
        w.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        summary.files.push("ground_truth.json".to_string());
    }

    // Ready-to-run experiment configuration.
    {
        let path = out_dir.join("exp.toml");
        let config = experiment_config(options, summary.eval_instances > 0);
        let text = toml::to_string_pretty(&config)
            .map_err(|e| Error::InvalidInput(format!("cannot serialize config: {e}")))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        summary.files.push("exp.toml".to_string());
    }

    summary.files.sort();
    Ok(summary)
}

/// The experiment settings the generator pairs with its world; sized so the
/// full pipeline finishes in well under the acceptance budget.
fn experiment_config(options: &SyntheticOptions, with_eval: bool) -> ExperimentConfig {
    let mut resources = BTreeMap::new();
    resources.insert(
        "para_a".to_string(),
        ResourceConfig::Parallel {
            path: "para_a.tsv".to_string(),
            n: None,
        },
    );
    resources.insert(
        "para_b".to_string(),
        ResourceConfig::Parallel {
            path: "para_b.tsv".to_string(),
            n: None,
        },
    );
    resources.insert(
        "comp".to_string(),
        ResourceConfig::Comparable {
            source_docs: "comp_src.jsonl".to_string(),
            target_docs: "comp_tgt.jsonl".to_string(),
            alignments: "comp_align.jsonl".to_string(),
            n: None,
            top_k: 20,
        },
    );
    resources.insert(
        "dict".to_string(),
        ResourceConfig::Dictionary {
            path: "dict.tsv".to_string(),
            n: None,
        },
    );
    ExperimentConfig {
        seed: options.seed,
        output_dir: "out".to_string(),
        resources,
        labeling: LabelingConfig {
            corpus: "labeling.tsv".to_string(),
            pool_k: 8,
            validation: "any".to_string(),
            max_instances: 2400,
            aligner_iterations: 5,
        },
        model1: Model1Config::default(),
        trainer: TrainerConfig {
            kind: "coordinate_ascent".to_string(),
            restarts: 6,
            epsilon: 1e-5,
            max_passes: 8,
            learning_rate: 0.1,
            epochs: 100,
            reg: 0.0,
        },
        retrieval: RetrievalConfig {
            documents: "docs.jsonl".to_string(),
            topics: "topics.tsv".to_string(),
            qrels: "qrels.txt".to_string(),
            k1: 1.2,
            b: 0.75,
            depth: 100,
            weighted: true,
        },
        ltr: LtrConfig::default(),
        linear: LinearConfig::default(),
        ambiguity: AmbiguityConfig {
            eval: if with_eval {
                Some("ambig_eval.tsv".to_string())
            } else {
                None
            },
        },
    }
}
