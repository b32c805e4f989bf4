//! End-to-end acceptance checks. Each test prints one PASS/FAIL line; the
//! timed ones run under a shared lock so budgets are measured without
//! interference from sibling tests.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clir::corpus::{self, SentencePairCorpus};
use clir::features::{self, FeatureSchema, Resource, ResourceKind};
use clir::labeling::{Candidate, TrainingInstance};
use clir::lexicon::{self, Direction, Lexicon};
use clir::pipeline::{self, ExperimentOutcome, RetrievalSetup, SyntheticOptions};
use clir::ranker::{self, CaOptions};
use clir::retrieval::{self, Bm25Params, RunFile, WeightedQuery};

const PROB_TOL: f64 = 1e-9;
const SCORE_TOL: f64 = 1e-9;
const COMBINE_TOL: f64 = 1e-12;
const MODEL1_BUDGET_SECS: f64 = 5.0;
const BM25_BUDGET_SECS: f64 = 10.0;
const END_TO_END_BUDGET_SECS: f64 = 180.0;

/// Serializes the acceptance tests so wall-clock budgets are honest.
fn lock() -> MutexGuard<'static, ()> {
    static GATE: Mutex<()> = Mutex::new(());
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

fn criterion(n: u32, name: &str, body: impl FnOnce()) {
    let result = std::panic::catch_unwind(AssertUnwindSafe(body));
    match &result {
        Ok(()) => println!("ACCEPTANCE {n} ({name}): PASS"),
        Err(_) => println!("ACCEPTANCE {n} ({name}): FAIL"),
    }
    if let Err(e) = result {
        std::panic::resume_unwind(e);
    }
}

struct SyntheticWorld {
    _dir: tempfile::TempDir,
    config: PathBuf,
    outcome: ExperimentOutcome,
    ground_truth: serde_json::Value,
    summary: clir::pipeline::SyntheticSummary,
    elapsed_secs: f64,
}

/// Generates the synthetic world and runs the experiment once; shared by the
/// criteria that inspect it.
fn world() -> &'static SyntheticWorld {
    static WORLD: OnceLock<SyntheticWorld> = OnceLock::new();
    WORLD.get_or_init(|| {
        let dir = tempfile::tempdir().expect("create temp dir");
        let started = Instant::now();
        let options = SyntheticOptions::default();
        let summary =
            pipeline::generate_synthetic_world(&options, dir.path()).expect("generate world");
        let config = dir.path().join("exp.toml");
        let outcome = pipeline::run_experiment(&config, Some(&dir.path().join("out")))
            .expect("run experiment");
        let elapsed_secs = started.elapsed().as_secs_f64();
        let ground_truth: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("ground_truth.json")).expect("ground truth"),
        )
        .expect("parse ground truth");
        SyntheticWorld {
            _dir: dir,
            config,
            outcome,
            ground_truth,
            summary,
            elapsed_secs,
        }
    })
}

#[test]
fn criterion_1_model1_matches_brute_force_em() {
    let _gate = lock();
    criterion(1, "Model-1 EM vs alignment enumeration", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vocab_src = ["a", "b", "c", "d", "e", "f"];
        let vocab_tgt = ["x", "y", "z", "u", "v", "w"];
        for case in 0..10 {
            let n_pairs = rng.gen_range(1..=20);
            let pairs: Vec<(Vec<String>, Vec<String>)> = (0..n_pairs)
                .map(|_| {
                    let sample = |rng: &mut ChaCha8Rng, vocab: &[&str]| {
                        (0..rng.gen_range(1..=4))
                            .map(|_| vocab[rng.gen_range(0..vocab.len())].to_string())
                            .collect::<Vec<_>>()
                    };
                    (sample(&mut rng, &vocab_src), sample(&mut rng, &vocab_tgt))
                })
                .collect();
            let use_null = case % 2 == 0;
            let iterations = 1 + case % 3;
            let corpus = SentencePairCorpus {
                name: format!("case{case}"),
                pairs: pairs.clone(),
                skipped: 0,
            };
            let result =
                lexicon::train_model1(&corpus, "r", iterations, use_null).expect("train");
            for step in result.log_likelihood.windows(2) {
                assert!(
                    step[1] >= step[0] - PROB_TOL,
                    "log-likelihood decreased: {} -> {}",
                    step[0],
                    step[1]
                );
            }
            let oracle = common::brute_force_model1(&pairs, iterations, use_null);
            let mut compared = 0usize;
            for (src, row) in &oracle {
                for (tgt, expected) in row {
                    let got = result.lexicon.prob(src, tgt);
                    assert!(
                        (got - expected).abs() <= PROB_TOL,
                        "case {case}: p({tgt}|{src}) = {got}, oracle {expected}"
                    );
                    compared += 1;
                }
            }
            assert!(compared > 0);
            // No extra entries beyond the oracle's support.
            for src in result.lexicon.source_words() {
                for (tgt, p) in result.lexicon.translations(src) {
                    let expected = oracle
                        .get(src)
                        .and_then(|row| row.get(tgt))
                        .copied()
                        .unwrap_or(0.0);
                    assert!((p - expected).abs() <= PROB_TOL);
                }
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        assert!(
            elapsed < MODEL1_BUDGET_SECS,
            "took {elapsed:.2}s, budget {MODEL1_BUDGET_SECS}s"
        );
    });
}

#[test]
fn criterion_2_hand_arithmetic() {
    let _gate = lock();
    criterion(2, "hand-computed examples", || {
        // One EM iteration from uniform over {(a b, x y), (a, x)}.
        let corpus = SentencePairCorpus {
            name: "hand".to_string(),
            pairs: vec![
                (
                    vec!["a".to_string(), "b".to_string()],
                    vec!["x".to_string(), "y".to_string()],
                ),
                (vec!["a".to_string()], vec!["x".to_string()]),
            ],
            skipped: 0,
        };
        let lex = lexicon::train_model1(&corpus, "r", 1, false).expect("train").lexicon;
        assert!((lex.prob("a", "x") - 0.75).abs() <= PROB_TOL);
        assert!((lex.prob("a", "y") - 0.25).abs() <= PROB_TOL);
        assert!((lex.prob("b", "x") - 0.5).abs() <= PROB_TOL);

        // Entropy of a target shared evenly by two sources.
        let table: HashMap<String, Vec<(String, f64)>> = [
            ("s1", vec![("t", 0.5), ("o1", 0.5)]),
            ("s2", vec![("t", 0.5), ("o2", 0.5)]),
        ]
        .into_iter()
        .map(|(s, entries)| {
            (
                s.to_string(),
                entries
                    .into_iter()
                    .map(|(t, p)| (t.to_string(), p))
                    .collect(),
            )
        })
        .collect();
        let forward = Lexicon::new("r", Direction::SourceToTarget, table);
        let reverse = Lexicon::new("r", Direction::TargetToSource, HashMap::new());
        let resource =
            Resource::new("r", ResourceKind::Dictionary, forward, reverse, None, None, None)
                .expect("resource");
        assert!((resource.entropy_tgt("t") - 2.0_f64.ln()).abs() <= PROB_TOL);

        // PMI: independent words give 0, missing co-occurrence gives 0, the
        // 2-in-4 case gives ln 2.
        let doc = |words: &[&str]| words.iter().map(|w| w.to_string()).collect::<Vec<_>>();
        let independent = vec![
            doc(&["w1", "w2"]),
            doc(&["w1", "w2"]),
            doc(&["w1"]),
            doc(&["w1"]),
            doc(&["w1"]),
            doc(&["w2"]),
            doc(&["w2"]),
            doc(&["z"]),
            doc(&["z"]),
            doc(&["z"]),
        ];
        let stats = corpus::compute_stats(&independent).expect("stats");
        assert!(features::pmi(&stats, "w1", "w2").abs() <= PROB_TOL);
        let disjoint = vec![doc(&["w1"]), doc(&["w2"])];
        let stats = corpus::compute_stats(&disjoint).expect("stats");
        assert_eq!(features::pmi(&stats, "w1", "w2"), 0.0);
        let paired = vec![doc(&["w1", "w2"]), doc(&["w1", "w2"]), doc(&["z"]), doc(&["z"])];
        let stats = corpus::compute_stats(&paired).expect("stats");
        assert!((features::pmi(&stats, "w1", "w2") - 2.0_f64.ln()).abs() <= PROB_TOL);

        // CLPMI: the balanced 4-alignment case gives 0, as do a missing word
        // and a single alignment holding both words.
        let pairs = |list: &[(&str, &str)]| SentencePairCorpus {
            name: "clpmi".to_string(),
            pairs: list
                .iter()
                .map(|(s, t)| (corpus::tokenize(s), corpus::tokenize(t)))
                .collect(),
            skipped: 0,
        };
        let balanced = corpus::CrossStats::from_parallel(&pairs(&[
            ("ws p", "wt q"),
            ("ws p", "r"),
            ("p", "wt q"),
            ("p", "q"),
        ]));
        assert!(features::clpmi(&balanced, "ws", "wt").abs() <= PROB_TOL);
        assert_eq!(features::clpmi(&balanced, "ws", "absent"), 0.0);
        let single = corpus::CrossStats::from_parallel(&pairs(&[("ws", "wt")]));
        assert!(features::clpmi(&single, "ws", "wt").abs() <= PROB_TOL);

        // Average precision with relevant documents at ranks 1 and 3.
        let run = RunFile {
            tag: "t".to_string(),
            rankings: vec![(
                "q1".to_string(),
                vec![
                    ("d1".to_string(), 5.0),
                    ("d2".to_string(), 4.0),
                    ("d3".to_string(), 3.0),
                    ("d4".to_string(), 2.0),
                    ("d5".to_string(), 1.0),
                ],
            )],
        };
        let qrels = BTreeMap::from([(
            "q1".to_string(),
            BTreeSet::from(["d1".to_string(), "d3".to_string()]),
        )]);
        let eval = retrieval::evaluate(&run, &qrels).expect("evaluate");
        assert!((eval.map - (1.0 + 2.0 / 3.0) / 2.0).abs() <= PROB_TOL);

        // Paired t over differences 0.1, 0.2, 0.3.
        let t = retrieval::paired_ttest(&[0.1, 0.2, 0.3], &[0.0, 0.0, 0.0]).expect("ttest");
        assert!((t.t - 0.2 / (0.1 / 3.0_f64.sqrt())).abs() <= PROB_TOL);
        assert_eq!(t.df, 2.0);
    });
}

#[test]
fn criterion_3_bm25_matches_exhaustive_oracle() {
    let _gate = lock();
    criterion(3, "BM25 vs full-scan oracle", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let vocab: Vec<String> = (0..60).map(|i| format!("t{i:02}")).collect();
        let docs: Vec<(String, Vec<String>)> = (0..200)
            .map(|d| {
                let len = rng.gen_range(5..=30);
                let tokens = (0..len)
                    .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                    .collect();
                (format!("doc{d:03}"), tokens)
            })
            .collect();
        let index = retrieval::build_index(&docs).expect("index");
        let params = Bm25Params::default();
        for _ in 0..50 {
            let n_terms = rng.gen_range(1..=6);
            let terms: Vec<(String, f64)> = (0..n_terms)
                .map(|_| {
                    (
                        vocab[rng.gen_range(0..vocab.len())].clone(),
                        rng.gen_range(0.05..1.0),
                    )
                })
                .collect();
            let expected = common::oracle_bm25(&docs, &terms, params.k1, params.b, docs.len());
            let query = WeightedQuery { terms };
            let hits = retrieval::bm25_search(&index, &query, docs.len(), params);
            assert_eq!(hits.len(), expected.len());
            for (hit, (id, score)) in hits.iter().zip(&expected) {
                assert_eq!(&hit.doc_id, id, "ranking mismatch");
                assert!(
                    (hit.score - score).abs() <= SCORE_TOL,
                    "score for {id}: {} vs oracle {score}",
                    hit.score
                );
            }
        }
        let elapsed = started.elapsed().as_secs_f64();
        assert!(
            elapsed < BM25_BUDGET_SECS,
            "took {elapsed:.2}s, budget {BM25_BUDGET_SECS}s"
        );
    });
}

#[test]
fn criterion_4_one_hot_mixture_reproduces_single_resource() {
    let _gate = lock();
    criterion(4, "one-hot mixture identity", || {
        // Published probabilities: 0.4, absent, 0.22, 0.25 mixed with
        // weights 0.7 / 0.2 / 0.1 / 0.
        let table = |entries: &[(&str, &[(&str, f64)])]| -> HashMap<String, Vec<(String, f64)>> {
            entries
                .iter()
                .map(|(s, ts)| {
                    (
                        s.to_string(),
                        ts.iter().map(|&(t, p)| (t.to_string(), p)).collect(),
                    )
                })
                .collect()
        };
        let cup: &[(&str, &[(&str, f64)])] =
            &[("cup", &[("jam", 0.4), ("fenjan", 0.46), ("piyale", 0.14)])];
        let l1 = Lexicon::new("r1", Direction::SourceToTarget, table(cup));
        let l2 = Lexicon::new(
            "r2",
            Direction::SourceToTarget,
            table(&[("cup", &[("fenjan", 1.0)])]),
        );
        let l3 = Lexicon::new(
            "r3",
            Direction::SourceToTarget,
            table(&[("cup", &[("jam", 0.22), ("fenjan", 0.78)])]),
        );
        let l4 = Lexicon::new(
            "r4",
            Direction::SourceToTarget,
            table(&[("cup", &[("jam", 0.25), ("fenjan", 0.25), ("livan", 0.5)])]),
        );
        let lambdas = BTreeMap::from([
            ("r1".to_string(), 0.7),
            ("r2".to_string(), 0.2),
            ("r3".to_string(), 0.1),
            ("r4".to_string(), 0.0),
        ]);
        let mixed =
            pipeline::linear_combine(&[&l1, &l2, &l3, &l4], &lambdas, "mix").expect("combine");
        assert!(
            (mixed.prob("cup", "jam") - 0.302).abs() <= COMBINE_TOL,
            "got {}",
            mixed.prob("cup", "jam")
        );

        // One-hot mixtures over the synthetic world's resources reproduce
        // each single-resource retrieval run bit for bit.
        let w = world();
        let (config, base) = pipeline::load_config(&w.config).expect("config");
        let (resources, _) = pipeline::build_resources(&config, &base).expect("resources");
        let setup = RetrievalSetup::load(&config.retrieval, &base).expect("setup");
        let lexicons: Vec<&Lexicon> = resources.iter().map(|r| &r.forward).collect();
        for resource in &resources {
            let n = config.resources[&resource.id].n();
            let (single_eval, single_run) =
                pipeline::run_single_resource(&setup, &resource.forward, n, "one_hot")
                    .expect("single run");
            let one_hot: BTreeMap<String, f64> = resources
                .iter()
                .map(|r| {
                    (
                        r.id.clone(),
                        if r.id == resource.id { 1.0 } else { 0.0 },
                    )
                })
                .collect();
            let mixed = pipeline::linear_combine(&lexicons, &one_hot, &resource.id)
                .expect("one-hot combine");
            let (mixed_eval, mixed_run) =
                pipeline::run_single_resource(&setup, &mixed, n, "one_hot").expect("mixed run");
            assert_eq!(single_run, mixed_run, "run files differ for {}", resource.id);
            assert_eq!(single_eval, mixed_eval, "eval differs for {}", resource.id);
        }
    });
}

#[test]
fn criterion_5_score_normalization_drops_negatives() {
    let _gate = lock();
    criterion(5, "raw-score normalization", || {
        let schema = FeatureSchema::from_slots(1, vec![("score".to_string(), "r".to_string())]);
        let model = ranker::model_from_weights(vec![1.0], &schema);
        let candidates = vec![
            ("first".to_string(), vec![3.9]),
            ("second".to_string(), vec![2.1]),
            ("third".to_string(), vec![-0.5]),
        ];
        let ranked = ranker::score_and_rank(&model, &schema, &candidates).expect("rank");
        assert_eq!(ranked.words(), vec!["first", "second"]);
        assert!((ranked.entries[0].weight - 0.65).abs() <= COMBINE_TOL);
        assert!((ranked.entries[1].weight - 0.35).abs() <= COMBINE_TOL);
        let total: f64 = ranked.entries.iter().map(|e| e.weight).sum();
        assert!((total - 1.0).abs() <= COMBINE_TOL);
    });
}

#[test]
fn criterion_6_synthetic_end_to_end() {
    let _gate = lock();
    criterion(6, "synthetic end-to-end ordering", || {
        let w = world();
        assert!(
            w.elapsed_secs < END_TO_END_BUDGET_SECS,
            "took {:.1}s, budget {END_TO_END_BUDGET_SECS}s",
            w.elapsed_secs
        );
        let manifest = &w.outcome.manifest;
        assert!(manifest.training.instances >= 2000);
        // A 0.3 ambiguity fraction and one 10% coverage gap per resource,
        // pairwise disjoint.
        assert_eq!(w.summary.ambiguous_words * 10, w.summary.vocab_size * 3);
        let gaps = w.ground_truth["coverage_gaps"]
            .as_object()
            .expect("coverage gaps");
        let mut all_gap_words: BTreeSet<String> = BTreeSet::new();
        let mut total = 0usize;
        for (_, words) in gaps {
            let words = words.as_array().expect("gap list");
            assert_eq!(words.len() * 10, w.summary.vocab_size);
            total += words.len();
            for word in words {
                all_gap_words.insert(word.as_str().expect("word").to_string());
            }
        }
        assert_eq!(all_gap_words.len(), total, "coverage gaps overlap");

        let ambiguity = manifest.ambiguity.as_ref().expect("ambiguity report");
        assert!(
            ambiguity.ltr_top1_accuracy >= 0.85,
            "reranker top-1 accuracy {}",
            ambiguity.ltr_top1_accuracy
        );
        for (id, acc) in &ambiguity.lexicon_top1_accuracy {
            assert!(
                ambiguity.ltr_top1_accuracy > *acc,
                "resource {id} top-1 {acc} not below reranker {}",
                ambiguity.ltr_top1_accuracy
            );
        }

        let ltr = &manifest.runs["ltr"];
        let linear = &manifest.runs["linear"];
        let best_single = manifest
            .runs
            .iter()
            .filter(|(name, _)| name.starts_with("single_"))
            .map(|(_, report)| report.map)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(ltr.map >= linear.map, "ltr {} < linear {}", ltr.map, linear.map);
        assert!(
            linear.map >= best_single,
            "linear {} < best single {best_single}",
            linear.map
        );
        assert!(ltr.queries_evaluated >= 50);
        match &manifest.significance["ltr_vs_best_single"] {
            pipeline::Significance::Test { p, .. } => {
                assert!(*p < 0.05, "ltr vs best single p = {p}");
            }
            pipeline::Significance::Degenerate { error } => {
                panic!("significance test degenerate: {error}");
            }
        }
    });
}

#[test]
fn criterion_7_coordinate_ascent_separates_separable_data() {
    let _gate = lock();
    criterion(7, "coordinate ascent on separable data", || {
        let instances: Vec<TrainingInstance> = (0..8)
            .map(|q| TrainingInstance {
                query_id: q + 1,
                source_word: format!("w{q}"),
                source_sentence: vec![],
                target_sentence: vec![],
                candidates: vec![
                    Candidate {
                        word: "neg".to_string(),
                        label: false,
                        features: Some(vec![0.2 + 0.05 * q as f64, 0.9]),
                    },
                    Candidate {
                        word: "pos".to_string(),
                        label: true,
                        features: Some(vec![0.8 + 0.01 * q as f64, 0.1]),
                    },
                ],
            })
            .collect();
        let schema = FeatureSchema::from_slots(
            1,
            vec![
                ("signal".to_string(), "r".to_string()),
                ("noise".to_string(), "r".to_string()),
            ],
        );
        let model = ranker::train_coordinate_ascent(&instances, &schema, &CaOptions::default())
            .expect("train");
        assert!(
            (model.meta.final_training_map - 1.0).abs() <= PROB_TOL,
            "training MAP {}",
            model.meta.final_training_map
        );
        let trajectory = &model.meta.trajectory;
        assert!(!trajectory.is_empty());
        for step in trajectory.windows(2) {
            assert!(
                step[1] >= step[0] - PROB_TOL,
                "trajectory decreased: {} -> {}",
                step[0],
                step[1]
            );
        }
    });
}

#[test]
fn criterion_8_same_seed_runs_are_byte_identical() {
    let _gate = lock();
    criterion(8, "seeded determinism", || {
        let w = world();
        let second_out = w._dir.path().join("out_repeat");
        let second =
            pipeline::run_experiment(&w.config, Some(&second_out)).expect("second run");
        let mut files = vec![
            "manifest.json".to_string(),
            "model.json".to_string(),
            "schema.json".to_string(),
            "training.letor".to_string(),
        ];
        for name in w.outcome.manifest.runs.keys() {
            files.push(w.outcome.manifest.runs[name].file.clone());
        }
        for rel in files {
            let a = std::fs::read(w.outcome.out_dir.join(&rel)).expect("first artifact");
            let b = std::fs::read(second.out_dir.join(&rel)).expect("second artifact");
            assert_eq!(a, b, "artifact {rel} differs between runs");
        }
    });
}
