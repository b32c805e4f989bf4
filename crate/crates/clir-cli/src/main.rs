//! Stage-oriented command line for the cross-language retrieval toolkit.
//! Each verb reads and writes plain files, so any stage can be re-run or
//! inspected in isolation. Logs go to stderr, artifacts to the given paths.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use clir::corpus;
use clir::features::{self, FeatureSchema};
use clir::labeling;
use clir::lexicon::{self, Direction};
use clir::pipeline::{self, SyntheticOptions};
use clir::ranker::{self, CaOptions, HingeOptions, RankedCandidates};
use clir::retrieval::{self, Bm25Params, RunFile, WeightedQuery};

#[derive(Parser)]
#[command(name = "clir", version, about = "Cross-language retrieval pipeline stages")]
struct Cli {
    /// Cap the worker thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train a translation lexicon from a sentence-aligned corpus by EM.
    TrainModel1(TrainModel1Args),
    /// Extract a lexicon from a comparable corpus or a bilingual dictionary.
    ExtractLexicon(ExtractLexiconArgs),
    /// Align a labeling corpus and pool candidates into training lists.
    BuildTrainingData(BuildTrainingDataArgs),
    /// Attach feature vectors to a training file using configured resources.
    ExtractFeatures(ExtractFeaturesArgs),
    /// Fit a linear ranking model on a feature-annotated training file.
    TrainRanker(TrainRankerArgs),
    /// Translate query topics into weighted target-language terms.
    Translate(TranslateArgs),
    /// Build an inverted index over a document collection.
    Index(IndexArgs),
    /// Run weighted queries against an index, writing a run file.
    Search(SearchArgs),
    /// Score a run file against relevance judgments.
    Evaluate(EvaluateArgs),
    /// Run the full experiment described by a config file.
    RunExperiment(RunExperimentArgs),
    /// Generate a seeded synthetic bilingual world for end-to-end tests.
    GenSynthetic(GenSyntheticArgs),
    /// Greedy forward feature selection on the configured training data.
    FeatureAblation(FeatureAblationArgs),
}

#[derive(Args)]
struct TrainModel1Args {
    /// Sentence-aligned corpus, one `source<TAB>target` pair per line.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    resource_id: String,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
    /// Drop the empty-alignment token from the EM model.
    #[arg(long)]
    no_null: bool,
    /// Train the target-to-source direction instead.
    #[arg(long)]
    reverse: bool,
    /// Keep only the top-k translations per source word (0 = keep all).
    #[arg(long, default_value_t = 0)]
    top_k: usize,
    /// Drop translations below this probability after truncation.
    #[arg(long, default_value_t = 0.0)]
    min_prob: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LexiconKind {
    Comparable,
    Dictionary,
}

#[derive(Args)]
struct ExtractLexiconArgs {
    #[arg(long, value_enum)]
    kind: LexiconKind,
    #[arg(long)]
    resource_id: String,
    /// Bilingual dictionary file (dictionary kind).
    #[arg(long)]
    path: Option<PathBuf>,
    /// Source documents as JSON lines (comparable kind).
    #[arg(long)]
    source_docs: Option<PathBuf>,
    /// Target documents as JSON lines (comparable kind).
    #[arg(long)]
    target_docs: Option<PathBuf>,
    /// Document alignment triples as JSON lines (comparable kind).
    #[arg(long)]
    alignments: Option<PathBuf>,
    /// Keep the top-k co-occurrence translations per word (comparable kind).
    #[arg(long, default_value_t = 20)]
    top_k: usize,
    /// Extract the target-to-source direction instead.
    #[arg(long)]
    reverse: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildTrainingDataArgs {
    /// Held-out sentence-aligned corpus to label.
    #[arg(long)]
    corpus: PathBuf,
    /// Resource lexicon files; may be given multiple times.
    #[arg(long = "lexicon", required = true)]
    lexicons: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    aligner_iterations: usize,
    #[arg(long)]
    no_null: bool,
    /// Candidates pooled per word from each resource.
    #[arg(long, default_value_t = 10)]
    pool_k: usize,
    /// Cross-resource validation: any | all.
    #[arg(long, default_value = "any")]
    validation: String,
    #[arg(long)]
    max_instances: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractFeaturesArgs {
    /// Experiment config defining the feature resources.
    #[arg(long)]
    config: PathBuf,
    /// Training file produced by build-training-data.
    #[arg(long)]
    training: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the feature schema here.
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainRankerArgs {
    /// Feature-annotated training file.
    #[arg(long)]
    training: PathBuf,
    /// Feature schema the training file was built with.
    #[arg(long)]
    schema: PathBuf,
    /// coordinate_ascent | pairwise_hinge
    #[arg(long, default_value = "coordinate_ascent")]
    trainer: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    restarts: u32,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    #[arg(long, default_value_t = 12)]
    max_passes: u32,
    #[arg(long, default_value_t = 0.1)]
    learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    epochs: u32,
    #[arg(long, default_value_t = 0.0)]
    reg: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TranslateArgs {
    /// Experiment config defining resources and topics.
    #[arg(long)]
    config: PathBuf,
    /// single:<resource-id> | linear | ltr
    #[arg(long)]
    method: String,
    /// Trained model file (ltr method).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Feature schema file (ltr method).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Overrides the configured context resource (ltr method).
    #[arg(long)]
    context_resource: Option<String>,
    /// Translations kept per query word (default: per-method config).
    #[arg(long)]
    n: Option<usize>,
    /// Output TSV of qid, term, weight.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    /// Documents as JSON lines with id and text fields.
    #[arg(long)]
    docs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    /// Index file written by the index verb.
    #[arg(long)]
    index: PathBuf,
    /// Topics TSV of qid and title; terms enter unweighted.
    #[arg(long)]
    topics: Option<PathBuf>,
    /// Weighted queries TSV of qid, term, weight (translate output).
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Run tag recorded in the output.
    #[arg(long, default_value = "clir")]
    tag: String,
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Run file in `qid Q0 doc rank score tag` format.
    #[arg(long)]
    run: PathBuf,
    /// Relevance judgments in `qid 0 doc rel` format.
    #[arg(long)]
    qrels: PathBuf,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenSyntheticArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 240)]
    vocab_size: usize,
    #[arg(long, default_value_t = 12)]
    topics: usize,
    /// Fraction of the vocabulary given a second sense, on a 0.1 grid.
    #[arg(long, default_value_t = 0.3)]
    ambiguity: f64,
    #[arg(long, default_value_t = 2600)]
    parallel_pairs: usize,
    #[arg(long, default_value_t = 3000)]
    labeling_pairs: usize,
    #[arg(long, default_value_t = 160)]
    comparable_docs: usize,
    #[arg(long, default_value_t = 480)]
    target_docs: usize,
    #[arg(long, default_value_t = 60)]
    queries: usize,
}

#[derive(Args)]
struct FeatureAblationArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value_t = 10)]
    max_features: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum AppError {
    /// Flag combinations clap cannot express statically.
    Usage(String),
    Data(clir::Error),
}

impl From<clir::Error> for AppError {
    fn from(e: clir::Error) -> Self {
        AppError::Data(e)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::Data(clir::Error::io(path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(verb: Verb) -> Result<(), AppError> {
    match verb {
        Verb::TrainModel1(args) => train_model1(args),
        Verb::ExtractLexicon(args) => extract_lexicon(args),
        Verb::BuildTrainingData(args) => build_training_data(args),
        Verb::ExtractFeatures(args) => extract_features(args),
        Verb::TrainRanker(args) => train_ranker(args),
        Verb::Translate(args) => translate(args),
        Verb::Index(args) => index(args),
        Verb::Search(args) => search(args),
        Verb::Evaluate(args) => evaluate(args),
        Verb::RunExperiment(args) => run_experiment(args),
        Verb::GenSynthetic(args) => gen_synthetic(args),
        Verb::FeatureAblation(args) => feature_ablation(args),
    }
}

fn train_model1(args: TrainModel1Args) -> Result<(), AppError> {
    let corpus = corpus::load_parallel(&args.corpus, &args.resource_id)?;
    let corpus = if args.reverse { corpus.swapped() } else { corpus };
    let result = lexicon::train_model1(&corpus, &args.resource_id, args.iterations, !args.no_null)?;
    let mut lex = result.lexicon;
    if args.reverse {
        lex.direction = Direction::TargetToSource;
    }
    if args.top_k > 0 || args.min_prob > 0.0 {
        let top_k = if args.top_k > 0 { args.top_k } else { usize::MAX };
        lex = lexicon::prune_lexicon(&lex, top_k, args.min_prob)?;
    }
    lexicon::write_lexicon(&lex, &args.out)?;
    eprintln!(
        "trained {} source words in {} iterations, final log-likelihood {:.6}",
        lex.len(),
        args.iterations,
        result.log_likelihood.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn extract_lexicon(args: ExtractLexiconArgs) -> Result<(), AppError> {
    let lex = match args.kind {
        LexiconKind::Comparable => {
            let (src, tgt, aln) = match (&args.source_docs, &args.target_docs, &args.alignments) {
                (Some(s), Some(t), Some(a)) => (s, t, a),
                _ => {
                    return Err(AppError::Usage(
                        "--kind comparable needs --source-docs, --target-docs, and --alignments"
                            .into(),
                    ))
                }
            };
            let corpus = corpus::load_comparable(src, tgt, aln, &args.resource_id)?;
            let corpus = if args.reverse { corpus.swapped() } else { corpus };
            let mut lex =
                lexicon::extract_comparable_lexicon(&corpus, &args.resource_id, args.top_k)?;
            if args.reverse {
                lex.direction = Direction::TargetToSource;
            }
            lex
        }
        LexiconKind::Dictionary => {
            let Some(path) = &args.path else {
                return Err(AppError::Usage("--kind dictionary needs --path".into()));
            };
            let dict = corpus::load_dictionary(path)?;
            let direction = if args.reverse {
                Direction::TargetToSource
            } else {
                Direction::SourceToTarget
            };
            lexicon::dictionary_lexicon(&dict, &args.resource_id, direction)
        }
    };
    lexicon::write_lexicon(&lex, &args.out)?;
    eprintln!("extracted {} source words", lex.len());
    Ok(())
}

fn build_training_data(args: BuildTrainingDataArgs) -> Result<(), AppError> {
    let validation = labeling::ValidationMode::parse(&args.validation)?;
    let corpus = corpus::load_parallel(&args.corpus, "labeling")?;
    let lexicons: Vec<_> = args
        .lexicons
        .iter()
        .map(|p| lexicon::read_lexicon(p))
        .collect::<clir::Result<_>>()?;
    let refs: Vec<&_> = lexicons.iter().collect();
    let aligner = lexicon::train_model1(
        &corpus,
        "aligner",
        args.aligner_iterations,
        !args.no_null,
    )?
    .lexicon;
    let output = labeling::build_training_data(
        &corpus,
        &refs,
        &aligner,
        args.pool_k,
        validation,
        !args.no_null,
    )?;
    let mut instances = output.instances;
    if let Some(cap) = args.max_instances {
        instances.truncate(cap);
    }
    // Written without features: placeholder schema, vectors attached later.
    for inst in &mut instances {
        for cand in &mut inst.candidates {
            cand.features.get_or_insert_with(Vec::new);
        }
    }
    let schema = FeatureSchema::from_slots(1, vec![]);
    labeling::write_training_file(&instances, &schema, &args.out)?;
    eprintln!(
        "kept {} instances (dropped {} without positives, skipped {} with no candidates)",
        instances.len(),
        output.dropped_no_positive,
        output.skipped_no_candidates
    );
    Ok(())
}

fn extract_features(args: ExtractFeaturesArgs) -> Result<(), AppError> {
    let (config, base) = pipeline::load_config(&args.config)?;
    let (resources, _) = pipeline::build_resources(&config, &base)?;
    let schema = FeatureSchema::for_resources(&resources);
    let training = labeling::read_training_file(&args.training)?;
    let mut instances = training.instances;
    // Read-back instances carry no sentence context, so context features are
    // recomputed only when the file was freshly built in-process; here they
    // fall back to empty contexts.
    features::attach_features(&mut instances, &resources, &schema)?;
    labeling::write_training_file(&instances, &schema, &args.out)?;
    if let Some(schema_out) = &args.schema_out {
        schema.write(schema_out)?;
    }
    eprintln!(
        "attached {} features to {} instances",
        schema.len(),
        instances.len()
    );
    Ok(())
}

fn train_ranker(args: TrainRankerArgs) -> Result<(), AppError> {
    let schema = FeatureSchema::read(&args.schema)?;
    let training = labeling::read_training_file(&args.training)?;
    if let Some(hash) = &training.schema_hash {
        if *hash != schema.hash {
            return Err(AppError::Data(clir::Error::SchemaMismatch {
                expected: hash.clone(),
                actual: schema.hash.clone(),
            }));
        }
    }
    let model = match args.trainer.as_str() {
        "coordinate_ascent" => ranker::train_coordinate_ascent(
            &training.instances,
            &schema,
            &CaOptions {
                restarts: args.restarts,
                epsilon: args.epsilon,
                seed: args.seed,
                max_passes: args.max_passes,
                active: None,
                init: None,
            },
        )?,
        "pairwise_hinge" => ranker::train_pairwise_hinge(
            &training.instances,
            &schema,
            &HingeOptions {
                learning_rate: args.learning_rate,
                epochs: args.epochs,
                reg: args.reg,
                seed: args.seed,
            },
        )?,
        other => {
            return Err(AppError::Usage(format!(
                "unknown trainer {other:?}; expected coordinate_ascent or pairwise_hinge"
            )))
        }
    };
    ranker::write_model(&model, &args.out)?;
    eprintln!(
        "trained {} model: training MAP {:.4}, MRR {:.4}",
        model.trainer, model.meta.final_training_map, model.meta.final_training_mrr
    );
    Ok(())
}

fn translate(args: TranslateArgs) -> Result<(), AppError> {
    let (config, base) = pipeline::load_config(&args.config)?;
    let (resources, _) = pipeline::build_resources(&config, &base)?;
    let topics = retrieval::read_topics(&pipeline::resolve(&base, &config.retrieval.topics))?;

    enum Method<'a> {
        Lexicon(clir::lexicon::Lexicon, usize),
        Ltr {
            model: clir::ranker::RankingModel,
            schema: FeatureSchema,
            context: &'a clir::lexicon::Lexicon,
            n: usize,
        },
    }

    let method = if let Some(id) = args.method.strip_prefix("single:") {
        let resource = resources
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| AppError::Usage(format!("unknown resource {id:?} in --method")))?;
        let n = args.n.unwrap_or_else(|| config.resources[id].n());
        Method::Lexicon(resource.forward.clone(), n)
    } else if args.method == "linear" {
        if config.linear.lambdas.is_empty() {
            return Err(AppError::Usage(
                "linear translation needs fixed [linear.lambdas] in the config".into(),
            ));
        }
        let lexicons: Vec<&_> = resources.iter().map(|r| &r.forward).collect();
        let combined = pipeline::linear_combine(&lexicons, &config.linear.lambdas, "linear")?;
        Method::Lexicon(combined, args.n.unwrap_or_else(|| config.linear.n()))
    } else if args.method == "ltr" {
        let (Some(model_path), Some(schema_path)) = (&args.model, &args.schema) else {
            return Err(AppError::Usage("--method ltr needs --model and --schema".into()));
        };
        let model = ranker::read_model(model_path)?;
        let schema = FeatureSchema::read(schema_path)?;
        let context_id = args
            .context_resource
            .clone()
            .or_else(|| {
                (!config.ltr.context_resource.is_empty())
                    .then(|| config.ltr.context_resource.clone())
            })
            .ok_or_else(|| {
                AppError::Usage(
                    "ltr translation needs --context-resource or [ltr].context_resource".into(),
                )
            })?;
        let context = &resources
            .iter()
            .find(|r| r.id == context_id)
            .ok_or_else(|| AppError::Usage(format!("unknown context resource {context_id:?}")))?
            .forward;
        Method::Ltr {
            model,
            schema,
            context,
            n: args.n.unwrap_or(config.ltr.n),
        }
    } else {
        return Err(AppError::Usage(format!(
            "unknown method {:?}; expected single:<resource>, linear, or ltr",
            args.method
        )));
    };

    let mut lines = String::new();
    for (qid, title) in &topics {
        let words = corpus::tokenize(title);
        let candidates: Vec<RankedCandidates> = match &method {
            Method::Lexicon(lex, _) => words
                .iter()
                .map(|w| pipeline::lexicon_candidates(lex, w))
                .collect(),
            Method::Ltr {
                model,
                schema,
                context,
                ..
            } => {
                let target_context =
                    pipeline::query_target_context(context, &words, config.ltr.context_top);
                words
                    .iter()
                    .map(|w| {
                        pipeline::rank_word(
                            w,
                            &words,
                            &target_context,
                            model,
                            schema,
                            &resources,
                            config.labeling.pool_k,
                        )
                    })
                    .collect::<clir::Result<_>>()?
            }
        };
        let n = match &method {
            Method::Lexicon(_, n) => *n,
            Method::Ltr { n, .. } => *n,
        };
        let built = retrieval::construct_query(&words, &candidates, n, config.retrieval.weighted)?;
        for (term, weight) in &built.query.terms {
            lines.push_str(&format!("{qid}\t{term}\t{weight}\n"));
        }
    }
    std::fs::write(&args.out, lines).map_err(|e| io_err(&args.out, e))?;
    eprintln!("translated {} topics", topics.len());
    Ok(())
}

fn index(args: IndexArgs) -> Result<(), AppError> {
    let docs = corpus::load_documents(&args.docs)?;
    let index = retrieval::build_index(&docs)?;
    retrieval::write_index(&index, &args.out)?;
    eprintln!(
        "indexed {} documents, average length {:.2}",
        index.doc_count(),
        index.avg_doc_len()
    );
    Ok(())
}

fn read_weighted_queries(path: &Path) -> Result<Vec<(String, WeightedQuery)>, AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut grouped: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(AppError::Data(clir::Error::parse(
                path,
                i + 1,
                "expected `qid<TAB>term<TAB>weight`",
            )));
        }
        let weight: f64 = fields[2].parse().map_err(|e| {
            AppError::Data(clir::Error::parse(path, i + 1, format!("bad weight: {e}")))
        })?;
        match grouped.last_mut() {
            Some((qid, parts)) if qid == fields[0] => {
                parts.push((fields[1].to_string(), weight));
            }
            _ => grouped.push((
                fields[0].to_string(),
                vec![(fields[1].to_string(), weight)],
            )),
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(qid, parts)| (qid, retrieval::merge_weighted_terms(parts)))
        .collect())
}

fn search(args: SearchArgs) -> Result<(), AppError> {
    let index = retrieval::read_index(&args.index)?;
    let params = Bm25Params { k1: args.k1, b: args.b };
    let queries: Vec<(String, WeightedQuery)> = match (&args.topics, &args.queries) {
        (Some(topics), None) => retrieval::read_topics(topics)?
            .into_iter()
            .map(|(qid, title)| {
                let parts = corpus::tokenize(&title)
                    .into_iter()
                    .map(|t| (t, 1.0))
                    .collect();
                (qid, retrieval::merge_weighted_terms(parts))
            })
            .collect(),
        (None, Some(queries)) => read_weighted_queries(queries)?,
        _ => {
            return Err(AppError::Usage(
                "search needs exactly one of --topics or --queries".into(),
            ))
        }
    };
    let mut run = RunFile {
        tag: args.tag.clone(),
        rankings: Vec::new(),
    };
    for (qid, query) in queries {
        let hits = retrieval::bm25_search(&index, &query, args.k, params);
        run.rankings.push((
            qid,
            hits.into_iter().map(|h| (h.doc_id, h.score)).collect(),
        ));
    }
    retrieval::write_run(&run, &args.out)?;
    eprintln!("searched {} queries", run.rankings.len());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<(), AppError> {
    let run = retrieval::read_run(&args.run)?;
    let qrels = retrieval::read_qrels(&args.qrels)?;
    let result = retrieval::evaluate(&run, &qrels)?;
    let json = serde_json::to_string_pretty(&result)
        .expect("evaluation result serializes");
    match &args.out {
        Some(path) => {
            std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))?;
        }
        None => println!("{json}"),
    }
    eprintln!(
        "MAP {:.4}, P@5 {:.4}, P@10 {:.4} over {} queries",
        result.map, result.p5, result.p10, result.queries_evaluated
    );
    Ok(())
}

fn run_experiment(args: RunExperimentArgs) -> Result<(), AppError> {
    let outcome = pipeline::run_experiment(&args.config, args.out.as_deref())?;
    for (name, report) in &outcome.manifest.runs {
        eprintln!("{name}: MAP {:.4}, P@5 {:.4}", report.map, report.p5);
    }
    for (name, sig) in &outcome.manifest.significance {
        match sig.p_value() {
            Some(p) => eprintln!("{name}: p = {p:.4}"),
            None => eprintln!("{name}: degenerate"),
        }
    }
    println!("{}", outcome.manifest_path.display());
    Ok(())
}

fn gen_synthetic(args: GenSyntheticArgs) -> Result<(), AppError> {
    let options = SyntheticOptions {
        seed: args.seed,
        vocab_size: args.vocab_size,
        topics: args.topics,
        ambiguity_fraction: args.ambiguity,
        parallel_pairs: args.parallel_pairs,
        labeling_pairs: args.labeling_pairs,
        comparable_docs: args.comparable_docs,
        target_docs: args.target_docs,
        queries: args.queries,
    };
    let summary = pipeline::generate_synthetic_world(&options, &args.out)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}

fn feature_ablation(args: FeatureAblationArgs) -> Result<(), AppError> {
    let (config, base) = pipeline::load_config(&args.config)?;
    let (resources, _) = pipeline::build_resources(&config, &base)?;
    let labeling_corpus = corpus::load_parallel(
        &pipeline::resolve(&base, &config.labeling.corpus),
        "labeling",
    )?;
    let aligner = lexicon::train_model1(
        &labeling_corpus,
        "aligner",
        config.labeling.aligner_iterations,
        config.model1.use_null,
    )?
    .lexicon;
    let lexicons: Vec<&_> = resources.iter().map(|r| &r.forward).collect();
    let output = labeling::build_training_data(
        &labeling_corpus,
        &lexicons,
        &aligner,
        config.labeling.pool_k,
        config.labeling.validation_mode()?,
        config.model1.use_null,
    )?;
    let mut instances = output.instances;
    instances.truncate(config.labeling.max_instances);
    let schema = FeatureSchema::for_resources(&resources);
    features::attach_features(&mut instances, &resources, &schema)?;
    let steps = pipeline::forward_selection(
        &instances,
        &schema,
        &CaOptions {
            epsilon: config.trainer.epsilon,
            seed: config.seed,
            max_passes: config.trainer.max_passes,
            ..CaOptions::default()
        },
        args.max_features,
    )?;
    let report = BTreeMap::from([("steps", &steps)]);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match &args.out {
        Some(path) => {
            std::fs::write(path, json + "\n").map_err(|e| io_err(path, e))?;
        }
        None => println!("{json}"),
    }
    for step in &steps {
        eprintln!(
            "+ {}/{} -> training MAP {:.4}",
            step.resource, step.name, step.map
        );
    }
    Ok(())
}
