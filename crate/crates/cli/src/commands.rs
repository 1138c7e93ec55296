use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{anyhow, Context};
use screenprio::analysis::{
    self, write_comparisons, write_convergence_table, write_gain_loss_table, Saturation,
};
use screenprio::corpus::{
    self, check_dataset, fetch_pubmed, write_corpus, DocStore, FetchError, FetchOptions,
    FetchOutcome, Qrels, TopicSet,
};
use screenprio::lexical::{rank_topics, LexicalParams, Ranker, Tokenizer};
use screenprio::metrics::{evaluate as evaluate_run, Completion, EvalOptions, MetricReport};
use screenprio::runio::{self, read_run, validate_against, RankedRun};
use screenprio::Pmid;
use serde_json::json;

use crate::config::{PipelineConfig, ResolvedPipeline};
use crate::error::{CliError, CliResult};
use crate::http::HttpEfetch;
use crate::{
    CompareArgs, ConvergenceArgs, DatasetArgs, EvaluateArgs, FetchArgs, GainlossArgs, IngestArgs,
    PipelineArgs, RankArgs, ValidateArgs,
};

pub struct Globals {
    pub jobs: usize,
    pub seed: Option<u64>,
}

fn open(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    if !path.is_file() {
        return Err(CliError::usage(format!("{what} file {} does not exist", path.display())));
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, contents: &[u8]) -> CliResult {
    let mut out = create(path)?;
    out.write_all(contents)?;
    out.flush()?;
    Ok(())
}

fn load_topics(path: &Path) -> CliResult<TopicSet> {
    let topics = corpus::parse_topics(open(path, "topics")?)
        .with_context(|| format!("parsing topics {}", path.display()))?;
    Ok(topics)
}

fn load_qrels(path: &Path) -> CliResult<Qrels> {
    let qrels = corpus::parse_qrels(open(path, "qrels")?)
        .with_context(|| format!("parsing qrels {}", path.display()))?;
    Ok(qrels)
}

fn load_store(path: &Path) -> CliResult<(DocStore, corpus::CorpusLoadReport)> {
    let loaded = corpus::load_corpus(open(path, "corpus")?)
        .with_context(|| format!("loading corpus {}", path.display()))?;
    Ok(loaded)
}

fn load_run(path: &Path) -> CliResult<RankedRun> {
    let run = read_run(open(path, "run")?).with_context(|| format!("reading run {}", path.display()))?;
    Ok(run)
}

fn eval_options(strict: bool) -> EvalOptions {
    EvalOptions {
        completion: if strict { Completion::Strict } else { Completion::Append },
        ..EvalOptions::default()
    }
}

fn evaluate_path(path: &Path, topics: &TopicSet, qrels: &Qrels, opts: &EvalOptions) -> CliResult<MetricReport> {
    let run = load_run(path)?;
    let report = evaluate_run(&run, topics, qrels, opts)
        .with_context(|| format!("evaluating {}", path.display()))?;
    Ok(report)
}

/// Writes to `path`, or stdout when `None`.
fn emit(path: Option<&Path>, contents: &[u8]) -> CliResult {
    match path {
        Some(p) => write_file(p, contents),
        None => {
            std::io::stdout().write_all(contents)?;
            Ok(())
        }
    }
}

pub fn fetch(args: &FetchArgs) -> CliResult {
    let pmids: Vec<Pmid> = match (&args.topics, &args.pmids) {
        (Some(path), _) => {
            let topics = load_topics(path)?;
            let all: BTreeSet<Pmid> = topics.iter().flat_map(|t| t.pmids.iter().cloned()).collect();
            all.into_iter().collect()
        }
        (None, Some(path)) => {
            let mut ids = BTreeSet::new();
            for line in open(path, "pmid list")?.lines() {
                let line = line?;
                ids.extend(line.split_whitespace().map(Pmid::from));
            }
            ids.into_iter().collect()
        }
        (None, None) => return Err(CliError::usage("either --topics or --pmids is required")),
    };
    let transport = HttpEfetch::new(
        &args.endpoint,
        args.api_key.clone(),
        Duration::from_secs(args.timeout_secs),
    );
    let options = FetchOptions {
        batch_size: args.batch_size as usize,
        max_retries: args.max_retries,
        initial_backoff: Duration::from_millis(args.backoff_ms),
        ..FetchOptions::default()
    };
    eprintln!("fetching {} pmids in batches of {}", pmids.len(), options.batch_size);

    let (outcome, unfetched, failure) = match fetch_pubmed(&transport, &pmids, &options) {
        Ok(outcome) => (outcome, Vec::new(), None),
        Err(FetchError::Incomplete { unfetched, last_error, partial }) => {
            (partial, unfetched, Some(last_error))
        }
        Err(e) => return Err(CliError::Runtime(e.into())),
    };
    let FetchOutcome { mut records, missing, untitled } = outcome;
    records.sort_by(|a, b| a.pmid.cmp(&b.pmid));
    let mut out = create(&args.out)?;
    write_corpus(&records, &mut out)?;
    out.flush()?;

    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.report.json", args.out.display())));
    let report = json!({
        "requested": pmids.len(),
        "fetched": records.len(),
        "missing": missing,
        "untitled": untitled,
        "unfetched": unfetched,
    });
    write_file(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    eprintln!(
        "wrote {} records to {}; {} missing, {} untitled",
        records.len(),
        args.out.display(),
        missing.len(),
        untitled.len()
    );
    if let Some(err) = failure {
        let ids: Vec<&str> = unfetched.iter().map(Pmid::as_str).collect();
        return Err(CliError::Runtime(anyhow::anyhow!(
            "{} pmids could not be fetched ({err}): {}",
            unfetched.len(),
            ids.join(",")
        )));
    }
    Ok(())
}

fn dataset_config(config: Option<&Path>, dataset: &DatasetArgs) -> CliResult<PipelineConfig> {
    let mut cfg = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(p) = &dataset.topics {
        cfg.dataset.topics = Some(p.clone());
    }
    if let Some(p) = &dataset.qrels {
        cfg.dataset.qrels = Some(p.clone());
    }
    if let Some(p) = &dataset.corpus {
        cfg.dataset.corpus = Some(p.clone());
    }
    Ok(cfg)
}

fn require(path: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    let p = path
        .clone()
        .ok_or_else(|| CliError::usage(format!("no {what} path given")))?;
    if !p.is_file() {
        return Err(CliError::usage(format!("{what} file {} does not exist", p.display())));
    }
    Ok(p)
}

fn ingest_report_json(
    topics: &TopicSet,
    qrels: &Qrels,
    store: &DocStore,
    load: &corpus::CorpusLoadReport,
) -> CliResult<(String, corpus::IngestReport)> {
    let report = check_dataset(topics, qrels, store);
    let value = json!({
        "topics": topics.len(),
        "judgements": qrels.len(),
        "documents": store.len(),
        "corpus": load,
        "dataset": &report,
    });
    Ok((serde_json::to_string_pretty(&value)? + "\n", report))
}

fn print_ingest_summary(report: &corpus::IngestReport) {
    println!("{:<14} {:>6} {:>5} {:>8} {:>8} {:>8}", "topic", "N", "R", "missing", "outside", "no_abs");
    for t in &report.topics {
        println!(
            "{:<14} {:>6} {:>5} {:>8} {:>8} {:>8}",
            t.topic_id,
            t.candidates,
            t.relevant,
            t.missing_documents.len(),
            t.judged_outside_candidates.len(),
            t.empty_abstracts
        );
    }
    println!("missing documents: {}", report.missing_documents());
}

pub fn ingest(args: &IngestArgs) -> CliResult {
    let cfg = dataset_config(args.config.as_deref(), &args.dataset)?;
    let topics_path = require(&cfg.dataset.topics, "topics")?;
    let qrels_path = require(&cfg.dataset.qrels, "qrels")?;
    let corpus_path = require(&cfg.dataset.corpus, "corpus")?;
    let topics = load_topics(&topics_path)?;
    let qrels = load_qrels(&qrels_path)?;
    let (store, load) = load_store(&corpus_path)?;
    let (json, report) = ingest_report_json(&topics, &qrels, &store, &load)?;
    print_ingest_summary(&report);
    if let Some(dir) = args.out.clone().or(cfg.output.dir) {
        write_file(&dir.join("ingest_report.json"), json.as_bytes())?;
    }
    Ok(())
}

fn read_stopwords(path: &Path) -> CliResult<Vec<String>> {
    let mut words = Vec::new();
    for line in open(path, "stopword")?.lines() {
        words.extend(line?.split_whitespace().map(str::to_owned));
    }
    Ok(words)
}

pub fn rank(args: &RankArgs) -> CliResult {
    let defaults = LexicalParams::default();
    let params = LexicalParams {
        k1: args.k1.unwrap_or(defaults.k1),
        b: args.b.unwrap_or(defaults.b),
        lambda: args.lambda.unwrap_or(defaults.lambda),
        epsilon: args.epsilon.unwrap_or(defaults.epsilon),
    };
    let mut ranker = Ranker::new(args.model, args.repr, params).map_err(|e| CliError::usage(e.to_string()))?;
    if let Some(path) = &args.stopwords {
        ranker.tokenizer = Tokenizer::with_stopwords(read_stopwords(path)?);
    }
    let topics = load_topics(&args.topics)?;
    let (store, _) = load_store(&args.corpus)?;
    let tag = args.tag.clone().unwrap_or_else(|| ranker.default_tag());
    let run = rank_topics(&ranker, &topics, &store, &tag)?;
    write_file(&args.out, runio::run_to_string(&run).as_bytes())?;
    eprintln!("ranked {} topics into {}", run.topic_count(), args.out.display());
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> CliResult {
    let topics = load_topics(&args.topics)?;
    let qrels = load_qrels(&args.qrels)?;
    let report = evaluate_path(&args.run, &topics, &qrels, &eval_options(args.strict))?;
    let table = report.to_string();
    print!("{table}");
    if let Some(path) = &args.out {
        write_file(path, report.to_json_lines().as_bytes())?;
    }
    if let Some(path) = &args.table {
        write_file(path, table.as_bytes())?;
    }
    Ok(())
}

pub fn validate(args: &ValidateArgs) -> CliResult {
    let topics = load_topics(&args.topics)?;
    let qrels = load_qrels(&args.qrels)?;
    let run = load_run(&args.run)?;
    let report = validate_against(&run, &topics, &qrels);
    print!("{report}");
    if let Some(path) = &args.out {
        write_file(path, (serde_json::to_string_pretty(&report)? + "\n").as_bytes())?;
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> CliResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

pub fn compare(args: &CompareArgs) -> CliResult {
    check_alpha(args.alpha)?;
    let topics = load_topics(&args.topics)?;
    let qrels = load_qrels(&args.qrels)?;
    let opts = eval_options(args.strict);
    let reports = args
        .runs
        .iter()
        .map(|p| evaluate_path(p, &topics, &qrels, &opts))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = analysis::compare_runs(&reports[0], &reports[1..], &args.measure, args.alpha)?;
    let mut buf = Vec::new();
    write_comparisons(&rows, &mut buf)?;
    emit(args.out.as_deref(), &buf)
}

pub fn gainloss(args: &GainlossArgs) -> CliResult {
    let topics = load_topics(&args.topics)?;
    let qrels = load_qrels(&args.qrels)?;
    let opts = eval_options(args.strict);
    let a = evaluate_path(&args.run_a, &topics, &qrels, &opts)?;
    let b = evaluate_path(&args.run_b, &topics, &qrels, &opts)?;
    let gl = analysis::gain_loss(&a, &b, args.measure)?;
    let mut buf = Vec::new();
    write_gain_loss_table(&gl, &mut buf)?;
    emit(args.out.as_deref(), &buf)?;
    eprintln!(
        "{} vs {} on {}: {} wins, {} losses, {} ties",
        gl.run_a, gl.run_b, gl.measure, gl.wins, gl.losses, gl.ties
    );
    Ok(())
}

/// Matches `name` against a pattern with exactly one `*` and returns the
/// step number the `*` captured.
pub fn step_from_name(pattern: &str, name: &str) -> Option<u64> {
    let (prefix, suffix) = pattern.split_once('*')?;
    let middle = name.strip_prefix(prefix)?.strip_suffix(suffix)?;
    if middle.is_empty() || !middle.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    middle.parse().ok()
}

pub fn convergence(args: &ConvergenceArgs) -> CliResult {
    check_alpha(args.alpha)?;
    if args.pattern.matches('*').count() != 1 {
        return Err(CliError::usage("--pattern must contain exactly one `*`"));
    }
    if !args.series.is_dir() {
        return Err(CliError::usage(format!("series directory {} does not exist", args.series.display())));
    }
    let topics = load_topics(&args.topics)?;
    let qrels = load_qrels(&args.qrels)?;
    let mut files = Vec::new();
    for entry in fs::read_dir(&args.series)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(step) = name.to_str().and_then(|n| step_from_name(&args.pattern, n)) {
            files.push((step, entry.path()));
        }
    }
    files.sort();
    if files.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(anyhow!("two checkpoint files share a step number").into());
    }
    let series = files
        .iter()
        .map(|(step, path)| load_run(path).map(|run| (*step, run)))
        .collect::<CliResult<Vec<_>>>()?;
    let c = analysis::convergence(&series, &topics, &qrels, args.measure, &EvalOptions::default(), args.alpha)?;
    let mut buf = Vec::new();
    write_convergence_table(&c, &mut buf)?;
    emit(args.out.as_deref(), &buf)?;
    match c.saturation {
        Saturation::At(step) => eprintln!("saturation at step {step}; best step {}", c.best_step),
        Saturation::NotWithinSeries => eprintln!("no saturation within series; best step {}", c.best_step),
    }
    Ok(())
}

fn pipeline_config(args: &PipelineArgs, globals: &Globals) -> CliResult<PipelineConfig> {
    let mut cfg = dataset_config(args.config.as_deref(), &args.dataset)?;
    if let Some(d) = &args.out_dir {
        cfg.output.dir = Some(d.clone());
    }
    if !args.models.is_empty() {
        cfg.ranker.models = args.models.clone();
    }
    if !args.representations.is_empty() {
        cfg.ranker.representations = args.representations.clone();
    }
    if let Some(v) = args.k1 {
        cfg.ranker.k1 = v;
    }
    if let Some(v) = args.b {
        cfg.ranker.b = v;
    }
    if let Some(v) = args.lambda {
        cfg.ranker.lambda = v;
    }
    if let Some(v) = args.epsilon {
        cfg.ranker.epsilon = v;
    }
    if let Some(v) = &args.tag_prefix {
        cfg.output.tag_prefix = v.clone();
    }
    if !args.measures.is_empty() {
        cfg.evaluation.measures = args.measures.clone();
    }
    if let Some(v) = &args.focal {
        cfg.evaluation.focal = Some(v.clone());
    }
    if let Some(v) = args.alpha {
        cfg.evaluation.alpha = v;
    }
    if args.strict {
        cfg.evaluation.completion = "strict".into();
    }
    if let Some(v) = &args.completion {
        cfg.evaluation.completion = v.clone();
    }
    if !args.stopwords.is_empty() {
        cfg.ranker.stopwords = args.stopwords.clone();
    }
    if !args.external_runs.is_empty() {
        cfg.evaluation.external_runs = args.external_runs.clone();
    }
    if let Some(seed) = globals.seed {
        cfg.seed = seed;
    }
    if globals.jobs != 0 {
        cfg.jobs = globals.jobs;
    }
    Ok(cfg)
}

/// Full lexical pipeline. Layout of the output directory:
///
/// ```text
/// effective_config.toml
/// ingest_report.json
/// runs/<tag>.run
/// reports/<tag>.jsonl, reports/<tag>.txt
/// compare.csv
/// gainloss/<focal>__<other>.csv
/// summary.txt
/// ```
///
/// External runs get reports and take part in the comparisons but are not
/// copied into `runs/`.
pub fn pipeline(args: &PipelineArgs, globals: &Globals) -> CliResult {
    let cfg = pipeline_config(args, globals)?;
    let plan = cfg.resolve()?;
    let out = &plan.out_dir;
    fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("output directory {} is not writable: {e}", out.display())))?;
    write_file(&out.join("effective_config.toml"), cfg.to_toml().as_bytes())?;

    let topics = load_topics(&plan.topics)?;
    let qrels = load_qrels(&plan.qrels)?;
    let (store, load) = load_store(&plan.corpus)?;
    let (json, ingest) = ingest_report_json(&topics, &qrels, &store, &load)?;
    write_file(&out.join("ingest_report.json"), json.as_bytes())?;
    if ingest.missing_documents() > 0 {
        return Err(anyhow!(
            "{} candidate documents are missing from the corpus; see {}",
            ingest.missing_documents(),
            out.join("ingest_report.json").display()
        )
        .into());
    }

    let mut reports = rank_and_evaluate(&plan, &topics, &qrels, &store)?;
    reports.extend(evaluate_external(&plan, &topics, &qrels, &reports)?);
    analyse(&plan, &reports)?;

    let mut summary = String::new();
    summary.push_str(&format!("{:<20}", "run"));
    for m in &plan.measures {
        summary.push_str(&format!(" {:>10}", m.to_string()));
    }
    summary.push('\n');
    for r in &reports {
        summary.push_str(&format!("{:<20}", r.run_tag));
        for &m in &plan.measures {
            summary.push_str(&format!(" {:>10.4}", r.mean(m).unwrap_or(f64::NAN)));
        }
        summary.push('\n');
    }
    write_file(&out.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn rank_and_evaluate(
    plan: &ResolvedPipeline,
    topics: &TopicSet,
    qrels: &Qrels,
    store: &DocStore,
) -> CliResult<Vec<MetricReport>> {
    let opts = EvalOptions {
        completion: plan.completion,
        ..EvalOptions::default()
    };
    let mut reports = Vec::new();
    for &model in &plan.models {
        for &mode in &plan.representations {
            let mut ranker = Ranker::new(model, mode, plan.params).map_err(|e| CliError::usage(e.to_string()))?;
            ranker.tokenizer = Tokenizer::with_stopwords(&plan.stopwords);
            let tag = format!("{}{}", plan.tag_prefix, ranker.default_tag());
            let run = rank_topics(&ranker, topics, store, &tag)?;
            log::info!("ranked {} topics for {tag}", run.topic_count());
            let run_path = plan.out_dir.join("runs").join(format!("{tag}.run"));
            write_file(&run_path, runio::run_to_string(&run).as_bytes())?;
            let report = evaluate_path(&run_path, topics, qrels, &opts)?;
            let reports_dir = plan.out_dir.join("reports");
            write_file(&reports_dir.join(format!("{tag}.jsonl")), report.to_json_lines().as_bytes())?;
            write_file(&reports_dir.join(format!("{tag}.txt")), report.to_string().as_bytes())?;
            reports.push(report);
        }
    }
    Ok(reports)
}

fn evaluate_external(
    plan: &ResolvedPipeline,
    topics: &TopicSet,
    qrels: &Qrels,
    lexical: &[MetricReport],
) -> CliResult<Vec<MetricReport>> {
    let opts = EvalOptions {
        completion: plan.completion,
        ..EvalOptions::default()
    };
    let mut reports: Vec<MetricReport> = Vec::new();
    for path in &plan.external_runs {
        let report = evaluate_path(path, topics, qrels, &opts)?;
        let tag = &report.run_tag;
        if lexical.iter().chain(&reports).any(|r| &r.run_tag == tag) {
            return Err(anyhow!("external run {} reuses the tag `{tag}`", path.display()).into());
        }
        let reports_dir = plan.out_dir.join("reports");
        write_file(&reports_dir.join(format!("{tag}.jsonl")), report.to_json_lines().as_bytes())?;
        write_file(&reports_dir.join(format!("{tag}.txt")), report.to_string().as_bytes())?;
        reports.push(report);
    }
    Ok(reports)
}

fn analyse(plan: &ResolvedPipeline, reports: &[MetricReport]) -> CliResult {
    if reports.len() < 2 {
        return Ok(());
    }
    let focal_idx = match &plan.focal {
        Some(tag) => reports
            .iter()
            .position(|r| &r.run_tag == tag)
            .ok_or_else(|| CliError::usage(format!("focal run `{tag}` is not produced by this pipeline")))?,
        None => 0,
    };
    let focal = &reports[focal_idx];
    let others: Vec<MetricReport> = reports
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != focal_idx)
        .map(|(_, r)| r.clone())
        .collect();

    let rows = analysis::compare_runs(focal, &others, &plan.measures, plan.alpha)?;
    let mut buf = Vec::new();
    write_comparisons(&rows, &mut buf)?;
    write_file(&plan.out_dir.join("compare.csv"), &buf)?;

    let measure = plan.measures[0];
    for other in &others {
        let gl = analysis::gain_loss(focal, other, measure)?;
        let mut buf = Vec::new();
        write_gain_loss_table(&gl, &mut buf)?;
        let name = format!("{}__{}.csv", focal.run_tag, other.run_tag);
        write_file(&plan.out_dir.join("gainloss").join(name), &buf)?;
    }
    Ok(())
}
