//! Pipeline configuration: a TOML file whose keys can each be overridden
//! from the command line. Relative paths resolve against the config file.

use std::fs;
use std::path::{Path, PathBuf};

use screenprio::corpus::ReprMode;
use screenprio::lexical::{LexicalParams, Model};
use screenprio::metrics::{Completion, Measure};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub topics: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerConfig {
    pub models: Vec<String>,
    pub representations: Vec<String>,
    pub k1: f64,
    pub b: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub stopwords: Vec<String>,
}

impl Default for RankerConfig {
    fn default() -> Self {
        let p = LexicalParams::default();
        RankerConfig {
            models: vec!["bm25".into(), "qlm".into()],
            representations: vec!["title".into(), "tiab".into()],
            k1: p.k1,
            b: p.b,
            lambda: p.lambda,
            epsilon: p.epsilon,
            stopwords: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Prefix of every run tag (`{prefix}{model}-{repr}`).
    pub tag_prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub completion: String,
    pub alpha: f64,
    pub measures: Vec<String>,
    /// Run tag compared against all others; defaults to the first run.
    pub focal: Option<String>,
    /// Run files produced elsewhere, evaluated and compared alongside the
    /// lexical runs.
    pub external_runs: Vec<PathBuf>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            completion: "append".into(),
            alpha: screenprio::analysis::DEFAULT_ALPHA,
            measures: vec!["ap".into(), "wss@95".into(), "wss@100".into()],
            focal: None,
            external_runs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: DatasetConfig,
    pub ranker: RankerConfig,
    pub output: OutputConfig,
    pub evaluation: EvaluationConfig,
    /// Parallel topic workers; 0 uses every core.
    pub jobs: usize,
    /// Recorded only; the lexical pipeline is deterministic.
    pub seed: u64,
}

/// The config after validation, with parsed enums and resolved paths.
#[derive(Debug, Clone)]
pub struct ResolvedPipeline {
    pub topics: PathBuf,
    pub qrels: PathBuf,
    pub corpus: PathBuf,
    pub out_dir: PathBuf,
    pub models: Vec<Model>,
    pub representations: Vec<ReprMode>,
    pub params: LexicalParams,
    pub stopwords: Vec<String>,
    pub tag_prefix: String,
    pub completion: Completion,
    pub alpha: f64,
    pub measures: Vec<Measure>,
    pub focal: Option<String>,
    pub external_runs: Vec<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.dataset.topics,
            &mut config.dataset.qrels,
            &mut config.dataset.corpus,
            &mut config.output.dir,
        ]
        .into_iter()
        .flatten()
        .chain(config.evaluation.external_runs.iter_mut())
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self) -> CliResult<ResolvedPipeline> {
        let existing = |p: &Option<PathBuf>, what: &str| -> CliResult<PathBuf> {
            let p = p
                .clone()
                .ok_or_else(|| CliError::usage(format!("no {what} path given")))?;
            if !p.is_file() {
                return Err(CliError::usage(format!("{what} file {} does not exist", p.display())));
            }
            Ok(p)
        };
        let parse_all = |items: &[String], what: &str| -> CliResult<()> {
            if items.is_empty() {
                return Err(CliError::usage(format!("at least one {what} is required")));
            }
            Ok(())
        };
        parse_all(&self.ranker.models, "model")?;
        parse_all(&self.ranker.representations, "representation")?;

        let models = self
            .ranker
            .models
            .iter()
            .map(|m| m.parse().map_err(CliError::Usage))
            .collect::<CliResult<Vec<Model>>>()?;
        let representations = self
            .ranker
            .representations
            .iter()
            .map(|m| m.parse().map_err(CliError::Usage))
            .collect::<CliResult<Vec<ReprMode>>>()?;
        let measures = self
            .evaluation
            .measures
            .iter()
            .map(|m| m.parse().map_err(CliError::Usage))
            .collect::<CliResult<Vec<Measure>>>()?;
        let params = LexicalParams {
            k1: self.ranker.k1,
            b: self.ranker.b,
            lambda: self.ranker.lambda,
            epsilon: self.ranker.epsilon,
        };
        params.validate().map_err(|e| CliError::usage(e.to_string()))?;
        if !(self.evaluation.alpha > 0.0 && self.evaluation.alpha < 1.0) {
            return Err(CliError::usage(format!(
                "alpha must lie in (0, 1), got {}",
                self.evaluation.alpha
            )));
        }
        Ok(ResolvedPipeline {
            topics: existing(&self.dataset.topics, "topics")?,
            qrels: existing(&self.dataset.qrels, "qrels")?,
            corpus: existing(&self.dataset.corpus, "corpus")?,
            out_dir: self
                .output
                .dir
                .clone()
                .ok_or_else(|| CliError::usage("no output directory given"))?,
            models,
            representations,
            params,
            stopwords: self.ranker.stopwords.clone(),
            tag_prefix: self.output.tag_prefix.clone(),
            completion: self.evaluation.completion.parse().map_err(CliError::Usage)?,
            alpha: self.evaluation.alpha,
            measures,
            focal: self.evaluation.focal.clone(),
            external_runs: self
                .evaluation
                .external_runs
                .iter()
                .map(|p| existing(&Some(p.clone()), "external run"))
                .collect::<CliResult<_>>()?,
        })
    }
}
