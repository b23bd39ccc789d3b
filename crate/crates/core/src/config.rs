//! Run configuration file (TOML).
//!
//! ```toml
//! [graph]
//! rows = 5
//! cols = 7
//! labels = "abcdefghijklmnopqrstuvwxyz_<.,?'!-:"   # `_` is space, `<` is backspace
//! wrap = true
//!
//! [lm]
//! prior = "language"        # or "uniform"
//! corpus = "corpus.txt"     # bundled text when omitted
//! order = 6
//! alpha = 0.1
//!
//! [profiles]
//! accuracies = [0.60, 0.70, 0.75, 0.80, 0.85, 0.90, 0.97]
//!
//! [epoch]
//! confidence_threshold = 0.9
//! psc_threshold = 10.0
//!
//! [grid]
//! runs = 30
//!
//! [seeds]
//! base = 2017
//!
//! [output]
//! dir = "out"
//!
//! [service]
//! host = "127.0.0.1"
//! port = 8080
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::epoch::EpochConfig;
use crate::error::{Error, Result};
use crate::evidence::fit_profile_from_csv;
use crate::graph::{decode_tokens, NavGraph, NodeId, SelectionMode, DEFAULT_COLS, DEFAULT_LABELS, DEFAULT_ROWS};
use crate::inference::DecisionModel;
use crate::prior::{NgramModel, DEFAULT_ALPHA, DEFAULT_ORDER};
use crate::sim::{
    calibrate_profiles, canonical_words, default_start, derive_seed, MonteCarloPlan, PriorSource, ProfileSet,
    DEFAULT_ALPHA as DEFAULT_SIGNIFICANCE,
};

/// Stand-ins for seven calibration datasets ranging from low to high accuracy.
pub const DEFAULT_PROFILE_ACCURACIES: [f64; 7] = [0.60, 0.70, 0.75, 0.80, 0.85, 0.90, 0.97];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub graph: GraphConfig,
    pub lm: LmConfig,
    pub profiles: ProfilesConfig,
    pub epoch: EpochConfig,
    pub grid: GridConfig,
    pub experiment: ExperimentConfig,
    pub seeds: SeedConfig,
    pub output: OutputConfig,
    pub service: ServiceSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub rows: usize,
    pub cols: usize,
    pub labels: String,
    pub wrap: bool,
    /// Label token of the starting cursor; grid centre when omitted.
    pub start: Option<String>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            labels: DEFAULT_LABELS.to_string(),
            wrap: true,
            start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Language,
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub prior: PriorKind,
    /// Plain-text training corpus.
    pub corpus: Option<PathBuf>,
    /// Pre-trained model table; takes precedence over `corpus`.
    pub model: Option<PathBuf>,
    pub order: usize,
    pub alpha: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            prior: PriorKind::Language,
            corpus: None,
            model: None,
            order: DEFAULT_ORDER,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Fitted calibration data for one profile, one CSV per selection mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvProfile {
    pub psc: PathBuf,
    pub select_command: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilesConfig {
    pub accuracies: Vec<f64>,
    pub sigma: f64,
    pub csv: Vec<CsvProfile>,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        Self {
            accuracies: DEFAULT_PROFILE_ACCURACIES.to_vec(),
            sigma: 1.0,
            csv: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub models: Vec<DecisionModel>,
    pub criteria: Vec<SelectionMode>,
    pub runs: usize,
    pub words: Vec<String>,
    pub significance: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            models: DecisionModel::ALL.to_vec(),
            criteria: vec![SelectionMode::SelectCommand, SelectionMode::Psc],
            runs: 30,
            words: canonical_words(),
            significance: DEFAULT_SIGNIFICANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub words: Vec<String>,
    pub strength: f64,
    pub models: Vec<DecisionModel>,
    pub criteria: Vec<SelectionMode>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            words: canonical_words().into_iter().take(2).collect(),
            strength: 0.5,
            models: DecisionModel::ALL.to_vec(),
            criteria: vec![SelectionMode::SelectCommand, SelectionMode::Psc],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub base: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { base: 2017 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub host: String,
    pub port: u16,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.epoch.validate()?;
        if self.profiles.accuracies.is_empty() && self.profiles.csv.is_empty() {
            return Err(Error::Config("no calibration profiles configured".into()));
        }
        if self.grid.words.is_empty() || self.experiment.words.is_empty() {
            return Err(Error::Config("word lists must not be empty".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output.dir)
    }

    pub fn build_graph(&self) -> Result<NavGraph> {
        let g = &self.graph;
        NavGraph::new(g.rows, g.cols, &decode_tokens(&g.labels), g.wrap)
    }

    pub fn start_node(&self, graph: &NavGraph) -> Result<NodeId> {
        match &self.graph.start {
            None => Ok(default_start(graph)),
            Some(tok) => {
                let chars = decode_tokens(tok);
                match chars.as_slice() {
                    [c] => graph.node_of(*c),
                    _ => Err(Error::Config(format!("start must be a single label token, got {tok:?}"))),
                }
            }
        }
    }

    pub fn build_language_model(&self, graph: &NavGraph) -> Result<NgramModel> {
        let lm = &self.lm;
        if let Some(model) = &lm.model {
            return NgramModel::load(&self.resolve(model));
        }
        match &lm.corpus {
            Some(corpus) => NgramModel::train_file(&self.resolve(corpus), lm.order, lm.alpha, graph.labels()),
            None => NgramModel::train(crate::BUNDLED_CORPUS, lm.order, lm.alpha, graph.labels()),
        }
    }

    pub fn build_prior_source(&self, graph: &NavGraph) -> Result<PriorSource> {
        Ok(match self.lm.prior {
            PriorKind::Uniform => PriorSource::Uniform,
            PriorKind::Language => PriorSource::Language(Arc::new(self.build_language_model(graph)?)),
        })
    }

    pub fn build_profiles(&self) -> Result<Vec<ProfileSet>> {
        let base = self.seeds.base;
        let mut sets = calibrate_profiles(&self.profiles.accuracies, self.profiles.sigma, base)?;
        for (i, csv) in self.profiles.csv.iter().enumerate() {
            let seed = derive_seed(base, &[3, i as u64]);
            let psc = fit_profile_from_csv(&self.resolve(&csv.psc), seed)?;
            let select_command = fit_profile_from_csv(&self.resolve(&csv.select_command), seed ^ 1)?;
            if psc.n_classes() != 4 || select_command.n_classes() != 5 {
                return Err(Error::Config(
                    "CSV profiles need 4 score columns for psc and 5 for select-command".into(),
                ));
            }
            sets.push(ProfileSet {
                accuracy: psc.target_accuracy(),
                psc,
                select_command,
            });
        }
        Ok(sets)
    }

    /// The Monte Carlo grid described by `[grid]`.
    pub fn monte_carlo_plan(&self) -> Result<MonteCarloPlan> {
        let graph = self.build_graph()?;
        Ok(MonteCarloPlan {
            start: self.start_node(&graph)?,
            prior: self.build_prior_source(&graph)?,
            profiles: self.build_profiles()?,
            words: self.grid.words.clone(),
            models: self.grid.models.clone(),
            criteria: self.grid.criteria.clone(),
            runs: self.grid.runs,
            base_seed: self.seeds.base,
            epoch: self.epoch.clone(),
            alpha: self.grid.significance,
            graph,
        })
    }

    /// The favour/oppose grid described by `[experiment]`; the prior source
    /// is replaced by the experiment itself.
    pub fn experiment_plan(&self) -> Result<MonteCarloPlan> {
        let graph = self.build_graph()?;
        Ok(MonteCarloPlan {
            start: self.start_node(&graph)?,
            prior: PriorSource::Uniform,
            profiles: self.build_profiles()?,
            words: self.experiment.words.clone(),
            models: self.experiment.models.clone(),
            criteria: self.experiment.criteria.clone(),
            runs: self.grid.runs,
            base_seed: self.seeds.base,
            epoch: self.epoch.clone(),
            alpha: self.grid.significance,
            graph,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.grid.runs, 30);
        assert_eq!(cfg.profiles.accuracies, DEFAULT_PROFILE_ACCURACIES.to_vec());
        assert_eq!(cfg.epoch.confidence_threshold, 0.9);
        assert_eq!(cfg.epoch.psc_threshold, 10.0);
        assert_eq!(cfg.experiment.words, vec!["the", "and"]);
        assert_eq!(cfg.service.port, 8080);
        let g = cfg.build_graph().unwrap();
        assert_eq!(g.len(), 35);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::parse("[grid]\nrunz = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::parse("[nope]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn sections_parse() {
        let cfg = RunConfig::parse(
            r#"
            [graph]
            start = "a"
            [lm]
            prior = "uniform"
            [epoch]
            psc_threshold = 4.0
            max_repetitions = 3
            [grid]
            models = ["joint", "baseline"]
            criteria = ["psc"]
            runs = 2
            [seeds]
            base = 7
            "#,
        )
        .unwrap();
        assert_eq!(cfg.grid.models, vec![DecisionModel::Joint, DecisionModel::Baseline]);
        assert_eq!(cfg.grid.criteria, vec![SelectionMode::Psc]);
        assert_eq!(cfg.epoch.max_repetitions, 3);
        assert_eq!(cfg.seeds.base, 7);
        let g = cfg.build_graph().unwrap();
        assert_eq!(cfg.start_node(&g).unwrap(), 0);
        assert!(matches!(cfg.build_prior_source(&g).unwrap(), PriorSource::Uniform));
    }

    #[test]
    fn invalid_epoch_values() {
        assert!(RunConfig::parse("[epoch]\npsc_threshold = 1.0\n").is_err());
        assert!(RunConfig::parse("[epoch]\nmax_repetitions = 0\n").is_err());
    }
}
