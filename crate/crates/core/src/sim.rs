//! Monte Carlo typing study.
//!
//! A session types a list of words letter by letter, one epoch per selection,
//! with a space between consecutive words. A wrong selection is undone by an
//! extra epoch aimed at the backspace node before the intended letter is
//! retried. The grid runner repeats sessions over calibration profiles,
//! decoders and selection criteria, then compares each decoder with the
//! baseline by Welch t-test.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::epoch::{simulate_epoch, EpochConfig, EpochTrace};
use crate::error::{Error, Result};
use crate::evidence::{make_profile, CalibrationProfile};
use crate::graph::{NavGraph, NodeId, SelectionMode, BACKSPACE, SPACE};
use crate::inference::{DecisionModel, PosteriorState};
use crate::prior::{synthetic_prior, NgramModel, PriorBias, PriorDistribution};
use crate::report::{ReportRow, SimulationReport};

pub const CANONICAL_WORDS: [&str; 10] = [
    "the", "and", "with", "will", "seat", "between", "seen", "please", "buys", "makeup",
];

/// Corrective epochs allowed per word before it is given up.
pub const MAX_CORRECTIONS_PER_WORD: u32 = 10;

/// Significance level used to flag comparisons in reports.
pub const DEFAULT_ALPHA: f64 = 0.001;

pub fn canonical_words() -> Vec<String> {
    CANONICAL_WORDS.iter().map(|w| w.to_string()).collect()
}

/// Where each epoch's prior over target nodes comes from.
#[derive(Clone, Debug)]
pub enum PriorSource {
    Uniform,
    Language(Arc<NgramModel>),
    /// Built around the epoch's true target.
    Synthetic { bias: PriorBias, strength: f64 },
}

impl PriorSource {
    pub fn prior(&self, graph: &NavGraph, typed: &str, target: NodeId) -> Result<PriorDistribution> {
        match self {
            Self::Uniform => Ok(PriorDistribution::uniform(graph.len())),
            Self::Language(lm) => Ok(lm.node_prior(graph, typed)),
            Self::Synthetic { bias, strength } => synthetic_prior(graph, target, *bias, *strength),
        }
    }
}

/// A calibration profile at one accuracy, built for both selection modes.
#[derive(Clone, Debug)]
pub struct ProfileSet {
    pub accuracy: f64,
    pub psc: CalibrationProfile,
    pub select_command: CalibrationProfile,
}

impl ProfileSet {
    pub fn calibrated(accuracy: f64, sigma: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            accuracy,
            psc: make_profile(accuracy, SelectionMode::Psc.num_classes(), sigma, seed)?,
            select_command: make_profile(
                accuracy,
                SelectionMode::SelectCommand.num_classes(),
                sigma,
                derive_seed(seed, &[5]),
            )?,
        })
    }

    pub fn for_mode(&self, mode: SelectionMode) -> &CalibrationProfile {
        match mode {
            SelectionMode::Psc => &self.psc,
            SelectionMode::SelectCommand => &self.select_command,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SessionSpec {
    pub words: Vec<String>,
    pub prior: PriorSource,
    pub profile: CalibrationProfile,
    pub epoch: EpochConfig,
    pub seed: u64,
    pub start: NodeId,
    pub keep_traces: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub total_time_s: f64,
    pub draws: u64,
    /// Selections made, including wrong ones and backspaces.
    pub chars_typed: u32,
    pub wrong_selections: u32,
    /// Backspace epochs that removed an erroneous character.
    pub corrective_epochs: u32,
    pub failed_words: u32,
    pub typed_text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epochs: Vec<EpochTrace>,
}

/// The text a session is meant to produce: words joined by single spaces.
pub fn session_text(words: &[String]) -> Vec<char> {
    let mut out = Vec::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            out.push(SPACE);
        }
        out.extend(w.chars());
    }
    out
}

pub fn simulate_session(graph: &NavGraph, session: &SessionSpec, rng: &mut ChaCha8Rng) -> Result<SessionResult> {
    let mode = session.epoch.criterion;
    let goal = session_text(&session.words);
    for &c in &goal {
        graph.node_of(c)?;
    }
    let backspace = graph.node_of(BACKSPACE)?;
    graph.check_node(session.start)?;

    let mut result = SessionResult::default();
    let mut typed: Vec<char> = Vec::with_capacity(goal.len() + 8);
    let mut cursor = session.start;
    let mut epoch_id = 0u64;

    // Each word owns its trailing separator so corrections are counted per word.
    let mut word_end = 0;
    for (wi, word) in session.words.iter().enumerate() {
        word_end += word.chars().count() + usize::from(wi + 1 < session.words.len());
        let mut corrections = 0u32;
        loop {
            let on_track = typed.len() <= goal.len() && goal[..typed.len()] == typed[..];
            if on_track && typed.len() >= word_end {
                break;
            }
            let target = if on_track {
                graph.node_of(goal[typed.len()])?
            } else {
                if corrections >= MAX_CORRECTIONS_PER_WORD {
                    result.failed_words += 1;
                    typed.clear();
                    typed.extend_from_slice(&goal[..word_end]);
                    break;
                }
                corrections += 1;
                backspace
            };
            let history: String = typed.iter().collect();
            let prior = session.prior.prior(graph, &history, target)?;
            let state = PosteriorState::init_epoch(&prior, cursor, mode)?.with_epoch_id(epoch_id);
            epoch_id += 1;
            let trace = simulate_epoch(graph, state, target, &session.profile, &session.epoch, rng)?;

            result.draws += trace.draws;
            result.chars_typed += 1;
            if !trace.correct {
                result.wrong_selections += 1;
            }
            cursor = trace.selected;
            let label = graph.label(trace.selected)?;
            if label == BACKSPACE {
                if !on_track && trace.correct {
                    result.corrective_epochs += 1;
                }
                typed.pop();
            } else {
                typed.push(label);
            }
            if session.keep_traces {
                result.epochs.push(trace);
            }
        }
    }
    result.total_time_s = result.draws as f64 * session.epoch.seconds_per_draw;
    result.typed_text = typed.into_iter().collect();
    Ok(result)
}

/// Everything a Monte Carlo grid needs. The decoder and criterion in `epoch`
/// are overridden per cell.
#[derive(Clone, Debug)]
pub struct MonteCarloPlan {
    pub graph: NavGraph,
    pub words: Vec<String>,
    pub prior: PriorSource,
    pub profiles: Vec<ProfileSet>,
    pub models: Vec<DecisionModel>,
    pub criteria: Vec<SelectionMode>,
    pub runs: usize,
    pub base_seed: u64,
    pub epoch: EpochConfig,
    pub start: NodeId,
    pub alpha: f64,
}

impl MonteCarloPlan {
    /// The canonical session on the default keyboard with the given profiles.
    pub fn new(profiles: Vec<ProfileSet>, prior: PriorSource, runs: usize, base_seed: u64) -> Self {
        let graph = NavGraph::default_keyboard();
        let start = default_start(&graph);
        Self {
            graph,
            words: canonical_words(),
            prior,
            profiles,
            models: DecisionModel::ALL.to_vec(),
            criteria: vec![SelectionMode::SelectCommand, SelectionMode::Psc],
            runs,
            base_seed,
            epoch: EpochConfig::default(),
            start,
            alpha: DEFAULT_ALPHA,
        }
    }

    /// Seed of run `run` under profile `profile_index`. Shared by every
    /// decoder and criterion so cells differ only in what they decode.
    pub fn run_seed(&self, profile_index: usize, run: usize) -> u64 {
        derive_seed(self.base_seed, &[2, profile_index as u64, run as u64])
    }
}

/// Centre of the grid.
pub fn default_start(graph: &NavGraph) -> NodeId {
    graph.node_at(graph.rows() / 2, graph.cols() / 2)
}

/// Calibrates one [`ProfileSet`] per accuracy with seeds derived from `base_seed`.
pub fn calibrate_profiles(accuracies: &[f64], sigma: f64, base_seed: u64) -> Result<Vec<ProfileSet>> {
    accuracies
        .par_iter()
        .enumerate()
        .map(|(i, &acc)| ProfileSet::calibrated(acc, sigma, derive_seed(base_seed, &[1, i as u64])))
        .collect()
}

struct Cell {
    profile: usize,
    model: DecisionModel,
    criterion: SelectionMode,
    run: usize,
}

pub fn run_monte_carlo(plan: &MonteCarloPlan) -> Result<SimulationReport> {
    if plan.runs == 0 {
        return Err(Error::NoRuns);
    }
    if plan.profiles.is_empty() || plan.models.is_empty() || plan.criteria.is_empty() {
        return Err(Error::EmptyGrid);
    }
    plan.epoch.validate()?;
    let mut cells = Vec::new();
    for profile in 0..plan.profiles.len() {
        for &model in &plan.models {
            for &criterion in &plan.criteria {
                for run in 0..plan.runs {
                    cells.push(Cell {
                        profile,
                        model,
                        criterion,
                        run,
                    });
                }
            }
        }
    }
    let rows = cells
        .par_iter()
        .map(|cell| {
            let set = &plan.profiles[cell.profile];
            let session = SessionSpec {
                words: plan.words.clone(),
                prior: plan.prior.clone(),
                profile: set.for_mode(cell.criterion).clone(),
                epoch: EpochConfig {
                    model: cell.model,
                    criterion: cell.criterion,
                    ..plan.epoch.clone()
                },
                seed: plan.run_seed(cell.profile, cell.run),
                start: plan.start,
                keep_traces: false,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(session.seed);
            let res = simulate_session(&plan.graph, &session, &mut rng)?;
            Ok(ReportRow {
                profile_accuracy: set.accuracy,
                model: cell.model,
                criterion: cell.criterion,
                run: cell.run,
                session_time_s: res.total_time_s,
                wrong_selections: res.wrong_selections,
                chars_typed: res.chars_typed,
                draws: res.draws,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationReport::from_rows(rows, plan.alpha))
}

#[derive(Clone, Debug)]
pub struct FavorOpposeReport {
    pub favor: SimulationReport,
    pub oppose: SimulationReport,
}

/// Runs the grid twice with synthetic priors that favour and then oppose the
/// true target of every epoch. `plan.prior` is ignored.
pub fn favor_oppose_experiment(plan: &MonteCarloPlan, strength: f64) -> Result<FavorOpposeReport> {
    let with = |bias| MonteCarloPlan {
        prior: PriorSource::Synthetic { bias, strength },
        ..plan.clone()
    };
    Ok(FavorOpposeReport {
        favor: run_monte_carlo(&with(PriorBias::Favor))?,
        oppose: run_monte_carlo(&with(PriorBias::Oppose))?,
    })
}

/// SplitMix64-style mixing of a base seed with a path of stream indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut x = base;
    for &p in path {
        x ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}
