//! Trial repetition loop and epoch conclusion.
//!
//! A trial keeps drawing evidence for the user's intended action, fusing the
//! draws, until the chosen decoder is confident enough or the repetition cap
//! is hit. An epoch runs trials, moving the cursor by each decoded action,
//! until a node is selected: by a decoded `Select` in select-command mode, or
//! by the posterior ratio test in PSC mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::{CalibrationProfile, TrialEvidence};
use crate::graph::{ActionClass, ActionPolicy, NavGraph, NodeId, SelectionMode};
use crate::inference::{decide, ActionDecision, DecisionModel, JointConfidence, PosteriorState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpochConfig {
    pub model: DecisionModel,
    pub joint_confidence: JointConfidence,
    pub criterion: SelectionMode,
    pub confidence_threshold: f64,
    pub psc_threshold: f64,
    pub max_repetitions: u32,
    pub seconds_per_draw: f64,
    pub max_trials_per_epoch: u32,
}

impl Default for EpochConfig {
    fn default() -> Self {
        Self {
            model: DecisionModel::Marginal,
            joint_confidence: JointConfidence::MaxMarginal,
            criterion: SelectionMode::Psc,
            confidence_threshold: 0.9,
            psc_threshold: 10.0,
            max_repetitions: 5,
            seconds_per_draw: 1.05,
            max_trials_per_epoch: 50,
        }
    }
}

impl EpochConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(0.0..=f64::MAX).contains(&self.confidence_threshold) {
            return bad("confidence_threshold must be nonnegative");
        }
        if self.psc_threshold.is_nan() || self.psc_threshold <= 1.0 {
            return bad("psc_threshold must exceed 1");
        }
        if self.max_repetitions == 0 {
            return bad("max_repetitions must be at least 1");
        }
        if !(self.seconds_per_draw.is_finite() && self.seconds_per_draw > 0.0) {
            return bad("seconds_per_draw must be positive");
        }
        if self.max_trials_per_epoch == 0 {
            return bad("max_trials_per_epoch must be at least 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub decision: ActionDecision,
    pub repetitions: u32,
    pub elapsed_s: f64,
    pub fused_evidence: TrialEvidence,
}

/// Draws and fuses evidence for `true_intent` until the decision confidence
/// reaches the threshold or the repetition cap is hit.
pub fn run_trial<P: ActionPolicy, R: Rng + ?Sized>(
    policy: &P,
    state: &PosteriorState,
    profile: &CalibrationProfile,
    true_intent: ActionClass,
    cfg: &EpochConfig,
    rng: &mut R,
) -> Result<TrialOutcome> {
    if !state.mode().admits(true_intent) {
        return Err(Error::InadmissibleAction(
            true_intent.to_string(),
            state.mode().to_string(),
        ));
    }
    let mut fused = profile.draw(true_intent.index(), rng)?;
    let mut repetitions = 1;
    loop {
        let decision = decide(cfg.model, cfg.joint_confidence, policy, state, &fused)?;
        if decision.confidence >= cfg.confidence_threshold || repetitions >= cfg.max_repetitions {
            return Ok(TrialOutcome {
                decision,
                repetitions,
                elapsed_s: repetitions as f64 * cfg.seconds_per_draw,
                fused_evidence: fused,
            });
        }
        fused.fuse(&profile.draw(true_intent.index(), rng)?)?;
        repetitions += 1;
    }
}

/// True when the cursor node is more than `threshold` times as probable as
/// the most probable other node.
pub fn psc_check(posterior: &[f64], cursor: NodeId, threshold: f64) -> bool {
    let Some(&at_cursor) = posterior.get(cursor) else {
        return false;
    };
    let rival = posterior
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != cursor)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    if rival == 0.0 {
        return at_cursor > 0.0;
    }
    at_cursor / rival > threshold
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    SelectCommand,
    Psc,
    TrialCap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub cursor: NodeId,
    pub intent: ActionClass,
    pub outcome: TrialOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub start: NodeId,
    pub target: NodeId,
    pub trials: Vec<TrialRecord>,
    pub selected: NodeId,
    pub correct: bool,
    pub draws: u64,
    pub total_elapsed_s: f64,
    pub concluded_by: Conclusion,
}

impl EpochTrace {
    /// Re-walks the decoded actions from the start node and returns the node
    /// the epoch must have selected, checking every recorded cursor on the
    /// way.
    pub fn replay(&self, graph: &NavGraph) -> Result<NodeId> {
        let mut cursor = self.start;
        for (i, trial) in self.trials.iter().enumerate() {
            if trial.cursor != cursor {
                return Err(Error::Config(format!(
                    "trial {i} recorded cursor {} but replay is at {cursor}",
                    trial.cursor
                )));
            }
            let last = i + 1 == self.trials.len();
            let selects_here = last
                && match self.concluded_by {
                    Conclusion::SelectCommand => true,
                    Conclusion::Psc => self.selected == cursor,
                    Conclusion::TrialCap => false,
                };
            if !selects_here {
                cursor = graph.apply_action(cursor, trial.outcome.decision.action)?;
            }
        }
        Ok(cursor)
    }
}

/// Applies one decoded trial to the epoch: folds the evidence into the
/// posterior, then either concludes or moves the cursor by `action`.
///
/// In PSC mode the ratio test runs after the update, first on the cursor the
/// trial was decoded at (selecting it without moving) and then on the cursor
/// reached by the move. Returns the conclusion, if any; the selected node is
/// then `state.cursor()`.
pub fn advance<P: ActionPolicy>(
    graph: &NavGraph,
    policy: &P,
    state: &mut PosteriorState,
    action: ActionClass,
    evidence: &TrialEvidence,
    cfg: &EpochConfig,
) -> Result<Option<Conclusion>> {
    let mode = state.mode();
    if !mode.admits(action) {
        return Err(Error::InadmissibleAction(action.to_string(), mode.to_string()));
    }
    *state = state.update_posterior(policy, evidence)?;
    match mode {
        SelectionMode::SelectCommand if action == ActionClass::Select => return Ok(Some(Conclusion::SelectCommand)),
        SelectionMode::SelectCommand => {}
        SelectionMode::Psc => {
            if psc_check(state.posterior(), state.cursor(), cfg.psc_threshold) {
                return Ok(Some(Conclusion::Psc));
            }
        }
    }
    state.set_cursor(graph.apply_action(state.cursor(), action)?)?;
    if mode == SelectionMode::Psc && psc_check(state.posterior(), state.cursor(), cfg.psc_threshold) {
        return Ok(Some(Conclusion::Psc));
    }
    Ok(None)
}

/// Runs one character-selection epoch towards `target`, starting from the
/// cursor and prior held by `state`. Stops at the trial cap with the cursor
/// node as a forced selection.
pub fn simulate_epoch<R: Rng + ?Sized>(
    graph: &NavGraph,
    mut state: PosteriorState,
    target: NodeId,
    profile: &CalibrationProfile,
    cfg: &EpochConfig,
    rng: &mut R,
) -> Result<EpochTrace> {
    graph.check_node(target)?;
    let mode = state.mode();
    if profile.n_classes() != mode.num_classes() {
        return Err(Error::EvidenceDimension {
            expected: mode.num_classes(),
            got: profile.n_classes(),
        });
    }
    let policy = graph.policy(mode);
    let start = state.cursor();
    let mut trials = Vec::new();
    let mut draws = 0u64;
    let mut concluded = None;

    while trials.len() < cfg.max_trials_per_epoch as usize {
        let cursor = state.cursor();
        let intent = sample_intent(graph, cursor, target, mode, rng)?;
        let outcome = run_trial(&policy, &state, profile, intent, cfg, rng)?;
        draws += u64::from(outcome.repetitions);
        let action = outcome.decision.action;
        let update = advance(graph, &policy, &mut state, action, &outcome.fused_evidence, cfg)?;
        trials.push(TrialRecord {
            cursor,
            intent,
            outcome,
        });
        if let Some(c) = update {
            concluded = Some(c);
            break;
        }
    }

    let selected = state.cursor();
    Ok(EpochTrace {
        start,
        target,
        trials,
        selected,
        correct: selected == target,
        draws,
        total_elapsed_s: draws as f64 * cfg.seconds_per_draw,
        concluded_by: concluded.unwrap_or(Conclusion::TrialCap),
    })
}

/// Samples the simulated user's intended action from the intent policy.
pub fn sample_intent<R: Rng + ?Sized>(
    graph: &NavGraph,
    cursor: NodeId,
    target: NodeId,
    mode: SelectionMode,
    rng: &mut R,
) -> Result<ActionClass> {
    let policy = graph.intent_policy(cursor, target, mode)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in policy.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = ActionClass::from_index(i);
        if u < acc {
            return Ok(last.expect("index within action set"));
        }
    }
    Ok(last.expect("policy has support"))
}
