//! Recursive posterior over the intended node and the three action decoders.
//!
//! After a trial at cursor `c` with evidence `L`, the belief that node `T` is
//! the target is reweighted by `sum_s L(s) P(s | T; c)`. The joint decoder
//! maximises `L(s) P(s | T; c) post(T)` over action and target together; the
//! marginal decoder sums the target out first; the baseline looks at `L`
//! alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evidence::TrialEvidence;
use crate::graph::{ActionClass, ActionPolicy, NodeId, SelectionMode};
use crate::prior::{argmax, PriorDistribution};

const POSTERIOR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionModel {
    /// Maximum of the joint over (action, target).
    Joint,
    /// Target marginalised out.
    Marginal,
    /// Evidence likelihood only.
    Baseline,
}

impl DecisionModel {
    pub const ALL: [DecisionModel; 3] = [Self::Joint, Self::Marginal, Self::Baseline];

    pub fn name(self) -> &'static str {
        match self {
            Self::Joint => "joint",
            Self::Marginal => "marginal",
            Self::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for DecisionModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Belief over the target node within one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    posterior: Vec<f64>,
    cursor: NodeId,
    trial: usize,
    epoch_id: u64,
    mode: SelectionMode,
}

impl PosteriorState {
    /// Starts an epoch: the posterior is the prior and the trial index is 1.
    pub fn init_epoch(prior: &PriorDistribution, cursor: NodeId, mode: SelectionMode) -> Result<Self> {
        let sum: f64 = prior.probs().iter().sum();
        if (sum - 1.0).abs() > POSTERIOR_TOL {
            return Err(Error::Unnormalized(sum));
        }
        if cursor >= prior.len() {
            return Err(Error::InvalidNode {
                index: cursor,
                len: prior.len(),
            });
        }
        Ok(Self {
            posterior: prior.probs().to_vec(),
            cursor,
            trial: 1,
            epoch_id: 0,
            mode,
        })
    }

    pub fn with_epoch_id(mut self, epoch_id: u64) -> Self {
        self.epoch_id = epoch_id;
        self
    }

    pub fn posterior(&self) -> &[f64] {
        &self.posterior
    }

    pub fn cursor(&self) -> NodeId {
        self.cursor
    }

    pub fn trial(&self) -> usize {
        self.trial
    }

    pub fn epoch_id(&self) -> u64 {
        self.epoch_id
    }

    pub fn mode(&self) -> SelectionMode {
        self.mode
    }

    pub fn map_node(&self) -> NodeId {
        argmax(&self.posterior)
    }

    /// Moves the cursor without touching the belief.
    pub fn set_cursor(&mut self, cursor: NodeId) -> Result<()> {
        if cursor >= self.posterior.len() {
            return Err(Error::InvalidNode {
                index: cursor,
                len: self.posterior.len(),
            });
        }
        self.cursor = cursor;
        Ok(())
    }

    /// Folds one trial's evidence into the belief, using the action policy at
    /// the current cursor. Accumulates in log space and renormalizes.
    pub fn update_posterior<P: ActionPolicy>(&self, policy: &P, ev: &TrialEvidence) -> Result<Self> {
        check_dims(policy, self, ev)?;
        let mut pol = vec![0.0; policy.num_actions()];
        let log_post: Vec<f64> = self
            .posterior
            .iter()
            .enumerate()
            .map(|(target, &p)| {
                policy.fill_policy(self.cursor, target, &mut pol);
                let w: f64 = ev.likelihoods().iter().zip(&pol).map(|(l, q)| l * q).sum();
                p.ln() + w.ln()
            })
            .collect();
        let max = log_post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::ZeroMass);
        }
        let mut posterior: Vec<f64> = log_post.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = posterior.iter().sum();
        posterior.iter_mut().for_each(|p| *p /= total);
        Ok(Self {
            posterior,
            trial: self.trial + 1,
            ..self.clone()
        })
    }
}

fn check_dims<P: ActionPolicy>(policy: &P, state: &PosteriorState, ev: &TrialEvidence) -> Result<()> {
    if policy.num_nodes() != state.posterior.len() {
        return Err(Error::DistributionSize {
            expected: policy.num_nodes(),
            got: state.posterior.len(),
        });
    }
    if ev.len() != policy.num_actions() {
        return Err(Error::EvidenceDimension {
            expected: policy.num_actions(),
            got: ev.len(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDecision {
    pub action: ActionClass,
    /// Normalized score of the decision; compared against the confidence threshold.
    pub confidence: f64,
    /// Normalized score per action class, summing to 1.
    pub per_action_scores: Vec<f64>,
}

impl ActionDecision {
    fn from_scores(action_index: usize, confidence: f64, scores: Vec<f64>) -> Self {
        Self {
            action: ActionClass::from_index(action_index).expect("at most five action classes"),
            confidence,
            per_action_scores: scores,
        }
    }
}

fn normalized(mut v: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let sum: f64 = v.iter().sum();
    if sum.is_nan() || sum <= 0.0 || !sum.is_finite() {
        return Err(Error::ZeroMass);
    }
    v.iter_mut().for_each(|x| *x /= sum);
    Ok((v, sum))
}

/// How the joint decoder turns `J(s, T)` into a confidence.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JointConfidence {
    /// Scores are `max_T J(s, T)` normalized over actions; the confidence is
    /// the largest score.
    #[default]
    MaxMarginal,
    /// The confidence is the share of the single best pair, `max J / sum J`.
    /// Scores are `sum_T J(s, T) / sum J`.
    PeakShare,
}

/// Joint decoder with max-marginal confidence. See [`decide_joint_with`].
pub fn decide_joint<P: ActionPolicy>(policy: &P, state: &PosteriorState, ev: &TrialEvidence) -> Result<ActionDecision> {
    decide_joint_with(policy, state, ev, JointConfidence::MaxMarginal)
}

/// Joint decoder. Scores `J(s, T) = L(s) P(s | T; cursor) post(T)`; the
/// decision is the action of the maximising pair (lowest action, then lowest
/// node, on ties).
pub fn decide_joint_with<P: ActionPolicy>(
    policy: &P,
    state: &PosteriorState,
    ev: &TrialEvidence,
    confidence: JointConfidence,
) -> Result<ActionDecision> {
    check_dims(policy, state, ev)?;
    let n_actions = policy.num_actions();
    let mut pol = vec![0.0; n_actions];
    let mut sums = vec![0.0; n_actions];
    let mut peaks = vec![0.0f64; n_actions];
    for (target, &p) in state.posterior.iter().enumerate() {
        policy.fill_policy(state.cursor, target, &mut pol);
        for s in 0..n_actions {
            let j = ev.likelihoods()[s] * pol[s] * p;
            sums[s] += j;
            peaks[s] = peaks[s].max(j);
        }
    }
    // The best pair's action is the first action holding the largest peak.
    let best = argmax(&peaks);
    match confidence {
        JointConfidence::MaxMarginal => {
            let (scores, _) = normalized(peaks)?;
            Ok(ActionDecision::from_scores(best, scores[best], scores))
        }
        JointConfidence::PeakShare => {
            let peak = peaks[best];
            let (scores, total) = normalized(sums)?;
            Ok(ActionDecision::from_scores(best, peak / total, scores))
        }
    }
}

/// Marginal decoder: `M(s) = L(s) sum_T P(s | T; cursor) post(T)`.
pub fn decide_marginal<P: ActionPolicy>(
    policy: &P,
    state: &PosteriorState,
    ev: &TrialEvidence,
) -> Result<ActionDecision> {
    check_dims(policy, state, ev)?;
    let action_prior = action_prior(policy, state);
    let weights = ev
        .likelihoods()
        .iter()
        .zip(&action_prior)
        .map(|(l, a)| l * a)
        .collect();
    let (scores, _) = normalized(weights)?;
    let best = argmax(&scores);
    Ok(ActionDecision::from_scores(best, scores[best], scores))
}

/// `sum_T P(s | T; cursor) post(T)` for every action.
pub fn action_prior<P: ActionPolicy>(policy: &P, state: &PosteriorState) -> Vec<f64> {
    let mut pol = vec![0.0; policy.num_actions()];
    let mut out = vec![0.0; policy.num_actions()];
    for (target, &p) in state.posterior.iter().enumerate() {
        policy.fill_policy(state.cursor, target, &mut pol);
        for (o, q) in out.iter_mut().zip(&pol) {
            *o += q * p;
        }
    }
    out
}

/// Likelihood-only decoder.
pub fn decide_baseline(ev: &TrialEvidence) -> Result<ActionDecision> {
    let (scores, _) = normalized(ev.likelihoods().to_vec())?;
    let best = argmax(&scores);
    Ok(ActionDecision::from_scores(best, scores[best], scores))
}

pub fn decide<P: ActionPolicy>(
    model: DecisionModel,
    joint_confidence: JointConfidence,
    policy: &P,
    state: &PosteriorState,
    ev: &TrialEvidence,
) -> Result<ActionDecision> {
    match model {
        DecisionModel::Joint => decide_joint_with(policy, state, ev, joint_confidence),
        DecisionModel::Marginal => decide_marginal(policy, state, ev),
        DecisionModel::Baseline => {
            check_dims(policy, state, ev)?;
            decide_baseline(ev)
        }
    }
}

/// Non-recursive product form of the posterior:
/// `prior(T) * prod_i sum_s L_i(s) P(s | T; cursor_i)`, normalized once at the
/// end. Serves as the reference for [`PosteriorState::update_posterior`].
pub fn batch_posterior<P: ActionPolicy>(
    policy: &P,
    prior: &PriorDistribution,
    trajectory: &[(NodeId, TrialEvidence)],
) -> Result<PriorDistribution> {
    let mut pol = vec![0.0; policy.num_actions()];
    let weights: Vec<f64> = (0..prior.len())
        .map(|target| {
            trajectory.iter().fold(prior.probs()[target], |acc, (cursor, ev)| {
                policy.fill_policy(*cursor, target, &mut pol);
                acc * ev.likelihoods().iter().zip(&pol).map(|(l, q)| l * q).sum::<f64>()
            })
        })
        .collect();
    PriorDistribution::from_weights(weights)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Three nodes on a cycle with clockwise / counter-clockwise moves.
    pub(crate) struct Cycle3;

    impl ActionPolicy for Cycle3 {
        fn num_nodes(&self) -> usize {
            3
        }
        fn num_actions(&self) -> usize {
            2
        }
        fn fill_policy(&self, cursor: NodeId, target: NodeId, out: &mut [f64]) {
            match (target + 3 - cursor) % 3 {
                0 => out.copy_from_slice(&[0.5, 0.5]),
                1 => out.copy_from_slice(&[1.0, 0.0]),
                _ => out.copy_from_slice(&[0.0, 1.0]),
            }
        }
    }

    fn uniform_state() -> PosteriorState {
        PosteriorState::init_epoch(&PriorDistribution::uniform(3), 0, SelectionMode::Psc).unwrap()
    }

    fn ev(v: &[f64]) -> TrialEvidence {
        TrialEvidence::new(v.to_vec()).unwrap()
    }

    #[test]
    fn update_on_cycle_matches_hand_computation() {
        let next = uniform_state().update_posterior(&Cycle3, &ev(&[0.8, 0.2])).unwrap();
        let expected = [0.5 / 1.5, 0.8 / 1.5, 0.2 / 1.5];
        for (a, b) in next.posterior().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(next.trial(), 2);
        assert_eq!(next.cursor(), 0);
    }

    #[test]
    fn uniform_and_scaled_evidence() {
        let s = uniform_state().update_posterior(&Cycle3, &ev(&[0.8, 0.2])).unwrap();
        let same = s.update_posterior(&Cycle3, &ev(&[0.3, 0.3])).unwrap();
        for (a, b) in same.posterior().iter().zip(s.posterior()) {
            assert!((a - b).abs() < 1e-15);
        }
        let a = s.update_posterior(&Cycle3, &ev(&[0.8, 0.2])).unwrap();
        let b = s.update_posterior(&Cycle3, &ev(&[5.6, 1.4])).unwrap();
        for (x, y) in a.posterior().iter().zip(b.posterior()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_mass_update_fails() {
        let mut prior = vec![0.0; 3];
        prior[2] = 1.0;
        let s = PosteriorState::init_epoch(&PriorDistribution::new(prior).unwrap(), 0, SelectionMode::Psc)
            .unwrap();
        // Node 2 only explains ccw moves.
        assert!(matches!(s.update_posterior(&Cycle3, &ev(&[1.0, 0.0])), Err(Error::ZeroMass)));
    }

    #[test]
    fn init_rejects_unnormalized_prior() {
        let bad = PriorDistribution::from_weights(vec![1.0, 1.0]).unwrap().into_probs();
        let p = PriorDistribution::new(bad).unwrap();
        assert!(PosteriorState::init_epoch(&p, 0, SelectionMode::Psc).is_ok());
        let raw: PriorDistribution = serde_json::from_str("[0.3, 0.3, 0.3]").unwrap();
        assert!(matches!(
            PosteriorState::init_epoch(&raw, 0, SelectionMode::Psc),
            Err(Error::Unnormalized(_))
        ));
    }

    #[test]
    fn joint_on_cycle() {
        let d = decide_joint_with(&Cycle3, &uniform_state(), &ev(&[0.8, 0.2]), JointConfidence::PeakShare).unwrap();
        assert_eq!(d.action, ActionClass::from_index(0).unwrap());
        assert!((d.confidence - 0.2667 / 0.5).abs() < 1e-3);
        assert!((d.confidence - 8.0 / 15.0).abs() < 1e-12);
        let sum: f64 = d.per_action_scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);

        // Peaks are J(cw, 1) = 0.8/3 and J(ccw, 2) = 0.2/3.
        let d = decide_joint(&Cycle3, &uniform_state(), &ev(&[0.8, 0.2])).unwrap();
        assert_eq!(d.action.index(), 0);
        assert!((d.confidence - 0.8).abs() < 1e-12);
        assert!((d.per_action_scores[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn marginal_on_cycle() {
        let d = decide_marginal(&Cycle3, &uniform_state(), &ev(&[0.8, 0.2])).unwrap();
        assert_eq!(d.action.index(), 0);
        assert!((d.confidence - 0.8).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let d = decide_joint(&Cycle3, &uniform_state(), &ev(&[0.5, 0.5])).unwrap();
        assert_eq!(d.action.index(), 0);
        let d = decide_marginal(&Cycle3, &uniform_state(), &ev(&[0.5, 0.5])).unwrap();
        assert_eq!(d.action.index(), 0);
    }

    #[test]
    fn baseline_examples() {
        let d = decide_baseline(&ev(&[0.8, 0.1, 0.05, 0.05])).unwrap();
        assert_eq!(d.action, ActionClass::Up);
        assert!((d.confidence - 0.8).abs() < 1e-12);
        let d = decide_baseline(&ev(&[1.0; 4])).unwrap();
        assert_eq!(d.action, ActionClass::Up);
        assert!((d.confidence - 0.25).abs() < 1e-12);
        assert!(matches!(decide_baseline(&ev(&[0.0; 4])), Err(Error::ZeroMass)));
    }

    #[test]
    fn batch_matches_single_step_and_empty() {
        let prior = PriorDistribution::uniform(3);
        assert_eq!(batch_posterior(&Cycle3, &prior, &[]).unwrap(), prior);
        let one = batch_posterior(&Cycle3, &prior, &[(0, ev(&[0.8, 0.2]))]).unwrap();
        let rec = uniform_state().update_posterior(&Cycle3, &ev(&[0.8, 0.2])).unwrap();
        for (a, b) in one.probs().iter().zip(rec.posterior()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            uniform_state().update_posterior(&Cycle3, &ev(&[1.0, 1.0, 1.0])),
            Err(Error::EvidenceDimension { .. })
        ));
    }
}
