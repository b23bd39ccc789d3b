//! One live typing session: the user declares each intended action, the
//! server synthesizes evidence for it and runs the decoder.

use std::sync::Arc;

use navspell_core::epoch::{advance, run_trial, Conclusion, EpochConfig};
use navspell_core::evidence::{make_profile, CalibrationProfile, MAX_TARGET_ACCURACY};
use navspell_core::graph::{label_to_token, ActionClass, NavGraph, NodeId, SelectionMode, BACKSPACE};
use navspell_core::inference::{DecisionModel, PosteriorState};
use navspell_core::prior::{NgramModel, PriorDistribution};
use navspell_core::sim::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Graph, language model and defaults shared by every session.
#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub graph: Arc<NavGraph>,
    /// `None` gives every epoch a uniform prior.
    pub lm: Option<Arc<NgramModel>>,
    pub start: NodeId,
    pub sigma: f64,
    pub epoch: EpochConfig,
}

impl ServiceConfig {
    pub fn from_run_config(cfg: &navspell_core::config::RunConfig) -> navspell_core::Result<Self> {
        let graph = cfg.build_graph()?;
        let lm = match cfg.lm.prior {
            navspell_core::config::PriorKind::Uniform => None,
            navspell_core::config::PriorKind::Language => Some(Arc::new(cfg.build_language_model(&graph)?)),
        };
        Ok(Self {
            start: cfg.start_node(&graph)?,
            graph: Arc::new(graph),
            lm,
            sigma: cfg.profiles.sigma,
            epoch: cfg.epoch.clone(),
        })
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self::from_run_config(&navspell_core::config::RunConfig::default()).expect("default configuration is valid")
    }
}

/// Client-supplied session settings. Missing fields take the service
/// defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub model: Option<DecisionModel>,
    pub criterion: Option<SelectionMode>,
    pub accuracy: Option<f64>,
    pub psc_threshold: Option<f64>,
    pub confidence_threshold: Option<f64>,
    pub max_repetitions: Option<u32>,
    pub seed: Option<u64>,
}

pub const DEFAULT_ACCURACY: f64 = 0.85;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// Settings after validation; everything a session needs to be rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionSettings {
    pub model: DecisionModel,
    pub criterion: SelectionMode,
    pub accuracy: f64,
    pub psc_threshold: f64,
    pub confidence_threshold: f64,
    pub max_repetitions: u32,
    pub seed: u64,
}

impl CreateSession {
    pub fn validate(&self, defaults: &EpochConfig) -> Result<SessionSettings, Vec<FieldError>> {
        let mut errors = Vec::new();
        let mut bad = |field: &str, message: String| {
            errors.push(FieldError {
                field: field.into(),
                message,
            })
        };
        let criterion = self.criterion.unwrap_or(defaults.criterion);
        let accuracy = self.accuracy.unwrap_or(DEFAULT_ACCURACY);
        let chance = 1.0 / criterion.num_classes() as f64;
        if !(accuracy > chance && accuracy <= 1.0) {
            bad(
                "accuracy",
                format!("must lie in ({chance}, 1] for {criterion} mode, got {accuracy}"),
            );
        }
        let psc_threshold = self.psc_threshold.unwrap_or(defaults.psc_threshold);
        if !(psc_threshold.is_finite() && psc_threshold > 1.0) {
            bad("psc_threshold", format!("must be a finite number above 1, got {psc_threshold}"));
        }
        let confidence_threshold = self.confidence_threshold.unwrap_or(defaults.confidence_threshold);
        if !(0.0..=1.0).contains(&confidence_threshold) {
            bad(
                "confidence_threshold",
                format!("must lie in [0, 1], got {confidence_threshold}"),
            );
        }
        let max_repetitions = self.max_repetitions.unwrap_or(defaults.max_repetitions);
        if max_repetitions == 0 {
            bad("max_repetitions", "must be at least 1".into());
        }
        if !errors.is_empty() {
            return Err(errors);
        }
        Ok(SessionSettings {
            model: self.model.unwrap_or(defaults.model),
            criterion,
            accuracy: accuracy.min(MAX_TARGET_ACCURACY),
            psc_threshold,
            confidence_threshold,
            max_repetitions,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CursorView {
    pub row: usize,
    pub col: usize,
    /// Label token: `_` for space, `<` for backspace.
    pub label: String,
}

/// The message sent after every trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialUpdate {
    pub cursor: CursorView,
    /// Belief over nodes, row-major. After a selection this is the prior of
    /// the next epoch.
    pub posterior: Vec<f64>,
    pub decided_action: ActionClass,
    pub confidence: f64,
    pub repetitions: u32,
    /// Evidence time of this trial.
    pub elapsed_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_char: Option<String>,
    pub typed_text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concluded_by: Option<Conclusion>,
    pub intent: ActionClass,
    pub epoch: u64,
    pub trial: u32,
    pub total_elapsed_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<String>,
}

/// Full session state as returned by the REST endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub settings: SessionSettings,
    pub grid: GridView,
    pub cursor: CursorView,
    pub posterior: Vec<f64>,
    pub typed_text: String,
    pub total_elapsed_s: f64,
    pub epoch: u64,
    pub trial: u32,
    /// Every intent received so far; with the seed this reproduces the state.
    pub intents: Vec<ActionClass>,
}

#[derive(Debug)]
pub enum IntentError {
    Inadmissible(ActionClass, SelectionMode),
    Decode(navspell_core::Error),
}

impl std::fmt::Display for IntentError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Inadmissible(a, m) => write!(f, "action {a} is not available in {m} mode"),
            Self::Decode(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for IntentError {}

pub struct Session {
    id: String,
    settings: SessionSettings,
    service: ServiceConfig,
    epoch_cfg: EpochConfig,
    profile: CalibrationProfile,
    rng: ChaCha8Rng,
    state: PosteriorState,
    typed: Vec<char>,
    draws: u64,
    epoch: u64,
    trial: u32,
    intents: Vec<ActionClass>,
}

impl Session {
    pub fn new(id: String, settings: SessionSettings, service: ServiceConfig) -> navspell_core::Result<Self> {
        let epoch_cfg = EpochConfig {
            model: settings.model,
            criterion: settings.criterion,
            confidence_threshold: settings.confidence_threshold,
            psc_threshold: settings.psc_threshold,
            max_repetitions: settings.max_repetitions,
            ..service.epoch.clone()
        };
        let profile = make_profile(
            settings.accuracy,
            settings.criterion.num_classes(),
            service.sigma,
            derive_seed(settings.seed, &[1]),
        )?;
        let rng = ChaCha8Rng::seed_from_u64(derive_seed(settings.seed, &[2]));
        let prior = epoch_prior(&service, "");
        let state = PosteriorState::init_epoch(&prior, service.start, settings.criterion)?;
        Ok(Self {
            id,
            settings,
            service,
            epoch_cfg,
            profile,
            rng,
            state,
            typed: Vec::new(),
            draws: 0,
            epoch: 0,
            trial: 0,
            intents: Vec::new(),
        })
    }

    /// Rebuilds a session by feeding it the recorded intents again.
    pub fn replay(
        id: String,
        settings: SessionSettings,
        service: ServiceConfig,
        intents: &[ActionClass],
    ) -> Result<(Self, Vec<TrialUpdate>), IntentError> {
        let mut s = Self::new(id, settings, service).map_err(IntentError::Decode)?;
        let updates = intents
            .iter()
            .map(|&a| s.intent(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((s, updates))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    /// Runs one trial with `action` as the true intent.
    pub fn intent(&mut self, action: ActionClass) -> Result<TrialUpdate, IntentError> {
        let mode = self.settings.criterion;
        if !mode.admits(action) {
            return Err(IntentError::Inadmissible(action, mode));
        }
        let graph = Arc::clone(&self.service.graph);
        let policy = graph.policy(mode);
        let outcome = run_trial(&policy, &self.state, &self.profile, action, &self.epoch_cfg, &mut self.rng)
            .map_err(IntentError::Decode)?;
        self.intents.push(action);
        self.draws += u64::from(outcome.repetitions);
        self.trial += 1;
        let decided = outcome.decision.action;
        let mut concluded = advance(
            &graph,
            &policy,
            &mut self.state,
            decided,
            &outcome.fused_evidence,
            &self.epoch_cfg,
        )
        .map_err(IntentError::Decode)?;
        if concluded.is_none() && self.trial >= self.epoch_cfg.max_trials_per_epoch {
            concluded = Some(Conclusion::TrialCap);
        }

        let mut selected_char = None;
        if concluded.is_some() {
            let node = self.state.cursor();
            let label = graph.label(node).map_err(IntentError::Decode)?;
            if label == BACKSPACE {
                self.typed.pop();
            } else {
                self.typed.push(label);
            }
            selected_char = Some(label_to_token(label).to_string());
            let history: String = self.typed.iter().collect();
            let prior = epoch_prior(&self.service, &history);
            self.epoch += 1;
            self.trial = 0;
            self.state = PosteriorState::init_epoch(&prior, node, mode)
                .map_err(IntentError::Decode)?
                .with_epoch_id(self.epoch);
        }
        Ok(TrialUpdate {
            cursor: self.cursor_view(),
            posterior: self.state.posterior().to_vec(),
            decided_action: decided,
            confidence: outcome.decision.confidence,
            repetitions: outcome.repetitions,
            elapsed_s: outcome.elapsed_s,
            selected_char,
            typed_text: self.typed_text(),
            concluded_by: concluded,
            intent: action,
            epoch: self.epoch,
            trial: self.trial,
            total_elapsed_s: self.total_elapsed_s(),
        })
    }

    pub fn typed_text(&self) -> String {
        self.typed.iter().collect()
    }

    pub fn total_elapsed_s(&self) -> f64 {
        self.draws as f64 * self.epoch_cfg.seconds_per_draw
    }

    fn cursor_view(&self) -> CursorView {
        let g = &self.service.graph;
        let node = self.state.cursor();
        let (row, col) = g.coords(node);
        CursorView {
            row,
            col,
            label: label_to_token(g.labels()[node]).to_string(),
        }
    }

    pub fn view(&self) -> SessionView {
        let g = &self.service.graph;
        SessionView {
            id: self.id.clone(),
            settings: self.settings.clone(),
            grid: GridView {
                rows: g.rows(),
                cols: g.cols(),
                labels: g.labels().iter().map(|&c| label_to_token(c).to_string()).collect(),
            },
            cursor: self.cursor_view(),
            posterior: self.state.posterior().to_vec(),
            typed_text: self.typed_text(),
            total_elapsed_s: self.total_elapsed_s(),
            epoch: self.epoch,
            trial: self.trial,
            intents: self.intents.clone(),
        }
    }
}

fn epoch_prior(service: &ServiceConfig, history: &str) -> PriorDistribution {
    match &service.lm {
        Some(lm) => lm.node_prior(&service.graph, history),
        None => PriorDistribution::uniform(service.graph.len()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_service() -> ServiceConfig {
        ServiceConfig {
            lm: None,
            ..ServiceConfig::default()
        }
    }

    fn settings(criterion: SelectionMode, accuracy: f64, seed: u64) -> SessionSettings {
        CreateSession {
            criterion: Some(criterion),
            accuracy: Some(accuracy),
            seed: Some(seed),
            ..Default::default()
        }
        .validate(&EpochConfig::default())
        .unwrap()
    }

    #[test]
    fn validation_reports_each_bad_field() {
        let errs = CreateSession {
            accuracy: Some(1.5),
            psc_threshold: Some(0.5),
            confidence_threshold: Some(-0.1),
            ..Default::default()
        }
        .validate(&EpochConfig::default())
        .unwrap_err();
        let fields: Vec<_> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["accuracy", "psc_threshold", "confidence_threshold"]);
    }

    #[test]
    fn accuracy_at_chance_is_rejected_per_mode() {
        let req = |c| CreateSession {
            criterion: Some(c),
            accuracy: Some(0.22),
            ..Default::default()
        };
        assert!(req(SelectionMode::Psc).validate(&EpochConfig::default()).is_err());
        assert!(req(SelectionMode::SelectCommand).validate(&EpochConfig::default()).is_ok());
    }

    #[test]
    fn near_perfect_right_moves_one_column() {
        let mut s = Session::new("t".into(), settings(SelectionMode::SelectCommand, 0.995, 3), uniform_service()).unwrap();
        let before = s.view().cursor;
        let u = s.intent(ActionClass::Right).unwrap();
        assert_eq!(u.decided_action, ActionClass::Right);
        assert_eq!(u.cursor.row, before.row);
        assert_eq!(u.cursor.col, (before.col + 1) % 7);
        assert!(u.selected_char.is_none());
    }

    #[test]
    fn select_in_psc_mode_is_an_error() {
        let mut s = Session::new("t".into(), settings(SelectionMode::Psc, 0.9, 1), uniform_service()).unwrap();
        assert!(matches!(s.intent(ActionClass::Select), Err(IntentError::Inadmissible(..))));
        assert!(s.view().intents.is_empty());
    }

    #[test]
    fn psc_selects_when_prior_already_concentrated() {
        // A one-letter corpus makes the LM all but certain of the next char.
        let graph = NavGraph::default_keyboard();
        let lm = NgramModel::train("d d d d d d d d d d", 2, 0.0001, graph.labels()).unwrap();
        let d = graph.node_of('d').unwrap();
        let service = ServiceConfig {
            lm: Some(Arc::new(lm)),
            start: graph.apply_action(d, ActionClass::Left).unwrap(),
            ..ServiceConfig::default()
        };
        let mut s = Session::new("t".into(), settings(SelectionMode::Psc, 0.995, 2), service).unwrap();
        let u = s.intent(ActionClass::Right).unwrap();
        assert_eq!(u.selected_char.as_deref(), Some("d"));
        assert_eq!(u.concluded_by, Some(Conclusion::Psc));
        assert_eq!(u.typed_text, "d");
    }

    #[test]
    fn selecting_types_and_resets_the_epoch() {
        let mut s = Session::new("t".into(), settings(SelectionMode::SelectCommand, 0.995, 4), ServiceConfig::default()).unwrap();
        let u = s.intent(ActionClass::Select).unwrap();
        assert_eq!(u.decided_action, ActionClass::Select);
        assert_eq!(u.concluded_by, Some(Conclusion::SelectCommand));
        assert_eq!(u.selected_char.as_deref(), Some(u.cursor.label.as_str()));
        assert_eq!(u.epoch, 1);
        assert_eq!(u.trial, 0);
        let sum: f64 = u.posterior.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn replay_reproduces_state() {
        let intents = [
            ActionClass::Right,
            ActionClass::Up,
            ActionClass::Select,
            ActionClass::Left,
            ActionClass::Select,
        ];
        let st = settings(SelectionMode::SelectCommand, 0.7, 9);
        let mut live = Session::new("a".into(), st.clone(), ServiceConfig::default()).unwrap();
        let streamed: Vec<_> = intents.iter().map(|&a| live.intent(a).unwrap()).collect();
        let (again, replayed) = Session::replay("a".into(), st, ServiceConfig::default(), &intents).unwrap();
        assert_eq!(streamed, replayed);
        assert_eq!(live.view(), again.view());
    }
}
