//! Grid keyboard as a navigation graph.
//!
//! Nodes sit on a `rows x cols` grid, optionally wrapped into a torus so every
//! node has exactly four move-neighbours. The cursor moves with the four
//! arrow actions; `Select` keeps it in place. [`NavGraph::intent_policy`] gives
//! the distribution over actions a user heading for `target` would take from
//! `cursor`, which is shared by the decoder and the simulated user.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a node in row-major order.
pub type NodeId = usize;

/// Space is rendered as `_` in label strings and model files.
pub const SPACE: char = ' ';
/// Backspace is rendered as `<` in label strings and model files.
pub const BACKSPACE: char = '\u{8}';

/// 26 letters, space, backspace and seven punctuation marks.
pub const DEFAULT_LABELS: &str = "abcdefghijklmnopqrstuvwxyz_<.,?'!-:";
pub const DEFAULT_ROWS: usize = 5;
pub const DEFAULT_COLS: usize = 7;

/// Encodes a label as the printable token used in config and model files.
pub fn label_to_token(c: char) -> char {
    match c {
        SPACE => '_',
        BACKSPACE => '<',
        other => other,
    }
}

pub fn token_to_label(c: char) -> char {
    match c {
        '_' => SPACE,
        '<' => BACKSPACE,
        other => other,
    }
}

pub fn decode_tokens(s: &str) -> Vec<char> {
    s.chars().map(token_to_label).collect()
}

pub fn encode_tokens(labels: impl IntoIterator<Item = char>) -> String {
    labels.into_iter().map(label_to_token).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionClass {
    Up,
    Down,
    Left,
    Right,
    Select,
}

impl ActionClass {
    pub const MOVES: [ActionClass; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];
    pub const ALL: [ActionClass; 5] = [Self::Up, Self::Down, Self::Left, Self::Right, Self::Select];

    /// Position of the action in evidence and policy vectors.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn inverse(self) -> Self {
        match self {
            Self::Up => Self::Down,
            Self::Down => Self::Up,
            Self::Left => Self::Right,
            Self::Right => Self::Left,
            Self::Select => Self::Select,
        }
    }

    pub fn is_move(self) -> bool {
        self != Self::Select
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Self::Up => (-1, 0),
            Self::Down => (1, 0),
            Self::Left => (0, -1),
            Self::Right => (0, 1),
            Self::Select => (0, 0),
        }
    }
}

impl fmt::Display for ActionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Up => "up",
            Self::Down => "down",
            Self::Left => "left",
            Self::Right => "right",
            Self::Select => "select",
        };
        f.write_str(s)
    }
}

/// How an epoch is concluded, which also fixes the admissible action set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// The user issues an explicit `Select` action (five classes).
    SelectCommand,
    /// Probabilistic selection from the posterior ratio (four move classes).
    Psc,
}

impl SelectionMode {
    pub fn actions(self) -> &'static [ActionClass] {
        match self {
            Self::SelectCommand => &ActionClass::ALL,
            Self::Psc => &ActionClass::MOVES,
        }
    }

    pub fn num_classes(self) -> usize {
        self.actions().len()
    }

    pub fn admits(self, action: ActionClass) -> bool {
        action.is_move() || self == Self::SelectCommand
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SelectCommand => "select-command",
            Self::Psc => "psc",
        })
    }
}

/// Probabilities over the admissible actions of a mode, indexed by
/// [`ActionClass::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDistribution {
    probs: Vec<f64>,
}

impl PolicyDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, action: ActionClass) -> f64 {
        self.probs.get(action.index()).copied().unwrap_or(0.0)
    }

    /// Actions with nonzero probability.
    pub fn support(&self) -> impl Iterator<Item = ActionClass> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .filter_map(|(i, _)| ActionClass::from_index(i))
    }
}

/// Anything that can say how likely each action class is when the cursor is
/// at `cursor` and the user wants to reach `target`.
///
/// The decoder is generic over this so it can be exercised on graphs other
/// than the grid keyboard.
pub trait ActionPolicy {
    fn num_nodes(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Writes `P(action | target; cursor)` for every action into `out`.
    fn fill_policy(&self, cursor: NodeId, target: NodeId, out: &mut [f64]);
}

#[derive(Clone, Debug)]
pub struct NavGraph {
    rows: usize,
    cols: usize,
    labels: Vec<char>,
    wrap: bool,
    index: HashMap<char, NodeId>,
}

impl NavGraph {
    /// Builds a toroidal grid. Labels are given in row-major order.
    pub fn grid(rows: usize, cols: usize, labels: &[char]) -> Result<Self> {
        Self::new(rows, cols, labels, true)
    }

    pub fn new(rows: usize, cols: usize, labels: &[char], wrap: bool) -> Result<Self> {
        if rows < 3 || cols < 3 {
            return Err(Error::DegenerateGrid { rows, cols });
        }
        if labels.len() != rows * cols {
            return Err(Error::LabelCount {
                rows,
                cols,
                expected: rows * cols,
                got: labels.len(),
            });
        }
        let mut index = HashMap::with_capacity(labels.len());
        for (i, &c) in labels.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::DuplicateLabel(c));
            }
        }
        Ok(Self {
            rows,
            cols,
            labels: labels.to_vec(),
            wrap,
            index,
        })
    }

    /// The 5x7 torus with [`DEFAULT_LABELS`].
    pub fn default_keyboard() -> Self {
        Self::grid(DEFAULT_ROWS, DEFAULT_COLS, &decode_tokens(DEFAULT_LABELS))
            .expect("default keyboard is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn wrap(&self) -> bool {
        self.wrap
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[char] {
        &self.labels
    }

    pub fn label(&self, node: NodeId) -> Result<char> {
        self.labels.get(node).copied().ok_or(Error::InvalidNode {
            index: node,
            len: self.len(),
        })
    }

    pub fn node_of(&self, label: char) -> Result<NodeId> {
        self.index.get(&label).copied().ok_or(Error::UnknownLabel(label))
    }

    pub fn node_at(&self, row: usize, col: usize) -> NodeId {
        row * self.cols + col
    }

    pub fn coords(&self, node: NodeId) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    pub fn check_node(&self, node: NodeId) -> Result<()> {
        if node < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidNode {
                index: node,
                len: self.len(),
            })
        }
    }

    /// Cursor position after `action`. Without wrap, moves off the edge are
    /// blocked and leave the cursor in place.
    pub fn apply_action(&self, cursor: NodeId, action: ActionClass) -> Result<NodeId> {
        self.check_node(cursor)?;
        Ok(self.step(cursor, action))
    }

    fn step(&self, cursor: NodeId, action: ActionClass) -> NodeId {
        let (r, c) = self.coords(cursor);
        let (dr, dc) = action.delta();
        let shift = |v: usize, d: isize, n: usize| -> usize {
            let moved = v as isize + d;
            if self.wrap {
                moved.rem_euclid(n as isize) as usize
            } else {
                moved.clamp(0, n as isize - 1) as usize
            }
        };
        self.node_at(shift(r, dr, self.rows), shift(c, dc, self.cols))
    }

    pub fn neighbors(&self, node: NodeId) -> [NodeId; 4] {
        ActionClass::MOVES.map(|a| self.step(node, a))
    }

    /// Minimal number of moves from `a` to `b`.
    pub fn action_distance(&self, a: NodeId, b: NodeId) -> Result<usize> {
        self.check_node(a)?;
        self.check_node(b)?;
        Ok(self.distance(a, b))
    }

    fn distance(&self, a: NodeId, b: NodeId) -> usize {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        let dr = ra.abs_diff(rb);
        let dc = ca.abs_diff(cb);
        if self.wrap {
            dr.min(self.rows - dr) + dc.min(self.cols - dc)
        } else {
            dr + dc
        }
    }

    /// The node farthest from `target`, lowest index on ties.
    pub fn farthest_from(&self, target: NodeId) -> NodeId {
        (0..self.len())
            .rev()
            .max_by_key(|&v| self.distance(target, v))
            .unwrap_or(target)
    }

    /// Distribution over admissible actions for a user at `cursor` who wants
    /// `target`: uniform over distance-minimising moves when away from the
    /// target; at the target, `Select` with certainty in select-command mode
    /// and uniform over the four moves in PSC mode.
    pub fn intent_policy(
        &self,
        cursor: NodeId,
        target: NodeId,
        mode: SelectionMode,
    ) -> Result<PolicyDistribution> {
        self.check_node(cursor)?;
        self.check_node(target)?;
        let mut probs = vec![0.0; mode.num_classes()];
        self.fill_policy_for(cursor, target, mode, &mut probs);
        Ok(PolicyDistribution { probs })
    }

    fn fill_policy_for(&self, cursor: NodeId, target: NodeId, mode: SelectionMode, out: &mut [f64]) {
        out.fill(0.0);
        if cursor == target {
            match mode {
                SelectionMode::SelectCommand => out[ActionClass::Select.index()] = 1.0,
                SelectionMode::Psc => out[..4].fill(0.25),
            }
            return;
        }
        let dists = self.neighbors(cursor).map(|n| self.distance(n, target));
        let best = *dists.iter().min().expect("four neighbours");
        let count = dists.iter().filter(|&&d| d == best).count() as f64;
        for (slot, &d) in out.iter_mut().zip(dists.iter()) {
            if d == best {
                *slot = 1.0 / count;
            }
        }
    }

    /// This graph viewed as an [`ActionPolicy`] under a selection mode.
    pub fn policy(&self, mode: SelectionMode) -> GridPolicy<'_> {
        GridPolicy { graph: self, mode }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GridPolicy<'a> {
    graph: &'a NavGraph,
    mode: SelectionMode,
}

impl GridPolicy<'_> {
    pub fn mode(&self) -> SelectionMode {
        self.mode
    }
}

impl ActionPolicy for GridPolicy<'_> {
    fn num_nodes(&self) -> usize {
        self.graph.len()
    }

    fn num_actions(&self) -> usize {
        self.mode.num_classes()
    }

    fn fill_policy(&self, cursor: NodeId, target: NodeId, out: &mut [f64]) {
        self.graph.fill_policy_for(cursor, target, self.mode, out);
    }
}
