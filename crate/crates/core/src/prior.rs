//! Context priors over keyboard nodes.
//!
//! The main source is a character n-gram model with add-alpha smoothing and
//! backoff to shorter contexts. Counts are collected over letters and space
//! only; every other label (backspace, punctuation) gets probability through
//! smoothing alone. [`synthetic_prior`] builds artificial priors that favour
//! or oppose a known target.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{decode_tokens, encode_tokens, NavGraph, NodeId, SPACE};

pub const DEFAULT_ORDER: usize = 6;
pub const DEFAULT_ALPHA: f64 = 0.1;

/// Tolerance when accepting an externally supplied distribution.
const NORMALIZATION_TOL: f64 = 1e-6;

/// A probability per keyboard node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriorDistribution {
    probs: Vec<f64>,
}

impl PriorDistribution {
    /// Validates nonnegativity and normalization (to 1e-6), then renormalizes exactly.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidEvidence);
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Unnormalized(sum));
        }
        Ok(Self::from_weights_unchecked(probs, sum))
    }

    /// Normalizes arbitrary nonnegative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidEvidence);
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(Error::ZeroMass);
        }
        Ok(Self::from_weights_unchecked(weights, sum))
    }

    fn from_weights_unchecked(mut probs: Vec<f64>, sum: f64) -> Self {
        probs.iter_mut().for_each(|p| *p /= sum);
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Most probable node, lowest index on ties.
    pub fn argmax(&self) -> NodeId {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Character n-gram model over a fixed alphabet.
#[derive(Clone, Debug)]
pub struct NgramModel {
    order: usize,
    alpha: f64,
    alphabet: Vec<char>,
    index: HashMap<char, usize>,
    counts: HashMap<Vec<char>, Vec<u64>>,
}

impl NgramModel {
    /// A model with no counts: every conditional is uniform.
    pub fn untrained(order: usize, alpha: f64, alphabet: &[char]) -> Result<Self> {
        if order < 1 {
            return Err(Error::InvalidOrder);
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        let mut index = HashMap::with_capacity(alphabet.len());
        for (i, &c) in alphabet.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::DuplicateLabel(c));
            }
        }
        Ok(Self {
            order,
            alpha,
            alphabet: alphabet.to_vec(),
            index,
            counts: HashMap::new(),
        })
    }

    /// Trains on `corpus` after normalization: lowercased, letters kept,
    /// everything else becomes a single space.
    pub fn train(corpus: &str, order: usize, alpha: f64, alphabet: &[char]) -> Result<Self> {
        let mut model = Self::untrained(order, alpha, alphabet)?;
        model.add_text(corpus);
        Ok(model)
    }

    pub fn train_file(path: &Path, order: usize, alpha: f64, alphabet: &[char]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::train(&text, order, alpha, alphabet)
    }

    fn add_text(&mut self, corpus: &str) {
        let normalized = normalize_corpus(corpus);
        // A symbol outside the alphabet breaks the stream; no context spans it.
        let mut window: Vec<char> = Vec::with_capacity(self.order);
        for c in normalized.chars() {
            let Some(&ci) = self.index.get(&c) else {
                window.clear();
                continue;
            };
            let n = self.alphabet.len();
            for k in 0..=window.len() {
                let ctx = window[window.len() - k..].to_vec();
                self.counts.entry(ctx).or_insert_with(|| vec![0; n])[ci] += 1;
            }
            window.push(c);
            if window.len() >= self.order {
                window.remove(0);
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    /// Raw continuation counts for a context, if it was seen.
    pub fn counts(&self, context: &[char]) -> Option<&[u64]> {
        self.counts.get(context).map(Vec::as_slice)
    }

    /// Smoothed conditional distribution, in alphabet order, for an explicit
    /// context. Unseen contexts back off by dropping their oldest symbol.
    pub fn conditional(&self, context: &[char]) -> Vec<f64> {
        let start = context.len().saturating_sub(self.order - 1);
        let mut ctx = &context[start..];
        loop {
            if let Some(counts) = self.counts.get(ctx) {
                let total: u64 = counts.iter().sum();
                if total > 0 {
                    let denom = total as f64 + self.alpha * self.alphabet.len() as f64;
                    return counts
                        .iter()
                        .map(|&n| (n as f64 + self.alpha) / denom)
                        .collect();
                }
            }
            if ctx.is_empty() {
                return vec![1.0 / self.alphabet.len() as f64; self.alphabet.len()];
            }
            ctx = &ctx[1..];
        }
    }

    /// Prior over the alphabet given typed text. The start of the history is
    /// treated as a word boundary when space is in the alphabet.
    pub fn char_prior(&self, history: &str) -> PriorDistribution {
        let chars: Vec<char> = history.chars().collect();
        // Only the part after the last out-of-alphabet symbol is usable.
        let usable = chars
            .iter()
            .rposition(|c| !self.index.contains_key(c))
            .map_or(0, |p| p + 1);
        let mut context = Vec::with_capacity(self.order);
        if usable == 0 && self.index.contains_key(&SPACE) {
            context.push(SPACE);
        }
        context.extend_from_slice(&chars[usable..]);
        PriorDistribution {
            probs: self.conditional(&context),
        }
    }

    /// Prior over the nodes of `graph`, mapping alphabet symbols to nodes.
    /// Nodes whose label is not in the alphabet get the smoothing floor.
    pub fn node_prior(&self, graph: &NavGraph, history: &str) -> PriorDistribution {
        let cond = self.char_prior(history);
        if graph.labels() == self.alphabet.as_slice() {
            return cond;
        }
        let floor = self.alpha / (self.alpha * self.alphabet.len() as f64 + 1.0);
        let weights = graph
            .labels()
            .iter()
            .map(|c| self.index.get(c).map_or(floor, |&i| cond.probs[i]))
            .collect();
        PriorDistribution::from_weights(weights).expect("positive weights")
    }

    /// Writes the model as a flat text table: a small header, then one line
    /// per context holding the tab-separated context tokens and one count per
    /// alphabet symbol.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# navspell character n-gram model");
        let _ = writeln!(out, "order {}", self.order);
        let _ = writeln!(out, "alpha {}", self.alpha);
        let _ = writeln!(out, "alphabet {}", encode_tokens(self.alphabet.iter().copied()));
        let sorted: BTreeMap<String, &Vec<u64>> = self
            .counts
            .iter()
            .map(|(k, v)| (encode_tokens(k.iter().copied()), v))
            .collect();
        for (ctx, counts) in sorted {
            out.push_str(&ctx);
            out.push('\t');
            let row: Vec<String> = counts.iter().map(u64::to_string).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let parse_err = |line: usize, msg: &str| Error::Parse {
            what: "n-gram model",
            line,
            msg: msg.to_string(),
        };
        let mut order = None;
        let mut alpha = None;
        let mut model: Option<Self> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            if raw.starts_with('#') || raw.trim().is_empty() {
                continue;
            }
            if let Some(m) = model.as_mut() {
                let (ctx, counts) = raw
                    .split_once('\t')
                    .ok_or_else(|| parse_err(line_no, "expected context<TAB>counts"))?;
                let counts: Vec<u64> = counts
                    .split(' ')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| parse_err(line_no, "bad count"))?;
                if counts.len() != m.alphabet.len() {
                    return Err(parse_err(line_no, "count row length differs from alphabet"));
                }
                let ctx = decode_tokens(ctx);
                if ctx.len() >= m.order {
                    return Err(parse_err(line_no, "context longer than order - 1"));
                }
                m.counts.insert(ctx, counts);
                continue;
            }
            let (key, value) = raw
                .split_once(' ')
                .ok_or_else(|| parse_err(line_no, "expected `key value`"))?;
            match key {
                "order" => {
                    order = Some(value.parse().map_err(|_| parse_err(line_no, "bad order"))?)
                }
                "alpha" => {
                    alpha = Some(value.parse().map_err(|_| parse_err(line_no, "bad alpha"))?)
                }
                "alphabet" => {
                    let (Some(o), Some(a)) = (order, alpha) else {
                        return Err(parse_err(line_no, "alphabet before order/alpha"));
                    };
                    model = Some(Self::untrained(o, a, &decode_tokens(value))?);
                }
                _ => return Err(parse_err(line_no, "unknown header key")),
            }
        }
        model.ok_or_else(|| parse_err(0, "missing header"))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_table()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_table(&text)
    }
}

/// Lowercases, keeps letters, and collapses every other run into one space.
pub fn normalize_corpus(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last_space = true;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_ascii_lowercase() {
            out.push(c);
            last_space = false;
        } else if !last_space {
            out.push(SPACE);
            last_space = true;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorBias {
    Favor,
    Oppose,
}

/// Artificial prior that puts `strength` on the target (favor) or on the node
/// farthest from it (oppose), spreading the rest evenly over the other nodes.
/// Strength 0 disables the bias and yields the uniform prior.
pub fn synthetic_prior(
    graph: &NavGraph,
    target: NodeId,
    bias: PriorBias,
    strength: f64,
) -> Result<PriorDistribution> {
    graph.check_node(target)?;
    if !(0.0..1.0).contains(&strength) {
        return Err(Error::InvalidStrength(strength));
    }
    let n = graph.len();
    if strength == 0.0 {
        return Ok(PriorDistribution::uniform(n));
    }
    let peak = match bias {
        PriorBias::Favor => target,
        PriorBias::Oppose => graph.farthest_from(target),
    };
    let rest = (1.0 - strength) / (n - 1) as f64;
    let mut probs = vec![rest; n];
    probs[peak] = strength;
    Ok(PriorDistribution { probs })
}

/// Difficulty level (1..=5) of the word at `index` in the ten-word session;
/// it rises by one every two words.
pub fn word_difficulty(index: usize) -> Result<u8> {
    if index >= 10 {
        return Err(Error::WordIndex(index));
    }
    Ok((index / 2 + 1) as u8)
}
