//! Synthetic per-trial evidence.
//!
//! Each action class owns an isotropic Gaussian over an `n_classes`-dimensional
//! feature. Synthetic profiles put the mean of class `k` at `delta * e_k`, with
//! `delta` chosen so that single-draw argmax classification hits a target
//! accuracy. A trial draw samples a feature from the true class and reports
//! the class-conditional densities at it, rescaled so the largest is 1.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_TARGET_ACCURACY: f64 = 0.995;
/// Draws used to place `delta` during calibration.
pub const CALIBRATION_DRAWS: usize = 50_000;

/// Class likelihoods `P(X | s = j)` for one trial. Only ratios matter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrialEvidence {
    likelihoods: Vec<f64>,
}

impl TrialEvidence {
    pub fn new(likelihoods: Vec<f64>) -> Result<Self> {
        if likelihoods.is_empty() || likelihoods.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidEvidence);
        }
        Ok(Self { likelihoods })
    }

    pub fn uniform(n_classes: usize) -> Self {
        Self {
            likelihoods: vec![1.0; n_classes],
        }
    }

    pub fn likelihoods(&self) -> &[f64] {
        &self.likelihoods
    }

    pub fn len(&self) -> usize {
        self.likelihoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.likelihoods.is_empty()
    }

    /// Multiplies by a positive constant; downstream results must not change.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            likelihoods: self.likelihoods.iter().map(|l| l * c).collect(),
        }
    }

    /// Combines with an independent draw by elementwise product, rescaled so
    /// the largest entry is 1.
    pub fn fuse(&mut self, other: &TrialEvidence) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::EvidenceDimension {
                expected: self.len(),
                got: other.len(),
            });
        }
        for (a, b) in self.likelihoods.iter_mut().zip(&other.likelihoods) {
            *a *= b;
        }
        let max = self.likelihoods.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for a in &mut self.likelihoods {
                *a = (*a / max).max(f64::MIN_POSITIVE);
            }
        }
        Ok(())
    }

    /// Index of the largest likelihood, lowest index on ties.
    pub fn argmax(&self) -> usize {
        crate::prior::argmax(&self.likelihoods)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationProfile {
    n_classes: usize,
    /// Separation of synthetic class means; `None` for fitted profiles.
    delta: Option<f64>,
    sigma: f64,
    target_accuracy: f64,
    seed: u64,
    means: Vec<Vec<f64>>,
}

impl CalibrationProfile {
    /// Synthetic profile with an explicit separation.
    pub fn with_delta(n_classes: usize, delta: f64, sigma: f64, seed: u64) -> Result<Self> {
        check_shape(n_classes, sigma)?;
        let means = (0..n_classes)
            .map(|k| {
                let mut m = vec![0.0; n_classes];
                m[k] = delta;
                m
            })
            .collect();
        Ok(Self {
            n_classes,
            delta: Some(delta),
            sigma,
            target_accuracy: f64::NAN,
            seed,
            means,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// The accuracy this profile was calibrated (or fitted) to.
    pub fn target_accuracy(&self) -> f64 {
        self.target_accuracy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Samples a feature from class `true_class` and returns the likelihood of
    /// every class at that feature.
    pub fn draw<R: Rng + ?Sized>(&self, true_class: usize, rng: &mut R) -> Result<TrialEvidence> {
        if true_class >= self.n_classes {
            return Err(Error::InvalidClass {
                index: true_class,
                n_classes: self.n_classes,
            });
        }
        let dim = self.means[0].len();
        let x: Vec<f64> = self.means[true_class]
            .iter()
            .map(|m| m + self.sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let inv = 1.0 / (2.0 * self.sigma * self.sigma);
        let loglik: Vec<f64> = self
            .means
            .iter()
            .map(|mean| -inv * (0..dim).map(|i| (x[i] - mean[i]).powi(2)).sum::<f64>())
            .collect();
        let max = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(TrialEvidence {
            likelihoods: loglik
                .iter()
                .map(|l| (l - max).exp().max(f64::MIN_POSITIVE))
                .collect(),
        })
    }

    /// Fraction of `n_samples` draws, true class cycled, whose likelihood
    /// argmax is the true class. Uses a stream derived from the profile seed.
    pub fn estimate_accuracy(&self, n_samples: usize) -> Result<f64> {
        if n_samples == 0 {
            return Err(Error::NoSamples);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xACC0_0000_0000_0001);
        let mut hits = 0usize;
        for i in 0..n_samples {
            let k = i % self.n_classes;
            if self.draw(k, &mut rng)?.argmax() == k {
                hits += 1;
            }
        }
        Ok(hits as f64 / n_samples as f64)
    }
}

fn check_shape(n_classes: usize, sigma: f64) -> Result<()> {
    if n_classes < 2 {
        return Err(Error::TooFewClasses(2));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidSigma(sigma));
    }
    Ok(())
}

/// Builds a synthetic profile whose single-draw accuracy matches
/// `target_accuracy`. Targets above [`MAX_TARGET_ACCURACY`] are clamped with a
/// warning.
///
/// Correct classification of a draw from class `k` happens exactly when
/// `z_k + delta / sigma > max_{j != k} z_j` for the standard-normal noise `z`,
/// so accuracy is the empirical CDF of the gap `max_{j != k} z_j - z_k` at
/// `delta / sigma`. `delta` is located by bisection on that CDF over
/// [`CALIBRATION_DRAWS`] common draws.
pub fn make_profile(
    target_accuracy: f64,
    n_classes: usize,
    sigma: f64,
    seed: u64,
) -> Result<CalibrationProfile> {
    check_shape(n_classes, sigma)?;
    let chance = 1.0 / n_classes as f64;
    if target_accuracy.is_nan() || target_accuracy <= chance {
        return Err(Error::AccuracyAtChance {
            target: target_accuracy,
            chance,
        });
    }
    let target = if target_accuracy > MAX_TARGET_ACCURACY {
        log::warn!(
            "target accuracy {target_accuracy} is unreachable with Gaussian noise; clamped to {MAX_TARGET_ACCURACY}"
        );
        MAX_TARGET_ACCURACY
    } else {
        target_accuracy
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|i| {
            let k = i % n_classes;
            let z: Vec<f64> = (0..n_classes).map(|_| rng.sample(StandardNormal)).collect();
            let rival = z
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, &v)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            rival - z[k]
        })
        .collect();
    gaps.sort_by(f64::total_cmp);
    let accuracy_at = |separation: f64| {
        gaps.partition_point(|&g| g < separation) as f64 / gaps.len() as f64
    };

    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while accuracy_at(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if accuracy_at(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut profile = CalibrationProfile::with_delta(n_classes, hi * sigma, sigma, seed)?;
    profile.target_accuracy = target;
    Ok(profile)
}

/// Fits a profile from calibration scores: per-class mean vectors and a pooled
/// isotropic variance. The CSV has a header and columns
/// `true_class,score_0,...,score_{k-1}`, one row per draw.
pub fn fit_profile_from_csv(path: &Path, seed: u64) -> Result<CalibrationProfile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    fit_profile_from_reader(file, seed)
}

pub fn fit_profile_from_reader<R: std::io::Read>(reader: R, seed: u64) -> Result<CalibrationProfile> {
    let mut csv = csv::Reader::from_reader(reader);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let parse_err = |msg: &str| Error::Parse {
            what: "calibration CSV",
            line: i + 2,
            msg: msg.to_string(),
        };
        let mut fields = record.iter();
        let class: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| parse_err("bad true_class"))?;
        let scores: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err("bad score"))?;
        rows.push((class, scores));
    }
    let dim = rows.first().map(|r| r.1.len()).ok_or(Error::NoSamples)?;
    if dim < 2 {
        return Err(Error::TooFewClasses(2));
    }
    let mut sums = vec![vec![0.0; dim]; dim];
    let mut counts = vec![0usize; dim];
    for (line, (class, scores)) in rows.iter().enumerate() {
        if scores.len() != dim {
            return Err(Error::Parse {
                what: "calibration CSV",
                line: line + 2,
                msg: format!("expected {dim} scores"),
            });
        }
        if *class >= dim {
            return Err(Error::InvalidClass {
                index: *class,
                n_classes: dim,
            });
        }
        counts[*class] += 1;
        for (s, v) in sums[*class].iter_mut().zip(scores) {
            *s += v;
        }
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Config(format!("calibration data has no rows for class {missing}")));
    }
    let means: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
        .collect();
    let sq: f64 = rows
        .iter()
        .map(|(k, x)| x.iter().zip(&means[*k]).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
        .sum();
    let dof = (rows.len() * dim).saturating_sub(dim * dim).max(1);
    let sigma = (sq / dof as f64).sqrt();
    check_shape(dim, sigma)?;
    let mut profile = CalibrationProfile {
        n_classes: dim,
        delta: None,
        sigma,
        target_accuracy: f64::NAN,
        seed,
        means,
    };
    profile.target_accuracy = profile.estimate_accuracy(CALIBRATION_DRAWS)?;
    Ok(profile)
}
