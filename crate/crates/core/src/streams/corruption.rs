use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::source::Sample;
use crate::error::{config_err, Error, Result};
use crate::netcore::Matrix;

/// Parametric feature-vector corruptions standing in for image corruptions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorruptionKind {
    GaussianNoise,
    Impulse,
    Smoothing,
    Contrast,
    BrightnessShift,
    FeatureDropout,
    Scaling,
    Rotation2dSubspace,
}

/// Replacement magnitude of impulse-corrupted features.
const IMPULSE_VALUE: f64 = 3.0;

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 8] = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::Impulse,
        CorruptionKind::Smoothing,
        CorruptionKind::Contrast,
        CorruptionKind::BrightnessShift,
        CorruptionKind::FeatureDropout,
        CorruptionKind::Scaling,
        CorruptionKind::Rotation2dSubspace,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CorruptionKind::GaussianNoise => "gaussian_noise",
            CorruptionKind::Impulse => "impulse",
            CorruptionKind::Smoothing => "smoothing",
            CorruptionKind::Contrast => "contrast",
            CorruptionKind::BrightnessShift => "brightness_shift",
            CorruptionKind::FeatureDropout => "feature_dropout",
            CorruptionKind::Scaling => "scaling",
            CorruptionKind::Rotation2dSubspace => "rotation_2d_subspace",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap()
    }

    /// Magnitude at each severity 1..=5. Zero magnitude is the identity for every kind.
    ///
    /// gaussian_noise: noise std; impulse: fraction of features hit;
    /// smoothing: blend weight towards the 3-tap neighbour mean; contrast:
    /// `1 − γ` for `x ← mean + γ(x − mean)`; brightness_shift: additive offset;
    /// feature_dropout: zeroing probability; scaling: amplitude `m` of the
    /// per-feature log-gain profile `x_j ← x_j·exp(m·cos(2πj/d))`;
    /// rotation_2d_subspace: angle in radians applied to coordinate pairs.
    pub fn severity_table(self) -> [f64; 5] {
        match self {
            CorruptionKind::GaussianNoise => [0.1, 0.2, 0.4, 0.6, 0.8],
            CorruptionKind::Impulse => [0.02, 0.04, 0.06, 0.08, 0.10],
            CorruptionKind::Smoothing => [0.2, 0.4, 0.6, 0.8, 1.0],
            CorruptionKind::Contrast => [0.2, 0.4, 0.55, 0.7, 0.8],
            CorruptionKind::BrightnessShift => [0.5, 1.0, 1.5, 2.0, 3.0],
            CorruptionKind::FeatureDropout => [0.05, 0.1, 0.2, 0.3, 0.4],
            CorruptionKind::Scaling => [0.2, 0.4, 0.6, 0.8, 1.0],
            CorruptionKind::Rotation2dSubspace => [0.15, 0.3, 0.5, 0.7, 0.9],
        }
    }

    pub fn magnitude(self, severity: u8) -> Result<f64> {
        match severity {
            1..=5 => Ok(self.severity_table()[severity as usize - 1]),
            _ => Err(config_err!("severity must be 1..=5, got {severity}")),
        }
    }

    /// Corrupts one feature vector in place with an explicit magnitude.
    pub fn apply<R: Rng + ?Sized>(self, x: &mut [f64], magnitude: f64, rng: &mut R) {
        if magnitude == 0.0 {
            return;
        }
        let d = x.len();
        match self {
            CorruptionKind::GaussianNoise => {
                for v in x.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v += magnitude * z;
                }
            }
            CorruptionKind::Impulse => {
                for v in x.iter_mut() {
                    if rng.random::<f64>() < magnitude {
                        *v = if rng.random::<bool>() { IMPULSE_VALUE } else { -IMPULSE_VALUE };
                    }
                }
            }
            CorruptionKind::Smoothing => {
                let src = x.to_vec();
                for j in 0..d {
                    let avg = (src[(j + d - 1) % d] + src[j] + src[(j + 1) % d]) / 3.0;
                    x[j] = (1.0 - magnitude) * src[j] + magnitude * avg;
                }
            }
            CorruptionKind::Contrast => {
                let mean = x.iter().sum::<f64>() / d as f64;
                let gamma = 1.0 - magnitude;
                x.iter_mut().for_each(|v| *v = mean + gamma * (*v - mean));
            }
            CorruptionKind::BrightnessShift => x.iter_mut().for_each(|v| *v += magnitude),
            CorruptionKind::FeatureDropout => {
                for v in x.iter_mut() {
                    if rng.random::<f64>() < magnitude {
                        *v = 0.0;
                    }
                }
            }
            CorruptionKind::Scaling => {
                for (j, v) in x.iter_mut().enumerate() {
                    let phase = 2.0 * core::f64::consts::PI * j as f64 / d as f64;
                    *v *= libm::exp(magnitude * libm::cos(phase));
                }
            }
            CorruptionKind::Rotation2dSubspace => {
                let (s, c) = (libm::sin(magnitude), libm::cos(magnitude));
                for pair in x.chunks_exact_mut(2) {
                    let (a, b) = (pair[0], pair[1]);
                    pair[0] = c * a - s * b;
                    pair[1] = s * a + c * b;
                }
            }
        }
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or_else(|| config_err!("unknown corruption kind `{s}`"))
    }
}

/// A corruption kind at a severity level 1..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionOp {
    kind: CorruptionKind,
    severity: u8,
}

impl CorruptionOp {
    pub fn new(kind: CorruptionKind, severity: u8) -> Result<Self> {
        kind.magnitude(severity)?;
        Ok(Self { kind, severity })
    }

    pub fn kind(&self) -> CorruptionKind {
        self.kind
    }

    pub fn severity(&self) -> u8 {
        self.severity
    }

    pub fn magnitude(&self) -> f64 {
        self.kind.severity_table()[self.severity as usize - 1]
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: &mut [f64], rng: &mut R) {
        self.kind.apply(x, self.magnitude(), rng);
    }

    pub fn apply_batch<R: Rng + ?Sized>(&self, x: &Matrix, rng: &mut R) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.apply(out.row_mut(i), rng);
        }
        out
    }
}

/// Corrupted copy of `sample`; the label is never touched.
pub fn corrupt<R: Rng + ?Sized>(sample: &Sample, op: &CorruptionOp, rng: &mut R) -> Sample {
    let mut x = sample.x.clone();
    op.apply(&mut x, rng);
    Sample { x, y: sample.y }
}
