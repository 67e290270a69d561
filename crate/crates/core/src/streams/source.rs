use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config_err, shape_err, Result};
use crate::netcore::Matrix;
use crate::rng::rng_from;

/// A labeled sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: usize,
}

/// Labeled samples stored as a feature matrix plus class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<usize>, classes: usize) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(shape_err!("{} rows for {} labels", x.rows(), y.len()));
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(config_err!("label {bad} out of range for {classes} classes"));
        }
        x.ensure_finite("dataset")?;
        Ok(Self { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn sample(&self, i: usize) -> Sample {
        Sample { x: self.x.row(i).to_vec(), y: self.y[i] }
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.y {
            counts[y] += 1;
        }
        counts
    }
}

/// Description of the synthetic source distribution: Gaussian class clusters
/// followed by an optional smooth nonlinear warp.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub classes: usize,
    pub dim: usize,
    /// Samples per class in the training split (before imbalance).
    pub per_class: usize,
    /// Norm of the randomly drawn class means.
    pub separation: f64,
    /// Within-class standard deviation inside the class subspace.
    pub sigma: f64,
    /// Dimension of the random subspace holding the class means and the
    /// within-class spread; equal to `dim` for isotropic clusters.
    pub intrinsic_dim: usize,
    /// Standard deviation orthogonal to the class subspace.
    pub ambient_sigma: f64,
    /// Strength of `x_j += warp·sin(x_{π(j)})`; 0 disables the warp.
    pub warp: f64,
    /// Ratio between the most and least frequent class; 1 means balanced.
    pub imbalance: f64,
    /// Explicit class means (`classes × dim`); drawn from the seed when absent.
    pub means: Option<Matrix>,
}

impl Default for SourceSpec {
    fn default() -> Self {
        Self { classes: 10, dim: 32, per_class: 500, separation: 5.0, sigma: 0.5, intrinsic_dim: 4, ambient_sigma: 0.05, warp: 0.5, imbalance: 1.0, means: None }
    }
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim < 2 || self.per_class < 1 {
            return Err(config_err!(
                "source needs at least 2 classes, 2 dims and 1 sample per class (got {}, {}, {})",
                self.classes,
                self.dim,
                self.per_class
            ));
        }
        if self.intrinsic_dim == 0 || self.intrinsic_dim > self.dim {
            return Err(config_err!("intrinsic_dim must lie in 1..={}, got {}", self.dim, self.intrinsic_dim));
        }
        if !(self.sigma >= 0.0 && self.ambient_sigma >= 0.0 && self.separation >= 0.0 && self.warp.is_finite() && self.imbalance >= 1.0) {
            return Err(config_err!("invalid source scale parameters"));
        }
        if let Some(m) = &self.means {
            if m.shape() != (self.classes, self.dim) {
                return Err(shape_err!("means {:?}, expected {:?}", m.shape(), (self.classes, self.dim)));
            }
        }
        Ok(())
    }

    /// Relative class frequencies, geometric between 1 and `1/imbalance`.
    pub fn class_weights(&self) -> Vec<f64> {
        let c = self.classes;
        (0..c)
            .map(|k| libm::pow(self.imbalance, -(k as f64) / (c - 1) as f64))
            .collect()
    }
}

/// A frozen draw of the source distribution's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDomain {
    spec: SourceSpec,
    means: Matrix,
    /// Orthonormal rows; the first `intrinsic_dim` span the class subspace.
    basis: Matrix,
    warp_perm: Vec<usize>,
}

impl SourceDomain {
    pub fn new(spec: &SourceSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng_from(seed, &[0x5eed_d0a1]);
        let basis = if spec.intrinsic_dim == spec.dim {
            Matrix::identity(spec.dim)
        } else {
            random_orthonormal(spec.dim, &mut rng)
        };
        let means = match &spec.means {
            Some(m) => m.clone(),
            None => {
                let k = spec.intrinsic_dim;
                let mut m = Matrix::zeros(spec.classes, spec.dim);
                let mut coef = vec![0.0; k];
                for c in 0..spec.classes {
                    coef.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                    let scale = spec.separation / crate::netcore::l2_norm(&coef).max(1e-12);
                    let row = m.row_mut(c);
                    for (j, a) in coef.iter().enumerate() {
                        for (r, b) in row.iter_mut().zip(basis.row(j)) {
                            *r += scale * a * b;
                        }
                    }
                }
                m
            }
        };
        let mut warp_perm: Vec<usize> = (0..spec.dim).collect();
        warp_perm.shuffle(&mut rng);
        Ok(Self { spec: spec.clone(), means, basis, warp_perm })
    }

    pub fn spec(&self) -> &SourceSpec {
        &self.spec
    }

    pub fn means(&self) -> &Matrix {
        &self.means
    }

    /// Draws one clean input of class `y`.
    pub fn draw<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> Vec<f64> {
        let mut x = self.means.row(y).to_vec();
        for j in 0..self.spec.dim {
            let sd = if j < self.spec.intrinsic_dim { self.spec.sigma } else { self.spec.ambient_sigma };
            let z: f64 = StandardNormal.sample(rng);
            for (v, b) in x.iter_mut().zip(self.basis.row(j)) {
                *v += sd * z * b;
            }
        }
        if self.spec.warp != 0.0 {
            let base = x.clone();
            for (j, v) in x.iter_mut().enumerate() {
                *v += self.spec.warp * libm::sin(base[self.warp_perm[j]]);
            }
        }
        x
    }

    /// Inputs for the given labels.
    pub fn draw_batch<R: Rng + ?Sized>(&self, labels: &[usize], rng: &mut R) -> Matrix {
        let mut x = Matrix::zeros(labels.len(), self.spec.dim);
        for (i, &y) in labels.iter().enumerate() {
            let row = self.draw(y, rng);
            x.row_mut(i).copy_from_slice(&row);
        }
        x
    }

    /// Labels drawn from the class weights.
    pub fn draw_labels<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let weights = self.spec.class_weights();
        let total: f64 = weights.iter().sum();
        (0..n)
            .map(|_| {
                let mut u = rng.random::<f64>() * total;
                for (c, w) in weights.iter().enumerate() {
                    if u < *w {
                        return c;
                    }
                    u -= w;
                }
                weights.len() - 1
            })
            .collect()
    }

    /// A shuffled labeled split with `round(per_class · weight_c)` samples of class `c`.
    pub fn sample_split<R: Rng + ?Sized>(&self, per_class: usize, rng: &mut R) -> Dataset {
        let mut labels = Vec::new();
        for (c, w) in self.spec.class_weights().iter().enumerate() {
            let n = (libm::round(per_class as f64 * w) as usize).max(1);
            labels.extend(core::iter::repeat_n(c, n));
        }
        labels.shuffle(rng);
        let x = self.draw_batch(&labels, rng);
        Dataset { x, y: labels, classes: self.spec.classes }
    }
}

/// Training split of the source distribution for `spec`, deterministic per seed.
pub fn generate_source(spec: &SourceSpec, seed: u64) -> Result<Dataset> {
    let domain = SourceDomain::new(spec, seed)?;
    let mut rng = rng_from(seed, &[0x7a1d]);
    let data = domain.sample_split(spec.per_class, &mut rng);
    if data.x.is_finite() {
        Ok(data)
    } else {
        Err(crate::Error::Numeric(format!("source generation produced non-finite values (seed {seed})")))
    }
}

/// Gram-Schmidt on a Gaussian matrix; rows are orthonormal.
fn random_orthonormal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Matrix {
    let mut q = Matrix::zeros(d, d);
    let mut i = 0;
    while i < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for j in 0..i {
            let proj = crate::netcore::dot(&v, q.row(j));
            v.iter_mut().zip(q.row(j)).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = crate::netcore::l2_norm(&v);
        if norm > 1e-6 {
            q.row_mut(i).iter_mut().zip(&v).for_each(|(a, b)| *a = b / norm);
            i += 1;
        }
    }
    q
}
