//! Source class prototypes and assembly of the three-view contrastive batch.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::losses::{self, cosine_similarity, LossValue};
use crate::netcore::{l2_norm, BnMode, HeadTape, Matrix, Network, ProjectionHead};

/// Per-class mean of source features. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeBank {
    vectors: Matrix,
    counts: Vec<usize>,
}

impl PrototypeBank {
    /// Runs the encoder in eval mode over the labeled source set and averages
    /// the features of each class.
    pub fn extract(encoder: &mut Network, x: &Matrix, labels: &[usize]) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::Config("prototype extraction needs source samples".into()));
        }
        let features = encoder.encode(x, BnMode::Eval)?;
        Self::from_features(&features, labels, encoder.classes())
    }

    /// Class means of precomputed features. The per-coordinate sums are taken
    /// over sorted values, so the result does not depend on sample order.
    pub fn from_features(features: &Matrix, labels: &[usize], classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(shape_err!("{} feature rows for {} labels", features.rows(), labels.len()));
        }
        if features.rows() == 0 {
            return Err(Error::Config("prototype extraction needs source samples".into()));
        }
        let dim = features.cols();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (i, &y) in labels.iter().enumerate() {
            if y >= classes {
                return Err(shape_err!("label {y} out of range for {classes} classes"));
            }
            members[y].push(i);
        }
        let mut vectors = Matrix::zeros(classes, dim);
        let mut column = Vec::new();
        for (c, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                continue;
            }
            for f in 0..dim {
                column.clear();
                column.extend(idx.iter().map(|&i| features[(i, f)]));
                column.sort_unstable_by(f64::total_cmp);
                vectors[(c, f)] = pairwise_sum(&column) / idx.len() as f64;
            }
        }
        vectors.ensure_finite("prototypes")?;
        Ok(Self { vectors, counts: members.iter().map(Vec::len).collect() })
    }

    /// Rebuilds a bank from stored vectors and counts; rows with count 0 are absent.
    pub fn from_parts(vectors: Matrix, counts: Vec<usize>) -> Result<Self> {
        if vectors.rows() != counts.len() {
            return Err(shape_err!("{} prototype rows for {} counts", vectors.rows(), counts.len()));
        }
        vectors.ensure_finite("prototypes")?;
        Ok(Self { vectors, counts })
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn is_present(&self, class: usize) -> bool {
        self.counts.get(class).is_some_and(|&c| c > 0)
    }

    pub fn prototype(&self, class: usize) -> &[f64] {
        self.vectors.row(class)
    }

    /// Present class with the highest cosine similarity to `feature` (lowest
    /// index on ties). An all-zero query falls back to the Euclidean-nearest
    /// prototype.
    pub fn nearest(&self, feature: &[f64]) -> Result<(usize, &[f64])> {
        if feature.len() != self.dim() {
            return Err(shape_err!("query has {} features, bank has {}", feature.len(), self.dim()));
        }
        let present = (0..self.class_count()).filter(|&c| self.is_present(c));
        let zero_query = l2_norm(feature) == 0.0;
        let mut best: Option<(usize, f64)> = None;
        for c in present {
            let proto = self.prototype(c);
            let score = if zero_query {
                -proto.iter().map(|v| v * v).sum::<f64>()
            } else {
                cosine_similarity(feature, proto)
            };
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((c, score));
            }
        }
        let (c, _) = best.ok_or_else(|| Error::State("prototype bank has no present class".into()))?;
        Ok((c, self.prototype(c)))
    }
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// `3N` projected embeddings ordered as triples `(test_i, aug_i, proto_i)`.
#[derive(Debug, Clone)]
pub struct ContrastiveBatch {
    pub embeddings: Matrix,
    /// Class of the prototype matched to each test sample.
    pub matched: Vec<usize>,
    tapes: [HeadTape; 3],
}

impl ContrastiveBatch {
    /// Number of triples `N`.
    pub fn anchors(&self) -> usize {
        self.matched.len()
    }

    /// `|I| = 3N`.
    pub fn len(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn triple_of(&self, i: usize) -> usize {
        i / 3
    }

    /// The two other members of `i`'s triple.
    pub fn views(&self, i: usize) -> [usize; 2] {
        let base = i - i % 3;
        let mut out = [0; 2];
        for (slot, v) in out.iter_mut().zip((base..base + 3).filter(|&v| v != i)) {
            *slot = v;
        }
        out
    }

    /// Every index except `i`.
    pub fn contrast_set(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&a| a != i)
    }

    pub fn loss(&self, tau: f64) -> Result<LossValue> {
        losses::contrastive_loss(&self.embeddings, tau)
    }

    /// Backpropagates embedding gradients through the projection head
    /// (accumulating its parameter gradients, prototype rows included) and
    /// returns the gradients w.r.t. the test and augmented features.
    pub fn backward(&self, head: &mut ProjectionHead, grad: &Matrix) -> Result<(Matrix, Matrix)> {
        if grad.shape() != self.embeddings.shape() {
            return Err(shape_err!("embedding gradient {:?}, expected {:?}", grad.shape(), self.embeddings.shape()));
        }
        let n = self.anchors();
        let mut parts = Vec::with_capacity(3);
        for (k, tape) in self.tapes.iter().enumerate() {
            let rows: Vec<usize> = (0..n).map(|i| 3 * i + k).collect();
            parts.push(head.backward(tape, &grad.select_rows(&rows)));
        }
        let aug = parts.swap_remove(1);
        let test = parts.swap_remove(0);
        Ok((test, aug))
    }
}

/// Matches each test feature to its nearest source prototype and projects the
/// test, augmented and prototype features with the current projection head.
pub fn build_contrastive_batch(
    test_feats: &Matrix,
    aug_feats: &Matrix,
    bank: &PrototypeBank,
    head: &ProjectionHead,
) -> Result<ContrastiveBatch> {
    if test_feats.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if test_feats.shape() != aug_feats.shape() {
        return Err(shape_err!("test features {:?} vs augmented {:?}", test_feats.shape(), aug_feats.shape()));
    }
    if test_feats.cols() != bank.dim() {
        return Err(Error::Architecture(format!(
            "encoder emits {} features, prototypes have {}",
            test_feats.cols(),
            bank.dim()
        )));
    }
    let n = test_feats.rows();
    let mut matched = Vec::with_capacity(n);
    for row in test_feats.iter_rows() {
        matched.push(bank.nearest(row)?.0);
    }
    let protos = bank.vectors().select_rows(&matched);
    let (zt, tt) = head.project(test_feats)?;
    let (za, ta) = head.project(aug_feats)?;
    let (zp, tp) = head.project(&protos)?;
    let d = zt.cols();
    let mut embeddings = Matrix::zeros(3 * n, d);
    for i in 0..n {
        embeddings.row_mut(3 * i).copy_from_slice(zt.row(i));
        embeddings.row_mut(3 * i + 1).copy_from_slice(za.row(i));
        embeddings.row_mut(3 * i + 2).copy_from_slice(zp.row(i));
    }
    Ok(ContrastiveBatch { embeddings, matched, tapes: [tt, ta, tp] })
}
