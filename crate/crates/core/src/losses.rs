//! Self-training, contrastive and supervised losses.
//!
//! Probability inputs are clamped to `[PROB_FLOOR, 1]` before any logarithm;
//! gradients are taken through the clamp (zero where it is active). Batch
//! losses are means over rows except the contrastive loss, which is the plain
//! double sum over anchors and their positive views. Targets (`q`) are treated
//! as constants: no gradient is returned for them.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config_err, shape_err, Error, Result};
use crate::netcore::{dot, l2_norm, Matrix};

/// Lower clamp for probabilities fed to a logarithm.
pub const PROB_FLOOR: f64 = 1e-7;

/// Norm floor used when normalizing embeddings for cosine similarity.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Gradient w.r.t. the differentiated input (student probabilities or embeddings).
    pub grad: Option<Matrix>,
}

impl LossValue {
    pub fn scalar(value: f64) -> Self {
        Self { value, grad: None }
    }
}

#[inline]
fn clamp_prob(v: f64) -> f64 {
    v.clamp(PROB_FLOOR, 1.0)
}

#[inline]
fn clamp_active(v: f64) -> bool {
    !(PROB_FLOOR..=1.0).contains(&v)
}

fn same_shape(a: &Matrix, b: &Matrix, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err!("{what}: {:?} vs {:?}", a.shape(), b.shape()));
    }
    if a.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(())
}

/// Row-mean of `−Σ_c a_c log b_c` on clamped inputs. `grad_b` / `grad_a`
/// select which argument to differentiate.
fn cross_term(a: &Matrix, b: &Matrix, grad_a: bool, grad_b: bool) -> (f64, Matrix) {
    let n = a.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(a.rows(), a.cols());
    for i in 0..a.rows() {
        let mut row = 0.0;
        for c in 0..a.cols() {
            let (ac, bc) = (a[(i, c)], b[(i, c)]);
            let log_b = libm::log(clamp_prob(bc));
            row -= clamp_prob(ac) * log_b;
            let mut g = 0.0;
            if grad_a && !clamp_active(ac) {
                g -= log_b;
            }
            if grad_b && !clamp_active(bc) {
                g -= clamp_prob(ac) / clamp_prob(bc);
            }
            grad[(i, c)] = g / n;
        }
        total += row;
    }
    (total / n, grad)
}

/// `−Σ_c q_c log p_c`, mean over rows; gradient w.r.t. `p`.
pub fn cross_entropy(q: &Matrix, p: &Matrix) -> Result<LossValue> {
    same_shape(q, p, "cross_entropy")?;
    let (value, grad) = cross_term(q, p, false, true);
    Ok(LossValue { value, grad: Some(grad) })
}

/// `−Σ_c p_c log q_c`, mean over rows; gradient w.r.t. `p`.
pub fn reverse_cross_entropy(q: &Matrix, p: &Matrix) -> Result<LossValue> {
    same_shape(q, p, "reverse_cross_entropy")?;
    let (value, grad) = cross_term(p, q, true, false);
    Ok(LossValue { value, grad: Some(grad) })
}

/// Cross-entropy plus reverse cross-entropy; symmetric in its arguments.
pub fn symmetric_cross_entropy(q: &Matrix, p: &Matrix) -> Result<LossValue> {
    let ce = cross_entropy(q, p)?;
    let rce = reverse_cross_entropy(q, p)?;
    let grad = ce.grad.unwrap().add(&rce.grad.unwrap())?;
    Ok(LossValue { value: ce.value + rce.value, grad: Some(grad) })
}

fn open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} is outside (0, 1)")))
    }
}

/// Binary cross-entropy `−q log p − (1−q) log(1−p)`.
pub fn binary_ce_value(p: f64, q: f64) -> Result<f64> {
    open_unit("p", p)?;
    open_unit("q", q)?;
    Ok(-q * libm::log(p) - (1.0 - q) * libm::log(1.0 - p))
}

/// Binary symmetric cross-entropy (CE plus the reverse term).
pub fn binary_sce_value(p: f64, q: f64) -> Result<f64> {
    let rce = -p * libm::log(q) - (1.0 - p) * libm::log(1.0 - q);
    Ok(binary_ce_value(p, q)? + rce)
}

/// `∂L_CE/∂p = (p − q) / (p − p²)` for the binary case.
pub fn binary_ce_grad(p: f64, q: f64) -> Result<f64> {
    open_unit("p", p)?;
    open_unit("q", q)?;
    Ok((p - q) / (p - p * p))
}

/// `∂L_SCE/∂p = ∂L_CE/∂p + log(1/q − 1)` for the binary case.
pub fn binary_sce_grad(p: f64, q: f64) -> Result<f64> {
    Ok(binary_ce_grad(p, q)? + libm::log(1.0 / q - 1.0))
}

/// Gradient of the reverse cross-entropy w.r.t. the student logits,
/// `p_j (Σ_c p_c log q_c − log q_j)`, with `p = softmax(z)` and clamped `q`.
pub fn rce_logit_grad(p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
    if p.len() != q.len() || p.is_empty() {
        return Err(shape_err!("rce_logit_grad: {} vs {} classes", p.len(), q.len()));
    }
    let log_q: Vec<f64> = q.iter().map(|&v| libm::log(clamp_prob(v))).collect();
    let mixed = dot(p, &log_q);
    Ok(p.iter().zip(&log_q).map(|(pj, lq)| pj * (mixed - lq)).collect())
}

/// Self-training loss on the clean and augmented student views.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainingLoss {
    pub value: f64,
    pub grad_p: Matrix,
    pub grad_p_aug: Matrix,
}

/// `¼·(SCE(q, p) + SCE(q, p_aug))`.
pub fn self_training_loss(q: &Matrix, p: &Matrix, p_aug: &Matrix) -> Result<SelfTrainingLoss> {
    let clean = symmetric_cross_entropy(q, p)?;
    let aug = symmetric_cross_entropy(q, p_aug)?;
    Ok(SelfTrainingLoss {
        value: 0.25 * (clean.value + aug.value),
        grad_p: clean.grad.unwrap().scale(0.25),
        grad_p_aug: aug.grad.unwrap().scale(0.25),
    })
}

/// Mean Shannon entropy of the rows of `p`.
pub fn entropy(p: &Matrix) -> Result<LossValue> {
    if p.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let n = p.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        for c in 0..p.cols() {
            let v = p[(i, c)];
            let lv = libm::log(clamp_prob(v));
            total -= clamp_prob(v) * lv;
            if !clamp_active(v) {
                grad[(i, c)] = -(lv + 1.0) / n;
            }
        }
    }
    Ok(LossValue { value: total / n, grad: Some(grad) })
}

/// Supervised cross-entropy against class indices, mean over rows; gradient w.r.t. `p`.
pub fn source_ce(p: &Matrix, labels: &[usize]) -> Result<LossValue> {
    if p.rows() != labels.len() {
        return Err(shape_err!("source_ce: {} rows, {} labels", p.rows(), labels.len()));
    }
    if p.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let n = p.rows() as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(p.rows(), p.cols());
    for (i, &y) in labels.iter().enumerate() {
        if y >= p.cols() {
            return Err(shape_err!("label {y} out of range for {} classes", p.cols()));
        }
        let v = p[(i, y)];
        total -= libm::log(clamp_prob(v));
        if !clamp_active(v) {
            grad[(i, y)] = -1.0 / (clamp_prob(v) * n);
        }
    }
    Ok(LossValue { value: total / n, grad: Some(grad) })
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (l2_norm(a).max(NORM_FLOOR) * l2_norm(b).max(NORM_FLOOR))
}

/// Multi-view contrastive loss over `3N` embeddings laid out as consecutive
/// triples `(test_i, aug_i, proto_i)`.
///
/// For every anchor `i` and each of the two other members `v` of its triple,
/// adds `−log( exp(sim(z_i, z_v)/τ) / Σ_{a≠i} exp(sim(z_i, z_a)/τ) )`, where
/// `sim` is the cosine similarity. The gradient is w.r.t. every embedding row.
pub fn contrastive_loss(embeddings: &Matrix, tau: f64) -> Result<LossValue> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(config_err!("temperature must be positive, got {tau}"));
    }
    let m = embeddings.rows();
    if m == 0 {
        return Err(Error::EmptyBatch);
    }
    if !m.is_multiple_of(3) {
        return Err(shape_err!("contrastive batch has {m} rows, not a multiple of 3"));
    }
    let norms: Vec<f64> = embeddings.iter_rows().map(l2_norm).collect();
    let mut unit = embeddings.clone();
    for (i, &n) in norms.iter().enumerate() {
        let d = n.max(NORM_FLOOR);
        unit.row_mut(i).iter_mut().for_each(|v| *v /= d);
    }
    let sims = unit.matmul_t(&unit)?;

    let mut value = 0.0;
    // dL/ds_ia for the scaled similarities s = sim / τ
    let mut g = Matrix::zeros(m, m);
    let mut weights = vec![0.0; m];
    for i in 0..m {
        let base = i - i % 3;
        let max = (0..m).filter(|&a| a != i).map(|a| sims[(i, a)] / tau).fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for a in 0..m {
            weights[a] = if a == i { 0.0 } else { libm::exp(sims[(i, a)] / tau - max) };
            denom += weights[a];
        }
        let lse = max + libm::log(denom);
        for v in (base..base + 3).filter(|&v| v != i) {
            value += lse - sims[(i, v)] / tau;
            g[(i, v)] -= 1.0;
        }
        for a in (0..m).filter(|&a| a != i) {
            g[(i, a)] += 2.0 * weights[a] / denom;
        }
    }

    // s_ia = u_i·u_a / τ  ⇒  dL/du = (G + Gᵀ) U / τ
    let sym = g.add(&g.transpose())?;
    let mut du = sym.matmul(&unit)?;
    du.scale_in_place(1.0 / tau);
    let mut grad = Matrix::zeros(m, embeddings.cols());
    for (i, &n) in norms.iter().enumerate() {
        let u = unit.row(i);
        let d = du.row(i);
        let out = grad.row_mut(i);
        if n > NORM_FLOOR {
            let proj = dot(u, d);
            for ((o, &dj), &uj) in out.iter_mut().zip(d).zip(u) {
                *o = (dj - uj * proj) / n;
            }
        } else {
            for (o, &dj) in out.iter_mut().zip(d) {
                *o = dj / NORM_FLOOR;
            }
        }
    }
    Ok(LossValue { value, grad: Some(grad) })
}

/// Breakdown of the combined objective for one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalLoss {
    pub self_training: f64,
    pub contrastive: f64,
    /// `None` in source-free mode.
    pub source_ce: Option<f64>,
    pub total: f64,
}

/// `L_ST + λ_CL·L_CL + λ_CE·L_CE^S`; the source term is dropped when absent.
pub fn total_loss(l_st: f64, l_cl: f64, l_ce_s: Option<f64>, lambda_cl: f64, lambda_ce: f64) -> TotalLoss {
    let mut total = l_st + lambda_cl * l_cl;
    if let Some(ce) = l_ce_s {
        total += lambda_ce * ce;
    }
    TotalLoss { self_training: l_st, contrastive: l_cl, source_ce: l_ce_s, total }
}
