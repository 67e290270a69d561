use crate::error::Result;
use crate::losses::{self, TotalLoss};
use crate::netcore::{softmax_backward, BnMode, Matrix, Network, OutputGrads};
use crate::prototypes::{build_contrastive_batch, PrototypeBank};

/// Inputs of one RMT update, with the teacher output already computed.
#[derive(Debug, Clone, Copy)]
pub struct RmtInputs<'a> {
    pub x: &'a Matrix,
    pub x_aug: &'a Matrix,
    /// Teacher probabilities on `x`; treated as constants.
    pub teacher_probs: &'a Matrix,
    pub bank: &'a PrototypeBank,
    pub tau: f64,
    pub lambda_cl: f64,
    pub lambda_ce: f64,
    /// Labeled replay batch; `None` in source-free mode.
    pub source: Option<(&'a Matrix, &'a [usize])>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmtObjective {
    pub loss: TotalLoss,
    /// Student logits on the un-augmented batch.
    pub logits: Matrix,
}

/// Evaluates the RMT objective for `student` (batch norm recomputed on every
/// input) and accumulates its gradient into the student's parameters.
///
/// The contrastive double sum enters averaged over its `2·3N` positive pairs.
pub fn rmt_objective(student: &mut Network, inputs: &RmtInputs<'_>) -> Result<RmtObjective> {
    let pass = student.forward(inputs.x, BnMode::Recompute)?;
    let pass_aug = student.forward(inputs.x_aug, BnMode::Recompute)?;
    let p = pass.probs();
    let p_aug = pass_aug.probs();

    let st = losses::self_training_loss(inputs.teacher_probs, &p, &p_aug)?;
    let dz = softmax_backward(&p, &st.grad_p)?;
    let dz_aug = softmax_backward(&p_aug, &st.grad_p_aug)?;

    let contrast = build_contrastive_batch(&pass.features, &pass_aug.features, inputs.bank, &student.head)?;
    let pairs = 2.0 * contrast.len() as f64;
    let cl = contrast.loss(inputs.tau)?;
    let cl_grad = cl.grad.as_ref().unwrap().scale(inputs.lambda_cl / pairs);
    let (d_feat, d_feat_aug) = contrast.backward(&mut student.head, &cl_grad)?;

    student.backward(&pass, OutputGrads { logits: Some(&dz), features: Some(&d_feat), proj: None })?;
    student.backward(&pass_aug, OutputGrads { logits: Some(&dz_aug), features: Some(&d_feat_aug), proj: None })?;

    let source_ce = match inputs.source {
        Some((xs, ys)) => {
            let pass_src = student.forward(xs, BnMode::Recompute)?;
            let ps = pass_src.probs();
            let ce = losses::source_ce(&ps, ys)?;
            let grad = ce.grad.as_ref().unwrap().scale(inputs.lambda_ce);
            let dzs = softmax_backward(&ps, &grad)?;
            student.backward(&pass_src, OutputGrads { logits: Some(&dzs), ..Default::default() })?;
            Some(ce.value)
        }
        None => None,
    };

    let loss = losses::total_loss(st.value, cl.value / pairs, source_ce, inputs.lambda_cl, inputs.lambda_ce);
    Ok(RmtObjective { loss, logits: pass.logits })
}
