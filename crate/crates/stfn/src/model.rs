//! The full two-stream fusion model.
//!
//! A model takes one `(batch, segments, dim)` feature sequence per modality
//! and produces per-class scores. Depending on the architecture variant the
//! streams pass through per-stream block stages around a fusion point
//! (`TwoStageFused`, `SingleStageFused`) or are concatenated on the feature
//! axis and processed as one stream (`ConcatFirst`).
//!
//! Prediction heads pool over the segment axis (temporal mean), apply an
//! affine map and a softmax. Two-head variants sum the two probability
//! rows, so their score rows sum to 2; `ConcatFirst` rows sum to 1. The
//! loss is cross-entropy on the normalized score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{wire, wire_backward, ArchVariant, FusionDirection, FusionOp, WireCtx};
use crate::layers::{softmax, softmax_backward, Affine, AffineCtx, Mode};
use crate::res_inc::{stack_backward, stack_forward, ResIncBlock, StackCtx};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Per-segment feature dimension d; must be divisible by 4.
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Segments per video (the temporal length every sequence must have).
    pub num_segments: usize,
    pub variant: ArchVariant,
    pub fusion_op: FusionOp,
    pub direction: FusionDirection,
    /// Res-Inc blocks per stage per stream.
    pub blocks_per_stage: usize,
}

impl ModelConfig {
    /// Defaults: 5 segments, two-stage architecture, average fusion,
    /// bidirectional wiring, one block per stage.
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            feature_dim,
            num_classes,
            num_segments: 5,
            variant: ArchVariant::TwoStageFused,
            fusion_op: FusionOp::Average,
            direction: FusionDirection::Bidirectional,
            blocks_per_stage: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || !self.feature_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "feature_dim {} must be a positive multiple of 4",
                self.feature_dim
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "num_classes {} must be at least 2",
                self.num_classes
            )));
        }
        if self.num_segments == 0 {
            return Err(Error::Config("num_segments must be at least 1".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TwoStreamBody {
    pub stage1_a: Vec<ResIncBlock>,
    pub stage1_m: Vec<ResIncBlock>,
    /// Empty for `SingleStageFused`.
    pub stage2_a: Vec<ResIncBlock>,
    pub stage2_m: Vec<ResIncBlock>,
    pub head_a: Affine,
    pub head_m: Affine,
}

#[derive(Clone, Debug)]
pub struct ConcatBody {
    pub stage: Vec<ResIncBlock>,
    pub head: Affine,
}

#[derive(Clone, Debug)]
pub enum ModelBody {
    TwoStream(TwoStreamBody),
    Concat(ConcatBody),
}

#[derive(Clone, Debug)]
pub struct StfnModel {
    pub config: ModelConfig,
    pub body: ModelBody,
}

struct HeadCtx {
    affine: AffineCtx,
    probs: Tensor,
    segments: usize,
}

struct TwoStreamCtx {
    stage1_a: StackCtx,
    stage1_m: StackCtx,
    wire: WireCtx,
    stage2_a: StackCtx,
    stage2_m: StackCtx,
    head_a: HeadCtx,
    head_m: HeadCtx,
}

enum CtxDetail {
    TwoStream(Box<TwoStreamCtx>),
    Concat {
        stage: StackCtx,
        head: HeadCtx,
    },
}

/// Cached activations from a train-mode forward pass.
pub struct ModelCtx {
    scores: Tensor,
    detail: CtxDetail,
}

impl ModelCtx {
    pub fn scores(&self) -> &Tensor {
        &self.scores
    }
}

pub struct ModelGrads {
    pub loss: f64,
    /// One gradient per parameter, aligned with [`StfnModel::params`].
    pub params: Vec<Tensor>,
}

/// Deterministic per-layer seed stream derived from the model seed.
struct SeedSeq(u64);

impl SeedSeq {
    fn next(&mut self) -> u64 {
        self.0 = self
            .0
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        self.0
    }
}

fn build_stage(dim: usize, blocks: usize, seeds: &mut SeedSeq) -> Result<Vec<ResIncBlock>> {
    (0..blocks).map(|_| ResIncBlock::new(dim, seeds.next())).collect()
}

/// Temporal mean pool then affine then softmax.
fn head_forward(head: &Affine, q: &Tensor) -> Result<(Tensor, HeadCtx)> {
    let segments = q.shape()[1];
    let pooled = q.reduce_mean(1)?;
    let (logits, affine) = head.forward(&pooled)?;
    let probs = softmax(&logits)?;
    Ok((
        probs.clone(),
        HeadCtx {
            affine,
            probs,
            segments,
        },
    ))
}

/// Returns (grad wrt the head's sequence input, weight grad, bias grad).
fn head_backward(
    head: &Affine,
    ctx: &HeadCtx,
    grad_probs: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let grad_logits = softmax_backward(&ctx.probs, grad_probs)?;
    let ag = head.backward(&ctx.affine, &grad_logits)?;
    let (bsz, dim) = (ag.x.shape()[0], ag.x.shape()[1]);
    let n = ctx.segments;
    let inv = 1.0 / n as f64;
    let mut gq = vec![0.0; bsz * n * dim];
    let gp = ag.x.data();
    for b in 0..bsz {
        for t in 0..n {
            for c in 0..dim {
                gq[(b * n + t) * dim + c] = gp[b * dim + c] * inv;
            }
        }
    }
    Ok((Tensor::new(&[bsz, n, dim], gq)?, ag.weights, ag.bias))
}

impl StfnModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut seeds = SeedSeq(seed ^ 0x5354464e); // tag the stream with the model seed
        let d = config.feature_dim;
        let c = config.num_classes;
        let body = match config.variant {
            ArchVariant::TwoStageFused | ArchVariant::SingleStageFused => {
                let stage2_blocks = if config.variant == ArchVariant::TwoStageFused {
                    config.blocks_per_stage
                } else {
                    0
                };
                ModelBody::TwoStream(TwoStreamBody {
                    stage1_a: build_stage(d, config.blocks_per_stage, &mut seeds)?,
                    stage1_m: build_stage(d, config.blocks_per_stage, &mut seeds)?,
                    stage2_a: build_stage(d, stage2_blocks, &mut seeds)?,
                    stage2_m: build_stage(d, stage2_blocks, &mut seeds)?,
                    head_a: Affine::new(d, c, seeds.next())?,
                    head_m: Affine::new(d, c, seeds.next())?,
                })
            }
            ArchVariant::ConcatFirst => ModelBody::Concat(ConcatBody {
                stage: build_stage(2 * d, config.blocks_per_stage, &mut seeds)?,
                head: Affine::new(2 * d, c, seeds.next())?,
            }),
        };
        Ok(Self { config, body })
    }

    /// True when the score rows sum to 2 (two softmax heads) rather than 1.
    pub fn is_two_head(&self) -> bool {
        matches!(self.body, ModelBody::TwoStream(_))
    }

    fn check_inputs(&self, fa: &Tensor, fm: &Tensor) -> Result<usize> {
        let want = |t: &Tensor| {
            t.rank() == 3
                && t.shape()[1] == self.config.num_segments
                && t.shape()[2] == self.config.feature_dim
        };
        if !want(fa) || !want(fm) || fa.shape() != fm.shape() {
            return Err(Error::BadShape {
                op: "model forward",
                expected: format!(
                    "(batch, {}, {}) for both streams",
                    self.config.num_segments, self.config.feature_dim
                ),
                got: if want(fa) { fm.shape().to_vec() } else { fa.shape().to_vec() },
            });
        }
        Ok(fa.shape()[0])
    }

    fn forward_impl(
        &mut self,
        fa: &Tensor,
        fm: &Tensor,
        mode: Mode,
    ) -> Result<(Tensor, Option<ModelCtx>)> {
        self.check_inputs(fa, fm)?;
        let (op, direction) = (self.config.fusion_op, self.config.direction);
        match &mut self.body {
            ModelBody::TwoStream(body) => {
                let (pa, c1a) = stack_forward(&mut body.stage1_a, fa, mode)?;
                let (pm, c1m) = stack_forward(&mut body.stage1_m, fm, mode)?;
                let wired = wire(direction, op, &pa, &pm)?;
                let (qa, c2a) = stack_forward(&mut body.stage2_a, &wired.stream_a, mode)?;
                let (qm, c2m) = stack_forward(&mut body.stage2_m, &wired.stream_m, mode)?;
                let (probs_a, ha) = head_forward(&body.head_a, &qa)?;
                let (probs_m, hm) = head_forward(&body.head_m, &qm)?;
                let scores = probs_a.add(&probs_m)?;
                let ctx = match mode {
                    Mode::Train => Some(ModelCtx {
                        scores: scores.clone(),
                        detail: CtxDetail::TwoStream(Box::new(TwoStreamCtx {
                            stage1_a: c1a.expect("train ctx"),
                            stage1_m: c1m.expect("train ctx"),
                            wire: wired.ctx,
                            stage2_a: c2a.expect("train ctx"),
                            stage2_m: c2m.expect("train ctx"),
                            head_a: ha,
                            head_m: hm,
                        })),
                    }),
                    Mode::Eval => None,
                };
                Ok((scores, ctx))
            }
            ModelBody::Concat(body) => {
                let x = Tensor::concat(&[fa, fm], 2)?;
                let (q, cs) = stack_forward(&mut body.stage, &x, mode)?;
                let (probs, head) = head_forward(&body.head, &q)?;
                let ctx = match mode {
                    Mode::Train => Some(ModelCtx {
                        scores: probs.clone(),
                        detail: CtxDetail::Concat {
                            stage: cs.expect("train ctx"),
                            head,
                        },
                    }),
                    Mode::Eval => None,
                };
                Ok((probs, ctx))
            }
        }
    }

    /// Class scores `(batch, num_classes)`.
    pub fn forward(&mut self, fa: &Tensor, fm: &Tensor, mode: Mode) -> Result<Tensor> {
        Ok(self.forward_impl(fa, fm, mode)?.0)
    }

    pub fn forward_train(&mut self, fa: &Tensor, fm: &Tensor) -> Result<(Tensor, ModelCtx)> {
        let (scores, ctx) = self.forward_impl(fa, fm, Mode::Train)?;
        Ok((scores, ctx.expect("train mode always yields a context")))
    }

    /// Cross-entropy of the normalized scores: two-head rows sum to 2, so
    /// their loss is `−log(scores[label] / 2)`; single-head rows are
    /// already probabilities.
    pub fn loss(
        &mut self,
        fa: &Tensor,
        fm: &Tensor,
        labels: &[usize],
        mode: Mode,
    ) -> Result<(f64, Tensor)> {
        let scores = self.forward(fa, fm, mode)?;
        let (loss, _) = score_loss(&scores, labels, self.is_two_head())?;
        Ok((loss, scores))
    }

    /// Backpropagates the loss for `labels` through the cached forward
    /// pass, returning the loss value and one gradient per parameter in
    /// [`StfnModel::params`] order.
    pub fn backward(&self, ctx: &ModelCtx, labels: &[usize]) -> Result<ModelGrads> {
        let (loss, grad_scores) = score_loss(&ctx.scores, labels, self.is_two_head())?;
        let params = self.backward_scores(ctx, &grad_scores)?;
        Ok(ModelGrads { loss, params })
    }

    /// Backward pass from an explicit score gradient; shared by the loss
    /// path and the tests.
    pub(crate) fn backward_scores(
        &self,
        ctx: &ModelCtx,
        grad_scores: &Tensor,
    ) -> Result<Vec<Tensor>> {
        match (&self.body, &ctx.detail) {
            (ModelBody::TwoStream(body), CtxDetail::TwoStream(ts)) => {
                // scores = probs_a + probs_m, so each head sees grad_scores.
                let (g_qa, gw_a, gb_a) = head_backward(&body.head_a, &ts.head_a, grad_scores)?;
                let (g_qm, gw_m, gb_m) = head_backward(&body.head_m, &ts.head_m, grad_scores)?;
                let s2a = stack_backward(&body.stage2_a, &ts.stage2_a, &g_qa)?;
                let s2m = stack_backward(&body.stage2_m, &ts.stage2_m, &g_qm)?;
                let (g_pa, g_pm) = wire_backward(&ts.wire, &s2a.x, &s2m.x)?;
                let s1a = stack_backward(&body.stage1_a, &ts.stage1_a, &g_pa)?;
                let s1m = stack_backward(&body.stage1_m, &ts.stage1_m, &g_pm)?;
                let mut params = s1a.params;
                params.extend(s1m.params);
                params.extend(s2a.params);
                params.extend(s2m.params);
                params.push(gw_a);
                params.push(gb_a);
                params.push(gw_m);
                params.push(gb_m);
                Ok(params)
            }
            (ModelBody::Concat(body), CtxDetail::Concat { stage, head }) => {
                let (g_q, gw, gb) = head_backward(&body.head, head, grad_scores)?;
                let sg = stack_backward(&body.stage, stage, &g_q)?;
                let mut params = sg.params;
                params.push(gw);
                params.push(gb);
                Ok(params)
            }
            _ => Err(Error::Config("forward context does not match model body".into())),
        }
    }

    /// Mean of eval-mode scores over several sampled input pairs.
    pub fn predict_average(&mut self, sample_sets: &[(Tensor, Tensor)]) -> Result<Tensor> {
        if sample_sets.is_empty() {
            return Err(Error::EmptyInput("predict_average over no sample sets"));
        }
        let mut acc: Option<Tensor> = None;
        for (fa, fm) in sample_sets {
            let scores = self.forward(fa, fm, Mode::Eval)?;
            acc = Some(match acc {
                None => scores,
                Some(a) => a.add(&scores)?,
            });
        }
        Ok(acc.expect("non-empty").scale(1.0 / sample_sets.len() as f64))
    }

    /// Canonical parameter order: stage1 appearance blocks, stage1 motion,
    /// stage2 appearance, stage2 motion, appearance head (weights, bias),
    /// motion head; for `ConcatFirst` the single stage then the single
    /// head. Within a block see [`ResIncBlock::visit_params`].
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        match &self.body {
            ModelBody::TwoStream(body) => {
                for b in &body.stage1_a {
                    b.visit_params(&mut out);
                }
                for b in &body.stage1_m {
                    b.visit_params(&mut out);
                }
                for b in &body.stage2_a {
                    b.visit_params(&mut out);
                }
                for b in &body.stage2_m {
                    b.visit_params(&mut out);
                }
                out.push(&body.head_a.weights);
                out.push(&body.head_a.bias);
                out.push(&body.head_m.weights);
                out.push(&body.head_m.bias);
            }
            ModelBody::Concat(body) => {
                for b in &body.stage {
                    b.visit_params(&mut out);
                }
                out.push(&body.head.weights);
                out.push(&body.head.bias);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.body {
            ModelBody::TwoStream(body) => {
                for b in &mut body.stage1_a {
                    b.visit_params_mut(&mut out);
                }
                for b in &mut body.stage1_m {
                    b.visit_params_mut(&mut out);
                }
                for b in &mut body.stage2_a {
                    b.visit_params_mut(&mut out);
                }
                for b in &mut body.stage2_m {
                    b.visit_params_mut(&mut out);
                }
                out.push(&mut body.head_a.weights);
                out.push(&mut body.head_a.bias);
                out.push(&mut body.head_m.weights);
                out.push(&mut body.head_m.bias);
            }
            ModelBody::Concat(body) => {
                for b in &mut body.stage {
                    b.visit_params_mut(&mut out);
                }
                out.push(&mut body.head.weights);
                out.push(&mut body.head.bias);
            }
        }
        out
    }

    /// Parameters plus batch-norm running statistics, in the fixed order
    /// used by checkpoints: the same traversal as [`StfnModel::params`] but
    /// each batch norm contributes gamma, beta, running mean, running
    /// variance.
    pub fn state_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        match &self.body {
            ModelBody::TwoStream(body) => {
                for b in &body.stage1_a {
                    b.visit_state(&mut out);
                }
                for b in &body.stage1_m {
                    b.visit_state(&mut out);
                }
                for b in &body.stage2_a {
                    b.visit_state(&mut out);
                }
                for b in &body.stage2_m {
                    b.visit_state(&mut out);
                }
                out.push(&body.head_a.weights);
                out.push(&body.head_a.bias);
                out.push(&body.head_m.weights);
                out.push(&body.head_m.bias);
            }
            ModelBody::Concat(body) => {
                for b in &body.stage {
                    b.visit_state(&mut out);
                }
                out.push(&body.head.weights);
                out.push(&body.head.bias);
            }
        }
        out
    }

    pub fn state_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        match &mut self.body {
            ModelBody::TwoStream(body) => {
                for b in &mut body.stage1_a {
                    b.visit_state_mut(&mut out);
                }
                for b in &mut body.stage1_m {
                    b.visit_state_mut(&mut out);
                }
                for b in &mut body.stage2_a {
                    b.visit_state_mut(&mut out);
                }
                for b in &mut body.stage2_m {
                    b.visit_state_mut(&mut out);
                }
                out.push(&mut body.head_a.weights);
                out.push(&mut body.head_a.bias);
                out.push(&mut body.head_m.weights);
                out.push(&mut body.head_m.bias);
            }
            ModelBody::Concat(body) => {
                for b in &mut body.stage {
                    b.visit_state_mut(&mut out);
                }
                out.push(&mut body.head.weights);
                out.push(&mut body.head.bias);
            }
        }
        out
    }
}

/// Cross-entropy over normalized score rows, plus its gradient with respect
/// to the scores. `two_head` divides each row by 2 first.
pub(crate) fn score_loss(
    scores: &Tensor,
    labels: &[usize],
    two_head: bool,
) -> Result<(f64, Tensor)> {
    let (bsz, c) = (scores.shape()[0], scores.shape()[1]);
    if labels.len() != bsz {
        return Err(Error::BadShape {
            op: "loss labels",
            expected: format!("{bsz} labels"),
            got: vec![labels.len()],
        });
    }
    for &l in labels {
        if l >= c {
            return Err(Error::LabelOutOfRange {
                label: l,
                num_classes: c,
            });
        }
    }
    let norm = if two_head { 2.0 } else { 1.0 };
    let inv_b = 1.0 / bsz as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; bsz * c];
    for (b, &label) in labels.iter().enumerate() {
        let s = scores.data()[b * c + label];
        loss -= (s / norm).ln();
        grad[b * c + label] = -inv_b / s;
    }
    Ok((loss * inv_b, Tensor::new(&[bsz, c], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(variant: ArchVariant) -> ModelConfig {
        ModelConfig {
            feature_dim: 8,
            num_classes: 3,
            num_segments: 5,
            variant,
            fusion_op: FusionOp::Average,
            direction: FusionDirection::Bidirectional,
            blocks_per_stage: 1,
        }
    }

    fn inputs(bsz: usize, n: usize, d: usize, seed: u64) -> (Tensor, Tensor) {
        (
            Tensor::random_normal(&[bsz, n, d], 0.0, 1.0, seed),
            Tensor::random_normal(&[bsz, n, d], 0.0, 1.0, seed + 1),
        )
    }

    #[test]
    fn two_head_score_rows_sum_to_two() {
        let mut m = StfnModel::new(tiny_config(ArchVariant::TwoStageFused), 7).unwrap();
        let (fa, fm) = inputs(1, 5, 8, 300);
        let scores = m.forward(&fa, &fm, Mode::Train).unwrap();
        assert_eq!(scores.shape(), &[1, 3]);
        let sum: f64 = scores.data().iter().sum();
        assert!((sum - 2.0).abs() < 1e-9, "sum {sum}");
    }

    #[test]
    fn concat_first_score_rows_sum_to_one() {
        let mut m = StfnModel::new(tiny_config(ArchVariant::ConcatFirst), 7).unwrap();
        let (fa, fm) = inputs(1, 5, 8, 301);
        let scores = m.forward(&fa, &fm, Mode::Train).unwrap();
        let sum: f64 = scores.data().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
    }

    #[test]
    fn tied_streams_double_one_head() {
        // fa = fm with bidirectional average and tied parameters: both head
        // outputs coincide, so scores = 2 · head_A.
        let mut m = StfnModel::new(tiny_config(ArchVariant::TwoStageFused), 9).unwrap();
        if let ModelBody::TwoStream(body) = &mut m.body {
            body.stage1_m = body.stage1_a.clone();
            body.stage2_m = body.stage2_a.clone();
            body.head_m = body.head_a.clone();
        }
        let fa = Tensor::random_normal(&[2, 5, 8], 0.0, 1.0, 302);
        let scores = m.forward(&fa, &fa.clone(), Mode::Eval).unwrap();
        if let ModelBody::TwoStream(body) = &mut m.body {
            let (pa, _) = stack_forward(&mut body.stage1_a, &fa, Mode::Eval).unwrap();
            // Averaging two identical tensors is the identity.
            let (qa, _) = stack_forward(&mut body.stage2_a, &pa, Mode::Eval).unwrap();
            let pooled = qa.reduce_mean(1).unwrap();
            let (logits, _) = body.head_a.forward(&pooled).unwrap();
            let expected = softmax(&logits).unwrap().scale(2.0);
            assert!(scores.sub(&expected).unwrap().norm() < 1e-12);
        }
    }

    #[test]
    fn swapping_streams_and_parameters_is_symmetric() {
        for op in [FusionOp::Average, FusionOp::Maximum] {
            let mut cfg = tiny_config(ArchVariant::TwoStageFused);
            cfg.fusion_op = op;
            let mut m = StfnModel::new(cfg, 11).unwrap();
            let (fa, fm) = inputs(2, 5, 8, 303);
            let scores = m.forward(&fa, &fm, Mode::Eval).unwrap();
            let mut swapped = m.clone();
            if let ModelBody::TwoStream(body) = &mut swapped.body {
                std::mem::swap(&mut body.stage1_a, &mut body.stage1_m);
                std::mem::swap(&mut body.stage2_a, &mut body.stage2_m);
                std::mem::swap(&mut body.head_a, &mut body.head_m);
            }
            let swapped_scores = swapped.forward(&fm, &fa, Mode::Eval).unwrap();
            let diff = scores.sub(&swapped_scores).unwrap().norm();
            assert!(diff < 1e-12, "{op:?}: diff {diff}");
        }
    }

    #[test]
    fn zero_score_gradient_zeroes_every_parameter_gradient() {
        for variant in ArchVariant::ALL {
            let mut m = StfnModel::new(tiny_config(variant), 13).unwrap();
            let (fa, fm) = inputs(2, 5, 8, 304);
            let (scores, ctx) = m.forward_train(&fa, &fm).unwrap();
            let grads = m
                .backward_scores(&ctx, &Tensor::zeros(scores.shape()))
                .unwrap();
            assert_eq!(grads.len(), m.params().len());
            assert!(grads.iter().all(|g| g.norm() == 0.0), "{variant:?}");
        }
    }

    #[test]
    fn grad_shapes_align_with_params() {
        for variant in ArchVariant::ALL {
            for direction in FusionDirection::ALL {
                let mut cfg = tiny_config(variant);
                cfg.direction = direction;
                let mut m = StfnModel::new(cfg, 15).unwrap();
                let (fa, fm) = inputs(2, 5, 8, 305);
                let (_, ctx) = m.forward_train(&fa, &fm).unwrap();
                let grads = m.backward(&ctx, &[0, 2]).unwrap();
                let params = m.params();
                assert_eq!(grads.params.len(), params.len());
                for (g, p) in grads.params.iter().zip(&params) {
                    assert_eq!(g.shape(), p.shape());
                }
            }
        }
    }

    #[test]
    fn asymmetric_wiring_still_reaches_the_donor_stream() {
        // A←M: motion passes through untouched, yet its stage-1 parameters
        // must receive gradient through both the fused and the pass-through
        // paths.
        let mut cfg = tiny_config(ArchVariant::TwoStageFused);
        cfg.direction = FusionDirection::MotionToAppearance;
        let mut m = StfnModel::new(cfg, 17).unwrap();
        let (fa, fm) = inputs(2, 5, 8, 306);
        let (_, ctx) = m.forward_train(&fa, &fm).unwrap();
        let grads = m.backward(&ctx, &[1, 0]).unwrap();
        // stage1_m occupies the second group of block parameters.
        let per_block = 20; // 4 branches * 4 + skip * 4
        let stage1_m_grads = &grads.params[per_block..2 * per_block];
        let norm: f64 = stage1_m_grads.iter().map(|g| g.norm()).sum();
        assert!(norm > 0.0);
    }

    #[test]
    fn stacked_stages_work_and_grads_stay_aligned() {
        let mut cfg = tiny_config(ArchVariant::TwoStageFused);
        cfg.blocks_per_stage = 2;
        let mut m = StfnModel::new(cfg, 21).unwrap();
        let (fa, fm) = inputs(2, 5, 8, 312);
        let (scores, ctx) = m.forward_train(&fa, &fm).unwrap();
        assert_eq!(scores.shape(), &[2, 3]);
        let grads = m.backward(&ctx, &[0, 1]).unwrap();
        let params = m.params();
        // 4 stages x 2 blocks x 20 tensors, plus two heads.
        assert_eq!(params.len(), 4 * 2 * 20 + 4);
        assert_eq!(grads.params.len(), params.len());
        for (g, p) in grads.params.iter().zip(&params) {
            assert_eq!(g.shape(), p.shape());
        }
    }

    #[test]
    fn zeroed_heads_give_ln_c_loss() {
        for variant in ArchVariant::ALL {
            let mut cfg = tiny_config(variant);
            cfg.num_classes = 4;
            let mut m = StfnModel::new(cfg, 19).unwrap();
            match &mut m.body {
                ModelBody::TwoStream(body) => {
                    body.head_a.weights = Tensor::zeros(body.head_a.weights.shape());
                    body.head_m.weights = Tensor::zeros(body.head_m.weights.shape());
                }
                ModelBody::Concat(body) => {
                    body.head.weights = Tensor::zeros(body.head.weights.shape());
                }
            }
            let (fa, fm) = inputs(2, 5, 8, 307);
            let (loss, _) = m.loss(&fa, &fm, &[1, 3], Mode::Train).unwrap();
            assert!((loss - 4.0f64.ln()).abs() < 1e-12, "{variant:?}: {loss}");
        }
    }

    #[test]
    fn score_loss_matches_scalar_reimplementation() {
        // Independent scalar oracle over random score rows.
        for seed in 0..10u64 {
            let scores = Tensor::random_normal(&[3, 4], 1.0, 0.2, 400 + seed).map(f64::abs);
            let labels = [seed as usize % 4, (seed as usize + 1) % 4, 0];
            for two_head in [false, true] {
                let (loss, _) = score_loss(&scores, &labels, two_head).unwrap();
                let norm = if two_head { 2.0 } else { 1.0 };
                let mut expect = 0.0;
                for (b, &y) in labels.iter().enumerate() {
                    expect -= (scores.data()[b * 4 + y] / norm).ln();
                }
                expect /= labels.len() as f64;
                assert!((loss - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn perfect_one_hot_scores_have_zero_loss() {
        let scores = Tensor::new(&[2, 3], vec![2.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let (loss, _) = score_loss(&scores, &[0, 1], true).unwrap();
        assert!(loss.abs() < 1e-15);
        let scores = Tensor::new(&[1, 3], vec![0.0, 0.0, 1.0]).unwrap();
        let (loss, _) = score_loss(&scores, &[2], false).unwrap();
        assert!(loss.abs() < 1e-15);
    }

    #[test]
    fn predict_average_basics() {
        let mut m = StfnModel::new(tiny_config(ArchVariant::TwoStageFused), 23).unwrap();
        let (fa, fm) = inputs(1, 5, 8, 308);
        let single = m.forward(&fa, &fm, Mode::Eval).unwrap();
        let one = m.predict_average(&[(fa.clone(), fm.clone())]).unwrap();
        assert_eq!(one, single);
        let three = m
            .predict_average(&[
                (fa.clone(), fm.clone()),
                (fa.clone(), fm.clone()),
                (fa.clone(), fm.clone()),
            ])
            .unwrap();
        let diff = three.sub(&single).unwrap().norm();
        assert!(diff < 1e-12);
        // Permutation invariance.
        let (fa2, fm2) = inputs(1, 5, 8, 309);
        let ab = m
            .predict_average(&[(fa.clone(), fm.clone()), (fa2.clone(), fm2.clone())])
            .unwrap();
        let ba = m.predict_average(&[(fa2, fm2), (fa, fm)]).unwrap();
        assert!(ab.sub(&ba).unwrap().norm() < 1e-12);
        assert!(m.predict_average(&[]).is_err());
    }

    #[test]
    fn whole_model_backward_matches_finite_differences() {
        let mut cfg = tiny_config(ArchVariant::TwoStageFused);
        cfg.feature_dim = 4;
        cfg.num_segments = 3;
        cfg.num_classes = 2;
        let model = StfnModel::new(cfg, 29).unwrap();
        let fa = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, 310);
        let fm = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, 311);
        let labels = [0usize, 1];

        let mut work = model.clone();
        let (_, ctx) = work.forward_train(&fa, &fm).unwrap();
        let grads = work.backward(&ctx, &labels).unwrap();

        let h = 1e-5;
        let mut max_rel: f64 = 0.0;
        let n_params = model.params().len();
        for p in 0..n_params {
            let len = model.params()[p].len();
            for idx in 0..len {
                let mut mp = model.clone();
                mp.params_mut()[p].data_mut()[idx] += h;
                let mut mm = model.clone();
                mm.params_mut()[p].data_mut()[idx] -= h;
                let lp = mp.loss(&fa, &fm, &labels, Mode::Train).unwrap().0;
                let lm = mm.loss(&fa, &fm, &labels, Mode::Train).unwrap().0;
                let num = (lp - lm) / (2.0 * h);
                let ana = grads.params[p].data()[idx];
                max_rel = max_rel.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-4));
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }
}
