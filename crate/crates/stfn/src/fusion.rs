//! Cross-stream fusion: the element-wise operators combining the two
//! streams' block outputs, and the wiring that decides which stream(s)
//! receive the fused signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Element-wise operator combining the appearance and motion sequences.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionOp {
    /// `(pa + pm) / 2`
    Average,
    /// `pa * pm`
    Multiply,
    /// `max(pa, pm)`
    Maximum,
}

/// Which stream(s) the fused signal is injected into.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FusionDirection {
    /// A→M: the motion stream receives the fused signal, appearance passes
    /// through untouched.
    #[serde(rename = "a_to_m")]
    AppearanceToMotion,
    /// A←M: the appearance stream receives the fused signal, motion passes
    /// through untouched.
    #[serde(rename = "m_to_a")]
    MotionToAppearance,
    /// A↔M: both streams receive the fused signal.
    #[serde(rename = "bidirectional")]
    Bidirectional,
}

/// Overall architecture: where fusion happens relative to the block stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchVariant {
    /// Per-stream blocks, fusion, then a second set of per-stream blocks
    /// before the heads.
    TwoStageFused,
    /// Per-stream blocks and fusion, heads applied directly to the wired
    /// signals.
    SingleStageFused,
    /// Feature-level concatenation of the raw sequences, one block stack of
    /// width 2d, a single head.
    ConcatFirst,
}

impl FusionOp {
    pub const ALL: [FusionOp; 3] = [FusionOp::Average, FusionOp::Multiply, FusionOp::Maximum];

    pub fn name(&self) -> &'static str {
        match self {
            FusionOp::Average => "average",
            FusionOp::Multiply => "multiply",
            FusionOp::Maximum => "maximum",
        }
    }
}

impl FusionDirection {
    pub const ALL: [FusionDirection; 3] = [
        FusionDirection::AppearanceToMotion,
        FusionDirection::MotionToAppearance,
        FusionDirection::Bidirectional,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            FusionDirection::AppearanceToMotion => "a_to_m",
            FusionDirection::MotionToAppearance => "m_to_a",
            FusionDirection::Bidirectional => "bidirectional",
        }
    }
}

impl ArchVariant {
    pub const ALL: [ArchVariant; 3] = [
        ArchVariant::TwoStageFused,
        ArchVariant::SingleStageFused,
        ArchVariant::ConcatFirst,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ArchVariant::TwoStageFused => "two_stage_fused",
            ArchVariant::SingleStageFused => "single_stage_fused",
            ArchVariant::ConcatFirst => "concat_first",
        }
    }
}

impl std::str::FromStr for FusionOp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(FusionOp::Average),
            "multiply" => Ok(FusionOp::Multiply),
            "maximum" => Ok(FusionOp::Maximum),
            _ => Err(Error::Config(format!(
                "unknown fusion op {s:?} (expected average|multiply|maximum)"
            ))),
        }
    }
}

impl std::str::FromStr for FusionDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "a_to_m" => Ok(FusionDirection::AppearanceToMotion),
            "m_to_a" => Ok(FusionDirection::MotionToAppearance),
            "bidirectional" => Ok(FusionDirection::Bidirectional),
            _ => Err(Error::Config(format!(
                "unknown fusion direction {s:?} (expected a_to_m|m_to_a|bidirectional)"
            ))),
        }
    }
}

impl std::str::FromStr for ArchVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage_fused" => Ok(ArchVariant::TwoStageFused),
            "single_stage_fused" => Ok(ArchVariant::SingleStageFused),
            "concat_first" => Ok(ArchVariant::ConcatFirst),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (expected two_stage_fused|single_stage_fused|concat_first)"
            ))),
        }
    }
}

/// Cached operands for the backward pass (only Multiply and Maximum need
/// them).
pub struct FuseCtx {
    pa: Tensor,
    pm: Tensor,
}

/// Element-wise fusion of two same-shape stream outputs.
pub fn fuse(op: FusionOp, pa: &Tensor, pm: &Tensor) -> Result<(Tensor, FuseCtx)> {
    let fused = match op {
        FusionOp::Average => pa.add(pm)?.scale(0.5),
        FusionOp::Multiply => pa.mul(pm)?,
        FusionOp::Maximum => pa.maximum(pm)?,
    };
    Ok((
        fused,
        FuseCtx {
            pa: pa.clone(),
            pm: pm.clone(),
        },
    ))
}

/// Gradients of the fused signal with respect to both streams. Maximum
/// routes each element's gradient to the winning stream; exact ties go to
/// the appearance stream.
pub fn fuse_backward(op: FusionOp, ctx: &FuseCtx, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    if grad_out.shape() != ctx.pa.shape() {
        return Err(Error::ShapeMismatch {
            op: "fuse backward",
            left: ctx.pa.shape().to_vec(),
            right: grad_out.shape().to_vec(),
        });
    }
    match op {
        FusionOp::Average => {
            let half = grad_out.scale(0.5);
            Ok((half.clone(), half))
        }
        FusionOp::Multiply => Ok((grad_out.mul(&ctx.pm)?, grad_out.mul(&ctx.pa)?)),
        FusionOp::Maximum => {
            let mut ga = vec![0.0; grad_out.len()];
            let mut gm = vec![0.0; grad_out.len()];
            for (i, &g) in grad_out.data().iter().enumerate() {
                if ctx.pa.data()[i] >= ctx.pm.data()[i] {
                    ga[i] = g;
                } else {
                    gm[i] = g;
                }
            }
            Ok((
                Tensor::new(grad_out.shape(), ga)?,
                Tensor::new(grad_out.shape(), gm)?,
            ))
        }
    }
}

/// What each follow-up stage receives. For the bidirectional direction both
/// outputs are the fused signal (duplicated, not shared, so downstream
/// gradient accumulation is explicit); asymmetric directions pass one
/// stream through bit-identically.
pub struct Wired {
    pub stream_a: Tensor,
    pub stream_m: Tensor,
    pub ctx: WireCtx,
}

pub struct WireCtx {
    fuse: FuseCtx,
    direction: FusionDirection,
    op: FusionOp,
}

pub fn wire(
    direction: FusionDirection,
    op: FusionOp,
    pa: &Tensor,
    pm: &Tensor,
) -> Result<Wired> {
    let (fused, fuse_ctx) = fuse(op, pa, pm)?;
    let (stream_a, stream_m) = match direction {
        FusionDirection::Bidirectional => (fused.clone(), fused),
        FusionDirection::MotionToAppearance => (fused, pm.clone()),
        FusionDirection::AppearanceToMotion => (pa.clone(), fused),
    };
    Ok(Wired {
        stream_a,
        stream_m,
        ctx: WireCtx {
            fuse: fuse_ctx,
            direction,
            op,
        },
    })
}

/// Propagates the two follow-up gradients back to the pre-fusion stream
/// outputs. Pass-through streams add their gradient directly; fused inputs
/// go through the operator's backward rule.
pub fn wire_backward(
    ctx: &WireCtx,
    grad_stream_a: &Tensor,
    grad_stream_m: &Tensor,
) -> Result<(Tensor, Tensor)> {
    match ctx.direction {
        FusionDirection::Bidirectional => {
            let g_fused = grad_stream_a.add(grad_stream_m)?;
            fuse_backward(ctx.op, &ctx.fuse, &g_fused)
        }
        FusionDirection::MotionToAppearance => {
            let (ga, gm) = fuse_backward(ctx.op, &ctx.fuse, grad_stream_a)?;
            Ok((ga, gm.add(grad_stream_m)?))
        }
        FusionDirection::AppearanceToMotion => {
            let (ga, gm) = fuse_backward(ctx.op, &ctx.fuse, grad_stream_m)?;
            Ok((ga.add(grad_stream_a)?, gm))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn average_multiply_maximum_values() {
        assert_eq!(fuse(FusionOp::Average, &t(&[1.0, 3.0]), &t(&[3.0, 1.0])).unwrap().0, t(&[2.0, 2.0]));
        assert_eq!(fuse(FusionOp::Multiply, &t(&[2.0, 0.5]), &t(&[0.5, 2.0])).unwrap().0, t(&[1.0, 1.0]));
        let x = t(&[0.3, -1.2, 4.0]);
        assert_eq!(fuse(FusionOp::Maximum, &x, &x).unwrap().0, x);
    }

    #[test]
    fn average_backward_splits_evenly() {
        let (_, ctx) = fuse(FusionOp::Average, &t(&[0.0, 0.0]), &t(&[0.0, 0.0])).unwrap();
        let (ga, gm) = fuse_backward(FusionOp::Average, &ctx, &t(&[2.0, 4.0])).unwrap();
        assert_eq!(ga, t(&[1.0, 2.0]));
        assert_eq!(gm, t(&[1.0, 2.0]));
    }

    #[test]
    fn maximum_backward_routes_to_winner() {
        let (_, ctx) = fuse(FusionOp::Maximum, &t(&[5.0, 1.0]), &t(&[1.0, 5.0])).unwrap();
        let (ga, gm) = fuse_backward(FusionOp::Maximum, &ctx, &t(&[1.0, 1.0])).unwrap();
        assert_eq!(ga, t(&[1.0, 0.0]));
        assert_eq!(gm, t(&[0.0, 1.0]));
    }

    #[test]
    fn maximum_ties_route_to_appearance() {
        let (_, ctx) = fuse(FusionOp::Maximum, &t(&[2.0]), &t(&[2.0])).unwrap();
        let (ga, gm) = fuse_backward(FusionOp::Maximum, &ctx, &t(&[3.0])).unwrap();
        assert_eq!(ga, t(&[3.0]));
        assert_eq!(gm, t(&[0.0]));
    }

    #[test]
    fn multiply_backward_matches_finite_differences() {
        let pa = Tensor::random_normal(&[6], 0.0, 1.0, 120);
        let pm = Tensor::random_normal(&[6], 0.0, 1.0, 121);
        let probe = Tensor::random_normal(&[6], 0.0, 1.0, 122);
        let (_, ctx) = fuse(FusionOp::Multiply, &pa, &pm).unwrap();
        let (ga, gm) = fuse_backward(FusionOp::Multiply, &ctx, &probe).unwrap();
        let h = 1e-5;
        for idx in 0..6 {
            let mut pp = pa.clone();
            pp.data_mut()[idx] += h;
            let mut pmn = pa.clone();
            pmn.data_mut()[idx] -= h;
            let fp = fuse(FusionOp::Multiply, &pp, &pm).unwrap().0.dot(&probe).unwrap();
            let fm = fuse(FusionOp::Multiply, &pmn, &pm).unwrap().0.dot(&probe).unwrap();
            let num = (fp - fm) / (2.0 * h);
            let rel = (num - ga.data()[idx]).abs() / num.abs().max(ga.data()[idx].abs()).max(1e-8);
            assert!(rel < 1e-6);
            let mut qp = pm.clone();
            qp.data_mut()[idx] += h;
            let mut qm = pm.clone();
            qm.data_mut()[idx] -= h;
            let fp = fuse(FusionOp::Multiply, &pa, &qp).unwrap().0.dot(&probe).unwrap();
            let fm = fuse(FusionOp::Multiply, &pa, &qm).unwrap().0.dot(&probe).unwrap();
            let num = (fp - fm) / (2.0 * h);
            let rel = (num - gm.data()[idx]).abs() / num.abs().max(gm.data()[idx].abs()).max(1e-8);
            assert!(rel < 1e-6);
        }
    }

    #[test]
    fn wiring_directions() {
        let pa = t(&[2.0]);
        let pm = t(&[4.0]);
        let w = wire(FusionDirection::Bidirectional, FusionOp::Average, &pa, &pm).unwrap();
        assert_eq!(w.stream_a, t(&[3.0]));
        assert_eq!(w.stream_m, t(&[3.0]));
        let w = wire(FusionDirection::MotionToAppearance, FusionOp::Average, &pa, &pm).unwrap();
        assert_eq!(w.stream_a, t(&[3.0]));
        assert_eq!(w.stream_m, t(&[4.0]));
        let w = wire(FusionDirection::AppearanceToMotion, FusionOp::Average, &pa, &pm).unwrap();
        assert_eq!(w.stream_a, t(&[2.0]));
        assert_eq!(w.stream_m, t(&[3.0]));
    }

    #[test]
    fn asymmetric_wiring_passes_one_stream_through_bit_identically() {
        for op in FusionOp::ALL {
            let pa = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, 130);
            let pm = Tensor::random_normal(&[2, 3, 4], 0.0, 1.0, 131);
            let w = wire(FusionDirection::MotionToAppearance, op, &pa, &pm).unwrap();
            assert_eq!(w.stream_m, pm);
            let w = wire(FusionDirection::AppearanceToMotion, op, &pa, &pm).unwrap();
            assert_eq!(w.stream_a, pa);
        }
    }

    #[test]
    fn serialized_names_match_the_config_grammar() {
        #[derive(Serialize)]
        struct Row {
            op: FusionOp,
            direction: FusionDirection,
            variant: ArchVariant,
        }
        let text = toml::to_string(&Row {
            op: FusionOp::Average,
            direction: FusionDirection::MotionToAppearance,
            variant: ArchVariant::TwoStageFused,
        })
        .unwrap();
        assert!(text.contains("op = \"average\""), "{text}");
        assert!(text.contains("direction = \"m_to_a\""), "{text}");
        assert!(text.contains("variant = \"two_stage_fused\""), "{text}");
        assert_eq!("a_to_m".parse::<FusionDirection>().unwrap(), FusionDirection::AppearanceToMotion);
        assert!("sideways".parse::<FusionDirection>().is_err());
    }

    proptest! {
        #[test]
        fn fuse_is_commutative(len in 1usize..16, seed in 0u64..300) {
            let a = Tensor::random_normal(&[len], 0.0, 1.0, seed);
            let b = Tensor::random_normal(&[len], 0.0, 1.0, seed + 1);
            for op in FusionOp::ALL {
                prop_assert_eq!(fuse(op, &a, &b).unwrap().0, fuse(op, &b, &a).unwrap().0);
            }
        }

        #[test]
        fn fuse_identities(len in 1usize..16, seed in 0u64..300) {
            let x = Tensor::random_normal(&[len], 0.0, 1.0, seed);
            prop_assert_eq!(fuse(FusionOp::Average, &x, &x).unwrap().0, x.clone());
            prop_assert_eq!(fuse(FusionOp::Maximum, &x, &x).unwrap().0, x.clone());
            let ones = Tensor::full(&[len], 1.0);
            prop_assert_eq!(fuse(FusionOp::Multiply, &x, &ones).unwrap().0, x);
        }

        #[test]
        fn bidirectional_outputs_are_identical(len in 1usize..16, seed in 0u64..300) {
            let a = Tensor::random_normal(&[len], 0.0, 1.0, seed);
            let b = Tensor::random_normal(&[len], 0.0, 1.0, seed + 1);
            for op in FusionOp::ALL {
                let w = wire(FusionDirection::Bidirectional, op, &a, &b).unwrap();
                prop_assert_eq!(w.stream_a, w.stream_m);
            }
        }
    }
}
