//! Cross transpose attention between the detail branch and early backbone
//! features.

use rand::Rng;

use super::context::Ctx;
use super::layers::{BatchNorm, Conv};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Real;

/// Attention variant, for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum CtaMode {
    /// `(I - alpha) a + alpha b` with channel affinities `alpha`.
    #[default]
    Transpose,
    /// Plain residual cross attention `a + alpha b`, no complementary gate.
    Plain,
    /// Branch disabled: the detail feature passes through unchanged.
    Off,
}

impl CtaMode {
    pub fn name(self) -> &'static str {
        match self {
            CtaMode::Transpose => "cta",
            CtaMode::Plain => "ca",
            CtaMode::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cta" | "transpose" => CtaMode::Transpose,
            "ca" | "plain" => CtaMode::Plain,
            "off" | "none" => CtaMode::Off,
            _ => return None,
        })
    }
}

/// Projections of one attention block: 1x1 conv + batch norm per input.
#[derive(Clone, Debug, PartialEq)]
pub struct CtaParams {
    pub proj_a: Conv,
    pub norm_a: BatchNorm,
    pub proj_b: Conv,
    pub norm_b: BatchNorm,
    /// Affinity scale; `None` means `1/(h*w)`.
    pub scale: Option<f64>,
}

impl CtaParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        channels: usize,
    ) -> Self {
        Self {
            proj_a: Conv::new(store, rng, &format!("{prefix}.proj_a"), channels, channels, 1),
            norm_a: BatchNorm::new(store, &format!("{prefix}.norm_a"), channels),
            proj_b: Conv::new(store, rng, &format!("{prefix}.proj_b"), channels, channels, 1),
            norm_b: BatchNorm::new(store, &format!("{prefix}.norm_b"), channels),
            scale: None,
        }
    }
}

/// Result of [`cta_block`] with the affinity matrices exposed for inspection.
#[derive(Clone, Copy, Debug)]
pub struct CtaBlockOutput {
    /// Updated detail feature, `C x h x w`.
    pub out: Var,
    /// `sigmoid(s * B * A^T)`, shape `(n, 1, C, C)`.
    pub alpha: Var,
    /// `sigmoid(s * A * B^T)`, shape `(n, 1, C, C)`.
    pub beta: Var,
}

/// One cross transpose attention block over equally shaped `a` (detail) and
/// `b` (backbone) features.
///
/// Both inputs are projected and flattened to `C x hw` matrices `A`, `B`. The
/// channel affinities are `alpha = sigmoid(s B A^T)` and
/// `beta = sigmoid(s A B^T)`; the block returns the first row of
/// `[[I - alpha, alpha], [beta, I - beta]] [a; b]` on the raw inputs.
pub fn cta_block<T: Real>(
    ctx: &mut Ctx<'_, T>,
    a: Var,
    b: Var,
    p: &CtaParams,
    mode: CtaMode,
) -> Result<CtaBlockOutput> {
    let shape = ctx.tape.shape(a);
    if shape != ctx.tape.shape(b) {
        return Err(Error::ShapeMismatch {
            op: "cta_block",
            left: shape.to_vec(),
            right: ctx.tape.shape(b).to_vec(),
        });
    }
    let [n, c, h, w] = shape;
    let flat = [n, 1, c, h * w];
    let pa = p.proj_a.forward(ctx, a)?;
    let pa = p.norm_a.forward(ctx, pa)?;
    let pb = p.proj_b.forward(ctx, b)?;
    let pb = p.norm_b.forward(ctx, pb)?;
    let ma = ctx.tape.reshape(pa, flat)?;
    let mb = ctx.tape.reshape(pb, flat)?;
    let mat = ctx.tape.transpose(ma);
    let mbt = ctx.tape.transpose(mb);
    let s = T::c(p.scale.unwrap_or(1.0 / (h * w) as f64));
    let ba = ctx.tape.matmul(mb, mat)?;
    let ba = ctx.tape.scale(ba, s);
    let alpha = ctx.tape.sigmoid(ba);
    let ab = ctx.tape.matmul(ma, mbt)?;
    let ab = ctx.tape.scale(ab, s);
    let beta = ctx.tape.sigmoid(ab);

    let ra = ctx.tape.reshape(a, flat)?;
    let rb = ctx.tape.reshape(b, flat)?;
    let mixed = match mode {
        // (I - alpha) a + alpha b == a + alpha (b - a)
        CtaMode::Transpose => {
            let diff = ctx.tape.sub(rb, ra)?;
            let moved = ctx.tape.matmul(alpha, diff)?;
            ctx.tape.add(ra, moved)?
        }
        CtaMode::Plain => {
            let attended = ctx.tape.matmul(alpha, rb)?;
            ctx.tape.add(ra, attended)?
        }
        CtaMode::Off => ra,
    };
    let out = ctx.tape.reshape(mixed, shape)?;
    Ok(CtaBlockOutput { out, alpha, beta })
}

/// The two chained attention blocks plus the attention-map head.
#[derive(Clone, Debug, PartialEq)]
pub struct CtaStack {
    pub blocks: [CtaParams; 2],
    pub am_head: Conv,
    pub mode: CtaMode,
}

impl CtaStack {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        channels: usize,
        mode: CtaMode,
    ) -> Self {
        Self {
            blocks: [
                CtaParams::new(store, rng, "cta.block0", channels),
                CtaParams::new(store, rng, "cta.block1", channels),
            ],
            am_head: Conv::new(store, rng, "cta.am_head", channels, 1, 1),
            mode,
        }
    }
}

/// `CTA(CTA(x_tri, x_En1), x_En2)` after resizing both backbone features to
/// the detail branch's resolution. Returns the refined detail feature and the
/// 1-channel attention-map logits at the same resolution.
pub fn cta_forward<T: Real>(
    ctx: &mut Ctx<'_, T>,
    x_tri: Var,
    x_en1: Var,
    x_en2: Var,
    p: &CtaStack,
) -> Result<(Var, Var)> {
    let [_, _, h, w] = ctx.tape.shape(x_tri);
    let out = if p.mode == CtaMode::Off {
        x_tri
    } else {
        let e1 = ctx.tape.bilinear_resize(x_en1, h, w)?;
        let e2 = ctx.tape.bilinear_resize(x_en2, h, w)?;
        let first = cta_block(ctx, x_tri, e1, &p.blocks[0], p.mode)?;
        cta_block(ctx, first.out, e2, &p.blocks[1], p.mode)?.out
    };
    let am = p.am_head.forward(ctx, out)?;
    Ok((out, am))
}
