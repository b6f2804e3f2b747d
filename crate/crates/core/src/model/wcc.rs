//! Pretreatment stem and the wide backbone of serially chained capturing units.

use rand::Rng;

use super::context::Ctx;
use super::layers::Conv;
use crate::autodiff::Var;
use crate::error::{invalid, Result};
use crate::params::ParamStore;
use crate::scalar::Real;

/// Shared stem: `log2(lambda)` stages of 3x3 conv, ReLU and 2x2 max-pool
/// (a single conv without pooling when `lambda == 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct Pretreat {
    pub convs: Vec<Conv>,
    pub lambda: usize,
}

impl Pretreat {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        in_channels: usize,
        channels: usize,
        lambda: usize,
    ) -> Self {
        let stages = (lambda.trailing_zeros() as usize).max(1);
        let convs = (0..stages)
            .map(|i| {
                let cin = if i == 0 { in_channels } else { channels };
                Conv::new(store, rng, &format!("pre.conv{i}"), cin, channels, 3)
            })
            .collect();
        Self { convs, lambda }
    }
}

/// Maps an image batch to the two identical stem features `(x_tri, x_cir)`,
/// each `C x H/lambda x W/lambda`.
pub fn pretreat<T: Real>(ctx: &mut Ctx<'_, T>, x: Var, p: &Pretreat) -> Result<(Var, Var)> {
    let [_, _, h, w] = ctx.tape.shape(x);
    if p.lambda == 0 || !p.lambda.is_power_of_two() || h % p.lambda != 0 || w % p.lambda != 0 {
        return Err(invalid(
            "pretreat",
            format!("input {h}x{w} is not divisible by lambda={}", p.lambda),
        ));
    }
    let pools = p.lambda.trailing_zeros() as usize;
    let mut f = x;
    for (i, conv) in p.convs.iter().enumerate() {
        f = conv.forward(ctx, f)?;
        f = ctx.tape.relu(f);
        if i < pools {
            f = ctx.tape.maxpool2(f)?;
        }
    }
    // both branches start from the same feature
    Ok((f, f))
}

/// Parameters of one capturing unit: `depth - 1` encoder convs, as many
/// decoder convs, and a 1x1 boundary head on the constraint point.
#[derive(Clone, Debug, PartialEq)]
pub struct CuParams {
    pub depth: usize,
    pub encoder: Vec<Conv>,
    pub decoder: Vec<Conv>,
    pub boundary_head: Conv,
}

impl CuParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        prefix: &str,
        channels: usize,
        depth: usize,
    ) -> Self {
        assert!(depth >= 2, "a capturing unit needs at least two layers");
        let encoder = (0..depth - 1)
            .map(|l| Conv::new(store, rng, &format!("{prefix}.enc{l}"), channels, channels, 3))
            .collect();
        let decoder = (0..depth - 1)
            .map(|l| Conv::new(store, rng, &format!("{prefix}.dec{l}"), channels, channels, 3))
            .collect();
        let boundary_head = Conv::new(store, rng, &format!("{prefix}.head"), channels, 1, 1);
        Self {
            depth,
            encoder,
            decoder,
            boundary_head,
        }
    }
}

/// Everything one capturing unit produces.
#[derive(Clone, Debug)]
pub struct CuOutput {
    /// End point `x_De,1`, same shape as the input.
    pub constraint: Var,
    /// Deepest encoder feature `x_En,depth`.
    pub trough: Var,
    /// Encoder features `x_En,1 ..= x_En,depth`; the first is the input.
    pub encoder: Vec<Var>,
}

/// One encoder-decoder capturing unit.
///
/// Encoder: `x_En,l = pool(conv(x_En,l-1))` from the start point. Decoder,
/// starting at the trough: `x_De,l = conv(up(x_De,l+1) + x_En,l)`.
pub fn cu_forward<T: Real>(ctx: &mut Ctx<'_, T>, x: Var, p: &CuParams) -> Result<CuOutput> {
    let [_, _, h, w] = ctx.tape.shape(x);
    let factor = 1usize << (p.depth - 1);
    if h % factor != 0 || w % factor != 0 {
        return Err(invalid(
            "cu_forward",
            format!("input {h}x{w} is not divisible by {factor}"),
        ));
    }
    let mut encoder = vec![x];
    for conv in &p.encoder {
        let prev = *encoder.last().expect("non-empty");
        let f = conv.forward(ctx, prev)?;
        encoder.push(ctx.tape.maxpool2(f)?);
    }
    let trough = *encoder.last().expect("non-empty");
    let mut d = trough;
    for l in (0..p.depth - 1).rev() {
        let skip = encoder[l];
        let [_, _, sh, sw] = ctx.tape.shape(skip);
        let up = ctx.tape.bilinear_resize(d, sh, sw)?;
        let joined = ctx.tape.add(up, skip)?;
        d = p.decoder[l].forward(ctx, joined)?;
    }
    Ok(CuOutput {
        constraint: d,
        trough,
        encoder,
    })
}

/// Outputs of the whole backbone, one entry per capturing unit.
#[derive(Clone, Debug)]
pub struct WccOutputs {
    pub constraint_points: Vec<Var>,
    pub trough_points: Vec<Var>,
    pub boundary_logits: Vec<Var>,
    /// Encoder features of the first unit, used by the attention branch.
    pub first_encoder: Vec<Var>,
}

/// Chains capturing units: unit `i` consumes the constraint point of unit `i-1`
/// and the first unit consumes `x_cir`.
pub fn wcc_forward<T: Real>(ctx: &mut Ctx<'_, T>, x_cir: Var, units: &[CuParams]) -> Result<WccOutputs> {
    if units.is_empty() {
        return Err(invalid("wcc_forward", "at least one capturing unit is required"));
    }
    let mut out = WccOutputs {
        constraint_points: Vec::with_capacity(units.len()),
        trough_points: Vec::with_capacity(units.len()),
        boundary_logits: Vec::with_capacity(units.len()),
        first_encoder: Vec::new(),
    };
    let mut x = x_cir;
    for (i, p) in units.iter().enumerate() {
        let cu = cu_forward(ctx, x, p)?;
        let logits = p.boundary_head.forward(ctx, cu.constraint)?;
        if i == 0 {
            out.first_encoder = cu.encoder.clone();
        }
        out.constraint_points.push(cu.constraint);
        out.trough_points.push(cu.trough);
        out.boundary_logits.push(logits);
        x = cu.constraint;
    }
    Ok(out)
}
