//! Fourier convolution controller and segmentation head.

use rand::Rng;

use super::context::Ctx;
use super::layers::Conv;
use crate::autodiff::Var;
use crate::error::{invalid, Result};
use crate::fourier::fourier_enhance;
use crate::params::ParamStore;
use crate::scalar::Real;

/// How trough points are enhanced before fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum VariableBranch {
    /// 1x1 projection plus the normalised real spectrum.
    #[default]
    Fourier,
    /// 1x1 projection plus a standard 3x3 convolution in place of the spectrum.
    StandardConv,
}

impl VariableBranch {
    pub fn name(self) -> &'static str {
        match self {
            VariableBranch::Fourier => "fft",
            VariableBranch::StandardConv => "scc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "fft" | "fourier" => VariableBranch::Fourier,
            "scc" | "conv" => VariableBranch::StandardConv,
            _ => return None,
        })
    }
}

/// 3x3 conv, ReLU, 1x1 conv to one channel, then upsampling by `lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct SegHead {
    pub conv3: Conv,
    pub conv1: Conv,
    pub lambda: usize,
}

impl SegHead {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        channels: usize,
        lambda: usize,
    ) -> Self {
        Self {
            conv3: Conv::new(store, rng, "head.conv3", channels, channels, 3),
            conv1: Conv::new(store, rng, "head.conv1", channels, 1, 1),
            lambda,
        }
    }
}

/// Weight (`g1`), variable (`g2`) and bias (`g3`) branch parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FccParams {
    pub weight: Conv,
    /// Bias-free 1x1 projection applied to every trough before fusion with its
    /// spectrum.
    pub enhance: Conv,
    /// 3x3 stand-in for the spectrum when the variable branch is ablated.
    pub standard: Option<Conv>,
    pub trough_proj: Vec<Conv>,
    pub constraint_proj: Vec<Conv>,
    pub variable: VariableBranch,
}

impl FccParams {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        channels: usize,
        units: usize,
        variable: VariableBranch,
    ) -> Self {
        let c = channels;
        Self {
            weight: Conv::new(store, rng, "fcc.weight", c, c, 1),
            enhance: Conv::without_bias(store, rng, "fcc.enhance", c, c, 1),
            standard: (variable == VariableBranch::StandardConv)
                .then(|| Conv::new(store, rng, "fcc.standard", c, c, 3)),
            trough_proj: (0..units)
                .map(|i| Conv::new(store, rng, &format!("fcc.trough{i}"), c, c, 1))
                .collect(),
            constraint_proj: (0..units)
                .map(|i| Conv::new(store, rng, &format!("fcc.constraint{i}"), c, c, 1))
                .collect(),
            variable,
        }
    }
}

/// Variable branch: each trough is enhanced, upsampled to `h x w`, projected
/// by its own 1x1 conv, and the results are summed.
pub fn branch_g2<T: Real>(
    ctx: &mut Ctx<'_, T>,
    troughs: &[Var],
    p: &FccParams,
    h: usize,
    w: usize,
) -> Result<Var> {
    if troughs.is_empty() {
        return Err(invalid("branch_g2", "no trough points"));
    }
    if troughs.len() != p.trough_proj.len() {
        return Err(invalid(
            "branch_g2",
            format!(
                "{} troughs for {} projections",
                troughs.len(),
                p.trough_proj.len()
            ),
        ));
    }
    let mut acc: Option<Var> = None;
    for (&t, proj) in troughs.iter().zip(&p.trough_proj) {
        let enhanced = match (p.variable, &p.standard) {
            (VariableBranch::StandardConv, Some(conv)) => {
                let lin = p.enhance.forward(ctx, t)?;
                let local = conv.forward(ctx, t)?;
                ctx.tape.add(lin, local)?
            }
            _ => {
                let k = ctx.param(&p.enhance.weight)?;
                fourier_enhance(&mut ctx.tape, t, k)?
            }
        };
        let up = ctx.tape.bilinear_resize(enhanced, h, w)?;
        let v = proj.forward(ctx, up)?;
        acc = Some(match acc {
            Some(a) => ctx.tape.add(a, v)?,
            None => v,
        });
    }
    Ok(acc.expect("non-empty"))
}

/// `W * V + B` with `W = g1(x_tri_out)`, `V = g2(troughs)` and
/// `B = sum_i g3_i(constraint_i)`, all at the detail branch's resolution.
pub fn fcc_forward<T: Real>(
    ctx: &mut Ctx<'_, T>,
    x_tri_out: Var,
    troughs: &[Var],
    constraints: &[Var],
    p: &FccParams,
) -> Result<Var> {
    if constraints.len() != p.constraint_proj.len() {
        return Err(invalid(
            "fcc_forward",
            format!(
                "{} constraint points for {} projections",
                constraints.len(),
                p.constraint_proj.len()
            ),
        ));
    }
    let [_, _, h, w] = ctx.tape.shape(x_tri_out);
    let weight = p.weight.forward(ctx, x_tri_out)?;
    let variable = branch_g2(ctx, troughs, p, h, w)?;
    let mut bias: Option<Var> = None;
    for (&c, proj) in constraints.iter().zip(&p.constraint_proj) {
        let b = proj.forward(ctx, c)?;
        bias = Some(match bias {
            Some(acc) => ctx.tape.add(acc, b)?,
            None => b,
        });
    }
    let bias = bias.ok_or_else(|| invalid("fcc_forward", "no constraint points"))?;
    let modulated = ctx.tape.mul(weight, variable)?;
    ctx.tape.add(modulated, bias)
}

/// Segmentation logits at full resolution (no sigmoid).
pub fn seg_head<T: Real>(ctx: &mut Ctx<'_, T>, fused: Var, p: &SegHead) -> Result<Var> {
    let [_, _, h, w] = ctx.tape.shape(fused);
    let f = p.conv3.forward(ctx, fused)?;
    let f = ctx.tape.relu(f);
    let logits = p.conv1.forward(ctx, f)?;
    ctx.tape.bilinear_resize(logits, h * p.lambda, w * p.lambda)
}
