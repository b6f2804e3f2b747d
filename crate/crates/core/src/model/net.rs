use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::context::Ctx;
use super::cta::{cta_forward, CtaMode, CtaStack};
use super::fcc::{fcc_forward, seg_head, FccParams, SegHead, VariableBranch};
use super::wcc::{pretreat, wcc_forward, CuParams, Pretreat, WccOutputs};
use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Real;

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub channels: usize,
    /// Stem downsampling factor; a power of two.
    pub lambda: usize,
    /// Layers per capturing unit, counting the start point.
    pub depth: usize,
    pub n_cus: usize,
    pub cta_mode: CtaMode,
    pub variable: VariableBranch,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 3,
            channels: 64,
            lambda: 4,
            depth: 3,
            n_cus: 4,
            cta_mode: CtaMode::Transpose,
            variable: VariableBranch::Fourier,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.in_channels == 0 || self.channels == 0 {
            return bad("channel counts must be positive".into());
        }
        if self.lambda == 0 || !self.lambda.is_power_of_two() {
            return bad(format!("lambda must be a power of two, got {}", self.lambda));
        }
        if !(2..=4).contains(&self.depth) {
            return bad(format!("depth must be 2, 3 or 4, got {}", self.depth));
        }
        if self.n_cus == 0 {
            return bad("at least one capturing unit is required".into());
        }
        Ok(())
    }

    /// Image sides must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        self.lambda << (self.depth - 1)
    }
}

/// The assembled network. Holds parameter names only; values live in the
/// [`ParamStore`] returned by [`Fbwc::new`].
#[derive(Clone, Debug, PartialEq)]
pub struct Fbwc {
    pub config: ModelConfig,
    pub pretreat: Pretreat,
    pub units: Vec<CuParams>,
    pub cta: CtaStack,
    pub fcc: FccParams,
    pub head: SegHead,
}

/// Handles to every supervised output of a forward pass.
#[derive(Clone, Debug)]
pub struct FbwcOutput {
    /// `n x 1 x H x W`.
    pub seg_logits: Var,
    /// Attention-map logits upsampled to `n x 1 x H x W`.
    pub am_logits: Var,
    pub wcc: WccOutputs,
    pub x_tri_out: Var,
    pub fused: Var,
}

impl Fbwc {
    /// Builds the network and its parameters from a seeded generator.
    pub fn new<T: Real>(config: ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.channels;
        let pre = Pretreat::new(&mut store, &mut rng, config.in_channels, c, config.lambda);
        let units = (0..config.n_cus)
            .map(|i| CuParams::new(&mut store, &mut rng, &format!("wcc.cu{i}"), c, config.depth))
            .collect();
        let cta = CtaStack::new(&mut store, &mut rng, c, config.cta_mode);
        let fcc = FccParams::new(&mut store, &mut rng, c, config.n_cus, config.variable);
        let head = SegHead::new(&mut store, &mut rng, c, config.lambda);
        let net = Self {
            config,
            pretreat: pre,
            units,
            cta,
            fcc,
            head,
        };
        Ok((net, store))
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<FbwcOutput> {
        let [_, c, h, w] = ctx.tape.shape(x);
        if c != self.config.in_channels {
            return Err(crate::error::invalid(
                "forward",
                format!("expected {} input channels, got {c}", self.config.in_channels),
            ));
        }
        let m = self.config.size_multiple();
        if h % m != 0 || w % m != 0 {
            return Err(crate::error::invalid(
                "forward",
                format!("input {h}x{w} is not divisible by {m}"),
            ));
        }
        let (x_tri, x_cir) = pretreat(ctx, x, &self.pretreat)?;
        let wcc = wcc_forward(ctx, x_cir, &self.units)?;
        let (x_tri_out, am) = cta_forward(
            ctx,
            x_tri,
            wcc.first_encoder[0],
            wcc.first_encoder[1],
            &self.cta,
        )?;
        let am_logits = ctx.tape.bilinear_resize(am, h, w)?;
        let fused = fcc_forward(
            ctx,
            x_tri_out,
            &wcc.trough_points,
            &wcc.constraint_points,
            &self.fcc,
        )?;
        let seg_logits = seg_head(ctx, fused, &self.head)?;
        Ok(FbwcOutput {
            seg_logits,
            am_logits,
            wcc,
            x_tri_out,
            fused,
        })
    }
}
