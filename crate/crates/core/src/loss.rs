//! Training objectives: online hard-example mining cross-entropy, plain
//! binary cross-entropy on logits, and their composition into the total loss.

use crate::autodiff::{bce_with_logits, Tape, Var};
use crate::error::{invalid, Result};
use crate::model::FbwcOutput;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Pixels at least this confident in their true class are dropped by OHEM.
pub const OHEM_KEEP_THRESH: f64 = 0.7;

/// Default `min_kept` for an `n x 1 x h x w` batch: `ceil(h*w/16)` per image.
pub fn default_min_kept(shape: [usize; 4]) -> usize {
    let [n, _, h, w] = shape;
    (h * w).div_ceil(16) * n
}

/// 0/1 mask of the pixels OHEM keeps.
///
/// A pixel is kept when the predicted probability of its true class is below
/// `keep_thresh`. If that leaves fewer than `min_kept` pixels, the `min_kept`
/// hardest pixels (lowest true-class probability, earlier index first on ties)
/// are kept instead. `keep_thresh >= 1` keeps everything.
pub fn ohem_mask<T: Real>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    keep_thresh: f64,
    min_kept: usize,
) -> Result<Tensor<T>> {
    logits.expect_same_shape("ohem_ce", target)?;
    if min_kept == 0 {
        return Err(invalid("ohem_ce", "min_kept must be at least 1"));
    }
    if keep_thresh >= 1.0 {
        return Ok(Tensor::ones(logits.shape()));
    }
    let confidence: Vec<f64> = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| {
            let p = 1.0 / (1.0 + (-z.to_f64_lossy()).exp());
            let t = t.to_f64_lossy();
            t * p + (1.0 - t) * (1.0 - p)
        })
        .collect();
    let mut keep: Vec<bool> = confidence.iter().map(|&p| p < keep_thresh).collect();
    if keep.iter().filter(|&&k| k).count() < min_kept {
        let mut order: Vec<usize> = (0..confidence.len()).collect();
        order.sort_by(|&a, &b| confidence[a].total_cmp(&confidence[b]).then(a.cmp(&b)));
        keep.fill(false);
        for &i in order.iter().take(min_kept) {
            keep[i] = true;
        }
    }
    let data = keep
        .into_iter()
        .map(|k| if k { T::one() } else { T::zero() })
        .collect();
    Tensor::new(logits.shape(), data)
}

/// Mean binary cross-entropy over the pixels selected by [`ohem_mask`].
pub fn ohem_ce<T: Real>(
    tape: &mut Tape<T>,
    logits: Var,
    target: &Tensor<T>,
    keep_thresh: f64,
    min_kept: usize,
) -> Result<Var> {
    let mask = ohem_mask(tape.value(logits), target, keep_thresh, min_kept)?;
    tape.weighted_bce(logits, target, &mask)
}

/// Mean binary cross-entropy on logits.
pub fn bce_logits<T: Real>(tape: &mut Tape<T>, logits: Var, target: &Tensor<T>) -> Result<Var> {
    let ones = Tensor::ones(tape.shape(logits));
    tape.weighted_bce(logits, target, &ones)
}

/// Value-only [`bce_logits`].
pub fn bce_logits_value<T: Real>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    logits.expect_same_shape("bce_logits", target)?;
    let sum: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| bce_with_logits(z, t).to_f64_lossy())
        .sum();
    Ok(sum / logits.numel().max(1) as f64)
}

/// Loss terms of one step. Disabled terms are reported as zero.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_seg: f64,
    pub l_am: f64,
    /// One boundary loss per capturing unit.
    pub bc_losses: Vec<f64>,
    pub total: f64,
}

impl LossBreakdown {
    pub fn bc_mean(&self) -> f64 {
        self.bc_losses.iter().sum::<f64>() / self.bc_losses.len() as f64
    }
}

/// `l_seg + l_am + mean(bc_losses)`.
pub fn total_loss(l_seg: f64, l_am: f64, bc_losses: &[f64]) -> Result<LossBreakdown> {
    if bc_losses.is_empty() {
        return Err(invalid("total_loss", "need one boundary loss per capturing unit"));
    }
    let mean = bc_losses.iter().sum::<f64>() / bc_losses.len() as f64;
    Ok(LossBreakdown {
        l_seg,
        l_am,
        bc_losses: bc_losses.to_vec(),
        total: l_seg + l_am + mean,
    })
}

/// Loss settings, including the ablation switches.
#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub keep_thresh: f64,
    /// `None` uses [`default_min_kept`].
    pub min_kept: Option<usize>,
    /// Drop the boundary-constraint term.
    pub bc_off: bool,
    /// Drop the attention-map term.
    pub am_off: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            keep_thresh: OHEM_KEEP_THRESH,
            min_kept: None,
            bc_off: false,
            am_off: false,
        }
    }
}

/// Records the full objective for one forward pass.
///
/// `mask` is the `n x 1 x H x W` glass mask, `boundary` the `n x 1 x H/l x W/l`
/// boundary target shared by every capturing unit.
pub fn network_loss<T: Real>(
    tape: &mut Tape<T>,
    out: &FbwcOutput,
    mask: &Tensor<T>,
    boundary: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    let min_kept = cfg
        .min_kept
        .unwrap_or_else(|| default_min_kept(mask.shape()));
    let scalar = |tape: &Tape<T>, v: Var| tape.value(v).data()[0].to_f64_lossy();

    let seg = ohem_ce(tape, out.seg_logits, mask, cfg.keep_thresh, min_kept)?;
    let mut total = seg;
    let l_seg = scalar(tape, seg);

    let mut l_am = 0.0;
    if !cfg.am_off {
        let am = ohem_ce(tape, out.am_logits, mask, cfg.keep_thresh, min_kept)?;
        l_am = scalar(tape, am);
        total = tape.add(total, am)?;
    }

    let units = out.wcc.boundary_logits.len();
    let mut bc = vec![0.0; units];
    if !cfg.bc_off {
        let mut sum: Option<Var> = None;
        for (slot, &logits) in bc.iter_mut().zip(&out.wcc.boundary_logits) {
            let l = bce_logits(tape, logits, boundary)?;
            *slot = scalar(tape, l);
            sum = Some(match sum {
                Some(s) => tape.add(s, l)?,
                None => l,
            });
        }
        if let Some(sum) = sum {
            let mean = tape.scale(sum, T::one() / T::from_usize_lossy(units));
            total = tape.add(total, mean)?;
        }
    }
    let breakdown = total_loss(l_seg, l_am, &bc)?;
    Ok((total, breakdown))
}
