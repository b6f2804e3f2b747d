use std::path::Path;

use super::checkpoint::Checkpoint;
use crate::data::{save_mask, SamplePair};
use crate::error::{Error, Result};
use crate::kernels::bilinear_resize;
use crate::metrics::{Counts, MetricsAccumulator, MetricsRecord};
use crate::model::{Ctx, Fbwc, Mode, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Evaluation settings.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    /// Images are resized to this `(height, width)` before inference and the
    /// prediction is resized back to the mask's size. `None` keeps native size.
    pub size: Option<(usize, usize)>,
    pub batch_size: usize,
    pub threshold: f32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            size: None,
            batch_size: 4,
            threshold: 0.5,
        }
    }
}

/// Set-level metrics plus per-sample scores and glass statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub record: MetricsRecord,
    pub per_sample: Vec<MetricsRecord>,
    /// Pooled glass-pixel and total-pixel counts of the ground truth.
    pub glass_pixels: u64,
    pub pixels: u64,
}

impl EvalReport {
    pub fn per_sample_csv(&self) -> String {
        let mut s = String::from("index,iou,mae,ber\n");
        for (i, r) in self.per_sample.iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", r.iou, r.mae, r.ber));
        }
        s
    }
}

/// Glass probabilities for an `n x 3 x H x W` batch, in eval mode, at the
/// input resolution.
pub fn predict_batch(net: &Fbwc, store: &ParamStore<f32>, images: &Tensor<f32>) -> Result<Tensor<f32>> {
    // eval mode never writes to the store
    let mut local = store.clone();
    let mut ctx = Ctx::new(&mut local, Mode::Eval);
    let x = ctx.input(images.clone());
    let out = net.forward(&mut ctx, x)?;
    Ok(ctx
        .value(out.seg_logits)
        .map(|z| 1.0 / (1.0 + (-z).exp())))
}

/// Probabilities for one sample image, resized for inference when `size` is
/// set and returned at the image's own resolution.
pub fn predict(
    net: &Fbwc,
    store: &ParamStore<f32>,
    image: &Tensor<f32>,
    size: Option<(usize, usize)>,
) -> Result<Tensor<f32>> {
    let (h, w) = (image.h(), image.w());
    let input = match size {
        Some((sh, sw)) => bilinear_resize(image, sh, sw)?,
        None => image.clone(),
    };
    let probs = predict_batch(net, store, &input)?;
    bilinear_resize(&probs, h, w)
}

/// Scores a network on `dataset`. When `pred_dir` is set, every probability
/// map is written there as `pred_NNNN.png`.
pub fn evaluate_model(
    net: &Fbwc,
    store: &ParamStore<f32>,
    dataset: &[SamplePair],
    cfg: &EvalConfig,
    pred_dir: Option<&Path>,
) -> Result<EvalReport> {
    if let Some(dir) = pred_dir {
        std::fs::create_dir_all(dir)?;
    }
    let mut acc = MetricsAccumulator::new();
    let mut per_sample = Vec::with_capacity(dataset.len());
    let mut glass = 0u64;
    let mut index = 0usize;
    for chunk in dataset.chunks(cfg.batch_size.max(1)) {
        let (h, w) = (chunk[0].height(), chunk[0].width());
        let uniform = chunk.iter().all(|s| (s.height(), s.width()) == (h, w));
        let probs: Vec<Tensor<f32>> = if uniform {
            let images: Vec<_> = chunk.iter().map(|s| s.image.clone()).collect();
            let batch = Tensor::stack(&images)?;
            let input = match cfg.size {
                Some((sh, sw)) => bilinear_resize(&batch, sh, sw)?,
                None => batch,
            };
            let p = bilinear_resize(&predict_batch(net, store, &input)?, h, w)?;
            (0..chunk.len()).map(|i| p.sample(i)).collect()
        } else {
            chunk
                .iter()
                .map(|s| predict(net, store, &s.image, cfg.size))
                .collect::<Result<_>>()?
        };
        for (s, p) in chunk.iter().zip(&probs) {
            let c = Counts::from_pair(p.data(), s.mask.data(), cfg.threshold)?;
            glass += c.tp + c.fn_;
            acc.push_counts(&c);
            per_sample.push(c.record());
            if let Some(dir) = pred_dir {
                save_mask(&dir.join(format!("pred_{index:04}.png")), p)?;
            }
            index += 1;
        }
    }
    Ok(EvalReport {
        record: acc.record(),
        per_sample,
        glass_pixels: glass,
        pixels: acc.counts().pixels(),
    })
}

/// [`evaluate_model`] for a checkpoint, refusing it when `expected` names a
/// different architecture.
pub fn evaluate(
    chk: &Checkpoint,
    expected: Option<&ModelConfig>,
    dataset: &[SamplePair],
    cfg: &EvalConfig,
    pred_dir: Option<&Path>,
) -> Result<EvalReport> {
    if let Some(want) = expected {
        if want != &chk.config.model {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds {:?}, requested {:?}",
                chk.config.model, want
            )));
        }
    }
    let net = chk.model()?;
    evaluate_model(&net, &chk.store, dataset, cfg, pred_dir)
}
