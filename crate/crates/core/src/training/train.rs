use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::optim::{poly_lr, sgd_step};
use crate::boundary::boundary_target;
use crate::data::{augment, epoch_order, SamplePair};
use crate::error::{invalid, Error, Result};
use crate::kernels::bilinear_resize;
use crate::loss::{network_loss, LossBreakdown};
use crate::model::{Ctx, Fbwc, Mode};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Header of the per-epoch training log.
pub const LOG_HEADER: &str = "epoch,iter,lr,l_seg,l_am,l_bc_mean,total";

/// Losses of one optimiser step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub epoch: usize,
    /// Steps completed after this one.
    pub iter: usize,
    pub lr: f64,
    pub loss: LossBreakdown,
}

/// Mean losses over one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Steps completed at the end of the epoch.
    pub iter: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub l_seg: f64,
    pub l_am: f64,
    pub l_bc_mean: f64,
    pub total: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch, self.iter, self.lr, self.l_seg, self.l_am, self.l_bc_mean, self.total
        )
    }
}

/// Where a run writes its artefacts. Both are optional.
#[derive(Clone, Debug, Default)]
pub struct TrainOutputs {
    /// Per-epoch CSV log.
    pub log: Option<PathBuf>,
    /// Directory for `epoch_NNNN.fbwc` snapshots and `final.fbwc`.
    pub checkpoints: Option<PathBuf>,
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub net: Fbwc,
    pub checkpoint: Checkpoint,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainRun {
    /// Mean total loss over the first and last `window` steps.
    pub fn smoothed_total(&self, window: usize) -> (f64, f64) {
        let w = window.clamp(1, self.steps.len().max(1));
        let mean = |s: &[StepRecord]| s.iter().map(|r| r.loss.total).sum::<f64>() / s.len() as f64;
        let n = self.steps.len();
        (mean(&self.steps[..w.min(n)]), mean(&self.steps[n - w.min(n)..]))
    }
}

/// Stacks samples into `n x 3 x H x W` images, `n x 1 x H x W` masks and
/// `n x 1 x H/l x W/l` boundary targets.
pub fn make_batch(
    samples: &[SamplePair],
    lambda: usize,
) -> Result<(Tensor<f32>, Tensor<f32>, Tensor<f32>)> {
    let images: Vec<_> = samples.iter().map(|s| s.image.clone()).collect();
    let masks: Vec<_> = samples.iter().map(|s| s.mask.clone()).collect();
    let bounds = masks
        .iter()
        .map(|m| boundary_target(m, lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        Tensor::stack(&images)?,
        Tensor::stack(&masks)?,
        Tensor::stack(&bounds)?,
    ))
}

/// Resizes a sample to `(h, w)` and re-binarises its mask; a no-op at the
/// native size.
pub fn fit_sample(s: &SamplePair, h: usize, w: usize) -> Result<SamplePair> {
    if (s.height(), s.width()) == (h, w) {
        return Ok(s.clone());
    }
    let image = bilinear_resize(&s.image, h, w)?;
    let mask = bilinear_resize(&s.mask, h, w)?.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    Ok(SamplePair { image, mask })
}

/// One optimiser step on a prepared batch. Returns the loss terms.
pub fn train_step(
    net: &Fbwc,
    store: &mut ParamStore<f32>,
    cfg: &TrainConfig,
    batch: (&Tensor<f32>, &Tensor<f32>, &Tensor<f32>),
    lr: f64,
    iter: usize,
) -> Result<LossBreakdown> {
    let (images, masks, bounds) = batch;
    let (grads, breakdown) = {
        let mut ctx = Ctx::new(store, Mode::Train);
        let x = ctx.input(images.clone());
        let out = net.forward(&mut ctx, x)?;
        let (loss, breakdown) = network_loss(&mut ctx.tape, &out, masks, bounds, &cfg.loss)?;
        if let Some((node, op)) = ctx.tape.first_non_finite() {
            return Err(Error::NonFinite {
                iter,
                tensor: format!("tape node #{node} ({op})"),
            });
        }
        let grads = ctx.tape.backward(loss)?;
        (ctx.param_grads(&grads), breakdown)
    };
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite {
            iter,
            tensor: format!("gradient of {name}"),
        });
    }
    let mut grads = grads;
    if cfg.clip_norm > 0.0 {
        clip_global_norm(&mut grads, cfg.clip_norm);
    }
    sgd_step(store, &grads, lr, cfg.momentum, cfg.weight_decay)?;
    Ok(breakdown)
}

/// Scales all gradients by a common factor so their joint L2 norm is at most
/// `max_norm`. Returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [(String, Tensor<f32>)], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.data())
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let k = (max_norm / norm) as f32;
        for (_, g) in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }
    norm
}

fn write_line(w: &mut Option<BufWriter<File>>, line: &str) -> Result<()> {
    if let Some(w) = w {
        writeln!(w, "{line}")?;
        w.flush()?;
    }
    Ok(())
}

/// Trains a freshly initialised network on `dataset`.
///
/// Every epoch visits the samples in a seeded random order in batches of
/// `batch_size` (the last batch may be smaller). Samples are augmented when
/// enabled, otherwise only resized to the training size. The learning rate
/// follows [`poly_lr`] over `epochs * steps_per_epoch` steps; `max_steps`
/// stops the run early without shortening that schedule.
pub fn train(cfg: &TrainConfig, dataset: &[SamplePair], outputs: &TrainOutputs) -> Result<TrainRun> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(invalid("train", "the dataset is empty"));
    }
    let (net, mut store) = Fbwc::new::<f32>(cfg.model.clone(), cfg.seed)?;
    let mut aug_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let steps_per_epoch = dataset.len().div_ceil(cfg.batch_size);
    let schedule = cfg.epochs * steps_per_epoch;
    let max_iter = match cfg.max_steps {
        0 => schedule,
        cap => cap.min(schedule),
    };

    let mut log = match &outputs.log {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Some(BufWriter::new(File::create(p)?))
        }
        None => None,
    };
    write_line(&mut log, LOG_HEADER)?;
    if let Some(dir) = &outputs.checkpoints {
        std::fs::create_dir_all(dir)?;
    }

    let mut steps = Vec::with_capacity(max_iter);
    let mut epochs = Vec::new();
    let mut iter = 0usize;
    let mut epoch = 0usize;
    while iter < max_iter {
        let order = epoch_order(dataset.len(), cfg.seed, epoch);
        let first = steps.len();
        for chunk in order.chunks(cfg.batch_size) {
            if iter >= max_iter {
                break;
            }
            let samples = chunk
                .iter()
                .map(|&i| {
                    if cfg.augment {
                        augment(&dataset[i], &mut aug_rng, (cfg.height, cfg.width))
                    } else {
                        fit_sample(&dataset[i], cfg.height, cfg.width)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            let (images, masks, bounds) = make_batch(&samples, cfg.model.lambda)?;
            let lr = poly_lr(iter, schedule, cfg.base_lr, cfg.poly_power)?;
            let loss = train_step(&net, &mut store, cfg, (&images, &masks, &bounds), lr, iter)?;
            iter += 1;
            steps.push(StepRecord {
                epoch,
                iter,
                lr,
                loss,
            });
        }
        let done = &steps[first..];
        let k = done.len().max(1) as f64;
        let mean = |f: fn(&StepRecord) -> f64| done.iter().map(f).sum::<f64>() / k;
        let record = EpochRecord {
            epoch,
            iter,
            lr: done.last().map_or(0.0, |s| s.lr),
            l_seg: mean(|s| s.loss.l_seg),
            l_am: mean(|s| s.loss.l_am),
            l_bc_mean: mean(|s| s.loss.bc_mean()),
            total: mean(|s| s.loss.total),
        };
        write_line(&mut log, &record.csv_row())?;
        epochs.push(record);
        epoch += 1;
        if let (Some(dir), true) = (&outputs.checkpoints, cfg.checkpoint_every > 0) {
            if epoch % cfg.checkpoint_every == 0 && iter < max_iter {
                Checkpoint::new(cfg.clone(), iter as u64, store.clone())
                    .save(&dir.join(format!("epoch_{epoch:04}.fbwc")))?;
            }
        }
    }
    let checkpoint = Checkpoint::new(cfg.clone(), iter as u64, store);
    if let Some(dir) = &outputs.checkpoints {
        checkpoint.save(&dir.join("final.fbwc"))?;
    }
    Ok(TrainRun {
        net,
        checkpoint,
        steps,
        epochs,
    })
}

/// Writes a per-epoch log in the training CSV format.
pub fn write_log(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for e in epochs {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}
