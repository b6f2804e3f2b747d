//! Segmentation quality: intersection over union, mean absolute error and
//! balanced error rate.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Scores for one image or the mean over a set.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRecord {
    /// In `[0, 1]`.
    pub iou: f64,
    /// In `[0, 1]`, on raw probabilities.
    pub mae: f64,
    /// Percentage in `[0, 100]`.
    pub ber: f64,
}

/// Confusion counts of a binarised prediction plus the absolute error of the
/// raw probabilities.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub abs_err: f64,
}

impl Counts {
    pub fn from_pair(pred: &[f32], gt: &[f32], threshold: f32) -> Result<Self> {
        let mut c = Counts::default();
        for (&p, &g) in pred.iter().zip(gt) {
            if g != 0.0 && g != 1.0 {
                return Err(Error::NonBinaryMask(g));
            }
            let hit = p >= threshold;
            let glass = g == 1.0;
            match (hit, glass) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
            c.abs_err += (p as f64 - g as f64).abs();
        }
        Ok(c)
    }

    pub fn pixels(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn iou(&self) -> f64 {
        let union = self.tp + self.fp + self.fn_;
        if union == 0 {
            1.0
        } else {
            self.tp as f64 / union as f64
        }
    }

    pub fn mae(&self) -> f64 {
        match self.pixels() {
            0 => 0.0,
            n => self.abs_err / n as f64,
        }
    }

    pub fn ber(&self) -> f64 {
        // an empty class scores 1 when nothing was wrongly assigned to it
        let pos = match self.tp + self.fn_ {
            0 => f64::from(u8::from(self.fp == 0)),
            n => self.tp as f64 / n as f64,
        };
        let neg = match self.tn + self.fp {
            0 => f64::from(u8::from(self.fn_ == 0)),
            n => self.tn as f64 / n as f64,
        };
        100.0 * (1.0 - 0.5 * (pos + neg))
    }

    pub fn record(&self) -> MetricsRecord {
        MetricsRecord {
            iou: self.iou(),
            mae: self.mae(),
            ber: self.ber(),
        }
    }
}

/// Metrics of one `1 x H x W` probability map against its binary mask.
pub fn metrics(pred: &Tensor<f32>, gt: &Tensor<f32>, threshold: f32) -> Result<MetricsRecord> {
    pred.expect_same_shape("metrics", gt)?;
    Ok(Counts::from_pair(pred.data(), gt.data(), threshold)?.record())
}

/// Set-level scores: IoU and BER from confusion counts pooled over every
/// pixel, MAE as the mean of per-image MAEs.
#[derive(Clone, Debug, Default)]
pub struct MetricsAccumulator {
    counts: Counts,
    mae_sum: f64,
    images: usize,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_counts(&mut self, c: &Counts) {
        self.counts.tp += c.tp;
        self.counts.fp += c.fp;
        self.counts.tn += c.tn;
        self.counts.fn_ += c.fn_;
        self.counts.abs_err += c.abs_err;
        self.mae_sum += c.mae();
        self.images += 1;
    }

    /// Scores every image of an `n x 1 x H x W` batch.
    pub fn push_batch(&mut self, pred: &Tensor<f32>, gt: &Tensor<f32>, threshold: f32) -> Result<()> {
        pred.expect_same_shape("metrics", gt)?;
        for i in 0..pred.n() {
            let c = Counts::from_pair(pred.plane(i, 0), gt.plane(i, 0), threshold)?;
            self.push_counts(&c);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images
    }

    pub fn is_empty(&self) -> bool {
        self.images == 0
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn record(&self) -> MetricsRecord {
        MetricsRecord {
            iou: self.counts.iou(),
            mae: self.mae_sum / self.images.max(1) as f64,
            ber: self.counts.ber(),
        }
    }
}

/// IoU of predicting every pixel as glass, and as background, on a set with
/// the given pooled counts of glass and total pixels.
pub fn baseline_ious(glass: u64, pixels: u64) -> (f64, f64) {
    let all_pos = Counts {
        tp: glass,
        fp: pixels - glass,
        ..Counts::default()
    };
    let all_neg = Counts {
        fn_: glass,
        tn: pixels - glass,
        ..Counts::default()
    };
    (all_pos.iou(), all_neg.iou())
}
