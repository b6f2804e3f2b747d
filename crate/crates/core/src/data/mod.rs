//! Samples, synthetic glass scenes, on-disk datasets and augmentation.

mod augment;
mod io;
mod synth;

pub use augment::{augment, augment_with, epoch_order, AugmentConfig};
pub use io::{
    load_image, load_manifest, load_mask, load_sample, parse_manifest, save_image, save_mask,
    write_dataset, DatasetManifest, Split,
};
pub use synth::{gen_scene, gen_synthetic, synthetic_set, Scene, SceneConfig};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// An RGB image in `[0, 1]` (`1 x 3 x H x W`) and its binary glass mask
/// (`1 x 1 x H x W`).
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub image: Tensor<f32>,
    pub mask: Tensor<f32>,
}

impl SamplePair {
    pub fn new(image: Tensor<f32>, mask: Tensor<f32>) -> Result<Self> {
        let [n, c, h, w] = image.shape();
        let [mn, mc, mh, mw] = mask.shape();
        if n != 1 || c != 3 || mn != 1 || mc != 1 {
            return Err(Error::ShapeMismatch {
                op: "sample",
                left: image.shape().to_vec(),
                right: mask.shape().to_vec(),
            });
        }
        if (h, w) != (mh, mw) {
            return Err(Error::SizeMismatch {
                image: "image".into(),
                mask: "mask".into(),
                image_dims: (w as u32, h as u32),
                mask_dims: (mw as u32, mh as u32),
            });
        }
        if let Some(&v) = mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::NonBinaryMask(v));
        }
        Ok(Self { image, mask })
    }

    pub fn height(&self) -> usize {
        self.image.h()
    }

    pub fn width(&self) -> usize {
        self.image.w()
    }

    pub fn glass_fraction(&self) -> f64 {
        self.mask.data().iter().map(|&v| v as f64).sum::<f64>() / self.mask.numel() as f64
    }
}
