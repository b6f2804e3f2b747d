use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SamplePair;
use crate::error::Result;
use crate::kernels::bilinear_resize;

/// Random flip and rescale settings.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub scale: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            scale: (0.75, 1.25),
        }
    }
}

/// [`augment_with`] using the default flip probability and scale range.
pub fn augment(s: &SamplePair, rng: &mut impl Rng, target: (usize, usize)) -> Result<SamplePair> {
    augment_with(s, rng, target, &AugmentConfig::default())
}

/// Flips image and mask together, rescales by a random factor, then resizes
/// to `target` (height, width). The mask is re-binarised at 0.5.
pub fn augment_with(
    s: &SamplePair,
    rng: &mut impl Rng,
    target: (usize, usize),
    cfg: &AugmentConfig,
) -> Result<SamplePair> {
    let flip = rng.gen_bool(cfg.flip_prob);
    let scale = if cfg.scale.0 < cfg.scale.1 {
        rng.gen_range(cfg.scale.0..=cfg.scale.1)
    } else {
        cfg.scale.0
    };
    let (mut image, mut mask) = if flip {
        (s.image.flip_horizontal(), s.mask.flip_horizontal())
    } else {
        (s.image.clone(), s.mask.clone())
    };
    let sh = ((s.height() as f64 * scale).round() as usize).max(1);
    let sw = ((s.width() as f64 * scale).round() as usize).max(1);
    for (h, w) in [(sh, sw), target] {
        image = bilinear_resize(&image, h, w)?;
        mask = bilinear_resize(&mask, h, w)?;
    }
    let mask = mask.map(|v| if v >= 0.5 { 1.0 } else { 0.0 });
    Ok(SamplePair { image, mask })
}

/// Sample order for one epoch, a seeded permutation of `0..n`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{canny_boundary, DEFAULT_HIGH, DEFAULT_LOW};
    use crate::data::{gen_synthetic, SceneConfig};

    #[test]
    fn forced_flip_twice_is_identity() {
        let s = gen_synthetic(&SceneConfig::default(), 1).unwrap();
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            scale: (1.0, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let once = augment_with(&s, &mut rng, (64, 64), &cfg).unwrap();
        assert_ne!(once, s);
        let twice = augment_with(&once, &mut rng, (64, 64), &cfg).unwrap();
        assert_eq!(twice, s);
    }

    #[test]
    fn flipped_boundary_is_flipped() {
        let s = gen_synthetic(&SceneConfig::default(), 2).unwrap();
        let edges = canny_boundary(&s.mask, DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        let flipped = canny_boundary(&s.mask.flip_horizontal(), DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        assert_eq!(flipped, edges.flip_horizontal());
    }

    #[test]
    fn epoch_orders_are_seeded_permutations() {
        let a = epoch_order(10, 3, 0);
        assert_eq!(a, epoch_order(10, 3, 0));
        assert_ne!(a, epoch_order(10, 3, 1));
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }
}
