use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SamplePair;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameters of the synthetic glass-scene generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// Inclusive range of glass regions per scene.
    pub regions: (usize, usize),
    /// Transmission range: the share of the background visible through glass.
    pub alpha: (f32, f32),
    /// Per-channel range of the glass tint.
    pub tint: [(f32, f32); 3],
    /// Chance that a region carries a reflection highlight.
    pub highlight_prob: f64,
    pub highlight_intensity: f32,
    /// Lattice spacing of the coarsest background noise octave, in pixels.
    pub texture_scale: usize,
    pub octaves: usize,
    /// Width of the darker frame along each region's border.
    pub frame_width: usize,
    /// Control generator: glass interiors are filled with the tint only.
    pub opaque: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            regions: (1, 3),
            alpha: (0.4, 0.8),
            tint: [(0.45, 0.7), (0.7, 0.9), (0.8, 1.0)],
            highlight_prob: 0.5,
            highlight_intensity: 0.35,
            texture_scale: 16,
            octaves: 3,
            frame_width: 1,
            opaque: false,
        }
    }
}

/// Glass-pixel share every generated mask falls into.
pub const GLASS_FRACTION: (f64, f64) = (0.05, 0.7);
/// Supported transmission range for regular scenes.
pub const ALPHA_LIMITS: (f32, f32) = (0.3, 0.95);

impl SceneConfig {
    /// Checks the configuration for regular use, including the transmission
    /// limits and divisibility of the image sides by `multiple`.
    pub fn validate(&self, multiple: usize) -> Result<()> {
        self.check_basic()?;
        let (lo, hi) = self.alpha;
        if lo < ALPHA_LIMITS.0 || hi > ALPHA_LIMITS.1 {
            return Err(Error::Config(format!(
                "alpha range [{lo}, {hi}] must lie within [{}, {}]",
                ALPHA_LIMITS.0, ALPHA_LIMITS.1
            )));
        }
        if multiple > 0 && (self.height % multiple != 0 || self.width % multiple != 0) {
            return Err(Error::Config(format!(
                "image size {}x{} is not divisible by {multiple}",
                self.height, self.width
            )));
        }
        Ok(())
    }

    fn check_basic(&self) -> Result<()> {
        let (lo, hi) = self.alpha;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::Config(format!("invalid alpha range [{lo}, {hi}]")));
        }
        if self
            .tint
            .iter()
            .any(|&(a, b)| !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) || a > b)
        {
            return Err(Error::Config("tint ranges must lie within [0, 1]".into()));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::Config("scenes need at least 16x16 pixels".into()));
        }
        if self.regions.0 == 0 || self.regions.0 > self.regions.1 {
            return Err(Error::Config(format!(
                "invalid region count range {:?}",
                self.regions
            )));
        }
        if self.texture_scale == 0 || self.octaves == 0 {
            return Err(Error::Config("texture scale and octaves must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.highlight_prob) {
            return Err(Error::Config("highlight probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A generated sample together with the texture behind the glass.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub sample: SamplePair,
    pub background: Tensor<f32>,
    /// Pixels of the darker border ring.
    pub frame: Tensor<f32>,
}

#[derive(Clone, Copy, Debug)]
struct RoundRect {
    x0: f32,
    y0: f32,
    x1: f32,
    y1: f32,
    r: f32,
}

impl RoundRect {
    fn contains(&self, px: f32, py: f32) -> bool {
        if px < self.x0 || px >= self.x1 || py < self.y0 || py >= self.y1 {
            return false;
        }
        let dx = (self.x0 + self.r - px).max(px - (self.x1 - self.r)).max(0.0);
        let dy = (self.y0 + self.r - py).max(py - (self.y1 - self.r)).max(0.0);
        dx * dx + dy * dy <= self.r * self.r
    }

    fn shrink(&self, by: f32) -> Self {
        Self {
            x0: self.x0 + by,
            y0: self.y0 + by,
            x1: self.x1 - by,
            y1: self.y1 - by,
            r: (self.r - by).max(0.0),
        }
    }
}

fn value_noise(rng: &mut impl Rng, h: usize, w: usize, cfg: &SceneConfig) -> Vec<f32> {
    let mut out = vec![0.0f32; h * w];
    let mut amp = 1.0f32;
    let mut total = 0.0f32;
    let smooth = |t: f32| t * t * (3.0 - 2.0 * t);
    for o in 0..cfg.octaves {
        let cell = (cfg.texture_scale >> o).max(1) as f32;
        let gh = (h as f32 / cell).ceil() as usize + 2;
        let gw = (w as f32 / cell).ceil() as usize + 2;
        let lattice: Vec<f32> = (0..gh * gw).map(|_| rng.gen::<f32>()).collect();
        for y in 0..h {
            let fy = y as f32 / cell;
            let (iy, ty) = (fy.floor() as usize, smooth(fy.fract()));
            for x in 0..w {
                let fx = x as f32 / cell;
                let (ix, tx) = (fx.floor() as usize, smooth(fx.fract()));
                let g = |yy: usize, xx: usize| lattice[yy * gw + xx];
                let top = g(iy, ix) + (g(iy, ix + 1) - g(iy, ix)) * tx;
                let bot = g(iy + 1, ix) + (g(iy + 1, ix + 1) - g(iy + 1, ix)) * tx;
                out[y * w + x] += amp * (top + (bot - top) * ty);
            }
        }
        total += amp;
        amp *= 0.5;
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

fn layout(rng: &mut impl Rng, cfg: &SceneConfig) -> Vec<RoundRect> {
    let (h, w) = (cfg.height as f32, cfg.width as f32);
    let count = rng.gen_range(cfg.regions.0..=cfg.regions.1);
    (0..count)
        .map(|_| {
            let rw = rng.gen_range(0.2..0.55) * w;
            let rh = rng.gen_range(0.2..0.55) * h;
            let x0 = rng.gen_range(0.0..(w - rw)).floor();
            let y0 = rng.gen_range(0.0..(h - rh)).floor();
            let r = rng.gen_range(0.0..0.3) * rw.min(rh);
            RoundRect {
                x0,
                y0,
                x1: x0 + rw.round(),
                y1: y0 + rh.round(),
                r,
            }
        })
        .collect()
}

fn coverage(rects: &[RoundRect], h: usize, w: usize) -> Vec<bool> {
    let mut m = vec![false; h * w];
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            m[y * w + x] = rects.iter().any(|r| r.contains(px, py));
        }
    }
    m
}

/// Generates one scene with its background layer. Deterministic per
/// `(cfg, seed)`.
pub fn gen_scene(cfg: &SceneConfig, seed: u64) -> Result<Scene> {
    cfg.check_basic()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (cfg.height, cfg.width);
    let mut bg = Tensor::<f32>::zeros([1, 3, h, w]);
    for c in 0..3 {
        let plane = value_noise(&mut rng, h, w, cfg);
        bg.plane_mut(0, c).copy_from_slice(&plane);
    }

    let mut rects = Vec::new();
    let mut covered = Vec::new();
    for _ in 0..256 {
        rects = layout(&mut rng, cfg);
        covered = coverage(&rects, h, w);
        let frac = covered.iter().filter(|&&b| b).count() as f64 / (h * w) as f64;
        if frac >= GLASS_FRACTION.0 && frac <= GLASS_FRACTION.1 {
            break;
        }
        rects.clear();
    }
    if rects.is_empty() {
        // a centred quarter-area pane always satisfies the fraction bounds
        let (fw, fh) = (w as f32, h as f32);
        rects = vec![RoundRect {
            x0: (fw / 4.0).floor(),
            y0: (fh / 4.0).floor(),
            x1: (3.0 * fw / 4.0).floor(),
            y1: (3.0 * fh / 4.0).floor(),
            r: 0.0,
        }];
        covered = coverage(&rects, h, w);
    }

    let mut image = bg.clone();
    let mut frame = Tensor::<f32>::zeros([1, 1, h, w]);
    for rect in &rects {
        let alpha = rng.gen_range(cfg.alpha.0..=cfg.alpha.1);
        let tint = cfg.tint.map(|(lo, hi)| rng.gen_range(lo..=hi));
        let highlight = rng.gen_bool(cfg.highlight_prob).then(|| {
            let cx = rng.gen_range(rect.x0..rect.x1);
            let cy = rng.gen_range(rect.y0..rect.y1);
            let sigma = 0.25 * (rect.x1 - rect.x0).min(rect.y1 - rect.y0);
            (cx, cy, sigma.max(1.0))
        });
        let inner = rect.shrink(cfg.frame_width as f32);
        for y in 0..h {
            for x in 0..w {
                let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
                if !rect.contains(px, py) {
                    continue;
                }
                let glow = highlight.map_or(0.0, |(cx, cy, s)| {
                    let d2 = (px - cx).powi(2) + (py - cy).powi(2);
                    cfg.highlight_intensity * (-d2 / (2.0 * s * s)).exp()
                });
                let on_frame = !inner.contains(px, py);
                if on_frame {
                    frame.set(0, 0, y, x, 1.0);
                }
                for (c, &t) in tint.iter().enumerate() {
                    let under = image.at(0, c, y, x);
                    let mut v = if cfg.opaque {
                        t
                    } else {
                        alpha * under + (1.0 - alpha) * t
                    };
                    if on_frame {
                        v *= 0.45;
                    }
                    v = (v + glow).min(1.0);
                    image.set(0, c, y, x, v);
                }
            }
        }
    }
    let mask = Tensor::new(
        [1, 1, h, w],
        covered.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
    )?;
    Ok(Scene {
        sample: SamplePair { image, mask },
        background: bg,
        frame,
    })
}

/// One synthetic image/mask pair.
pub fn gen_synthetic(cfg: &SceneConfig, seed: u64) -> Result<SamplePair> {
    Ok(gen_scene(cfg, seed)?.sample)
}

/// `count` scenes whose seeds are drawn from `seed`.
pub fn synthetic_set(cfg: &SceneConfig, count: usize, seed: u64) -> Result<Vec<SamplePair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| gen_synthetic(cfg, rng.gen()))
        .collect()
}
