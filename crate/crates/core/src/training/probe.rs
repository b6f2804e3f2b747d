//! Does adding the normalised real spectrum to the input of a small CNN lower
//! its training loss on a boundary-prediction task?

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::optim::sgd_step;
use crate::boundary::{canny_boundary, dilate, DEFAULT_HIGH, DEFAULT_LOW};
use crate::data::{gen_synthetic, SceneConfig};
use crate::error::{invalid, Result};
use crate::fourier::real_spectrum;
use crate::model::{Conv, Ctx, Mode};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    pub size: usize,
    pub samples: usize,
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub momentum: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            size: 32,
            samples: 8,
            hidden: 8,
            steps: 150,
            lr: 0.05,
            momentum: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbeInput {
    /// The grayscale image.
    Plain,
    /// The image plus its normalised real spectrum.
    Spectral,
}

impl ProbeInput {
    pub fn name(self) -> &'static str {
        match self {
            ProbeInput::Plain => "plain",
            ProbeInput::Spectral => "fft",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub seed: u64,
    pub input: ProbeInput,
    pub initial_loss: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
}

impl ProbeReport {
    pub fn mean_final(&self, input: ProbeInput) -> f64 {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.input == input)
            .map(|r| r.final_loss)
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    }

    /// Every run ended below where it started.
    pub fn all_decreased(&self) -> bool {
        self.rows.iter().all(|r| r.final_loss < r.initial_loss)
    }

    /// Mean final loss with the spectral input is at most the plain one.
    pub fn spectral_not_worse(&self) -> bool {
        self.mean_final(ProbeInput::Spectral) <= self.mean_final(ProbeInput::Plain)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,input,initial_loss,final_loss\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.seed,
                r.input.name(),
                r.initial_loss,
                r.final_loss
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        format!(
            "mean final loss: plain {:.6}, fft {:.6}; fft <= plain: {}; all decreased: {}",
            self.mean_final(ProbeInput::Plain),
            self.mean_final(ProbeInput::Spectral),
            self.spectral_not_worse(),
            self.all_decreased()
        )
    }
}

/// Grayscale scenes and their dilated boundary maps.
fn task(cfg: &ProbeConfig, seed: u64) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let scene = SceneConfig {
        height: cfg.size,
        width: cfg.size,
        texture_scale: (cfg.size / 4).max(1),
        ..SceneConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(cfg.samples);
    let mut targets = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let s = gen_synthetic(&scene, rng.gen())?;
        let gray = Tensor::from_fn([1, 1, cfg.size, cfg.size], |_, _, y, x| {
            (s.image.at(0, 0, y, x) + s.image.at(0, 1, y, x) + s.image.at(0, 2, y, x)) / 3.0
        });
        images.push(gray);
        targets.push(dilate(&canny_boundary(&s.mask, DEFAULT_LOW, DEFAULT_HIGH)?, 1));
    }
    Ok((Tensor::stack(&images)?, Tensor::stack(&targets)?))
}

fn with_spectrum(x: &Tensor<f32>) -> Tensor<f32> {
    let mut out = x.clone();
    let (h, w) = (x.h(), x.w());
    for n in 0..x.n() {
        let spectrum = real_spectrum(x.plane(n, 0), h, w);
        for (o, s) in out.plane_mut(n, 0).iter_mut().zip(spectrum) {
            *o += s;
        }
    }
    out
}

fn run(cfg: &ProbeConfig, seed: u64, input: &Tensor<f32>, target: &Tensor<f32>) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::<f32>::new();
    let layers = [
        Conv::new(&mut store, &mut rng, "probe.conv0", 1, cfg.hidden, 3),
        Conv::new(&mut store, &mut rng, "probe.conv1", cfg.hidden, cfg.hidden, 3),
        Conv::new(&mut store, &mut rng, "probe.conv2", cfg.hidden, 1, 3),
    ];
    let mut first = None;
    let mut last = 0.0;
    for _ in 0..cfg.steps {
        let (loss, grads) = {
            let mut ctx = Ctx::new(&mut store, Mode::Train);
            let mut f = ctx.input(input.clone());
            for (i, conv) in layers.iter().enumerate() {
                f = conv.forward(&mut ctx, f)?;
                if i + 1 < layers.len() {
                    f = ctx.tape.relu(f);
                }
            }
            let t = ctx.input(target.clone());
            let diff = ctx.tape.sub(f, t)?;
            let sq = ctx.tape.mul(diff, diff)?;
            let loss = ctx.tape.mean(sq);
            let g = ctx.tape.backward(loss)?;
            (ctx.value(loss).data()[0] as f64, ctx.param_grads(&g))
        };
        first.get_or_insert(loss);
        last = loss;
        sgd_step(&mut store, &grads, cfg.lr, cfg.momentum, 0.0)?;
    }
    Ok((first.unwrap_or(0.0), last))
}

/// Trains the same three-layer CNN from the same initialisation on plain and
/// spectrum-augmented inputs, once per seed.
pub fn prop1_probe(cfg: &ProbeConfig, seeds: &[u64]) -> Result<ProbeReport> {
    if seeds.len() < 3 {
        return Err(invalid("prop1_probe", "at least three seeds are required"));
    }
    if cfg.steps == 0 || cfg.samples == 0 || cfg.hidden == 0 {
        return Err(invalid("prop1_probe", "steps, samples and hidden must be positive"));
    }
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        let (plain, target) = task(cfg, seed)?;
        let spectral = with_spectrum(&plain);
        for (input, x) in [(ProbeInput::Plain, &plain), (ProbeInput::Spectral, &spectral)] {
            let (initial_loss, final_loss) = run(cfg, seed, x, &target)?;
            rows.push(ProbeRow {
                seed,
                input,
                initial_loss,
                final_loss,
            });
        }
    }
    Ok(ProbeReport { rows })
}
