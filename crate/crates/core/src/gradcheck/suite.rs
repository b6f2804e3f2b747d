//! Gradient checks for every differentiable tape op and every network stage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bind_params, gradcheck_against_f64, random_projection, GradcheckReport};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::fourier::fourier_enhance;
use crate::model::{
    cta_forward, cu_forward, fcc_forward, pretreat, seg_head, wcc_forward, Ctx, Fbwc, Mode,
    ModelConfig,
};
use crate::params::ParamStore;
use crate::scalar::Real;
use crate::tensor::{Shape, Tensor};

/// Finite-difference step (applied in `f64`) and pass threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub step: f64,
    pub threshold: f64,
    pub seed: u64,
}

impl SuiteConfig {
    pub const F32: SuiteConfig = SuiteConfig {
        step: 1e-6,
        threshold: 1e-2,
        seed: 0,
    };
    pub const F64: SuiteConfig = SuiteConfig {
        step: 1e-6,
        threshold: 1e-4,
        seed: 0,
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub report: GradcheckReport,
}

/// The toy network the stage checks run on: two channels, 16x16 inputs.
pub fn toy_config() -> ModelConfig {
    ModelConfig {
        in_channels: 3,
        channels: 2,
        lambda: 2,
        depth: 3,
        n_cus: 2,
        ..ModelConfig::default()
    }
}

#[derive(Clone, Debug)]
enum Graph {
    Conv2d { stride: usize, padding: usize },
    MaxPool2,
    Resize { h: usize, w: usize },
    BatchNormTrain,
    BatchNormEval { mean: Vec<f64>, var: Vec<f64> },
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Scale(f64),
    MatMul,
    Transpose,
    Reshape(Shape),
    Sum,
    Mean,
    FourierReal,
    WeightedBce { target: Tensor<f64>, weights: Tensor<f64> },
    FourierEnhance,
    Pretreat,
    CapturingUnit,
    Backbone,
    Attention,
    Controller,
    Head,
    Pipeline,
}

impl Graph {
    fn is_stage(&self) -> bool {
        matches!(
            self,
            Graph::Pretreat
                | Graph::CapturingUnit
                | Graph::Backbone
                | Graph::Attention
                | Graph::Controller
                | Graph::Head
                | Graph::Pipeline
        )
    }

    /// Parameter-name prefixes a stage is differentiated against.
    fn prefixes(&self) -> &'static [&'static str] {
        match self {
            Graph::Pretreat => &["pre."],
            Graph::CapturingUnit => &["wcc.cu0."],
            Graph::Backbone => &["wcc."],
            Graph::Attention => &["cta."],
            Graph::Controller => &["fcc."],
            Graph::Head => &["head."],
            Graph::Pipeline => &[""],
            _ => &[],
        }
    }

    fn op<U: Real>(&self, t: &mut Tape<U>, v: &[Var]) -> Result<Var> {
        let c = |x: f64| U::c(x);
        Ok(match self {
            Graph::Conv2d { stride, padding } => t.conv2d(v[0], v[1], v[2], *stride, *padding)?,
            Graph::MaxPool2 => t.maxpool2(v[0])?,
            Graph::Resize { h, w } => t.bilinear_resize(v[0], *h, *w)?,
            Graph::BatchNormTrain => t.batchnorm_train(v[0], v[1], v[2])?.0,
            Graph::BatchNormEval { mean, var } => {
                let m: Vec<U> = mean.iter().map(|&x| c(x)).collect();
                let s: Vec<U> = var.iter().map(|&x| c(x)).collect();
                t.batchnorm_eval(v[0], v[1], v[2], &m, &s)?
            }
            Graph::Add => t.add(v[0], v[1])?,
            Graph::Sub => t.sub(v[0], v[1])?,
            Graph::Mul => t.mul(v[0], v[1])?,
            Graph::Relu => t.relu(v[0]),
            Graph::Sigmoid => t.sigmoid(v[0]),
            Graph::Scale(k) => t.scale(v[0], c(*k)),
            Graph::MatMul => t.matmul(v[0], v[1])?,
            Graph::Transpose => t.transpose(v[0]),
            Graph::Reshape(shape) => t.reshape(v[0], *shape)?,
            Graph::Sum => t.sum(v[0]),
            Graph::Mean => t.mean(v[0]),
            Graph::FourierReal => t.fourier_real(v[0]),
            Graph::WeightedBce { target, weights } => {
                t.weighted_bce(v[0], &target.cast(), &weights.cast())?
            }
            Graph::FourierEnhance => fourier_enhance(t, v[0], v[1])?,
            _ => unreachable!("stages run through a context"),
        })
    }

    fn stage<U: Real>(&self, net: &Fbwc, ctx: &mut Ctx<'_, U>, v: &[Var]) -> Result<Vec<Var>> {
        Ok(match self {
            Graph::Pretreat => {
                let (tri, cir) = pretreat(ctx, v[0], &net.pretreat)?;
                vec![tri, cir]
            }
            Graph::CapturingUnit => {
                let out = cu_forward(ctx, v[0], &net.units[0])?;
                vec![out.constraint, out.trough]
            }
            Graph::Backbone => {
                let out = wcc_forward(ctx, v[0], &net.units)?;
                let mut outs = out.boundary_logits;
                outs.extend(out.trough_points);
                outs
            }
            Graph::Attention => {
                let (out, am) = cta_forward(ctx, v[0], v[1], v[2], &net.cta)?;
                vec![out, am]
            }
            Graph::Controller => vec![fcc_forward(ctx, v[0], &v[1..3], &v[3..5], &net.fcc)?],
            Graph::Head => vec![seg_head(ctx, v[0], &net.head)?],
            Graph::Pipeline => {
                let out = net.forward(ctx, v[0])?;
                let mut outs = vec![out.seg_logits, out.am_logits];
                outs.extend(out.wcc.boundary_logits);
                outs
            }
            _ => unreachable!("plain ops run on a bare tape"),
        })
    }
}

struct Case {
    name: &'static str,
    graph: Graph,
    inputs: Vec<Tensor<f64>>,
    projection_seed: u64,
}

/// Sums the random projections of `outs` to a scalar.
fn project<U: Real>(t: &mut Tape<U>, outs: &[Var], seed: u64) -> Result<Var> {
    let mut total: Option<Var> = None;
    for (i, &o) in outs.iter().enumerate() {
        let s = if t.value(o).numel() == 1 {
            o
        } else {
            random_projection(t, o, seed.wrapping_add(i as u64))?
        };
        total = Some(match total {
            Some(acc) => t.add(acc, s)?,
            None => s,
        });
    }
    Ok(total.expect("at least one output"))
}

fn run_case<T: Real>(
    case: &Case,
    net: &Fbwc,
    store: &ParamStore<f64>,
    cfg: SuiteConfig,
) -> Result<GradcheckReport> {
    let seed = case.projection_seed;
    if !case.graph.is_stage() {
        let g = &case.graph;
        return gradcheck_against_f64::<T>(
            |t, v| {
                let y = g.op(t, v)?;
                project(t, &[y], seed)
            },
            |t, v| {
                let y = g.op(t, v)?;
                project(t, &[y], seed)
            },
            &case.inputs,
            cfg.step,
            cfg.threshold,
        );
    }
    let prefixes = case.graph.prefixes();
    let names: Vec<String> = store
        .iter()
        .filter(|(n, p)| p.kind.is_trainable() && prefixes.iter().any(|pre| n.starts_with(pre)))
        .map(|(n, _)| n.to_string())
        .collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut inputs = case.inputs.clone();
    for name in &names {
        inputs.push(store.value(name)?.clone());
    }
    let k = case.inputs.len();
    let store_t: ParamStore<T> = store.cast();
    let g = &case.graph;
    gradcheck_against_f64::<T>(
        bind_params(&store_t, Mode::Train, k, &names, |ctx, v| {
            let outs = g.stage(net, ctx, v)?;
            project(&mut ctx.tape, &outs, seed)
        }),
        bind_params(store, Mode::Train, k, &names, |ctx, v| {
            let outs = g.stage(net, ctx, v)?;
            project(&mut ctx.tape, &outs, seed)
        }),
        &inputs,
        cfg.step,
        cfg.threshold,
    )
}

/// Uniform values in `[-1, 1)`, rounded to single precision so every build
/// sees identical inputs.
fn uniform(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0f64..1.0) as f32 as f64)
}

/// Values at least 0.1 apart and 0.05 from zero, so neither a max nor a
/// rectifier sits near a kink.
fn separated(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut values: Vec<f64> = (0..n)
        .map(|i| (0.1 * (i as f64 - n as f64 / 2.0) + 0.05) as f32 as f64)
        .collect();
    for i in (1..n).rev() {
        values.swap(i, rng.gen_range(0..=i));
    }
    let mut it = values.into_iter();
    Tensor::from_fn(shape, |_, _, _, _| it.next().expect("sized"))
}

fn cases(rng: &mut ChaCha8Rng, channels: usize) -> Vec<Case> {
    let ch = channels;
    let target = Tensor::from_fn([2, 1, 4, 4], |n, _, y, x| ((n + y + x) % 2) as f64);
    let weights = Tensor::from_fn([2, 1, 4, 4], |_, _, y, x| ((y * 4 + x) % 3) as f64 * 0.5);
    let specs: Vec<(&'static str, Graph, Vec<Tensor<f64>>)> = vec![
        (
            "conv2d",
            Graph::Conv2d { stride: 1, padding: 1 },
            vec![uniform(rng, [2, 2, 5, 5]), uniform(rng, [3, 2, 3, 3]), uniform(rng, [1, 1, 1, 3])],
        ),
        (
            "conv2d_strided",
            Graph::Conv2d { stride: 2, padding: 0 },
            vec![uniform(rng, [1, 2, 6, 6]), uniform(rng, [2, 2, 3, 3]), uniform(rng, [1, 1, 1, 2])],
        ),
        ("maxpool2", Graph::MaxPool2, vec![separated(rng, [2, 2, 4, 6])]),
        ("bilinear_up", Graph::Resize { h: 7, w: 8 }, vec![uniform(rng, [1, 2, 3, 4])]),
        ("bilinear_down", Graph::Resize { h: 3, w: 4 }, vec![uniform(rng, [1, 2, 8, 6])]),
        (
            "batchnorm_train",
            Graph::BatchNormTrain,
            vec![uniform(rng, [2, 3, 3, 3]), uniform(rng, [1, 1, 1, 3]), uniform(rng, [1, 1, 1, 3])],
        ),
        (
            "batchnorm_eval",
            Graph::BatchNormEval {
                mean: vec![0.0, 0.125, 0.25],
                var: vec![0.5, 0.75, 1.0],
            },
            vec![uniform(rng, [2, 3, 3, 3]), uniform(rng, [1, 1, 1, 3]), uniform(rng, [1, 1, 1, 3])],
        ),
        ("add", Graph::Add, vec![uniform(rng, [1, 2, 3, 3]), uniform(rng, [1, 2, 3, 3])]),
        ("sub", Graph::Sub, vec![uniform(rng, [1, 2, 3, 3]), uniform(rng, [1, 2, 3, 3])]),
        ("mul", Graph::Mul, vec![uniform(rng, [1, 2, 3, 3]), uniform(rng, [1, 2, 3, 3])]),
        ("relu", Graph::Relu, vec![separated(rng, [1, 2, 3, 3])]),
        ("sigmoid", Graph::Sigmoid, vec![uniform(rng, [1, 2, 3, 3])]),
        ("scale", Graph::Scale(-1.5), vec![uniform(rng, [1, 2, 3, 3])]),
        ("matmul", Graph::MatMul, vec![uniform(rng, [2, 1, 3, 4]), uniform(rng, [2, 1, 4, 2])]),
        ("transpose", Graph::Transpose, vec![uniform(rng, [2, 1, 3, 4])]),
        ("reshape", Graph::Reshape([1, 1, 6, 4]), vec![uniform(rng, [1, 2, 3, 4])]),
        ("sum", Graph::Sum, vec![uniform(rng, [1, 2, 3, 3])]),
        ("mean", Graph::Mean, vec![uniform(rng, [1, 2, 3, 3])]),
        ("fourier_real", Graph::FourierReal, vec![uniform(rng, [1, 2, 5, 6])]),
        ("weighted_bce", Graph::WeightedBce { target, weights }, vec![uniform(rng, [2, 1, 4, 4])]),
        (
            "fourier_enhance",
            Graph::FourierEnhance,
            vec![uniform(rng, [1, 2, 4, 4]), uniform(rng, [2, 2, 1, 1])],
        ),
        ("pretreat", Graph::Pretreat, vec![uniform(rng, [2, 3, 16, 16])]),
        ("capturing_unit", Graph::CapturingUnit, vec![uniform(rng, [2, ch, 8, 8])]),
        ("backbone", Graph::Backbone, vec![uniform(rng, [2, ch, 8, 8])]),
        (
            "attention",
            Graph::Attention,
            vec![uniform(rng, [2, ch, 8, 8]), uniform(rng, [2, ch, 8, 8]), uniform(rng, [2, ch, 4, 4])],
        ),
        (
            "controller",
            Graph::Controller,
            vec![
                uniform(rng, [2, ch, 8, 8]),
                uniform(rng, [2, ch, 2, 2]),
                uniform(rng, [2, ch, 2, 2]),
                uniform(rng, [2, ch, 8, 8]),
                uniform(rng, [2, ch, 8, 8]),
            ],
        ),
        ("seg_head", Graph::Head, vec![uniform(rng, [2, ch, 8, 8])]),
        ("pipeline", Graph::Pipeline, vec![uniform(rng, [2, 3, 16, 16])]),
    ];
    specs
        .into_iter()
        .map(|(name, graph, inputs)| Case {
            name,
            graph,
            inputs,
            projection_seed: rng.gen(),
        })
        .collect()
}

/// Runs every check with tape gradients computed at precision `T`. The stage
/// checks use [`toy_config`] and train-mode batch norm.
pub fn gradcheck_suite<T: Real>(cfg: SuiteConfig) -> Result<Vec<SuiteEntry>> {
    let (net, store) = Fbwc::new::<f32>(toy_config(), cfg.seed)?;
    let store: ParamStore<f64> = store.cast();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    cases(&mut rng, net.config.channels)
        .iter()
        .map(|case| {
            Ok(SuiteEntry {
                name: case.name,
                report: run_case::<T>(case, &net, &store, cfg)?,
            })
        })
        .collect()
}
