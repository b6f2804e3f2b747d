//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each, and
//! exits non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbwc::autodiff::{Tape, BN_EPS};
use fbwc::boundary::{canny_boundary, DEFAULT_HIGH, DEFAULT_LOW};
use fbwc::data::{synthetic_set, SamplePair, SceneConfig};
use fbwc::fourier::{dft2_reference, fft2};
use fbwc::gradcheck::{gradcheck_suite, SuiteConfig};
use fbwc::kernels;
use fbwc::loss::{default_min_kept, ohem_ce, total_loss};
use fbwc::metrics::{baseline_ious, metrics};
use fbwc::model::{
    cta_block, cu_forward, fcc_forward, pretreat, Conv, CtaMode, CtaParams, CuParams, Ctx, Fbwc, FccParams,
    Mode, ModelConfig, VariableBranch,
};
use fbwc::params::ParamStore;
use fbwc::training::{
    ablate, evaluate_model, prop1_probe, train, AblationAxis, EvalConfig, ProbeConfig, ProbeInput,
    TrainConfig, TrainOutputs,
};
use fbwc::Tensor;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

// ---------------------------------------------------------------- criterion 1

fn fft_oracle() -> Outcome {
    let sizes = [2usize, 4, 8, 16, 32];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let (mut worst_fft, mut worst_parseval, mut count) = (0.0f64, 0.0f64, 0);
    for &h in &sizes {
        for &w in &sizes {
            for _ in 0..8 {
                let plane: Vec<f64> = (0..h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let fast = fft2(&plane, h, w).expect("power-of-two sizes");
                let slow = dft2_reference(&plane, h, w);
                let (mut diff, mut scale, mut energy) = (0.0f64, 0.0f64, 0.0f64);
                for u in 0..h {
                    for v in 0..w {
                        let (a, b) = (fast.get(u, v), slow.get(u, v));
                        diff = diff.max((a - b).norm());
                        scale = scale.max(b.norm());
                        energy += a.norm_sqr();
                    }
                }
                worst_fft = worst_fft.max(diff / scale.max(1e-300));
                let spatial: f64 = plane.iter().map(|x| x * x).sum::<f64>() * (h * w) as f64;
                worst_parseval = worst_parseval.max((energy - spatial).abs() / spatial);
                count += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        count == 200 && worst_fft <= 1e-6 && worst_parseval <= 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "{count} inputs, max rel err {worst_fft:.2e}, Parseval rel err {worst_parseval:.2e}, {:.2}s",
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- criterion 2

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let single = gradcheck_suite::<f32>(SuiteConfig::F32).expect("f32 suite runs");
    let double = gradcheck_suite::<f64>(SuiteConfig::F64).expect("f64 suite runs");
    let elapsed = start.elapsed();
    let worst = |entries: &[fbwc::gradcheck::SuiteEntry]| {
        entries
            .iter()
            .max_by(|a, b| a.report.max_rel_err.total_cmp(&b.report.max_rel_err))
            .map(|e| (e.name, e.report.max_rel_err))
            .expect("non-empty suite")
    };
    let failed: Vec<String> = single
        .iter()
        .map(|e| ("f32", e))
        .chain(double.iter().map(|e| ("f64", e)))
        .filter(|(_, e)| !e.report.pass)
        .map(|(p, e)| format!("{p}:{}", e.name))
        .collect();
    let (w32, e32) = worst(&single);
    let (w64, e64) = worst(&double);
    outcome(
        failed.is_empty() && elapsed < Duration::from_secs(60),
        format!(
            "{} checks per precision; worst f32 {w32} {e32:.2e} (<= 1e-2), worst f64 {w64} {e64:.2e} (<= 1e-4); \
             failed {failed:?}; {:.1}s",
            single.len(),
            secs(elapsed)
        ),
    )
}

// ---------------------------------------------------------------- criterion 3

fn shape_contract() -> Outcome {
    let mut mismatches = Vec::new();
    let mut configs = 0;
    for n_cus in 1..=5 {
        for depth in 2..=4 {
            for lambda in [2usize, 4] {
                configs += 1;
                let cfg = ModelConfig {
                    channels: 3,
                    lambda,
                    depth,
                    n_cus,
                    ..ModelConfig::default()
                };
                let m = cfg.size_multiple();
                let (n, c, h, w) = (2, cfg.channels, 2 * m, 3 * m);
                let (net, mut store) = Fbwc::new::<f32>(cfg.clone(), 0).expect("valid config");
                let mut ctx = Ctx::new(&mut store, Mode::Train);
                let x = ctx.input(Tensor::from_fn([n, 3, h, w], |i, j, y, x| {
                    ((i + 2 * j + 3 * y + 5 * x) % 7) as f32 / 7.0
                }));
                let (tri, cir) = pretreat(&mut ctx, x, &net.pretreat).expect("stem");
                let out = net.forward(&mut ctx, x).expect("forward");
                let (hl, wl) = (h / lambda, w / lambda);
                let f = 1 << (depth - 1);
                let mut expect = vec![
                    ("x_tri".to_string(), ctx.tape.shape(tri), [n, c, hl, wl]),
                    ("x_cir".to_string(), ctx.tape.shape(cir), [n, c, hl, wl]),
                    ("x_tri_out".to_string(), ctx.tape.shape(out.x_tri_out), [n, c, hl, wl]),
                    ("fused".to_string(), ctx.tape.shape(out.fused), [n, c, hl, wl]),
                    ("am_logits".to_string(), ctx.tape.shape(out.am_logits), [n, 1, h, w]),
                    ("seg_logits".to_string(), ctx.tape.shape(out.seg_logits), [n, 1, h, w]),
                ];
                let wcc = &out.wcc;
                let lens = [wcc.constraint_points.len(), wcc.trough_points.len(), wcc.boundary_logits.len()];
                if lens != [n_cus; 3] || wcc.first_encoder.len() != depth {
                    mismatches.push(format!("N={n_cus} d={depth} l={lambda}: output counts {lens:?}"));
                }
                for i in 0..n_cus {
                    expect.push((format!("constraint{i}"), ctx.tape.shape(wcc.constraint_points[i]), [n, c, hl, wl]));
                    expect.push((format!("trough{i}"), ctx.tape.shape(wcc.trough_points[i]), [n, c, hl / f, wl / f]));
                    expect.push((format!("boundary{i}"), ctx.tape.shape(wcc.boundary_logits[i]), [n, 1, hl, wl]));
                }
                for (l, &e) in wcc.first_encoder.iter().enumerate() {
                    expect.push((format!("encoder{l}"), ctx.tape.shape(e), [n, c, hl >> l, wl >> l]));
                }
                for (name, got, want) in expect {
                    if got != want {
                        mismatches.push(format!("N={n_cus} d={depth} l={lambda}: {name} {got:?} != {want:?}"));
                    }
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{configs} configurations; mismatches {mismatches:?}"),
    )
}

// ---------------------------------------------------------------- criterion 4

/// Replaces every trainable value with a random draw; norm scales stay positive.
fn randomize(store: &mut ParamStore<f64>, rng: &mut impl Rng) {
    for (name, p) in store.iter_mut() {
        if !p.kind.is_trainable() {
            continue;
        }
        let gamma = name.ends_with(".gamma");
        for v in p.value.data_mut() {
            *v = if gamma { rng.gen_range(0.5..1.5) } else { rng.gen_range(-0.6..0.6) };
        }
    }
}

fn random_tensor(rng: &mut impl Rng, shape: [usize; 4]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

fn conv_ref(x: &Tensor<f64>, store: &ParamStore<f64>, conv: &Conv) -> Tensor<f64> {
    let k = store.value(&conv.weight).unwrap();
    let b = match &conv.bias {
        Some(name) => store.value(name).unwrap().clone(),
        None => Tensor::zeros([1, 1, 1, conv.out_channels]),
    };
    kernels::conv2d(x, k, &b, 1, conv.kernel / 2).unwrap()
}

fn add(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    a.zip_map(b, |x, y| x + y).unwrap()
}

/// Batch norm with statistics of the batch itself (biased variance).
fn bn_ref(x: &Tensor<f64>, gamma: &Tensor<f64>, beta: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, w] = x.shape();
    let count = (n * h * w) as f64;
    let mut out = x.clone();
    for ch in 0..c {
        let vals: Vec<f64> = (0..n).flat_map(|i| x.plane(i, ch).to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / count;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / count;
        let inv = 1.0 / (var + BN_EPS).sqrt();
        let (g, b) = (gamma.data()[ch], beta.data()[ch]);
        for i in 0..n {
            for v in out.plane_mut(i, ch) {
                *v = g * (*v - mean) * inv + b;
            }
        }
    }
    out
}

/// Zero-pads to powers of two, takes the real part of the DFT scaled by the
/// padded size, and crops back.
fn spectrum_ref(x: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, w] = x.shape();
    let (ph, pw) = (h.next_power_of_two(), w.next_power_of_two());
    let mut out = x.clone();
    for i in 0..n {
        for ch in 0..c {
            let mut padded = vec![0.0; ph * pw];
            for y in 0..h {
                for xx in 0..w {
                    padded[y * pw + xx] = x.at(i, ch, y, xx);
                }
            }
            let spectrum = dft2_reference(&padded, ph, pw);
            for y in 0..h {
                for xx in 0..w {
                    out.set(i, ch, y, xx, spectrum.get(y, xx).re / (ph * pw) as f64);
                }
            }
        }
    }
    out
}

fn rel_diff(got: &Tensor<f64>, want: &Tensor<f64>) -> f64 {
    assert_eq!(got.shape(), want.shape());
    got.max_abs_diff(want) / want.max_abs().max(1.0)
}

fn cu_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (c, depth) = (rng.gen_range(1..=3), rng.gen_range(2..=4));
    let f = 1 << (depth - 1);
    let shape = [rng.gen_range(1..=2), c, f * rng.gen_range(1..=3), f * rng.gen_range(1..=3)];
    let mut store = ParamStore::new();
    let p = CuParams::new(&mut store, rng, "cu", c, depth);
    randomize(&mut store, rng);
    let x = random_tensor(rng, shape);

    let mut enc = vec![x.clone()];
    for (l, conv) in p.encoder.iter().enumerate() {
        let y = conv_ref(&enc[l], &store, conv);
        enc.push(kernels::maxpool2(&y).unwrap().0);
    }
    let trough = enc.last().unwrap().clone();
    let mut d = trough.clone();
    for l in (0..depth - 1).rev() {
        let up = kernels::bilinear_resize(&d, enc[l].h(), enc[l].w()).unwrap();
        d = conv_ref(&add(&up, &enc[l]), &store, &p.decoder[l]);
    }

    let mut ctx = Ctx::new(&mut store, Mode::Train);
    let xv = ctx.input(x);
    let out = cu_forward(&mut ctx, xv, &p).unwrap();
    rel_diff(ctx.value(out.constraint), &d).max(rel_diff(ctx.value(out.trough), &trough))
}

fn cta_instance(rng: &mut ChaCha8Rng) -> f64 {
    let c = rng.gen_range(1..=3);
    let [n, h, w] = [rng.gen_range(2..=3), rng.gen_range(2..=5), rng.gen_range(2..=5)];
    let mode = [CtaMode::Transpose, CtaMode::Plain, CtaMode::Off][rng.gen_range(0..3)];
    let mut store = ParamStore::new();
    let p = CtaParams::new(&mut store, rng, "blk", c);
    randomize(&mut store, rng);
    let a = random_tensor(rng, [n, c, h, w]);
    let b = random_tensor(rng, [n, c, h, w]);

    let v = |name: &str| store.value(name).unwrap().clone();
    let pa = bn_ref(&conv_ref(&a, &store, &p.proj_a), &v(&p.norm_a.gamma), &v(&p.norm_a.beta));
    let pb = bn_ref(&conv_ref(&b, &store, &p.proj_b), &v(&p.norm_b.gamma), &v(&p.norm_b.beta));
    let flat = [n, 1, c, h * w];
    let (ma, mb) = (pa.reshape(flat).unwrap(), pb.reshape(flat).unwrap());
    let s = 1.0 / (h * w) as f64;
    let sig = |t: Tensor<f64>| t.map(|z| 1.0 / (1.0 + (-s * z).exp()));
    let alpha = sig(kernels::matmul(&mb, &kernels::transpose(&ma)).unwrap());
    let beta = sig(kernels::matmul(&ma, &kernels::transpose(&mb)).unwrap());
    let (ra, rb) = (a.clone().reshape(flat).unwrap(), b.clone().reshape(flat).unwrap());
    let mixed = match mode {
        CtaMode::Transpose => {
            let diff = rb.zip_map(&ra, |x, y| x - y).unwrap();
            add(&ra, &kernels::matmul(&alpha, &diff).unwrap())
        }
        CtaMode::Plain => add(&ra, &kernels::matmul(&alpha, &rb).unwrap()),
        CtaMode::Off => ra,
    };
    let want = mixed.reshape([n, c, h, w]).unwrap();

    let mut ctx = Ctx::new(&mut store, Mode::Train);
    let (av, bv) = (ctx.input(a), ctx.input(b));
    let out = cta_block(&mut ctx, av, bv, &p, mode).unwrap();
    rel_diff(ctx.value(out.out), &want)
        .max(rel_diff(ctx.value(out.alpha), &alpha))
        .max(rel_diff(ctx.value(out.beta), &beta))
}

fn fcc_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (c, units) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let variable = if rng.gen_bool(0.75) { VariableBranch::Fourier } else { VariableBranch::StandardConv };
    let n = rng.gen_range(1..=2);
    let (th, tw) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let f = 1 << rng.gen_range(1..=3);
    let (h, w) = (th * f, tw * f);
    let mut store = ParamStore::new();
    let p = FccParams::new(&mut store, rng, c, units, variable);
    randomize(&mut store, rng);
    let x = random_tensor(rng, [n, c, h, w]);
    let troughs: Vec<_> = (0..units).map(|_| random_tensor(rng, [n, c, th, tw])).collect();
    let constraints: Vec<_> = (0..units).map(|_| random_tensor(rng, [n, c, h, w])).collect();

    let weight = conv_ref(&x, &store, &p.weight);
    let mut var = Tensor::zeros([n, c, h, w]);
    for (t, proj) in troughs.iter().zip(&p.trough_proj) {
        let lin = conv_ref(t, &store, &p.enhance);
        let enhanced = match &p.standard {
            Some(conv) => add(&lin, &conv_ref(t, &store, conv)),
            None => add(&lin, &spectrum_ref(t)),
        };
        let up = kernels::bilinear_resize(&enhanced, h, w).unwrap();
        var = add(&var, &conv_ref(&up, &store, proj));
    }
    let mut bias = Tensor::zeros([n, c, h, w]);
    for (k, proj) in constraints.iter().zip(&p.constraint_proj) {
        bias = add(&bias, &conv_ref(k, &store, proj));
    }
    let want = add(&weight.zip_map(&var, |a, b| a * b).unwrap(), &bias);

    let mut ctx = Ctx::new(&mut store, Mode::Train);
    let xv = ctx.input(x);
    let tv: Vec<_> = troughs.into_iter().map(|t| ctx.input(t)).collect();
    let cv: Vec<_> = constraints.into_iter().map(|t| ctx.input(t)).collect();
    let out = fcc_forward(&mut ctx, xv, &tv, &cv, &p).unwrap();
    rel_diff(ctx.value(out), &want)
}

fn compositional_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 3];
    for _ in 0..50 {
        worst[0] = worst[0].max(cu_instance(&mut rng));
        worst[1] = worst[1].max(cta_instance(&mut rng));
        worst[2] = worst[2].max(fcc_instance(&mut rng));
    }
    outcome(
        worst.iter().all(|&e| e <= 1e-5),
        format!(
            "50 instances each; max rel err cu_forward {:.2e}, cta_block {:.2e}, fcc_forward {:.2e}",
            worst[0], worst[1], worst[2]
        ),
    )
}

// ---------------------------------------------------------------- criterion 5

fn loss_metric_cases() -> Outcome {
    let mut notes = Vec::new();
    let total = total_loss(1.0, 1.0, &[1.0, 2.0, 3.0, 4.0]).unwrap().total;
    notes.push((total == 4.5, format!("total loss {total}")));

    let gt = Tensor::from_fn([1, 1, 8, 8], |_, _, y, x| if (y + x) % 3 == 0 { 1.0f32 } else { 0.0 });
    let perfect = metrics(&gt, &gt, 0.5).unwrap();
    notes.push((
        perfect.iou == 1.0 && perfect.mae == 0.0 && perfect.ber == 0.0,
        format!("perfect iou {} mae {} ber {}", perfect.iou, perfect.mae, perfect.ber),
    ));

    let half = Tensor::from_fn([1, 1, 8, 8], |_, _, y, _| if y < 4 { 1.0f32 } else { 0.0 });
    let all_pos = metrics(&Tensor::ones([1, 1, 8, 8]), &half, 0.5).unwrap();
    notes.push((all_pos.ber == 50.0, format!("all-positive ber {}", all_pos.ber)));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let shape = [2, 1, 16, 16];
    let logits = Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-4.0f64..4.0));
    let target = Tensor::from_fn(shape, |_, _, _, _| if rng.gen_bool(0.4) { 1.0f64 } else { 0.0 });
    let mut tape = Tape::new();
    let z = tape.leaf(logits.clone());
    let l = ohem_ce(&mut tape, z, &target, 1.0, default_min_kept(shape)).unwrap();
    let ohem = tape.value(l).data()[0];
    let bce: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| -(t * (1.0 / (1.0 + (-z).exp())).ln() + (1.0 - t) * (1.0 / (1.0 + z.exp())).ln()))
        .sum::<f64>()
        / logits.numel() as f64;
    notes.push(((ohem - bce).abs() <= 1e-6, format!("ohem(1.0) {ohem:.9} vs bce {bce:.9}")));

    let pass = notes.iter().all(|(ok, _)| *ok);
    let detail: Vec<String> = notes.into_iter().map(|(_, s)| s).collect();
    outcome(pass, detail.join("; "))
}

// ---------------------------------------------------------------- criteria 6, 7

fn learning_setup() -> (TrainConfig, Vec<SamplePair>) {
    let mut cfg = TrainConfig::default();
    cfg.model.channels = 16;
    cfg.model.n_cus = 4;
    cfg.max_steps = 200;
    let scene = SceneConfig {
        height: 64,
        width: 64,
        ..SceneConfig::default()
    };
    let data = synthetic_set(&scene, 64, 0).expect("synthetic set");
    (cfg, data)
}

fn end_to_end_learning() -> Outcome {
    let (cfg, data) = learning_setup();
    let start = Instant::now();
    let run = train(&cfg, &data, &TrainOutputs::default()).expect("training runs");
    let report = evaluate_model(&run.net, &run.checkpoint.store, &data, &EvalConfig::default(), None).unwrap();
    let elapsed = start.elapsed();
    let steps_per_epoch = data.len().div_ceil(cfg.batch_size);
    let (first, last) = run.smoothed_total(steps_per_epoch);
    let ratio = last / first;
    let step1 = run.steps[0].loss.total;
    let (base_pos, base_neg) = baseline_ious(report.glass_pixels, report.pixels);
    let iou = report.record.iou;
    let loss_ok = ratio < 0.5;
    let iou_ok = iou >= base_pos + 0.15 && iou >= base_neg + 0.15;
    outcome(
        loss_ok && iou_ok && elapsed < Duration::from_secs(15 * 60),
        format!(
            "{} steps; epoch-smoothed loss {first:.4} -> {last:.4}, ratio {ratio:.3} (< 0.5: {loss_ok}; \
             against the first step {step1:.4}: {:.3}); train IoU {iou:.4} vs baselines all-pos {base_pos:.4} \
             all-neg {base_neg:.4} (margin >= 0.15: {iou_ok}); {:.0}s",
            run.steps.len(),
            last / step1,
            secs(elapsed)
        ),
    )
}

fn ablation_trend() -> Outcome {
    let (cfg, data) = learning_setup();
    let seeds = [0, 1, 2];
    let one = ablate(&cfg, AblationAxis::Cus { min: 1, max: 1 }, &seeds, &data, &data).expect("sweep");
    let more = ablate(&cfg, AblationAxis::Cus { min: 4, max: 5 }, &seeds, &data, &data).expect("sweep");
    let iou1 = one.mean("1 CU").unwrap().iou;
    let iou4 = more.mean("4 CUs").unwrap().iou;
    let iou5 = more.mean("5 CUs").unwrap().iou;
    outcome(
        iou4 >= iou1,
        format!(
            "mean IoU over 3 seeds: 1 CU {iou1:.4}, 4 CUs {iou4:.4}, 5 CUs {iou5:.4}; \
             advisory 4 >= 5: {}",
            iou4 >= iou5
        ),
    )
}

// ---------------------------------------------------------------- criterion 8

fn probe() -> Outcome {
    let seeds = [0, 1, 2, 3, 4];
    let report = prop1_probe(&ProbeConfig::default(), &seeds).expect("probe runs");
    let complete = report.rows.len() == 2 * seeds.len()
        && seeds.iter().all(|&s| {
            [ProbeInput::Plain, ProbeInput::Spectral]
                .iter()
                .all(|&i| report.rows.iter().filter(|r| r.seed == s && r.input == i).count() == 1)
        })
        && report.rows.iter().all(|r| r.initial_loss.is_finite() && r.final_loss.is_finite());
    for line in report.to_csv().lines() {
        println!("    {line}");
    }
    outcome(
        complete && report.all_decreased(),
        format!("{} rows, complete {complete}; {}", report.rows.len(), report.summary()),
    )
}

// ---------------------------------------------------------------- criterion 9

fn reproducibility() -> Outcome {
    let mut cfg = TrainConfig::default();
    cfg.model.channels = 8;
    cfg.model.n_cus = 2;
    cfg.height = 32;
    cfg.width = 32;
    cfg.max_steps = 6;
    cfg.seed = 9;
    let scene = SceneConfig {
        height: 32,
        width: 32,
        texture_scale: 8,
        ..SceneConfig::default()
    };
    let data = synthetic_set(&scene, 12, 9).unwrap();
    let once = || {
        let run = train(&cfg, &data, &TrainOutputs::default()).unwrap();
        let report = evaluate_model(&run.net, &run.checkpoint.store, &data, &EvalConfig::default(), None).unwrap();
        let bits = [report.record.iou, report.record.mae, report.record.ber].map(f64::to_bits);
        let losses: Vec<u64> = run.steps.iter().map(|s| s.loss.total.to_bits()).collect();
        (run.checkpoint.to_bytes(), bits, losses)
    };
    let (a, b) = (once(), once());
    let same_ckpt = a.0 == b.0;
    let same_metrics = a.1 == b.1;
    let same_losses = a.2 == b.2;
    outcome(
        same_ckpt && same_metrics && same_losses,
        format!(
            "checkpoint {} bytes identical {same_ckpt}; metrics identical {same_metrics}; step losses identical {same_losses}",
            a.0.len()
        ),
    )
}

// ---------------------------------------------------------------- criterion 10

/// Straightforward Canny: full 2-D Gaussian and Sobel stencils with replicate
/// borders, angle-binned suppression, and depth-first hysteresis.
fn canny_oracle(mask: &[f32], h: usize, w: usize, low: f64, high: f64) -> Vec<f32> {
    let at = |v: &[f64], y: isize, x: isize| {
        v[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let src: Vec<f64> = mask.iter().map(|&v| v as f64).collect();
    let sigma = 1.4f64;
    let mut kernel = [[0.0f64; 5]; 5];
    let mut total = 0.0;
    for (i, row) in kernel.iter_mut().enumerate() {
        for (j, k) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 2.0, j as f64 - 2.0);
            *k = (-(dy * dy + dx * dx) / (2.0 * sigma * sigma)).exp();
            total += *k;
        }
    }
    let mut blurred = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut s = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, k) in row.iter().enumerate() {
                    s += k / total * at(&src, y + i as isize - 2, x + j as isize - 2);
                }
            }
            blurred[y as usize * w + x as usize] = s;
        }
    }
    let sobel_x = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let sobel_y = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];
    let mut mag = vec![0.0; h * w];
    let mut angle = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut gx, mut gy) = (0.0, 0.0);
            for i in 0..3 {
                for j in 0..3 {
                    let v = at(&blurred, y + i as isize - 1, x + j as isize - 1);
                    gx += sobel_x[i][j] * v;
                    gy += sobel_y[i][j] * v;
                }
            }
            let k = y as usize * w + x as usize;
            mag[k] = gx.hypot(gy);
            angle[k] = gy.atan2(gx).to_degrees().rem_euclid(180.0);
        }
    }
    let peak = mag.iter().copied().fold(0.0, f64::max);
    let mut out = vec![0.0f32; h * w];
    if peak <= 0.0 {
        return out;
    }
    let tol = 1e-9 * peak;
    let mut thin = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            if mag[k] <= tol {
                continue;
            }
            let a = angle[k];
            let (dy, dx) = if !(22.5..157.5).contains(&a) {
                (0, 1)
            } else if a < 67.5 {
                (1, 1)
            } else if a < 112.5 {
                (1, 0)
            } else {
                (1, -1)
            };
            let mut keep = true;
            for sgn in [-1isize, 1] {
                let (ny, nx) = (y as isize + sgn * dy, x as isize + sgn * dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                let brighter = blurred[j] > blurred[k] + 1e-12;
                if mag[j] > mag[k] + tol || ((mag[j] - mag[k]).abs() <= tol && brighter) {
                    keep = false;
                }
            }
            if keep {
                thin[k] = mag[k];
            }
        }
    }
    let mut stack: Vec<usize> = (0..h * w).filter(|&k| thin[k] > 0.0 && thin[k] >= high * peak).collect();
    for &k in &stack {
        out[k] = 1.0;
    }
    while let Some(k) = stack.pop() {
        let (y, x) = ((k / w) as isize, (k % w) as isize);
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] > 0.0 && thin[j] >= low * peak {
                    out[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    out
}

/// Number of connected components of the cells where `on(value)` holds.
fn components(map: &[f32], h: usize, w: usize, on: bool, eight: bool) -> usize {
    let mut seen = vec![false; h * w];
    let mut count = 0;
    for start in 0..h * w {
        if seen[start] || (map[start] > 0.5) != on {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            let (y, x) = ((k / w) as isize, (k % w) as isize);
            for (dy, dx) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                if !eight && dy != 0 && dx != 0 {
                    continue;
                }
                let (ny, nx) = (y + dy, x + dx);
                if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !seen[j] && (map[j] > 0.5) == on {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    count
}

fn random_mask(rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let (h, w) = (rng.gen_range(12..=40), rng.gen_range(12..=40));
    let shapes: Vec<(bool, f64, f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| {
            (
                rng.gen_bool(0.5),
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(2.0..h as f64 / 2.0),
                rng.gen_range(2.0..w as f64 / 2.0),
            )
        })
        .collect();
    Tensor::from_fn([1, 1, h, w], |_, _, y, x| {
        let (y, x) = (y as f64 + 0.5, x as f64 + 0.5);
        let inside = shapes.iter().any(|&(ellipse, cy, cx, ry, rx)| {
            let (u, v) = ((y - cy) / ry, (x - cx) / rx);
            if ellipse {
                u * u + v * v <= 1.0
            } else {
                u.abs() <= 1.0 && v.abs() <= 1.0
            }
        });
        if inside {
            1.0
        } else {
            0.0
        }
    })
}

fn boundary_pipeline() -> Outcome {
    let (h, w, lo, hi) = (32usize, 32usize, 8usize, 24usize);
    let square = Tensor::from_fn([1, 1, h, w], |_, _, y, x| {
        if (lo..hi).contains(&y) && (lo..hi).contains(&x) {
            1.0f32
        } else {
            0.0
        }
    });
    let edges = canny_boundary(&square, DEFAULT_LOW, DEFAULT_HIGH).unwrap();
    let e = edges.data();
    let oracle = canny_oracle(square.data(), h, w, DEFAULT_LOW as f64, DEFAULT_HIGH as f64);
    let matches_oracle = e == oracle.as_slice();
    let perimeter: Vec<f32> = (0..h * w)
        .map(|k| {
            let (y, x) = (k / w, k % w);
            let inside = (lo..hi).contains(&y) && (lo..hi).contains(&x);
            if inside && (y == lo || y == hi - 1 || x == lo || x == hi - 1) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let on_perimeter = e == perimeter.as_slice();
    let closed = components(e, h, w, true, true) == 1 && components(e, h, w, false, false) == 2;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut flips_ok, mut oracle_ok) = (0, 0);
    for _ in 0..100 {
        let m = random_mask(&mut rng);
        let edges = canny_boundary(&m, DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        let flipped = canny_boundary(&m.flip_horizontal(), DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        if flipped == edges.flip_horizontal() {
            flips_ok += 1;
        }
        let o = canny_oracle(m.data(), m.h(), m.w(), DEFAULT_LOW as f64, DEFAULT_HIGH as f64);
        if edges.data() == o.as_slice() {
            oracle_ok += 1;
        }
    }
    outcome(
        matches_oracle && closed && on_perimeter && flips_ok == 100,
        format!(
            "square ring matches oracle {matches_oracle}, closed {closed}, inner perimeter {on_perimeter} \
             ({} pixels); flip commutes {flips_ok}/100; random masks matching oracle {oracle_ok}/100",
            e.iter().filter(|&&v| v > 0.0).count()
        ),
    )
}

// ---------------------------------------------------------------- runner

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("FFT oracle equivalence", fft_oracle),
        ("gradient suite", gradient_suite),
        ("architecture shape contract", shape_contract),
        ("compositional oracles", compositional_oracles),
        ("loss and metric hand cases", loss_metric_cases),
        ("end-to-end learning", end_to_end_learning),
        ("ablation trend", ablation_trend),
        ("spectral input probe", probe),
        ("reproducibility", reproducibility),
        ("boundary pipeline", boundary_pipeline),
    ];
    let filter: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        ran += 1;
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} [{tag}] {name}: {}", result.detail);
        if !result.pass {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
