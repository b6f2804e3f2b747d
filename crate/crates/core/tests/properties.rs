//! Property tests for the numeric core, model blocks, losses, data and training.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbwc::boundary::{canny_boundary, dilate, DEFAULT_HIGH, DEFAULT_LOW};
use fbwc::data::{augment, gen_synthetic, SamplePair, SceneConfig};
use fbwc::fourier::{dft2_reference, fft2, fourier_enhance};
use fbwc::kernels;
use fbwc::loss::{bce_logits_value, ohem_ce};
use fbwc::metrics::metrics;
use fbwc::model::{cta_block, fcc_forward, wcc_forward, CtaMode, CtaParams, Ctx, Fbwc, FccParams, Mode, ModelConfig, VariableBranch};
use fbwc::params::{ParamKind, ParamStore};
use fbwc::training::{poly_lr, sgd_step, Checkpoint, TrainConfig};
use fbwc::{Tape, Tensor};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(seed: u64, shape: [usize; 4]) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| r.gen_range(-1.0..1.0))
}

fn binary(seed: u64, shape: [usize; 4], p: f64) -> Tensor<f32> {
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_, _, _, _| if r.gen_bool(p) { 1.0 } else { 0.0 })
}

fn close(a: &Tensor<f64>, b: &Tensor<f64>, tol: f64) -> bool {
    a.shape() == b.shape() && a.max_abs_diff(b) <= tol
}

// ------------------------------------------------------------ kernels vs loops

fn conv_loops(x: &Tensor<f64>, k: &Tensor<f64>, b: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let [n, ci, h, w] = x.shape();
    let [co, _, kh, kw] = k.shape();
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    Tensor::from_fn([n, co, oh, ow], |i, o, y, xx| {
        let mut s = b.data()[o];
        for c in 0..ci {
            for dy in 0..kh {
                for dx in 0..kw {
                    let (sy, sx) = ((y * stride + dy) as isize - pad as isize, (xx * stride + dx) as isize - pad as isize);
                    if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                        s += k.at(o, c, dy, dx) * x.at(i, c, sy as usize, sx as usize);
                    }
                }
            }
        }
        s
    })
}

fn resize_loops(x: &Tensor<f64>, oh: usize, ow: usize) -> Tensor<f64> {
    let [n, c, h, w] = x.shape();
    let tap = |o: usize, out: usize, len: usize| {
        let src = ((o as f64 + 0.5) * len as f64 / out as f64 - 0.5).max(0.0).min((len - 1) as f64);
        let lo = src.floor() as usize;
        (lo, (lo + 1).min(len - 1), src - lo as f64)
    };
    Tensor::from_fn([n, c, oh, ow], |i, ch, y, xx| {
        let (y0, y1, fy) = tap(y, oh, h);
        let (x0, x1, fx) = tap(xx, ow, w);
        let v = |yy, xq| x.at(i, ch, yy, xq);
        (1.0 - fy) * ((1.0 - fx) * v(y0, x0) + fx * v(y0, x1)) + fy * ((1.0 - fx) * v(y1, x0) + fx * v(y1, x1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn conv2d_matches_loops(seed in any::<u64>(), n in 1usize..3, ci in 1usize..4, co in 1usize..4,
                            h in 3usize..9, w in 3usize..9, k in prop::sample::select(vec![1usize, 3]),
                            stride in 1usize..3) {
        let pad = k / 2;
        let x = random(seed, [n, ci, h, w]);
        let kern = random(seed ^ 1, [co, ci, k, k]);
        let b = random(seed ^ 2, [1, 1, 1, co]);
        let got = kernels::conv2d(&x, &kern, &b, stride, pad).unwrap();
        prop_assert!(close(&got, &conv_loops(&x, &kern, &b, stride, pad), 1e-5));
    }

    #[test]
    fn maxpool_matches_loops(seed in any::<u64>(), c in 1usize..3, h in 1usize..6, w in 1usize..6) {
        let x = random(seed, [2, c, 2 * h, 2 * w]);
        let (got, _) = kernels::maxpool2(&x).unwrap();
        let want = Tensor::from_fn([2, c, h, w], |i, ch, y, xx| {
            let v = |dy, dx| x.at(i, ch, 2 * y + dy, 2 * xx + dx);
            v(0, 0).max(v(0, 1)).max(v(1, 0)).max(v(1, 1))
        });
        prop_assert!(close(&got, &want, 1e-5));
    }

    #[test]
    fn resize_matches_loops(seed in any::<u64>(), h in 1usize..8, w in 1usize..8, oh in 1usize..12, ow in 1usize..12) {
        let x = random(seed, [1, 2, h, w]);
        let got = kernels::bilinear_resize(&x, oh, ow).unwrap();
        prop_assert!(close(&got, &resize_loops(&x, oh, ow), 1e-5));
    }

    #[test]
    fn matmul_matches_loops(seed in any::<u64>(), m in 1usize..6, k in 1usize..6, p in 1usize..6) {
        let a = random(seed, [2, 1, m, k]);
        let b = random(seed ^ 3, [2, 1, k, p]);
        let got = kernels::matmul(&a, &b).unwrap();
        let want = Tensor::from_fn([2, 1, m, p], |i, _, r, q| (0..k).map(|t| a.at(i, 0, r, t) * b.at(i, 0, t, q)).sum());
        prop_assert!(close(&got, &want, 1e-5));
    }
}

// ------------------------------------------------------------ elementwise ops

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn add_mul_commute_and_add_associates(seed in any::<u64>(), len in 1usize..1000) {
        let shape = [1, 1, 1, len];
        let (a, b, c) = (random(seed, shape), random(seed ^ 1, shape), random(seed ^ 2, shape));
        let mut t = Tape::<f64>::new();
        let (va, vb, vc) = (t.leaf(a), t.leaf(b), t.leaf(c));
        let (ab, ba) = (t.add(va, vb).unwrap(), t.add(vb, va).unwrap());
        prop_assert_eq!(t.value(ab), t.value(ba));
        let (mab, mba) = (t.mul(va, vb).unwrap(), t.mul(vb, va).unwrap());
        prop_assert_eq!(t.value(mab), t.value(mba));
        let left = t.add(ab, vc).unwrap();
        let bc = t.add(vb, vc).unwrap();
        let right = t.add(va, bc).unwrap();
        prop_assert!(close(t.value(left), t.value(right), 1e-5));
    }

    #[test]
    fn ops_stay_finite_on_extreme_inputs(seed in any::<u64>(), mag in 1.0f64..1e30) {
        let x = random(seed, [1, 2, 4, 4]).map(|v| v * mag);
        let target = Tensor::from_fn([1, 2, 4, 4], |_, c, _, _| c as f64);
        let mut t = Tape::<f64>::new();
        let v = t.leaf(x);
        let s = t.sigmoid(v);
        let bce = t.weighted_bce(v, &target, &Tensor::ones([1, 2, 4, 4])).unwrap();
        let spectrum = t.fourier_real(v);
        prop_assert!(t.value(s).is_finite());
        prop_assert!(t.value(bce).is_finite());
        prop_assert!(t.value(spectrum).is_finite());
        let grads = t.backward(bce).unwrap();
        prop_assert!(grads.wrt(&t, v).is_finite());
    }
}

// ------------------------------------------------------------ fourier

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fft_matches_dft_with_hermitian_symmetry(seed in any::<u64>(), hb in 0u32..6, wb in 0u32..6) {
        let (h, w) = (1usize << hb, 1usize << wb);
        let plane: Vec<f64> = random(seed, [1, 1, h, w]).into_data();
        let fast = fft2(&plane, h, w).unwrap();
        let slow = dft2_reference(&plane, h, w);
        let mut scale = 1e-300f64;
        let mut err = 0.0f64;
        let mut energy = 0.0;
        for u in 0..h {
            for v in 0..w {
                scale = scale.max(slow.get(u, v).norm());
                err = err.max((fast.get(u, v) - slow.get(u, v)).norm());
                let mirror = fast.get((h - u) % h, (w - v) % w).conj();
                prop_assert!((fast.get(u, v) - mirror).norm() <= 1e-9 * (1.0 + scale));
                energy += fast.get(u, v).norm_sqr();
            }
        }
        prop_assert!(err / scale <= 1e-6);
        let spatial: f64 = plane.iter().map(|x| x * x).sum::<f64>() * (h * w) as f64;
        prop_assert!((energy - spatial).abs() <= 1e-6 * spatial.max(1e-300));
    }

    #[test]
    fn fourier_enhance_is_linear(seed in any::<u64>(), c in 1usize..4, h in 1usize..7, w in 1usize..7,
                                 a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (x, y) = (random(seed, [1, c, h, w]), random(seed ^ 1, [1, c, h, w]));
        let k = random(seed ^ 2, [c, c, 1, 1]);
        let combo = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let mut t = Tape::<f64>::new();
        let kv = t.leaf(k);
        let (xv, yv, cv) = (t.leaf(x), t.leaf(y), t.leaf(combo));
        let (ex, ey, ec) = (
            fourier_enhance(&mut t, xv, kv).unwrap(),
            fourier_enhance(&mut t, yv, kv).unwrap(),
            fourier_enhance(&mut t, cv, kv).unwrap(),
        );
        let want = t.value(ex).zip_map(t.value(ey), |p, q| a * p + b * q).unwrap();
        prop_assert!(close(t.value(ec), &want, 1e-5));
    }
}

// ------------------------------------------------------------ boundary

fn random_blobs(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    let mut r = rng(seed);
    let boxes: Vec<(usize, usize, usize, usize)> = (0..r.gen_range(1..4))
        .map(|_| {
            let (y0, x0) = (r.gen_range(0..h), r.gen_range(0..w));
            (y0, x0, (y0 + r.gen_range(2..h)).min(h), (x0 + r.gen_range(2..w)).min(w))
        })
        .collect();
    Tensor::from_fn([1, 1, h, w], |_, _, y, x| {
        if boxes.iter().any(|&(y0, x0, y1, x1)| (y0..y1).contains(&y) && (x0..x1).contains(&x)) {
            1.0
        } else {
            0.0
        }
    })
}

/// Pixels whose 8-neighbourhood contains the other label.
fn transition_support(m: &Tensor<f32>) -> Tensor<f32> {
    let (h, w) = (m.h(), m.w());
    Tensor::from_fn(m.shape(), |_, _, y, x| {
        let v = m.at(0, 0, y, x);
        let mut differs = false;
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                differs |= m.at(0, 0, ny, nx) != v;
            }
        }
        if differs {
            1.0
        } else {
            0.0
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canny_stays_near_the_mask_transition(seed in any::<u64>(), h in 8usize..33, w in 8usize..33) {
        let m = random_blobs(seed, h, w);
        let edges = canny_boundary(&m, DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        let near = dilate(&transition_support(&m), 2);
        for (e, n) in edges.data().iter().zip(near.data()) {
            prop_assert!(*e == 0.0 || *n == 1.0);
        }
    }

    #[test]
    fn canny_commutes_with_horizontal_flip(seed in any::<u64>(), h in 8usize..33, w in 8usize..33) {
        let m = random_blobs(seed, h, w);
        let a = canny_boundary(&m.flip_horizontal(), DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        let b = canny_boundary(&m, DEFAULT_LOW, DEFAULT_HIGH).unwrap().flip_horizontal();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn dilations_compose(seed in any::<u64>(), h in 1usize..20, w in 1usize..20, p in 0.0f64..0.3) {
        let b = binary(seed, [1, 1, h, w], p);
        prop_assert_eq!(dilate(&dilate(&b, 1), 1), dilate(&b, 2));
    }
}

// ------------------------------------------------------------ model blocks

fn small_model(n_cus: usize, depth: usize, seed: u64) -> (Fbwc, ParamStore<f64>) {
    let cfg = ModelConfig {
        channels: 2,
        lambda: 2,
        depth,
        n_cus,
        ..ModelConfig::default()
    };
    let (net, store) = Fbwc::new::<f32>(cfg, seed).unwrap();
    (net, store.cast())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serial_chain_prefix_is_bitwise_stable(seed in any::<u64>(), n in 2usize..6, k in 1usize..6, depth in 2usize..5) {
        let k = k.min(n);
        let (net, mut store) = small_model(n, depth, seed);
        let side = 2 << (depth - 1);
        let x = random(seed ^ 7, [1, 2, side, side]);
        let mut ctx = Ctx::new(&mut store, Mode::Eval);
        let xv = ctx.input(x);
        let full = wcc_forward(&mut ctx, xv, &net.units).unwrap();
        let part = wcc_forward(&mut ctx, xv, &net.units[..k]).unwrap();
        for i in 0..k {
            prop_assert_eq!(ctx.value(full.constraint_points[i]), ctx.value(part.constraint_points[i]));
            prop_assert_eq!(ctx.value(full.trough_points[i]), ctx.value(part.trough_points[i]));
            prop_assert_eq!(ctx.value(full.boundary_logits[i]), ctx.value(part.boundary_logits[i]));
        }
    }

    #[test]
    fn affinities_are_transposes_in_the_unit_interval(seed in any::<u64>(), c in 1usize..4, h in 1usize..5, w in 1usize..5) {
        let mut store = ParamStore::<f64>::new();
        let p = CtaParams::new(&mut store, &mut rng(seed), "blk", c);
        let mut ctx = Ctx::new(&mut store, Mode::Train);
        let a = ctx.input(random(seed ^ 1, [2, c, h, w]));
        let b = ctx.input(random(seed ^ 2, [2, c, h, w]));
        let out = cta_block(&mut ctx, a, b, &p, CtaMode::Transpose).unwrap();
        let (alpha, beta) = (ctx.value(out.alpha), ctx.value(out.beta));
        prop_assert_eq!(&kernels::transpose(alpha), beta);
        prop_assert!(alpha.data().iter().chain(beta.data()).all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn equal_inputs_are_a_fixed_point(seed in any::<u64>(), c in 1usize..4, h in 1usize..5, w in 1usize..5) {
        let mut store = ParamStore::<f64>::new();
        let p = CtaParams::new(&mut store, &mut rng(seed), "blk", c);
        let x = random(seed ^ 1, [2, c, h, w]);
        let mut ctx = Ctx::new(&mut store, Mode::Train);
        let a = ctx.input(x.clone());
        let out = cta_block(&mut ctx, a, a, &p, CtaMode::Transpose).unwrap();
        prop_assert!(close(ctx.value(out.out), &x, 1e-6));
    }

    #[test]
    fn controller_is_affine_in_the_bias_branch(seed in any::<u64>(), c in 1usize..4, units in 1usize..4,
                                               th in 1usize..4, tw in 1usize..4) {
        let (h, w) = (4 * th, 4 * tw);
        let mut store = ParamStore::<f64>::new();
        let p = FccParams::new(&mut store, &mut rng(seed), c, units, VariableBranch::Fourier);
        let x = random(seed ^ 1, [1, c, h, w]);
        let troughs: Vec<_> = (0..units).map(|i| random(seed ^ (10 + i as u64), [1, c, th, tw])).collect();
        let b1: Vec<_> = (0..units).map(|i| random(seed ^ (20 + i as u64), [1, c, h, w])).collect();
        let b2: Vec<_> = (0..units).map(|i| random(seed ^ (30 + i as u64), [1, c, h, w])).collect();
        let sum: Vec<_> = b1.iter().zip(&b2).map(|(p, q)| p.zip_map(q, |u, v| u + v).unwrap()).collect();
        let zero: Vec<_> = (0..units).map(|_| Tensor::zeros([1, c, h, w])).collect();
        let mut ctx = Ctx::new(&mut store, Mode::Eval);
        let xv = ctx.input(x);
        let tv: Vec<_> = troughs.into_iter().map(|t| ctx.input(t)).collect();
        let mut run = |cs: &[Tensor<f64>]| {
            let cv: Vec<_> = cs.iter().map(|t| ctx.input(t.clone())).collect();
            let out = fcc_forward(&mut ctx, xv, &tv, &cv, &p).unwrap();
            ctx.value(out).clone()
        };
        let (f1, f2, fs, wv) = (run(&b1), run(&b2), run(&sum), run(&zero));
        let want = f1.zip_map(&f2, |u, v| u + v).unwrap().zip_map(&wv, |u, v| u - v).unwrap();
        prop_assert!(close(&fs, &want, 1e-6));
    }
}

// ------------------------------------------------------------ losses and metrics

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iou_and_ber_ignore_joint_flips(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let gt = binary(seed, [1, 1, h, w], 0.4);
        let mut r = rng(seed ^ 1);
        let pred = Tensor::from_fn([1, 1, h, w], |_, _, _, _| r.gen_range(0.0f32..1.0));
        let a = metrics(&pred, &gt, 0.5).unwrap();
        let b = metrics(&pred.flip_horizontal(), &gt.flip_horizontal(), 0.5).unwrap();
        prop_assert_eq!(a.iou, b.iou);
        prop_assert_eq!(a.ber, b.ber);
    }

    #[test]
    fn mae_is_complement_symmetric(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
        let gt = binary(seed, [1, 1, h, w], 0.5);
        let mut r = rng(seed ^ 1);
        let pred = Tensor::from_fn([1, 1, h, w], |_, _, _, _| r.gen_range(0.0f32..1.0));
        let a = metrics(&pred, &gt, 0.5).unwrap().mae;
        let b = metrics(&pred.map(|v| 1.0 - v), &gt.map(|v| 1.0 - v), 0.5).unwrap().mae;
        prop_assert!((a - b).abs() <= 1e-6);
    }

    #[test]
    fn ohem_without_mining_is_plain_bce(seed in any::<u64>(), h in 1usize..10, w in 1usize..10) {
        let logits = random(seed, [1, 1, h, w]).map(|v| 6.0 * v);
        let target = binary(seed ^ 1, [1, 1, h, w], 0.5).cast::<f64>();
        let mut t = Tape::new();
        let z = t.leaf(logits.clone());
        let l = ohem_ce(&mut t, z, &target, 1.0, h * w).unwrap();
        let want = bce_logits_value(&logits, &target).unwrap();
        prop_assert!((t.value(l).data()[0] - want).abs() <= 1e-6);
    }
}

// ------------------------------------------------------------ data

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_is_deterministic_with_valid_masks(seed in any::<u64>()) {
        let cfg = SceneConfig { height: 32, width: 32, texture_scale: 8, ..SceneConfig::default() };
        let a = gen_synthetic(&cfg, seed).unwrap();
        prop_assert_eq!(&a, &gen_synthetic(&cfg, seed).unwrap());
        let frac = a.glass_fraction();
        prop_assert!((0.05..=0.7).contains(&frac), "glass fraction {}", frac);
        let edges = canny_boundary(&a.mask, DEFAULT_LOW, DEFAULT_HIGH).unwrap();
        prop_assert!(edges.data().iter().any(|&v| v > 0.0));
    }

    #[test]
    fn augmentation_keeps_the_glass_share(seed in any::<u64>()) {
        let cfg = SceneConfig { height: 32, width: 32, texture_scale: 8, ..SceneConfig::default() };
        let s = gen_synthetic(&cfg, seed).unwrap();
        let out: SamplePair = augment(&s, &mut rng(seed ^ 5), (32, 32)).unwrap();
        prop_assert!((out.glass_fraction() - s.glass_fraction()).abs() <= 0.05);
    }
}

// ------------------------------------------------------------ training

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn poly_lr_never_increases(max_iter in 1usize..5000, base in 1e-6f64..1.0, power in 0.1f64..3.0, frac in 0.0f64..1.0) {
        let i = ((max_iter as f64) * frac) as usize;
        let a = poly_lr(i, max_iter, base, power).unwrap();
        let b = poly_lr((i + 1).min(max_iter), max_iter, base, power).unwrap();
        prop_assert!(b <= a);
    }

    #[test]
    fn sgd_with_zero_lr_keeps_parameters(seed in any::<u64>(), momentum in 0.0f64..0.99) {
        let mut store = ParamStore::<f32>::new();
        store.insert("w", random(seed, [2, 2, 3, 3]).cast(), ParamKind::Weight);
        store.insert("b", random(seed ^ 1, [1, 1, 1, 2]).cast(), ParamKind::Bias);
        store.insert("rm", random(seed ^ 2, [1, 1, 1, 2]).cast(), ParamKind::Buffer);
        let before: Vec<Vec<u32>> = store.iter().map(|(_, p)| p.value.data().iter().map(|v| v.to_bits()).collect()).collect();
        let grads = vec![
            ("w".to_string(), random(seed ^ 3, [2, 2, 3, 3]).cast()),
            ("b".to_string(), random(seed ^ 4, [1, 1, 1, 2]).cast()),
        ];
        sgd_step(&mut store, &grads, 0.0, momentum, 5e-4).unwrap();
        let after: Vec<Vec<u32>> = store.iter().map(|(_, p)| p.value.data().iter().map(|v| v.to_bits()).collect()).collect();
        prop_assert_eq!(before, after);
    }
}

fn arb_config() -> impl Strategy<Value = TrainConfig> {
    (
        1usize..50,
        1usize..9,
        1e-5f64..1.0,
        any::<u64>(),
        prop::sample::select(vec![1usize, 2, 4, 8]),
        2usize..5,
        1usize..6,
        prop::sample::select(vec!["transpose", "plain", "off"]),
        any::<bool>(),
        0.0f64..1.0,
    )
        .prop_map(|(epochs, batch, lr, seed, lambda, depth, cus, mode, bc_off, clip)| {
            let mut c = TrainConfig::default();
            c.epochs = epochs;
            c.batch_size = batch;
            c.base_lr = lr;
            c.seed = seed;
            c.model.lambda = lambda;
            c.model.depth = depth;
            c.model.n_cus = cus;
            c.model.cta_mode = CtaMode::parse(mode).unwrap();
            c.loss.bc_off = bc_off;
            c.clip_norm = clip;
            c
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn config_text_roundtrips(cfg in arb_config()) {
        prop_assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn checkpoint_bytes_roundtrip(cfg in arb_config(), iteration in any::<u64>(), seed in any::<u64>()) {
        let (_, mut store) = Fbwc::new::<f32>(cfg.model.clone(), seed).unwrap();
        let mut r = rng(seed);
        for (_, p) in store.iter_mut() {
            for v in p.momentum.data_mut() {
                *v = r.gen_range(-1.0..1.0);
            }
        }
        let ck = Checkpoint::new(cfg, iteration, store);
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}
