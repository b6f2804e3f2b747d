//! Finite-difference verification of tape gradients.

mod suite;

pub use suite::{gradcheck_suite, toy_config, SuiteConfig, SuiteEntry};

use crate::autodiff::{Tape, Var};
use crate::error::{invalid, Result};
use crate::model::{Ctx, Mode};
use crate::params::ParamStore;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Outcome of comparing tape gradients to central differences.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Number of scalar derivatives compared.
    pub checked: usize,
    pub threshold: f64,
    pub pass: bool,
}

/// Per-element errors are measured relative to
/// `max(|analytic|, |numeric|, floor)`, where `floor` is this fraction of the
/// largest numeric derivative. Derivatives far below the gradient's own scale
/// are then judged on absolute error instead of amplifying rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-3;

/// Checks the gradient of the scalar produced by `graph` with respect to a
/// single input.
pub fn gradcheck<T: Real>(
    graph: impl Fn(&mut Tape<T>, Var) -> Result<Var>,
    input: &Tensor<T>,
    step: T,
    threshold: f64,
) -> Result<GradcheckReport> {
    gradcheck_many(
        |tape, vars| graph(tape, vars[0]),
        std::slice::from_ref(input),
        step,
        threshold,
    )
}

fn evaluate<T: Real>(
    graph: &impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<T>],
) -> Result<f64> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = graph(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(invalid("gradcheck", "graph must produce a scalar"));
    }
    Ok(v.data()[0].to_f64_lossy())
}

/// Checks gradients with respect to every tensor in `inputs`.
pub fn gradcheck_many<T: Real>(
    graph: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<T>],
    step: T,
    threshold: f64,
) -> Result<GradcheckReport> {
    let analytic = analytic_grads(&graph, inputs)?;
    let numeric = numeric_grads(&graph, inputs, step)?;
    Ok(compare(&analytic, &numeric, threshold))
}

/// Checks the tape gradients of `graph` at precision `T` against central
/// differences of `reference`, the same graph evaluated in `f64` on the same
/// values. Single-precision differences are dominated by rounding and by
/// perturbations that cross rectifier or max-pool kinks, so this is how
/// single-precision builds are verified.
pub fn gradcheck_against_f64<T: Real>(
    graph: impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    reference: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<f64>],
    step: f64,
    threshold: f64,
) -> Result<GradcheckReport> {
    let cast: Vec<Tensor<T>> = inputs.iter().map(Tensor::cast).collect();
    let analytic = analytic_grads(&graph, &cast)?;
    let numeric = numeric_grads(&reference, inputs, step)?;
    Ok(compare(&analytic, &numeric, threshold))
}

fn analytic_grads<T: Real>(
    graph: &impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<T>],
) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = graph(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| grads.wrt(&tape, v).data().iter().map(|g| g.to_f64_lossy()).collect())
        .collect())
}

fn numeric_grads<T: Real>(
    graph: &impl Fn(&mut Tape<T>, &[Var]) -> Result<Var>,
    inputs: &[Tensor<T>],
    step: T,
) -> Result<Vec<Vec<f64>>> {
    let h = step.to_f64_lossy();
    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for k in 0..inputs.len() {
        let mut nk = Vec::with_capacity(inputs[k].numel());
        for i in 0..inputs[k].numel() {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + step;
            let plus = evaluate(graph, &work)?;
            work[k].data_mut()[i] = orig - step;
            let minus = evaluate(graph, &work)?;
            work[k].data_mut()[i] = orig;
            nk.push((plus - minus) / (2.0 * h));
        }
        numeric.push(nk);
    }
    Ok(numeric)
}

fn compare(analytic: &[Vec<f64>], numeric: &[Vec<f64>], threshold: f64) -> GradcheckReport {
    let scale = numeric
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (RELATIVE_FLOOR * scale).max(f64::MIN_POSITIVE);
    let mut max_rel = 0.0f64;
    let mut max_abs = 0.0f64;
    let mut checked = 0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.iter().zip(n) {
            let err = (av - nv).abs();
            let denom = av.abs().max(nv.abs()).max(floor);
            max_abs = max_abs.max(err);
            max_rel = max_rel.max(err / denom);
            checked += 1;
        }
    }
    if !max_rel.is_finite() {
        max_rel = f64::INFINITY;
    }
    GradcheckReport {
        max_rel_err: max_rel,
        max_abs_err: max_abs,
        checked,
        threshold,
        pass: max_rel < threshold,
    }
}

/// Reduces `v` to a scalar through fixed pseudo-random weights in `[-1, 1]`,
/// so every output element contributes a distinct gradient.
pub fn random_projection<T: Real>(tape: &mut Tape<T>, v: Var, seed: u64) -> Result<Var> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(v);
    let w = Tensor::from_fn(shape, |_, _, _, _| T::c(rng.gen_range(-1.0..1.0)));
    let w = tape.constant(w);
    let prod = tape.mul(v, w)?;
    Ok(tape.sum(prod))
}

/// Like [`gradcheck_many`] for graphs built from stored model parameters.
///
/// `graph` receives one variable per tensor in `inputs`. The parameters listed
/// in `params` are perturbed too; all other parameters stay fixed. Each
/// evaluation runs on a fresh copy of `store`, so train-mode batch norm does
/// not leak running statistics between evaluations.
pub fn gradcheck_model<T: Real>(
    store: &ParamStore<T>,
    mode: Mode,
    inputs: &[Tensor<T>],
    params: &[&str],
    graph: impl Fn(&mut Ctx<'_, T>, &[Var]) -> Result<Var>,
    step: T,
    threshold: f64,
) -> Result<GradcheckReport> {
    let mut all = inputs.to_vec();
    for name in params {
        all.push(store.value(name)?.clone());
    }
    gradcheck_many(
        bind_params(store, mode, inputs.len(), params, graph),
        &all,
        step,
        threshold,
    )
}

/// Turns a model graph into a plain tape graph whose variables are the first
/// `k` data inputs followed by the listed parameters.
pub(crate) fn bind_params<'a, T: Real>(
    store: &'a ParamStore<T>,
    mode: Mode,
    k: usize,
    params: &'a [&'a str],
    graph: impl Fn(&mut Ctx<'_, T>, &[Var]) -> Result<Var> + 'a,
) -> impl Fn(&mut Tape<T>, &[Var]) -> Result<Var> + 'a {
    move |tape, vars| {
        let mut local = store.clone();
        let mut ctx = Ctx::on_tape(std::mem::take(tape), &mut local, mode);
        let result = params
            .iter()
            .zip(&vars[k..])
            .try_for_each(|(name, &v)| ctx.bind(name, v))
            .and_then(|()| graph(&mut ctx, &vars[..k]));
        *tape = ctx.into_tape();
        result
    }
}
