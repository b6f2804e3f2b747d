use rand::Rng;

use super::context::Ctx;
use crate::autodiff::Var;
use crate::error::Result;
use crate::params::{ParamKind, ParamStore};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// A square convolution whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug, PartialEq)]
pub struct Conv {
    pub weight: String,
    pub bias: Option<String>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv {
    /// Registers a Glorot-uniform kernel and a zero bias under `name`.
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Self {
        let mut conv = Self::without_bias(store, rng, name, in_channels, out_channels, kernel);
        let bias = format!("{name}.bias");
        store.insert(
            bias.clone(),
            Tensor::zeros([1, 1, 1, out_channels]),
            ParamKind::Bias,
        );
        conv.bias = Some(bias);
        conv
    }

    pub fn without_bias<T: Real>(
        store: &mut ParamStore<T>,
        rng: &mut impl Rng,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
    ) -> Self {
        let area = kernel * kernel;
        let limit = (6.0 / ((in_channels + out_channels) * area) as f64).sqrt();
        let shape = [out_channels, in_channels, kernel, kernel];
        let data = (0..shape.iter().product::<usize>())
            .map(|_| T::c(rng.gen_range(-limit..limit)))
            .collect();
        let weight = format!("{name}.weight");
        store.insert(
            weight.clone(),
            Tensor::new(shape, data).expect("length matches shape"),
            ParamKind::Weight,
        );
        Self {
            weight,
            bias: None,
            in_channels,
            out_channels,
            kernel,
        }
    }

    /// "Same" convolution (stride 1, padding `kernel/2`).
    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let w = ctx.param(&self.weight)?;
        let b = match &self.bias {
            Some(name) => ctx.param(name)?,
            None => ctx.input(Tensor::zeros([1, 1, 1, self.out_channels])),
        };
        ctx.tape.conv2d(x, w, b, 1, self.kernel / 2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm {
    pub gamma: String,
    pub beta: String,
    pub running_mean: String,
    pub running_var: String,
}

impl BatchNorm {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        let shape = [1, 1, 1, channels];
        let bn = Self {
            gamma: format!("{name}.gamma"),
            beta: format!("{name}.beta"),
            running_mean: format!("{name}.running_mean"),
            running_var: format!("{name}.running_var"),
        };
        store.insert(bn.gamma.clone(), Tensor::ones(shape), ParamKind::Norm);
        store.insert(bn.beta.clone(), Tensor::zeros(shape), ParamKind::Norm);
        store.insert(bn.running_mean.clone(), Tensor::zeros(shape), ParamKind::Buffer);
        store.insert(bn.running_var.clone(), Tensor::ones(shape), ParamKind::Buffer);
        bn
    }

    pub fn forward<T: Real>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        ctx.batchnorm(
            x,
            &self.gamma,
            &self.beta,
            &self.running_mean,
            &self.running_var,
        )
    }
}
