use indexmap::IndexMap;

use crate::autodiff::{Gradients, Tape, Var};
use crate::error::Result;
use crate::params::ParamStore;
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Whether batch norm uses batch statistics (and updates the running ones).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running-statistics momentum for batch norm.
pub const BN_MOMENTUM: f64 = 0.1;

/// One forward pass: a fresh tape plus the parameters bound onto it.
pub struct Ctx<'s, T> {
    pub tape: Tape<T>,
    store: &'s mut ParamStore<T>,
    bound: IndexMap<String, Var>,
    mode: Mode,
}

impl<'s, T: Real> Ctx<'s, T> {
    pub fn new(store: &'s mut ParamStore<T>, mode: Mode) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: IndexMap::new(),
            mode,
        }
    }

    /// Continues recording on an existing tape, e.g. one whose leaves are
    /// driven by a finite-difference check.
    pub fn on_tape(tape: Tape<T>, store: &'s mut ParamStore<T>, mode: Mode) -> Self {
        Self {
            tape,
            store,
            bound: IndexMap::new(),
            mode,
        }
    }

    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }

    /// Uses `var` for parameter `name` instead of a fresh leaf from the store.
    pub fn bind(&mut self, name: &str, var: Var) -> Result<()> {
        let stored = self.store.value(name)?.shape();
        let given = self.tape.shape(var);
        if stored != given {
            return Err(crate::error::Error::ShapeMismatch {
                op: "bind",
                left: stored.to_vec(),
                right: given.to_vec(),
            });
        }
        self.bound.insert(name.to_string(), var);
        Ok(())
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &ParamStore<T> {
        self.store
    }

    /// The tape leaf holding parameter `name`, recorded on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.bound.get(name) {
            return Ok(v);
        }
        let value = self.store.value(name)?.clone();
        let v = self.tape.leaf(value);
        self.bound.insert(name.to_string(), v);
        Ok(v)
    }

    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.tape.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        self.tape.value(v)
    }

    /// Batch norm over `input` using the named affine parameters and buffers.
    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: &str,
        beta: &str,
        running_mean: &str,
        running_var: &str,
    ) -> Result<Var> {
        let g = self.param(gamma)?;
        let b = self.param(beta)?;
        match self.mode {
            Mode::Train => {
                let (out, mean, var) = self.tape.batchnorm_train(input, g, b)?;
                let m = T::c(BN_MOMENTUM);
                for (name, batch) in [(running_mean, mean), (running_var, var)] {
                    let p = self
                        .store
                        .get_mut(name)
                        .expect("running statistics registered with the layer");
                    for (r, &v) in p.value.data_mut().iter_mut().zip(&batch) {
                        *r = (T::one() - m) * *r + m * v;
                    }
                }
                Ok(out)
            }
            Mode::Eval => {
                let mean = self.store.value(running_mean)?.data().to_vec();
                let var = self.store.value(running_var)?.data().to_vec();
                self.tape.batchnorm_eval(input, g, b, &mean, &var)
            }
        }
    }

    /// Gradients of every bound trainable parameter, in store order.
    pub fn param_grads(&self, grads: &Gradients<T>) -> Vec<(String, Tensor<T>)> {
        self.store
            .iter()
            .filter(|(_, p)| p.kind.is_trainable())
            .map(|(name, p)| {
                let g = match self.bound.get(name) {
                    Some(&v) => grads.wrt(&self.tape, v),
                    None => Tensor::zeros(p.value.shape()),
                };
                (name.to_string(), g)
            })
            .collect()
    }

    pub fn bound(&self, name: &str) -> Option<Var> {
        self.bound.get(name).copied()
    }
}
