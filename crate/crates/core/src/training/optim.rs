use crate::error::{invalid, Result};
use crate::params::{ParamKind, ParamStore};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Polynomial decay: `base_lr * (1 - iter / max_iter)^power`.
pub fn poly_lr(iter: usize, max_iter: usize, base_lr: f64, power: f64) -> Result<f64> {
    if max_iter == 0 {
        return Err(invalid("poly_lr", "max_iter must be positive"));
    }
    if iter > max_iter {
        return Err(invalid(
            "poly_lr",
            format!("iteration {iter} is past max_iter {max_iter}"),
        ));
    }
    Ok(base_lr * (1.0 - iter as f64 / max_iter as f64).powf(power))
}

/// One SGD step with momentum; weight decay applies to kernels only.
///
/// `v <- momentum * v + grad + weight_decay * param`, `param <- param - lr * v`.
/// `grads` must list the trainable parameters in store order.
pub fn sgd_step<T: Real>(
    store: &mut ParamStore<T>,
    grads: &[(String, Tensor<T>)],
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let trainable = store.iter().filter(|(_, p)| p.kind.is_trainable()).count();
    if trainable != grads.len() {
        return Err(invalid(
            "sgd_step",
            format!("{} gradients for {trainable} trainable parameters", grads.len()),
        ));
    }
    let (lr, mu) = (T::c(lr), T::c(momentum));
    let mut it = grads.iter();
    for (name, p) in store.iter_mut().filter(|(_, p)| p.kind.is_trainable()) {
        let (gname, g) = it.next().expect("counts checked");
        if gname != name || g.shape() != p.value.shape() {
            return Err(invalid(
                "sgd_step",
                format!("gradient `{gname}` {:?} does not align with `{name}` {:?}", g.shape(), p.value.shape()),
            ));
        }
        let wd = if p.kind == ParamKind::Weight {
            T::c(weight_decay)
        } else {
            T::zero()
        };
        let values = p.value.data_mut();
        let velocity = p.momentum.data_mut();
        for ((x, v), &gi) in values.iter_mut().zip(velocity.iter_mut()).zip(g.data()) {
            *v = mu * *v + gi + wd * *x;
            *x -= lr * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(kind: ParamKind, value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("p", Tensor::full([1, 1, 1, 2], value), kind);
        s
    }

    fn grad(v: f64) -> Vec<(String, Tensor<f64>)> {
        vec![("p".to_string(), Tensor::full([1, 1, 1, 2], v))]
    }

    #[test]
    fn schedule_points() {
        assert_eq!(poly_lr(0, 100, 0.001, 0.9).unwrap(), 0.001);
        assert_eq!(poly_lr(100, 100, 0.001, 0.9).unwrap(), 0.0);
        let mid = poly_lr(50, 100, 0.001, 0.9).unwrap();
        assert!((mid - 5.359e-4).abs() < 1e-7);
        assert!(poly_lr(101, 100, 0.001, 0.9).is_err());
        assert!(poly_lr(0, 0, 0.001, 0.9).is_err());
    }

    #[test]
    fn plain_descent_and_decay() {
        let mut s = store(ParamKind::Weight, 1.0);
        sgd_step(&mut s, &grad(0.5), 0.1, 0.0, 0.0).unwrap();
        assert_eq!(s.value("p").unwrap().data()[0], 1.0 - 0.1 * 0.5);

        let mut s = store(ParamKind::Weight, 2.0);
        sgd_step(&mut s, &grad(0.0), 0.1, 0.0, 0.01).unwrap();
        assert_eq!(s.value("p").unwrap().data()[0], 2.0 * (1.0 - 0.1 * 0.01));

        let mut s = store(ParamKind::Bias, 2.0);
        sgd_step(&mut s, &grad(0.0), 0.1, 0.0, 0.01).unwrap();
        assert_eq!(s.value("p").unwrap().data()[0], 2.0);
    }

    #[test]
    fn momentum_recurrence() {
        let mut s = store(ParamKind::Weight, 1.0);
        let (lr, mu, wd) = (0.1, 0.9, 0.01);
        let (mut x, mut v) = (1.0f64, 0.0f64);
        for g in [0.5, -0.25] {
            sgd_step(&mut s, &grad(g), lr, mu, wd).unwrap();
            v = mu * v + g + wd * x;
            x -= lr * v;
        }
        assert_eq!(s.value("p").unwrap().data()[0], x);
    }

    #[test]
    fn zero_rate_changes_nothing() {
        let mut s = store(ParamKind::Weight, 0.3);
        let before = s.value("p").unwrap().clone();
        sgd_step(&mut s, &grad(7.0), 0.0, 0.9, 5e-4).unwrap();
        assert_eq!(s.value("p").unwrap(), &before);
    }

    #[test]
    fn misaligned_gradients() {
        let mut s = store(ParamKind::Weight, 0.3);
        assert!(sgd_step(&mut s, &[], 0.1, 0.0, 0.0).is_err());
        let wrong = vec![("q".to_string(), Tensor::zeros([1, 1, 1, 2]))];
        assert!(sgd_step(&mut s, &wrong, 0.1, 0.0, 0.0).is_err());
    }
}
