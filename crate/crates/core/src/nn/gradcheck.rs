//! Central finite-difference gradient oracle.

use super::mlp::Mlp;

pub const DEFAULT_STEP: f64 = 1e-5;

/// `|a - n| / max(1e-8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Central differences of `loss` around `params`, one coordinate at a time.
pub fn numeric_gradient(params: &[f64], mut loss: impl FnMut(&[f64]) -> f64, h: f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = loss(&probe);
            probe[i] = orig - h;
            let down = loss(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Maximum relative error between `analytic` and the central-difference
/// gradient of `loss` at `params`.
pub fn grad_check(params: &[f64], analytic: &[f64], loss: impl FnMut(&[f64]) -> f64, h: f64) -> f64 {
    assert_eq!(params.len(), analytic.len(), "gradient length mismatch");
    numeric_gradient(params, loss, h)
        .into_iter()
        .zip(analytic)
        .map(|(n, &a)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Checks a network loss that reports its own analytic parameter gradient.
pub fn grad_check_mlp(net: &Mlp, loss: impl Fn(&Mlp) -> (f64, Vec<f64>)) -> f64 {
    let (_, analytic) = loss(net);
    let mut probe = net.clone();
    grad_check(
        net.params(),
        &analytic,
        |p| {
            probe.set_params(p).expect("same shape");
            loss(&probe).0
        },
        DEFAULT_STEP,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Matrix};
    use crate::rng::{stream, Stream};

    fn squared_error(net: &Mlp, x: &Matrix, t: &Matrix) -> (f64, Vec<f64>) {
        let cache = net.forward(x).unwrap();
        let mut g = cache.output().clone();
        let mut loss = 0.0;
        for (gv, tv) in g.data_mut().iter_mut().zip(t.data()) {
            let d = *gv - tv;
            loss += d * d;
            *gv = 2.0 * d;
        }
        (loss, net.backward(&cache, &g).unwrap().param_grads)
    }

    #[test]
    fn quadratic_loss_on_linear_net_is_near_exact() {
        let mut rng = stream(2, Stream::Init);
        let net = Mlp::init(&[3, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.3, 0.3, -1.0]]);
        let t = Matrix::from_rows(&[[0.0, 1.0], [2.0, -1.0]]);
        let err = grad_check_mlp(&net, |n| squared_error(n, &x, &t));
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn tanh_net_squared_error() {
        let mut rng = stream(3, Stream::Init);
        let net = Mlp::init(&[3, 8, 8, 2], Activation::Tanh, Activation::Tanh, &mut rng).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.3, 0.3, -1.0], [0.0, 0.7, 0.2]]);
        let t = Matrix::from_rows(&[[0.0, 0.5], [0.2, -0.1], [-0.3, 0.3]]);
        let err = grad_check_mlp(&net, |n| squared_error(n, &x, &t));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let net = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity).unwrap();
        let err = grad_check_mlp(&net, |n| (4.2, vec![0.0; n.param_count()]));
        assert_eq!(err, 0.0);
    }
}
