use rand::Rng;

use super::matrix::{gemm, Matrix, View};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected feed-forward network.
///
/// Parameters live in one flat buffer, layer by layer: the weight block
/// (`in × out`, row-major, so row `i` holds the fan-out of input `i`)
/// followed by the bias (`out`). Optimizers and target blending work on that
/// buffer directly.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    hidden: Activation,
    output: Activation,
}

/// Post-activation outputs of every layer, recorded by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: Vec<usize>,
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("cache holds the input at least")
    }

    pub fn input(&self) -> &Matrix {
        &self.activations[0]
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub param_grads: Vec<f64>,
    pub input_grad: Matrix,
}

impl Mlp {
    /// Zero-initialized network with the given layer widths.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "layer dims must list at least two positive widths, got {dims:?}"
            )));
        }
        let count = dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum();
        Ok(Mlp {
            dims: dims.to_vec(),
            params: vec![0.0; count],
            hidden,
            output,
        })
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Mlp::new(dims, hidden, output)?;
        for l in 0..net.n_layers() {
            let bound = 1.0 / (net.dims[l] as f64).sqrt();
            let (w, _) = net.layer_slices_mut(l);
            for v in w {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Start of `layer` in the flat buffer.
    fn layer_offset(&self, layer: usize) -> usize {
        self.dims[..=layer]
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum::<usize>()
    }

    fn layer_range(&self, layer: usize) -> (usize, usize, usize) {
        let start = self.layer_offset(layer);
        let (fan_in, fan_out) = (self.dims[layer], self.dims[layer + 1]);
        (start, start + fan_in * fan_out, start + (fan_in + 1) * fan_out)
    }

    /// `(weights, bias)` of one layer.
    pub fn layer_slices(&self, layer: usize) -> (&[f64], &[f64]) {
        let (w, b, end) = self.layer_range(layer);
        (&self.params[w..b], &self.params[b..end])
    }

    pub fn layer_slices_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (w, b, end) = self.layer_range(layer);
        let (weights, bias) = self.params[w..end].split_at_mut(b - w);
        (weights, bias)
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.n_layers() {
            self.output
        } else {
            self.hidden
        }
    }

    /// Batched forward pass; rows of `input` are samples.
    pub fn forward(&self, input: &Matrix) -> Result<ForwardCache> {
        if input.cols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects input width {}, got {}",
                self.input_dim(),
                input.cols()
            )));
        }
        let batch = input.rows();
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.clone());
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let (w, b) = self.layer_slices(l);
            let act = self.activation_of(l);
            let mut y = Matrix::zeros(batch, fan_out);
            for r in 0..batch {
                y.row_mut(r).copy_from_slice(b);
            }
            gemm(
                View::new(activations[l].data(), batch, fan_in),
                View::new(w, fan_in, fan_out),
                1.0,
                y.data_mut(),
            );
            if act != Activation::Identity {
                y.map_inplace(|v| act.apply(v));
            }
            activations.push(y);
        }
        Ok(ForwardCache {
            dims: self.dims.clone(),
            activations,
        })
    }

    /// Single-sample convenience wrapper around [`Mlp::forward`].
    pub fn forward_one(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let cache = self.forward(&Matrix::row_vector(input))?;
        Ok((cache.output().row(0).to_vec(), cache))
    }

    pub fn predict(&self, input: &Matrix) -> Result<Matrix> {
        let mut cache = self.forward(input)?;
        Ok(cache.activations.pop().expect("non-empty"))
    }

    /// Gradients of `sum(output ⊙ output_grad)` with respect to the
    /// parameters and the input.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<Backward> {
        let (grads, input_grad) = self.backprop(cache, output_grad, true)?;
        Ok(Backward {
            param_grads: grads.expect("requested"),
            input_grad,
        })
    }

    /// Input gradient only; skips the weight-gradient accumulation.
    pub fn backward_input(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<Matrix> {
        Ok(self.backprop(cache, output_grad, false)?.1)
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        output_grad: &Matrix,
        want_params: bool,
    ) -> Result<(Option<Vec<f64>>, Matrix)> {
        if cache.dims != self.dims {
            return Err(Error::Dimension(format!(
                "stale activation cache: recorded for {:?}, network is {:?}",
                cache.dims, self.dims
            )));
        }
        let batch = cache.input().rows();
        if output_grad.rows() != batch || output_grad.cols() != self.output_dim() {
            return Err(Error::Dimension(format!(
                "output gradient is {}x{}, expected {}x{}",
                output_grad.rows(),
                output_grad.cols(),
                batch,
                self.output_dim()
            )));
        }
        let mut grads = want_params.then(|| vec![0.0; self.params.len()]);
        let mut upstream = output_grad.clone();
        for l in (0..self.n_layers()).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let act = self.activation_of(l);
            let y = &cache.activations[l + 1];
            let x = &cache.activations[l];
            // delta = upstream ⊙ act'(y)
            let mut delta = upstream;
            if act != Activation::Identity {
                for (d, &yv) in delta.data_mut().iter_mut().zip(y.data()) {
                    *d *= act.derivative_from_output(yv);
                }
            }
            if let Some(g) = grads.as_mut() {
                let (start, bias_start, end) = self.layer_range(l);
                let (gw, gb) = g[start..end].split_at_mut(bias_start - start);
                gemm(
                    View::new(x.data(), batch, fan_in).t(),
                    View::new(delta.data(), batch, fan_out),
                    0.0,
                    gw,
                );
                for r in 0..batch {
                    for (b, d) in gb.iter_mut().zip(delta.row(r)) {
                        *b += d;
                    }
                }
            }
            let (w, _) = self.layer_slices(l);
            let mut dx = Matrix::zeros(batch, fan_in);
            gemm(
                View::new(delta.data(), batch, fan_out),
                View::new(w, fan_in, fan_out).t(),
                0.0,
                dx.data_mut(),
            );
            upstream = dx;
        }
        Ok((grads, upstream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;
    use crate::rng::{stream, Stream};

    #[test]
    fn zero_weights_give_zero_output() {
        let net = Mlp::new(&[3, 5, 2], Activation::Relu, Activation::Identity).unwrap();
        let (out, _) = net.forward_one(&[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
        assert_eq!(net.param_count(), (3 + 1) * 5 + (5 + 1) * 2);
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mut net = Mlp::new(&[2, 2], Activation::Relu, Activation::Identity).unwrap();
        net.layer_slices_mut(0).0.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
        let (out, _) = net.forward_one(&[0.5, -0.2]).unwrap();
        assert_eq!(out, vec![0.5, -0.2]);
    }

    #[test]
    fn layer_slices_tile_the_buffer() {
        let net = Mlp::new(&[3, 5, 4, 2], Activation::Relu, Activation::Identity).unwrap();
        let base = net.params().as_ptr() as usize;
        let mut next = 0;
        for l in 0..net.n_layers() {
            let (w, b) = net.layer_slices(l);
            assert_eq!((w.as_ptr() as usize - base) / 8, next);
            assert_eq!(w.len(), net.layer_dims()[l] * net.layer_dims()[l + 1]);
            next += w.len();
            assert_eq!((b.as_ptr() as usize - base) / 8, next);
            next += b.len();
        }
        assert_eq!(next, net.param_count());
    }

    #[test]
    fn two_layer_tanh_matches_hand_evaluation() {
        // 2-2-1: h_j = tanh(x0 w0j + x1 w1j + b_j); y = h0 v0 + h1 v1 + c
        let mut net = Mlp::new(&[2, 2, 1], Activation::Tanh, Activation::Identity).unwrap();
        let (w0, b0) = (
            [0.3, -0.7, 1.1, 0.4], // row i = input i, columns = hidden units
            [0.05, -0.2],
        );
        let (w1, b1) = ([0.9, -1.3], [0.25]);
        net.params_mut()
            .copy_from_slice(&[w0.as_slice(), &b0, &w1, &b1].concat());
        let x = [0.6, -0.8];
        let h0 = (x[0] * 0.3 + x[1] * 1.1 + 0.05f64).tanh();
        let h1 = (x[0] * -0.7 + x[1] * 0.4 - 0.2f64).tanh();
        let expected = h0 * 0.9 + h1 * -1.3 + 0.25;
        let (out, _) = net.forward_one(&x).unwrap();
        assert!((out[0] - expected).abs() < 1e-12, "{} vs {expected}", out[0]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = Mlp::new(&[3, 1], Activation::Relu, Activation::Identity).unwrap();
        assert!(matches!(net.forward_one(&[1.0]), Err(Error::Dimension(_))));
        assert!(Mlp::new(&[3], Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = stream(1, Stream::Init);
        let net = Mlp::init(&[4, 8, 2], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let (_, cache) = net.forward_one(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let back = net.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
        assert!(back.param_grads.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_scalar_gradient() {
        let mut net = Mlp::new(&[1, 1], Activation::Relu, Activation::Identity).unwrap();
        net.params_mut().copy_from_slice(&[2.0, 0.5]);
        let (out, cache) = net.forward_one(&[3.0]).unwrap();
        assert_eq!(out, vec![6.5]);
        let back = net.backward(&cache, &Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(back.param_grads, vec![3.0, 1.0]);
        assert_eq!(back.input_grad.row(0), &[2.0]);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = Mlp::new(&[2, 3, 1], Activation::Relu, Activation::Identity).unwrap();
        let b = Mlp::new(&[2, 4, 1], Activation::Relu, Activation::Identity).unwrap();
        let (_, cache) = a.forward_one(&[1.0, 1.0]).unwrap();
        assert!(b.backward(&cache, &Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn random_net_matches_finite_differences() {
        let mut rng = stream(11, Stream::Init);
        for (hidden, output) in [
            (Activation::Tanh, Activation::Identity),
            (Activation::Relu, Activation::Tanh),
        ] {
            let net = Mlp::init(&[4, 8, 2], hidden, output, &mut rng).unwrap();
            let x = Matrix::from_rows(&[[0.3, -0.1, 0.8, 0.5], [-0.6, 0.2, 0.1, -0.9]]);
            let target = Matrix::from_rows(&[[0.2, -0.4], [0.7, 0.1]]);
            let loss = |p: &[f64]| {
                let mut n = net.clone();
                n.set_params(p).unwrap();
                let out = n.predict(&x).unwrap();
                out.data()
                    .iter()
                    .zip(target.data())
                    .map(|(o, t)| (o - t).powi(2))
                    .sum::<f64>()
            };
            let cache = net.forward(&x).unwrap();
            let mut g = cache.output().clone();
            for (gv, t) in g.data_mut().iter_mut().zip(target.data()) {
                *gv = 2.0 * (*gv - t);
            }
            let analytic = net.backward(&cache, &g).unwrap().param_grads;
            let err = grad_check(net.params(), &analytic, loss, 1e-5);
            assert!(err < 1e-4, "{hidden:?}/{output:?}: rel err {err}");
        }
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = stream(5, Stream::Init);
        let net = Mlp::init(&[3, 6, 1], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let x = [0.2, -0.5, 0.9];
        let (_, cache) = net.forward_one(&x).unwrap();
        let dx = net.backward_input(&cache, &Matrix::row_vector(&[1.0])).unwrap();
        let f = |xs: &[f64]| net.forward_one(xs).unwrap().0[0];
        let err = grad_check(&x, dx.row(0), f, 1e-5);
        assert!(err < 1e-6, "rel err {err}");
    }
}
