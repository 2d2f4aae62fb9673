//! State-conditioned mixing of per-agent utilities into a joint value.
//!
//! `vdn` sums the utilities. `mono` and `nonmono` run a hypernetwork on the
//! global state that emits the weights of a one-hidden-layer mixing net:
//!
//! ```text
//! h      = elu(q · W1 + b1)        q: 1×N, W1: N×H
//! q_jt   = h · W2 + b2             W2: H×1
//! ```
//!
//! `mono` passes the generated `W1` and `W2` through `|·|`, which makes
//! `∂q_jt/∂q_i ≥ 0` everywhere; `nonmono` uses them as generated.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, ForwardCache, Matrix, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixerKind {
    Vdn,
    Mono,
    NonMono,
}

impl fmt::Display for MixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MixerKind::Vdn => "vdn",
            MixerKind::Mono => "mono",
            MixerKind::NonMono => "nonmono",
        })
    }
}

impl FromStr for MixerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vdn" => Ok(MixerKind::Vdn),
            "mono" => Ok(MixerKind::Mono),
            "nonmono" | "non-mono" => Ok(MixerKind::NonMono),
            other => Err(format!("unknown mixer `{other}` (expected vdn, mono or nonmono)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixer {
    kind: MixerKind,
    n_agents: usize,
    embed: usize,
    hyper: Option<Mlp>,
}

#[derive(Debug, Clone)]
pub struct MixerCache {
    q_locals: Matrix,
    hyper: Option<ForwardCache>,
    /// Post-ELU hidden mixing layer, `batch × embed`.
    hidden: Matrix,
}

#[inline]
fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// ELU derivative written in terms of its output.
#[inline]
fn elu_grad_from_output(h: f64) -> f64 {
    if h > 0.0 {
        1.0
    } else {
        h + 1.0
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Mixer {
    pub fn new<R: Rng + ?Sized>(
        kind: MixerKind,
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        hyper_hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hyper = match kind {
            MixerKind::Vdn => None,
            MixerKind::Mono | MixerKind::NonMono => {
                let out = n_agents * embed + 2 * embed + 1;
                Some(Mlp::init(
                    &[state_dim, hyper_hidden, out],
                    Activation::Relu,
                    Activation::Identity,
                    rng,
                )?)
            }
        };
        Ok(Mixer {
            kind,
            n_agents,
            embed,
            hyper,
        })
    }

    pub fn kind(&self) -> MixerKind {
        self.kind
    }

    pub fn hypernet(&self) -> Option<&Mlp> {
        self.hyper.as_ref()
    }

    pub fn hypernet_mut(&mut self) -> Option<&mut Mlp> {
        self.hyper.as_mut()
    }

    pub fn param_count(&self) -> usize {
        self.hyper.as_ref().map_or(0, Mlp::param_count)
    }

    fn transform(&self, w: f64) -> f64 {
        match self.kind {
            MixerKind::Mono => w.abs(),
            _ => w,
        }
    }

    /// Joint values for each row of `q_locals` (`batch × n_agents`).
    pub fn forward(&self, states: &Matrix, q_locals: &Matrix) -> Result<(Vec<f64>, MixerCache)> {
        if q_locals.cols() != self.n_agents || states.rows() != q_locals.rows() {
            return Err(Error::Dimension(format!(
                "mixer for {} agents got {}x{} utilities and {} states",
                self.n_agents,
                q_locals.rows(),
                q_locals.cols(),
                states.rows()
            )));
        }
        let batch = q_locals.rows();
        let Some(hyper) = &self.hyper else {
            let q = (0..batch).map(|r| q_locals.row(r).iter().sum()).collect();
            return Ok((
                q,
                MixerCache {
                    q_locals: q_locals.clone(),
                    hyper: None,
                    hidden: Matrix::zeros(batch, 0),
                },
            ));
        };
        let cache = hyper.forward(states)?;
        let gen = cache.output();
        let (n, h) = (self.n_agents, self.embed);
        let mut hidden = Matrix::zeros(batch, h);
        let mut out = Vec::with_capacity(batch);
        for r in 0..batch {
            let g = gen.row(r);
            let q = q_locals.row(r);
            let (w1, rest) = g.split_at(n * h);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let hr = hidden.row_mut(r);
            let mut total = b2[0];
            for k in 0..h {
                let mut z = b1[k];
                for i in 0..n {
                    z += q[i] * self.transform(w1[i * h + k]);
                }
                hr[k] = elu(z);
                total += hr[k] * self.transform(w2[k]);
            }
            out.push(total);
        }
        Ok((
            out,
            MixerCache {
                q_locals: q_locals.clone(),
                hyper: Some(cache),
                hidden,
            },
        ))
    }

    /// Backpropagates `dq_jt`. Returns the hypernetwork parameter gradient
    /// (when requested and present) and the gradient w.r.t. the utilities.
    pub fn backward(&self, cache: &MixerCache, dq_jt: &[f64], want_params: bool) -> Result<(Option<Vec<f64>>, Matrix)> {
        let batch = cache.q_locals.rows();
        let n = self.n_agents;
        let mut dq = Matrix::zeros(batch, n);
        let (Some(hyper), Some(hcache)) = (&self.hyper, &cache.hyper) else {
            for r in 0..batch {
                dq.row_mut(r).fill(dq_jt[r]);
            }
            return Ok((None, dq));
        };
        let h = self.embed;
        let gen = hcache.output();
        let mut dgen = Matrix::zeros(batch, gen.cols());
        let mut dz = vec![0.0; h];
        for r in 0..batch {
            let g = gen.row(r);
            let q = cache.q_locals.row(r);
            let hr = cache.hidden.row(r);
            let go = dq_jt[r];
            let (w1, rest) = g.split_at(n * h);
            let w2 = &rest[h..2 * h];
            for k in 0..h {
                dz[k] = go * self.transform(w2[k]) * elu_grad_from_output(hr[k]);
            }
            let dqr = dq.row_mut(r);
            for i in 0..n {
                let mut acc = 0.0;
                for k in 0..h {
                    acc += self.transform(w1[i * h + k]) * dz[k];
                }
                dqr[i] = acc;
            }
            if want_params {
                let mono = self.kind == MixerKind::Mono;
                let dg = dgen.row_mut(r);
                for i in 0..n {
                    for k in 0..h {
                        let s = if mono { sign(w1[i * h + k]) } else { 1.0 };
                        dg[i * h + k] = q[i] * dz[k] * s;
                    }
                }
                for k in 0..h {
                    dg[n * h + k] = dz[k];
                    let s = if mono { sign(w2[k]) } else { 1.0 };
                    dg[n * h + h + k] = go * hr[k] * s;
                }
                dg[n * h + 2 * h] = go;
            }
        }
        let grads = if want_params {
            Some(hyper.backward(hcache, &dgen)?.param_grads)
        } else {
            None
        };
        Ok((grads, dq))
    }

    /// Joint value of a single sample.
    pub fn mix_one(&self, state: &[f64], q_locals: &[f64]) -> Result<f64> {
        let (q, _) = self.forward(&Matrix::row_vector(state), &Matrix::row_vector(q_locals))?;
        Ok(q[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;
    use crate::rng::{stream, Stream};
    use rand::Rng;

    fn mixer(kind: MixerKind, seed: u64) -> Mixer {
        Mixer::new(kind, 3, 5, 4, 8, &mut stream(seed, Stream::Init)).unwrap()
    }

    #[test]
    fn vdn_sums() {
        let m = mixer(MixerKind::Vdn, 0);
        assert_eq!(m.param_count(), 0);
        assert_eq!(m.mix_one(&[0.0; 5], &[1.0, 2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn parse_and_display() {
        for k in [MixerKind::Vdn, MixerKind::Mono, MixerKind::NonMono] {
            assert_eq!(k.to_string().parse::<MixerKind>().unwrap(), k);
        }
        assert!("qmix".parse::<MixerKind>().is_err());
    }

    #[test]
    fn utility_gradient_matches_finite_differences() {
        for kind in [MixerKind::Mono, MixerKind::NonMono, MixerKind::Vdn] {
            let m = mixer(kind, 3);
            let s = [0.3, -0.2, 0.9, 0.1, -0.7];
            let q = [0.4, -1.2, 0.8];
            let (_, cache) = m
                .forward(&Matrix::row_vector(&s), &Matrix::row_vector(&q))
                .unwrap();
            let (_, dq) = m.backward(&cache, &[1.0], false).unwrap();
            let err = grad_check(&q, dq.row(0), |qq| m.mix_one(&s, qq).unwrap(), 1e-5);
            assert!(err < 1e-6, "{kind}: {err}");
        }
    }

    #[test]
    fn hypernet_gradient_matches_finite_differences() {
        for kind in [MixerKind::Mono, MixerKind::NonMono] {
            let m = mixer(kind, 4);
            let states = Matrix::from_rows(&[[0.3, -0.2, 0.9, 0.1, -0.7], [0.0, 0.5, -0.5, 0.2, 0.2]]);
            let q = Matrix::from_rows(&[[0.4, -1.2, 0.8], [1.0, 0.1, -0.3]]);
            let (_, cache) = m.forward(&states, &q).unwrap();
            let (g, _) = m.backward(&cache, &[1.0, -0.5], true).unwrap();
            let analytic = g.unwrap();
            let base = m.hypernet().unwrap().params().to_vec();
            let err = grad_check(
                &base,
                &analytic,
                |p| {
                    let mut mm = m.clone();
                    mm.hypernet_mut().unwrap().set_params(p).unwrap();
                    let (out, _) = mm.forward(&states, &q).unwrap();
                    out[0] - 0.5 * out[1]
                },
                1e-5,
            );
            assert!(err < 1e-4, "{kind}: {err}");
        }
    }

    #[test]
    fn mono_sensitivities_are_non_negative() {
        let mut rng = stream(77, Stream::Batch);
        for trial in 0..20 {
            let m = mixer(MixerKind::Mono, 100 + trial);
            for _ in 0..10 {
                let s: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
                for i in 0..3 {
                    let h = 1e-5;
                    let mut up = q.clone();
                    up[i] += h;
                    let mut down = q.clone();
                    down[i] -= h;
                    let d = (m.mix_one(&s, &up).unwrap() - m.mix_one(&s, &down).unwrap()) / (2.0 * h);
                    assert!(d >= -1e-9, "∂q_jt/∂q_{i} = {d}");
                }
            }
        }
    }

    #[test]
    fn nonmono_admits_negative_sensitivity() {
        let mut m = mixer(MixerKind::NonMono, 5);
        let hyper = m.hypernet_mut().unwrap();
        hyper.params_mut().fill(0.0);
        // output bias: W1 = +1 everywhere, b1 = 0, W2 = -1, b2 = 0
        let (n, h) = (3, 4);
        let (_, bias) = hyper.layer_slices_mut(1);
        bias[..n * h].fill(1.0);
        bias[n * h + h..n * h + 2 * h].fill(-1.0);
        let s = [0.1; 5];
        let d = (m.mix_one(&s, &[0.2 + 1e-5, 0.3, -0.1]).unwrap() - m.mix_one(&s, &[0.2 - 1e-5, 0.3, -0.1]).unwrap())
            / 2e-5;
        assert!(d < 0.0, "{d}");
    }
}
