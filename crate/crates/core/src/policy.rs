//! Attacker and defender networks.
//!
//! Fully connected, Leaky ReLU hidden layers, outputs squashed into their
//! bounds with a scaled tanh and then hard-clamped. Parameters are a flat
//! vector: for each layer the `out x in` weights row by row, then `out`
//! biases.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Scalar, DEFAULT_LEAKY_SLOPE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("network needs at least an input and an output layer")]
    TooFewLayers,
    #[error("layer sizes must be positive")]
    EmptyLayer,
    #[error("expected {expected} output bounds, got {got}")]
    BoundsCount { expected: usize, got: usize },
    #[error("output bound {lo} > {hi}")]
    BadBound { lo: f64, hi: f64 },
    #[error("expected {expected} parameters, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("expected input of width {expected}, got {got}")]
    InputWidth { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Output bounds, one `(lo, hi)` per output.
    pub bounds: Vec<(f64, f64)>,
    pub negative_slope: f64,
    pub params: Vec<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

fn check_shape(sizes: &[usize], bounds: &[(f64, f64)]) -> Result<(), PolicyError> {
    if sizes.len() < 2 {
        return Err(PolicyError::TooFewLayers);
    }
    if sizes.contains(&0) {
        return Err(PolicyError::EmptyLayer);
    }
    let outputs = *sizes.last().unwrap();
    if bounds.len() != outputs {
        return Err(PolicyError::BoundsCount {
            expected: outputs,
            got: bounds.len(),
        });
    }
    for &(lo, hi) in bounds {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(PolicyError::BadBound { lo, hi });
        }
    }
    Ok(())
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(sizes: Vec<usize>, bounds: Vec<(f64, f64)>, negative_slope: f64) -> Result<Self, PolicyError> {
        check_shape(&sizes, &bounds)?;
        let n = param_count(&sizes);
        Ok(Self {
            sizes,
            bounds,
            negative_slope,
            params: vec![0.0; n],
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        rng: &mut R,
        sizes: Vec<usize>,
        bounds: Vec<(f64, f64)>,
        negative_slope: f64,
    ) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(sizes, bounds, negative_slope)?;
        let mut k = 0;
        for w in net.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                net.params[k] = rng.random_range(-limit..limit);
                k += 1;
            }
            k += fan_out;
        }
        Ok(net)
    }

    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self, PolicyError> {
        self.check_params(params.len())?;
        self.params = params;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        param_count(&self.sizes)
    }

    /// Xavier bound of each layer.
    pub fn layer_limits(&self) -> Vec<f64> {
        self.sizes
            .windows(2)
            .map(|w| (6.0 / (w[0] + w[1]) as f64).sqrt())
            .collect()
    }

    fn check_params(&self, got: usize) -> Result<(), PolicyError> {
        let expected = self.param_count();
        if got != expected {
            return Err(PolicyError::ParamCount { expected, got });
        }
        Ok(())
    }

    /// Evaluates the network with an explicit parameter vector.
    pub fn forward<S: Scalar>(&self, params: &[S], input: &[S]) -> Result<Vec<S>, PolicyError> {
        self.check_params(params.len())?;
        if input.len() != self.input_dim() {
            return Err(PolicyError::InputWidth {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let layers = self.sizes.len() - 1;
        let mut x = input.to_vec();
        let mut k = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &params[k..k + n_in * n_out];
            let biases = &params[k + n_in * n_out..k + (n_in + 1) * n_out];
            k += (n_in + 1) * n_out;
            let mut y = Vec::with_capacity(n_out);
            for j in 0..n_out {
                let row = &weights[j * n_in..(j + 1) * n_in];
                let mut acc = row[0] * x[0];
                for i in 1..n_in {
                    acc = acc + row[i] * x[i];
                }
                acc = acc + biases[j];
                y.push(if layer + 1 < layers {
                    acc.leaky_relu(self.negative_slope)
                } else {
                    acc
                });
            }
            x = y;
        }
        Ok(x
            .into_iter()
            .zip(&self.bounds)
            .map(|(y, &(lo, hi))| squash(y, lo, hi))
            .collect())
    }

    /// `D(theta, o_a)`.
    pub fn defender_forward<S: Scalar>(&self, params: &[S], obs: &[S]) -> Result<Vec<S>, PolicyError> {
        self.forward(params, obs)
    }

    /// `A(theta, o_e, z)`: noise is appended to the observation.
    pub fn attacker_forward<S: Scalar>(
        &self,
        params: &[S],
        obs: &[S],
        noise: &[S],
    ) -> Result<Vec<S>, PolicyError> {
        let mut input = Vec::with_capacity(obs.len() + noise.len());
        input.extend_from_slice(obs);
        input.extend_from_slice(noise);
        self.forward(params, &input)
    }
}

/// `lo + (hi - lo) * (tanh(y) + 1) / 2`, then clamped to `[lo, hi]`.
pub fn squash<S: Scalar>(y: S, lo: f64, hi: f64) -> S {
    let half = (hi - lo) * 0.5;
    ((y.tanh() + 1.0) * half + lo).clamp_to(lo, hi)
}

/// Hidden layer widths and activation slope of a network role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    #[serde(default = "default_slope")]
    pub negative_slope: f64,
}

fn default_slope() -> f64 {
    DEFAULT_LEAKY_SLOPE
}

impl Architecture {
    pub fn new(hidden: Vec<usize>) -> Self {
        Self {
            hidden,
            negative_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn sizes(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut sizes = vec![inputs];
        sizes.extend(&self.hidden);
        sizes.push(outputs);
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference, Tape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_params_give_midpoints() {
        let net = Mlp::zeros(vec![3, 4, 2], vec![(-30.0, 30.0), (0.0, 1.0)], 0.01).unwrap();
        let out = net.forward(&net.params, &[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(out, vec![0.0, 0.5]);
    }

    #[test]
    fn param_layout() {
        assert_eq!(param_count(&[8, 10, 2]), 9 * 10 + 11 * 2);
        assert_eq!(param_count(&[5, 10, 10, 1]), 60 + 110 + 11);
        // single linear layer: y = 2*x0 - x1 + 0.25
        let net = Mlp::zeros(vec![2, 1], vec![(-1e9, 1e9)], 0.01)
            .unwrap()
            .with_params(vec![2.0, -1.0, 0.25])
            .unwrap();
        let y: f64 = 2.0 * 0.1 - 0.3 + 0.25;
        let expected = -1e9 + 2e9 * (y.tanh() + 1.0) / 2.0;
        let got = net.forward(&net.params, &[0.1, 0.3]).unwrap()[0];
        assert!((got - expected).abs() < 1e-3);
    }

    #[test]
    fn errors() {
        assert_eq!(Mlp::zeros(vec![3], vec![], 0.01), Err(PolicyError::TooFewLayers));
        assert!(matches!(
            Mlp::zeros(vec![3, 2], vec![(0.0, 1.0)], 0.01),
            Err(PolicyError::BoundsCount { .. })
        ));
        assert!(matches!(
            Mlp::zeros(vec![3, 1], vec![(1.0, 0.0)], 0.01),
            Err(PolicyError::BadBound { .. })
        ));
        let net = Mlp::zeros(vec![2, 1], vec![(0.0, 1.0)], 0.01).unwrap();
        assert!(matches!(
            net.forward(&net.params, &[1.0]),
            Err(PolicyError::InputWidth { .. })
        ));
        assert!(matches!(
            net.forward(&[0.0], &[1.0, 2.0]),
            Err(PolicyError::ParamCount { .. })
        ));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let make = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Mlp::init(&mut rng, vec![5, 10, 10, 1], vec![(-30.0, 30.0)], 0.01).unwrap()
        };
        let a = make(7);
        assert_eq!(a, make(7));
        assert_ne!(a.params, make(8).params);
        let limits = a.layer_limits();
        let mut k = 0;
        for (l, w) in a.sizes.windows(2).enumerate() {
            for _ in 0..w[0] * w[1] {
                assert!(a.params[k].abs() < limits[l]);
                k += 1;
            }
            for _ in 0..w[1] {
                assert_eq!(a.params[k], 0.0);
                k += 1;
            }
        }
    }

    #[test]
    fn saturated_output_hits_bound_exactly() {
        let net = Mlp::zeros(vec![1, 1], vec![(-5.0, 5.0)], 0.01)
            .unwrap()
            .with_params(vec![0.0, 100.0])
            .unwrap();
        assert_eq!(net.forward(&net.params, &[0.0]).unwrap(), vec![5.0]);
    }

    #[test]
    fn taped_forward_matches_plain_and_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::init(&mut rng, vec![3, 5, 2], vec![(-2.0, 2.0), (0.0, 1.0)], 0.01).unwrap();
        let input = [0.3, -0.7, 1.1];
        let plain = net.forward(&net.params, &input).unwrap();
        let tape = Tape::new();
        let p = tape.lift_all(&net.params).unwrap();
        let x = tape.lift_all(&input).unwrap();
        let out = net.forward(&p, &x).unwrap();
        assert_eq!(out[0].value().to_bits(), plain[0].to_bits());
        let g = tape.backward(out[0]).wrt_all(&p);
        let fd = finite_difference(|q| net.forward(q, &input).unwrap()[0], &net.params, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }
}
