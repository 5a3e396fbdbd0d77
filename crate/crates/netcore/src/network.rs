use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NetError, Result};
use crate::layers::{Layer, LayerCache};
use crate::matrix::Matrix;
use crate::param::Param;
use crate::spec::NetSpec;

/// A sequential stack of layers built from a [`NetSpec`].
///
/// `forward` is pure. `forward_train` additionally records the per-layer
/// values that the next `backward` call consumes.
#[derive(Debug, Clone)]
pub struct Network {
    spec: NetSpec,
    layers: Vec<Layer>,
    tape: Option<Vec<LayerCache>>,
}

impl Network {
    pub fn new(spec: NetSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| Layer::from_spec(l, i, &mut rng))
            .collect();
        Ok(Self {
            spec,
            layers,
            tape: None,
        })
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_width(&self) -> usize {
        self.spec.input_width()
    }

    pub fn output_width(&self) -> usize {
        self.spec.output_width()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.0;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Matrix) -> Result<Matrix> {
        self.tape = None;
        let mut tape = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&h)?;
            tape.push(cache);
            h = y;
        }
        self.tape = Some(tape);
        Ok(h)
    }

    /// Backpropagates `grad_out` (d loss / d output) through the recorded
    /// pass, accumulating parameter gradients. Returns d loss / d input.
    /// The tape is consumed.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let tape = self.tape.take().ok_or(NetError::NoForwardRecord)?;
        if grad_out.cols() != self.output_width() {
            return Err(NetError::ShapeMismatch {
                layer: "output gradient".into(),
                expected: self.output_width(),
                actual: grad_out.cols(),
            });
        }
        let mut g = grad_out.clone();
        for (layer, cache) in self.layers.iter_mut().zip(&tape).rev() {
            g = layer.backward(cache, &g);
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// `self <- tau * source + (1 - tau) * self`. Both networks must share a spec.
    pub fn soft_update_from(&mut self, source: &Network, tau: f64) {
        debug_assert_eq!(self.spec.layers, source.spec.layers);
        for (dst, src) in self.params_mut().into_iter().zip(source.params()) {
            if tau == 1.0 {
                dst.values.copy_from_slice(&src.values);
            } else {
                for (d, &s) in dst.values.iter_mut().zip(&src.values) {
                    *d = tau * s + (1.0 - tau) * *d;
                }
            }
        }
    }

    /// Flattened copy of all parameter values, in `params()` order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.values.iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{Activation, LayerSpec};

    fn single_dense(input: usize, output: usize) -> Network {
        Network::new(NetSpec::new(
            vec![LayerSpec::Dense {
                input,
                output,
                activation: Activation::Identity,
            }],
            7,
        ))
        .unwrap()
    }

    fn set_dense(net: &mut Network, w: &[f64], b: &[f64]) {
        let mut ps = net.params_mut();
        ps[0].values.copy_from_slice(w);
        ps[1].values.copy_from_slice(b);
    }

    #[test]
    fn identity_dense_layer() {
        let mut net = single_dense(2, 2);
        set_dense(&mut net, &[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0]);
        let y = net.forward(&Matrix::row_vector(&[1.0, 2.0])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn diagonal_dense_layer_with_bias() {
        let mut net = single_dense(2, 2);
        set_dense(&mut net, &[2.0, 0.0, 0.0, 3.0], &[1.0, 1.0]);
        let y = net.forward(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let net = Network::new(NetSpec::new(vec![LayerSpec::Softmax { width: 3 }], 0)).unwrap();
        let y = net.forward(&Matrix::row_vector(&[0.0, 0.0, 0.0])).unwrap();
        for &v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let net = single_dense(3, 2);
        let err = net.forward(&Matrix::row_vector(&[1.0, 2.0])).unwrap_err();
        match err {
            NetError::ShapeMismatch { layer, expected, actual } => {
                assert_eq!(layer, "l0.dense");
                assert_eq!((expected, actual), (3, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn scalar_linear_derivative() {
        // f(w) = w * x with x = 3, loss = f.
        let mut net = single_dense(1, 1);
        set_dense(&mut net, &[0.7], &[0.0]);
        net.forward_train(&Matrix::row_vector(&[3.0])).unwrap();
        net.backward(&Matrix::row_vector(&[1.0])).unwrap();
        assert_eq!(net.params()[0].grad, vec![3.0]);
    }

    #[test]
    fn parameter_free_net_has_no_gradients() {
        let mut net = Network::new(NetSpec::new(
            vec![
                LayerSpec::PositionalEncoding { width: 3 },
                LayerSpec::Softmax { width: 3 },
            ],
            0,
        ))
        .unwrap();
        net.forward_train(&Matrix::row_vector(&[0.1, 0.2, 0.3])).unwrap();
        let dx = net.backward(&Matrix::row_vector(&[1.0, 0.0, 0.0])).unwrap();
        assert!(net.params().is_empty());
        assert_eq!(dx.shape(), (1, 3));
    }

    #[test]
    fn untouched_branch_gets_zero_gradient() {
        // ReLU cuts the path: with a negative bias the output does not depend
        // on any weight feeding the dead unit.
        let mut net = Network::new(NetSpec::mlp(
            1,
            &[1],
            1,
            Activation::Relu,
            Activation::Identity,
            3,
        ))
        .unwrap();
        {
            let mut ps = net.params_mut();
            ps[0].values[0] = 1.0;
            ps[1].values[0] = -10.0;
        }
        net.zero_grad();
        net.forward_train(&Matrix::row_vector(&[1.0])).unwrap();
        net.backward(&Matrix::row_vector(&[1.0])).unwrap();
        let ps = net.params();
        assert_eq!(ps[0].grad, vec![0.0]);
        assert_eq!(ps[1].grad, vec![0.0]);
        assert_eq!(ps[2].grad, vec![0.0]);
        assert_eq!(ps[3].grad, vec![1.0]);
    }

    #[test]
    fn backward_without_forward_is_rejected() {
        let mut net = single_dense(2, 2);
        assert!(matches!(
            net.backward(&Matrix::row_vector(&[1.0, 1.0])),
            Err(NetError::NoForwardRecord)
        ));
        net.forward_train(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        net.backward(&Matrix::row_vector(&[1.0, 1.0])).unwrap();
        // tape consumed
        assert!(net.backward(&Matrix::row_vector(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let spec = NetSpec::mlp(4, &[8], 2, Activation::Relu, Activation::Tanh, 11);
        let a = Network::new(spec.clone()).unwrap();
        let b = Network::new(spec).unwrap();
        assert_eq!(a.flat_values(), b.flat_values());
        let ps = a.params();
        let bound = (1.0f64 / 4.0).sqrt();
        assert!(ps[0].values.iter().all(|v| v.abs() <= bound));
        assert!(ps[1].values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn soft_update_boundaries() {
        let spec = NetSpec::mlp(3, &[4], 1, Activation::Relu, Activation::Identity, 1);
        let src = Network::new(spec.clone()).unwrap();
        let mut dst = Network::new(NetSpec { seed: 2, ..spec }).unwrap();
        let before = dst.flat_values();
        dst.soft_update_from(&src, 0.0);
        assert_eq!(dst.flat_values(), before);
        dst.soft_update_from(&src, 1.0);
        assert_eq!(dst.flat_values(), src.flat_values());
    }
}
