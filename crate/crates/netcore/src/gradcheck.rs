//! Central finite-difference verification of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NetError, Result};
use crate::matrix::Matrix;
use crate::network::Network;

/// `|analytic - numeric| / max(1, |numeric|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / numeric.abs().max(1.0)
}

/// Central difference `(f(x + eps) - f(x - eps)) / 2 eps`.
pub fn central_difference(f: impl Fn(f64) -> f64, x: f64, eps: f64) -> f64 {
    (f(x + eps) - f(x - eps)) / (2.0 * eps)
}

/// Fixed pseudo-random projection turning the network output into a scalar
/// loss. A plain sum would hide errors in layers whose outputs sum to a
/// constant (softmax, layer norm).
fn loss_weights(rows: usize, cols: usize) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_9ad);
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data)
}

fn projected_loss(net: &Network, input: &Matrix, weights: &Matrix) -> Result<f64> {
    let y = net.forward(input)?;
    Ok(y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum())
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1e-2 {
        Ok(())
    } else {
        Err(NetError::InvalidSpec(format!(
            "finite-difference step {eps} outside (0, 1e-2]"
        )))
    }
}

/// Max relative error between backpropagated and finite-difference
/// gradients over every parameter value. Parameters are restored afterwards
/// and gradients are left holding the analytic values.
pub fn grad_check(net: &mut Network, input: &Matrix, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let weights = loss_weights(input.rows(), net.output_width());
    net.zero_grad();
    net.forward_train(input)?;
    net.backward(&weights)?;

    let mut worst: f64 = 0.0;
    let n_params = net.params().len();
    for pi in 0..n_params {
        let len = net.params()[pi].len();
        for j in 0..len {
            let (orig, analytic) = {
                let p = &net.params()[pi];
                (p.values[j], p.grad[j])
            };
            net.params_mut()[pi].values[j] = orig + eps;
            let plus = projected_loss(net, input, &weights)?;
            net.params_mut()[pi].values[j] = orig - eps;
            let minus = projected_loss(net, input, &weights)?;
            net.params_mut()[pi].values[j] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    Ok(worst)
}

/// Same check applied to the input matrix instead of the parameters.
pub fn grad_check_input(net: &mut Network, input: &Matrix, eps: f64) -> Result<f64> {
    check_eps(eps)?;
    let weights = loss_weights(input.rows(), net.output_width());
    net.forward_train(input)?;
    let dx = net.backward(&weights)?;
    let mut worst: f64 = 0.0;
    let mut probe = input.clone();
    for i in 0..input.data().len() {
        let orig = input.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = projected_loss(net, &probe, &weights)?;
        probe.data_mut()[i] = orig - eps;
        let minus = projected_loss(net, &probe, &weights)?;
        probe.data_mut()[i] = orig;
        worst = worst.max(relative_error(dx.data()[i], (plus - minus) / (2.0 * eps)));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::{LayerSpec, NetSpec};

    #[test]
    fn square_function_at_three() {
        let numeric = central_difference(|x| x * x, 3.0, 1e-4);
        assert!(relative_error(6.0, numeric) < 1e-6);
    }

    #[test]
    fn zero_parameter_net_has_zero_error() {
        let mut net = Network::new(NetSpec::new(vec![LayerSpec::Softmax { width: 4 }], 0)).unwrap();
        let x = Matrix::from_rows(&[[0.1, -0.3, 0.5, 0.0]]);
        assert_eq!(grad_check(&mut net, &x, 1e-4).unwrap(), 0.0);
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let mut net = Network::new(NetSpec::new(vec![LayerSpec::Softmax { width: 2 }], 0)).unwrap();
        let x = Matrix::row_vector(&[0.0, 1.0]);
        assert!(grad_check(&mut net, &x, 0.1).is_err());
        assert!(grad_check(&mut net, &x, 0.0).is_err());
    }
}
