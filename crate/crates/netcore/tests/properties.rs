use netcore::layers::{softmax_rows, LayerNorm};
use netcore::{Activation, LayerSpec, Matrix, NetSpec, Network};
use proptest::prelude::*;

fn rows_strategy(cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-20.0f64..20.0, cols), 1..6)
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(rows in rows_strategy(7)) {
        let mut m = Matrix::from_rows(&rows);
        softmax_rows(&mut m);
        for r in m.iter_rows() {
            let s: f64 = r.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(r.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn layer_norm_standardizes_rows(rows in prop::collection::vec(
        prop::collection::vec(-5.0f64..5.0, 16), 1..6)) {
        // Skip near-constant rows, whose variance is dominated by the epsilon.
        let spread = rows.iter().all(|r| {
            let m = r.iter().sum::<f64>() / r.len() as f64;
            r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len() as f64 > 0.1
        });
        prop_assume!(spread);
        let (y, _) = LayerNorm::normalize(&Matrix::from_rows(&rows));
        for r in y.iter_rows() {
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn forward_is_bit_deterministic(seed in 0u64..1000, rows in rows_strategy(4)) {
        let spec = NetSpec::new(vec![
            LayerSpec::Dense { input: 4, output: 8, activation: Activation::Relu },
            LayerSpec::PositionalEncoding { width: 8 },
            LayerSpec::EncoderBlock { width: 8, heads: 2, ff_width: 8 },
            LayerSpec::Dense { input: 8, output: 2, activation: Activation::Tanh },
        ], seed);
        let net = Network::new(spec).unwrap();
        let x = Matrix::from_rows(&rows);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        prop_assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.shape(), (rows.len(), 2));
    }
}
