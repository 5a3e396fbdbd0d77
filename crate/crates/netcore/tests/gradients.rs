use netcore::{grad_check, grad_check_input, Activation, LayerSpec, Matrix, NetSpec, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random_input(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
}

fn check_kind(name: &str, make: impl Fn(u64) -> NetSpec, rows: usize) {
    for seed in 0..20 {
        let spec = make(seed);
        let width = spec.input_width();
        let mut net = Network::new(spec).unwrap();
        // Give layer-norm affine parameters non-trivial values.
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1000);
        for p in net.params_mut() {
            if p.name.ends_with("gamma") || p.name.ends_with("beta") || p.name.ends_with("bias") {
                for v in &mut p.values {
                    *v += rng.random_range(-0.3..0.3);
                }
            }
        }
        let x = random_input(rows, width, seed);
        let err = grad_check(&mut net, &x, EPS).unwrap();
        assert!(err < TOL, "{name} seed {seed}: param error {err:e}");
        let err = grad_check_input(&mut net, &x, EPS).unwrap();
        assert!(err < TOL, "{name} seed {seed}: input error {err:e}");
    }
}

#[test]
fn dense_layers() {
    for act in [Activation::Identity, Activation::Relu, Activation::Tanh, Activation::Gelu] {
        check_kind(
            &format!("dense {act:?}"),
            |s| {
                NetSpec::new(
                    vec![LayerSpec::Dense {
                        input: 4,
                        output: 3,
                        activation: act,
                    }],
                    s,
                )
            },
            5,
        );
    }
}

#[test]
fn mlp_4_8_4() {
    check_kind(
        "mlp",
        |s| NetSpec::mlp(4, &[8], 4, Activation::Relu, Activation::Identity, s),
        6,
    );
}

#[test]
fn layer_norm() {
    check_kind("layer_norm", |s| NetSpec::new(vec![LayerSpec::LayerNorm { width: 6 }], s), 4);
}

#[test]
fn softmax() {
    check_kind(
        "softmax",
        |s| {
            NetSpec::new(
                vec![
                    LayerSpec::Dense {
                        input: 3,
                        output: 5,
                        activation: Activation::Identity,
                    },
                    LayerSpec::Softmax { width: 5 },
                ],
                s,
            )
        },
        4,
    );
}

#[test]
fn positional_encoding() {
    check_kind(
        "posenc",
        |s| {
            NetSpec::new(
                vec![
                    LayerSpec::Dense {
                        input: 3,
                        output: 6,
                        activation: Activation::Tanh,
                    },
                    LayerSpec::PositionalEncoding { width: 6 },
                ],
                s,
            )
        },
        5,
    );
}

#[test]
fn self_attention() {
    check_kind(
        "attention",
        |s| NetSpec::new(vec![LayerSpec::SelfAttention { width: 8, heads: 2 }], s),
        5,
    );
}

#[test]
fn encoder_block() {
    check_kind(
        "encoder",
        |s| {
            NetSpec::new(
                vec![LayerSpec::EncoderBlock {
                    width: 8,
                    heads: 2,
                    ff_width: 12,
                }],
                s,
            )
        },
        5,
    );
}
