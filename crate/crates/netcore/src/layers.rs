//! Layer implementations. Every layer exposes a pure `forward` that returns
//! its output together with the values `backward` needs, so a network can be
//! evaluated through `&self` and only training passes keep a tape.

use rand::Rng;

use crate::error::{NetError, Result};
use crate::matrix::{dot, Matrix};
use crate::param::Param;
use crate::spec::{Activation, LayerSpec};

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn check_width(layer: &str, expected: usize, x: &Matrix) -> Result<()> {
    if x.cols() != expected {
        return Err(NetError::ShapeMismatch {
            layer: layer.to_string(),
            expected,
            actual: x.cols(),
        });
    }
    Ok(())
}

/// Numerically stable softmax of each row, in place.
pub fn softmax_rows(m: &mut Matrix) {
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// `dx = y * (dy - <dy, y>)` row by row.
fn softmax_rows_backward(y: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = Matrix::zeros(y.rows(), y.cols());
    for r in 0..y.rows() {
        let yr = y.row(r);
        let dyr = dy.row(r);
        let inner = dot(yr, dyr);
        for ((d, &yv), &g) in dx.row_mut(r).iter_mut().zip(yr).zip(dyr) {
            *d = yv * (g - inner);
        }
    }
    dx
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Dense {
    name: String,
    input: usize,
    output: usize,
    activation: Activation,
    /// Row-major `[input, output]`.
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Matrix,
    /// Pre-activation values, kept only for GELU.
    pre: Option<Matrix>,
    output: Matrix,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = (1.0 / input as f64).sqrt();
        Self {
            name: name.to_string(),
            input,
            output,
            activation,
            weight: Param::uniform(format!("{name}.weight"), vec![input, output], bound, rng),
            bias: Param::zeros(format!("{name}.bias"), vec![output]),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        check_width(&self.name, self.input, x)?;
        let n = self.output;
        let w = &self.weight.values;
        let mut y = Matrix::zeros(x.rows(), n);
        let mut pre = (self.activation == Activation::Gelu).then(|| Matrix::zeros(x.rows(), n));
        for i in 0..x.rows() {
            let yrow = y.row_mut(i);
            yrow.copy_from_slice(&self.bias.values);
            for (k, &a) in x.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in yrow.iter_mut().zip(&w[k * n..(k + 1) * n]) {
                    *o += a * b;
                }
            }
            match self.activation {
                Activation::Identity => {}
                Activation::Relu => yrow.iter_mut().for_each(|v| *v = v.max(0.0)),
                Activation::Tanh => yrow.iter_mut().for_each(|v| *v = v.tanh()),
                Activation::Gelu => {
                    if let Some(p) = pre.as_mut() {
                        p.row_mut(i).copy_from_slice(yrow);
                    }
                    yrow.iter_mut().for_each(|v| *v = gelu(*v));
                }
            }
        }
        let cache = DenseCache {
            input: x.clone(),
            pre,
            output: y.clone(),
        };
        Ok((y, cache))
    }

    pub fn backward(&mut self, cache: &DenseCache, dy: &Matrix) -> Matrix {
        let mut dz = dy.clone();
        match self.activation {
            Activation::Identity => {}
            Activation::Relu => {
                for (g, &y) in dz.data_mut().iter_mut().zip(cache.output.data()) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &y) in dz.data_mut().iter_mut().zip(cache.output.data()) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Gelu => {
                let pre = cache.pre.as_ref().expect("GELU cache keeps pre-activations");
                for (g, &z) in dz.data_mut().iter_mut().zip(pre.data()) {
                    *g *= gelu_derivative(z);
                }
            }
        }
        cache.input.matmul_at_into(&dz, &mut self.weight.grad);
        for row in dz.iter_rows() {
            for (b, &g) in self.bias.grad.iter_mut().zip(row) {
                *b += g;
            }
        }
        let n = self.output;
        let w = &self.weight.values;
        let mut dx = Matrix::zeros(dz.rows(), self.input);
        for i in 0..dz.rows() {
            let g = dz.row(i);
            for (k, d) in dx.row_mut(i).iter_mut().enumerate() {
                *d = dot(g, &w[k * n..(k + 1) * n]);
            }
        }
        dx
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct LayerNorm {
    name: String,
    width: usize,
    pub gamma: Param,
    pub beta: Param,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    normalized: Matrix,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(name: &str, width: usize) -> Self {
        Self {
            name: name.to_string(),
            width,
            gamma: Param::filled(format!("{name}.gamma"), vec![width], 1.0),
            beta: Param::zeros(format!("{name}.beta"), vec![width]),
        }
    }

    /// Per-row standardization without the affine part.
    pub fn normalize(x: &Matrix) -> (Matrix, Vec<f64>) {
        let w = x.cols() as f64;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        let mut inv_std = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / w;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, &v) in out.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        (out, inv_std)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LayerNormCache)> {
        check_width(&self.name, self.width, x)?;
        let (normalized, inv_std) = Self::normalize(x);
        let mut y = normalized.clone();
        for r in 0..y.rows() {
            for ((v, &g), &b) in y
                .row_mut(r)
                .iter_mut()
                .zip(&self.gamma.values)
                .zip(&self.beta.values)
            {
                *v = *v * g + b;
            }
        }
        Ok((y, LayerNormCache { normalized, inv_std }))
    }

    pub fn backward(&mut self, cache: &LayerNormCache, dy: &Matrix) -> Matrix {
        let w = self.width as f64;
        let mut dx = Matrix::zeros(dy.rows(), self.width);
        let mut dxhat = vec![0.0; self.width];
        for r in 0..dy.rows() {
            let g = dy.row(r);
            let xh = cache.normalized.row(r);
            for j in 0..self.width {
                self.gamma.grad[j] += g[j] * xh[j];
                self.beta.grad[j] += g[j];
                dxhat[j] = g[j] * self.gamma.values[j];
            }
            let sum_d: f64 = dxhat.iter().sum();
            let sum_dx: f64 = dot(&dxhat, xh);
            let inv = cache.inv_std[r];
            for (j, d) in dx.row_mut(r).iter_mut().enumerate() {
                *d = inv / w * (w * dxhat[j] - sum_d - xh[j] * sum_dx);
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SoftmaxLayer {
    name: String,
    width: usize,
}

impl SoftmaxLayer {
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        check_width(&self.name, self.width, x)?;
        let mut y = x.clone();
        softmax_rows(&mut y);
        Ok((y.clone(), y))
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PositionalEncoding {
    name: String,
    width: usize,
}

impl PositionalEncoding {
    /// Sinusoidal encoding value for row `pos`, feature `i`.
    pub fn value(pos: usize, i: usize, width: usize) -> f64 {
        let pair = (i / 2) as f64;
        let freq = 1.0 / 10000f64.powf(2.0 * pair / width as f64);
        let angle = pos as f64 * freq;
        if i % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        check_width(&self.name, self.width, x)?;
        let mut y = x.clone();
        for r in 0..y.rows() {
            for (i, v) in y.row_mut(r).iter_mut().enumerate() {
                *v += Self::value(r, i, self.width);
            }
        }
        Ok(y)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SelfAttention {
    name: String,
    width: usize,
    heads: usize,
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub out: Dense,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    query: DenseCache,
    key: DenseCache,
    value: DenseCache,
    out: DenseCache,
    weights: Vec<Matrix>,
}

impl SelfAttention {
    pub fn new<R: Rng + ?Sized>(name: &str, width: usize, heads: usize, rng: &mut R) -> Self {
        let mk = |suffix: &str, rng: &mut R| {
            Dense::new(&format!("{name}.{suffix}"), width, width, Activation::Identity, rng)
        };
        let query = mk("query", rng);
        let key = mk("key", rng);
        let value = mk("value", rng);
        let out = mk("out", rng);
        Self {
            name: name.to_string(),
            width,
            heads,
            query,
            key,
            value,
            out,
        }
    }

    fn head_width(&self) -> usize {
        self.width / self.heads
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, AttentionCache)> {
        check_width(&self.name, self.width, x)?;
        let (q, qc) = self.query.forward(x)?;
        let (k, kc) = self.key.forward(x)?;
        let (v, vc) = self.value.forward(x)?;
        let dh = self.head_width();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut concat = Matrix::zeros(x.rows(), self.width);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = q.columns(h * dh, dh);
            let kh = k.columns(h * dh, dh);
            let vh = v.columns(h * dh, dh);
            let mut scores = qh.matmul_bt(&kh);
            scores.scale(scale);
            softmax_rows(&mut scores);
            concat.set_columns(h * dh, &scores.matmul(&vh));
            weights.push(scores);
        }
        let (y, oc) = self.out.forward(&concat)?;
        Ok((
            y,
            AttentionCache {
                query: qc,
                key: kc,
                value: vc,
                out: oc,
                weights,
            },
        ))
    }

    pub fn backward(&mut self, cache: &AttentionCache, dy: &Matrix) -> Matrix {
        let d_concat = self.out.backward(&cache.out, dy);
        let dh = self.head_width();
        let scale = 1.0 / (dh as f64).sqrt();
        let rows = dy.rows();
        let (q, k, v) = (
            cache.query.output(),
            cache.key.output(),
            cache.value.output(),
        );
        let mut dq = Matrix::zeros(rows, self.width);
        let mut dk = Matrix::zeros(rows, self.width);
        let mut dv = Matrix::zeros(rows, self.width);
        for h in 0..self.heads {
            let a = &cache.weights[h];
            let qh = q.columns(h * dh, dh);
            let kh = k.columns(h * dh, dh);
            let vh = v.columns(h * dh, dh);
            let doh = d_concat.columns(h * dh, dh);
            let da = doh.matmul_bt(&vh);
            dv.set_columns(h * dh, &a.matmul_at(&doh));
            let mut ds = softmax_rows_backward(a, &da);
            ds.scale(scale);
            dq.set_columns(h * dh, &ds.matmul(&kh));
            dk.set_columns(h * dh, &ds.matmul_at(&qh));
        }
        let mut dx = self.query.backward(&cache.query, &dq);
        dx.add_assign(&self.key.backward(&cache.key, &dk));
        dx.add_assign(&self.value.backward(&cache.value, &dv));
        dx
    }

    fn params(&self) -> Vec<&Param> {
        [&self.query, &self.key, &self.value, &self.out]
            .into_iter()
            .flat_map(Dense::params)
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.query.params_mut();
        v.extend(self.key.params_mut());
        v.extend(self.value.params_mut());
        v.extend(self.out.params_mut());
        v
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    name: String,
    width: usize,
    pub attention: SelfAttention,
    pub norm1: LayerNorm,
    pub ff_in: Dense,
    pub ff_out: Dense,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    attention: AttentionCache,
    norm1: LayerNormCache,
    ff_in: DenseCache,
    ff_out: DenseCache,
    norm2: LayerNormCache,
}

impl EncoderBlock {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        width: usize,
        heads: usize,
        ff_width: usize,
        rng: &mut R,
    ) -> Self {
        let attention = SelfAttention::new(&format!("{name}.attn"), width, heads, rng);
        let ff_in = Dense::new(&format!("{name}.ff_in"), width, ff_width, Activation::Gelu, rng);
        let ff_out = Dense::new(
            &format!("{name}.ff_out"),
            ff_width,
            width,
            Activation::Identity,
            rng,
        );
        Self {
            name: name.to_string(),
            width,
            attention,
            norm1: LayerNorm::new(&format!("{name}.norm1"), width),
            ff_in,
            ff_out,
            norm2: LayerNorm::new(&format!("{name}.norm2"), width),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, EncoderCache)> {
        check_width(&self.name, self.width, x)?;
        let (a, attention) = self.attention.forward(x)?;
        let (h, norm1) = self.norm1.forward(&x.add(&a))?;
        let (f, ff_in) = self.ff_in.forward(&h)?;
        let (f, ff_out) = self.ff_out.forward(&f)?;
        let (y, norm2) = self.norm2.forward(&h.add(&f))?;
        Ok((
            y,
            EncoderCache {
                attention,
                norm1,
                ff_in,
                ff_out,
                norm2,
            },
        ))
    }

    pub fn backward(&mut self, cache: &EncoderCache, dy: &Matrix) -> Matrix {
        let d_sum2 = self.norm2.backward(&cache.norm2, dy);
        let df = self.ff_out.backward(&cache.ff_out, &d_sum2);
        let mut dh = self.ff_in.backward(&cache.ff_in, &df);
        dh.add_assign(&d_sum2);
        let d_sum1 = self.norm1.backward(&cache.norm1, &dh);
        let mut dx = self.attention.backward(&cache.attention, &d_sum1);
        dx.add_assign(&d_sum1);
        dx
    }

    fn params(&self) -> Vec<&Param> {
        let mut v = self.attention.params();
        v.extend([&self.norm1.gamma, &self.norm1.beta]);
        v.extend(self.ff_in.params());
        v.extend(self.ff_out.params());
        v.extend([&self.norm2.gamma, &self.norm2.beta]);
        v
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut v = self.attention.params_mut();
        v.extend([&mut self.norm1.gamma, &mut self.norm1.beta]);
        v.extend(self.ff_in.params_mut());
        v.extend(self.ff_out.params_mut());
        v.extend([&mut self.norm2.gamma, &mut self.norm2.beta]);
        v
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    LayerNorm(LayerNorm),
    Softmax(SoftmaxLayer),
    PositionalEncoding(PositionalEncoding),
    SelfAttention(SelfAttention),
    EncoderBlock(EncoderBlock),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Dense(DenseCache),
    LayerNorm(LayerNormCache),
    Softmax(Matrix),
    PositionalEncoding,
    SelfAttention(AttentionCache),
    EncoderBlock(EncoderCache),
}

impl Layer {
    pub fn from_spec<R: Rng + ?Sized>(spec: &LayerSpec, index: usize, rng: &mut R) -> Self {
        match *spec {
            LayerSpec::Dense {
                input,
                output,
                activation,
            } => Layer::Dense(Dense::new(
                &format!("l{index}.dense"),
                input,
                output,
                activation,
                rng,
            )),
            LayerSpec::LayerNorm { width } => {
                Layer::LayerNorm(LayerNorm::new(&format!("l{index}.norm"), width))
            }
            LayerSpec::Softmax { width } => Layer::Softmax(SoftmaxLayer {
                name: format!("l{index}.softmax"),
                width,
            }),
            LayerSpec::PositionalEncoding { width } => {
                Layer::PositionalEncoding(PositionalEncoding {
                    name: format!("l{index}.posenc"),
                    width,
                })
            }
            LayerSpec::SelfAttention { width, heads } => Layer::SelfAttention(
                SelfAttention::new(&format!("l{index}.attn"), width, heads, rng),
            ),
            LayerSpec::EncoderBlock {
                width,
                heads,
                ff_width,
            } => Layer::EncoderBlock(EncoderBlock::new(
                &format!("l{index}.encoder"),
                width,
                heads,
                ff_width,
                rng,
            )),
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LayerCache)> {
        Ok(match self {
            Layer::Dense(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Dense(c))
            }
            Layer::LayerNorm(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::LayerNorm(c))
            }
            Layer::Softmax(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::Softmax(c))
            }
            Layer::PositionalEncoding(l) => (l.forward(x)?, LayerCache::PositionalEncoding),
            Layer::SelfAttention(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::SelfAttention(c))
            }
            Layer::EncoderBlock(l) => {
                let (y, c) = l.forward(x)?;
                (y, LayerCache::EncoderBlock(c))
            }
        })
    }

    pub fn backward(&mut self, cache: &LayerCache, dy: &Matrix) -> Matrix {
        match (self, cache) {
            (Layer::Dense(l), LayerCache::Dense(c)) => l.backward(c, dy),
            (Layer::LayerNorm(l), LayerCache::LayerNorm(c)) => l.backward(c, dy),
            (Layer::Softmax(_), LayerCache::Softmax(y)) => softmax_rows_backward(y, dy),
            (Layer::PositionalEncoding(_), LayerCache::PositionalEncoding) => dy.clone(),
            (Layer::SelfAttention(l), LayerCache::SelfAttention(c)) => l.backward(c, dy),
            (Layer::EncoderBlock(l), LayerCache::EncoderBlock(c)) => l.backward(c, dy),
            _ => unreachable!("layer/cache kinds are paired by Network"),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Dense(l) => l.params(),
            Layer::LayerNorm(l) => vec![&l.gamma, &l.beta],
            Layer::Softmax(_) | Layer::PositionalEncoding(_) => Vec::new(),
            Layer::SelfAttention(l) => l.params(),
            Layer::EncoderBlock(l) => l.params(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Dense(l) => l.params_mut(),
            Layer::LayerNorm(l) => vec![&mut l.gamma, &mut l.beta],
            Layer::Softmax(_) | Layer::PositionalEncoding(_) => Vec::new(),
            Layer::SelfAttention(l) => l.params_mut(),
            Layer::EncoderBlock(l) => l.params_mut(),
        }
    }
}
