use rand::Rng;

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; n],
            grad: vec![0.0; n],
        }
    }

    pub fn filled(name: impl Into<String>, shape: Vec<usize>, value: f64) -> Self {
        let mut p = Self::zeros(name, shape);
        p.values.fill(value);
        p
    }

    /// Uniform in `[-bound, bound]`.
    pub fn uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        shape: Vec<usize>,
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(name, shape);
        for v in &mut p.values {
            *v = rng.random_range(-bound..=bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn is_consistent(&self) -> bool {
        let n: usize = self.shape.iter().product();
        n == self.values.len() && n == self.grad.len()
    }
}
