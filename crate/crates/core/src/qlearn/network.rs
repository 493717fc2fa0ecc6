//! Two-layer fully connected Q approximator with a ReLU hidden layer and a
//! linear head: `Q = W2ᵀ · relu(W1ᵀ · s + b1) + b2`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::Uniform;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    /// n × H
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// H × n
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// Gradient of a scalar loss, shaped like [`QNetwork`].
pub type Gradient = QNetwork;

/// Intermediate values of a batched forward pass, kept for backprop.
pub struct ForwardCache {
    pub pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub out: Array2<f64>,
}

/// Glorot-uniform bound for a layer.
pub fn init_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

impl QNetwork {
    /// Weights uniform in ±sqrt(6/(fan_in + fan_out)), biases zero.
    pub fn init<R: Rng + ?Sized>(n: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if n == 0 || hidden == 0 {
            return Err(Error::Invalid(format!(
                "network dimensions must be positive (n = {n}, hidden = {hidden})"
            )));
        }
        let bound = init_bound(n, hidden);
        let dist = Uniform::new_inclusive(-bound, bound);
        let w1 = Array2::from_shape_simple_fn((n, hidden), || rng.sample(dist));
        let w2 = Array2::from_shape_simple_fn((hidden, n), || rng.sample(dist));
        Ok(Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(n),
        })
    }

    pub fn zeros(n: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((n, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, n)),
            b2: Array1::zeros(n),
        }
    }

    pub fn n(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn check_shapes(&self) -> Result<()> {
        let (n, h) = self.w1.dim();
        if self.b1.len() != h || self.w2.dim() != (h, n) || self.b2.len() != n {
            return Err(Error::Invalid(format!(
                "inconsistent network shapes: w1 {:?}, b1 {}, w2 {:?}, b2 {}",
                self.w1.dim(),
                self.b1.len(),
                self.w2.dim(),
                self.b2.len()
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(f64::is_finite)
    }

    fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.w1
            .iter()
            .chain(self.b1.iter())
            .chain(self.w2.iter())
            .chain(self.b2.iter())
            .copied()
    }

    /// Q values for one state.
    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: s.len(),
            });
        }
        let x = ArrayView2::from_shape((1, s.len()), s).expect("contiguous slice");
        Ok(self.forward_batch(x).out.row(0).to_vec())
    }

    /// Batched forward pass; rows of `x` are states.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> ForwardCache {
        let pre = x.dot(&self.w1) + &self.b1;
        let hidden = pre.mapv(|v| v.max(0.0));
        let out = hidden.dot(&self.w2) + &self.b2;
        ForwardCache { pre, hidden, out }
    }

    /// Mean squared error over every (state, action) entry and its exact gradient.
    pub fn loss_and_gradient(
        &self,
        x: ArrayView2<f64>,
        y: ArrayView2<f64>,
    ) -> Result<(f64, Gradient)> {
        if x.nrows() == 0 {
            return Err(Error::Invalid("empty batch".into()));
        }
        if x.ncols() != self.n() || y.dim() != (x.nrows(), self.n()) {
            return Err(Error::Dimension {
                expected: self.n(),
                got: if x.ncols() != self.n() {
                    x.ncols()
                } else {
                    y.ncols()
                },
            });
        }
        let cache = self.forward_batch(x);
        let count = (y.nrows() * y.ncols()) as f64;
        let diff = &cache.out - &y;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / count;

        let d_out = diff * (2.0 / count);
        let w2 = cache.hidden.t().dot(&d_out);
        let b2 = d_out.sum_axis(Axis(0));
        let mut d_pre = d_out.dot(&self.w2.t());
        d_pre.zip_mut_with(&cache.pre, |g, &p| {
            if p <= 0.0 {
                *g = 0.0;
            }
        });
        let w1 = x.t().dot(&d_pre);
        let b1 = d_pre.sum_axis(Axis(0));
        Ok((loss, QNetwork { w1, b1, w2, b2 }))
    }

    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> f64 {
        let out = self.forward_batch(x).out;
        let count = (y.nrows() * y.ncols()) as f64;
        (&out - &y).iter().map(|d| d * d).sum::<f64>() / count
    }

    /// `self += scale · other`, elementwise over all parameters.
    pub fn add_scaled(&mut self, other: &QNetwork, scale: f64) {
        self.w1.scaled_add(scale, &other.w1);
        self.b1.scaled_add(scale, &other.b1);
        self.w2.scaled_add(scale, &other.w2);
        self.b2.scaled_add(scale, &other.b2);
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flat parameter access in the order w1, b1, w2, b2 (row-major).
    pub fn param_mut(&mut self, index: usize) -> &mut f64 {
        let sizes = [self.w1.len(), self.b1.len(), self.w2.len()];
        let mut idx = index;
        if idx < sizes[0] {
            return &mut self.w1.as_slice_mut().expect("standard layout")[idx];
        }
        idx -= sizes[0];
        if idx < sizes[1] {
            return &mut self.b1.as_slice_mut().expect("standard layout")[idx];
        }
        idx -= sizes[1];
        if idx < sizes[2] {
            return &mut self.w2.as_slice_mut().expect("standard layout")[idx];
        }
        idx -= sizes[2];
        &mut self.b2.as_slice_mut().expect("standard layout")[idx]
    }

    pub fn param(&self, index: usize) -> f64 {
        self.params().nth(index).expect("parameter index in range")
    }
}
