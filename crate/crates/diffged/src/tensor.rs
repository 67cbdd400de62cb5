//! Minimal dense f64 matrix plumbing for the denoising network. Row-major,
//! axpy-style inner loops so the hot paths autovectorize, and hand-written
//! backward passes for the two-affine MLP building block.

use rand::Rng;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self * w`, allocating the output.
    pub fn matmul(&self, w: &Mat) -> Mat {
        assert_eq!(self.cols, w.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, w.cols);
        matmul_acc(self, w, &mut out);
        out
    }

    pub fn transposed(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Adds `row` to every row of the matrix.
    pub fn add_row_broadcast(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.cols);
        for r in 0..self.rows {
            for (a, &b) in self.row_mut(r).iter_mut().zip(row) {
                *a += b;
            }
        }
    }

    /// Column sums as a vector of length `cols`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, &x) in out.iter_mut().zip(self.row(r)) {
                *o += x;
            }
        }
        out
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        for x in &mut self.data {
            *x = f(*x);
        }
    }
}

/// `out += x * w`.
pub fn matmul_acc(x: &Mat, w: &Mat, out: &mut Mat) {
    assert_eq!(x.cols, w.rows);
    assert_eq!(out.rows, x.rows);
    assert_eq!(out.cols, w.cols);
    let n = w.cols;
    for i in 0..x.rows {
        let xrow = x.row(i);
        let orow = &mut out.data[i * n..(i + 1) * n];
        for (k, &a) in xrow.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let wrow = &w.data[k * n..(k + 1) * n];
            for (o, &b) in orow.iter_mut().zip(wrow) {
                *o += a * b;
            }
        }
    }
}

/// `dw += x^T * dy` (weight gradient of `y = x * w`).
pub fn acc_weight_grad(x: &Mat, dy: &Mat, dw: &mut Mat) {
    assert_eq!(x.rows, dy.rows);
    assert_eq!(dw.rows, x.cols);
    assert_eq!(dw.cols, dy.cols);
    let n = dy.cols;
    for i in 0..x.rows {
        let xrow = x.row(i);
        let dyrow = dy.row(i);
        for (k, &a) in xrow.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let dwrow = &mut dw.data[k * n..(k + 1) * n];
            for (o, &b) in dwrow.iter_mut().zip(dyrow) {
                *o += a * b;
            }
        }
    }
}

/// `dx = dy * w^T` (input gradient of `y = x * w`).
pub fn input_grad(dy: &Mat, w: &Mat) -> Mat {
    let wt = w.transposed();
    dy.matmul(&wt)
}

/// Affine map `y = x * w + b` with weights stored `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { w: Mat::zeros(d_in, d_out), b: vec![0.0; d_out] }
    }

    /// Uniform init in +-1/sqrt(fan_in) for both weights and bias.
    pub fn init<R: Rng>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (d_in as f64).sqrt();
        let mut w = Mat::zeros(d_in, d_out);
        for x in w.data_mut() {
            *x = rng.random_range(-bound..bound);
        }
        let b = (0..d_out).map(|_| rng.random_range(-bound..bound)).collect();
        Self { w, b }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = x.matmul(&self.w);
        y.add_row_broadcast(&self.b);
        y
    }

    /// Accumulates weight/bias gradients and returns `dx`.
    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Dense) -> Mat {
        acc_weight_grad(x, dy, &mut grad.w);
        for (gb, s) in grad.b.iter_mut().zip(dy.column_sums()) {
            *gb += s;
        }
        input_grad(dy, &self.w)
    }
}

/// Two affine maps with a ReLU between: the MLP shape used throughout the
/// denoising network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub a: Dense,
    pub b: Dense,
}

impl Mlp {
    pub fn zeros(d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        Self { a: Dense::zeros(d_in, d_hidden), b: Dense::zeros(d_hidden, d_out) }
    }

    pub fn init<R: Rng>(d_in: usize, d_hidden: usize, d_out: usize, rng: &mut R) -> Self {
        Self { a: Dense::init(d_in, d_hidden, rng), b: Dense::init(d_hidden, d_out, rng) }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        self.forward_trace(x).1
    }

    /// Returns `(pre-ReLU hidden, output)`; the hidden activations feed the
    /// backward pass.
    pub fn forward_trace(&self, x: &Mat) -> (Mat, Mat) {
        let hidden_pre = self.a.forward(x);
        let mut hidden = hidden_pre.clone();
        hidden.map_in_place(|v| v.max(0.0));
        let y = self.b.forward(&hidden);
        (hidden_pre, y)
    }

    /// Accumulates parameter gradients and returns `dx`.
    pub fn backward(&self, x: &Mat, hidden_pre: &Mat, dy: &Mat, grad: &mut Mlp) -> Mat {
        let mut hidden = hidden_pre.clone();
        hidden.map_in_place(|v| v.max(0.0));
        let dh = self.b.backward(&hidden, dy, &mut grad.b);
        let mut dpre = dh;
        for (g, &pre) in dpre.data_mut().iter_mut().zip(hidden_pre.data()) {
            if pre <= 0.0 {
                *g = 0.0;
            }
        }
        self.a.backward(x, &dpre, &mut grad.a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn matmul_small_fixture() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b);
        assert_eq!(c.data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn transpose_round_trip() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(a.transposed().transposed(), a);
    }

    #[test]
    fn dense_backward_matches_finite_difference() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let layer = Dense::init(3, 2, &mut rng);
        let mut x = Mat::from_vec(2, 3, (0..6).map(|i| 0.1 * i as f64 - 0.2).collect());
        // loss = sum(y)
        let loss = |layer: &Dense, x: &Mat| layer.forward(x).data().iter().sum::<f64>();
        let dy = Mat::from_vec(2, 2, vec![1.0; 4]);
        let mut grad = Dense::zeros(3, 2);
        let dx = layer.backward(&x, &dy, &mut grad);

        let eps = 1e-6;
        for i in 0..x.data().len() {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + eps;
            let up = loss(&layer, &x);
            x.data_mut()[i] = orig - eps;
            let down = loss(&layer, &x);
            x.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!((dx.data()[i] - fd).abs() < 1e-8, "dx[{i}]: {} vs {fd}", dx.data()[i]);
        }
    }

    #[test]
    fn mlp_backward_matches_finite_difference() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mlp = Mlp::init(4, 3, 2, &mut rng);
        let x = Mat::from_vec(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect());
        let (hidden_pre, y) = mlp.forward_trace(&x);
        let dy = Mat::from_vec(3, 2, y.data().iter().map(|_| 1.0).collect());
        let mut grad = Mlp::zeros(4, 3, 2);
        mlp.backward(&x, &hidden_pre, &dy, &mut grad);

        let eps = 1e-6;
        let mut perturbed = mlp.clone();
        for i in 0..mlp.a.w.data().len() {
            let orig = mlp.a.w.data()[i];
            perturbed.a.w.data_mut()[i] = orig + eps;
            let up: f64 = perturbed.forward(&x).data().iter().sum();
            perturbed.a.w.data_mut()[i] = orig - eps;
            let down: f64 = perturbed.forward(&x).data().iter().sum();
            perturbed.a.w.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            assert!(
                (grad.a.w.data()[i] - fd).abs() < 1e-7,
                "dWa[{i}]: {} vs {fd}",
                grad.a.w.data()[i]
            );
        }
    }
}
