//! Minimal dense numerical kernel: row-major `f64` matrices, elementwise ops,
//! activations with derivatives, parameter containers, plain SGD, and a
//! finite-difference gradient checker.
//!
//! Everything here is 64-bit; gradient verification at the tolerances used by
//! the test suite is not feasible in single precision.

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim(format!(
                "matrix {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::dim("ragged rows in matrix literal"));
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix { rows: r, cols: c, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Standard matrix product `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::dim(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `out = self · x` for a column vector `x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    /// `out += selfᵀ · x`.
    pub fn matvec_t_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (o, &a) in out.iter_mut().zip(row) {
                *o += xi * a;
            }
        }
    }

    /// `self += a · bᵀ` (outer product accumulate).
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = &mut self.data[i * self.cols..(i + 1) * self.cols];
            for (r, &bj) in row.iter_mut().zip(b) {
                *r += ai * bj;
            }
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Elementwise activation kinds used by the recurrent cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation `x`.
    #[inline]
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Elementwise activation over a matrix.
pub fn activation(kind: Activation, x: &Matrix) -> Matrix {
    x.map(|v| kind.eval(v))
}

/// Elementwise activation derivative over a matrix.
pub fn activation_grad(kind: Activation, x: &Matrix) -> Matrix {
    x.map(|v| kind.grad(v))
}

/// A trainable value and its gradient accumulator (same shape).
#[derive(Debug, Clone)]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Parameter { value, grad }
    }

    pub fn scalar(v: f64) -> Self {
        Parameter::new(Matrix::from_vec(1, 1, vec![v]).unwrap())
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Convenience for 1x1 parameters.
    pub fn scalar_value(&self) -> f64 {
        self.value.data()[0]
    }
}

/// Plain stochastic gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { learning_rate: 0.001 }
    }
}

impl SgdConfig {
    pub fn new(learning_rate: f64) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::config(format!(
                "learning rate must be positive and finite, got {learning_rate}"
            )));
        }
        Ok(SgdConfig { learning_rate })
    }
}

/// Anything that exposes its parameters by name, in a stable order.
pub trait ParamModel {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter));

    fn param_scalar_count(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, p| n += p.value.len());
        n
    }

    fn zero_grads(&mut self) {
        self.for_each_param_mut(&mut |_, p| p.zero_grad());
    }
}

/// `value ← value − lr·grad` for every parameter, then zero the gradients.
///
/// A non-finite gradient aborts the step before any parameter is touched.
pub fn sgd_step<M: ParamModel + ?Sized>(model: &mut M, cfg: &SgdConfig) -> Result<()> {
    let mut bad: Option<String> = None;
    model.for_each_param(&mut |name, p| {
        if bad.is_none() && !p.grad.is_finite() {
            bad = Some(name.to_string());
        }
    });
    if let Some(name) = bad {
        return Err(Error::training(format!("non-finite gradient in {name}")));
    }
    let lr = cfg.learning_rate;
    model.for_each_param_mut(&mut |_, p| {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
        p.zero_grad();
    });
    Ok(())
}

fn nudge<M: ParamModel + ?Sized>(model: &mut M, param_idx: usize, entry: usize, delta: f64) {
    let mut i = 0;
    model.for_each_param_mut(&mut |_, p| {
        if i == param_idx {
            p.value.data_mut()[entry] += delta;
        }
        i += 1;
    });
}

/// Compare the analytic gradients already stored in `model` against central
/// finite differences of `loss_fn`.
///
/// Returns the max over all scalar parameters of
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn finite_diff_check<M, F>(model: &mut M, mut loss_fn: F, epsilon: f64) -> Result<f64>
where
    M: ParamModel + ?Sized,
    F: FnMut(&M) -> Result<f64>,
{
    let mut analytic: Vec<Vec<f64>> = Vec::new();
    model.for_each_param(&mut |_, p| analytic.push(p.grad.data().to_vec()));

    let mut max_rel: f64 = 0.0;
    for (pi, grads) in analytic.iter().enumerate() {
        for (ei, &g) in grads.iter().enumerate() {
            nudge(model, pi, ei, epsilon);
            let plus = loss_fn(model)?;
            nudge(model, pi, ei, -2.0 * epsilon);
            let minus = loss_fn(model)?;
            nudge(model, pi, ei, epsilon);
            let numeric = (plus - minus) / (2.0 * epsilon);
            let rel = (g - numeric).abs() / f64::max(1.0, g.abs());
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        // Independent triple-loop oracle: plain dot products.
        let mut out = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    #[test]
    fn matmul_identity() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let out = a.matmul(&Matrix::identity(2)).unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn matmul_hand_case() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        let out = a.matmul(&b).unwrap();
        assert_eq!(out.shape(), (1, 1));
        assert_eq!(out.get(0, 0), 11.0);
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = Matrix::zeros(2, 3);
        let b = Matrix::zeros(2, 3);
        assert!(matches!(a.matmul(&b), Err(Error::Dim(_))));
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let m = rng.random_range(1..6);
            let k = rng.random_range(1..6);
            let n = rng.random_range(1..6);
            let a = Matrix::from_vec(m, k, (0..m * k).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
            let b = Matrix::from_vec(k, n, (0..k * n).map(|_| rng.random_range(-2.0..2.0)).collect())
                .unwrap();
            let got = a.matmul(&b).unwrap();
            let want = naive_matmul(&a, &b);
            for (g, w) in got.data().iter().zip(want.data()) {
                let rel = (g - w).abs() / f64::max(1.0, w.abs());
                assert!(rel < 1e-12, "matmul mismatch: {g} vs {w}");
            }
        }
    }

    #[test]
    fn activation_symmetry_points() {
        assert_eq!(Activation::Tanh.eval(0.0), 0.0);
        assert_eq!(Activation::Sigmoid.eval(0.0), 0.5);
        assert_eq!(Activation::Tanh.grad(0.0), 1.0);
        assert_eq!(Activation::Identity.eval(3.25), 3.25);
    }

    #[test]
    fn activation_grads_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for kind in [Activation::Tanh, Activation::Sigmoid, Activation::Identity] {
            for _ in 0..1000 {
                let x: f64 = rng.random_range(-4.0..4.0);
                let numeric = (kind.eval(x + eps) - kind.eval(x - eps)) / (2.0 * eps);
                assert!(
                    (kind.grad(x) - numeric).abs() < 1e-7,
                    "{kind:?} grad mismatch at {x}"
                );
            }
        }
    }

    #[test]
    fn sigmoid_grad_at_one_matches_central_difference() {
        let eps = 1e-6;
        let numeric = (sigmoid(1.0 + eps) - sigmoid(1.0 - eps)) / (2.0 * eps);
        assert!((Activation::Sigmoid.grad(1.0) - numeric).abs() < 1e-8);
    }

    /// One scalar parameter; loss is whatever closure the test supplies.
    struct OneParam {
        p: Parameter,
    }

    impl ParamModel for OneParam {
        fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter)) {
            f("p", &self.p);
        }
        fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
            f("p", &mut self.p);
        }
    }

    #[test]
    fn sgd_step_hand_arithmetic() {
        let mut m = OneParam { p: Parameter::scalar(1.0) };
        m.p.grad.data_mut()[0] = 2.0;
        sgd_step(&mut m, &SgdConfig::default()).unwrap();
        assert!((m.p.scalar_value() - 0.998).abs() < 1e-15);
        assert_eq!(m.p.grad.data()[0], 0.0);
    }

    #[test]
    fn sgd_step_zero_grad_is_fixed_point() {
        let mut m = OneParam { p: Parameter::scalar(0.75) };
        sgd_step(&mut m, &SgdConfig::default()).unwrap();
        assert_eq!(m.p.scalar_value(), 0.75);
    }

    #[test]
    fn sgd_step_rejects_non_finite_grad() {
        let mut m = OneParam { p: Parameter::scalar(1.0) };
        m.p.grad.data_mut()[0] = f64::NAN;
        assert!(matches!(
            sgd_step(&mut m, &SgdConfig::default()),
            Err(Error::Training(_))
        ));
        // Value untouched on failure.
        assert_eq!(m.p.scalar_value(), 1.0);
    }

    #[test]
    fn sgd_descends_quadratic() {
        // f(v) = v', grad = 2v; |v| must shrink every step.
        let mut m = OneParam { p: Parameter::scalar(1.0) };
        let cfg = SgdConfig::new(0.05).unwrap();
        let mut prev = m.p.scalar_value().abs();
        for _ in 0..10 {
            let v = m.p.scalar_value();
            m.p.grad.data_mut()[0] = 2.0 * v;
            sgd_step(&mut m, &cfg).unwrap();
            let cur = m.p.scalar_value().abs();
            assert!(cur < prev, "|v| did not decrease: {cur} vs {prev}");
            prev = cur;
        }
    }

    #[test]
    fn sgd_preserves_shapes_and_zeroes_grads() {
        struct Two {
            a: Parameter,
            b: Parameter,
        }
        impl ParamModel for Two {
            fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter)) {
                f("a", &self.a);
                f("b", &self.b);
            }
            fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
                f("a", &mut self.a);
                f("b", &mut self.b);
            }
        }
        let mut m = Two {
            a: Parameter::new(Matrix::filled(3, 4, 0.5)),
            b: Parameter::new(Matrix::filled(2, 1, -1.0)),
        };
        m.a.grad.fill(0.25);
        m.b.grad.fill(-0.5);
        sgd_step(&mut m, &SgdConfig::default()).unwrap();
        assert_eq!(m.a.value.shape(), (3, 4));
        assert_eq!(m.b.value.shape(), (2, 1));
        assert!(m.a.grad.data().iter().all(|&g| g == 0.0));
        assert!(m.b.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn finite_diff_check_exact_quadratic() {
        // loss = v', analytic grad 2v is exact; checker error is O(eps')
        let mut m = OneParam { p: Parameter::scalar(0.8) };
        m.p.grad.data_mut()[0] = 2.0 * 0.8;
        let err = finite_diff_check(&mut m, |m| Ok(m.p.scalar_value().powi(2)), 1e-5).unwrap();
        assert!(err < 1e-8, "quadratic check error {err}");
    }

    #[test]
    fn finite_diff_check_flags_corrupted_gradient() {
        let mut m = OneParam { p: Parameter::scalar(0.8) };
        m.p.grad.data_mut()[0] = 2.0 * 0.8 + 1.0;
        let err = finite_diff_check(&mut m, |m| Ok(m.p.scalar_value().powi(2)), 1e-5).unwrap();
        assert!(err > 0.1, "corrupted gradient not flagged: {err}");
    }
}
