//! Skip-connected LSTM cell with a learned blend factor.
//!
//! The hidden state at step `t` is the plain LSTM output for `t < skip`, and
//! `alpha·tanh(c_t)∘o_t + (1−alpha)·tanh(W_skip·h_{t−skip})` once the skip
//! connection can reach back inside the sequence. `alpha` is stored as an
//! unconstrained scalar and squashed through a sigmoid, so it stays in (0,1)
//! for any parameter value.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ndcore::{sigmoid, Matrix, ParamModel, Parameter};

#[derive(Debug, Clone)]
pub struct AscLstmCell {
    input_dim: usize,
    hidden: usize,
    skip: usize,
    pub(crate) w_input: Parameter,
    pub(crate) w_forget: Parameter,
    pub(crate) w_cell: Parameter,
    pub(crate) w_output: Parameter,
    pub(crate) b_input: Parameter,
    pub(crate) b_forget: Parameter,
    pub(crate) b_cell: Parameter,
    pub(crate) b_output: Parameter,
    pub(crate) w_skip: Parameter,
    pub(crate) alpha_raw: Parameter,
}

/// Per-step intermediates saved by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct StepTrace {
    pub x: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    /// `tanh(W_skip·h_{t−skip})`, present only when the skip fired.
    pub skip_act: Option<Vec<f64>>,
    pub h: Vec<f64>,
}

/// Cached forward pass over one window.
#[derive(Debug, Clone)]
pub struct CellRun {
    pub(crate) steps: Vec<StepTrace>,
}

impl CellRun {
    pub fn hidden(&self, t: usize) -> &[f64] {
        &self.steps[t].h
    }

    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().expect("empty cell run").h
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

pub(crate) fn init_weight(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

impl AscLstmCell {
    pub fn new(input_dim: usize, hidden: usize, skip: usize, rng: &mut impl Rng) -> Self {
        let z = input_dim + hidden;
        AscLstmCell {
            input_dim,
            hidden,
            skip,
            w_input: Parameter::new(init_weight(hidden, z, z, rng)),
            w_forget: Parameter::new(init_weight(hidden, z, z, rng)),
            w_cell: Parameter::new(init_weight(hidden, z, z, rng)),
            w_output: Parameter::new(init_weight(hidden, z, z, rng)),
            b_input: Parameter::new(Matrix::zeros(hidden, 1)),
            b_forget: Parameter::new(Matrix::zeros(hidden, 1)),
            b_cell: Parameter::new(Matrix::zeros(hidden, 1)),
            b_output: Parameter::new(Matrix::zeros(hidden, 1)),
            w_skip: Parameter::new(init_weight(hidden, hidden, hidden, rng)),
            alpha_raw: Parameter::scalar(0.0),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn skip_size(&self) -> usize {
        self.skip
    }

    /// Blend factor, always strictly inside (0,1).
    ///
    /// The raw value is clamped before squashing: past ±36 the sigmoid
    /// saturates to exactly 0 or 1 in `f64`, which would violate the open
    /// interval. The clamp changes nothing measurable (the gradient there is
    /// ~1e-16 already).
    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_raw.scalar_value().clamp(-36.0, 36.0))
    }

    /// Run the cell over `inputs` (one row per time step), starting from zero
    /// hidden and cell state.
    pub fn forward(&self, inputs: &Matrix) -> Result<CellRun> {
        if inputs.cols() != self.input_dim {
            return Err(Error::dim(format!(
                "cell expects input dim {}, got {}",
                self.input_dim,
                inputs.cols()
            )));
        }
        let u = self.hidden;
        let alpha = self.alpha();
        let mut steps: Vec<StepTrace> = Vec::with_capacity(inputs.rows());
        let mut h_prev = vec![0.0; u];
        let mut c_prev = vec![0.0; u];
        let mut z = vec![0.0; self.input_dim + u];
        let mut pre = vec![0.0; u];

        for t in 0..inputs.rows() {
            let x = inputs.row(t);
            z[..self.input_dim].copy_from_slice(x);
            z[self.input_dim..].copy_from_slice(&h_prev);

            let mut gate = |w: &Parameter, b: &Parameter, squash: fn(f64) -> f64| -> Vec<f64> {
                w.value.matvec(&z, &mut pre);
                pre.iter()
                    .zip(b.value.data())
                    .map(|(&p, &bv)| squash(p + bv))
                    .collect()
            };
            let i = gate(&self.w_input, &self.b_input, sigmoid);
            let f = gate(&self.w_forget, &self.b_forget, sigmoid);
            let g = gate(&self.w_cell, &self.b_cell, f64::tanh);
            let o = gate(&self.w_output, &self.b_output, sigmoid);

            let c: Vec<f64> = (0..u)
                .map(|k| f[k] * c_prev[k] + i[k] * g[k])
                .collect();
            let tanh_c: Vec<f64> = c.iter().map(|&v| v.tanh()).collect();

            let (skip_act, h): (Option<Vec<f64>>, Vec<f64>) = if t >= self.skip {
                let source = &steps[t - self.skip].h;
                let mut p = vec![0.0; u];
                self.w_skip.value.matvec(source, &mut p);
                let q: Vec<f64> = p.iter().map(|&v| v.tanh()).collect();
                let h = (0..u)
                    .map(|k| alpha * tanh_c[k] * o[k] + (1.0 - alpha) * q[k])
                    .collect();
                (Some(q), h)
            } else {
                let h = (0..u).map(|k| tanh_c[k] * o[k]).collect();
                (None, h)
            };

            h_prev.copy_from_slice(&h);
            c_prev.copy_from_slice(&c);
            steps.push(StepTrace {
                x: x.to_vec(),
                i,
                f,
                g,
                o,
                c,
                tanh_c,
                skip_act,
                h,
            });
        }
        Ok(CellRun { steps })
    }

    /// Backpropagate through the cached run.
    ///
    /// `d_hidden[t]` holds ∂loss/∂h_t from downstream consumers. Gradients
    /// accumulate into the cell's parameters; the return value is
    /// ∂loss/∂x_t per step when `want_input_grads` is set.
    pub fn backward(
        &mut self,
        run: &CellRun,
        mut d_hidden: Vec<Vec<f64>>,
        want_input_grads: bool,
    ) -> Option<Vec<Vec<f64>>> {
        let u = self.hidden;
        let steps = &run.steps;
        assert_eq!(d_hidden.len(), steps.len());
        let alpha = self.alpha();
        let mut d_alpha = 0.0;
        let mut dc_carry = vec![0.0; u];
        let mut dx_all: Vec<Vec<f64>> = if want_input_grads {
            vec![vec![0.0; self.input_dim]; steps.len()]
        } else {
            Vec::new()
        };
        let mut z = vec![0.0; self.input_dim + u];
        let mut dz = vec![0.0; self.input_dim + u];

        for t in (0..steps.len()).rev() {
            let st = &steps[t];
            let dh = std::mem::take(&mut d_hidden[t]);

            // Split dh into the base (gated cell output) path and the skip path.
            let mut d_base = vec![0.0; u];
            if let Some(q) = &st.skip_act {
                let mut dq = vec![0.0; u];
                for k in 0..u {
                    d_alpha += dh[k] * (st.tanh_c[k] * st.o[k] - q[k]);
                    d_base[k] = alpha * dh[k];
                    dq[k] = (1.0 - alpha) * dh[k];
                }
                // q = tanh(W_skip · h_{t-skip})
                let dp: Vec<f64> = (0..u).map(|k| dq[k] * (1.0 - q[k] * q[k])).collect();
                let source = &steps[t - self.skip].h;
                self.w_skip.grad.add_outer(&dp, source);
                self.w_skip.value.matvec_t_acc(&dp, &mut d_hidden[t - self.skip]);
            } else {
                d_base.copy_from_slice(&dh);
            }

            // base = tanh(c)∘o
            let c_prev: Vec<f64> = if t == 0 {
                vec![0.0; u]
            } else {
                steps[t - 1].c.clone()
            };
            let mut da_i = vec![0.0; u];
            let mut da_f = vec![0.0; u];
            let mut da_g = vec![0.0; u];
            let mut da_o = vec![0.0; u];
            for k in 0..u {
                let d_o = d_base[k] * st.tanh_c[k];
                let dc = dc_carry[k] + d_base[k] * st.o[k] * (1.0 - st.tanh_c[k] * st.tanh_c[k]);
                da_o[k] = d_o * st.o[k] * (1.0 - st.o[k]);
                da_i[k] = dc * st.g[k] * st.i[k] * (1.0 - st.i[k]);
                da_f[k] = dc * c_prev[k] * st.f[k] * (1.0 - st.f[k]);
                da_g[k] = dc * st.i[k] * (1.0 - st.g[k] * st.g[k]);
                dc_carry[k] = dc * st.f[k];
            }

            z[..self.input_dim].copy_from_slice(&st.x);
            if t == 0 {
                z[self.input_dim..].fill(0.0);
            } else {
                z[self.input_dim..].copy_from_slice(&steps[t - 1].h);
            }
            dz.fill(0.0);
            for (w, b, da) in [
                (&mut self.w_input, &mut self.b_input, &da_i),
                (&mut self.w_forget, &mut self.b_forget, &da_f),
                (&mut self.w_cell, &mut self.b_cell, &da_g),
                (&mut self.w_output, &mut self.b_output, &da_o),
            ] {
                w.grad.add_outer(da, &z);
                for (bg, &d) in b.grad.data_mut().iter_mut().zip(da.iter()) {
                    *bg += d;
                }
                w.value.matvec_t_acc(da, &mut dz);
            }

            if want_input_grads {
                dx_all[t].copy_from_slice(&dz[..self.input_dim]);
            }
            if t > 0 {
                for (dst, &src) in d_hidden[t - 1].iter_mut().zip(&dz[self.input_dim..]) {
                    *dst += src;
                }
            }
        }

        // alpha = sigmoid(clamp(alpha_raw))
        let s = self.alpha();
        self.alpha_raw.grad.data_mut()[0] += d_alpha * s * (1.0 - s);

        want_input_grads.then_some(dx_all)
    }
}

impl ParamModel for AscLstmCell {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        f("w_input", &self.w_input);
        f("w_forget", &self.w_forget);
        f("w_cell", &self.w_cell);
        f("w_output", &self.w_output);
        f("b_input", &self.b_input);
        f("b_forget", &self.b_forget);
        f("b_cell", &self.b_cell);
        f("b_output", &self.b_output);
        f("w_skip", &self.w_skip);
        f("alpha_raw", &self.alpha_raw);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        f("w_input", &mut self.w_input);
        f("w_forget", &mut self.w_forget);
        f("w_cell", &mut self.w_cell);
        f("w_output", &mut self.w_output);
        f("b_input", &mut self.b_input);
        f("b_forget", &mut self.b_forget);
        f("b_cell", &mut self.b_cell);
        f("b_output", &mut self.b_output);
        f("w_skip", &mut self.w_skip);
        f("alpha_raw", &mut self.alpha_raw);
    }
}
