//! The reconstruction network: a skip-connected LSTM autoencoder branch plus
//! a shared-coefficient autoregressive branch, blended by two learned scalar
//! gates. Trained with hand-derived backpropagation through time and plain
//! SGD to minimize the mean squared reconstruction error of the current
//! window.

mod cell;

pub use cell::{AscLstmCell, CellRun};

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{sgd_step, sigmoid, Matrix, ParamModel, Parameter, SgdConfig};

/// Structural hyperparameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaenetConfig {
    /// Sliding-window length `w`.
    pub window: usize,
    /// Series dimensionality `D`.
    pub dims: usize,
    /// Recurrent hidden units `U`.
    pub hidden: usize,
    /// Skip distance `S`.
    pub skip: usize,
    /// Autoregressive horizon `h`.
    pub horizon: usize,
    /// Enable the autoencoder branch.
    pub use_ae: bool,
    /// Enable the autoregressive branch.
    pub use_ar: bool,
}

impl TaenetConfig {
    pub fn new(window: usize, dims: usize, hidden: usize, skip: usize, horizon: usize) -> Self {
        TaenetConfig {
            window,
            dims,
            hidden,
            skip,
            horizon,
            use_ae: true,
            use_ar: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(Error::config(format!("window must be >= 2, got {}", self.window)));
        }
        if self.dims == 0 || self.hidden == 0 {
            return Err(Error::config("dims and hidden must be positive"));
        }
        if self.skip == 0 {
            return Err(Error::config("skip size must be >= 1"));
        }
        if !self.use_ae && !self.use_ar {
            return Err(Error::config("at least one of use_ae/use_ar must be enabled"));
        }
        Ok(())
    }

    /// True when the skip connection can never fire inside a window; the cell
    /// then degenerates to a plain LSTM. Legal, but usually worth a warning.
    pub fn skip_degenerate(&self) -> bool {
        self.skip >= self.window
    }

    /// Number of past samples a window needs so that every position in it has
    /// a full set of AR taps.
    pub fn ar_reach(&self) -> usize {
        self.horizon + self.window - 1
    }
}

/// Autoregressive branch: one coefficient vector of length `window`, shared
/// across all dimensions, plus a scalar bias.
#[derive(Debug, Clone)]
pub struct ArModel {
    coeffs: Parameter,
    bias: Parameter,
    horizon: usize,
}

impl ArModel {
    pub fn new(window: usize, horizon: usize, rng: &mut impl rand::Rng) -> Self {
        ArModel {
            coeffs: Parameter::new(cell::init_weight(1, window, window, rng)),
            bias: Parameter::scalar(0.0),
            horizon,
        }
    }

    pub fn window(&self) -> usize {
        self.coeffs.value.cols()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn coefficients(&self) -> &[f64] {
        self.coeffs.value.data()
    }

    pub fn bias(&self) -> f64 {
        self.bias.scalar_value()
    }

    /// Predict the observation at index `t` of `values` (rows are time steps)
    /// from the `window` samples ending `horizon` steps earlier.
    pub fn predict(&self, values: &Matrix, t: usize) -> Result<Vec<f64>> {
        let w = self.window();
        let oldest = (t as i64) - (self.horizon as i64) - (w as i64 - 1);
        if oldest < 0 || t >= values.rows() {
            return Err(Error::invalid_input(format!(
                "AR prediction at t={t} needs history down to index {oldest}"
            )));
        }
        let coeffs = self.coeffs.value.data();
        let b = self.bias.scalar_value();
        let mut out = vec![b; values.cols()];
        for (i, &wi) in coeffs.iter().enumerate() {
            let row = values.row(t - self.horizon - i);
            for (o, &x) in out.iter_mut().zip(row) {
                *o += wi * x;
            }
        }
        Ok(out)
    }

    /// Prediction from pre-gathered taps: row `i` of `taps` is the input
    /// vector multiplied by coefficient `i`.
    fn predict_taps(&self, taps: &Matrix) -> Vec<f64> {
        let coeffs = self.coeffs.value.data();
        let b = self.bias.scalar_value();
        let mut out = vec![b; taps.cols()];
        for (i, &wi) in coeffs.iter().enumerate() {
            for (o, &x) in out.iter_mut().zip(taps.row(i)) {
                *o += wi * x;
            }
        }
        out
    }
}

/// One training/evaluation sample: the target window plus the AR tap matrix
/// for each window position (`None` while the stream is too young to reach
/// back `horizon + window − 1` steps).
#[derive(Debug, Clone)]
pub struct WindowSample {
    /// `window × dims` target to reconstruct.
    pub target: Matrix,
    /// Per window position: `window × dims` matrix whose row `i` holds the
    /// sample `horizon + i` steps before that position.
    pub ar_taps: Vec<Option<Matrix>>,
}

impl WindowSample {
    /// Build a sample for the window of `values` ending at row `t`.
    pub fn from_series(values: &Matrix, t: usize, cfg: &TaenetConfig) -> Result<Self> {
        WindowSample::from_slice(values, 0, t, cfg)
    }

    /// Build a sample from a slice of the stream whose row `k` holds the
    /// observation at absolute index `base + k`; the window ends at absolute
    /// index `t`. AR taps are omitted for positions whose full tap history
    /// predates the stream, and the call fails if taps exist but fall before
    /// `base` (the slice is too short).
    pub fn from_slice(values: &Matrix, base: usize, t: usize, cfg: &TaenetConfig) -> Result<Self> {
        let w = cfg.window;
        let d = values.cols();
        let end = base + values.rows();
        if t < base + w - 1 || t >= end {
            return Err(Error::invalid_input(format!(
                "window ending at {t} out of range for rows [{base}, {end})"
            )));
        }
        let mut target = Matrix::zeros(w, d);
        for j in 0..w {
            let row = values.row(t + 1 - w + j - base);
            target.data_mut()[j * d..(j + 1) * d].copy_from_slice(row);
        }
        let mut ar_taps = Vec::with_capacity(w);
        for j in 0..w {
            let pos = t + 1 - w + j;
            if pos >= cfg.ar_reach() {
                let oldest = pos - cfg.horizon - (w - 1);
                if oldest < base {
                    return Err(Error::invalid_input(format!(
                        "AR taps for position {pos} reach index {oldest}, before slice base {base}"
                    )));
                }
                let mut taps = Matrix::zeros(w, d);
                for i in 0..w {
                    let row = values.row(pos - cfg.horizon - i - base);
                    taps.data_mut()[i * d..(i + 1) * d].copy_from_slice(row);
                }
                ar_taps.push(Some(taps));
            } else {
                ar_taps.push(None);
            }
        }
        Ok(WindowSample { target, ar_taps })
    }
}

/// Cached intermediates from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub loss: f64,
    pub reconstruction: Matrix,
    recon_ae: Matrix,
    recon_ar: Matrix,
    enc: Option<CellRun>,
    dec: Option<CellRun>,
}

/// The full reconstruction network for one ensemble member.
#[derive(Debug, Clone)]
pub struct TaenetModel {
    pub cfg: TaenetConfig,
    encoder: AscLstmCell,
    decoder: AscLstmCell,
    w_out: Parameter,
    b_out: Parameter,
    ar: ArModel,
    gate_ae: Parameter,
    gate_ar: Parameter,
}

impl TaenetModel {
    pub fn new(cfg: TaenetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = AscLstmCell::new(cfg.dims, cfg.hidden, cfg.skip, &mut rng);
        let decoder = AscLstmCell::new(cfg.hidden, cfg.hidden, cfg.skip, &mut rng);
        let w_out = Parameter::new(cell::init_weight(cfg.hidden, cfg.dims, cfg.hidden, &mut rng));
        let b_out = Parameter::new(Matrix::zeros(1, cfg.dims));
        let ar = ArModel::new(cfg.window, cfg.horizon, &mut rng);
        Ok(TaenetModel {
            cfg,
            encoder,
            decoder,
            w_out,
            b_out,
            ar,
            gate_ae: Parameter::scalar(1.0),
            gate_ar: Parameter::scalar(1.0),
        })
    }

    pub fn encoder(&self) -> &AscLstmCell {
        &self.encoder
    }

    pub fn ar(&self) -> &ArModel {
        &self.ar
    }

    pub fn gates(&self) -> (f64, f64) {
        (self.gate_ae.scalar_value(), self.gate_ar.scalar_value())
    }

    /// Autoencoder-only reconstruction of a window: encode, tile the final
    /// hidden state as decoder input, project each decoder state.
    pub fn reconstruct_ae(&self, window: &Matrix) -> Result<Matrix> {
        let (recon, _, _) = self.run_ae(window)?;
        Ok(recon)
    }

    fn run_ae(&self, window: &Matrix) -> Result<(Matrix, CellRun, CellRun)> {
        let w = self.cfg.window;
        let d = self.cfg.dims;
        if window.shape() != (w, d) {
            return Err(Error::dim(format!(
                "window must be {w}x{d}, got {}x{}",
                window.rows(),
                window.cols()
            )));
        }
        let enc = self.encoder.forward(window)?;
        let latent = enc.final_hidden();
        let mut dec_in = Matrix::zeros(w, self.cfg.hidden);
        for j in 0..w {
            dec_in.data_mut()[j * self.cfg.hidden..(j + 1) * self.cfg.hidden]
                .copy_from_slice(latent);
        }
        let dec = self.decoder.forward(&dec_in)?;
        let mut recon = Matrix::zeros(w, d);
        let mut proj = vec![0.0; d];
        for j in 0..w {
            self.w_out.value.matvec_t_acc(dec.hidden(j), &mut proj);
            for (r, (&p, &b)) in recon.data_mut()[j * d..(j + 1) * d]
                .iter_mut()
                .zip(proj.iter().zip(self.b_out.value.data()))
            {
                *r = p + b;
            }
            proj.fill(0.0);
        }
        Ok((recon, enc, dec))
    }

    /// Forward pass: blend the branch reconstructions and compute the mean
    /// squared error over all `window × dims` entries.
    pub fn forward(&self, sample: &WindowSample) -> Result<ForwardTrace> {
        let w = self.cfg.window;
        let d = self.cfg.dims;
        if sample.target.shape() != (w, d) || sample.ar_taps.len() != w {
            return Err(Error::dim("sample does not match network configuration"));
        }
        let (recon_ae, enc, dec) = if self.cfg.use_ae {
            let (r, e, dc) = self.run_ae(&sample.target)?;
            (r, Some(e), Some(dc))
        } else {
            (Matrix::zeros(w, d), None, None)
        };
        let mut recon_ar = Matrix::zeros(w, d);
        if self.cfg.use_ar {
            for (j, taps) in sample.ar_taps.iter().enumerate() {
                if let Some(taps) = taps {
                    let pred = self.ar.predict_taps(taps);
                    recon_ar.data_mut()[j * d..(j + 1) * d].copy_from_slice(&pred);
                }
            }
        }
        let g_ae = if self.cfg.use_ae { self.gate_ae.scalar_value() } else { 0.0 };
        let g_ar = if self.cfg.use_ar { self.gate_ar.scalar_value() } else { 0.0 };
        let mut recon = Matrix::zeros(w, d);
        let mut loss = 0.0;
        for k in 0..w * d {
            let v = g_ae * recon_ae.data()[k] + g_ar * recon_ar.data()[k];
            recon.data_mut()[k] = v;
            let e = sample.target.data()[k] - v;
            loss += e * e;
        }
        loss /= (w * d) as f64;
        if !loss.is_finite() {
            return Err(Error::training("non-finite reconstruction loss"));
        }
        Ok(ForwardTrace {
            loss,
            reconstruction: recon,
            recon_ae,
            recon_ar,
            enc,
            dec,
        })
    }

    /// Reconstruction loss only.
    pub fn loss(&self, sample: &WindowSample) -> Result<f64> {
        Ok(self.forward(sample)?.loss)
    }

    /// Accumulate gradients of the forward loss into every parameter.
    pub fn backward(&mut self, sample: &WindowSample, trace: &ForwardTrace) {
        let w = self.cfg.window;
        let d = self.cfg.dims;
        let u = self.cfg.hidden;
        let scale = 2.0 / (w * d) as f64;
        let g_ae = self.gate_ae.scalar_value();
        let g_ar = self.gate_ar.scalar_value();

        // d(loss)/d(reconstruction)
        let d_recon: Vec<f64> = trace
            .reconstruction
            .data()
            .iter()
            .zip(sample.target.data())
            .map(|(r, x)| scale * (r - x))
            .collect();

        if self.cfg.use_ar {
            let mut d_gate = 0.0;
            let mut d_bias = 0.0;
            for (j, taps) in sample.ar_taps.iter().enumerate() {
                let Some(taps) = taps else { continue };
                for dd in 0..d {
                    let e = d_recon[j * d + dd];
                    d_gate += e * trace.recon_ar.data()[j * d + dd];
                    let dar = g_ar * e;
                    d_bias += dar;
                    for i in 0..w {
                        self.ar.coeffs.grad.data_mut()[i] += dar * taps.get(i, dd);
                    }
                }
            }
            self.gate_ar.grad.data_mut()[0] += d_gate;
            self.ar.bias.grad.data_mut()[0] += d_bias;
        }

        if self.cfg.use_ae {
            let enc = trace.enc.as_ref().expect("encoder trace missing");
            let dec = trace.dec.as_ref().expect("decoder trace missing");
            let mut d_gate = 0.0;
            let mut d_dec_hidden = vec![vec![0.0; u]; w];
            for j in 0..w {
                let h = dec.hidden(j);
                for dd in 0..d {
                    let e = d_recon[j * d + dd];
                    d_gate += e * trace.recon_ae.data()[j * d + dd];
                    let dae = g_ae * e;
                    self.b_out.grad.data_mut()[dd] += dae;
                    for k in 0..u {
                        self.w_out.grad.data_mut()[k * d + dd] += dae * h[k];
                        d_dec_hidden[j][k] += dae * self.w_out.value.get(k, dd);
                    }
                }
            }
            self.gate_ae.grad.data_mut()[0] += d_gate;

            let d_dec_inputs = self
                .decoder
                .backward(dec, d_dec_hidden, true)
                .expect("decoder input grads requested");
            // Every decoder step consumed the same latent vector.
            let mut d_latent = vec![0.0; u];
            for dx in &d_dec_inputs {
                for (a, &b) in d_latent.iter_mut().zip(dx) {
                    *a += b;
                }
            }
            let mut d_enc_hidden = vec![vec![0.0; u]; w];
            d_enc_hidden[w - 1] = d_latent;
            self.encoder.backward(enc, d_enc_hidden, false);
        }
    }

    /// One SGD step on a single sample. Returns the loss before the update.
    pub fn train_step(&mut self, sample: &WindowSample, sgd: &SgdConfig) -> Result<f64> {
        let trace = self.forward(sample)?;
        self.zero_grads();
        self.backward(sample, &trace);
        sgd_step(self, sgd)?;
        Ok(trace.loss)
    }

    /// One SGD step on the mean gradient over a batch of samples. Returns the
    /// mean loss before the update. A multi-sample "epoch" is a sequence of
    /// these, which is how the surrounding ecosystem trains such networks.
    pub fn train_batch_step(&mut self, samples: &[&WindowSample], sgd: &SgdConfig) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::invalid_input("empty training batch"));
        }
        self.zero_grads();
        let mut total = 0.0;
        for sample in samples {
            let trace = self.forward(sample)?;
            total += trace.loss;
            self.backward(sample, &trace);
        }
        let scale = 1.0 / samples.len() as f64;
        self.for_each_param_mut(&mut |_, p| {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        });
        sgd_step(self, sgd)?;
        Ok(total * scale)
    }

    /// Train for `epochs` passes over `samples`, taking one mean-gradient
    /// step per chunk of `batch_size` windows (in order, no shuffling).
    pub fn train_epochs(
        &mut self,
        samples: &[WindowSample],
        epochs: usize,
        batch_size: usize,
        sgd: &SgdConfig,
    ) -> Result<()> {
        let bs = batch_size.max(1);
        for _ in 0..epochs {
            for chunk in samples.chunks(bs) {
                let refs: Vec<&WindowSample> = chunk.iter().collect();
                self.train_batch_step(&refs, sgd)?;
            }
        }
        Ok(())
    }

    /// Serialize to a flat named-parameter checkpoint.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut params = BTreeMap::new();
        self.for_each_param(&mut |name, p| {
            params.insert(name.to_string(), p.value.data().to_vec());
        });
        Checkpoint {
            config: self.cfg.clone(),
            params,
        }
    }

    /// Rebuild a model from a checkpoint; every parameter must be present
    /// with the exact length implied by the config.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut model = TaenetModel::new(ckpt.config.clone(), 0)?;
        let mut err: Option<Error> = None;
        model.for_each_param_mut(&mut |name, p| {
            if err.is_some() {
                return;
            }
            match ckpt.params.get(name) {
                Some(values) if values.len() == p.value.len() => {
                    p.value.data_mut().copy_from_slice(values);
                }
                Some(values) => {
                    err = Some(Error::parse(
                        name,
                        format!("expected {} values, got {}", p.value.len(), values.len()),
                    ));
                }
                None => err = Some(Error::parse(name, "missing parameter")),
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(model),
        }
    }

    /// Effective blend factor of the encoder cell (diagnostics).
    pub fn encoder_alpha(&self) -> f64 {
        sigmoid(self.encoder.alpha_raw.scalar_value())
    }
}

impl ParamModel for TaenetModel {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &Parameter)) {
        self.encoder
            .for_each_param(&mut |name, param| f(&format!("encoder.{name}"), param));
        self.decoder
            .for_each_param(&mut |name, param| f(&format!("decoder.{name}"), param));
        f("output.weight", &self.w_out);
        f("output.bias", &self.b_out);
        f("ar.coeffs", &self.ar.coeffs);
        f("ar.bias", &self.ar.bias);
        f("gate.ae", &self.gate_ae);
        f("gate.ar", &self.gate_ar);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        self.encoder
            .for_each_param_mut(&mut |name, param| f(&format!("encoder.{name}"), param));
        self.decoder
            .for_each_param_mut(&mut |name, param| f(&format!("decoder.{name}"), param));
        f("output.weight", &mut self.w_out);
        f("output.bias", &mut self.b_out);
        f("ar.coeffs", &mut self.ar.coeffs);
        f("ar.bias", &mut self.ar.bias);
        f("gate.ae", &mut self.gate_ae);
        f("gate.ar", &mut self.gate_ar);
    }
}

/// Flat JSON checkpoint: named parameter arrays plus the structural config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: TaenetConfig,
    pub params: BTreeMap<String, Vec<f64>>,
}
