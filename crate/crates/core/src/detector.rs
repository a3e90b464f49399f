//! The online change-point detector: an ensemble of reconstruction networks
//! with per-member running-mean loss thresholds, a majority vote, and a
//! consecutive-outlier state machine.
//!
//! Per incoming sample, the window ending at that sample is classified
//! against every member's threshold `C · L_avg`. In-distribution samples are
//! trained on and update the running means; out-of-distribution samples are
//! buffered untouched. `n_cpd` consecutive outliers declare a change-point at
//! the index just before the run, the ensemble is retrained on the buffered
//! windows, and the thresholds restart from those windows. A single normal
//! sample discards the buffer, which is what makes short anomaly bursts
//! harmless and keeps retained raw data bounded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SgdConfig};
use crate::taenet::{TaenetConfig, TaenetModel, WindowSample};

/// Everything the detector needs to build and drive its ensemble.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Ensemble size `M`.
    pub ensemble: usize,
    /// Skip size per member; length must equal `ensemble`.
    pub skip_sizes: Vec<usize>,
    /// Threshold coefficient `C` (must exceed 1).
    pub threshold_coeff: f64,
    /// Multiplier applied to `C` right after a change-point.
    pub grace_mult: f64,
    /// How many samples the multiplier stays active.
    pub grace_len: usize,
    /// Vote fraction `beta` in (0, 1].
    pub vote_fraction: f64,
    /// Consecutive outliers required to declare a change-point.
    pub n_cpd: usize,
    /// Number of prefix samples used for initialization.
    pub n_init: usize,
    pub e_init: usize,
    pub e_train: usize,
    pub e_reinit: usize,
    /// Window length `w`.
    pub window: usize,
    /// Hidden units `U`.
    pub hidden: usize,
    /// AR horizon `h`.
    pub horizon: usize,
    pub learning_rate: f64,
    pub use_ae: bool,
    pub use_ar: bool,
    /// Re-draw the ensemble weights after each change-point before the
    /// retraining phase, instead of relying on retraining alone to forget
    /// the old regime. Off by default.
    #[serde(default)]
    pub reset_on_change: bool,
}

impl EnsembleConfig {
    /// The published default hyperparameters, with `n_init` chosen by the
    /// caller (conventionally 10% of the series).
    pub fn published_defaults(n_init: usize) -> Self {
        EnsembleConfig {
            ensemble: 3,
            skip_sizes: vec![3, 5, 7],
            threshold_coeff: 1.4,
            grace_mult: 4.0,
            grace_len: 5,
            vote_fraction: 0.6,
            n_cpd: 3,
            n_init,
            e_init: 10,
            e_train: 5,
            e_reinit: 100,
            window: 6,
            hidden: 20,
            horizon: 4,
            learning_rate: 0.001,
            use_ae: true,
            use_ar: true,
            reset_on_change: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ensemble == 0 || self.skip_sizes.len() != self.ensemble {
            return Err(Error::config(format!(
                "need one skip size per member: M={}, skips={:?}",
                self.ensemble, self.skip_sizes
            )));
        }
        if self.threshold_coeff.is_nan() || self.threshold_coeff <= 1.0 {
            return Err(Error::config("threshold coefficient C must exceed 1"));
        }
        if self.vote_fraction.is_nan() || self.vote_fraction <= 0.0 || self.vote_fraction > 1.0 {
            return Err(Error::config("vote fraction beta must be in (0, 1]"));
        }
        if self.n_cpd == 0 {
            return Err(Error::config("n_cpd must be >= 1"));
        }
        if self.n_init < self.window + self.horizon + 1 {
            return Err(Error::config(format!(
                "n_init={} too small: AR warm-up needs at least w+h+1={}",
                self.n_init,
                self.window + self.horizon + 1
            )));
        }
        if self.grace_mult.is_nan() || self.grace_mult < 1.0 {
            return Err(Error::config("grace multiplier must be >= 1"));
        }
        let mut degenerate = Vec::new();
        for m in 0..self.ensemble {
            let net = self.taenet_config(1, m);
            net.validate()?;
            if net.skip_degenerate() {
                degenerate.push(net.skip);
            }
        }
        if !degenerate.is_empty() {
            static WARNED: std::sync::Once = std::sync::Once::new();
            let window = self.window;
            WARNED.call_once(|| {
                eprintln!(
                    "warning: skip sizes {degenerate:?} >= window {window}; \
                     those members degenerate to plain LSTMs"
                );
            });
        }
        Ok(())
    }

    /// Network configuration for member `m` on `dims`-dimensional data.
    pub fn taenet_config(&self, dims: usize, member: usize) -> TaenetConfig {
        let mut cfg = TaenetConfig::new(
            self.window,
            dims,
            self.hidden,
            self.skip_sizes[member.min(self.skip_sizes.len() - 1)],
            self.horizon,
        );
        cfg.use_ae = self.use_ae;
        cfg.use_ar = self.use_ar;
        cfg
    }

    /// Ablation-variant name recorded in reports.
    pub fn variant_name(&self) -> &'static str {
        match (self.use_ae, self.use_ar) {
            (true, true) => "ALACPD",
            (true, false) => "ALACPDw/oAR",
            (false, true) => "ALACPDw/oAE",
            (false, false) => "invalid",
        }
    }
}

/// Mini-batch size for multi-window training phases (initialization and
/// post-change retraining). Matches the stack the reference results came
/// from; per-sample online training always uses single-window steps.
const TRAIN_BATCH: usize = 32;

/// Deterministic per-member seed derivation (splitmix64 over the master).
pub fn member_seed(master: u64, member: usize) -> u64 {
    let mut z = master ^ ((member as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Majority vote: out-of-distribution iff at least `ceil(beta·M)` members
/// report a loss strictly above their threshold.
pub fn vote_out_of_distribution(losses: &[f64], thresholds: &[f64], beta: f64) -> bool {
    let exceed = losses
        .iter()
        .zip(thresholds)
        .filter(|(l, th)| l > th)
        .count();
    exceed >= (beta * losses.len() as f64).ceil() as usize
}

/// The consecutive-outlier rule, separated out so it can be driven with
/// synthetic flag sequences.
#[derive(Debug, Clone)]
pub struct FlagMachine {
    n_cpd: usize,
    run: usize,
}

impl FlagMachine {
    pub fn new(n_cpd: usize) -> Self {
        FlagMachine { n_cpd, run: 0 }
    }

    /// Current length of the outlier run.
    pub fn run_len(&self) -> usize {
        self.run
    }

    /// Feed the out-of-distribution flag for step `t`. Completing a run of
    /// `n_cpd` emits the change-point `t − n_cpd` and resets the run.
    pub fn advance(&mut self, t: usize, out_of_distribution: bool) -> Option<usize> {
        if !out_of_distribution {
            self.run = 0;
            return None;
        }
        self.run += 1;
        if self.run == self.n_cpd {
            self.run = 0;
            Some(t - self.n_cpd)
        } else {
            None
        }
    }
}

/// Bounded circular buffer of the most recent raw samples, addressed by
/// absolute stream index. This is the only stream history the detector keeps.
#[derive(Debug, Clone)]
struct HistoryRing {
    dims: usize,
    cap: usize,
    buf: Vec<f64>,
    /// Absolute index of the next sample to be pushed.
    next: usize,
    len: usize,
}

impl HistoryRing {
    fn new(dims: usize, cap: usize) -> Self {
        HistoryRing {
            dims,
            cap,
            buf: vec![0.0; cap * dims],
            next: 0,
            len: 0,
        }
    }

    fn push(&mut self, row: &[f64]) {
        let slot = (self.next % self.cap) * self.dims;
        self.buf[slot..slot + self.dims].copy_from_slice(row);
        self.next += 1;
        self.len = (self.len + 1).min(self.cap);
    }

    fn oldest(&self) -> usize {
        self.next - self.len
    }

    fn row(&self, abs: usize) -> Option<&[f64]> {
        if abs >= self.next || abs < self.oldest() {
            return None;
        }
        let slot = (abs % self.cap) * self.dims;
        Some(&self.buf[slot..slot + self.dims])
    }

    /// Copy `[from, to]` (absolute, inclusive) into a contiguous matrix.
    fn slice(&self, from: usize, to: usize) -> Result<Matrix> {
        if from > to || self.row(from).is_none() || self.row(to).is_none() {
            return Err(Error::invalid_input(format!(
                "ring holds [{}, {}), cannot slice [{from}, {to}]",
                self.oldest(),
                self.next
            )));
        }
        let mut m = Matrix::zeros(to - from + 1, self.dims);
        for (k, abs) in (from..=to).enumerate() {
            m.data_mut()[k * self.dims..(k + 1) * self.dims]
                .copy_from_slice(self.row(abs).unwrap());
        }
        Ok(m)
    }
}

/// Per-member running-mean losses; thresholds are derived, never stored, so
/// `threshold / L_avg` is the effective coefficient by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdState {
    pub loss_means: Vec<f64>,
    /// Samples counted into the current state's running means.
    pub n_state: usize,
}

/// Outcome of one detector step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Normal,
    Anomalous,
    ChangePointDetected(usize),
}

/// One buffered out-of-distribution window.
#[derive(Debug, Clone)]
pub struct BufferedOutlier {
    pub end: usize,
    pub window: Matrix,
}

/// Detection result in the shape emitted to disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionReport {
    pub dataset: String,
    pub seed: u64,
    pub n_init: usize,
    pub variant: String,
    pub change_points: Vec<usize>,
    /// One 0/1 flag per classified step, aligned to indices `n_init..n`.
    pub flags: Vec<u8>,
    /// Per-step per-member losses; behind the trace flag.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub losses: Option<Vec<Vec<f64>>>,
}

/// The live detector.
#[derive(Debug, Clone)]
pub struct DetectorState {
    cfg: EnsembleConfig,
    dims: usize,
    models: Vec<TaenetModel>,
    thresholds: ThresholdState,
    ring: HistoryRing,
    buffer: Vec<BufferedOutlier>,
    flags: FlagMachine,
    change_points: Vec<usize>,
    /// Absolute index of the next sample `step` will receive.
    clock: usize,
    grace_remaining: usize,
    sgd: SgdConfig,
    /// Master seed; also drives fresh draws under `reset_on_change`.
    seed: u64,
    /// Peak number of raw windows held at any instant (buffer + retrain batch).
    max_retained_windows: usize,
}

impl DetectorState {
    /// Build the ensemble and train it on a change-point-free prefix
    /// (`cfg.n_init` samples), then set the initial thresholds from the mean
    /// reconstruction loss over the prefix windows.
    pub fn initialize(prefix: &Matrix, cfg: &EnsembleConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if prefix.rows() != cfg.n_init {
            return Err(Error::config(format!(
                "prefix has {} samples but n_init is {}",
                prefix.rows(),
                cfg.n_init
            )));
        }
        let dims = prefix.cols();
        let sgd = SgdConfig::new(cfg.learning_rate)?;

        let mut models = Vec::with_capacity(cfg.ensemble);
        for m in 0..cfg.ensemble {
            models.push(TaenetModel::new(
                cfg.taenet_config(dims, m),
                member_seed(seed, m),
            )?);
        }

        // Prefix windows, built once and shared across members and epochs.
        let net_cfg = cfg.taenet_config(dims, 0);
        let samples: Vec<WindowSample> = (cfg.window - 1..cfg.n_init)
            .map(|t| WindowSample::from_slice(prefix, 0, t, &net_cfg))
            .collect::<Result<_>>()?;

        for model in &mut models {
            model.train_epochs(&samples, cfg.e_init, TRAIN_BATCH, &sgd)?;
        }

        let mut loss_means = Vec::with_capacity(cfg.ensemble);
        for model in &models {
            let mut total = 0.0;
            for sample in &samples {
                total += model.loss(sample)?;
            }
            loss_means.push(total / samples.len() as f64);
        }

        let ring_cap = cfg.n_cpd + 2 * cfg.window + cfg.horizon;
        let mut ring = HistoryRing::new(dims, ring_cap);
        for t in 0..prefix.rows() {
            ring.push(prefix.row(t));
        }

        Ok(DetectorState {
            dims,
            models,
            thresholds: ThresholdState {
                loss_means,
                n_state: samples.len(),
            },
            ring,
            buffer: Vec::new(),
            flags: FlagMachine::new(cfg.n_cpd),
            change_points: Vec::new(),
            clock: cfg.n_init,
            grace_remaining: 0,
            sgd,
            seed,
            max_retained_windows: 0,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.cfg
    }

    pub fn models(&self) -> &[TaenetModel] {
        &self.models
    }

    pub fn change_points(&self) -> &[usize] {
        &self.change_points
    }

    pub fn clock(&self) -> usize {
        self.clock
    }

    pub fn grace_remaining(&self) -> usize {
        self.grace_remaining
    }

    pub fn threshold_state(&self) -> &ThresholdState {
        &self.thresholds
    }

    /// Effective coefficient: `C`, or `grace_mult · C` right after a
    /// change-point.
    pub fn effective_coeff(&self) -> f64 {
        if self.grace_remaining > 0 {
            self.cfg.threshold_coeff * self.cfg.grace_mult
        } else {
            self.cfg.threshold_coeff
        }
    }

    /// Current per-member thresholds `C_eff · L_avg`.
    pub fn thresholds(&self) -> Vec<f64> {
        let c = self.effective_coeff();
        self.thresholds.loss_means.iter().map(|&l| c * l).collect()
    }

    /// Out-of-distribution windows currently awaiting a verdict.
    pub fn buffer(&self) -> &[BufferedOutlier] {
        &self.buffer
    }

    pub fn buffered_windows(&self) -> usize {
        self.buffer.len()
    }

    pub fn max_retained_windows(&self) -> usize {
        self.max_retained_windows
    }

    /// Raw samples the ring can hold; constant for the life of the detector.
    pub fn ring_capacity(&self) -> usize {
        self.ring.cap
    }

    /// Assemble the training/evaluation sample for the window ending at
    /// absolute index `t`, reading from the history ring.
    fn sample_at(&self, t: usize) -> Result<WindowSample> {
        let net_cfg = self.cfg.taenet_config(self.dims, 0);
        let w = self.cfg.window;
        if t + 1 < w {
            return Err(Error::invalid_input(format!(
                "no window ends at index {t} with window length {w}"
            )));
        }
        let start = t + 1 - w;
        // Oldest row needed: AR taps of the earliest in-reach position.
        let mut oldest = start;
        let first_tap_pos = start.max(net_cfg.ar_reach());
        if first_tap_pos <= t {
            oldest = oldest.min(first_tap_pos - self.cfg.horizon - (w - 1));
        }
        let slice = self.ring.slice(oldest, t)?;
        WindowSample::from_slice(&slice, oldest, t, &net_cfg)
    }

    /// Classify the window ending at absolute index `t` without updating any
    /// state. Returns per-member losses and the vote.
    pub fn classify_window_at(&self, t: usize) -> Result<(Vec<f64>, bool)> {
        let sample = self.sample_at(t)?;
        let mut losses = Vec::with_capacity(self.models.len());
        for model in &self.models {
            losses.push(model.loss(&sample)?);
        }
        let out = vote_out_of_distribution(&losses, &self.thresholds(), self.cfg.vote_fraction);
        Ok((losses, out))
    }

    /// Ingest the next observation and run one step of the state machine.
    pub fn step(&mut self, x: &[f64]) -> Result<StepOutcome> {
        let (outcome, _) = self.step_traced(x)?;
        Ok(outcome)
    }

    /// `step` plus the per-member losses that drove the decision.
    pub fn step_traced(&mut self, x: &[f64]) -> Result<(StepOutcome, Vec<f64>)> {
        if x.len() != self.dims {
            return Err(Error::dim(format!(
                "observation has {} dims, detector expects {}",
                x.len(),
                self.dims
            )));
        }
        let t = self.clock;
        self.ring.push(x);
        self.clock += 1;

        let in_grace = self.grace_remaining > 0;
        let sample = self.sample_at(t)?;
        let mut losses = Vec::with_capacity(self.models.len());
        for model in &self.models {
            losses.push(model.loss(&sample)?);
        }
        let out = vote_out_of_distribution(&losses, &self.thresholds(), self.cfg.vote_fraction);

        let emitted = self.flags.advance(t, out);
        let outcome = if !out {
            // Learn the sample, fold its pre-update loss into the running
            // means, and forget any pending outliers.
            for model in &mut self.models {
                for _ in 0..self.cfg.e_train {
                    model.train_step(&sample, &self.sgd)?;
                }
            }
            let n = self.thresholds.n_state as f64;
            for (mean, &pre_loss) in self.thresholds.loss_means.iter_mut().zip(&losses) {
                *mean = (n * *mean + pre_loss) / (n + 1.0);
            }
            self.thresholds.n_state += 1;
            self.buffer.clear();
            StepOutcome::Normal
        } else if let Some(cp) = emitted {
            self.change_points.push(cp);
            let batch_ends: Vec<usize> = (t + 1 - self.cfg.n_cpd..=t).collect();
            self.max_retained_windows = self.max_retained_windows.max(batch_ends.len());
            let batch: Vec<WindowSample> = batch_ends
                .iter()
                .map(|&e| self.sample_at(e))
                .collect::<Result<_>>()?;
            if self.cfg.reset_on_change {
                // Fresh weight draws, deterministic in (seed, emission step).
                for m in 0..self.models.len() {
                    self.models[m] = TaenetModel::new(
                        self.cfg.taenet_config(self.dims, m),
                        member_seed(self.seed ^ (t as u64 + 1), m),
                    )?;
                }
            }
            for model in &mut self.models {
                model.train_epochs(&batch, self.cfg.e_reinit, TRAIN_BATCH, &self.sgd)?;
            }
            for (m, mean) in self.thresholds.loss_means.iter_mut().enumerate() {
                let mut total = 0.0;
                for sample in &batch {
                    total += self.models[m].loss(sample)?;
                }
                *mean = total / batch.len() as f64;
            }
            self.thresholds.n_state = self.cfg.n_cpd;
            self.buffer.clear();
            self.grace_remaining = self.cfg.grace_len;
            StepOutcome::ChangePointDetected(cp)
        } else {
            self.buffer.push(BufferedOutlier {
                end: t,
                window: sample.target.clone(),
            });
            self.max_retained_windows = self.max_retained_windows.max(self.buffer.len());
            StepOutcome::Anomalous
        };

        // A change-point emitted during grace restarts the full grace window.
        if in_grace && !matches!(outcome, StepOutcome::ChangePointDetected(_)) {
            self.grace_remaining -= 1;
        }
        Ok((outcome, losses))
    }
}

/// Run the full pipeline over a (standardized) series: initialize on the
/// prefix, then step over the remainder.
pub fn run(
    series: &crate::data::TimeSeries,
    cfg: &EnsembleConfig,
    seed: u64,
    trace: bool,
) -> Result<DetectionReport> {
    cfg.validate()?;
    let n = series.len();
    if n <= cfg.n_init {
        return Err(Error::invalid_input(format!(
            "series length {n} not greater than n_init {}",
            cfg.n_init
        )));
    }
    let d = series.dims();
    let prefix = Matrix::from_vec(
        cfg.n_init,
        d,
        series.values().data()[..cfg.n_init * d].to_vec(),
    )?;
    let mut state = DetectorState::initialize(&prefix, cfg, seed)?;
    let mut flags = Vec::with_capacity(n - cfg.n_init);
    let mut losses = trace.then(Vec::new);
    for t in cfg.n_init..n {
        let (outcome, step_losses) = state.step_traced(series.row(t))?;
        flags.push(match outcome {
            StepOutcome::Normal => 0,
            _ => 1,
        });
        if let Some(all) = losses.as_mut() {
            all.push(step_losses);
        }
    }
    Ok(DetectionReport {
        dataset: series.name.clone(),
        seed,
        n_init: cfg.n_init,
        variant: cfg.variant_name().to_string(),
        change_points: state.change_points().to_vec(),
        flags,
        losses,
    })
}
