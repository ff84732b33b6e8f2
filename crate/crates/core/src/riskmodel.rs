//! Clinical risk head: a one-hidden-layer perceptron with inverted dropout on
//! the hidden units, trained with AdamW under a warm-up + cosine schedule.
//!
//! Dropout is applied only in stochastic mode. Kept units are scaled by
//! `1/(1-p)` there, so the deterministic pass needs no rescaling and its
//! hidden activations equal the expectation of the stochastic ones.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::losses::risk_loss_masked;
use crate::metrics::roc_auc;

/// Clinical inputs in model order.
pub const FEATURE_NAMES: [&str; 5] = ["age", "sex", "hypertension", "diabetes", "bmi"];
/// Which inputs are z-scored; the rest are binary indicators passed through.
pub const CONTINUOUS_FEATURES: [bool; 5] = [true, false, false, false, true];
pub const INPUT_WIDTH: usize = 5;

pub type Features = [f64; INPUT_WIDTH];

const MODEL_HEADER: &str = "carotid-risk-head v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    /// Linear hidden layer; makes the head a plain logistic model for tests.
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// How a forward pass treats dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    Deterministic,
    /// Dropout active, mask drawn from a generator seeded with `seed`.
    Stochastic { seed: u64 },
}

/// `5 → hidden → 1` perceptron with sigmoid output.
///
/// Parameters are stored flat as `[W₁ (hidden×5, row-major), b₁, w₂, b₂]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMlp {
    hidden: usize,
    dropout: f64,
    activation: Activation,
    params: Vec<f64>,
}

impl DropoutMlp {
    /// Glorot-uniform weights from a seeded generator, zero biases.
    pub fn init(hidden: usize, dropout: f64, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::invalid("hidden width must be at least 1"));
        }
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::BadDropout(dropout));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Self::param_count(hidden)];
        let b1 = (6.0 / (INPUT_WIDTH + hidden) as f64).sqrt();
        for w in &mut params[..hidden * INPUT_WIDTH] {
            *w = rng.gen_range(-b1..=b1);
        }
        let b2 = (6.0 / (hidden + 1) as f64).sqrt();
        let off = hidden * INPUT_WIDTH + hidden;
        for w in &mut params[off..off + hidden] {
            *w = rng.gen_range(-b2..=b2);
        }
        Ok(Self {
            hidden,
            dropout,
            activation: Activation::Relu,
            params,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn param_count(hidden: usize) -> usize {
        hidden * INPUT_WIDTH + 2 * hidden + 1
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Glorot bounds for the input and output weight blocks.
    pub fn init_bounds(&self) -> (f64, f64) {
        (
            (6.0 / (INPUT_WIDTH + self.hidden) as f64).sqrt(),
            (6.0 / (self.hidden + 1) as f64).sqrt(),
        )
    }

    fn w1(&self, j: usize) -> &[f64] {
        &self.params[j * INPUT_WIDTH..(j + 1) * INPUT_WIDTH]
    }

    fn b1(&self, j: usize) -> f64 {
        self.params[self.hidden * INPUT_WIDTH + j]
    }

    fn w2(&self, j: usize) -> f64 {
        self.params[self.hidden * INPUT_WIDTH + self.hidden + j]
    }

    pub fn output_bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    /// Hidden pre-activations `W₁x + b₁`.
    pub fn hidden_preactivation(&self, x: &Features) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| self.w1(j).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1(j))
            .collect()
    }

    /// Hidden outputs after activation and (optionally) an inverted-dropout mask.
    pub fn hidden_output(&self, x: &Features, keep: Option<&[bool]>) -> Vec<f64> {
        let scale = 1.0 / (1.0 - self.dropout);
        self.hidden_preactivation(x)
            .into_iter()
            .enumerate()
            .map(|(j, z)| {
                let a = self.activation.apply(z);
                match keep {
                    None => a,
                    Some(k) if k[j] => a * scale,
                    Some(_) => 0.0,
                }
            })
            .collect()
    }

    fn output_from_hidden(&self, h: &[f64]) -> f64 {
        let z: f64 = h.iter().enumerate().map(|(j, v)| self.w2(j) * v).sum::<f64>() + self.output_bias();
        sigmoid(z)
    }

    /// Forward pass with an explicit keep mask over hidden units.
    pub fn forward_with_mask(&self, x: &Features, keep: &[bool]) -> f64 {
        self.output_from_hidden(&self.hidden_output(x, Some(keep)))
    }

    pub fn forward(&self, x: &Features, mode: ForwardMode) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok(match mode {
            ForwardMode::Deterministic => self.output_from_hidden(&self.hidden_output(x, None)),
            ForwardMode::Stochastic { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                self.forward_rng(x, &mut rng)
            }
        })
    }

    /// One dropout-active pass drawing the mask from `rng`.
    pub fn forward_rng<R: Rng>(&self, x: &Features, rng: &mut R) -> f64 {
        let keep = self.draw_mask(rng);
        self.forward_with_mask(x, &keep)
    }

    pub fn draw_mask<R: Rng>(&self, rng: &mut R) -> Vec<bool> {
        (0..self.hidden)
            .map(|_| self.dropout == 0.0 || rng.gen::<f64>() >= self.dropout)
            .collect()
    }

    /// `K` dropout-active passes; pass `k` uses its own generator
    /// (`seed`, stream `k`), so results do not depend on evaluation order.
    pub fn mc_predict(&self, x: &Features, passes: usize, seed: u64) -> Result<Vec<f64>> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        Ok((0..passes)
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                self.forward_rng(x, &mut rng)
            })
            .collect())
    }

    /// Gradient of `-y·ln p̂ − (1−y)·ln(1−p̂)` for one sample, accumulated into `grad`.
    fn accumulate_grad(&self, x: &Features, y: f64, keep: Option<&[bool]>, weight: f64, grad: &mut [f64]) {
        let z1 = self.hidden_preactivation(x);
        let h = self.hidden_output(x, keep);
        let p = self.output_from_hidden(&h);
        let dz2 = (p - y) * weight;
        let scale = 1.0 / (1.0 - self.dropout);
        let hid = self.hidden;
        let off_b1 = hid * INPUT_WIDTH;
        let off_w2 = off_b1 + hid;
        for j in 0..hid {
            grad[off_w2 + j] += dz2 * h[j];
            let mask_factor = match keep {
                None => 1.0,
                Some(k) if k[j] => scale,
                Some(_) => 0.0,
            };
            let dz1 = dz2 * self.w2(j) * mask_factor * self.activation.derivative(z1[j]);
            if dz1 == 0.0 {
                continue;
            }
            for (i, xi) in x.iter().enumerate() {
                grad[j * INPUT_WIDTH + i] += dz1 * xi;
            }
            grad[off_b1 + j] += dz1;
        }
        grad[off_w2 + hid] += dz2;
    }

    /// Plain-text serialization with a version header.
    pub fn to_text(&self, scaler: &FeatureScaler) -> String {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_HEADER}");
        let _ = writeln!(s, "hidden={}", self.hidden);
        let _ = writeln!(s, "dropout={}", self.dropout);
        let _ = writeln!(s, "activation={}", self.activation.name());
        let _ = writeln!(s, "feature_mean={}", join(&scaler.mean));
        let _ = writeln!(s, "feature_std={}", join(&scaler.std));
        let _ = writeln!(s, "output_bias={}", self.output_bias());
        let _ = writeln!(s, "matrix w1 {} {}", self.hidden, INPUT_WIDTH);
        for j in 0..self.hidden {
            let _ = writeln!(s, "{}", join(self.w1(j)));
        }
        let off = self.hidden * INPUT_WIDTH;
        let _ = writeln!(s, "matrix b1 1 {}", self.hidden);
        let _ = writeln!(s, "{}", join(&self.params[off..off + self.hidden]));
        let _ = writeln!(s, "matrix w2 1 {}", self.hidden);
        let _ = writeln!(s, "{}", join(&self.params[off + self.hidden..off + 2 * self.hidden]));
        s
    }

    pub fn from_text(text: &str) -> Result<(Self, FeatureScaler)> {
        let bad = |line: usize, reason: &str| Error::MalformedLine {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == MODEL_HEADER => {}
            Some((i, _)) => return Err(bad(i + 1, "missing or unsupported model header")),
            None => return Err(Error::EmptyInput("model file")),
        }
        let mut hidden = None;
        let mut dropout = None;
        let mut activation = Activation::Relu;
        let mut mean = None;
        let mut std = None;
        let mut bias = None;
        let mut blocks: Vec<(String, Vec<f64>)> = Vec::new();
        let parse_nums = |line: usize, s: &str| -> Result<Vec<f64>> {
            s.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(line, "non-numeric value")))
                .collect()
        };
        while let Some((i, line)) = lines.next() {
            let line_no = i + 1;
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("matrix ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(bad(line_no, "matrix header needs name, rows, cols"));
                }
                let rows: usize = parts[1].parse().map_err(|_| bad(line_no, "bad row count"))?;
                let cols: usize = parts[2].parse().map_err(|_| bad(line_no, "bad column count"))?;
                let mut data = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (j, row) = lines.next().ok_or_else(|| bad(line_no, "truncated matrix"))?;
                    let vals = parse_nums(j + 1, row)?;
                    if vals.len() != cols {
                        return Err(bad(j + 1, "wrong number of matrix columns"));
                    }
                    data.extend(vals);
                }
                blocks.push((parts[0].to_string(), data));
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line_no, "expected key=value"))?;
            match k {
                "hidden" => hidden = Some(v.parse::<usize>().map_err(|_| bad(line_no, "bad hidden width"))?),
                "dropout" => dropout = Some(v.parse::<f64>().map_err(|_| bad(line_no, "bad dropout"))?),
                "activation" => {
                    activation = match v {
                        "relu" => Activation::Relu,
                        "identity" => Activation::Identity,
                        _ => return Err(bad(line_no, "unknown activation")),
                    }
                }
                "feature_mean" => mean = Some(parse_nums(line_no, v)?),
                "feature_std" => std = Some(parse_nums(line_no, v)?),
                "output_bias" => bias = Some(v.parse::<f64>().map_err(|_| bad(line_no, "bad bias"))?),
                _ => return Err(bad(line_no, "unknown key")),
            }
        }
        let missing = |what: &str| Error::invalid(format!("model file lacks {what}"));
        let hidden = hidden.ok_or_else(|| missing("hidden"))?;
        let dropout = dropout.ok_or_else(|| missing("dropout"))?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(Error::BadDropout(dropout));
        }
        let block = |name: &str, len: usize| -> Result<Vec<f64>> {
            let (_, data) = blocks
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| missing(name))?;
            if data.len() != len {
                return Err(Error::invalid(format!("matrix {name} has wrong size")));
            }
            Ok(data.clone())
        };
        let mut params = block("w1", hidden * INPUT_WIDTH)?;
        params.extend(block("b1", hidden)?);
        params.extend(block("w2", hidden)?);
        params.push(bias.ok_or_else(|| missing("output_bias"))?);
        let to_arr = |v: Option<Vec<f64>>, what: &str| -> Result<Features> {
            let v = v.ok_or_else(|| missing(what))?;
            v.try_into().map_err(|_| Error::invalid(format!("{what} needs 5 values")))
        };
        let scaler = FeatureScaler {
            mean: to_arr(mean, "feature_mean")?,
            std: to_arr(std, "feature_std")?,
        };
        Ok((
            Self {
                hidden,
                dropout,
                activation,
                params,
            },
            scaler,
        ))
    }
}

/// Z-score normalization of the continuous clinical inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub mean: Features,
    pub std: Features,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        Self {
            mean: [0.0; INPUT_WIDTH],
            std: [1.0; INPUT_WIDTH],
        }
    }

    /// Population statistics of the continuous columns; binary columns and
    /// zero-variance columns keep mean 0 / std 1.
    pub fn fit(rows: &[Features]) -> Self {
        let mut s = Self::identity();
        if rows.is_empty() {
            return s;
        }
        let n = rows.len() as f64;
        for i in 0..INPUT_WIDTH {
            if !CONTINUOUS_FEATURES[i] {
                continue;
            }
            let mean = rows.iter().map(|r| r[i]).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / n;
            s.mean[i] = mean;
            s.std[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        s
    }

    pub fn transform(&self, x: &Features) -> Features {
        let mut out = *x;
        for i in 0..INPUT_WIDTH {
            out[i] = (x[i] - self.mean[i]) / self.std[i];
        }
        out
    }
}

/// AdamW hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize, config: AdamWConfig) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update: decoupled decay `θ ← θ(1 − lr·wd)` followed by the
/// bias-corrected adaptive step.
pub fn adamw_step(state: &mut OptimizerState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != state.m.len() || grads.len() != params.len() {
        return Err(Error::LengthMismatch {
            expected: state.m.len(),
            found: if params.len() != state.m.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
    }
    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let decay = 1.0 - lr * c.weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] *= decay;
        params[i] -= lr * m_hat / (v_hat.sqrt() + c.eps);
    }
    Ok(())
}

/// Linear warm-up from `min_lr` to `base_lr`, then cosine decay back to `min_lr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
}

impl LrSchedule {
    pub fn new(base_lr: f64, min_lr: f64, warmup_epochs: usize, total_epochs: usize) -> Result<Self> {
        if !(min_lr > 0.0 && min_lr <= base_lr) {
            return Err(Error::invalid("need 0 < min_lr <= base_lr"));
        }
        if warmup_epochs > total_epochs {
            return Err(Error::invalid("warmup_epochs must not exceed total_epochs"));
        }
        Ok(Self {
            base_lr,
            min_lr,
            warmup_epochs,
            total_epochs,
        })
    }

    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        Self::new(cfg.base_lr, cfg.min_lr, cfg.warmup_epochs, cfg.total_epochs)
    }

    /// Learning rate at (possibly fractional) epoch `epoch ∈ [0, total_epochs]`.
    pub fn lr_at(&self, epoch: f64) -> Result<f64> {
        if !(0.0..=self.total_epochs as f64).contains(&epoch) {
            return Err(Error::OutOfRange(format!(
                "epoch {epoch} outside [0, {}]",
                self.total_epochs
            )));
        }
        let warm = self.warmup_epochs as f64;
        let span = self.base_lr - self.min_lr;
        if epoch == warm {
            return Ok(self.base_lr);
        }
        if epoch < warm {
            return Ok(self.min_lr + span * epoch / warm);
        }
        let progress = (epoch - warm) / (self.total_epochs as f64 - warm);
        Ok(self.min_lr + 0.5 * span * (1.0 + (PI * progress).cos()))
    }
}

pub fn lr_at(epoch: f64, schedule: &LrSchedule) -> Result<f64> {
    schedule.lr_at(epoch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Deterministic masked BCE over the training set after the epoch.
    pub train_loss: f64,
    pub train_auc: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let mut s = String::from("epoch,lr,train_loss,train_auc,val_loss,val_auc\n");
        for r in &self.epochs {
            let _ = writeln!(
                s,
                "{},{:.6e},{:.6},{:.6},{},{}",
                r.epoch,
                r.lr,
                r.train_loss,
                r.train_auc,
                opt(r.val_loss),
                opt(r.val_auc)
            );
        }
        s
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.epochs.last()
    }
}

/// A trained head together with the normalization fitted on its training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRiskHead {
    pub model: DropoutMlp,
    pub scaler: FeatureScaler,
}

impl TrainedRiskHead {
    pub fn predict(&self, x: &Features) -> Result<f64> {
        self.model.forward(&self.scaler.transform(x), ForwardMode::Deterministic)
    }

    pub fn mc_predict(&self, x: &Features, passes: usize, seed: u64) -> Result<Vec<f64>> {
        self.model.mc_predict(&self.scaler.transform(x), passes, seed)
    }

    pub fn to_text(&self) -> String {
        self.model.to_text(&self.scaler)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (model, scaler) = DropoutMlp::from_text(text)?;
        Ok(Self { model, scaler })
    }
}

/// Labelled evaluation set for per-epoch validation.
#[derive(Debug, Clone, Copy)]
pub struct ValidationSet<'a> {
    pub features: &'a [Features],
    pub labels: &'a [u8],
}

/// Training options beyond [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainOptions {
    pub activation: Activation,
    /// Fit and apply the z-score scaler.
    pub normalize: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            activation: Activation::Relu,
            normalize: true,
        }
    }
}

fn masked_eval(model: &DropoutMlp, x: &[Features], labels: &[f64], avail: &[bool]) -> Result<(f64, f64)> {
    let preds: Vec<f64> = x
        .iter()
        .map(|r| model.forward(r, ForwardMode::Deterministic))
        .collect::<Result<_>>()?;
    let loss = risk_loss_masked(&preds, labels, avail)?.value;
    let (s, l): (Vec<f64>, Vec<u8>) = preds
        .iter()
        .zip(labels)
        .zip(avail)
        .filter(|(_, &a)| a)
        .map(|((&p, &y), _)| (p, y as u8))
        .unzip();
    Ok((loss, roc_auc(&s, &l)?))
}

/// Minibatch training of the risk head on rows with `avail` set.
///
/// Batches follow a seeded shuffle of all rows; batches without any labelled
/// row are skipped. Returns the model and one history record per epoch.
pub fn train_risk_head(
    features: &[Features],
    labels: &[u8],
    avail: &[bool],
    cfg: &RunConfig,
    validation: Option<ValidationSet<'_>>,
    opts: TrainOptions,
) -> Result<(TrainedRiskHead, TrainingHistory)> {
    cfg.validate()?;
    let n = features.len();
    if labels.len() != n || avail.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: if labels.len() != n { labels.len() } else { avail.len() },
        });
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("features"));
    }
    let labelled: Vec<u8> = labels.iter().zip(avail).filter(|(_, &a)| a).map(|(&l, _)| l).collect();
    if labelled.is_empty() {
        return Err(Error::EmptyInput("no labelled training rows"));
    }
    if labelled.iter().any(|&l| l > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    if labelled.iter().all(|&l| l == labelled[0]) {
        return Err(Error::OneClassOnly);
    }

    let scaler = if opts.normalize {
        FeatureScaler::fit(features)
    } else {
        FeatureScaler::identity()
    };
    let x: Vec<Features> = features.iter().map(|r| scaler.transform(r)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
    let val = validation.map(|v| {
        let vx: Vec<Features> = v.features.iter().map(|r| scaler.transform(r)).collect();
        let vy: Vec<f64> = v.labels.iter().map(|&l| l as f64).collect();
        (vx, vy, vec![true; v.labels.len()])
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = DropoutMlp::init(cfg.hidden_width, cfg.dropout_rate, rng.gen())?
        .with_activation(opts.activation);
    let schedule = LrSchedule::from_config(cfg)?;
    let mut opt = OptimizerState::new(
        model.params.len(),
        AdamWConfig {
            beta1: cfg.adam_beta1,
            beta2: cfg.adam_beta2,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
        },
    );
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut history = TrainingHistory::default();

    for epoch in 1..=cfg.total_epochs {
        let lr = schedule.lr_at(epoch as f64)?;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let rows: Vec<usize> = batch.iter().copied().filter(|&i| avail[i]).collect();
            if rows.is_empty() {
                continue;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let weight = 1.0 / rows.len() as f64;
            for &i in &rows {
                let keep = model.draw_mask(&mut rng);
                model.accumulate_grad(&x[i], y[i], Some(&keep), weight, &mut grad);
            }
            adamw_step(&mut opt, &mut model.params, &grad, lr)?;
        }
        let (train_loss, train_auc) = masked_eval(&model, &x, &y, avail)?;
        let (val_loss, val_auc) = match &val {
            Some((vx, vy, va)) => match masked_eval(&model, vx, vy, va) {
                Ok((l, a)) => (Some(l), Some(a)),
                Err(Error::OneClassOnly) => (Some(risk_loss_masked(
                    &vx.iter().map(|r| model.forward(r, ForwardMode::Deterministic)).collect::<Result<Vec<_>>>()?,
                    vy,
                    va,
                )?.value), None),
                Err(e) => return Err(e),
            },
            None => (None, None),
        };
        history.epochs.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            train_auc,
            val_loss,
            val_auc,
        });
    }
    Ok((TrainedRiskHead { model, scaler }, history))
}

/// Full-data gradient of the mean BCE in deterministic mode; exposed for
/// gradient verification of the backward pass.
pub fn deterministic_loss_grad(model: &DropoutMlp, x: &[Features], y: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; model.params.len()];
    let w = 1.0 / x.len() as f64;
    for (xi, &yi) in x.iter().zip(y) {
        model.accumulate_grad(xi, yi, None, w, &mut grad);
    }
    grad
}
