//! Multitask training losses and physics-consistency residuals, each with an
//! analytic gradient that can be checked against central differences.

use crate::error::{Error, Result};
use crate::grid::{mask_as_f64, Grid, ProbMap, WallMask};
use crate::hemodynamics::{FlowWaveform, WssSeries};

/// Probability clamp applied before taking logarithms.
pub const PROB_CLAMP: f64 = 1e-7;
/// Additive smoothing in the soft Dice ratio.
pub const DICE_EPS: f64 = 1e-6;

/// Multitask and physics-term weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_seg: f64,
    pub lambda_risk: f64,
    pub lambda_smooth: f64,
    pub lambda_phys: f64,
    pub lambda_div: f64,
    pub lambda_bc: f64,
    pub lambda_wss: f64,
}

impl Default for LossWeights {
    /// Baseline weights; the physics term is off because no flow data is available.
    fn default() -> Self {
        Self {
            lambda_seg: 1.0,
            lambda_risk: 0.25,
            lambda_smooth: 0.03,
            lambda_phys: 0.0,
            lambda_div: 1.0,
            lambda_bc: 1.0,
            lambda_wss: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_seg,
            self.lambda_risk,
            self.lambda_smooth,
            self.lambda_phys,
            self.lambda_div,
            self.lambda_bc,
            self.lambda_wss,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    Ok(())
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy with predictions clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(pred, target)?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("predictions"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let p = clamp_prob(p);
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`bce`]; zero where the clamp is active.
pub fn bce_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                0.0
            } else {
                (-y / p + (1.0 - y) / (1.0 - p)) / n
            }
        })
        .collect())
}

pub fn bce_map(pred: &ProbMap, target: &WallMask) -> Result<f64> {
    pred.grid().ensure_same_shape(target)?;
    bce(pred.data(), &mask_as_f64(target))
}

/// Soft Dice loss `1 − (2Σp·m + ε)/(Σp + Σm + ε)` without thresholding.
pub fn dice_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(pred, target)?;
    let (inter, sp, sm) = dice_sums(pred, target);
    Ok(1.0 - (2.0 * inter + DICE_EPS) / (sp + sm + DICE_EPS))
}

fn dice_sums(pred: &[f64], target: &[f64]) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut sm = 0.0;
    for (&p, &m) in pred.iter().zip(target) {
        inter += p * m;
        sp += p;
        sm += m;
    }
    (inter, sp, sm)
}

pub fn dice_loss_grad(pred: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    check_len(pred, target)?;
    let (inter, sp, sm) = dice_sums(pred, target);
    let num = 2.0 * inter + DICE_EPS;
    let den = sp + sm + DICE_EPS;
    Ok(target
        .iter()
        .map(|&m| -(2.0 * m * den - num) / (den * den))
        .collect())
}

pub fn dice_loss_map(pred: &ProbMap, target: &WallMask) -> Result<f64> {
    pred.grid().ensure_same_shape(target)?;
    dice_loss(pred.data(), &mask_as_f64(target))
}

/// `bce + dice_loss` on a probability map.
pub fn seg_loss(pred: &ProbMap, target: &WallMask) -> Result<f64> {
    Ok(bce_map(pred, target)? + dice_loss_map(pred, target)?)
}

/// Result of a masked risk loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskedLoss {
    pub value: f64,
    /// Number of entries that contributed.
    pub labelled: usize,
}

impl MaskedLoss {
    /// True when no entry carried a label; `value` is then 0.
    pub fn no_labels(&self) -> bool {
        self.labelled == 0
    }
}

/// Mean BCE over entries whose availability flag is set.
pub fn risk_loss_masked(preds: &[f64], labels: &[f64], avail: &[bool]) -> Result<MaskedLoss> {
    check_len(preds, labels)?;
    if avail.len() != preds.len() {
        return Err(Error::LengthMismatch {
            expected: preds.len(),
            found: avail.len(),
        });
    }
    let mut sum = 0.0;
    let mut n = 0;
    for ((&p, &y), &a) in preds.iter().zip(labels).zip(avail) {
        if a {
            let p = clamp_prob(p);
            sum += -y * p.ln() - (1.0 - y) * (1.0 - p).ln();
            n += 1;
        }
    }
    Ok(MaskedLoss {
        value: if n == 0 { 0.0 } else { sum / n as f64 },
        labelled: n,
    })
}

/// How the smoothness penalty reduces the absolute differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothnessNorm {
    /// Plain L1 sums over both difference fields.
    #[default]
    Sum,
    /// Mean of each difference field, then summed.
    Mean,
}

fn check_smooth_shape(h: usize, w: usize) -> Result<()> {
    if h < 2 || w < 2 {
        return Err(Error::TooSmall {
            min: 2,
            height: h,
            width: w,
        });
    }
    Ok(())
}

/// `‖∇ₓp‖₁ + ‖∇ᵧp‖₁` with forward differences.
pub fn smoothness_loss(pred: &Grid<f64>, norm: SmoothnessNorm) -> Result<f64> {
    let (h, w) = pred.shape();
    check_smooth_shape(h, w)?;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = *pred.get(y, x);
            if x + 1 < w {
                sx += (pred.get(y, x + 1) - v).abs();
            }
            if y + 1 < h {
                sy += (pred.get(y + 1, x) - v).abs();
            }
        }
    }
    Ok(match norm {
        SmoothnessNorm::Sum => sx + sy,
        SmoothnessNorm::Mean => sx / (h * (w - 1)) as f64 + sy / ((h - 1) * w) as f64,
    })
}

/// Subgradient of [`smoothness_loss`], using `sign(0) = 0` at kinks.
pub fn smoothness_grad(pred: &Grid<f64>, norm: SmoothnessNorm) -> Result<Grid<f64>> {
    let (h, w) = pred.shape();
    check_smooth_shape(h, w)?;
    let (cx, cy) = match norm {
        SmoothnessNorm::Sum => (1.0, 1.0),
        SmoothnessNorm::Mean => (1.0 / (h * (w - 1)) as f64, 1.0 / ((h - 1) * w) as f64),
    };
    let sign = |d: f64| if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
    let mut g = Grid::filled(h, w, 0.0);
    for y in 0..h {
        for x in 0..w {
            let v = *pred.get(y, x);
            if x + 1 < w {
                let s = cx * sign(pred.get(y, x + 1) - v);
                g.set(y, x + 1, g.get(y, x + 1) + s);
                g.set(y, x, g.get(y, x) - s);
            }
            if y + 1 < h {
                let s = cy * sign(pred.get(y + 1, x) - v);
                g.set(y + 1, x, g.get(y + 1, x) + s);
                g.set(y, x, g.get(y, x) - s);
            }
        }
    }
    Ok(g)
}

/// Planar velocity field on a uniform grid; `u` along x (columns), `v` along y (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteVelocityField {
    u: Grid<f64>,
    v: Grid<f64>,
    spacing: f64,
}

impl DiscreteVelocityField {
    pub fn new(u: Grid<f64>, v: Grid<f64>, spacing: f64) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(Error::GridMismatch(u.shape(), v.shape()));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::invalid(format!("grid spacing must be positive, got {spacing}")));
        }
        Ok(Self { u, v, spacing })
    }

    /// Samples `(u, v) = f(x, y)` at `x = col·h`, `y = row·h`.
    pub fn sample(height: usize, width: usize, spacing: f64, f: impl Fn(f64, f64) -> (f64, f64)) -> Result<Self> {
        let u = Grid::from_fn(height, width, |r, c| f(c as f64 * spacing, r as f64 * spacing).0);
        let v = Grid::from_fn(height, width, |r, c| f(c as f64 * spacing, r as f64 * spacing).1);
        Self::new(u, v, spacing)
    }

    pub fn u(&self) -> &Grid<f64> {
        &self.u
    }

    pub fn v(&self) -> &Grid<f64> {
        &self.v
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Central-difference divergence on interior cells, row-major.
    pub fn interior_divergence(&self) -> Vec<f64> {
        let (h, w) = self.u.shape();
        let mut out = Vec::new();
        if h < 3 || w < 3 {
            return out;
        }
        let inv = 1.0 / (2.0 * self.spacing);
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let dudx = (self.u.get(r, c + 1) - self.u.get(r, c - 1)) * inv;
                let dvdy = (self.v.get(r + 1, c) - self.v.get(r - 1, c)) * inv;
                out.push(dudx + dvdy);
            }
        }
        out
    }

    /// `Σ (∇·u)² h²` over interior cells.
    pub fn divergence_penalty(&self) -> f64 {
        let area = self.spacing * self.spacing;
        self.interior_divergence().iter().map(|d| d * d * area).sum()
    }

    /// Gradient of [`Self::divergence_penalty`] with respect to `(u, v)`.
    pub fn divergence_penalty_grad(&self) -> (Grid<f64>, Grid<f64>) {
        let (h, w) = self.u.shape();
        let mut gu = Grid::filled(h, w, 0.0);
        let mut gv = Grid::filled(h, w, 0.0);
        if h < 3 || w < 3 {
            return (gu, gv);
        }
        // d/du of h²·div² = 2·div·h²·(±1/(2h)) = ±div·h
        let divs = self.interior_divergence();
        let mut k = 0;
        for r in 1..h - 1 {
            for c in 1..w - 1 {
                let s = divs[k] * self.spacing;
                k += 1;
                gu.set(r, c + 1, gu.get(r, c + 1) + s);
                gu.set(r, c - 1, gu.get(r, c - 1) - s);
                gv.set(r + 1, c, gv.get(r + 1, c) + s);
                gv.set(r - 1, c, gv.get(r - 1, c) - s);
            }
        }
        (gu, gv)
    }
}

/// Left-rectangle weights `Δtₖ = tₖ₊₁ − tₖ`, last sample weight 0.
fn rectangle_weights(t: &[f64]) -> Vec<f64> {
    let mut w: Vec<f64> = t.windows(2).map(|p| p[1] - p[0]).collect();
    w.push(0.0);
    w
}

fn squared_mismatch(t: &[f64], a: &[f64], b: &[f64]) -> f64 {
    rectangle_weights(t)
        .iter()
        .zip(a.iter().zip(b))
        .map(|(dt, (a, b))| (a - b).powi(2) * dt)
        .sum()
}

fn squared_mismatch_grad(t: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    rectangle_weights(t)
        .iter()
        .zip(a.iter().zip(b))
        .map(|(dt, (a, b))| 2.0 * (a - b) * dt)
        .collect()
}

/// `Σ (Q̂(tₖ) − Q(tₖ))² Δtₖ`
pub fn flow_mismatch(q_hat: &FlowWaveform, q_ref: &FlowWaveform) -> Result<f64> {
    if q_hat.t() != q_ref.t() {
        return Err(Error::TimeGridMismatch);
    }
    Ok(squared_mismatch(q_hat.t(), q_hat.q(), q_ref.q()))
}

/// Gradient of [`flow_mismatch`] with respect to the `Q̂` samples.
pub fn flow_mismatch_grad(q_hat: &FlowWaveform, q_ref: &FlowWaveform) -> Result<Vec<f64>> {
    if q_hat.t() != q_ref.t() {
        return Err(Error::TimeGridMismatch);
    }
    Ok(squared_mismatch_grad(q_hat.t(), q_hat.q(), q_ref.q()))
}

/// `Σ ‖τ̂(tₖ) − τ_ref(tₖ)‖ Δtₖ`
pub fn wss_mismatch(tau_hat: &WssSeries, tau_ref: &WssSeries) -> Result<f64> {
    if tau_hat.t() != tau_ref.t() {
        return Err(Error::TimeGridMismatch);
    }
    if tau_hat.components() != tau_ref.components() {
        return Err(Error::invalid(format!(
            "WSS component counts differ: {} vs {}",
            tau_hat.components(),
            tau_ref.components()
        )));
    }
    Ok(rectangle_weights(tau_hat.t())
        .iter()
        .zip(tau_hat.tau().iter().zip(tau_ref.tau()))
        .map(|(dt, (a, b))| {
            let d2: f64 = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum();
            d2.sqrt() * dt
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysLoss {
    pub total: f64,
    pub divergence: f64,
    pub boundary_flow: f64,
    pub wss: f64,
}

/// Weighted sum of the incompressibility, inlet-flow and WSS consistency terms.
pub fn phys_loss(
    field: &DiscreteVelocityField,
    q_hat: &FlowWaveform,
    q_doppler: &FlowWaveform,
    tau_hat: &WssSeries,
    tau_cfd: &WssSeries,
    w: &LossWeights,
) -> Result<PhysLoss> {
    w.validate()?;
    let divergence = field.divergence_penalty();
    let boundary_flow = flow_mismatch(q_hat, q_doppler)?;
    let wss = wss_mismatch(tau_hat, tau_cfd)?;
    Ok(PhysLoss {
        total: w.lambda_div * divergence + w.lambda_bc * boundary_flow + w.lambda_wss * wss,
        divergence,
        boundary_flow,
        wss,
    })
}

/// The four per-task loss values entering the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossComponents {
    pub seg: f64,
    pub risk: f64,
    pub smooth: f64,
    pub phys: f64,
}

pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    if [c.seg, c.risk, c.smooth, c.phys].iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("loss components"));
    }
    w.validate()?;
    Ok(w.lambda_seg * c.seg + w.lambda_risk * c.risk + w.lambda_smooth * c.smooth + w.lambda_phys * c.phys)
}

/// A scalar loss over a flat parameter vector with a closed-form gradient.
pub trait DifferentiableLoss {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Largest relative discrepancy between the analytic gradient and a central
/// difference with the given `step`.
///
/// The denominator `max(|analytic|, |numeric|, floor)` is floored at the
/// resolution of the difference quotient, `1e5·ε·max(|f|, 1)/step`, so that
/// exactly-zero gradient entries are compared against rounding noise rather
/// than divided by it.
pub fn numeric_gradient_check(loss: &dyn DifferentiableLoss, point: &[f64], step: f64) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    if point.len() != loss.dim() {
        return Err(Error::LengthMismatch {
            expected: loss.dim(),
            found: point.len(),
        });
    }
    let analytic = loss.gradient(point);
    let f0 = loss.value(point);
    if !f0.is_finite() {
        return Err(Error::NonFinite("loss value"));
    }
    let floor = (1e5 * f64::EPSILON * f0.abs().max(1.0) / step).max(1e-8);
    let mut x = point.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = loss.value(&x);
        x[i] = orig - step;
        let fm = loss.value(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        if !(numeric.is_finite() && analytic[i].is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        let scale = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    Ok(worst)
}

/// [`bce`] as a function of the predictions.
pub struct BceKernel {
    pub target: Vec<f64>,
}

impl DifferentiableLoss for BceKernel {
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        bce(x, &self.target).unwrap_or(f64::NAN)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        bce_grad(x, &self.target).unwrap_or_default()
    }
}

/// [`dice_loss`] as a function of the predictions.
pub struct DiceKernel {
    pub target: Vec<f64>,
}

impl DifferentiableLoss for DiceKernel {
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dice_loss(x, &self.target).unwrap_or(f64::NAN)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        dice_loss_grad(x, &self.target).unwrap_or_default()
    }
}

/// [`smoothness_loss`] over a row-major `height × width` map.
pub struct SmoothnessKernel {
    pub height: usize,
    pub width: usize,
    pub norm: SmoothnessNorm,
}

impl SmoothnessKernel {
    fn grid(&self, x: &[f64]) -> Grid<f64> {
        Grid::from_vec(self.height, self.width, x.to_vec()).expect("dimension checked by caller")
    }
}

impl DifferentiableLoss for SmoothnessKernel {
    fn dim(&self) -> usize {
        self.height * self.width
    }
    fn value(&self, x: &[f64]) -> f64 {
        smoothness_loss(&self.grid(x), self.norm).unwrap_or(f64::NAN)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        smoothness_grad(&self.grid(x), self.norm)
            .map(Grid::into_vec)
            .unwrap_or_default()
    }
}

/// Divergence penalty over `[u..., v...]`, each row-major `height × width`.
pub struct DivergenceKernel {
    pub height: usize,
    pub width: usize,
    pub spacing: f64,
}

impl DivergenceKernel {
    fn field(&self, x: &[f64]) -> DiscreteVelocityField {
        let n = self.height * self.width;
        let u = Grid::from_vec(self.height, self.width, x[..n].to_vec()).expect("u block");
        let v = Grid::from_vec(self.height, self.width, x[n..].to_vec()).expect("v block");
        DiscreteVelocityField::new(u, v, self.spacing).expect("valid spacing")
    }
}

impl DifferentiableLoss for DivergenceKernel {
    fn dim(&self) -> usize {
        2 * self.height * self.width
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.field(x).divergence_penalty()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (gu, gv) = self.field(x).divergence_penalty_grad();
        let mut g = gu.into_vec();
        g.extend(gv.into_vec());
        g
    }
}

/// Inlet-flow mismatch as a function of the predicted flow samples. Works on
/// raw samples since single-sample perturbations break waveform periodicity.
pub struct FlowMismatchKernel {
    pub reference: FlowWaveform,
}

impl DifferentiableLoss for FlowMismatchKernel {
    fn dim(&self) -> usize {
        self.reference.t().len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        squared_mismatch(self.reference.t(), x, self.reference.q())
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        squared_mismatch_grad(self.reference.t(), x, self.reference.q())
    }
}
