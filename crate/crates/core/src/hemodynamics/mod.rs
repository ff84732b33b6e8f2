//! Blood rheology, wall shear stress and the shear-based biomarkers
//! TAWSS, OSI and RRT.
//!
//! Analytic flows assume a rigid straight tube of radius `R` with Newtonian
//! viscosity `μ`. The quasi-steady model is Poiseuille flow at every instant,
//! `τ(t) = 4μQ(t)/(πR³)`. The Womersley model decomposes `Q(t)` into
//! harmonics `Qₙ` and applies the exact oscillatory-flow transfer function
//!
//! ```text
//! τₙ = Qₙ · μ/(πR³) · ΛJ₁(Λ) / (2J₁(Λ)/Λ − J₀(Λ)),   Λ = αₙ·i^{3/2}
//! ```
//!
//! whose `αₙ → 0` limit is the Poiseuille factor 4.

pub mod bessel;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Upper bound on the per-harmonic Womersley number accepted by [`womersley_wss`].
pub const MAX_WOMERSLEY_ALPHA: f64 = 50.0;

/// Carreau–Yasuda shear-thinning law
/// `μ(γ̇) = μ∞ + (μ₀ − μ∞)·[1 + (λγ̇)^a]^((n−1)/a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarreauYasuda {
    pub mu0: f64,
    pub mu_inf: f64,
    pub lambda: f64,
    pub n: f64,
    pub a: f64,
}

impl Default for CarreauYasuda {
    /// Standard whole-blood parameters.
    fn default() -> Self {
        Self {
            mu0: 0.056,
            mu_inf: 0.00345,
            lambda: 3.313,
            n: 0.3568,
            a: 2.0,
        }
    }
}

impl CarreauYasuda {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu_inf > 0.0
            && self.mu_inf <= self.mu0
            && self.lambda > 0.0
            && self.a > 0.0
            && self.n.is_finite();
        if !ok {
            return Err(Error::invalid(format!("invalid Carreau-Yasuda parameters {self:?}")));
        }
        Ok(())
    }

    pub fn viscosity(&self, gamma_dot: f64) -> Result<f64> {
        if gamma_dot.is_nan() {
            return Err(Error::NonFinite("shear rate"));
        }
        if gamma_dot < 0.0 {
            return Err(Error::NegativeShearRate(gamma_dot));
        }
        let base = 1.0 + (self.lambda * gamma_dot).powf(self.a);
        let mu = self.mu_inf + (self.mu0 - self.mu_inf) * base.powf((self.n - 1.0) / self.a);
        Ok(mu.clamp(self.mu_inf.min(self.mu0), self.mu0.max(self.mu_inf)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidParams {
    /// Density, kg/m³.
    pub rho: f64,
    /// Newtonian viscosity used by the analytic flows, Pa·s.
    pub mu: f64,
    pub carreau: CarreauYasuda,
}

impl Default for FluidParams {
    fn default() -> Self {
        Self {
            rho: 1060.0,
            mu: 0.00345,
            carreau: CarreauYasuda::default(),
        }
    }
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.mu > 0.0) {
            return Err(Error::invalid(format!(
                "density and viscosity must be positive (rho={}, mu={})",
                self.rho, self.mu
            )));
        }
        self.carreau.validate()
    }
}

pub fn carreau_yasuda_viscosity(gamma_dot: f64, fluid: &FluidParams) -> Result<f64> {
    fluid.carreau.viscosity(gamma_dot)
}

/// Idealized straight rigid vessel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VesselSpec {
    /// m
    pub radius: f64,
    /// m, informational only
    pub length: f64,
}

impl VesselSpec {
    pub fn new(radius: f64, length: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("vessel radius must be positive, got {radius}")));
        }
        Ok(Self { radius, length })
    }
}

fn check_time_grid(t: &[f64], min: usize) -> Result<()> {
    if t.len() < min {
        return Err(Error::TooFewSamples {
            needed: min,
            got: t.len(),
        });
    }
    if t.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("time grid"));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonicGrid);
    }
    Ok(())
}

/// Volumetric inflow over exactly one cardiac period `[t₀, t₀ + T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowWaveform {
    t: Vec<f64>,
    q: Vec<f64>,
}

impl FlowWaveform {
    /// Requires at least 3 strictly increasing samples and periodic closure
    /// `|q(t₀) − q(t₀+T)| ≤ 1e−9 · max|q|`.
    pub fn new(t: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        check_time_grid(&t, 3)?;
        if q.len() != t.len() {
            return Err(Error::LengthMismatch {
                expected: t.len(),
                found: q.len(),
            });
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("flow waveform"));
        }
        let scale = q.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let (first, last) = (q[0], q[q.len() - 1]);
        if (first - last).abs() > 1e-9 * scale {
            return Err(Error::NonPeriodicWaveform { first, last });
        }
        Ok(Self { t, q })
    }

    /// `q(t) = mean + amplitude·sin(2πt/T)` on `samples` uniform points over `[0, T]`.
    pub fn sinusoid(period: f64, mean: f64, amplitude: f64, samples: usize) -> Result<Self> {
        let t = uniform_grid(period, samples);
        let mut q: Vec<f64> = t
            .iter()
            .map(|&t| mean + amplitude * (2.0 * PI * t / period).sin())
            .collect();
        // sin(2π) is not exactly zero in floating point
        let last = q.len() - 1;
        q[last] = q[0];
        Self::new(t, q)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn period(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }
}

/// `n` uniform samples covering `[0, period]` inclusive.
pub fn uniform_grid(period: f64, samples: usize) -> Vec<f64> {
    let n = samples.max(2);
    (0..n)
        .map(|k| {
            if k + 1 == n {
                period
            } else {
                period * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Wall shear stress history, 1 to 3 vector components per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WssSeries {
    t: Vec<f64>,
    tau: Vec<[f64; 3]>,
    components: usize,
}

impl WssSeries {
    pub fn new(t: Vec<f64>, tau: Vec<[f64; 3]>, components: usize) -> Result<Self> {
        if !(1..=3).contains(&components) {
            return Err(Error::invalid(format!(
                "WSS must have 1 to 3 components, got {components}"
            )));
        }
        check_time_grid(&t, 2)?;
        if tau.len() != t.len() {
            return Err(Error::LengthMismatch {
                expected: t.len(),
                found: tau.len(),
            });
        }
        if tau.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("wall shear stress"));
        }
        if tau.iter().any(|v| v[components..].iter().any(|&c| c != 0.0)) {
            return Err(Error::invalid("unused WSS components must be zero"));
        }
        Ok(Self { t, tau, components })
    }

    pub fn scalar(t: Vec<f64>, tau: Vec<f64>) -> Result<Self> {
        Self::new(t, tau.into_iter().map(|v| [v, 0.0, 0.0]).collect(), 1)
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn tau(&self) -> &[[f64; 3]] {
        &self.tau
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn period(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.tau.iter().map(|v| norm3(*v)).collect()
    }

    pub fn scaled(&self, c: f64) -> WssSeries {
        WssSeries {
            t: self.t.clone(),
            tau: self.tau.iter().map(|v| [v[0] * c, v[1] * c, v[2] * c]).collect(),
            components: self.components,
        }
    }
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Wall shear `μ·|∂u/∂r|` at the last grid point (the wall) from a
/// one-sided second-order difference over the last three samples.
pub fn wall_shear_from_profile(r: &[f64], u: &[f64], mu: f64) -> Result<f64> {
    check_time_grid(r, 3).map_err(|e| match e {
        Error::NonFinite(_) => Error::NonFinite("radial grid"),
        other => other,
    })?;
    if u.len() != r.len() {
        return Err(Error::LengthMismatch {
            expected: r.len(),
            found: u.len(),
        });
    }
    let n = r.len();
    let (x0, x1, x2) = (r[n - 3], r[n - 2], r[n - 1]);
    let (f0, f1, f2) = (u[n - 3], u[n - 2], u[n - 1]);
    let h1 = x1 - x0;
    let h2 = x2 - x1;
    let deriv = f0 * h2 / (h1 * (h1 + h2)) - f1 * (h1 + h2) / (h1 * h2)
        + f2 * (h1 + 2.0 * h2) / (h2 * (h1 + h2));
    Ok(mu * deriv.abs())
}

/// Instantaneous Poiseuille wall shear `4μQ(t)/(πR³)`, signed like `Q`.
pub fn quasi_steady_wss(w: &FlowWaveform, v: &VesselSpec, f: &FluidParams) -> WssSeries {
    let factor = 4.0 * f.mu / (PI * v.radius.powi(3));
    WssSeries {
        t: w.t.clone(),
        tau: w.q.iter().map(|&q| [factor * q, 0.0, 0.0]).collect(),
        components: 1,
    }
}

/// Womersley number `R·√(ωρ/μ)` at angular frequency `omega`.
pub fn womersley_number(omega: f64, v: &VesselSpec, f: &FluidParams) -> f64 {
    v.radius * (omega * f.rho / f.mu).sqrt()
}

/// Complex Fourier coefficients `cₙ = (1/T)∫Q(t)e^{−inω(t−t₀)}dt`, `n = 0..=harmonics`,
/// by the trapezoid rule on the waveform grid.
pub fn fourier_coefficients(w: &FlowWaveform, harmonics: usize) -> Vec<Complex64> {
    let t0 = w.t[0];
    let period = w.period();
    let omega = 2.0 * PI / period;
    (0..=harmonics)
        .map(|n| {
            let f = |k: usize| {
                w.q[k] * Complex64::from_polar(1.0, -(n as f64) * omega * (w.t[k] - t0))
            };
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..w.t.len() - 1 {
                acc += (f(k) + f(k + 1)) * (0.5 * (w.t[k + 1] - w.t[k]));
            }
            acc / period
        })
        .collect()
}

/// Analytic pulsatile wall shear for `Q(t)` truncated to `n_harmonics`.
pub fn womersley_wss(
    w: &FlowWaveform,
    v: &VesselSpec,
    f: &FluidParams,
    n_harmonics: usize,
) -> Result<WssSeries> {
    f.validate()?;
    let period = w.period();
    let omega = 2.0 * PI / period;
    let i32 = Complex64::from_polar(1.0, 0.75 * PI);
    let base = f.mu / (PI * v.radius.powi(3));

    let mut transfer = Vec::with_capacity(n_harmonics + 1);
    transfer.push(Complex64::new(4.0 * base, 0.0));
    for n in 1..=n_harmonics {
        let alpha = womersley_number(n as f64 * omega, v, f);
        if alpha > MAX_WOMERSLEY_ALPHA {
            return Err(Error::AlphaTooLarge { harmonic: n, alpha });
        }
        transfer.push(base * bessel::womersley_shear_factor(i32 * alpha));
    }

    let coeffs = fourier_coefficients(w, n_harmonics);
    let t0 = w.t[0];
    let tau = w
        .t
        .iter()
        .map(|&t| {
            let mut s = (transfer[0] * coeffs[0]).re;
            for n in 1..=n_harmonics {
                let phase = Complex64::from_polar(1.0, n as f64 * omega * (t - t0));
                s += 2.0 * (transfer[n] * coeffs[n] * phase).re;
            }
            [s, 0.0, 0.0]
        })
        .collect();
    Ok(WssSeries {
        t: w.t.clone(),
        tau,
        components: 1,
    })
}

/// Quadrature rule for time integrals over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    Trapezoid,
    /// Every sample carries weight `T/n`.
    EqualWeight,
}

fn weights(t: &[f64], rule: Quadrature) -> Vec<f64> {
    let n = t.len();
    match rule {
        Quadrature::Trapezoid => {
            let mut w = vec![0.0; n];
            for k in 0..n - 1 {
                let half = 0.5 * (t[k + 1] - t[k]);
                w[k] += half;
                w[k + 1] += half;
            }
            w
        }
        Quadrature::EqualWeight => vec![(t[n - 1] - t[0]) / n as f64; n],
    }
}

/// `(|∫τ dt|, ∫|τ| dt)` under `rule`.
fn shear_integrals(s: &WssSeries, rule: Quadrature) -> (f64, f64) {
    let w = weights(&s.t, rule);
    let mut vec_int = [0.0; 3];
    let mut mag_int = 0.0;
    for (wk, tau) in w.iter().zip(&s.tau) {
        for c in 0..3 {
            vec_int[c] += wk * tau[c];
        }
        mag_int += wk * norm3(*tau);
    }
    (norm3(vec_int), mag_int)
}

/// Time-averaged WSS magnitude `(1/T)∫|τ|dt`, trapezoid rule.
pub fn tawss(s: &WssSeries) -> f64 {
    tawss_with(s, Quadrature::Trapezoid)
}

pub fn tawss_with(s: &WssSeries, rule: Quadrature) -> f64 {
    shear_integrals(s, rule).1 / s.period()
}

/// Oscillatory shear index `½(1 − |∫τ dt| / ∫|τ| dt)`, in `[0, 0.5]`.
pub fn osi(s: &WssSeries) -> Result<f64> {
    osi_with(s, Quadrature::Trapezoid)
}

pub fn osi_with(s: &WssSeries, rule: Quadrature) -> Result<f64> {
    let (net, total) = shear_integrals(s, rule);
    if total <= 0.0 {
        return Err(Error::ZeroShearHistory);
    }
    Ok((0.5 * (1.0 - net / total)).clamp(0.0, 0.5))
}

/// Relative residence time, or `Singular` when `OSI → 0.5` or `TAWSS → 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rrt {
    Finite(f64),
    Singular,
}

impl Rrt {
    /// `f64::INFINITY` for the singular case.
    pub fn value(self) -> f64 {
        match self {
            Rrt::Finite(v) => v,
            Rrt::Singular => f64::INFINITY,
        }
    }

    pub fn is_singular(self) -> bool {
        matches!(self, Rrt::Singular)
    }
}

pub fn rrt_from(osi: f64, tawss: f64) -> Rrt {
    if osi < 0.5 - 1e-9 && tawss > 1e-12 {
        Rrt::Finite(1.0 / ((1.0 - 2.0 * osi) * tawss))
    } else {
        Rrt::Singular
    }
}

/// `1 / ((1 − 2·OSI)·TAWSS)`. A zero shear history is singular.
pub fn rrt(s: &WssSeries) -> Rrt {
    match osi(s) {
        Ok(o) => rrt_from(o, tawss(s)),
        Err(_) => Rrt::Singular,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biomarkers {
    pub tawss: f64,
    pub osi: f64,
    pub rrt: Rrt,
}

pub fn biomarkers(s: &WssSeries) -> Result<Biomarkers> {
    let osi = osi(s)?;
    let tawss = tawss(s);
    Ok(Biomarkers {
        tawss,
        osi,
        rrt: rrt_from(osi, tawss),
    })
}
