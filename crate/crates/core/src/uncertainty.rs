//! Monte Carlo dropout aggregation: per-sample mean and population variance
//! over K stochastic predictions, plus the review-flag policy.

use crate::error::{Error, Result};
use crate::grid::{Grid, ProbMap};

pub const DEFAULT_REVIEW_TAU: f64 = 0.002;

/// Streaming mean and population variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningMoments {
    count: usize,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Divide-by-K variance; zero for an empty or single-sample stream.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }
}

fn check_probability(p: f64) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::NonFinite("ensemble sample"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// Mean and population variance of K scalar predictions.
pub fn mc_aggregate_scalar(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let mut m = RunningMoments::default();
    for &p in samples {
        check_probability(p)?;
        m.push(p);
    }
    Ok((m.mean(), m.variance()))
}

/// Something whose spread can be reduced to one review score.
pub trait Spread {
    fn review_score(&self) -> f64;
}

impl Spread for f64 {
    fn review_score(&self) -> f64 {
        *self
    }
}

impl Spread for Grid<f64> {
    fn review_score(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.data().iter().sum::<f64>() / self.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySummary<T> {
    pub mean: T,
    pub variance: T,
    pub flagged: bool,
}

impl<T: Spread> UncertaintySummary<T> {
    pub fn new(mean: T, variance: T, tau: f64) -> Self {
        let flagged = variance.review_score() > tau;
        Self {
            mean,
            variance,
            flagged,
        }
    }

    pub fn review_score(&self) -> f64 {
        self.variance.review_score()
    }
}

pub fn summarize_scalar(samples: &[f64], tau: f64) -> Result<UncertaintySummary<f64>> {
    let (mean, variance) = mc_aggregate_scalar(samples)?;
    Ok(UncertaintySummary::new(mean, variance, tau))
}

/// Pixel-wise mean and variance over K probability maps of one shape.
pub fn mc_aggregate_map(maps: &[ProbMap], tau: f64) -> Result<UncertaintySummary<Grid<f64>>> {
    let first = maps.first().ok_or(Error::EmptyEnsemble)?;
    let (h, w) = first.shape();
    for m in &maps[1..] {
        first.grid().ensure_same_shape(m.grid())?;
    }
    let mut acc = vec![RunningMoments::default(); h * w];
    for m in maps {
        for (a, &p) in acc.iter_mut().zip(m.data()) {
            a.push(p);
        }
    }
    let mean = Grid::from_vec(h, w, acc.iter().map(RunningMoments::mean).collect())?;
    let variance = Grid::from_vec(h, w, acc.iter().map(RunningMoments::variance).collect())?;
    Ok(UncertaintySummary::new(mean, variance, tau))
}

/// Flags summaries whose review score exceeds `tau`.
pub fn flag_reviews<T: Spread>(summaries: &[UncertaintySummary<T>], tau: f64) -> Result<Vec<bool>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!("review threshold must be >= 0, got {tau}")));
    }
    Ok(summaries.iter().map(|s| s.review_score() > tau).collect())
}

/// Flags raw variances against `tau`.
pub fn flag_variances(variances: &[f64], tau: f64) -> Result<Vec<bool>> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::invalid(format!("review threshold must be >= 0, got {tau}")));
    }
    Ok(variances.iter().map(|&v| v > tau).collect())
}
