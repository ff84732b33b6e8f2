//! Seeded finite-difference verification of every differentiable loss kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::hemodynamics::{uniform_grid, FlowWaveform};
use crate::losses::{
    numeric_gradient_check, BceKernel, DiceKernel, DifferentiableLoss, DivergenceKernel, FlowMismatchKernel,
    SmoothnessKernel, SmoothnessNorm,
};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_POINTS: usize = 50;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Smoothness points keep every forward difference at least this far from
/// zero so the L1 kink is never straddled by the difference stencil.
const KINK_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct KernelCheck {
    pub kernel: &'static str,
    pub points: usize,
    pub max_relative_error: f64,
}

impl KernelCheck {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

fn worst_over<K, F>(name: &'static str, points: usize, step: f64, mut draw: F) -> Result<KernelCheck>
where
    K: DifferentiableLoss,
    F: FnMut() -> (K, Vec<f64>),
{
    let mut worst = 0.0_f64;
    for _ in 0..points {
        let (kernel, x) = draw();
        worst = worst.max(numeric_gradient_check(&kernel, &x, step)?);
    }
    Ok(KernelCheck {
        kernel: name,
        points,
        max_relative_error: worst,
    })
}

fn smooth_point(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect();
        let off_kink = (0..h).all(|y| {
            (0..w).all(|c| {
                let v = x[y * w + c];
                (c + 1 == w || (x[y * w + c + 1] - v).abs() > KINK_MARGIN)
                    && (y + 1 == h || (x[(y + 1) * w + c] - v).abs() > KINK_MARGIN)
            })
        });
        if off_kink {
            return x;
        }
    }
}

/// Runs the full suite: `points` random points per kernel at the given step.
pub fn run_suite(seed: u64, points: usize, step: f64) -> Result<Vec<KernelCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let binary = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect()
    };
    let mut out = Vec::new();
    out.push(worst_over("bce", points, step, || {
        let target = binary(&mut rng, 16);
        let x = (0..16).map(|_| rng.gen_range(0.02..0.98)).collect();
        (BceKernel { target }, x)
    })?);
    out.push(worst_over("dice_loss", points, step, || {
        let target = binary(&mut rng, 64);
        let x = (0..64).map(|_| rng.gen_range(0.01..0.99)).collect();
        (DiceKernel { target }, x)
    })?);
    for (name, norm) in [
        ("smoothness_sum", SmoothnessNorm::Sum),
        ("smoothness_mean", SmoothnessNorm::Mean),
    ] {
        out.push(worst_over(name, points, step, || {
            let x = smooth_point(&mut rng, 5, 6);
            (SmoothnessKernel { height: 5, width: 6, norm }, x)
        })?);
    }
    out.push(worst_over("phys_divergence", points, step, || {
        let spacing = rng.gen_range(0.5..2.0);
        let x = (0..2 * 36).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (DivergenceKernel { height: 6, width: 6, spacing }, x)
    })?);
    out.push(worst_over("phys_flow_mismatch", points, step, || {
        let t = uniform_grid(1.0, 17);
        let q: Vec<f64> = t.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut q = q;
        q[16] = q[0];
        let reference = FlowWaveform::new(t, q).expect("periodic reference");
        let x = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
        (FlowMismatchKernel { reference }, x)
    })?);
    Ok(out)
}

pub fn suite_to_csv(checks: &[KernelCheck], tolerance: f64) -> String {
    let mut s = String::from("kernel,points,max_relative_error,pass\n");
    for c in checks {
        s.push_str(&format!(
            "{},{},{:.6e},{}\n",
            c.kernel,
            c.points,
            c.max_relative_error,
            c.passed(tolerance)
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_is_seeded() {
        let a = run_suite(3, 4, DEFAULT_STEP).unwrap();
        let b = run_suite(3, 4, DEFAULT_STEP).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|c| c.passed(DEFAULT_TOLERANCE)), "{a:?}");
    }
}
