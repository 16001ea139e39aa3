//! Scalar helpers shared by the graph and plain evaluation paths.

use amberflag_autodiff::Tensor;
use statrs::function::erf::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn log_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `log P(Z > z)` for a standard normal, accurate far into both tails.
pub fn log_normal_sf(z: f64) -> f64 {
    if z < 25.0 {
        (0.5 * erfc(z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        log_normal_pdf(z) - z.ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln()
    }
}

/// Derivative of [`log_normal_sf`]: minus the inverse Mills ratio.
pub fn log_normal_sf_deriv(z: f64) -> f64 {
    -(log_normal_pdf(z) - log_normal_sf(z)).exp()
}

/// Elementwise `log P(Z > x)` as a differentiable graph op.
pub fn log_normal_sf_op(x: Tensor<'_>) -> amberflag_autodiff::Result<Tensor<'_>> {
    x.map("log_normal_sf", |z| (log_normal_sf(z), log_normal_sf_deriv(z)))
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| (l - lse).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sf_matches_known_values() {
        assert!((log_normal_sf(0.0) - 0.5f64.ln()).abs() < 1e-14);
        // P(Z > 1.959963985) = 0.025
        assert!((log_normal_sf(1.959_963_984_540_054) - 0.025f64.ln()).abs() < 1e-9);
        assert!(log_normal_sf(-40.0).abs() < 1e-300);
        // the two branches agree at the switch
        let below = (0.5 * erfc(25.0 / std::f64::consts::SQRT_2)).ln();
        let z2: f64 = 625.0;
        let above = log_normal_pdf(25.0) - 25f64.ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)).ln();
        assert!((below - above).abs() < 1e-8);
        assert!(log_normal_sf(60.0).is_finite());
    }

    #[test]
    fn sf_derivative_matches_differences() {
        for z in [-5.0, -1.0, 0.0, 0.7, 3.0, 10.0, 30.0] {
            let h = 1e-5;
            let fd = (log_normal_sf(z + h) - log_normal_sf(z - h)) / (2.0 * h);
            assert!((fd - log_normal_sf_deriv(z)).abs() < 1e-6 * fd.abs().max(1.0), "z={z}");
        }
    }
}
