//! Meyer-type tight frame over the spectrum.
//!
//! With `ω = c·λ`, the scaling kernel is 1 below `2π/3`, and the wavelet at scale
//! `j` is `ψ(ω / 2^j)`. Adjacent kernels overlap as `sin`/`cos` of the same phase
//! `π/2·ν(·)`, so `Σ_s h_s(λ)² = 1` up to `ω = 2^{J−1}·4π/3`, which `c` places at
//! the top of the design interval.

use std::f64::consts::PI;

/// `ν(x) = x⁴(35 − 84x + 70x² − 20x³)` on `[0, 1]`, clamped outside.
pub(crate) fn nu(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x.powi(4) * (35.0 - 84.0 * x + 70.0 * x * x - 20.0 * x * x * x)
}

fn scaling(w: f64) -> f64 {
    if w <= 2.0 * PI / 3.0 {
        1.0
    } else if w <= 4.0 * PI / 3.0 {
        (PI / 2.0 * nu(3.0 * w / (2.0 * PI) - 1.0)).cos()
    } else {
        0.0
    }
}

fn wavelet(w: f64) -> f64 {
    if w <= 2.0 * PI / 3.0 {
        0.0
    } else if w <= 4.0 * PI / 3.0 {
        (PI / 2.0 * nu(3.0 * w / (2.0 * PI) - 1.0)).sin()
    } else if w <= 8.0 * PI / 3.0 {
        (PI / 2.0 * nu(3.0 * w / (4.0 * PI) - 1.0)).cos()
    } else {
        0.0
    }
}

/// Frequency scale `c` mapping `λ_max` to the top of the tight range.
pub(crate) fn frequency_scale(scales: usize, lambda_max: f64) -> f64 {
    2f64.powi(scales as i32 - 1) * 4.0 * PI / 3.0 / lambda_max
}

/// Channel values: scaling kernel followed by `scales` dyadic wavelets.
pub(crate) fn meyer_values(scales: usize, lambda_max: f64, lambda: f64) -> Vec<f64> {
    let w = frequency_scale(scales, lambda_max) * lambda;
    let mut out = Vec::with_capacity(scales + 1);
    out.push(scaling(w));
    for j in 0..scales {
        out.push(wavelet(w / 2f64.powi(j as i32)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transition_polynomial_endpoints() {
        assert_eq!(nu(0.0), 0.0);
        assert!((nu(1.0) - 1.0).abs() < 1e-15);
        assert!((nu(0.5) - 0.5).abs() < 1e-15);
        // ν(x) + ν(1 − x) = 1
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            assert!((nu(x) + nu(1.0 - x) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn wavelets_are_localized() {
        let v = meyer_values(3, 1.0, 0.0);
        assert_eq!(v, vec![1.0, 0.0, 0.0, 0.0]);
        // At λ_max only the coarsest wavelet is active, at its peak.
        let top = meyer_values(3, 1.0, 1.0);
        assert!((top[3] - 1.0).abs() < 1e-12);
        assert!(top[..3].iter().all(|v| v.abs() < 1e-12));
    }
}
