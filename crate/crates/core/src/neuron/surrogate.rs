//! Arctan surrogate for the Heaviside spike function.

use std::f64::consts::PI;

/// Smooth spike `S(u) = atan(pi * u) / pi + 1/2`, strictly increasing on `(0, 1)`.
#[inline]
pub fn surrogate_value(u: f64) -> f64 {
    (PI * u).atan() / PI + 0.5
}

/// Derivative of [`surrogate_value`]: `1 / (1 + pi^2 u^2)`.
#[inline]
pub fn surrogate_grad(u: f64) -> f64 {
    1.0 / (1.0 + PI * PI * u * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_value_examples() {
        assert_eq!(surrogate_value(0.0), 0.5);
        assert!((surrogate_value(1e12) - 1.0).abs() < 1e-12);
        assert!((surrogate_value(-1e12)).abs() < 1e-12);
        // atan(pi)/pi + 0.5, evaluated independently.
        assert!((surrogate_value(1.0) - 0.901_906_738_047_706_4).abs() < 1e-12);
    }

    #[test]
    fn surrogate_grad_examples() {
        assert_eq!(surrogate_grad(0.0), 1.0);
        assert!((surrogate_grad(1.0) - 0.091_999_668_350_375_24).abs() < 1e-12);
        for u in [0.1, 0.7, 3.0, 42.0] {
            assert_eq!(surrogate_grad(u), surrogate_grad(-u));
        }
    }

    #[test]
    fn grad_matches_centered_difference() {
        let h = 1e-5;
        let worst = (0..=20_000)
            .map(|i| -10.0 + i as f64 * 1e-3)
            .map(|u| {
                let fd = (surrogate_value(u + h) - surrogate_value(u - h)) / (2.0 * h);
                (surrogate_grad(u) - fd).abs()
            })
            .fold(0.0_f64, f64::max);
        assert!(worst < 1e-6, "max deviation {worst}");
    }
}
