//! Shared numerical substrate: Gaussian kernels, grids, interpolation,
//! quadrature rules, the piecewise-linear Gaussian smoother and tail fits.

mod fit;
mod grid;
mod pchip;
mod quadrature;
mod smoother;

pub use fit::{cumulative_average, cumulative_integral, fit_tail_exponent, FitMode, TailFit};
pub use grid::{Extrapolation, Grid, GridFunction, GridParams, TailLaw};
pub use pchip::Pchip;
pub use quadrature::{convolve, gauss_hermite, gauss_legendre, integrate, QuadRule};
pub use smoother::{EdgeRule, GaussianSmoother, NodeCurve};

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

pub(crate) const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density of a mean-zero Gaussian with standard deviation `sigma`.
pub fn gaussian_density(sigma: f64, u: f64) -> f64 {
    let t = u / sigma;
    (-0.5 * t * t).exp() / ((2.0 * PI).sqrt() * sigma)
}

/// Standard normal density.
#[inline]
pub fn std_pdf(t: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * t * t).exp()
}

/// Upper tail P(Z > t) of the standard normal, accurate deep into the tail.
#[inline]
pub fn std_sf(t: f64) -> f64 {
    0.5 * erfc(t / SQRT_2)
}

/// P(Z <= t) for the standard normal.
#[inline]
pub fn std_cdf(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// P(a < Z < b) for the standard normal, taking the difference on whichever
/// tail keeps both terms small.
pub fn std_mass(a: f64, b: f64) -> f64 {
    if a >= b {
        return 0.0;
    }
    if a >= 0.0 {
        std_sf(a) - std_sf(b)
    } else if b <= 0.0 {
        std_sf(-b) - std_sf(-a)
    } else {
        1.0 - std_sf(b) - std_sf(-a)
    }
}

/// Mills ratio P(Z > t)/φ(t), by continued fraction in the upper tail where
/// both factors underflow.
pub fn mills_ratio(t: f64) -> f64 {
    if t < 3.0 {
        return std_sf(t) / std_pdf(t);
    }
    // R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...))))
    let mut acc = t;
    for k in (1..=80).rev() {
        acc = t + k as f64 / acc;
    }
    1.0 / acc
}

/// Inverse of the standard normal cdf.
pub fn std_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut t = -SQRT_2 * erfc_inv(2.0 * p);
    // polish with Newton steps against the accurate cdf
    for _ in 0..3 {
        let err = if t < 0.0 { std_cdf(t) - p } else { (1.0 - p) - std_sf(t) };
        let d = std_pdf(t);
        if d == 0.0 {
            break;
        }
        t -= err / d;
    }
    t
}

/// (1/x) ∫_0^x q(σ, y − z) dy, with the x = 0 limit q(σ, z).
pub fn averaged_kernel(sigma: f64, x: f64, z: f64) -> f64 {
    if x == 0.0 {
        return gaussian_density(sigma, z);
    }
    let (lo, hi) = if x > 0.0 { (-z, x - z) } else { (x - z, -z) };
    std_mass(lo / sigma, hi / sigma) / x.abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_values() {
        assert!((gaussian_density(1.0, 0.0) - 0.398_942_280_4).abs() < 1e-10);
        assert!((gaussian_density(2.0, 0.0) - 0.199_471_140_2).abs() < 1e-10);
        assert!((gaussian_density(1.0, 0.7) - 0.312_253_933_4).abs() < 1e-10);
    }

    #[test]
    fn density_integrates_to_one() {
        let v = integrate(|u| gaussian_density(1.0, u), -8.0, 8.0, 1e-14, 0.0);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn averaged_kernel_values() {
        assert!((averaged_kernel(1.0, 0.0, 0.7) - 0.312_253_933_4).abs() < 1e-10);
        assert!((averaged_kernel(1.0, 2.0, 1.0) - 0.341_344_746_1).abs() < 1e-10);
        // the same value by direct quadrature of the kernel
        let direct = integrate(|y| gaussian_density(1.0, y - 1.0), 0.0, 2.0, 1e-14, 0.0) / 2.0;
        assert!((averaged_kernel(1.0, 2.0, 1.0) - direct).abs() < 1e-13);
        assert!(averaged_kernel(1.0, 1e6, 0.3) < 1e-6);
        assert!((averaged_kernel(1.0, -2.0, -1.0) - 0.341_344_746_1).abs() < 1e-10);
    }

    #[test]
    fn averaged_kernel_has_unit_mass() {
        for &x in &[0.0, 0.5, -0.5, 5.0, -5.0] {
            let m = integrate(|z| averaged_kernel(1.0, x, z), -20.0, 20.0, 1e-14, 0.0);
            assert!((m - 1.0).abs() < 1e-10, "x={x}: {m}");
        }
    }

    #[test]
    fn mass_matches_cdf_difference() {
        for &(a, b) in &[(-3.0, -1.0), (-1.0, 2.0), (1.0, 4.0), (30.0, 31.0)] {
            let direct = integrate(std_pdf, a, b, 1e-15, 0.0);
            let m = std_mass(a, b);
            assert!(((m - direct) / direct).abs() < 1e-10, "{a} {b}");
        }
    }

    #[test]
    fn mills_ratio_matches_direct_ratio() {
        for &t in &[0.0, 1.0, 2.9, 3.0, 5.0, 10.0, 30.0] {
            let direct = std_sf(t) / std_pdf(t);
            assert!(((mills_ratio(t) - direct) / direct).abs() < 1e-12, "{t}");
        }
        // far beyond underflow: R(t) ≈ 1/t − 1/t³
        let t = 1e3;
        assert!((mills_ratio(t) - (1.0 / t - 1.0 / t.powi(3))).abs() < 1e-14);
    }

    #[test]
    fn quantile_round_trip() {
        for &p in &[1e-12, 1e-6, 0.1, 0.5, 0.9, 1.0 - 1e-9] {
            let t = std_quantile(p);
            assert!((std_cdf(t) - p).abs() < 1e-14 + 1e-12 * p);
        }
    }
}
