//! Fresnel reflection coefficients for a half-space of lossy dielectric
//! under the TE/TM convention matched to the reflection polarization
//! frames: gamma_te multiplies the s (perpendicular) amplitude and gamma_tm
//! the p (parallel) amplitude.

use super::materials::Material;
use crate::math::VACUUM_PERMITTIVITY;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Complex relative permittivity eta = eps_r - j sigma / (2 pi f eps0).
pub fn complex_permittivity(mat: &Material, f: f64) -> Complex64 {
    Complex64::new(mat.eps_r, -mat.sigma / (2.0 * PI * f * VACUUM_PERMITTIVITY))
}

/// Reflection coefficients at incidence angle `theta` from the surface
/// normal, for a wave arriving from vacuum:
///
///   gamma_te = (cos t - sqrt(eta - sin^2 t)) / (cos t + sqrt(eta - sin^2 t))
///   gamma_tm = (eta cos t - sqrt(eta - sin^2 t)) / (eta cos t + sqrt(eta - sin^2 t))
///
/// The principal square root keeps the transmitted wave decaying for lossy
/// media. With this sign convention gamma_tm vanishes at the Brewster angle
/// and tends to +1 in the conducting limit while gamma_te tends to -1.
pub fn fresnel_coeffs(mat: &Material, theta: f64, f: f64) -> (Complex64, Complex64) {
    let eta = complex_permittivity(mat, f);
    let (s, c) = theta.sin_cos();
    fresnel_from_cos(eta, c, s * s)
}

/// Same coefficients parameterized by the grazing angle `psi` measured from
/// the surface plane (psi = pi/2 - theta), the form used by the wedge
/// diffraction weighting. Symmetric about psi = pi/2 by construction.
pub fn fresnel_grazing(mat: &Material, psi: f64, f: f64) -> (Complex64, Complex64) {
    let eta = complex_permittivity(mat, f);
    let psi = psi.clamp(0.0, PI);
    let (s, c) = psi.sin_cos();
    fresnel_from_cos(eta, s, c * c)
}

fn fresnel_from_cos(eta: Complex64, cos_inc: f64, sin_sq: f64) -> (Complex64, Complex64) {
    let root = (eta - sin_sq).sqrt();
    let te = (cos_inc - root) / (cos_inc + root);
    let tm = (eta * cos_inc - root) / (eta * cos_inc + root);
    (te, tm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::materials::Material;

    fn lossless(eps_r: f64) -> Material {
        Material { id: 0, name: "t".into(), eps_r, sigma: 0.0, scat_s: 0.3, lobe_alpha: 4.0 }
    }

    const F: f64 = 3.5e9;

    #[test]
    fn normal_incidence_eps_four() {
        let m = lossless(4.0);
        let (te, tm) = fresnel_coeffs(&m, 0.0, F);
        assert!((te - Complex64::new(-1.0 / 3.0, 0.0)).norm() < 1e-12);
        assert!((tm - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn brewster_angle_nulls_tm() {
        for eps in [2.0, 4.0, 6.25, 9.0] {
            let m = lossless(eps);
            let theta_b = eps.sqrt().atan();
            let (_, tm) = fresnel_coeffs(&m, theta_b, F);
            assert!(tm.norm() < 1e-12, "eps {eps}: |tm| = {}", tm.norm());
        }
    }

    #[test]
    fn conductor_limit_is_total_reflection() {
        let m = Material {
            id: 0,
            name: "pec".into(),
            eps_r: 1.0,
            sigma: 1e9,
            scat_s: 0.2,
            lobe_alpha: 8.0,
        };
        let (te, tm) = fresnel_coeffs(&m, 30f64.to_radians(), F);
        assert!(te.norm() > 0.9999);
        assert!(tm.norm() > 0.9999);
        assert!((te.re + 1.0).abs() < 0.01);
        assert!((tm.re - 1.0).abs() < 0.01);
    }

    #[test]
    fn passive_for_all_angles() {
        let mats = crate::em::materials::MaterialTable::bundled();
        for m in &mats.materials {
            for i in 0..90 {
                let theta = (i as f64) * PI / 180.0;
                let (te, tm) = fresnel_coeffs(m, theta, F);
                assert!(te.norm() <= 1.0 + 1e-12);
                assert!(tm.norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn grazing_form_matches_normal_form() {
        let m = lossless(5.0);
        for i in 1..90 {
            let theta = (i as f64) * PI / 180.0;
            let (te_a, tm_a) = fresnel_coeffs(&m, theta, F);
            let (te_b, tm_b) = fresnel_grazing(&m, PI / 2.0 - theta, F);
            assert!((te_a - te_b).norm() < 1e-12);
            assert!((tm_a - tm_b).norm() < 1e-12);
        }
        // Symmetry about psi = pi/2.
        let (a, b) = fresnel_grazing(&m, 0.3, F);
        let (c, d) = fresnel_grazing(&m, PI - 0.3, F);
        assert!((a - c).norm() < 1e-12);
        assert!((b - d).norm() < 1e-12);
    }
}
