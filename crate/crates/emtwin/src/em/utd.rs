//! Uniform-theory wedge diffraction coefficients with heuristic
//! reflection-coefficient weighting for lossy faces (Luebbers-style).
//!
//! `utd_coeffs` returns the diagonal of the 2x2 transfer matrix in the
//! diffraction polarization frames: entry 0 multiplies the s amplitude
//! (perpendicular to the edge-fixed plane, weighted by the parallel/TM face
//! reflection as in the classical hard coefficient) and entry 1 the p
//! amplitude (soft, TE-weighted). The spherical spreading factor and the
//! propagation phase are handled by the path bookkeeping, not here.

use super::fresnel::fresnel_grazing;
use super::materials::Material;
use crate::math::SPEED_OF_LIGHT;
use crate::polarization::DiffractionAngles;
use num_complex::Complex64;
use std::f64::consts::{FRAC_PI_4, PI};

/// Kouyoumjian-Pathak transition function
/// F(x) = 2j sqrt(x) e^{jx} integral_{sqrt(x)}^inf e^{-j tau^2} d tau.
/// Evaluated by fixed-step Simpson quadrature against the exact half-line
/// integral for small x and by the asymptotic series for large x;
/// F(x) -> 0 as x -> 0 and F(x) -> 1 as x -> inf.
pub fn transition_function(x: f64) -> Complex64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if x > 16.0 {
        // 1 + j/(2x) - 3/(4x^2) - j15/(8x^3) + 75/(16x^4)
        let ix = 1.0 / x;
        return Complex64::new(
            1.0 - 0.75 * ix * ix + 75.0 / 16.0 * ix.powi(4),
            0.5 * ix - 15.0 / 8.0 * ix.powi(3),
        );
    }
    let sx = x.sqrt();
    // integral_0^inf e^{-j tau^2} = sqrt(pi)/2 e^{-j pi/4}
    let full = Complex64::from_polar(PI.sqrt() / 2.0, -FRAC_PI_4);
    let head = simpson_exp_quadratic(sx, 2000);
    let tail = full - head;
    Complex64::new(0.0, 2.0 * sx) * Complex64::from_polar(1.0, x) * tail
}

/// Simpson quadrature of integral_0^b e^{-j tau^2} d tau.
fn simpson_exp_quadratic(b: f64, n: usize) -> Complex64 {
    let n = if n % 2 == 0 { n } else { n + 1 };
    let h = b / n as f64;
    let f = |t: f64| Complex64::from_polar(1.0, -t * t);
    let mut acc = f(0.0) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += f(h * i as f64) * w;
    }
    acc * (h / 3.0)
}

/// One cot * F term of the four-term coefficient, with the standard finite
/// limit when the cot argument crosses a pole (shadow/reflection boundary).
fn cot_term(beta: f64, plus: bool, n: f64, k_l: f64) -> Complex64 {
    let two_pi_n = 2.0 * PI * n;
    let (nn, delta, cot_arg) = if plus {
        let nn = ((PI + beta) / two_pi_n).round();
        (nn, PI + beta - two_pi_n * nn, (PI + beta) / (2.0 * n))
    } else {
        let nn = ((beta - PI) / two_pi_n).round();
        (nn, PI - beta + two_pi_n * nn, (PI - beta) / (2.0 * n))
    };
    if delta.abs() < 1e-6 {
        // cot pole tempered by F -> finite boundary value.
        let sgn = if delta > 0.0 {
            1.0
        } else if delta < 0.0 {
            -1.0
        } else {
            0.0
        };
        let e4 = Complex64::from_polar(1.0, FRAC_PI_4);
        return e4 * n * (Complex64::new((2.0 * PI * k_l).sqrt() * sgn, 0.0) - e4 * (2.0 * k_l * delta));
    }
    let a = 2.0 * ((two_pi_n * nn - beta) / 2.0).cos().powi(2);
    let cot = 1.0 / cot_arg.tan();
    transition_function(k_l * a) * cot
}

/// Diagonal wedge transfer coefficients. `s_prev`/`s_next` are the adjacent
/// segment lengths in meters; the wedge geometry and the face-angle features
/// come in through `ang` (exterior angle betan = n pi, faces at phi' and
/// phi measured from the 0-face).
pub fn utd_coeffs(
    mat: &Material,
    ang: &DiffractionAngles,
    s_prev: f64,
    s_next: f64,
    f: f64,
) -> [Complex64; 2] {
    let n = ang.betan / PI;
    let k = 2.0 * PI * f / SPEED_OF_LIGHT;
    let sin_b = ang.beta0p.sin().max(1e-9);
    let l = s_prev * s_next / (s_prev + s_next) * sin_b * sin_b;
    let k_l = k * l;
    let beta_m = ang.phi - ang.phip;
    let beta_p = ang.phi + ang.phip;

    let t1 = cot_term(beta_m, true, n, k_l);
    let t2 = cot_term(beta_m, false, n, k_l);
    let t3 = cot_term(beta_p, false, n, k_l);
    let t4 = cot_term(beta_p, true, n, k_l);

    // Face reflection weights at the grazing angles of the two faces.
    let (r0_te, r0_tm) = fresnel_grazing(mat, ang.phip, f);
    let (rn_te, rn_tm) = fresnel_grazing(mat, n * PI - ang.phi, f);

    let prefac = -Complex64::from_polar(1.0, -FRAC_PI_4)
        / (2.0 * n * (2.0 * PI * k).sqrt() * sin_b);

    let d_soft = prefac * (t1 + t2 + r0_te * t3 + rn_te * t4);
    let d_hard = prefac * (t1 + t2 + r0_tm * t3 + rn_tm * t4);
    // Frame mapping: s-component is perpendicular to the edge-fixed plane
    // (hard), p-component lies in it (soft).
    [d_hard, d_soft]
}
