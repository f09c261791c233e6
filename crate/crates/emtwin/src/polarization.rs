//! Polarization frames and transverse field bookkeeping.
//!
//! A field propagating along unit direction `d` is stored as two complex
//! amplitudes over an orthonormal transverse pair (e_s, e_p) with
//! e_s x e_p = d. Interaction models each define their own incoming and
//! outgoing frames; `convert_basis` rotates amplitudes between frames that
//! share a propagation direction without changing the physical field.
//!
//! Frame conventions (also used verbatim by the channel oracle and the
//! learned twin, so the two stay exactly comparable):
//! * reflection: e_s perpendicular to the plane of incidence
//!   (d_aoa x n, normalized), e_p = d x e_s for each of d_aoa/d_aod;
//! * diffraction: edge direction e = n0 x nn (normalized), incoming
//!   e_s = d_aoa x e (normalized), outgoing e_s = -(d_aod x e) (normalized),
//!   e_p = d x e_s on both sides;
//! * scattering output and antennas: the spherical unit vectors
//!   (theta_hat, phi_hat) of the propagation direction.

use crate::math::{vec3, Vec3};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Orthonormal right-handed polarization basis for propagation direction `d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolFrame {
    pub e_s: Vec3,
    pub e_p: Vec3,
    pub d: Vec3,
}

impl PolFrame {
    /// Builds the frame from `d` and a transverse s-vector, completing it
    /// right-handed (e_p = d x e_s).
    pub fn from_s(d: Vec3, e_s: Vec3) -> PolFrame {
        PolFrame { e_s, e_p: d.cross(e_s), d }
    }

    /// Deterministic fallback basis for degenerate geometry: project the
    /// coordinate axis least aligned with `d` into the transverse plane.
    pub fn fallback(d: Vec3) -> PolFrame {
        let axes = [vec3(1.0, 0.0, 0.0), vec3(0.0, 1.0, 0.0), vec3(0.0, 0.0, 1.0)];
        let mut best = axes[0];
        let mut best_dot = f64::INFINITY;
        for a in axes {
            let al = a.dot(d).abs();
            if al < best_dot {
                best_dot = al;
                best = a;
            }
        }
        let e_s = (best - d * best.dot(d)).normalized();
        PolFrame::from_s(d, e_s)
    }

    pub fn orthonormality_error(&self) -> f64 {
        let mut e: f64 = 0.0;
        for v in [self.e_s, self.e_p, self.d] {
            e = e.max((v.norm() - 1.0).abs());
        }
        e = e.max(self.e_s.dot(self.e_p).abs());
        e = e.max(self.e_s.dot(self.d).abs());
        e = e.max(self.e_p.dot(self.d).abs());
        // Right-handedness folded into the same scalar: e_s x e_p == d.
        e = e.max((self.e_s.cross(self.e_p) - self.d).norm());
        e
    }
}

/// Transverse complex field amplitudes expressed in `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizedField {
    pub amp_s: Complex64,
    pub amp_p: Complex64,
    pub frame: PolFrame,
}

impl PolarizedField {
    pub fn new(amp_s: Complex64, amp_p: Complex64, frame: PolFrame) -> PolarizedField {
        PolarizedField { amp_s, amp_p, frame }
    }

    pub fn power(&self) -> f64 {
        self.amp_s.norm_sqr() + self.amp_p.norm_sqr()
    }
}

/// Re-expresses a field in another frame sharing the same propagation
/// direction. The 2x2 change-of-basis matrix is the inner-product matrix of
/// the two transverse pairs; it is orthogonal, so total power is preserved.
pub fn convert_basis(field: &PolarizedField, target: &PolFrame) -> PolarizedField {
    debug_assert!(
        field.frame.d.dot(target.d) > 1.0 - 1e-9,
        "convert_basis requires frames with a common propagation direction"
    );
    let m = basis_change(&field.frame, target);
    PolarizedField {
        amp_s: field.amp_s * m[0] + field.amp_p * m[1],
        amp_p: field.amp_s * m[2] + field.amp_p * m[3],
        frame: *target,
    }
}

/// Row-major 2x2 matrix taking (amp_s, amp_p) in `from` to `to` coordinates.
pub fn basis_change(from: &PolFrame, to: &PolFrame) -> [f64; 4] {
    [
        to.e_s.dot(from.e_s),
        to.e_s.dot(from.e_p),
        to.e_p.dot(from.e_s),
        to.e_p.dot(from.e_p),
    ]
}

/// TE/TM frames at a specular reflection: e_s perpendicular to the plane of
/// incidence and shared between the two sides. Near-normal incidence, where
/// the plane of incidence degenerates, falls back to a deterministic
/// transverse axis shared by both frames.
pub fn reflection_frames(d_aoa: Vec3, d_aod: Vec3, n: Vec3) -> (PolFrame, PolFrame) {
    match d_aoa.cross(n).try_normalized() {
        Some(e_s) => (PolFrame::from_s(d_aoa, e_s), PolFrame::from_s(d_aod, e_s)),
        None => {
            let f_in = PolFrame::fallback(d_aoa);
            (f_in, PolFrame::from_s(d_aod, f_in.e_s))
        }
    }
}

/// Edge-fixed frames at a diffraction. The outgoing s-vector carries a minus
/// sign relative to the incoming construction.
pub fn diffraction_frames(d_aoa: Vec3, d_aod: Vec3, n0: Vec3, nn: Vec3) -> (PolFrame, PolFrame) {
    let e_hat = n0.cross(nn).normalized();
    let in_frame = match d_aoa.cross(e_hat).try_normalized() {
        Some(e_s) => PolFrame::from_s(d_aoa, e_s),
        None => PolFrame::fallback(d_aoa),
    };
    let out_frame = match d_aod.cross(e_hat).try_normalized() {
        Some(e_s) => PolFrame::from_s(d_aod, -e_s),
        None => PolFrame::fallback(d_aod),
    };
    (in_frame, out_frame)
}

/// Polar/azimuth angles of a unit direction (theta from +z, phi in xy).
pub fn direction_angles(d: Vec3) -> (f64, f64) {
    (d.z.clamp(-1.0, 1.0).acos(), d.y.atan2(d.x))
}

/// Spherical-basis frame (theta_hat, phi_hat) for a propagation direction;
/// used for the scattering output and for antenna patterns at both link ends.
pub fn spherical_frame(d: Vec3) -> PolFrame {
    let (theta, phi) = direction_angles(d);
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    PolFrame {
        e_s: vec3(ct * cp, ct * sp, -st),
        e_p: vec3(-sp, cp, 0.0),
        d,
    }
}

pub fn scattering_out_frame(d_aod: Vec3) -> PolFrame {
    spherical_frame(d_aod)
}

/// Affine squash of angles in [0, 2pi] onto [-1, 1] for feature encoding.
pub fn f_theta(x: f64) -> f64 {
    x / PI - 1.0
}

/// Wedge geometry features for one first-order diffraction. `phip`/`phi`
/// follow the sign-folded arccos convention of the feature definition (they
/// coincide with the classical wedge angles for the right-angle wedges used
/// throughout the fixtures); `sbar_*` are the adjacent segment lengths
/// normalized by the scene extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffractionAngles {
    pub beta0p: f64,
    pub beta0: f64,
    pub phip: f64,
    pub phi: f64,
    pub betan: f64,
    pub sbar_prev: f64,
    pub sbar_next: f64,
}

fn folded_face_angle(t0: Vec3, d_transverse: Vec3) -> f64 {
    let c = t0.dot(d_transverse).clamp(-1.0, 1.0);
    let sgn = if c >= 0.0 { 1.0 } else { -1.0 };
    PI - (PI - c.acos()) * sgn
}

/// Computes the diffraction feature angles from the travel directions and
/// the wedge face normals.
pub fn diffraction_angles(
    d_aoa: Vec3,
    d_aod: Vec3,
    n0: Vec3,
    nn: Vec3,
    dist_prev: f64,
    dist_next: f64,
    scene_max_dim: f64,
) -> DiffractionAngles {
    let e_hat = n0.cross(nn).normalized();
    let beta0p = e_hat.dot(d_aoa).clamp(-1.0, 1.0).acos();
    let beta0 = e_hat.dot(d_aod).clamp(-1.0, 1.0).acos();
    let t0 = n0.cross(e_hat);
    let trans = |d: Vec3| (d - e_hat * d.dot(e_hat)).try_normalized();
    let phip = match trans(d_aoa) {
        Some(dt) => folded_face_angle(t0, dt),
        None => 0.0,
    };
    let phi = match trans(d_aod) {
        Some(dt) => folded_face_angle(t0, dt),
        None => 0.0,
    };
    let betan = 2.0 * PI - n0.dot(nn).clamp(-1.0, 1.0).acos();
    DiffractionAngles {
        beta0p,
        beta0,
        phip,
        phi,
        betan,
        sbar_prev: dist_prev / scene_max_dim,
        sbar_next: dist_next / scene_max_dim,
    }
}
