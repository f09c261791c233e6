//! Directive (single-lobe) diffuse scattering off rough surfaces.
//!
//! The scattered amplitude follows a cosine-power lobe centered on the
//! specular direction: g = S (cos(psi_r / 2))^(alpha / 2) where psi_r is
//! the angle between the outgoing ray and the specular reflection of the
//! incoming one, S is the material scattering coefficient and alpha the
//! lobe width exponent.

use super::materials::Material;
use crate::math::Vec3;
use crate::polarization::{convert_basis, scattering_out_frame, PolFrame, PolarizedField};

/// Lobe gain for a scattering event with incoming travel direction
/// `d_aoa`, outgoing direction `d_aod` and surface normal `n` (unit,
/// on the illuminated side).
pub fn scatter_gain(mat: &Material, d_aoa: Vec3, d_aod: Vec3, n: Vec3) -> f64 {
    let spec = d_aoa - n * (2.0 * d_aoa.dot(n));
    let c = spec.dot(d_aod).clamp(-1.0, 1.0);
    let half = (c.acos() / 2.0).cos();
    mat.scat_s * half.max(0.0).powf(mat.lobe_alpha / 2.0)
}

/// Applies the scattering lobe to an incident field. The incident field is
/// first expressed in the reflection frame at the surface (s axis along
/// `d_aoa` x `n`), both components are scaled by the lobe gain, and the
/// result is emitted in the canonical outgoing scattering frame for
/// `d_aod`.
pub fn scatter_field(
    mat: &Material,
    field: &PolarizedField,
    d_aod: Vec3,
    n: Vec3,
) -> PolarizedField {
    let d_aoa = field.frame.d;
    let e_s = match d_aoa.cross(n).try_normalized() {
        Some(s) => s,
        None => PolFrame::fallback(d_aoa).e_s,
    };
    let inc = convert_basis(field, &PolFrame::from_s(d_aoa, e_s));
    let g = scatter_gain(mat, d_aoa, d_aod, n);
    PolarizedField {
        amp_s: inc.amp_s * g,
        amp_p: inc.amp_p * g,
        frame: scattering_out_frame(d_aod),
    }
}
