//! Positional encoding: each scalar feature expands into sin/cos pairs at
//! octave-spaced frequencies so the downstream networks can represent sharp
//! spatial variation.

use std::f64::consts::PI;

/// Appends [sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{M-1} pi x), cos(2^{M-1} pi x)].
pub fn pos_enc_scalar(x: f64, m: usize, out: &mut Vec<f64>) {
    let mut w = PI;
    for _ in 0..m {
        out.push((w * x).sin());
        out.push((w * x).cos());
        w *= 2.0;
    }
}

/// Encodes a feature vector component by component, concatenated in input
/// order; output length is 2*M per component.
pub fn pos_enc(xs: &[f64], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * m * xs.len());
    for &x in xs {
        pos_enc_scalar(x, m, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_maps_to_alternating_zero_one() {
        assert_eq!(pos_enc(&[0.0], 2), vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn half_hits_the_quarter_and_half_turns() {
        let got = pos_enc(&[0.5], 2);
        let want = [1.0, 0.0, 0.0, -1.0];
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12, "got {got:?}");
        }
    }

    #[test]
    fn vector_input_concatenates_per_component() {
        let got = pos_enc(&[0.1, -0.4, 0.9], 10);
        assert_eq!(got.len(), 60);
        let solo = pos_enc(&[-0.4], 10);
        assert_eq!(&got[20..40], &solo[..]);
    }
}
