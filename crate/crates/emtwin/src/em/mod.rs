//! Analytic electromagnetic ground truth: material tables, Fresnel and UTD
//! coefficients, directive scattering and the path-sum channel synthesizer.

pub mod fresnel;
pub mod materials;
pub mod oracle;
pub mod scatter;
pub mod utd;

pub use fresnel::{complex_permittivity, fresnel_coeffs, fresnel_grazing};
pub use materials::{Material, MaterialError, MaterialTable};
pub use oracle::{oracle_channel, path_coefficient, FreqGrid};
pub use scatter::{scatter_field, scatter_gain};
pub use utd::{transition_function, utd_coeffs};
