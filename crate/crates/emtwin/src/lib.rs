//! Differentiable digital twin of wireless propagation: geometric path
//! tracing through segmented 3D scenes, analytic channel synthesis for
//! ground truth, and learned per-object electromagnetic behavior that is
//! trained end-to-end against observed OFDM channels.

pub mod em;
pub mod evaluator;
pub mod math;
pub mod nn;
pub mod parallel;
pub mod polarization;
pub mod scene;
pub mod textio;
pub mod tracer;
pub mod trainer;
pub mod twin;

pub use em::{FreqGrid, MaterialTable};
pub use math::{vec3, Pose, Quat, Vec3, SPEED_OF_LIGHT};
pub use scene::{Scene, SceneError};
pub use tracer::{trace_paths, PathGeometry, TraceConfig};
