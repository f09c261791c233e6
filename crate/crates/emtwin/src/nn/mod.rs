//! Self-contained neural stack: positional encoding, dense networks with a
//! flat parameter layout, a reverse-mode tape for the channel graph, Adam,
//! and bit-exact checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod posenc;
pub mod tape;

pub use adam::{AdamParams, AdamState};
pub use checkpoint::{read_path, read_string, write_path, write_string, CheckpointError};
pub use mlp::{eval_mlp, init_params, GradStore, Head, MlpSpec, NetId, NetRegistry};
pub use posenc::{pos_enc, pos_enc_scalar};
pub use tape::Tape;
