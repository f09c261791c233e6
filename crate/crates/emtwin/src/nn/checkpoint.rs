//! Versioned text checkpoints: network shapes, bit-exact parameters and a
//! free-form manifest for whatever the owning model needs to rebuild itself.
//!
//! Parameters are written as 16-digit hex words of the f64 bit pattern, so a
//! load followed by a save reproduces the file byte for byte.

use super::mlp::{Head, MlpSpec, NetRegistry};
use crate::textio::{fmt_f64_bits, ParseError, Tokens};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint parse: {0}")]
    Parse(#[from] ParseError),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

const MAGIC: &str = "emtwin_checkpoint_v1";

fn head_tag(h: Head) -> &'static str {
    match h {
        Head::Exp => "e",
        Head::Sigmoid2Pi => "s",
        Head::Linear => "l",
    }
}

pub fn write_string(reg: &NetRegistry, manifest: &[(String, String)]) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    for (k, v) in manifest {
        out.push_str(&format!("manifest {k} {v}\n"));
    }
    for (spec, params) in reg.specs.iter().zip(reg.params.iter()) {
        out.push_str("net widths");
        for w in &spec.widths {
            out.push_str(&format!(" {w}"));
        }
        out.push_str(" heads");
        for h in &spec.heads {
            out.push(' ');
            out.push_str(head_tag(*h));
        }
        out.push('\n');
        for (i, p) in params.iter().enumerate() {
            out.push_str(&fmt_f64_bits(*p));
            out.push(if (i + 1) % 16 == 0 { '\n' } else { ' ' });
        }
        if params.len() % 16 != 0 {
            out.push('\n');
        }
    }
    out
}

pub fn write_path(
    path: &Path,
    reg: &NetRegistry,
    manifest: &[(String, String)],
) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(write_string(reg, manifest).as_bytes())?;
    Ok(())
}

pub fn read_string(src: &str) -> Result<(NetRegistry, Vec<(String, String)>), CheckpointError> {
    let mut t = Tokens::new(src);
    t.expect(MAGIC)?;
    let mut manifest = Vec::new();
    let mut reg = NetRegistry::new();
    while !t.at_end() {
        match t.next()? {
            "manifest" => {
                let key = t.next()?.to_string();
                let val = t.next()?.to_string();
                manifest.push((key, val));
            }
            "net" => {
                t.expect("widths")?;
                let mut widths = Vec::new();
                while t.peek() != Some("heads") {
                    widths.push(t.usize()?);
                }
                t.expect("heads")?;
                let n_out = *widths.last().ok_or_else(|| t.err("net with no widths"))?;
                let mut heads = Vec::with_capacity(n_out);
                for _ in 0..n_out {
                    heads.push(match t.next()? {
                        "e" => Head::Exp,
                        "s" => Head::Sigmoid2Pi,
                        "l" => Head::Linear,
                        other => return Err(t.err(format!("unknown head tag `{other}`")).into()),
                    });
                }
                let spec = MlpSpec::new(widths, heads);
                let mut params = Vec::with_capacity(spec.param_len());
                for _ in 0..spec.param_len() {
                    params.push(f64::from_bits(t.u64_hex()?));
                }
                reg.add(spec, params);
            }
            other => return Err(t.err(format!("unknown checkpoint record `{other}`")).into()),
        }
    }
    Ok((reg, manifest))
}

pub fn read_path(path: &Path) -> Result<(NetRegistry, Vec<(String, String)>), CheckpointError> {
    read_string(&std::fs::read_to_string(path)?)
}
