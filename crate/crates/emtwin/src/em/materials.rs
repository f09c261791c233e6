//! Ground-truth material parameters for the analytic channel oracle.
//! Values live in a versioned fixture file (`data/materials_v1.txt`), never
//! in code; the learned twin has no access to this table.

use crate::textio::{fmt_f64, ParseError, Tokens};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("material table parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("unknown material id {0}")]
    Unknown(u32),
    #[error("duplicate material id {0}")]
    Duplicate(u32),
    #[error("material io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub id: u32,
    pub name: String,
    /// Real relative permittivity.
    pub eps_r: f64,
    /// Conductivity in S/m at the table's reference frequency.
    pub sigma: f64,
    /// Diffuse scattering coefficient in [0, 1].
    pub scat_s: f64,
    /// Directive scattering lobe exponent.
    pub lobe_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialTable {
    pub materials: Vec<Material>,
}

impl MaterialTable {
    pub fn get(&self, id: u32) -> Result<&Material, MaterialError> {
        self.materials.iter().find(|m| m.id == id).ok_or(MaterialError::Unknown(id))
    }

    /// The repository's versioned fixture table.
    pub fn bundled() -> MaterialTable {
        MaterialTable::load_str(include_str!("../../data/materials_v1.txt"))
            .expect("bundled material table is valid")
    }

    pub fn load_str(src: &str) -> Result<MaterialTable, MaterialError> {
        let mut t = Tokens::new(src);
        t.expect("materials")?;
        t.expect("v1")?;
        let mut materials: Vec<Material> = Vec::new();
        while !t.at_end() {
            t.expect("material")?;
            let id = t.u32()?;
            if materials.iter().any(|m| m.id == id) {
                return Err(MaterialError::Duplicate(id));
            }
            let name = t.next()?.to_string();
            materials.push(Material {
                id,
                name,
                eps_r: t.f64()?,
                sigma: t.f64()?,
                scat_s: t.f64()?,
                lobe_alpha: t.f64()?,
            });
        }
        Ok(MaterialTable { materials })
    }

    pub fn load_path(path: &std::path::Path) -> Result<MaterialTable, MaterialError> {
        MaterialTable::load_str(&std::fs::read_to_string(path)?)
    }

    pub fn save_string(&self) -> String {
        let mut s = String::from("materials v1\n");
        for m in &self.materials {
            let _ = writeln!(
                s,
                "material {} {} {} {} {} {}",
                m.id,
                m.name,
                fmt_f64(m.eps_r),
                fmt_f64(m.sigma),
                fmt_f64(m.scat_s),
                fmt_f64(m.lobe_alpha)
            );
        }
        s
    }
}
