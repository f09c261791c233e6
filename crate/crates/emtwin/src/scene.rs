//! Segmented scene model: objects with posed triangle meshes, explicit
//! diffraction wedges, and tx/rx endpoints. Triangles are grouped into
//! surfaces; a surface's material id is ground-truth metadata consumed only
//! by the analytic channel oracle, never by the learned twin.
//!
//! Scene files are structured text (see `fixtures/*.scene`):
//!
//! ```text
//! scene v1
//! tx { position 0 0 2 quaternion 1 0 0 0 }
//! rx { position 1 0 1 quaternion 1 0 0 0 }
//! object {
//!   id 0
//!   position 0 0 0
//!   quaternion 1 0 0 0
//!   surface {
//!     material 1
//!     triangle v -1 -1 0 v 1 -1 0 v 1 1 0
//!   }
//!   wedge { e -1 -1 0 e 1 -1 0 n 0 0 1 n 0 -1 0 material 1 }
//! }
//! ```
//!
//! The parser rejects unknown fields. Serialization uses shortest
//! round-tripping decimal floats, so save -> load reproduces every value
//! bit-exactly.

use crate::math::{vec3, Pose, Quat, Vec3};
use crate::textio::{fmt_f64, ParseError, Tokens};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("scene io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Triangles sharing one material, in object-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    pub material_id: u32,
    pub triangles: Vec<[Vec3; 3]>,
}

/// An explicit diffracting edge: segment endpoints plus the unit outward
/// normals of the two faces meeting there, all in object-local coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Wedge {
    pub e0: Vec3,
    pub e1: Vec3,
    pub n0: Vec3,
    pub nn: Vec3,
    pub material_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub id: u32,
    pub pose: Pose,
    pub surfaces: Vec<Surface>,
    pub wedges: Vec<Wedge>,
    /// Largest local AABB extent; recomputed at load, used to normalize
    /// object-local query positions.
    pub max_dim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub objects: Vec<ObjectModel>,
    pub tx: Pose,
    pub rx: Pose,
    /// Largest world AABB extent over all object geometry; recomputed at
    /// load and after pose edits, used to normalize path segment lengths.
    pub max_dim: f64,
}

impl ObjectModel {
    fn recompute_max_dim(&mut self) {
        let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = vec3(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for s in &self.surfaces {
            for t in &s.triangles {
                for &v in t {
                    lo = lo.min_elem(v);
                    hi = hi.max_elem(v);
                    any = true;
                }
            }
        }
        for w in &self.wedges {
            for &v in &[w.e0, w.e1] {
                lo = lo.min_elem(v);
                hi = hi.max_elem(v);
                any = true;
            }
        }
        let ext = hi - lo;
        self.max_dim = if any { ext.x.max(ext.y).max(ext.z).max(1e-12) } else { 1.0 };
    }

    /// Maps a world point into the object's pose-independent embedding
    /// coordinates: rotate/translate into the local frame, then divide by
    /// the object's largest extent.
    pub fn to_local_normalized(&self, p_world: Vec3) -> Vec3 {
        self.pose.to_local(p_world) / self.max_dim
    }
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&ObjectModel> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn recompute_max_dim(&mut self) {
        let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = vec3(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for o in &self.objects {
            for s in &o.surfaces {
                for t in &s.triangles {
                    for &v in t {
                        let w = o.pose.to_world(v);
                        lo = lo.min_elem(w);
                        hi = hi.max_elem(w);
                        any = true;
                    }
                }
            }
        }
        let ext = hi - lo;
        self.max_dim = if any { ext.x.max(ext.y).max(ext.z).max(1e-12) } else { 1.0 };
    }

    /// Returns a copy with the listed objects re-posed and derived extents
    /// refreshed. Object ids stay stable across variants.
    pub fn with_edits(&self, edits: &[(u32, Pose)]) -> Result<Scene, SceneError> {
        let mut out = self.clone();
        for &(id, pose) in edits {
            let obj = out
                .objects
                .iter_mut()
                .find(|o| o.id == id)
                .ok_or(SceneError::UnknownObject(id))?;
            obj.pose = pose;
        }
        out.recompute_max_dim();
        Ok(out)
    }

    pub fn with_rx(&self, rx: Pose) -> Scene {
        let mut out = self.clone();
        out.rx = rx;
        out
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |msg: String| Err(SceneError::Invalid(msg));
        let mut seen_ids = Vec::new();
        for o in &self.objects {
            if seen_ids.contains(&o.id) {
                return bad(format!("duplicate object id {}", o.id));
            }
            seen_ids.push(o.id);
            if !o.pose.orientation.is_unit(1e-9) {
                return bad(format!("object {}: quaternion is not unit length", o.id));
            }
            if o.surfaces.iter().all(|s| s.triangles.is_empty()) && o.wedges.is_empty() {
                return bad(format!("object {}: no geometry", o.id));
            }
            for (si, s) in o.surfaces.iter().enumerate() {
                for (ti, t) in s.triangles.iter().enumerate() {
                    let area2 = (t[1] - t[0]).cross(t[2] - t[0]).norm();
                    if !(area2 > 2e-12) {
                        return bad(format!(
                            "object {}: surface {si} triangle {ti} is degenerate",
                            o.id
                        ));
                    }
                }
            }
            for (wi, w) in o.wedges.iter().enumerate() {
                if (w.e1 - w.e0).norm() < 1e-9 {
                    return bad(format!("object {}: wedge {wi} has zero-length edge", o.id));
                }
                for n in [w.n0, w.nn] {
                    if (n.norm() - 1.0).abs() > 1e-9 {
                        return bad(format!("object {}: wedge {wi} normal is not unit", o.id));
                    }
                }
                // Convex wedge: faces neither coplanar nor folded flat shut.
                if w.n0.dot(w.nn).abs() > 1.0 - 1e-9 {
                    return bad(format!(
                        "object {}: wedge {wi} face normals are (anti)parallel",
                        o.id
                    ));
                }
                let edge = (w.e1 - w.e0).normalized();
                for n in [w.n0, w.nn] {
                    if n.dot(edge).abs() > 1e-6 {
                        return bad(format!(
                            "object {}: wedge {wi} normal is not perpendicular to the edge",
                            o.id
                        ));
                    }
                }
            }
        }
        for (name, pose) in [("tx", self.tx), ("rx", self.rx)] {
            if !pose.orientation.is_unit(1e-9) {
                return bad(format!("{name}: quaternion is not unit length"));
            }
            if !pose.position.is_finite() {
                return bad(format!("{name}: position is not finite"));
            }
        }
        Ok(())
    }

    pub fn load_str(src: &str) -> Result<Scene, SceneError> {
        let mut t = Tokens::new(src);
        t.expect("scene")?;
        t.expect("v1")?;
        let mut tx = None;
        let mut rx = None;
        let mut objects = Vec::new();
        while !t.at_end() {
            match t.next()? {
                "tx" => tx = Some(parse_pose_block(&mut t)?),
                "rx" => rx = Some(parse_pose_block(&mut t)?),
                "object" => objects.push(parse_object(&mut t)?),
                other => {
                    return Err(t.err(format!("unknown scene field `{other}`")).into());
                }
            }
        }
        let tx = tx.ok_or_else(|| SceneError::Invalid("missing tx block".into()))?;
        let rx = rx.ok_or_else(|| SceneError::Invalid("missing rx block".into()))?;
        let mut scene = Scene { objects, tx, rx, max_dim: 0.0 };
        for o in &mut scene.objects {
            o.recompute_max_dim();
        }
        scene.recompute_max_dim();
        scene.validate()?;
        Ok(scene)
    }

    pub fn load_path(path: &std::path::Path) -> Result<Scene, SceneError> {
        Scene::load_str(&std::fs::read_to_string(path)?)
    }

    pub fn save_string(&self) -> String {
        let mut s = String::new();
        s.push_str("scene v1\n");
        write_pose_block(&mut s, "tx", self.tx);
        write_pose_block(&mut s, "rx", self.rx);
        for o in &self.objects {
            let _ = writeln!(s, "object {{");
            let _ = writeln!(s, "  id {}", o.id);
            let _ = writeln!(s, "  position {}", fmt_vec3(o.pose.position));
            let _ = writeln!(s, "  quaternion {}", fmt_quat(o.pose.orientation));
            for surf in &o.surfaces {
                let _ = writeln!(s, "  surface {{");
                let _ = writeln!(s, "    material {}", surf.material_id);
                for t in &surf.triangles {
                    let _ = writeln!(
                        s,
                        "    triangle v {} v {} v {}",
                        fmt_vec3(t[0]),
                        fmt_vec3(t[1]),
                        fmt_vec3(t[2])
                    );
                }
                let _ = writeln!(s, "  }}");
            }
            for w in &o.wedges {
                let _ = writeln!(
                    s,
                    "  wedge {{ e {} e {} n {} n {} material {} }}",
                    fmt_vec3(w.e0),
                    fmt_vec3(w.e1),
                    fmt_vec3(w.n0),
                    fmt_vec3(w.nn),
                    w.material_id
                );
            }
            let _ = writeln!(s, "}}");
        }
        s
    }

    pub fn save_path(&self, path: &std::path::Path) -> Result<(), SceneError> {
        std::fs::write(path, self.save_string())?;
        Ok(())
    }
}

fn fmt_vec3(v: Vec3) -> String {
    format!("{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))
}

fn fmt_quat(q: Quat) -> String {
    format!("{} {} {} {}", fmt_f64(q.w), fmt_f64(q.x), fmt_f64(q.y), fmt_f64(q.z))
}

fn write_pose_block(s: &mut String, name: &str, pose: Pose) {
    let _ = writeln!(
        s,
        "{name} {{ position {} quaternion {} }}",
        fmt_vec3(pose.position),
        fmt_quat(pose.orientation)
    );
}

fn parse_vec3(t: &mut Tokens) -> Result<Vec3, ParseError> {
    Ok(vec3(t.f64()?, t.f64()?, t.f64()?))
}

fn parse_quat(t: &mut Tokens) -> Result<Quat, ParseError> {
    Ok(Quat::new(t.f64()?, t.f64()?, t.f64()?, t.f64()?))
}

pub(crate) fn parse_pose_block(t: &mut Tokens) -> Result<Pose, ParseError> {
    t.expect("{")?;
    let mut position = None;
    let mut orientation = None;
    loop {
        match t.next()? {
            "}" => break,
            "position" => position = Some(parse_vec3(t)?),
            "quaternion" => orientation = Some(parse_quat(t)?),
            other => return Err(t.err(format!("unknown pose field `{other}`"))),
        }
    }
    match (position, orientation) {
        (Some(p), Some(q)) => Ok(Pose::new(p, q)),
        _ => Err(t.err("pose block needs `position` and `quaternion`")),
    }
}

fn parse_object(t: &mut Tokens) -> Result<ObjectModel, ParseError> {
    t.expect("{")?;
    let mut id = None;
    let mut position = Vec3::ZERO;
    let mut orientation = Quat::IDENTITY;
    let mut surfaces = Vec::new();
    let mut wedges = Vec::new();
    loop {
        match t.next()? {
            "}" => break,
            "id" => id = Some(t.u32()?),
            "position" => position = parse_vec3(t)?,
            "quaternion" => orientation = parse_quat(t)?,
            "surface" => surfaces.push(parse_surface(t)?),
            "wedge" => wedges.push(parse_wedge(t)?),
            other => return Err(t.err(format!("unknown object field `{other}`"))),
        }
    }
    let id = id.ok_or_else(|| t.err("object block needs `id`"))?;
    Ok(ObjectModel {
        id,
        pose: Pose::new(position, orientation),
        surfaces,
        wedges,
        max_dim: 0.0,
    })
}

fn parse_surface(t: &mut Tokens) -> Result<Surface, ParseError> {
    t.expect("{")?;
    let mut material_id = None;
    let mut triangles = Vec::new();
    loop {
        match t.next()? {
            "}" => break,
            "material" => material_id = Some(t.u32()?),
            "triangle" => {
                let mut vs = [Vec3::ZERO; 3];
                for v in &mut vs {
                    t.expect("v")?;
                    *v = parse_vec3(t)?;
                }
                triangles.push(vs);
            }
            other => return Err(t.err(format!("unknown surface field `{other}`"))),
        }
    }
    let material_id = material_id.ok_or_else(|| t.err("surface block needs `material`"))?;
    Ok(Surface { material_id, triangles })
}

fn parse_wedge(t: &mut Tokens) -> Result<Wedge, ParseError> {
    t.expect("{")?;
    let mut es = Vec::new();
    let mut ns = Vec::new();
    let mut material_id = None;
    loop {
        match t.next()? {
            "}" => break,
            "e" => es.push(parse_vec3(t)?),
            "n" => ns.push(parse_vec3(t)?),
            "material" => material_id = Some(t.u32()?),
            other => return Err(t.err(format!("unknown wedge field `{other}`"))),
        }
    }
    if es.len() != 2 || ns.len() != 2 {
        return Err(t.err("wedge block needs two `e` endpoints and two `n` normals"));
    }
    let material_id = material_id.ok_or_else(|| t.err("wedge block needs `material`"))?;
    Ok(Wedge { e0: es[0], e1: es[1], n0: ns[0], nn: ns[1], material_id })
}

/// A triangle in world coordinates along with the object and material it
/// belongs to. `tri_id` is the stable flattened index used for path
/// ordering and deduplication.
#[derive(Debug, Clone, Copy)]
pub struct WorldTri {
    pub v: [Vec3; 3],
    pub normal: Vec3,
    pub tri_id: u32,
    pub object_id: u32,
    pub material_id: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct WorldWedge {
    pub e0: Vec3,
    pub e1: Vec3,
    pub n0: Vec3,
    pub nn: Vec3,
    pub wedge_id: u32,
    pub object_id: u32,
    pub material_id: u32,
}

/// Flattens the scene into world-space primitives in deterministic order
/// (objects as listed, surfaces and triangles as listed).
pub fn world_geometry(scene: &Scene) -> (Vec<WorldTri>, Vec<WorldWedge>) {
    let mut tris = Vec::new();
    let mut wedges = Vec::new();
    for o in &scene.objects {
        for s in &o.surfaces {
            for t in &s.triangles {
                let v = [o.pose.to_world(t[0]), o.pose.to_world(t[1]), o.pose.to_world(t[2])];
                let normal = (v[1] - v[0]).cross(v[2] - v[0]).normalized();
                tris.push(WorldTri {
                    v,
                    normal,
                    tri_id: tris.len() as u32,
                    object_id: o.id,
                    material_id: s.material_id,
                });
            }
        }
        for w in &o.wedges {
            wedges.push(WorldWedge {
                e0: o.pose.to_world(w.e0),
                e1: o.pose.to_world(w.e1),
                n0: o.pose.dir_to_world(w.n0),
                nn: o.pose.dir_to_world(w.nn),
                wedge_id: wedges.len() as u32,
                object_id: o.id,
                material_id: w.material_id,
            });
        }
    }
    (tris, wedges)
}
