//! Geometric path tracing between tx and rx by shooting-and-bouncing rays.
//!
//! Three path families are produced:
//! * line of sight plus pure specular chains up to `max_depth` reflections,
//!   found by launching a low-discrepancy ray fan, capturing chains whose
//!   reflected segments pass within a distance-proportional reception
//!   sphere of rx, then exactifying every captured chain with the image
//!   method (so reported reflection points are solutions, not samples);
//! * chains of up to `max_depth - 1` reflections terminated by exactly one
//!   scattering event redirected straight to rx (one candidate per distinct
//!   triangle sequence, first hit in launch order wins);
//! * first-order edge diffraction tx -> wedge -> rx, with the diffraction
//!   point solved in closed form as the Fermat point on the edge segment
//!   (equal-angle Keller condition holds by construction).
//!
//! Output is deduplicated by (interaction kind sequence, primitive ids) and
//! sorted by that key, so identical inputs give byte-identical path lists.

pub mod bvh;

use crate::math::{vec3, Vec3, SPEED_OF_LIGHT};
use crate::polarization::direction_angles;
use crate::scene::{world_geometry, Scene, WorldTri, WorldWedge};
use bvh::{point_in_triangle, Bvh};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("degenerate path segment (length {0} m)")]
    DegenerateSegment(f64),
    #[error("segment count must be interaction count + 1")]
    SegmentMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InteractionKind {
    Reflection,
    Diffraction,
    Scattering,
}

impl InteractionKind {
    pub fn code(self) -> u8 {
        match self {
            InteractionKind::Reflection => 0,
            InteractionKind::Diffraction => 1,
            InteractionKind::Scattering => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            InteractionKind::Reflection => "refl",
            InteractionKind::Diffraction => "diffr",
            InteractionKind::Scattering => "scat",
        }
    }
}

/// Local geometry at one interaction. Material ids ride along as
/// ground-truth metadata for the analytic oracle; the learned twin never
/// reads them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InteractionGeom {
    /// Reflection or scattering on a triangle; `n` is the surface normal
    /// oriented against the incoming direction.
    Surface { n: Vec3, tri_id: u32, material_id: u32 },
    /// Wedge diffraction; face normals as declared in the scene.
    Wedge { n0: Vec3, nn: Vec3, wedge_id: u32, material_id: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionRecord {
    pub kind: InteractionKind,
    /// World interaction point.
    pub p: Vec3,
    pub object_id: u32,
    /// Incoming travel direction (unit, pointing into `p`).
    pub d_aoa: Vec3,
    /// Outgoing travel direction (unit, pointing away from `p`).
    pub d_aod: Vec3,
    pub geom: InteractionGeom,
}

impl InteractionRecord {
    pub fn primitive_id(&self) -> u32 {
        match self.geom {
            InteractionGeom::Surface { tri_id, .. } => tri_id,
            InteractionGeom::Wedge { wedge_id, .. } => wedge_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathGeometry {
    pub interactions: Vec<InteractionRecord>,
    /// Segment lengths tx -> p1 -> ... -> rx; always interactions + 1 long.
    pub seg_lengths: Vec<f64>,
    /// Propagation delay in seconds.
    pub tau: f64,
    /// Departure direction (unit) and its (theta, phi) angles.
    pub d_first: Vec3,
    pub aod: (f64, f64),
    /// Arrival travel direction (unit, pointing into rx) and its angles.
    pub d_last: Vec3,
    pub aoa: (f64, f64),
    /// Spreading amplitude a_l, defined so that a_l / seg_lengths[0] equals
    /// the composite geometric spreading of the path family.
    pub spread: f64,
}

impl PathGeometry {
    pub fn total_length(&self) -> f64 {
        self.seg_lengths.iter().sum()
    }

    pub fn sort_key(&self) -> Vec<(u8, u32)> {
        self.interactions.iter().map(|r| (r.kind.code(), r.primitive_id())).collect()
    }

    /// Compact readable id like `los`, `r4`, `r4-s11`, `d2`.
    pub fn tag(&self) -> String {
        if self.interactions.is_empty() {
            return "los".into();
        }
        self.interactions
            .iter()
            .map(|r| {
                let c = match r.kind {
                    InteractionKind::Reflection => 'r',
                    InteractionKind::Diffraction => 'd',
                    InteractionKind::Scattering => 's',
                };
                format!("{c}{}", r.primitive_id())
            })
            .collect::<Vec<_>>()
            .join("-")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceConfig {
    pub n_rays: usize,
    pub max_depth: u32,
    /// Reception sphere scale; the radius at unfolded distance d is
    /// `capture_c * d * mean_angular_spacing`. Image-method refinement
    /// validates every capture, so this can be generous.
    pub capture_c: f64,
    /// Self-intersection guard for rays leaving a surface (m).
    pub eps_self: f64,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> TraceConfig {
        TraceConfig { n_rays: 8000, max_depth: 3, capture_c: 2.0, eps_self: 1e-6, seed: 0 }
    }
}

/// World geometry flattened and indexed for tracing; build once per scene
/// variant and reuse across rx positions.
pub struct GeometryIndex {
    pub tris: Vec<WorldTri>,
    pub wedges: Vec<WorldWedge>,
    pub bvh: Bvh,
}

impl GeometryIndex {
    pub fn new(scene: &Scene) -> GeometryIndex {
        let (tris, wedges) = world_geometry(scene);
        let bvh = Bvh::build(&tris);
        GeometryIndex { tris, wedges, bvh }
    }

    fn occluded_segment(&self, a: Vec3, b: Vec3, eps: f64) -> bool {
        let d = b - a;
        let len = d.norm();
        if len <= 2.0 * eps {
            return true;
        }
        let dir = d / len;
        self.bvh.occluded(&self.tris, a, dir, eps, len - eps)
    }
}

/// Deterministic low-discrepancy unit directions: a Fibonacci sphere
/// rotated by a seed-derived random rotation.
pub fn sample_directions(n: usize, seed: u64) -> Vec<Vec3> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let axis = loop {
        let v = vec3(
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if v.norm_sq() > 1e-3 && v.norm_sq() <= 1.0 {
            break v.normalized();
        }
    };
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let q = crate::math::Quat::from_axis_angle(axis, angle);
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            q.rotate(vec3(r * phi.cos(), r * phi.sin(), z))
        })
        .collect()
}

/// Mean angular spacing of an n-ray fan (each ray owns 4pi/n steradians).
pub fn mean_angular_spacing(n: usize) -> f64 {
    (4.0 * std::f64::consts::PI / n as f64).sqrt()
}

/// Spreading amplitude a_l for one path, defined so a_l / d_1 equals the
/// family's composite spreading factor:
/// * LoS / specular chains: 1 / sum(d_i), so a_l = d_1 / sum(d_i);
/// * chains ending in a scatter: (1/sum(d_pre)) * (1/d_last), so
///   a_l = d_1 / (sum(d_pre) * d_last);
/// * single diffraction: (1/s') * sqrt(s' / (s (s' + s))), so
///   a_l = sqrt(s' / (s (s' + s))).
pub fn spread_factor(kinds: &[InteractionKind], segs: &[f64]) -> Result<f64, TraceError> {
    if segs.len() != kinds.len() + 1 {
        return Err(TraceError::SegmentMismatch);
    }
    for &s in segs {
        if !(s > 1e-9) {
            return Err(TraceError::DegenerateSegment(s));
        }
    }
    let d1 = segs[0];
    Ok(match kinds.last() {
        Some(InteractionKind::Scattering) => {
            let pre: f64 = segs[..segs.len() - 1].iter().sum();
            let last = segs[segs.len() - 1];
            d1 / (pre * last)
        }
        Some(InteractionKind::Diffraction) => {
            let sp = segs[0];
            let s = segs[1];
            (sp / (s * (sp + s))).sqrt()
        }
        _ => d1 / segs.iter().sum::<f64>(),
    })
}

/// Fermat point of tx -> edge -> rx on the segment (e0, e1): the interior
/// minimizer of |tx - q| + |q - rx|, solved by unfolding into the plane.
/// Returns the point and its normalized edge parameter, or None when the
/// stationary point falls outside the open segment or the geometry is
/// degenerate (an endpoint on the edge line).
pub fn find_diffraction_point(tx: Vec3, rx: Vec3, e0: Vec3, e1: Vec3) -> Option<(Vec3, f64)> {
    let u = e1 - e0;
    let len = u.norm();
    if len < 1e-12 {
        return None;
    }
    let uh = u / len;
    let a = tx - e0;
    let b = rx - e0;
    let a_par = a.dot(uh);
    let b_par = b.dot(uh);
    let a_perp = (a - uh * a_par).norm();
    let b_perp = (b - uh * b_par).norm();
    if a_perp < 1e-9 || b_perp < 1e-9 {
        return None;
    }
    let s = (a_par * b_perp + b_par * a_perp) / (a_perp + b_perp);
    let t = s / len;
    if !(1e-9..=1.0 - 1e-9).contains(&t) {
        return None;
    }
    Some((e0 + uh * s, t))
}

pub fn trace_paths(scene: &Scene, cfg: &TraceConfig) -> Vec<PathGeometry> {
    let idx = GeometryIndex::new(scene);
    trace_paths_indexed(&idx, scene.tx.position, scene.rx.position, cfg)
}

pub fn trace_paths_indexed(
    idx: &GeometryIndex,
    tx: Vec3,
    rx: Vec3,
    cfg: &TraceConfig,
) -> Vec<PathGeometry> {
    let eps = cfg.eps_self;
    let mut paths: Vec<PathGeometry> = Vec::new();

    // Line of sight.
    if !idx.occluded_segment(tx, rx, eps) {
        if let Some(p) = assemble_path(&[], &[tx, rx]) {
            paths.push(p);
        }
    }

    // Shooting and bouncing: collect specular chain candidates (by capture
    // sphere) and scatter candidates (every first-seen lit triangle).
    let delta_alpha = mean_angular_spacing(cfg.n_rays);
    let mut chain_keys: BTreeSet<Vec<u32>> = BTreeSet::new();
    let mut scatter_hits: BTreeMap<Vec<u32>, Vec3> = BTreeMap::new();
    for dir in sample_directions(cfg.n_rays, cfg.seed) {
        let mut p = tx;
        let mut d = dir;
        let mut unfolded = 0.0f64;
        let mut chain: Vec<u32> = Vec::new();
        for _ in 0..cfg.max_depth {
            let hit = idx.bvh.intersect(&idx.tris, p, d, eps, f64::INFINITY);
            let t_hit = hit.as_ref().map(|h| h.t).unwrap_or(f64::INFINITY);
            // Reception-sphere test on the current segment (skip the direct
            // segment: LoS is handled exactly above).
            if !chain.is_empty() {
                let foot = (rx - p).dot(d);
                if foot > eps && foot < t_hit - eps {
                    let perp = (rx - (p + d * foot)).norm();
                    if perp < cfg.capture_c * (unfolded + foot) * delta_alpha {
                        chain_keys.insert(chain.clone());
                    }
                }
            }
            let Some(hit) = hit else { break };
            // Scattering candidate: redirect this hit straight to rx.
            if (rx - hit.point).dot(hit.normal) > 0.0 {
                let mut key = chain.clone();
                key.push(hit.tri_id);
                scatter_hits.entry(key).or_insert(hit.point);
            }
            chain.push(hit.tri_id);
            unfolded += hit.t;
            p = hit.point;
            d = d - hit.normal * (2.0 * d.dot(hit.normal));
        }
        // Segment after the final allowed bounce.
        if !chain.is_empty() {
            let hit = idx.bvh.intersect(&idx.tris, p, d, eps, f64::INFINITY);
            let t_hit = hit.map(|h| h.t).unwrap_or(f64::INFINITY);
            let foot = (rx - p).dot(d);
            if foot > eps && foot < t_hit - eps {
                let perp = (rx - (p + d * foot)).norm();
                if perp < cfg.capture_c * (unfolded + foot) * delta_alpha {
                    chain_keys.insert(chain.clone());
                }
            }
        }
    }

    // Exactify specular chains with the image method and validate.
    for chain in &chain_keys {
        if let Some(points) = refine_specular_chain(idx, tx, rx, chain, eps) {
            if let Some(p) = assemble_path(
                &chain
                    .iter()
                    .map(|&ti| (InteractionKind::Reflection, ti))
                    .collect::<Vec<_>>(),
                &points,
            ) {
                paths.push(finish_surface_path(idx, p));
            }
        }
    }

    // Scatter paths: specular prefix refined toward the recorded hit point,
    // last leg must reach rx unoccluded.
    for (key, &scatter_p) in &scatter_hits {
        let (prefix, scatter_tri) = key.split_at(key.len() - 1);
        let points = if prefix.is_empty() {
            if idx.occluded_segment(tx, scatter_p, eps) {
                continue;
            }
            vec![tx, scatter_p]
        } else {
            match refine_specular_chain(idx, tx, scatter_p, prefix, eps) {
                Some(pts) => pts,
                None => continue,
            }
        };
        if idx.occluded_segment(scatter_p, rx, eps) {
            continue;
        }
        let mut points = points;
        points.push(rx);
        let mut kinds: Vec<(InteractionKind, u32)> =
            prefix.iter().map(|&ti| (InteractionKind::Reflection, ti)).collect();
        kinds.push((InteractionKind::Scattering, scatter_tri[0]));
        if let Some(p) = assemble_path(&kinds, &points) {
            paths.push(finish_surface_path(idx, p));
        }
    }

    // First-order wedge diffraction.
    for w in &idx.wedges {
        let Some((q, _t)) = find_diffraction_point(tx, rx, w.e0, w.e1) else { continue };
        let bis = (w.n0 + w.nn).try_normalized().unwrap_or(w.n0);
        let q_eps = q + bis * eps;
        if idx.occluded_segment(tx, q_eps, eps) || idx.occluded_segment(q_eps, rx, eps) {
            continue;
        }
        if let Some(mut p) = assemble_path(
            &[(InteractionKind::Diffraction, w.wedge_id)],
            &[tx, q, rx],
        ) {
            p.interactions[0].object_id = w.object_id;
            p.interactions[0].geom = InteractionGeom::Wedge {
                n0: w.n0,
                nn: w.nn,
                wedge_id: w.wedge_id,
                material_id: w.material_id,
            };
            paths.push(p);
        }
    }

    paths.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    paths
}

/// Solves the exact reflection points for a triangle-id chain via
/// successive images of tx, walking back from the receiver end. Returns the
/// full point list tx..points..target, or None when any reflection point
/// leaves its triangle, a segment param leaves (0, 1), or the polyline is
/// occluded.
fn refine_specular_chain(
    idx: &GeometryIndex,
    tx: Vec3,
    target: Vec3,
    chain: &[u32],
    eps: f64,
) -> Option<Vec<Vec3>> {
    let k = chain.len();
    let mut images = Vec::with_capacity(k + 1);
    images.push(tx);
    for &ti in chain {
        let tri = &idx.tris[ti as usize];
        let prev = *images.last().unwrap();
        let dist = (prev - tri.v[0]).dot(tri.normal);
        images.push(prev - tri.normal * (2.0 * dist));
    }
    let mut pts_rev = vec![target];
    let mut cur = target;
    for j in (0..k).rev() {
        let tri = &idx.tris[chain[j] as usize];
        let img = images[j + 1];
        let seg = img - cur;
        let denom = seg.dot(tri.normal);
        if denom.abs() < 1e-14 {
            return None;
        }
        let t = (tri.v[0] - cur).dot(tri.normal) / denom;
        if !(1e-9..=1.0 - 1e-9).contains(&t) {
            return None;
        }
        let q = cur + seg * t;
        if !point_in_triangle(q, tri.v, 1e-9) {
            return None;
        }
        pts_rev.push(q);
        cur = q;
    }
    pts_rev.push(tx);
    pts_rev.reverse();
    for w in pts_rev.windows(2) {
        if idx.occluded_segment(w[0], w[1], eps) {
            return None;
        }
    }
    Some(pts_rev)
}

/// Builds a path skeleton from interaction tags and the point polyline
/// (tx, p_1..p_k, rx). Surface geometry is filled in by
/// `finish_surface_path`; wedge geometry by the caller.
fn assemble_path(kinds: &[(InteractionKind, u32)], points: &[Vec3]) -> Option<PathGeometry> {
    debug_assert_eq!(points.len(), kinds.len() + 2);
    let mut segs = Vec::with_capacity(points.len() - 1);
    let mut dirs = Vec::with_capacity(points.len() - 1);
    for w in points.windows(2) {
        let d = w[1] - w[0];
        let len = d.norm();
        if len <= 1e-9 {
            return None;
        }
        segs.push(len);
        dirs.push(d / len);
    }
    let kind_seq: Vec<InteractionKind> = kinds.iter().map(|k| k.0).collect();
    let spread = spread_factor(&kind_seq, &segs).ok()?;
    let interactions = kinds
        .iter()
        .enumerate()
        .map(|(i, &(kind, id))| InteractionRecord {
            kind,
            p: points[i + 1],
            object_id: 0,
            d_aoa: dirs[i],
            d_aod: dirs[i + 1],
            geom: InteractionGeom::Surface { n: Vec3::ZERO, tri_id: id, material_id: 0 },
        })
        .collect();
    let tau = segs.iter().sum::<f64>() / SPEED_OF_LIGHT;
    let d_first = dirs[0];
    let d_last = *dirs.last().unwrap();
    Some(PathGeometry {
        interactions,
        seg_lengths: segs,
        tau,
        d_first,
        aod: direction_angles(d_first),
        d_last,
        aoa: direction_angles(d_last),
        spread,
    })
}

/// Fills surface normals, object and material ids from the triangle table,
/// orienting each normal against the incoming direction.
fn finish_surface_path(idx: &GeometryIndex, mut p: PathGeometry) -> PathGeometry {
    for rec in &mut p.interactions {
        if let InteractionGeom::Surface { n, tri_id, material_id } = &mut rec.geom {
            let tri = &idx.tris[*tri_id as usize];
            *n = if tri.normal.dot(rec.d_aoa) > 0.0 { -tri.normal } else { tri.normal };
            *material_id = tri.material_id;
            rec.object_id = tri.object_id;
        }
    }
    p
}
