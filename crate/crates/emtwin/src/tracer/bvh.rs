//! Axis-aligned bounding box hierarchy over world triangles with
//! Moller-Trumbore intersection. Built once per scene variant; queries are
//! nearest-hit or any-hit-in-range. Construction is deterministic (median
//! split on the longest centroid axis, index tiebreak).

use crate::math::{vec3, Vec3};
use crate::scene::WorldTri;

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    /// Geometric normal oriented against the ray direction.
    pub normal: Vec3,
    pub tri_id: u32,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Internal: index of left child (right = left + 1). Leaf: u32::MAX.
    left: u32,
    start: u32,
    count: u32,
}

pub struct Bvh {
    nodes: Vec<Node>,
    /// Triangle indices in tree order.
    order: Vec<u32>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(tris: &[WorldTri]) -> Bvh {
        let mut order: Vec<u32> = (0..tris.len() as u32).collect();
        let mut nodes = Vec::new();
        if tris.is_empty() {
            nodes.push(Node {
                lo: Vec3::ZERO,
                hi: Vec3::ZERO,
                left: u32::MAX,
                start: 0,
                count: 0,
            });
            return Bvh { nodes, order };
        }
        let centroids: Vec<Vec3> =
            tris.iter().map(|t| (t.v[0] + t.v[1] + t.v[2]) / 3.0).collect();
        nodes.push(Node { lo: Vec3::ZERO, hi: Vec3::ZERO, left: 0, start: 0, count: 0 });
        build_node(&mut nodes, 0, &mut order, 0, tris.len(), tris, &centroids);
        Bvh { nodes, order }
    }

    /// Nearest intersection with t in (t_min, t_max).
    pub fn intersect(
        &self,
        tris: &[WorldTri],
        orig: Vec3,
        dir: Vec3,
        t_min: f64,
        t_max: f64,
    ) -> Option<Hit> {
        let inv = vec3(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp] as usize];
            if !slab_hit(node.lo, node.hi, orig, inv, t_min, limit) {
                continue;
            }
            if node.left == u32::MAX {
                for &ti in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let tri = &tris[ti as usize];
                    if let Some(t) = ray_triangle(orig, dir, tri.v) {
                        if t > t_min && t < limit {
                            limit = t;
                            let n = if tri.normal.dot(dir) > 0.0 { -tri.normal } else { tri.normal };
                            best = Some(Hit {
                                t,
                                point: orig + dir * t,
                                normal: n,
                                tri_id: ti,
                            });
                        }
                    }
                }
            } else {
                stack[sp] = node.left;
                stack[sp + 1] = node.left + 1;
                sp += 2;
            }
        }
        best
    }

    /// True when any triangle blocks the open segment (t_min, t_max) along
    /// `dir` from `orig`.
    pub fn occluded(
        &self,
        tris: &[WorldTri],
        orig: Vec3,
        dir: Vec3,
        t_min: f64,
        t_max: f64,
    ) -> bool {
        let inv = vec3(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = self.nodes[stack[sp] as usize];
            if !slab_hit(node.lo, node.hi, orig, inv, t_min, t_max) {
                continue;
            }
            if node.left == u32::MAX {
                for &ti in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    if let Some(t) = ray_triangle(orig, dir, tris[ti as usize].v) {
                        if t > t_min && t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = node.left;
                stack[sp + 1] = node.left + 1;
                sp += 2;
            }
        }
        false
    }
}

fn build_node(
    nodes: &mut Vec<Node>,
    node_idx: usize,
    order: &mut [u32],
    start: usize,
    count: usize,
    tris: &[WorldTri],
    centroids: &[Vec3],
) {
    let slice = &order[start..start + count];
    let mut lo = vec3(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = vec3(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &ti in slice {
        for v in tris[ti as usize].v {
            lo = lo.min_elem(v);
            hi = hi.max_elem(v);
        }
    }
    if count <= LEAF_SIZE {
        nodes[node_idx] =
            Node { lo, hi, left: u32::MAX, start: start as u32, count: count as u32 };
        return;
    }
    let ext = hi - lo;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    order[start..start + count].sort_by(|&a, &b| {
        centroids[a as usize]
            .axis(axis)
            .partial_cmp(&centroids[b as usize].axis(axis))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mid = count / 2;
    let left = nodes.len();
    nodes.push(Node { lo: Vec3::ZERO, hi: Vec3::ZERO, left: 0, start: 0, count: 0 });
    nodes.push(Node { lo: Vec3::ZERO, hi: Vec3::ZERO, left: 0, start: 0, count: 0 });
    nodes[node_idx] = Node { lo, hi, left: left as u32, start: 0, count: 0 };
    build_node(nodes, left, order, start, mid, tris, centroids);
    build_node(nodes, left + 1, order, start + mid, count - mid, tris, centroids);
}

fn slab_hit(lo: Vec3, hi: Vec3, orig: Vec3, inv: Vec3, t_min: f64, t_max: f64) -> bool {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for a in 0..3 {
        let i = inv.axis(a);
        let mut near = (lo.axis(a) - orig.axis(a)) * i;
        let mut far = (hi.axis(a) - orig.axis(a)) * i;
        if near > far {
            std::mem::swap(&mut near, &mut far);
        }
        t0 = t0.max(near);
        t1 = t1.min(far);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Moller-Trumbore, two-sided. Returns the ray parameter t.
pub fn ray_triangle(orig: Vec3, dir: Vec3, v: [Vec3; 3]) -> Option<f64> {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let pv = dir.cross(e2);
    let det = e1.dot(pv);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv_det = 1.0 / det;
    let tv = orig - v[0];
    let u = tv.dot(pv) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qv = tv.cross(e1);
    let w = dir.dot(qv) * inv_det;
    if w < -1e-12 || u + w > 1.0 + 1e-12 {
        return None;
    }
    Some(e2.dot(qv) * inv_det)
}

/// Barycentric containment test with slack, used to validate refined
/// specular points against their claimed triangle.
pub fn point_in_triangle(p: Vec3, v: [Vec3; 3], slack: f64) -> bool {
    let e1 = v[1] - v[0];
    let e2 = v[2] - v[0];
    let n = e1.cross(e2);
    let nn = n.norm_sq();
    if nn < 1e-24 {
        return false;
    }
    let d = p - v[0];
    let u = d.cross(e2).dot(n) / nn;
    let w = e1.cross(d).dot(n) / nn;
    u >= -slack && w >= -slack && u + w <= 1.0 + slack
}
