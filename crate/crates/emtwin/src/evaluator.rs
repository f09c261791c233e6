//! Post-training analyses: empirical NMSE CDFs, channel-gain error maps
//! over a receiver grid, clustering of learned embeddings scored against
//! ground-truth materials, and per-subcarrier amplitude/phase errors.

use crate::em::{path_coefficient, MaterialError, MaterialTable};
use crate::math::{vec3, Vec3};
use crate::parallel::par_map;
use crate::scene::{ObjectModel, Scene};
use crate::textio::{fmt_f64, ParseError, Tokens};
use crate::tracer::{trace_paths_indexed, GeometryIndex, TraceConfig};
use crate::twin::{TwinError, TwinModel};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    Empty,
    #[error("subcarrier {0} has zero ground-truth amplitude")]
    ZeroSubcarrier(usize),
    #[error("channel length mismatch")]
    LengthMismatch,
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("grid spec parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("clustering: {0}")]
    Cluster(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Empirical CDF of dB values, ties resolved by rank/n.
pub fn nmse_cdf(values: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len() as f64;
    Ok(v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let idx = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1;
    v[idx]
}

pub fn cdf_csv(pairs: &[(f64, f64)]) -> String {
    let mut s = String::from("nmse_db,fraction\n");
    for (v, f) in pairs {
        let _ = writeln!(s, "{},{}", fmt_f64(*v), fmt_f64(*f));
    }
    s
}

/// Per-subcarrier (|a_pred - a_true| / a_true, |phase difference wrapped to
/// [-pi, pi)|) pairs.
pub fn amp_phase_error(
    h_true: &[Complex64],
    h_pred: &[Complex64],
) -> Result<Vec<(f64, f64)>, EvalError> {
    if h_true.len() != h_pred.len() {
        return Err(EvalError::LengthMismatch);
    }
    let mut out = Vec::with_capacity(h_true.len());
    for (k, (t, p)) in h_true.iter().zip(h_pred).enumerate() {
        let a = t.norm();
        if a <= 0.0 {
            return Err(EvalError::ZeroSubcarrier(k));
        }
        let amp = (p.norm() - a).abs() / a;
        let mut d = p.arg() - t.arg();
        while d < -PI {
            d += 2.0 * PI;
        }
        while d >= PI {
            d -= 2.0 * PI;
        }
        out.push((amp, d.abs()));
    }
    Ok(out)
}

/// Receiver grid on a plane spanned by two step vectors, plus the tracing
/// settings the sweep should use.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Vec3,
    pub step_x: Vec3,
    pub step_y: Vec3,
    pub nx: usize,
    pub ny: usize,
    pub n_rays: usize,
    pub max_depth: u32,
    pub capture_c: f64,
}

impl GridSpec {
    pub fn load_str(src: &str) -> Result<GridSpec, EvalError> {
        let mut t = Tokens::new(src);
        t.expect("grid")?;
        t.expect("v1")?;
        let mut spec = GridSpec {
            origin: Vec3::ZERO,
            step_x: vec3(1.0, 0.0, 0.0),
            step_y: vec3(0.0, 1.0, 0.0),
            nx: 1,
            ny: 1,
            n_rays: 8000,
            max_depth: 1,
            capture_c: 2.0,
        };
        let v3 = |t: &mut Tokens| -> Result<Vec3, ParseError> {
            Ok(vec3(t.f64()?, t.f64()?, t.f64()?))
        };
        while !t.at_end() {
            match t.next()? {
                "origin" => spec.origin = v3(&mut t)?,
                "step_x" => spec.step_x = v3(&mut t)?,
                "step_y" => spec.step_y = v3(&mut t)?,
                "nx" => spec.nx = t.usize()?,
                "ny" => spec.ny = t.usize()?,
                "n_rays" => spec.n_rays = t.usize()?,
                "max_depth" => spec.max_depth = t.u32()?,
                "capture_c" => spec.capture_c = t.f64()?,
                other => return Err(t.err(format!("unknown grid field `{other}`")).into()),
            }
        }
        Ok(spec)
    }

    pub fn load_path(path: &Path) -> Result<GridSpec, EvalError> {
        GridSpec::load_str(&std::fs::read_to_string(path)?)
    }

    pub fn point(&self, ix: usize, iy: usize) -> Vec3 {
        self.origin + self.step_x * ix as f64 + self.step_y * iy as f64
    }
}

fn gain_db(alphas: &[Complex64]) -> Option<f64> {
    let p: f64 = alphas.iter().map(|a| a.norm_sqr()).sum();
    (p > 0.0).then(|| 10.0 * p.log10())
}

/// |gain_twin_dB - gain_true_dB| per grid point, row-major [iy][ix]; cells
/// with no propagation paths (or zero gain) are None.
pub fn gain_error_grid(
    twin: &TwinModel,
    scene: &Scene,
    mats: &MaterialTable,
    spec: &GridSpec,
    workers: usize,
) -> Result<Vec<Vec<Option<f64>>>, EvalError> {
    let index = GeometryIndex::new(scene);
    let trace_cfg = TraceConfig {
        n_rays: spec.n_rays,
        max_depth: spec.max_depth,
        capture_c: spec.capture_c,
        eps_self: 1e-6,
        seed: 0,
    };
    let cells: Vec<(usize, usize)> =
        (0..spec.ny).flat_map(|iy| (0..spec.nx).map(move |ix| (ix, iy))).collect();
    let results = par_map(&cells, workers, |_, &(ix, iy)| -> Result<Option<f64>, EvalError> {
        let rx = spec.point(ix, iy);
        let paths = trace_paths_indexed(&index, scene.tx.position, rx, &trace_cfg);
        if paths.is_empty() {
            return Ok(None);
        }
        let mut true_alphas = Vec::with_capacity(paths.len());
        for p in &paths {
            true_alphas.push(path_coefficient(p, mats, twin.f_c, scene.max_dim)?);
        }
        let grid1 = twin.grid(1.0, 1);
        let ct = twin.channel_tape(scene, &paths, &grid1)?;
        let twin_alphas = ct.path_alphas();
        Ok(match (gain_db(&true_alphas), gain_db(&twin_alphas)) {
            (Some(a), Some(b)) => Some((b - a).abs()),
            _ => None,
        })
    });
    let flat = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(flat.chunks(spec.nx).map(|row| row.to_vec()).collect())
}

pub fn grid_csv(grid: &[Vec<Option<f64>>]) -> String {
    let nx = grid.first().map(|r| r.len()).unwrap_or(0);
    let mut s = String::from("row");
    for ix in 0..nx {
        let _ = write!(s, ",col{ix}");
    }
    s.push('\n');
    for (iy, row) in grid.iter().enumerate() {
        let _ = write!(s, "{iy}");
        for cell in row {
            match cell {
                Some(v) => {
                    let _ = write!(s, ",{}", fmt_f64(*v));
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Plain k-means with seeded centroid choice and a fixed iteration budget;
/// returns per-point cluster labels.
fn kmeans(points: &[Vec<f64>], k: usize, iters: usize, seed: u64) -> Vec<usize> {
    let n = points.len();
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut picked: Vec<usize> = Vec::with_capacity(k);
    while picked.len() < k {
        let i = rng.gen_range(0..n);
        if !picked.contains(&i) {
            picked.push(i);
            centroids.push(points[i].clone());
        }
    }
    let dist2 = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let mut labels = vec![0usize; n];
    for _ in 0..iters {
        for (i, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = dist2(p, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            labels[i] = best;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, p) in points.iter().enumerate() {
            counts[labels[i]] += 1;
            for (s, x) in sums[labels[i]].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for s in sums[c].iter_mut() {
                    *s /= counts[c] as f64;
                }
                centroids[c] = std::mem::take(&mut sums[c]);
            }
        }
    }
    labels
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterPoint {
    pub position: Vec3,
    pub cluster: usize,
    pub material_id: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    pub points: Vec<ClusterPoint>,
    pub purity: f64,
    /// Fraction of the most common material among the sampled points; the
    /// floor any clustering trivially reaches.
    pub majority_baseline: f64,
}

/// Samples surface points area-uniformly, embeds them, k-means clusters
/// the embeddings, and scores cluster purity against the ground-truth
/// material of each sampled triangle.
pub fn cluster_embeddings(
    twin: &TwinModel,
    obj: &ObjectModel,
    n_samples: usize,
    k: usize,
    seed: u64,
) -> Result<ClusterReport, EvalError> {
    if k < 2 {
        return Err(EvalError::Cluster("k must be at least 2".into()));
    }
    if n_samples < k {
        return Err(EvalError::Cluster("need at least k sample points".into()));
    }
    let mut tris: Vec<([Vec3; 3], u32)> = Vec::new();
    for surf in &obj.surfaces {
        for t in &surf.triangles {
            tris.push((*t, surf.material_id));
        }
    }
    if tris.len() < 2 {
        return Err(EvalError::Cluster("object needs at least two triangles".into()));
    }
    let mut mats_present: Vec<u32> = tris.iter().map(|t| t.1).collect();
    mats_present.sort_unstable();
    mats_present.dedup();
    if mats_present.len() < 2 {
        return Err(EvalError::Cluster("object has a single material".into()));
    }
    let mut cum = Vec::with_capacity(tris.len());
    let mut total = 0.0;
    for (t, _) in &tris {
        total += 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm();
        cum.push(total);
    }
    if total <= 0.0 {
        return Err(EvalError::Cluster("object has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n_samples);
    let mut materials = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let r = rng.gen_range(0.0..total);
        let ti = cum.partition_point(|&c| c <= r).min(tris.len() - 1);
        let (t, mat) = tris[ti];
        let mut u = rng.gen_range(0.0..1.0);
        let mut v = rng.gen_range(0.0..1.0);
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        let p_local = t[0] + (t[1] - t[0]) * u + (t[2] - t[0]) * v;
        positions.push(obj.pose.to_world(p_local));
        materials.push(mat);
    }
    let embeddings: Vec<Vec<f64>> = positions
        .iter()
        .map(|&p| twin.object_embedding(obj, p))
        .collect::<Result<_, _>>()?;
    let labels = kmeans(&embeddings, k, 50, seed);

    let mut majority = vec![std::collections::BTreeMap::<u32, usize>::new(); k];
    for (l, m) in labels.iter().zip(&materials) {
        *majority[*l].entry(*m).or_insert(0) += 1;
    }
    let pure: usize = majority.iter().map(|c| c.values().copied().max().unwrap_or(0)).sum();
    let mut mat_counts = std::collections::BTreeMap::<u32, usize>::new();
    for m in &materials {
        *mat_counts.entry(*m).or_insert(0) += 1;
    }
    let points = positions
        .into_iter()
        .zip(labels)
        .zip(materials)
        .map(|((position, cluster), material_id)| ClusterPoint { position, cluster, material_id })
        .collect();
    Ok(ClusterReport {
        points,
        purity: pure as f64 / n_samples as f64,
        majority_baseline: *mat_counts.values().max().unwrap() as f64 / n_samples as f64,
    })
}

pub fn cluster_csv(report: &ClusterReport) -> String {
    let mut s = format!(
        "# purity {} majority_baseline {}\n",
        fmt_f64(report.purity),
        fmt_f64(report.majority_baseline)
    );
    s.push_str("x,y,z,cluster,material_id\n");
    for p in &report.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(p.position.x),
            fmt_f64(p.position.y),
            fmt_f64(p.position.z),
            p.cluster,
            p.material_id
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cdf_ranks_and_normalizes() {
        assert_eq!(nmse_cdf(&[-10.0]).unwrap(), vec![(-10.0, 1.0)]);
        let cdf = nmse_cdf(&[-10.0, -30.0, -20.0]).unwrap();
        assert_eq!(cdf.len(), 3);
        assert_relative_eq!(cdf[0].0, -30.0);
        assert_relative_eq!(cdf[0].1, 1.0 / 3.0);
        assert_relative_eq!(cdf[1].1, 2.0 / 3.0);
        assert_relative_eq!(cdf[2].1, 1.0);
        for w in cdf.windows(2) {
            assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
        assert!(nmse_cdf(&[]).is_err());
    }

    #[test]
    fn percentile_picks_rank_ceiling() {
        let v = vec![-30.0, -20.0, -10.0, -5.0];
        assert_relative_eq!(percentile(&v, 0.5), -20.0);
        assert_relative_eq!(percentile(&v, 0.9), -5.0);
        assert_relative_eq!(percentile(&v, 0.25), -30.0);
    }

    #[test]
    fn amp_phase_error_matches_worked_cases() {
        let h: Vec<Complex64> = vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 3.0)];
        let same = amp_phase_error(&h, &h).unwrap();
        for (a, p) in same {
            assert_relative_eq!(a, 0.0);
            assert_relative_eq!(p, 0.0);
        }
        let doubled: Vec<Complex64> = h.iter().map(|c| c * 2.0).collect();
        let e = amp_phase_error(&h, &doubled).unwrap();
        assert_relative_eq!(e[0].0, 1.0);
        assert_relative_eq!(e[0].1, 0.0);
        let spun: Vec<Complex64> =
            h.iter().map(|c| c * Complex64::from_polar(1.0, 1.5 * PI)).collect();
        let e = amp_phase_error(&h, &spun).unwrap();
        assert_relative_eq!(e[0].0, 0.0, epsilon = 1e-12);
        assert_relative_eq!(e[0].1, PI / 2.0, max_relative = 1e-12);
        let zeroed = vec![Complex64::new(0.0, 0.0), h[1]];
        assert!(matches!(amp_phase_error(&zeroed, &h), Err(EvalError::ZeroSubcarrier(0))));
    }

    #[test]
    fn grid_spec_parses_and_places_points() {
        let spec = GridSpec::load_str(
            "grid v1\norigin 1 2 3\nstep_x 0.5 0 0\nstep_y 0 0.25 0\nnx 4\nny 3\nn_rays 500\n",
        )
        .unwrap();
        assert_eq!((spec.nx, spec.ny, spec.n_rays), (4, 3, 500));
        let p = spec.point(2, 1);
        assert_relative_eq!(p.x, 2.0);
        assert_relative_eq!(p.y, 2.25);
        assert_relative_eq!(p.z, 3.0);
        assert!(GridSpec::load_str("grid v1\nwhat 1\n").is_err());
    }

    #[test]
    fn grid_csv_leaves_absent_cells_empty() {
        let g = vec![vec![Some(1.5), None], vec![None, Some(0.25)]];
        let s = grid_csv(&g);
        assert_eq!(s, "row,col0,col1\n0,1.5,\n1,,0.25\n");
    }

    #[test]
    fn kmeans_separates_obvious_clusters() {
        let mut pts = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.01;
            pts.push(vec![t, 1.0 + t]);
            pts.push(vec![10.0 + t, -5.0 - t]);
        }
        for seed in [0u64, 1, 7] {
            let labels = kmeans(&pts, 2, 50, seed);
            assert_eq!(labels, kmeans(&pts, 2, 50, seed));
            for pair in pts.chunks(2).map(|_| ()).zip(labels.chunks(2)) {
                let (_, l) = pair;
                assert_ne!(l[0], l[1]);
            }
            assert!(labels.chunks(2).all(|l| l[0] == labels[0] && l[1] == labels[1]));
        }
    }

    #[test]
    fn clustering_reports_purity_and_is_seeded() {
        use crate::math::Pose;
        use crate::scene::Surface;
        let obj = ObjectModel {
            id: 3,
            pose: Pose::IDENTITY,
            surfaces: vec![
                Surface {
                    material_id: 1,
                    triangles: vec![[
                        vec3(0.0, 0.0, 0.0),
                        vec3(1.0, 0.0, 0.0),
                        vec3(1.0, 1.0, 0.0),
                    ]],
                },
                Surface {
                    material_id: 2,
                    triangles: vec![[
                        vec3(0.0, 0.0, 0.5),
                        vec3(1.0, 0.0, 0.5),
                        vec3(1.0, 1.0, 0.5),
                    ]],
                },
            ],
            wedges: vec![],
            max_dim: 1.0,
        };
        let twin = TwinModel::new(&[3], 3.5e9, 4);
        let a = cluster_embeddings(&twin, &obj, 60, 2, 11).unwrap();
        let b = cluster_embeddings(&twin, &obj, 60, 2, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.purity >= a.majority_baseline - 1e-12);
        assert!(a.purity <= 1.0);
        assert_eq!(a.points.len(), 60);
        assert!(cluster_embeddings(&twin, &obj, 60, 1, 11).is_err());
        let single = ObjectModel {
            surfaces: vec![obj.surfaces[0].clone()],
            ..obj.clone()
        };
        assert!(cluster_embeddings(&twin, &single, 60, 2, 11).is_err());
    }
}
