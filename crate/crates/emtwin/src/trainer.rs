//! Dataset generation, the minibatch training loop, and per-sample
//! evaluation. Samples carry their traced path geometry, so training and
//! evaluation never re-trace and never touch the analytic material model;
//! the ground-truth channel is the only place materials enter.
//!
//! Random streams are partitioned by purpose on one user seed: the twin
//! takes low stream ids, dataset sample i draws from stream (1<<32)+i, and
//! the epoch shuffle from (2<<32)+epoch.

use crate::em::{oracle_channel, FreqGrid, MaterialError, MaterialTable};
use crate::math::{vec3, Pose, Quat, Vec3};
use crate::nn::{AdamParams, AdamState, GradStore};
use crate::parallel::par_map;
use crate::scene::{world_geometry, Scene, SceneError, WorldTri};
use crate::textio::{fmt_f64, ParseError, Tokens};
use crate::tracer::{
    trace_paths_indexed, GeometryIndex, InteractionGeom, InteractionKind, InteractionRecord,
    PathGeometry, TraceConfig,
};
use crate::twin::{nmse_db, TwinError, TwinModel};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

const DATASET_MAGIC: &str = "emtwin_dataset_v1";
const MAX_REJECTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Twin(#[from] TwinError),
    #[error("dataset parse error: {0}")]
    Parse(#[from] ParseError),
    #[error("config: {0}")]
    Config(String),
    #[error("no usable rx position found after {0} attempts")]
    EmptyRegion(usize),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Moved,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Moved => "moved",
        }
    }

    fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "moved" => Some(Split::Moved),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub split: Split,
    pub rx: Pose,
    pub edits: Vec<(u32, Pose)>,
    pub paths: Vec<PathGeometry>,
    pub channel: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub scene: Scene,
    pub grid: FreqGrid,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub n_subc: usize,
    pub delta_f: f64,
    pub f_c: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_moved: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub n_rays: usize,
    pub max_depth: u32,
    pub capture_c: f64,
    pub rx_min: Vec3,
    pub rx_max: Vec3,
    pub rx_clearance: f64,
    pub move_object: Option<(u32, Vec3)>,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            seed: 0,
            n_subc: 64,
            delta_f: 30e3,
            f_c: 3.5e9,
            n_train: 2000,
            n_test: 500,
            n_moved: 500,
            batch_size: 16,
            epochs: 200,
            lr: 1e-3,
            lr_decay: 1.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            n_rays: 8000,
            max_depth: 1,
            capture_c: 2.0,
            rx_min: Vec3::ZERO,
            rx_max: Vec3::ZERO,
            rx_clearance: 0.05,
            move_object: None,
        }
    }
}

impl TrainConfig {
    pub fn load_str(src: &str) -> Result<TrainConfig, TrainError> {
        let mut t = Tokens::new(src);
        t.expect("config")?;
        t.expect("v1")?;
        let mut cfg = TrainConfig::default();
        let vec3_of = |t: &mut Tokens| -> Result<Vec3, ParseError> {
            Ok(vec3(t.f64()?, t.f64()?, t.f64()?))
        };
        while !t.at_end() {
            match t.next()? {
                "seed" => cfg.seed = t.u64()?,
                "n_subc" => cfg.n_subc = t.usize()?,
                "delta_f" => cfg.delta_f = t.f64()?,
                "f_c" => cfg.f_c = t.f64()?,
                "n_train" => cfg.n_train = t.usize()?,
                "n_test" => cfg.n_test = t.usize()?,
                "n_moved" => cfg.n_moved = t.usize()?,
                "batch_size" => cfg.batch_size = t.usize()?,
                "epochs" => cfg.epochs = t.usize()?,
                "lr" => cfg.lr = t.f64()?,
                "beta1" => cfg.beta1 = t.f64()?,
                "beta2" => cfg.beta2 = t.f64()?,
                "adam_eps" => cfg.adam_eps = t.f64()?,
                "n_rays" => cfg.n_rays = t.usize()?,
                "max_depth" => cfg.max_depth = t.u32()?,
                "capture_c" => cfg.capture_c = t.f64()?,
                "rx_min" => cfg.rx_min = vec3_of(&mut t)?,
                "rx_max" => cfg.rx_max = vec3_of(&mut t)?,
                "rx_clearance" => cfg.rx_clearance = t.f64()?,
                "move" => cfg.move_object = Some((t.u32()?, vec3_of(&mut t)?)),
                other => return Err(TrainError::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load_path(path: &Path) -> Result<TrainConfig, TrainError> {
        TrainConfig::load_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.n_subc == 0 {
            return bad("n_subc must be positive");
        }
        if !(self.delta_f > 0.0) || !(self.f_c > 0.0) {
            return bad("delta_f and f_c must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.n_rays == 0 {
            return bad("n_rays must be positive");
        }
        if self.n_moved > 0 && self.move_object.is_none() {
            return bad("n_moved > 0 requires a move entry");
        }
        Ok(())
    }

    pub fn grid(&self) -> FreqGrid {
        FreqGrid { f_c: self.f_c, delta_f: self.delta_f, n_subc: self.n_subc }
    }

    fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            n_rays: self.n_rays,
            max_depth: self.max_depth,
            capture_c: self.capture_c,
            eps_self: 1e-6,
            seed: self.seed,
        }
    }
}

/// Closest point on a triangle to p (Ericson's region walk).
fn closest_point_on_tri(p: Vec3, a: Vec3, b: Vec3, c: Vec3) -> Vec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return a + ab * (d1 / (d1 - d3));
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    }
    let denom = 1.0 / (va + vb + vc);
    a + ab * (vb * denom) + ac * (vc * denom)
}

/// A receiver position is usable if it keeps a clearance from every
/// surface and every nearest surface faces it. Interior points of solid
/// objects sit behind at least one tied-nearest face (their own) and are
/// rejected; points in the air of a room see the inward wall normals and
/// pass. The tie window matters for solids resting on another surface,
/// where coplanar faces are equidistant.
pub fn rx_position_ok(tris: &[WorldTri], p: Vec3, clearance: f64) -> bool {
    let mut best = f64::INFINITY;
    let mut closest: Vec<(f64, Vec3)> = Vec::new();
    for t in tris {
        let q = closest_point_on_tri(p, t.v[0], t.v[1], t.v[2]);
        let d2 = (p - q).dot(p - q);
        if d2 < best {
            best = d2;
        }
        closest.push((d2, q));
    }
    if best < clearance * clearance {
        return false;
    }
    let tie = best * (1.0 + 1e-9) + 1e-12;
    for (t, &(d2, q)) in tris.iter().zip(closest.iter()) {
        if d2 <= tie && (p - q).dot(t.normal) <= 0.0 {
            return false;
        }
    }
    true
}

struct SceneInstance {
    scene: Scene,
    index: GeometryIndex,
    tris: Vec<WorldTri>,
    edits: Vec<(u32, Pose)>,
}

impl SceneInstance {
    fn new(scene: Scene, edits: Vec<(u32, Pose)>) -> SceneInstance {
        let (tris, _) = world_geometry(&scene);
        let index = GeometryIndex::new(&scene);
        SceneInstance { scene, index, tris, edits }
    }
}

/// Traces and synthesizes one dataset. Sample i is fully determined by
/// (seed, i): rx candidates are drawn from the sample's own random stream
/// and rejected until one clears the geometry and yields at least one
/// path with nonzero channel energy.
pub fn gen_dataset(
    scene: &Scene,
    mats: &MaterialTable,
    cfg: &TrainConfig,
    workers: usize,
) -> Result<Dataset, TrainError> {
    cfg.validate()?;
    let lo = cfg.rx_min;
    let hi = cfg.rx_max;
    if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
        return Err(TrainError::Config("rx_min must be strictly below rx_max".into()));
    }
    let grid = cfg.grid();
    let trace_cfg = cfg.trace_config();

    let base = SceneInstance::new(scene.clone(), Vec::new());
    let moved = match (cfg.n_moved, cfg.move_object) {
        (0, _) => None,
        (_, Some((id, delta))) => {
            let obj = scene
                .object(id)
                .ok_or(TrainError::Scene(SceneError::UnknownObject(id)))?;
            let pose = Pose::new(obj.pose.position + delta, obj.pose.orientation);
            let edits = vec![(id, pose)];
            Some(SceneInstance::new(scene.with_edits(&edits)?, edits))
        }
        _ => unreachable!("validate checked move_object"),
    };

    let n_total = cfg.n_train + cfg.n_test + cfg.n_moved;
    let ids: Vec<usize> = (0..n_total).collect();
    let results = par_map(&ids, workers, |_, &i| -> Result<Sample, TrainError> {
        let (split, inst) = if i < cfg.n_train {
            (Split::Train, &base)
        } else if i < cfg.n_train + cfg.n_test {
            (Split::Test, &base)
        } else {
            (Split::Moved, moved.as_ref().expect("moved instance exists"))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((1 << 32) | i as u64);
        for _ in 0..MAX_REJECTS {
            let p = vec3(
                rng.gen_range(lo.x..hi.x),
                rng.gen_range(lo.y..hi.y),
                rng.gen_range(lo.z..hi.z),
            );
            if !rx_position_ok(&inst.tris, p, cfg.rx_clearance) {
                continue;
            }
            let paths = trace_paths_indexed(&inst.index, inst.scene.tx.position, p, &trace_cfg);
            if paths.is_empty() {
                continue;
            }
            let channel = oracle_channel(&paths, mats, &grid, inst.scene.max_dim)?;
            if channel.iter().map(|c| c.norm_sqr()).sum::<f64>() <= 0.0 {
                continue;
            }
            return Ok(Sample {
                split,
                rx: Pose::new(p, Quat::IDENTITY),
                edits: inst.edits.clone(),
                paths,
                channel,
            });
        }
        Err(TrainError::EmptyRegion(MAX_REJECTS))
    });
    let samples = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Dataset { scene: scene.clone(), grid, samples })
}

fn w3(s: &mut String, v: Vec3) {
    let _ = write!(s, "{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z));
}

fn w_pose(s: &mut String, p: Pose) {
    w3(s, p.position);
    let q = p.orientation;
    let _ = write!(s, " {} {} {} {}", fmt_f64(q.w), fmt_f64(q.x), fmt_f64(q.y), fmt_f64(q.z));
}

fn r3(t: &mut Tokens) -> Result<Vec3, ParseError> {
    Ok(vec3(t.f64()?, t.f64()?, t.f64()?))
}

fn r_pose(t: &mut Tokens) -> Result<Pose, ParseError> {
    let p = r3(t)?;
    Ok(Pose::new(p, Quat::new(t.f64()?, t.f64()?, t.f64()?, t.f64()?)))
}

impl Dataset {
    pub fn save_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{DATASET_MAGIC}");
        let _ = writeln!(s, "f_c {}", fmt_f64(self.grid.f_c));
        let _ = writeln!(s, "delta_f {}", fmt_f64(self.grid.delta_f));
        let _ = writeln!(s, "n_subc {}", self.grid.n_subc);
        s.push_str("begin_scene\n");
        s.push_str(&self.scene.save_string());
        s.push_str("end_scene\n");
        for smp in &self.samples {
            let _ = writeln!(s, "sample {}", smp.split.name());
            s.push_str("rx ");
            w_pose(&mut s, smp.rx);
            s.push('\n');
            for &(id, pose) in &smp.edits {
                let _ = write!(s, "edit {id} ");
                w_pose(&mut s, pose);
                s.push('\n');
            }
            for path in &smp.paths {
                let _ = writeln!(s, "path {} {}", fmt_f64(path.tau), fmt_f64(path.spread));
                s.push_str("dir ");
                w3(&mut s, path.d_first);
                let _ = write!(s, " {} {} ", fmt_f64(path.aod.0), fmt_f64(path.aod.1));
                w3(&mut s, path.d_last);
                let _ = writeln!(s, " {} {}", fmt_f64(path.aoa.0), fmt_f64(path.aoa.1));
                let _ = write!(s, "segs {}", path.seg_lengths.len());
                for l in &path.seg_lengths {
                    let _ = write!(s, " {}", fmt_f64(*l));
                }
                s.push('\n');
                for rec in &path.interactions {
                    let kind = match rec.kind {
                        InteractionKind::Reflection => "refl",
                        InteractionKind::Scattering => "scat",
                        InteractionKind::Diffraction => "diffr",
                    };
                    let _ = write!(s, "hop {kind} {} ", rec.object_id);
                    w3(&mut s, rec.p);
                    s.push(' ');
                    w3(&mut s, rec.d_aoa);
                    s.push(' ');
                    w3(&mut s, rec.d_aod);
                    match rec.geom {
                        InteractionGeom::Surface { n, tri_id, material_id } => {
                            s.push_str(" surf ");
                            w3(&mut s, n);
                            let _ = writeln!(s, " {tri_id} {material_id}");
                        }
                        InteractionGeom::Wedge { n0, nn, wedge_id, material_id } => {
                            s.push_str(" wedge ");
                            w3(&mut s, n0);
                            s.push(' ');
                            w3(&mut s, nn);
                            let _ = writeln!(s, " {wedge_id} {material_id}");
                        }
                    }
                }
            }
            s.push_str("channel\n");
            for c in &smp.channel {
                let _ = writeln!(s, "{} {}", fmt_f64(c.re), fmt_f64(c.im));
            }
            s.push_str("end\n");
        }
        s
    }

    pub fn save_path(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.save_string())?;
        Ok(())
    }

    pub fn load_str(src: &str) -> Result<Dataset, TrainError> {
        let begin = src
            .find("begin_scene\n")
            .ok_or_else(|| TrainError::Dataset("missing begin_scene".into()))?;
        let end = src
            .find("\nend_scene\n")
            .ok_or_else(|| TrainError::Dataset("missing end_scene".into()))?;
        let scene = Scene::load_str(&src[begin + "begin_scene\n".len()..end + 1])?;

        let mut t = Tokens::new(&src[..begin]);
        t.expect(DATASET_MAGIC)?;
        let mut f_c = None;
        let mut delta_f = None;
        let mut n_subc = None;
        while !t.at_end() {
            match t.next()? {
                "f_c" => f_c = Some(t.f64()?),
                "delta_f" => delta_f = Some(t.f64()?),
                "n_subc" => n_subc = Some(t.usize()?),
                other => {
                    return Err(TrainError::Dataset(format!("unknown header field `{other}`")))
                }
            }
        }
        let missing = |what: &str| TrainError::Dataset(format!("missing header field {what}"));
        let grid = FreqGrid {
            f_c: f_c.ok_or_else(|| missing("f_c"))?,
            delta_f: delta_f.ok_or_else(|| missing("delta_f"))?,
            n_subc: n_subc.ok_or_else(|| missing("n_subc"))?,
        };

        let mut t = Tokens::new(&src[end + "\nend_scene\n".len()..]);
        let mut samples = Vec::new();
        while !t.at_end() {
            t.expect("sample")?;
            let split_tok = t.next()?;
            let split = Split::parse(split_tok)
                .ok_or_else(|| t.err(format!("unknown split `{split_tok}`")))?;
            let mut rx = None;
            let mut edits = Vec::new();
            let mut paths = Vec::new();
            let mut channel = None;
            loop {
                match t.next()? {
                    "rx" => rx = Some(r_pose(&mut t)?),
                    "edit" => {
                        let id = t.u32()?;
                        edits.push((id, r_pose(&mut t)?));
                    }
                    "path" => paths.push(parse_path(&mut t)?),
                    "channel" => {
                        let mut h = Vec::with_capacity(grid.n_subc);
                        for _ in 0..grid.n_subc {
                            h.push(Complex64::new(t.f64()?, t.f64()?));
                        }
                        channel = Some(h);
                    }
                    "end" => break,
                    other => return Err(t.err(format!("unknown sample field `{other}`")).into()),
                }
            }
            let rx = rx.ok_or_else(|| t.err("sample missing rx"))?;
            let channel = channel.ok_or_else(|| t.err("sample missing channel"))?;
            samples.push(Sample { split, rx, edits, paths, channel });
        }
        Ok(Dataset { scene, grid, samples })
    }

    pub fn load_path(path: &Path) -> Result<Dataset, TrainError> {
        Dataset::load_str(&std::fs::read_to_string(path)?)
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.samples.len()).filter(|&i| self.samples[i].split == split).collect()
    }
}

fn parse_path(t: &mut Tokens) -> Result<PathGeometry, TrainError> {
    let tau = t.f64()?;
    let spread = t.f64()?;
    t.expect("dir")?;
    let d_first = r3(t)?;
    let aod = (t.f64()?, t.f64()?);
    let d_last = r3(t)?;
    let aoa = (t.f64()?, t.f64()?);
    t.expect("segs")?;
    let n_segs = t.usize()?;
    if n_segs == 0 {
        return Err(TrainError::Dataset("path with no segments".into()));
    }
    let mut seg_lengths = Vec::with_capacity(n_segs);
    for _ in 0..n_segs {
        seg_lengths.push(t.f64()?);
    }
    let mut interactions = Vec::with_capacity(n_segs - 1);
    for _ in 0..n_segs - 1 {
        t.expect("hop")?;
        let kind = match t.next()? {
            "refl" => InteractionKind::Reflection,
            "scat" => InteractionKind::Scattering,
            "diffr" => InteractionKind::Diffraction,
            other => return Err(t.err(format!("unknown hop kind `{other}`")).into()),
        };
        let object_id = t.u32()?;
        let p = r3(t)?;
        let d_aoa = r3(t)?;
        let d_aod = r3(t)?;
        let geom = match (kind, t.next()?) {
            (InteractionKind::Diffraction, "wedge") => {
                let n0 = r3(t)?;
                let nn = r3(t)?;
                InteractionGeom::Wedge { n0, nn, wedge_id: t.u32()?, material_id: t.u32()? }
            }
            (InteractionKind::Reflection | InteractionKind::Scattering, "surf") => {
                let n = r3(t)?;
                InteractionGeom::Surface { n, tri_id: t.u32()?, material_id: t.u32()? }
            }
            (_, other) => {
                return Err(t.err(format!("geometry `{other}` does not fit hop kind")).into())
            }
        };
        interactions.push(InteractionRecord { kind, p, object_id, d_aoa, d_aod, geom });
    }
    Ok(PathGeometry { interactions, seg_lengths, tau, d_first, aod, d_last, aoa, spread })
}

/// Training objective on raw channels: log10 of the clamped error-to-signal
/// energy ratio. evaluate() reports the same quantity in dB (10x).
pub fn loss(h_true: &[Complex64], h_pred: &[Complex64]) -> Result<f64, TrainError> {
    if h_true.len() != h_pred.len() {
        return Err(TrainError::Dataset("channel length mismatch".into()));
    }
    let energy: f64 = h_true.iter().map(|c| c.norm_sqr()).sum();
    if energy <= 0.0 {
        return Err(TrainError::Dataset("zero ground-truth channel".into()));
    }
    let err: f64 = h_true.iter().zip(h_pred).map(|(t, p)| (t - p).norm_sqr()).sum();
    Ok((err / energy).max(1e-30).log10())
}

fn scene_variants(ds: &Dataset) -> Result<(Vec<Scene>, Vec<usize>), TrainError> {
    let mut keys: Vec<Vec<(u32, Pose)>> = Vec::new();
    let mut variants: Vec<Scene> = Vec::new();
    let mut variant_of = Vec::with_capacity(ds.samples.len());
    for s in &ds.samples {
        let pos = match keys.iter().position(|k| k == &s.edits) {
            Some(p) => p,
            None => {
                keys.push(s.edits.clone());
                variants.push(ds.scene.with_edits(&s.edits)?);
                variants.len() - 1
            }
        };
        variant_of.push(pos);
    }
    Ok((variants, variant_of))
}

fn add_grads(dst: &mut GradStore, src: &GradStore) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        for (a, b) in d.iter_mut().zip(s.iter()) {
            *a += b;
        }
    }
}

/// Minibatch Adam on the mean per-sample loss. Batch members run in
/// parallel; their gradients are summed in batch order, so results do not
/// depend on the worker count. Returns the per-epoch mean training loss;
/// when out_dir is given, writes a rolling checkpoint each epoch plus the
/// final twin and a history CSV.
pub fn train(
    twin: &mut TwinModel,
    ds: &Dataset,
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    workers: usize,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>, TrainError> {
    let (variants, variant_of) = scene_variants(ds)?;
    let train_idx = ds.indices_of(Split::Train);
    if train_idx.is_empty() {
        return Err(TrainError::Dataset("dataset has no training samples".into()));
    }
    for &i in &train_idx {
        for path in &ds.samples[i].paths {
            for rec in &path.interactions {
                if !twin.object_nets.contains_key(&rec.object_id) {
                    return Err(TwinError::UnknownObject(rec.object_id).into());
                }
            }
        }
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let grid = ds.grid;
    let hp = AdamParams { lr: cfg.lr, beta1: cfg.beta1, beta2: cfg.beta2, eps: cfg.adam_eps };
    let mut adam = AdamState::new(&twin.registry, hp);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream((2 << 32) | epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let parts = par_map(batch, workers, |_, &si| -> Result<(f64, GradStore), TrainError> {
                let s = &ds.samples[si];
                let lt = twin.loss_tape(&variants[variant_of[si]], &s.paths, &grid, &s.channel)?;
                let mut g = twin.registry.zero_grads();
                let v = lt.tape.val(lt.loss);
                lt.tape.backward(lt.loss, scale, &mut g);
                Ok((v, g))
            });
            let mut grads = twin.registry.zero_grads();
            for part in parts {
                let (v, g) = part?;
                loss_sum += v;
                add_grads(&mut grads, &g);
            }
            adam.step(&mut twin.registry, &grads);
        }
        let mean = loss_sum / train_idx.len() as f64;
        history.push(mean);
        if let Some(dir) = out_dir {
            twin.save(&dir.join("checkpoint.ckpt"))?;
        }
        on_epoch(epoch, mean);
    }
    if let Some(dir) = out_dir {
        twin.save(&dir.join("twin.ckpt"))?;
        std::fs::write(dir.join("history.csv"), history_csv(&history))?;
    }
    Ok(history)
}

pub fn history_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,mean_loss\n");
    for (e, v) in history.iter().enumerate() {
        let _ = writeln!(s, "{e},{}", fmt_f64(*v));
    }
    s
}

/// Per-sample NMSE in dB for one split, in dataset order.
pub fn evaluate(
    twin: &TwinModel,
    ds: &Dataset,
    split: Split,
    workers: usize,
) -> Result<Vec<f64>, TrainError> {
    let (variants, variant_of) = scene_variants(ds)?;
    let idx = ds.indices_of(split);
    let grid = ds.grid;
    let res = par_map(&idx, workers, |_, &si| -> Result<f64, TrainError> {
        let s = &ds.samples[si];
        let h = twin.predict_channel(&variants[variant_of[si]], &s.paths, &grid)?;
        Ok(nmse_db(&s.channel, &h))
    });
    res.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn box_text(id: u32, mat: u32, lo: Vec3, hi: Vec3, inward: bool) -> String {
        // Axis-aligned box as 12 triangles; inward flips every winding so
        // normals face the interior (rooms).
        let v = [
            vec3(lo.x, lo.y, lo.z),
            vec3(hi.x, lo.y, lo.z),
            vec3(hi.x, hi.y, lo.z),
            vec3(lo.x, hi.y, lo.z),
            vec3(lo.x, lo.y, hi.z),
            vec3(hi.x, lo.y, hi.z),
            vec3(hi.x, hi.y, hi.z),
            vec3(lo.x, hi.y, hi.z),
        ];
        let quads = [
            [0usize, 3, 2, 1],
            [4, 5, 6, 7],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [1, 2, 6, 5],
            [3, 0, 4, 7],
        ];
        let mut s = format!("object {{\n  id {id}\n  position 0 0 0\n  quaternion 1 0 0 0\n");
        s.push_str(&format!("  surface {{\n    material {mat}\n"));
        for q in quads {
            let [a, b, c, d] = if inward { [q[0], q[3], q[2], q[1]] } else { q };
            let t = |i: usize| format!("{} {} {}", v[i].x, v[i].y, v[i].z);
            s.push_str(&format!("    triangle v {} v {} v {}\n", t(a), t(b), t(c)));
            s.push_str(&format!("    triangle v {} v {} v {}\n", t(a), t(c), t(d)));
        }
        s.push_str("  }\n}\n");
        s
    }

    fn tiny_scene() -> Scene {
        let mut s = String::from("scene v1\ntx { position 0.4 0.4 2 quaternion 1 0 0 0 }\n");
        s.push_str("rx { position 1 1 1 quaternion 1 0 0 0 }\n");
        s.push_str(&box_text(1, 1, vec3(0.0, 0.0, 0.0), vec3(4.0, 3.0, 2.5), true));
        s.push_str(&box_text(2, 3, vec3(2.2, 1.2, 0.0), vec3(2.8, 1.8, 0.6), false));
        Scene::load_str(&s).unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            seed: 5,
            n_subc: 8,
            n_train: 3,
            n_test: 2,
            n_moved: 2,
            batch_size: 2,
            epochs: 2,
            n_rays: 600,
            rx_min: vec3(0.3, 0.3, 0.4),
            rx_max: vec3(3.7, 2.7, 2.2),
            move_object: Some((2, vec3(-1.2, 0.6, 0.0))),
            ..TrainConfig::default()
        }
    }

    #[test]
    fn loss_matches_worked_ratios() {
        let h: Vec<Complex64> = vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)];
        assert_relative_eq!(loss(&h, &h).unwrap(), -30.0);
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        assert_relative_eq!(loss(&h, &zero).unwrap(), 0.0);
        let scaled: Vec<Complex64> = h.iter().map(|c| c * 1.1).collect();
        assert_relative_eq!(loss(&h, &scaled).unwrap(), -2.0, max_relative = 1e-12);
        assert!(loss(&zero, &h).is_err());
    }

    #[test]
    fn loss_is_a_tenth_of_the_db_metric() {
        let h: Vec<Complex64> =
            (0..6).map(|k| Complex64::new(1.0 + k as f64, 0.5 * k as f64)).collect();
        let p: Vec<Complex64> = h.iter().map(|c| c * Complex64::new(0.9, 0.05)).collect();
        assert_relative_eq!(loss(&h, &p).unwrap(), nmse_db(&h, &p) / 10.0, max_relative = 1e-12);
    }

    #[test]
    fn rx_rejection_respects_solids_and_clearance() {
        let scene = tiny_scene();
        let (tris, _) = world_geometry(&scene);
        assert!(rx_position_ok(&tris, vec3(1.0, 1.0, 1.2), 0.05));
        assert!(!rx_position_ok(&tris, vec3(2.5, 1.5, 0.3), 0.05));
        assert!(!rx_position_ok(&tris, vec3(1.0, 0.03, 1.2), 0.05));
        assert!(!rx_position_ok(&tris, vec3(2.5, 1.5, 0.62), 0.05));
        assert!(rx_position_ok(&tris, vec3(2.5, 1.5, 0.75), 0.05));
    }

    #[test]
    fn config_file_round_trip_and_validation() {
        let cfg = TrainConfig::load_str(
            "config v1\nseed 9\nn_subc 16\nn_train 10\nn_test 2\nn_moved 0\n\
             lr 0.01\nrx_min 0 0 0\nrx_max 1 1 1\nmax_depth 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.n_subc, 16);
        assert_eq!(cfg.max_depth, 2);
        assert_relative_eq!(cfg.lr, 0.01);
        assert!(TrainConfig::load_str("config v1\nbatch_size 0\n").is_err());
        assert!(TrainConfig::load_str("config v1\nn_moved 5\n").is_err());
        assert!(TrainConfig::load_str("config v1\nwat 3\n").is_err());
    }

    #[test]
    fn dataset_generation_is_deterministic_and_split_correct() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = tiny_config();
        let a = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let b = gen_dataset(&scene, &mats, &cfg, 3).unwrap();
        assert_eq!(a.save_string(), b.save_string());
        assert_eq!(a.indices_of(Split::Train).len(), 3);
        assert_eq!(a.indices_of(Split::Test).len(), 2);
        assert_eq!(a.indices_of(Split::Moved).len(), 2);
        for s in &a.samples {
            assert_eq!(s.channel.len(), 8);
            assert!(!s.paths.is_empty());
            let inside = |p: Vec3| {
                p.x > cfg.rx_min.x && p.x < cfg.rx_max.x && p.y > cfg.rx_min.y
                    && p.y < cfg.rx_max.y && p.z > cfg.rx_min.z && p.z < cfg.rx_max.z
            };
            assert!(inside(s.rx.position));
            if s.split == Split::Moved {
                assert_eq!(s.edits.len(), 1);
            } else {
                assert!(s.edits.is_empty());
            }
        }
        let mut seen: Vec<(u64, u64, u64)> = a
            .samples
            .iter()
            .map(|s| {
                (s.rx.position.x.to_bits(), s.rx.position.y.to_bits(), s.rx.position.z.to_bits())
            })
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), a.samples.len());
    }

    #[test]
    fn dataset_file_round_trips_exactly() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let ds = gen_dataset(&scene, &mats, &tiny_config(), 2).unwrap();
        let text = ds.save_string();
        let back = Dataset::load_str(&text).unwrap();
        assert_eq!(ds, back);
        assert_eq!(text, back.save_string());
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = TrainConfig { lr: 0.0, epochs: 2, ..tiny_config() };
        let ds = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let mut twin = TwinModel::new(&[1, 2], cfg.f_c, 17);
        let before = twin.registry.params.clone();
        let hist = train(&mut twin, &ds, &cfg, None, 1, |_, _| {}).unwrap();
        assert_eq!(twin.registry.params, before);
        assert_eq!(hist.len(), 2);
        assert_eq!(hist[0].to_bits(), hist[1].to_bits());
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = TrainConfig { epochs: 4, lr: 1e-2, ..tiny_config() };
        let ds = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let mut twin_a = TwinModel::new(&[1, 2], cfg.f_c, 17);
        let hist_a = train(&mut twin_a, &ds, &cfg, None, 1, |_, _| {}).unwrap();
        let mut twin_b = TwinModel::new(&[1, 2], cfg.f_c, 17);
        let hist_b = train(&mut twin_b, &ds, &cfg, None, 2, |_, _| {}).unwrap();
        let bits = |h: &[f64]| h.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&hist_a), bits(&hist_b));
        assert_eq!(twin_a.registry.params, twin_b.registry.params);
        assert!(
            hist_a.last().unwrap() < hist_a.first().unwrap(),
            "loss did not go down: {hist_a:?}"
        );
    }

    #[test]
    fn training_rejects_unknown_objects() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = tiny_config();
        let ds = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let mut twin = TwinModel::new(&[1], cfg.f_c, 17);
        match train(&mut twin, &ds, &cfg, None, 1, |_, _| {}) {
            Err(TrainError::Twin(TwinError::UnknownObject(2))) => {}
            other => panic!("expected unknown object, got {other:?}"),
        }
    }

    #[test]
    fn training_artifacts_are_written() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = TrainConfig { epochs: 1, ..tiny_config() };
        let ds = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let mut twin = TwinModel::new(&[1, 2], cfg.f_c, 17);
        let dir = tempfile::tempdir().unwrap();
        train(&mut twin, &ds, &cfg, Some(dir.path()), 1, |_, _| {}).unwrap();
        let trained = TwinModel::load(&dir.path().join("twin.ckpt")).unwrap();
        assert_eq!(trained, twin);
        assert!(dir.path().join("checkpoint.ckpt").exists());
        let hist = std::fs::read_to_string(dir.path().join("history.csv")).unwrap();
        assert!(hist.starts_with("epoch,mean_loss\n"));
        assert_eq!(hist.lines().count(), 2);
    }

    #[test]
    fn evaluation_agrees_with_tape_loss() {
        let scene = tiny_scene();
        let mats = MaterialTable::bundled();
        let cfg = tiny_config();
        let ds = gen_dataset(&scene, &mats, &cfg, 1).unwrap();
        let twin = TwinModel::new(&[1, 2], cfg.f_c, 17);
        let db = evaluate(&twin, &ds, Split::Test, 1).unwrap();
        assert_eq!(db.len(), 2);
        let (variants, variant_of) = scene_variants(&ds).unwrap();
        let idx = ds.indices_of(Split::Test);
        for (k, &si) in idx.iter().enumerate() {
            let s = &ds.samples[si];
            let lt = twin.loss_tape(&variants[variant_of[si]], &s.paths, &ds.grid, &s.channel).unwrap();
            assert_relative_eq!(db[k], 10.0 * lt.tape.val(lt.loss), max_relative = 1e-12);
        }
    }
}
