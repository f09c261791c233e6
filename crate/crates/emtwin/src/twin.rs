//! The learnable twin: one embedding network per scene object plus three
//! shared interaction networks. Channel prediction mirrors the analytic
//! cascade (same frames, same spreading, same delay phasors) but replaces
//! every material-dependent transfer with a network, and records the whole
//! computation on the gradient tape so training can differentiate through
//! it. Nothing here ever reads a material id; materials must be inferred
//! from the channels.

use crate::em::FreqGrid;
use crate::math::{Vec3, SPEED_OF_LIGHT};
use crate::nn::checkpoint;
use crate::nn::{
    eval_mlp, init_params, pos_enc, CheckpointError, Head, MlpSpec, NetId, NetRegistry, Tape,
};
use crate::polarization::{
    basis_change, convert_basis, diffraction_angles, diffraction_frames, f_theta,
    reflection_frames, scattering_out_frame, spherical_frame, DiffractionAngles, PolFrame,
    PolarizedField,
};
use crate::scene::{ObjectModel, Scene};
use crate::textio::fmt_f64;
use crate::tracer::{InteractionGeom, InteractionKind, InteractionRecord, PathGeometry};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

pub const EMBED_DIM: usize = 48;
/// Positional-encoding depth for object-local positions.
pub const M_OBJECT: usize = 10;
/// Positional-encoding depth for interaction geometry features.
pub const M_INTERACTION: usize = 4;

/// Incoming fields weaker than this skip the scattering network entirely
/// and produce a zero outgoing field.
const SCATTER_FIELD_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum TwinError {
    #[error("no embedding network for object {0}")]
    UnknownObject(u32),
    #[error("ground-truth channel has zero energy")]
    ZeroTargetChannel,
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
}

fn amp_phase_heads(pairs: usize) -> Vec<Head> {
    (0..pairs).flat_map(|_| [Head::Exp, Head::Sigmoid2Pi]).collect()
}

fn object_spec() -> MlpSpec {
    MlpSpec::new(vec![2 * 3 * M_OBJECT, 128, 128, 128, EMBED_DIM], vec![Head::Linear; EMBED_DIM])
}

fn reflection_spec() -> MlpSpec {
    let n_in = EMBED_DIM + 1 + 2 * M_INTERACTION;
    MlpSpec::new(vec![n_in, 128, 128, 128, 128, 4], amp_phase_heads(2))
}

fn diffraction_spec() -> MlpSpec {
    let n_in = EMBED_DIM + 7 + 2 * 7 * M_INTERACTION;
    MlpSpec::new(vec![n_in, 128, 128, 128, 128, 128, 8], amp_phase_heads(4))
}

fn scattering_spec() -> MlpSpec {
    let n_in = EMBED_DIM + 9 + 2 * 9 * M_INTERACTION + 4;
    MlpSpec::new(vec![n_in, 128, 128, 128, 128, 4], amp_phase_heads(2))
}

/// Raw-plus-encoded geometry features for a reflection: [theta, PosEnc(theta_bar)].
fn refl_geom_features(theta: f64) -> Vec<f64> {
    let mut v = vec![theta];
    v.extend(pos_enc(&[f_theta(theta)], M_INTERACTION));
    v
}

/// Feature vector for a diffraction: squashed wedge angles plus normalized
/// adjacent segment lengths, raw and encoded.
fn diffr_geom_features(ang: &DiffractionAngles) -> Vec<f64> {
    let raw = [
        f_theta(ang.phip),
        f_theta(ang.phi),
        f_theta(ang.beta0p),
        f_theta(ang.beta0),
        f_theta(ang.betan),
        ang.sbar_prev,
        ang.sbar_next,
    ];
    let mut v = raw.to_vec();
    v.extend(pos_enc(&raw, M_INTERACTION));
    v
}

/// Feature vector for scattering: incoming/outgoing directions and surface
/// normal, all in the object's local frame, raw and encoded.
fn scat_geom_features(d_aoa_l: Vec3, d_aod_l: Vec3, n_l: Vec3) -> Vec<f64> {
    let raw = [
        d_aoa_l.x, d_aoa_l.y, d_aoa_l.z, d_aod_l.x, d_aod_l.y, d_aod_l.z, n_l.x, n_l.y, n_l.z,
    ];
    let mut v = raw.to_vec();
    v.extend(pos_enc(&raw, M_INTERACTION));
    v
}

/// In-frame s axis for scattering, shared with the analytic model.
fn scatter_in_frame(d_aoa: Vec3, n: Vec3) -> PolFrame {
    let e_s = match d_aoa.cross(n).try_normalized() {
        Some(s) => s,
        None => PolFrame::fallback(d_aoa).e_s,
    };
    PolFrame::from_s(d_aoa, e_s)
}

/// A built channel tape: `h` points at 2*n_subc slots of accumulated
/// frequency response, `alphas` at each path's complex gain.
pub struct ChannelTape<'a> {
    pub tape: Tape<'a>,
    pub h: u32,
    pub alphas: Vec<u32>,
    pub n_subc: usize,
}

impl ChannelTape<'_> {
    pub fn channel(&self) -> Vec<Complex64> {
        (0..self.n_subc).map(|k| self.tape.complex(self.h + 2 * k as u32)).collect()
    }

    pub fn path_alphas(&self) -> Vec<Complex64> {
        self.alphas.iter().map(|&a| self.tape.complex(a)).collect()
    }
}

/// A channel tape extended with the clamped log-ratio training loss.
pub struct LossTape<'a> {
    pub tape: Tape<'a>,
    pub h: u32,
    pub loss: u32,
    pub n_subc: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwinModel {
    pub registry: NetRegistry,
    pub object_nets: BTreeMap<u32, NetId>,
    pub refl_net: NetId,
    pub diffr_net: NetId,
    pub scat_net: NetId,
    pub f_c: f64,
}

impl TwinModel {
    /// Fresh twin for the given object ids. Interaction nets start with a
    /// zero final layer, so every transfer begins at exp(0)*e^{j pi} = -1;
    /// per-net RNG streams keep initialization independent of the object
    /// set's order.
    pub fn new(object_ids: &[u32], f_c: f64, seed: u64) -> TwinModel {
        let stream_rng = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        let mut registry = NetRegistry::new();
        let spec = reflection_spec();
        let refl_net = registry.add(spec.clone(), init_params(&spec, &mut stream_rng(0), true));
        let spec = diffraction_spec();
        let diffr_net = registry.add(spec.clone(), init_params(&spec, &mut stream_rng(1), true));
        let spec = scattering_spec();
        let scat_net = registry.add(spec.clone(), init_params(&spec, &mut stream_rng(2), true));
        let mut ids: Vec<u32> = object_ids.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let mut object_nets = BTreeMap::new();
        for id in ids {
            let spec = object_spec();
            let params = init_params(&spec, &mut stream_rng(3 + id as u64), false);
            object_nets.insert(id, registry.add(spec, params));
        }
        TwinModel { registry, object_nets, refl_net, diffr_net, scat_net, f_c }
    }

    fn object_net(&self, id: u32) -> Result<NetId, TwinError> {
        self.object_nets.get(&id).copied().ok_or(TwinError::UnknownObject(id))
    }

    /// Learned EM-property embedding of a world point on an object.
    pub fn object_embedding(&self, obj: &ObjectModel, p_world: Vec3) -> Result<Vec<f64>, TwinError> {
        let net = self.object_net(obj.id)?;
        let lp = obj.to_local_normalized(p_world);
        let x = pos_enc(&[lp.x, lp.y, lp.z], M_OBJECT);
        Ok(eval_mlp(self.registry.spec(net), self.registry.params(net), &x))
    }

    /// Diagonal reflection transfer (s, p entries) for an embedding and an
    /// incidence angle from the surface normal.
    pub fn reflection_transfer(&self, e: &[f64], theta: f64) -> [Complex64; 2] {
        let mut x = e.to_vec();
        x.extend(refl_geom_features(theta));
        let y = eval_mlp(self.registry.spec(self.refl_net), self.registry.params(self.refl_net), &x);
        [Complex64::from_polar(y[0], y[1]), Complex64::from_polar(y[2], y[3])]
    }

    /// Full 2x2 diffraction transfer, row-major over (s, p).
    pub fn diffraction_transfer(&self, e: &[f64], ang: &DiffractionAngles) -> [[Complex64; 2]; 2] {
        let mut x = e.to_vec();
        x.extend(diffr_geom_features(ang));
        let y =
            eval_mlp(self.registry.spec(self.diffr_net), self.registry.params(self.diffr_net), &x);
        [
            [Complex64::from_polar(y[0], y[1]), Complex64::from_polar(y[2], y[3])],
            [Complex64::from_polar(y[4], y[5]), Complex64::from_polar(y[6], y[7])],
        ]
    }

    /// Outgoing (s, p) amplitudes for a scattering event. The incoming
    /// amplitudes must already be expressed in the scattering input frame;
    /// the network sees them normalized to unit power and its outputs are
    /// scaled back, making the result exactly degree-1 homogeneous in the
    /// field magnitude.
    pub fn scattering_amps(
        &self,
        e: &[f64],
        d_aoa_l: Vec3,
        d_aod_l: Vec3,
        n_l: Vec3,
        amp_s: Complex64,
        amp_p: Complex64,
    ) -> (Complex64, Complex64) {
        let norm = (amp_s.norm_sqr() + amp_p.norm_sqr()).sqrt();
        if norm < SCATTER_FIELD_FLOOR {
            return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let mut x = e.to_vec();
        x.extend(scat_geom_features(d_aoa_l, d_aod_l, n_l));
        x.extend([amp_s.re / norm, amp_s.im / norm, amp_p.re / norm, amp_p.im / norm]);
        let y = eval_mlp(self.registry.spec(self.scat_net), self.registry.params(self.scat_net), &x);
        (
            Complex64::from_polar(norm * y[0], y[1]),
            Complex64::from_polar(norm * y[2], y[3]),
        )
    }

    /// One interaction of the field cascade without tape recording; the
    /// straight-line counterpart of the tape builder, also used to
    /// cross-check it.
    pub fn outgoing_field(
        &self,
        scene: &Scene,
        rec: &InteractionRecord,
        s_prev: f64,
        s_next: f64,
        field: &PolarizedField,
    ) -> Result<PolarizedField, TwinError> {
        let obj = scene.object(rec.object_id).ok_or(TwinError::UnknownObject(rec.object_id))?;
        let e = self.object_embedding(obj, rec.p)?;
        let d_aoa = field.frame.d;
        Ok(match (rec.kind, rec.geom) {
            (InteractionKind::Reflection, InteractionGeom::Surface { n, .. }) => {
                let (in_f, out_f) = reflection_frames(d_aoa, rec.d_aod, n);
                let inc = convert_basis(field, &in_f);
                let theta = (-d_aoa.dot(n)).clamp(-1.0, 1.0).acos();
                let t = self.reflection_transfer(&e, theta);
                PolarizedField::new(inc.amp_s * t[0], inc.amp_p * t[1], out_f)
            }
            (InteractionKind::Scattering, InteractionGeom::Surface { n, .. }) => {
                let inc = convert_basis(field, &scatter_in_frame(d_aoa, n));
                let (os, op) = self.scattering_amps(
                    &e,
                    obj.pose.dir_to_local(d_aoa),
                    obj.pose.dir_to_local(rec.d_aod),
                    obj.pose.dir_to_local(n),
                    inc.amp_s,
                    inc.amp_p,
                );
                PolarizedField::new(os, op, scattering_out_frame(rec.d_aod))
            }
            (InteractionKind::Diffraction, InteractionGeom::Wedge { n0, nn, .. }) => {
                let (in_f, out_f) = diffraction_frames(d_aoa, rec.d_aod, n0, nn);
                let inc = convert_basis(field, &in_f);
                let ang =
                    diffraction_angles(d_aoa, rec.d_aod, n0, nn, s_prev, s_next, scene.max_dim);
                let t = self.diffraction_transfer(&e, &ang);
                PolarizedField::new(
                    t[0][0] * inc.amp_s + t[0][1] * inc.amp_p,
                    t[1][0] * inc.amp_s + t[1][1] * inc.amp_p,
                    out_f,
                )
            }
            _ => panic!("interaction kind inconsistent with its geometry record"),
        })
    }

    /// Dense/rectifier chain of one net on the tape, returning the slot of
    /// the final pre-head layer.
    fn push_mlp(&self, tape: &mut Tape, net: NetId, x: u32) -> u32 {
        let widths = self.registry.spec(net).widths.clone();
        let n_layers = widths.len() - 1;
        let mut cur = x;
        for l in 0..n_layers {
            cur = tape.dense(net, l, cur);
            if l + 1 < n_layers {
                cur = tape.relu(cur, widths[l + 1]);
            }
        }
        cur
    }

    /// Amplitude/phase head pair `idx` of a net output turned into one
    /// complex slot.
    fn push_polar_pair(tape: &mut Tape, out: u32, idx: u32) -> u32 {
        let amp = tape.exp(out + 2 * idx);
        let ph = tape.sigmoid_2pi(out + 2 * idx + 1);
        tape.polar(amp, ph)
    }

    fn push_embedding(&self, tape: &mut Tape, obj: &ObjectModel, p: Vec3) -> Result<u32, TwinError> {
        let net = self.object_net(obj.id)?;
        let lp = obj.to_local_normalized(p);
        let x = tape.constants(&pos_enc(&[lp.x, lp.y, lp.z], M_OBJECT));
        Ok(self.push_mlp(tape, net, x))
    }

    /// Records one path's contribution into the channel block `h` and
    /// returns the slot of the path's complex gain.
    fn push_path(
        &self,
        tape: &mut Tape,
        scene: &Scene,
        path: &PathGeometry,
        grid: &FreqGrid,
        h: u32,
    ) -> Result<u32, TwinError> {
        let d1 = path.seg_lengths[0];
        let mut fld = tape.constants(&[1.0 / d1, 0.0, 0.0, 0.0]);
        let mut frame = spherical_frame(path.d_first);
        for (i, rec) in path.interactions.iter().enumerate() {
            let obj = scene.object(rec.object_id).ok_or(TwinError::UnknownObject(rec.object_id))?;
            let emb = self.push_embedding(tape, obj, rec.p)?;
            match (rec.kind, rec.geom) {
                (InteractionKind::Reflection, InteractionGeom::Surface { n, .. }) => {
                    let (in_f, out_f) = reflection_frames(frame.d, rec.d_aod, n);
                    fld = tape.frame2(basis_change(&frame, &in_f), fld);
                    let theta = (-frame.d.dot(n)).clamp(-1.0, 1.0).acos();
                    let inb = tape.alloc(EMBED_DIM + 1 + 2 * M_INTERACTION);
                    tape.copy_into(emb, EMBED_DIM, inb);
                    for (j, v) in refl_geom_features(theta).into_iter().enumerate() {
                        tape.set(inb + EMBED_DIM as u32 + j as u32, v);
                    }
                    let out = self.push_mlp(tape, self.refl_net, inb);
                    let t_s = Self::push_polar_pair(tape, out, 0);
                    let t_p = Self::push_polar_pair(tape, out, 1);
                    let blk = tape.alloc(4);
                    tape.cmul_into(t_s, fld, blk);
                    tape.cmul_into(t_p, fld + 2, blk + 2);
                    fld = blk;
                    frame = out_f;
                }
                (InteractionKind::Scattering, InteractionGeom::Surface { n, .. }) => {
                    let in_f = scatter_in_frame(frame.d, n);
                    let out_f = scattering_out_frame(rec.d_aod);
                    fld = tape.frame2(basis_change(&frame, &in_f), fld);
                    let m_s = tape.mag_sq(fld);
                    let m_p = tape.mag_sq(fld + 2);
                    let energy = tape.add(m_s, m_p);
                    let norm = tape.sqrt(energy);
                    if tape.val(norm) < SCATTER_FIELD_FLOOR {
                        fld = tape.constants(&[0.0; 4]);
                        frame = out_f;
                        continue;
                    }
                    let inv = tape.recip(norm);
                    let n_geom = 9 + 2 * 9 * M_INTERACTION;
                    let inb = tape.alloc(EMBED_DIM + n_geom + 4);
                    tape.copy_into(emb, EMBED_DIM, inb);
                    let geom = scat_geom_features(
                        obj.pose.dir_to_local(frame.d),
                        obj.pose.dir_to_local(rec.d_aod),
                        obj.pose.dir_to_local(n),
                    );
                    for (j, v) in geom.into_iter().enumerate() {
                        tape.set(inb + EMBED_DIM as u32 + j as u32, v);
                    }
                    let f_at = inb + (EMBED_DIM + n_geom) as u32;
                    for j in 0..4u32 {
                        tape.mul_into(fld + j, inv, f_at + j);
                    }
                    let out = self.push_mlp(tape, self.scat_net, inb);
                    let t_s = Self::push_polar_pair(tape, out, 0);
                    let t_p = Self::push_polar_pair(tape, out, 1);
                    let o_s = tape.cscale_real(t_s, norm);
                    let o_p = tape.cscale_real(t_p, norm);
                    let blk = tape.alloc(4);
                    tape.copy_into(o_s, 2, blk);
                    tape.copy_into(o_p, 2, blk + 2);
                    fld = blk;
                    frame = out_f;
                }
                (InteractionKind::Diffraction, InteractionGeom::Wedge { n0, nn, .. }) => {
                    let (in_f, out_f) = diffraction_frames(frame.d, rec.d_aod, n0, nn);
                    let ang = diffraction_angles(
                        frame.d,
                        rec.d_aod,
                        n0,
                        nn,
                        path.seg_lengths[i],
                        path.seg_lengths[i + 1],
                        scene.max_dim,
                    );
                    fld = tape.frame2(basis_change(&frame, &in_f), fld);
                    let inb = tape.alloc(EMBED_DIM + 7 + 2 * 7 * M_INTERACTION);
                    tape.copy_into(emb, EMBED_DIM, inb);
                    for (j, v) in diffr_geom_features(&ang).into_iter().enumerate() {
                        tape.set(inb + EMBED_DIM as u32 + j as u32, v);
                    }
                    let out = self.push_mlp(tape, self.diffr_net, inb);
                    let t = [
                        Self::push_polar_pair(tape, out, 0),
                        Self::push_polar_pair(tape, out, 1),
                        Self::push_polar_pair(tape, out, 2),
                        Self::push_polar_pair(tape, out, 3),
                    ];
                    let blk = tape.alloc(4);
                    let a = tape.cmul(t[0], fld);
                    let b = tape.cmul(t[1], fld + 2);
                    tape.cadd_into(a, b, blk);
                    let c = tape.cmul(t[2], fld);
                    let d = tape.cmul(t[3], fld + 2);
                    tape.cadd_into(c, d, blk + 2);
                    fld = blk;
                    frame = out_f;
                }
                _ => panic!("interaction kind inconsistent with its geometry record"),
            }
        }
        let rot = tape.frame2(basis_change(&frame, &spherical_frame(path.d_last)), fld);
        let scale = grid.wavelength() / (4.0 * PI) * path.spread;
        let alpha = tape.scale_const(rot, 2, scale);
        tape.accum_channel(alpha, h, path.tau);
        Ok(alpha)
    }

    /// Builds the full channel prediction for one scene instance on a tape.
    pub fn channel_tape<'a>(
        &'a self,
        scene: &Scene,
        paths: &[PathGeometry],
        grid: &FreqGrid,
    ) -> Result<ChannelTape<'a>, TwinError> {
        let mut tape = Tape::new(&self.registry);
        tape.set_freqs((0..grid.n_subc).map(|k| grid.freq(k)).collect());
        let h = tape.alloc(2 * grid.n_subc);
        let mut alphas = Vec::with_capacity(paths.len());
        for path in paths {
            alphas.push(self.push_path(&mut tape, scene, path, grid, h)?);
        }
        Ok(ChannelTape { tape, h, alphas, n_subc: grid.n_subc })
    }

    /// Channel tape extended with loss = log10(max(err/energy, 1e-30))
    /// against a ground-truth channel.
    pub fn loss_tape<'a>(
        &'a self,
        scene: &Scene,
        paths: &[PathGeometry],
        grid: &FreqGrid,
        target: &[Complex64],
    ) -> Result<LossTape<'a>, TwinError> {
        let energy: f64 = target.iter().map(|c| c.norm_sqr()).sum();
        if energy <= 0.0 {
            return Err(TwinError::ZeroTargetChannel);
        }
        let ct = self.channel_tape(scene, paths, grid)?;
        let mut tape = ct.tape;
        let err = tape.err_energy(ct.h, target);
        let ratio = tape.scale_const(err, 1, 1.0 / energy);
        let clamped = tape.clamp_min(ratio, 1e-30);
        let loss = tape.log10(clamped);
        Ok(LossTape { tape, h: ct.h, loss, n_subc: ct.n_subc })
    }

    /// Predicted frequency response for one traced scene instance.
    pub fn predict_channel(
        &self,
        scene: &Scene,
        paths: &[PathGeometry],
        grid: &FreqGrid,
    ) -> Result<Vec<Complex64>, TwinError> {
        Ok(self.channel_tape(scene, paths, grid)?.channel())
    }

    pub fn grid(&self, delta_f: f64, n_subc: usize) -> FreqGrid {
        FreqGrid { f_c: self.f_c, delta_f, n_subc }
    }

    pub fn save(&self, path: &Path) -> Result<(), TwinError> {
        let mut manifest = vec![
            ("carrier_hz".to_string(), fmt_f64(self.f_c)),
            ("refl_net".to_string(), self.refl_net.0.to_string()),
            ("diffr_net".to_string(), self.diffr_net.0.to_string()),
            ("scat_net".to_string(), self.scat_net.0.to_string()),
        ];
        for (id, net) in &self.object_nets {
            manifest.push(("object".to_string(), format!("{id}:{}", net.0)));
        }
        checkpoint::write_path(path, &self.registry, &manifest)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TwinModel, TwinError> {
        let (registry, manifest) = checkpoint::read_path(path)?;
        let mut f_c = None;
        let mut refl = None;
        let mut diffr = None;
        let mut scat = None;
        let mut object_nets = BTreeMap::new();
        let bad = |msg: &str| TwinError::Manifest(msg.to_string());
        for (k, v) in &manifest {
            match k.as_str() {
                "carrier_hz" => f_c = Some(v.parse::<f64>().map_err(|_| bad("bad carrier"))?),
                "refl_net" => refl = Some(NetId(v.parse().map_err(|_| bad("bad refl_net"))?)),
                "diffr_net" => diffr = Some(NetId(v.parse().map_err(|_| bad("bad diffr_net"))?)),
                "scat_net" => scat = Some(NetId(v.parse().map_err(|_| bad("bad scat_net"))?)),
                "object" => {
                    let (id, net) = v
                        .split_once(':')
                        .ok_or_else(|| bad("object entry must be id:net"))?;
                    object_nets.insert(
                        id.parse::<u32>().map_err(|_| bad("bad object id"))?,
                        NetId(net.parse().map_err(|_| bad("bad object net"))?),
                    );
                }
                other => return Err(TwinError::Manifest(format!("unknown key `{other}`"))),
            }
        }
        let twin = TwinModel {
            registry,
            object_nets,
            refl_net: refl.ok_or_else(|| bad("missing refl_net"))?,
            diffr_net: diffr.ok_or_else(|| bad("missing diffr_net"))?,
            scat_net: scat.ok_or_else(|| bad("missing scat_net"))?,
            f_c: f_c.ok_or_else(|| bad("missing carrier_hz"))?,
        };
        let n = twin.registry.len() as u32;
        let all_ids = twin
            .object_nets
            .values()
            .copied()
            .chain([twin.refl_net, twin.diffr_net, twin.scat_net]);
        for id in all_ids {
            if id.0 >= n {
                return Err(TwinError::Manifest(format!("net index {} out of range", id.0)));
            }
        }
        Ok(twin)
    }
}

/// Per-sample evaluation metric: 10*log10(NMSE), floored at -300 dB.
pub fn nmse_db(h_true: &[Complex64], h_pred: &[Complex64]) -> f64 {
    let energy: f64 = h_true.iter().map(|c| c.norm_sqr()).sum();
    let err: f64 = h_true.iter().zip(h_pred.iter()).map(|(t, p)| (t - p).norm_sqr()).sum();
    let ratio = (err / energy).max(1e-30);
    (10.0 * ratio.log10()).max(-300.0)
}

const _: () = {
    assert!(SPEED_OF_LIGHT > 0.0);
};
