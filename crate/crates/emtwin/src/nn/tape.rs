//! Reverse-mode gradient tape over the fixed op vocabulary that channel
//! prediction needs: dense layers, the two head activations, and the complex
//! field arithmetic that cascades transfer matrices into a channel and a
//! scalar loss.
//!
//! Values live in one flat slot array; a complex number occupies two
//! adjacent slots (re, im). Pushing an op computes its forward value
//! immediately, so a fully built tape already holds the evaluation;
//! `backward` then replays the op list in reverse, accumulating exact
//! adjoints into per-network gradient buffers.

use super::mlp::{GradStore, NetId, NetRegistry};
use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone)]
enum Op {
    /// One dense layer of a registered net: y = W x + b.
    Dense { net: NetId, layer: usize, x: u32, y: u32 },
    Relu { x: u32, y: u32, n: u32 },
    Exp { x: u32, y: u32 },
    /// y = 2*pi*logistic(x).
    Sigmoid2Pi { x: u32, y: u32 },
    /// Complex from amplitude and phase: y = r * e^{j phi}.
    Polar { r: u32, phi: u32, y: u32 },
    CMul { a: u32, b: u32, y: u32 },
    CAdd { a: u32, b: u32, y: u32 },
    /// Constant real 2x2 matrix acting on a pair of complex slots; this is
    /// how (geometry-fixed) polarization basis changes enter the graph.
    Frame2 { m: [f64; 4], x: u32, y: u32 },
    /// Complex scaled by a real slot.
    CScaleReal { a: u32, s: u32, y: u32 },
    /// n real slots scaled by a constant.
    ScaleConst { x: u32, y: u32, n: u32, c: f64 },
    Add { a: u32, b: u32, y: u32 },
    Mul { a: u32, b: u32, y: u32 },
    Sqrt { x: u32, y: u32 },
    Recip { x: u32, y: u32 },
    /// |a|^2 of one complex slot pair.
    MagSq { a: u32, y: u32 },
    Copy { x: u32, y: u32, n: u32 },
    /// h[k] += alpha * e^{-j 2 pi f_k tau} over the tape's frequency grid.
    AccumChannel { alpha: u32, h: u32, tau: f64 },
    /// y = sum_k |h[k] - target[k]|^2.
    ErrEnergy { h: u32, target: Box<[Complex64]>, y: u32 },
    ClampMin { x: u32, c: f64, y: u32 },
    Log10 { x: u32, y: u32 },
}

pub struct Tape<'a> {
    reg: &'a NetRegistry,
    vals: Vec<f64>,
    ops: Vec<Op>,
    freqs: Vec<f64>,
}

impl<'a> Tape<'a> {
    pub fn new(reg: &'a NetRegistry) -> Tape<'a> {
        Tape { reg, vals: Vec::new(), ops: Vec::new(), freqs: Vec::new() }
    }

    /// Subcarrier frequencies used by every `accum_channel` on this tape.
    pub fn set_freqs(&mut self, freqs: Vec<f64>) {
        self.freqs = freqs;
    }

    pub fn val(&self, slot: u32) -> f64 {
        self.vals[slot as usize]
    }

    pub fn complex(&self, slot: u32) -> Complex64 {
        Complex64::new(self.vals[slot as usize], self.vals[slot as usize + 1])
    }

    /// Zero-initialized block; used for input assembly and channel
    /// accumulators. Slots may be filled with `set` (constants) or by ops
    /// targeting them, each slot written exactly once.
    pub fn alloc(&mut self, n: usize) -> u32 {
        let at = self.vals.len() as u32;
        self.vals.extend(std::iter::repeat(0.0).take(n));
        at
    }

    /// Writes a constant into an allocated slot; constants take no part in
    /// the backward pass.
    pub fn set(&mut self, slot: u32, v: f64) {
        self.vals[slot as usize] = v;
    }

    pub fn constant(&mut self, v: f64) -> u32 {
        let at = self.alloc(1);
        self.set(at, v);
        at
    }

    pub fn constants(&mut self, vs: &[f64]) -> u32 {
        let at = self.alloc(vs.len());
        for (i, &v) in vs.iter().enumerate() {
            self.set(at + i as u32, v);
        }
        at
    }

    pub fn constant_c(&mut self, v: Complex64) -> u32 {
        self.constants(&[v.re, v.im])
    }

    pub fn dense(&mut self, net: NetId, layer: usize, x: u32) -> u32 {
        let reg = self.reg;
        let spec = reg.spec(net);
        let (n_in, n_out) = spec.layer_dims(layer);
        let off = spec.layer_offset(layer);
        let params = reg.params(net);
        let y = self.alloc(n_out);
        let xs = x as usize;
        for o in 0..n_out {
            let row = &params[off + o * n_in..off + (o + 1) * n_in];
            let mut acc = params[off + n_in * n_out + o];
            for i in 0..n_in {
                acc += row[i] * self.vals[xs + i];
            }
            self.vals[y as usize + o] = acc;
        }
        self.ops.push(Op::Dense { net, layer, x, y });
        y
    }

    pub fn relu(&mut self, x: u32, n: usize) -> u32 {
        let y = self.alloc(n);
        for i in 0..n {
            self.vals[y as usize + i] = self.vals[x as usize + i].max(0.0);
        }
        self.ops.push(Op::Relu { x, y, n: n as u32 });
        y
    }

    pub fn exp(&mut self, x: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[x as usize].exp();
        self.ops.push(Op::Exp { x, y });
        y
    }

    pub fn sigmoid_2pi(&mut self, x: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = 2.0 * PI / (1.0 + (-self.vals[x as usize]).exp());
        self.ops.push(Op::Sigmoid2Pi { x, y });
        y
    }

    pub fn polar(&mut self, r: u32, phi: u32) -> u32 {
        let y = self.alloc(2);
        let (rv, pv) = (self.vals[r as usize], self.vals[phi as usize]);
        self.vals[y as usize] = rv * pv.cos();
        self.vals[y as usize + 1] = rv * pv.sin();
        self.ops.push(Op::Polar { r, phi, y });
        y
    }

    pub fn cmul(&mut self, a: u32, b: u32) -> u32 {
        let y = self.alloc(2);
        let (av, bv) = (self.complex(a), self.complex(b));
        let p = av * bv;
        self.vals[y as usize] = p.re;
        self.vals[y as usize + 1] = p.im;
        self.ops.push(Op::CMul { a, b, y });
        y
    }

    pub fn cadd(&mut self, a: u32, b: u32) -> u32 {
        let y = self.alloc(2);
        self.cadd_into(a, b, y);
        y
    }

    pub fn cadd_into(&mut self, a: u32, b: u32, y: u32) {
        let s = self.complex(a) + self.complex(b);
        self.vals[y as usize] = s.re;
        self.vals[y as usize + 1] = s.im;
        self.ops.push(Op::CAdd { a, b, y });
    }

    pub fn cmul_into(&mut self, a: u32, b: u32, y: u32) {
        let p = self.complex(a) * self.complex(b);
        self.vals[y as usize] = p.re;
        self.vals[y as usize + 1] = p.im;
        self.ops.push(Op::CMul { a, b, y });
    }

    /// Applies the constant real matrix [m00 m01; m10 m11] to the complex
    /// pair starting at `x`, returning a new pair block.
    pub fn frame2(&mut self, m: [f64; 4], x: u32) -> u32 {
        let y = self.alloc(4);
        let x1 = self.complex(x);
        let x2 = self.complex(x + 2);
        let y1 = m[0] * x1 + m[1] * x2;
        let y2 = m[2] * x1 + m[3] * x2;
        for (i, v) in [y1.re, y1.im, y2.re, y2.im].into_iter().enumerate() {
            self.vals[y as usize + i] = v;
        }
        self.ops.push(Op::Frame2 { m, x, y });
        y
    }

    pub fn cscale_real(&mut self, a: u32, s: u32) -> u32 {
        let y = self.alloc(2);
        let av = self.complex(a);
        let sv = self.vals[s as usize];
        self.vals[y as usize] = av.re * sv;
        self.vals[y as usize + 1] = av.im * sv;
        self.ops.push(Op::CScaleReal { a, s, y });
        y
    }

    pub fn scale_const(&mut self, x: u32, n: usize, c: f64) -> u32 {
        let y = self.alloc(n);
        for i in 0..n {
            self.vals[y as usize + i] = c * self.vals[x as usize + i];
        }
        self.ops.push(Op::ScaleConst { x, y, n: n as u32, c });
        y
    }

    pub fn add(&mut self, a: u32, b: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[a as usize] + self.vals[b as usize];
        self.ops.push(Op::Add { a, b, y });
        y
    }

    pub fn mul(&mut self, a: u32, b: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[a as usize] * self.vals[b as usize];
        self.ops.push(Op::Mul { a, b, y });
        y
    }

    /// Like `mul` but writing into an already allocated slot, for building
    /// contiguous network inputs in place.
    pub fn mul_into(&mut self, a: u32, b: u32, y: u32) {
        self.vals[y as usize] = self.vals[a as usize] * self.vals[b as usize];
        self.ops.push(Op::Mul { a, b, y });
    }

    pub fn sqrt(&mut self, x: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[x as usize].sqrt();
        self.ops.push(Op::Sqrt { x, y });
        y
    }

    pub fn recip(&mut self, x: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = 1.0 / self.vals[x as usize];
        self.ops.push(Op::Recip { x, y });
        y
    }

    pub fn mag_sq(&mut self, a: u32) -> u32 {
        let y = self.alloc(1);
        let av = self.complex(a);
        self.vals[y as usize] = av.norm_sqr();
        self.ops.push(Op::MagSq { a, y });
        y
    }

    pub fn copy_into(&mut self, x: u32, n: usize, y: u32) {
        for i in 0..n {
            self.vals[y as usize + i] = self.vals[x as usize + i];
        }
        self.ops.push(Op::Copy { x, y, n: n as u32 });
    }

    /// Adds one path's contribution alpha * e^{-j 2 pi f_k tau} to the
    /// channel accumulator block `h` (2 slots per subcarrier).
    pub fn accum_channel(&mut self, alpha: u32, h: u32, tau: f64) {
        assert!(!self.freqs.is_empty(), "set_freqs before accumulating paths");
        let av = self.complex(alpha);
        for (k, &f) in self.freqs.iter().enumerate() {
            let ph = Complex64::from_polar(1.0, -2.0 * PI * f * tau);
            let c = av * ph;
            self.vals[h as usize + 2 * k] += c.re;
            self.vals[h as usize + 2 * k + 1] += c.im;
        }
        self.ops.push(Op::AccumChannel { alpha, h, tau });
    }

    pub fn err_energy(&mut self, h: u32, target: &[Complex64]) -> u32 {
        let y = self.alloc(1);
        let mut acc = 0.0;
        for (k, t) in target.iter().enumerate() {
            let d = self.complex(h + 2 * k as u32) - t;
            acc += d.norm_sqr();
        }
        self.vals[y as usize] = acc;
        self.ops.push(Op::ErrEnergy { h, target: target.into(), y });
        y
    }

    pub fn clamp_min(&mut self, x: u32, c: f64) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[x as usize].max(c);
        self.ops.push(Op::ClampMin { x, c, y });
        y
    }

    pub fn log10(&mut self, x: u32) -> u32 {
        let y = self.alloc(1);
        self.vals[y as usize] = self.vals[x as usize].log10();
        self.ops.push(Op::Log10 { x, y });
        y
    }

    /// Reverse pass: seeds d(loss)/d(slot `loss`) = `seed` and accumulates
    /// parameter gradients into `grads` (shaped like the registry).
    pub fn backward(&self, loss: u32, seed: f64, grads: &mut GradStore) {
        let mut adj = vec![0.0; self.vals.len()];
        adj[loss as usize] = seed;
        for op in self.ops.iter().rev() {
            match op {
                Op::Dense { net, layer, x, y } => {
                    let spec = self.reg.spec(*net);
                    let (n_in, n_out) = spec.layer_dims(*layer);
                    let off = spec.layer_offset(*layer);
                    let params = self.reg.params(*net);
                    let g = &mut grads[net.0 as usize];
                    let (xs, ys) = (*x as usize, *y as usize);
                    for o in 0..n_out {
                        let gy = adj[ys + o];
                        if gy == 0.0 {
                            continue;
                        }
                        g[off + n_in * n_out + o] += gy;
                        let row = &params[off + o * n_in..off + (o + 1) * n_in];
                        let grow = off + o * n_in;
                        for i in 0..n_in {
                            g[grow + i] += gy * self.vals[xs + i];
                            adj[xs + i] += gy * row[i];
                        }
                    }
                }
                Op::Relu { x, y, n } => {
                    for i in 0..*n as usize {
                        if self.vals[*x as usize + i] > 0.0 {
                            adj[*x as usize + i] += adj[*y as usize + i];
                        }
                    }
                }
                Op::Exp { x, y } => {
                    adj[*x as usize] += adj[*y as usize] * self.vals[*y as usize];
                }
                Op::Sigmoid2Pi { x, y } => {
                    let sg = self.vals[*y as usize] / (2.0 * PI);
                    adj[*x as usize] += adj[*y as usize] * 2.0 * PI * sg * (1.0 - sg);
                }
                Op::Polar { r, phi, y } => {
                    let (rv, pv) = (self.vals[*r as usize], self.vals[*phi as usize]);
                    let (s, c) = pv.sin_cos();
                    let (dre, dim) = (adj[*y as usize], adj[*y as usize + 1]);
                    adj[*r as usize] += dre * c + dim * s;
                    adj[*phi as usize] += rv * (dim * c - dre * s);
                }
                Op::CMul { a, b, y } => {
                    let dy = Complex64::new(adj[*y as usize], adj[*y as usize + 1]);
                    let da = dy * self.complex(*b).conj();
                    let db = dy * self.complex(*a).conj();
                    adj[*a as usize] += da.re;
                    adj[*a as usize + 1] += da.im;
                    adj[*b as usize] += db.re;
                    adj[*b as usize + 1] += db.im;
                }
                Op::CAdd { a, b, y } => {
                    for i in 0..2 {
                        adj[*a as usize + i] += adj[*y as usize + i];
                        adj[*b as usize + i] += adj[*y as usize + i];
                    }
                }
                Op::Frame2 { m, x, y } => {
                    for i in 0..2 {
                        let dy1 = adj[*y as usize + i];
                        let dy2 = adj[*y as usize + 2 + i];
                        adj[*x as usize + i] += m[0] * dy1 + m[2] * dy2;
                        adj[*x as usize + 2 + i] += m[1] * dy1 + m[3] * dy2;
                    }
                }
                Op::CScaleReal { a, s, y } => {
                    let sv = self.vals[*s as usize];
                    let av = self.complex(*a);
                    let (dre, dim) = (adj[*y as usize], adj[*y as usize + 1]);
                    adj[*a as usize] += dre * sv;
                    adj[*a as usize + 1] += dim * sv;
                    adj[*s as usize] += dre * av.re + dim * av.im;
                }
                Op::ScaleConst { x, y, n, c } => {
                    for i in 0..*n as usize {
                        adj[*x as usize + i] += c * adj[*y as usize + i];
                    }
                }
                Op::Add { a, b, y } => {
                    adj[*a as usize] += adj[*y as usize];
                    adj[*b as usize] += adj[*y as usize];
                }
                Op::Mul { a, b, y } => {
                    adj[*a as usize] += adj[*y as usize] * self.vals[*b as usize];
                    adj[*b as usize] += adj[*y as usize] * self.vals[*a as usize];
                }
                Op::Sqrt { x, y } => {
                    let yv = self.vals[*y as usize];
                    if yv > 0.0 {
                        adj[*x as usize] += adj[*y as usize] * 0.5 / yv;
                    }
                }
                Op::Recip { x, y } => {
                    let yv = self.vals[*y as usize];
                    adj[*x as usize] -= adj[*y as usize] * yv * yv;
                }
                Op::MagSq { a, y } => {
                    let dy = adj[*y as usize];
                    adj[*a as usize] += dy * 2.0 * self.vals[*a as usize];
                    adj[*a as usize + 1] += dy * 2.0 * self.vals[*a as usize + 1];
                }
                Op::Copy { x, y, n } => {
                    for i in 0..*n as usize {
                        adj[*x as usize + i] += adj[*y as usize + i];
                    }
                }
                Op::AccumChannel { alpha, h, tau } => {
                    let mut da = Complex64::new(0.0, 0.0);
                    for (k, &f) in self.freqs.iter().enumerate() {
                        let dh =
                            Complex64::new(adj[*h as usize + 2 * k], adj[*h as usize + 2 * k + 1]);
                        let ph = Complex64::from_polar(1.0, -2.0 * PI * f * tau);
                        da += dh * ph.conj();
                    }
                    adj[*alpha as usize] += da.re;
                    adj[*alpha as usize + 1] += da.im;
                }
                Op::ErrEnergy { h, target, y } => {
                    let dy = adj[*y as usize];
                    if dy != 0.0 {
                        for (k, t) in target.iter().enumerate() {
                            let d = self.complex(*h + 2 * k as u32) - t;
                            adj[*h as usize + 2 * k] += dy * 2.0 * d.re;
                            adj[*h as usize + 2 * k + 1] += dy * 2.0 * d.im;
                        }
                    }
                }
                Op::ClampMin { x, c, y } => {
                    if self.vals[*x as usize] > *c {
                        adj[*x as usize] += adj[*y as usize];
                    }
                }
                Op::Log10 { x, y } => {
                    adj[*x as usize] += adj[*y as usize] / (self.vals[*x as usize] * 10f64.ln());
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{eval_mlp, init_params, Head, MlpSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn registry_with(specs: Vec<MlpSpec>, seed: u64, zero_final: bool) -> NetRegistry {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reg = NetRegistry::new();
        for s in specs {
            let p = init_params(&s, &mut rng, zero_final);
            reg.add(s, p);
        }
        reg
    }

    fn run_mlp_on_tape(tape: &mut Tape, net: NetId, x: u32) -> Vec<u32> {
        let spec = tape.reg.spec(net).clone();
        let mut cur = x;
        for l in 0..spec.n_layers() {
            cur = tape.dense(net, l, cur);
            if l + 1 < spec.n_layers() {
                cur = tape.relu(cur, spec.widths[l + 1]);
            }
        }
        spec.heads
            .iter()
            .enumerate()
            .map(|(i, head)| match head {
                Head::Exp => tape.exp(cur + i as u32),
                Head::Sigmoid2Pi => tape.sigmoid_2pi(cur + i as u32),
                Head::Linear => cur + i as u32,
            })
            .collect()
    }

    #[test]
    fn dense_path_matches_straight_line_eval() {
        let spec = MlpSpec::new(
            vec![5, 9, 7, 3],
            vec![Head::Exp, Head::Sigmoid2Pi, Head::Linear],
        );
        let reg = registry_with(vec![spec.clone()], 11, false);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let want = eval_mlp(&spec, reg.params(NetId(0)), &x);
            let mut tape = Tape::new(&reg);
            let xs = tape.constants(&x);
            let ys = run_mlp_on_tape(&mut tape, NetId(0), xs);
            for (slot, w) in ys.iter().zip(want.iter()) {
                assert!((tape.val(*slot) - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_linear_neuron_has_textbook_gradients() {
        let spec = MlpSpec::new(vec![1, 1], vec![Head::Linear]);
        let mut reg = NetRegistry::new();
        reg.add(spec, vec![3.0, 0.5]);
        let mut tape = Tape::new(&reg);
        let x = tape.constant(2.0);
        let y = tape.dense(NetId(0), 0, x);
        assert!((tape.val(y) - 6.5).abs() < 1e-15);
        let mut grads = reg.zero_grads();
        tape.backward(y, 1.0, &mut grads);
        assert_eq!(grads[0], vec![2.0, 1.0]);
    }

    #[test]
    fn rectifier_kills_gradient_at_negative_preactivation() {
        let spec = MlpSpec::new(vec![1, 1, 1], vec![Head::Linear]);
        let mut reg = NetRegistry::new();
        // First layer drives the preactivation to -3; its weight and bias
        // must receive zero gradient through the dead rectifier.
        reg.add(spec, vec![-1.0, -1.0, 2.0, 0.0]);
        let mut tape = Tape::new(&reg);
        let x = tape.constant(2.0);
        let h = tape.dense(NetId(0), 0, x);
        let r = tape.relu(h, 1);
        let y = tape.dense(NetId(0), 1, r);
        let mut grads = reg.zero_grads();
        tape.backward(y, 1.0, &mut grads);
        assert_eq!(grads[0][0], 0.0);
        assert_eq!(grads[0][1], 0.0);
        assert_eq!(grads[0][3], 1.0);
    }

    #[test]
    fn complex_mul_preserves_magnitude_product() {
        let reg = NetRegistry::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let b = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mut tape = Tape::new(&reg);
            let sa = tape.constant_c(a);
            let sb = tape.constant_c(b);
            let y = tape.cmul(sa, sb);
            assert!((tape.complex(y).norm() - a.norm() * b.norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn channel_accumulation_matches_manual_phasor_sum() {
        let reg = NetRegistry::new();
        let freqs = vec![3.5e9, 3.50003e9, 3.50006e9];
        let alpha = Complex64::new(1.3e-4, -2.1e-5);
        let tau = 2.4e-8;
        let mut tape = Tape::new(&reg);
        tape.set_freqs(freqs.clone());
        let sa = tape.constant_c(alpha);
        let h = tape.alloc(6);
        tape.accum_channel(sa, h, tau);
        tape.accum_channel(sa, h, tau);
        for (k, &f) in freqs.iter().enumerate() {
            let want = 2.0 * alpha * Complex64::from_polar(1.0, -2.0 * PI * f * tau);
            let got = tape.complex(h + 2 * k as u32);
            assert!((got - want).norm() < 1e-15);
        }
    }

    // Builds a graph exercising every op: an MLP produces amplitude/phase
    // pairs, the transfers scale fields, a frame rotates them, a
    // normalization chain touches sqrt/recip/magsq, and two taps land in a
    // channel compared against a fixed target through the clamped log loss.
    #[test]
    fn gradients_match_central_finite_differences() {
        let spec_a = MlpSpec::new(vec![3, 6, 4], vec![Head::Exp, Head::Sigmoid2Pi, Head::Exp, Head::Sigmoid2Pi]);
        let spec_b = MlpSpec::new(vec![2, 5, 2], vec![Head::Linear, Head::Linear]);
        let reg = registry_with(vec![spec_a, spec_b], 21, false);
        let x = [0.31, -0.62, 0.47];
        let target = [
            Complex64::new(2.0e-4, -1.0e-4),
            Complex64::new(-5.0e-5, 8.0e-5),
        ];

        let loss_of = |reg: &NetRegistry| -> (f64, Option<GradStore>) {
            let mut tape = Tape::new(reg);
            tape.set_freqs(vec![3.5e9, 3.50003e9]);
            let xs = tape.constants(&x);
            let outs = {
                let mut cur = xs;
                cur = tape.dense(NetId(0), 0, cur);
                cur = tape.relu(cur, 6);
                cur = tape.dense(NetId(0), 1, cur);
                cur
            };
            let a1 = tape.exp(outs);
            let p1 = tape.sigmoid_2pi(outs + 1);
            let a2 = tape.exp(outs + 2);
            let p2 = tape.sigmoid_2pi(outs + 3);
            let t1 = tape.polar(a1, p1);
            let t2 = tape.polar(a2, p2);

            // Second net consumes a copy of part of the first input block.
            let xb = tape.alloc(2);
            tape.copy_into(xs, 2, xb);
            let h2 = tape.dense(NetId(1), 0, xb);
            let r2 = tape.relu(h2, 5);
            let o2 = tape.dense(NetId(1), 1, r2);

            // Field cascade: constant start field through both transfers.
            let e0 = tape.constant_c(Complex64::new(0.4, 0.1));
            let e1 = tape.constant_c(Complex64::new(-0.2, 0.3));
            let f1 = tape.cmul(t1, e0);
            let f2 = tape.cmul(t2, e1);
            let pair = tape.alloc(4);
            tape.copy_into(f1, 2, pair);
            tape.copy_into(f2, 2, pair + 2);
            let rot = tape.frame2([0.8, -0.6, 0.6, 0.8], pair);

            // Normalization chain: scale the rotated field by
            // o2[0] / sqrt(|f1|^2 + |f2|^2), then add the second component.
            let m1 = tape.mag_sq(rot);
            let m2 = tape.mag_sq(rot + 2);
            let ss = tape.add(m1, m2);
            let nrm = tape.sqrt(ss);
            let inv = tape.recip(nrm);
            let w = tape.mul(o2, inv);
            let scaled = tape.cscale_real(rot, w);
            let both = tape.cadd(scaled, rot + 2);
            let alpha = tape.scale_const(both, 2, 2.5e-4);

            let h = tape.alloc(4);
            tape.accum_channel(alpha, h, 1.9e-8);
            tape.accum_channel(both, h, 2.6e-8);
            let err = tape.err_energy(h, &target);
            let ratio = tape.scale_const(err, 1, 1.0 / 4.2e-8);
            let cl = tape.clamp_min(ratio, 1e-30);
            let loss = tape.log10(cl);
            let val = tape.val(loss);
            let mut grads = reg.zero_grads();
            tape.backward(loss, 1.0, &mut grads);
            (val, Some(grads))
        };

        let (_, grads) = loss_of(&reg);
        let grads = grads.unwrap();

        let mut checked = 0usize;
        let mut worst: f64 = 0.0;
        for net in 0..reg.len() {
            for i in 0..reg.params[net].len() {
                let h = 1e-6 * reg.params[net][i].abs().max(1.0);
                let mut plus = reg.clone();
                plus.params[net][i] += h;
                let mut minus = reg.clone();
                minus.params[net][i] -= h;
                let fd = (loss_of(&plus).0 - loss_of(&minus).0) / (2.0 * h);
                let ad = grads[net][i];
                let rel = (fd - ad).abs() / fd.abs().max(ad.abs()).max(1e-9);
                worst = worst.max(rel);
                checked += 1;
            }
        }
        assert!(checked >= 75, "checked only {checked} parameters");
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }
}
