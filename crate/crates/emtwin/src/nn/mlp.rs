//! Dense feed-forward network shapes, parameter storage and initialization.
//!
//! Parameters of one network live in a single flat buffer, layer by layer:
//! row-major weights (out x in) followed by the biases. Hidden layers use a
//! rectifier; the final layer feeds per-output heads that constrain ranges
//! (exp for amplitudes, 2*pi*logistic for phases, identity otherwise).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Range-constraining activation applied to one output of the final layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// exp(x), for amplitudes in (0, inf).
    Exp,
    /// 2*pi*logistic(x), for phases in (0, 2*pi).
    Sigmoid2Pi,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Layer widths: input, hidden..., output.
    pub widths: Vec<usize>,
    /// One head per output.
    pub heads: Vec<Head>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, heads: Vec<Head>) -> MlpSpec {
        assert!(widths.len() >= 2 && widths.iter().all(|&w| w >= 1));
        assert_eq!(heads.len(), *widths.last().unwrap());
        MlpSpec { widths, heads }
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// (fan-in, fan-out) of layer `l`.
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l + 1])
    }

    /// Offset of layer `l`'s weights in the flat parameter buffer; the
    /// layer's biases start at offset + in*out.
    pub fn layer_offset(&self, l: usize) -> usize {
        (0..l)
            .map(|i| {
                let (n_in, n_out) = self.layer_dims(i);
                n_in * n_out + n_out
            })
            .sum()
    }

    pub fn param_len(&self) -> usize {
        self.layer_offset(self.n_layers())
    }

    pub fn n_inputs(&self) -> usize {
        self.widths[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// Fan-in uniform initialization, weights and biases both in
/// +-1/sqrt(fan_in); drawing order is fixed (layer by layer, weights then
/// biases) so one seed always yields the same buffer. With `zero_final` the
/// last layer starts at zero, which pins the head outputs to exp(0)=1 and
/// 2*pi*logistic(0)=pi until training moves them.
pub fn init_params(spec: &MlpSpec, rng: &mut ChaCha8Rng, zero_final: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.param_len());
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = spec.layer_dims(l);
        let n = n_in * n_out + n_out;
        if zero_final && l == spec.n_layers() - 1 {
            out.extend(std::iter::repeat(0.0).take(n));
        } else {
            let bound = 1.0 / (n_in as f64).sqrt();
            out.extend((0..n).map(|_| rng.gen_range(-bound..bound)));
        }
    }
    out
}

/// Straight-line evaluation without gradient recording; doubles as the
/// independent arithmetic oracle for the tape's dense path.
pub fn eval_mlp(spec: &MlpSpec, params: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len(), spec.n_inputs());
    assert_eq!(params.len(), spec.param_len());
    let mut cur = x.to_vec();
    for l in 0..spec.n_layers() {
        let (n_in, n_out) = spec.layer_dims(l);
        let off = spec.layer_offset(l);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        let mut next = Vec::with_capacity(n_out);
        for o in 0..n_out {
            let row = &w[o * n_in..(o + 1) * n_in];
            let z: f64 = b[o] + row.iter().zip(cur.iter()).map(|(wi, xi)| wi * xi).sum::<f64>();
            next.push(z);
        }
        if l + 1 < spec.n_layers() {
            for z in &mut next {
                *z = z.max(0.0);
            }
        }
        cur = next;
    }
    for (z, head) in cur.iter_mut().zip(spec.heads.iter()) {
        *z = match head {
            Head::Exp => z.exp(),
            Head::Sigmoid2Pi => 2.0 * std::f64::consts::PI / (1.0 + (-*z).exp()),
            Head::Linear => *z,
        };
    }
    cur
}

/// Index of one registered network; also indexes the gradient store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NetId(pub u32);

/// Per-network gradient buffers, shaped like the registry's parameters.
pub type GradStore = Vec<Vec<f64>>;

/// All networks of one model, addressed by [NetId] in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetRegistry {
    pub specs: Vec<MlpSpec>,
    pub params: Vec<Vec<f64>>,
}

impl NetRegistry {
    pub fn new() -> NetRegistry {
        NetRegistry::default()
    }

    pub fn add(&mut self, spec: MlpSpec, params: Vec<f64>) -> NetId {
        assert_eq!(params.len(), spec.param_len());
        let id = NetId(self.specs.len() as u32);
        self.specs.push(spec);
        self.params.push(params);
        id
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn spec(&self, id: NetId) -> &MlpSpec {
        &self.specs[id.0 as usize]
    }

    pub fn params(&self, id: NetId) -> &[f64] {
        &self.params[id.0 as usize]
    }

    pub fn zero_grads(&self) -> GradStore {
        self.params.iter().map(|p| vec![0.0; p.len()]).collect()
    }
}
