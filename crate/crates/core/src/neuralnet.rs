//! Small dense networks with hand-written backpropagation.
//!
//! A [`Mlp`] stores all parameters in one flat vector, layer by layer, each
//! layer as a row-major `out x in` weight matrix followed by its `out`
//! biases. Gradients ([`Gradients`]) and optimiser moments ([`Adam`]) use
//! the same layout. Hidden layers use ReLU; the output is either a softmax
//! distribution (policy) or a single linear unit (value estimate).
//!
//! # File format
//!
//! All integers little-endian:
//!
//! | bytes    | content                                  |
//! |----------|------------------------------------------|
//! | 4        | magic `FLWN`                             |
//! | 4 (u32)  | format version, currently 1              |
//! | 1 (u8)   | head: 0 softmax, 1 linear                |
//! | 4 (u32)  | number of layer sizes `n`                |
//! | 4n (u32) | layer sizes, input first                 |
//! | 8p (f64) | the `p` parameters in flat order         |

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub const STATE_DIM: usize = 80;
pub const ACTION_COUNT: usize = 4;

const MAGIC: &[u8; 4] = b"FLWN";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {found} values, network expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("action {0} out of range")]
    InvalidAction(usize),
    #[error("invalid layer sizes {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("layer sizes {found:?} do not match expected {expected:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("gradient contains non-finite values")]
    NonFinite,
    #[error("network file: {0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Softmax,
    Linear,
}

/// Feed-forward network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    head: Head,
    params: Vec<f64>,
    /// Start of each layer's weights in `params`.
    offsets: Vec<usize>,
}

fn layer_offsets(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut total = 0;
    for w in sizes.windows(2) {
        offsets.push(total);
        total += w[1] * w[0] + w[1];
    }
    (offsets, total)
}

/// A `STATE_DIM -> hidden_width x hidden_count -> ACTION_COUNT` policy.
pub fn init_network(hidden_width: usize, hidden_count: usize, seed: u64) -> Result<Mlp, NnError> {
    let mut sizes = vec![STATE_DIM];
    sizes.extend(std::iter::repeat_n(hidden_width, hidden_count));
    sizes.push(ACTION_COUNT);
    if hidden_count == 0 {
        return Err(NnError::InvalidShape(sizes));
    }
    Mlp::new(&sizes, Head::Softmax, seed)
}

impl Mlp {
    /// He-initialised weights (normal, variance 2 / fan-in), zero biases.
    pub fn new(sizes: &[usize], head: Head, seed: u64) -> Result<Self, NnError> {
        let mut net = Self::zeros(sizes, head)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.layer_count() {
            let fan_in = net.sizes[l];
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in net.weights_mut(l) {
                *w = normal.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], head: Head) -> Result<Self, NnError> {
        if sizes.len() < 2
            || sizes.contains(&0)
            || (head == Head::Linear && sizes[sizes.len() - 1] != 1)
        {
            return Err(NnError::InvalidShape(sizes.to_vec()));
        }
        let (offsets, total) = layer_offsets(sizes);
        Ok(Mlp {
            sizes: sizes.to_vec(),
            head,
            params: vec![0.0; total],
            offsets,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    /// Number of weight layers.
    pub fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weight_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.offsets[layer];
        start..start + self.sizes[layer + 1] * self.sizes[layer]
    }

    fn bias_range(&self, layer: usize) -> std::ops::Range<usize> {
        let start = self.weight_range(layer).end;
        start..start + self.sizes[layer + 1]
    }

    /// Row-major `out x in` weights of `layer`.
    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.params[self.weight_range(layer)]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.weight_range(layer);
        &mut self.params[r]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.params[self.bias_range(layer)]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        let r = self.bias_range(layer);
        &mut self.params[r]
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every layer; the last entry is the output logits.
    fn pre_activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut zs: Vec<Vec<f64>> = Vec::with_capacity(self.layer_count());
        for l in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = self.weights(l);
            let mut z = self.biases(l).to_vec();
            match zs.last() {
                None => affine(w, x, &mut z, n_in, false),
                Some(prev) => affine(w, prev, &mut z, n_in, true),
            }
            debug_assert_eq!(z.len(), n_out);
            zs.push(z);
        }
        zs
    }

    /// Raw output values before the head.
    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        Ok(self.pre_activations(x).pop().expect("at least one layer"))
    }

    /// Output of the network: a probability vector for a softmax head, a
    /// single value for a linear head.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        let z = self.logits(x)?;
        Ok(match self.head {
            Head::Softmax => softmax(&z),
            Head::Linear => z,
        })
    }

    /// Scalar output of a linear-head network.
    pub fn value(&self, x: &[f64]) -> Result<f64, NnError> {
        Ok(self.logits(x)?[0])
    }

    /// Backpropagates `output_grad` (gradient of some scalar with respect
    /// to the output pre-activations).
    fn backprop(&self, x: &[f64], zs: &[Vec<f64>], output_grad: Vec<f64>) -> Gradients {
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = output_grad;
        for l in (0..self.layer_count()).rev() {
            let n_in = self.sizes[l];
            let input: Vec<f64> = if l == 0 {
                x.to_vec()
            } else {
                zs[l - 1].iter().map(|&z| z.max(0.0)).collect()
            };
            let w_range = self.weight_range(l);
            let gw = &mut grads[w_range.clone()];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, &a) in row.iter_mut().zip(&input) {
                        *g = d * a;
                    }
                }
            }
            grads[self.bias_range(l)].copy_from_slice(&delta);
            if l > 0 {
                let w = &self.params[w_range];
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        for (p, &wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                            *p += d * wi;
                        }
                    }
                }
                for (p, &z) in prev.iter_mut().zip(&zs[l - 1]) {
                    if z <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Gradients(grads)
    }

    /// Gradient of `log pi(action | x)` for a softmax head.
    pub fn logp_gradient(&self, x: &[f64], action: usize) -> Result<Gradients, NnError> {
        self.check_input(x)?;
        if action >= self.output_dim() {
            return Err(NnError::InvalidAction(action));
        }
        let zs = self.pre_activations(x);
        let p = softmax(zs.last().expect("at least one layer"));
        let mut g: Vec<f64> = p.iter().map(|&pi| -pi).collect();
        g[action] += 1.0;
        Ok(self.backprop(x, &zs, g))
    }

    /// Gradient of the scalar output of a linear-head network.
    pub fn value_gradient(&self, x: &[f64]) -> Result<Gradients, NnError> {
        self.check_input(x)?;
        let zs = self.pre_activations(x);
        Ok(self.backprop(x, &zs, vec![1.0; self.output_dim()]))
    }

    /// Moves the parameters along `scale * grads` (ascent) with Adam.
    ///
    /// A zero step (zero scale or an all-zero gradient) leaves both the
    /// parameters and the optimiser untouched.
    pub fn apply_update(
        &mut self,
        grads: &Gradients,
        scale: f64,
        opt: &mut Adam,
    ) -> Result<(), NnError> {
        if grads.0.len() != self.params.len() || opt.m.len() != self.params.len() {
            return Err(NnError::ShapeMismatch {
                expected: vec![self.params.len()],
                found: vec![grads.0.len(), opt.m.len()],
            });
        }
        if !scale.is_finite() || !grads.is_finite() {
            return Err(NnError::NonFinite);
        }
        if scale == 0.0 || grads.0.iter().all(|&g| g == 0.0) {
            return Ok(());
        }
        opt.t += 1;
        let t = opt.t as i32;
        let c1 = 1.0 - opt.beta1.powi(t);
        let c2 = 1.0 - opt.beta2.powi(t);
        for i in 0..self.params.len() {
            let g = scale * grads.0[i];
            opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
            opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
            let m_hat = opt.m[i] / c1;
            let v_hat = opt.v[i] / c2;
            self.params[i] += opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(13 + 4 * self.sizes.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.head {
            Head::Softmax => 0,
            Head::Linear => 1,
        });
        out.extend_from_slice(&(self.sizes.len() as u32).to_le_bytes());
        for &s in &self.sizes {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(NnError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NnError::Format(format!("unsupported version {version}")));
        }
        let head = match r.take(1)?[0] {
            0 => Head::Softmax,
            1 => Head::Linear,
            h => return Err(NnError::Format(format!("unknown head {h}"))),
        };
        let n = r.u32()? as usize;
        if n > 1024 {
            return Err(NnError::Format(format!("implausible layer count {n}")));
        }
        let sizes = (0..n)
            .map(|_| r.u32().map(|s| s as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let mut net = Mlp::zeros(&sizes, head).map_err(|e| NnError::Format(e.to_string()))?;
        if bytes.len() - r.at != 8 * net.params.len() {
            return Err(NnError::Format(format!(
                "expected {} parameter bytes, found {}",
                8 * net.params.len(),
                bytes.len() - r.at
            )));
        }
        for p in net.params.iter_mut() {
            *p = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NnError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| NnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NnError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| NnError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_bytes(&bytes)
    }

    /// Loads and checks the layer sizes.
    pub fn load_with_shape(path: impl AsRef<Path>, sizes: &[usize]) -> Result<Self, NnError> {
        let net = Self::load(path)?;
        if net.sizes != sizes {
            return Err(NnError::ShapeMismatch {
                expected: sizes.to_vec(),
                found: net.sizes,
            });
        }
        Ok(net)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.at + n;
        let slice = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| NnError::Format("truncated file".into()))?;
        self.at = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

/// `z += W * act(input)`, where `act` is ReLU when `relu` is set.
fn affine(w: &[f64], input: &[f64], z: &mut [f64], n_in: usize, relu: bool) {
    for (o, zo) in z.iter_mut().enumerate() {
        let row = &w[o * n_in..(o + 1) * n_in];
        let mut acc = 0.0;
        for (&wi, &a) in row.iter().zip(input) {
            let a = if relu { a.max(0.0) } else { a };
            acc += wi * a;
        }
        *zo += acc;
    }
}

/// Numerically stable softmax.
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// Parameter-shaped gradient in the network's flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(Vec<f64>);

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients(vec![0.0; net.param_count()])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Gradients(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, other: &Gradients, factor: f64) {
        for (a, &b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in &mut self.0 {
            *a *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|g| g.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Adaptive moment estimation state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 1e-3;

    pub fn new(net: &Mlp, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
        }
    }

    /// Number of updates applied.
    pub fn steps(&self) -> u64 {
        self.t
    }
}
