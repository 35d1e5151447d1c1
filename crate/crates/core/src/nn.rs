//! Small dense actor-critic: a shared ReLU body feeding a linear policy head
//! (one logit per swap slot) and a scalar value head. Gradients are computed
//! by hand; no autodiff.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub policy_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, policy_dim: usize) -> Result<Self> {
        let spec = Self {
            input_dim,
            hidden,
            policy_dim,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.policy_dim == 0 || self.hidden.iter().any(|&w| w == 0) {
            return Err(invalid(format!("all layer widths must be >= 1: {self:?}")));
        }
        Ok(())
    }

    fn body_out(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    /// `(in, out)` for body layers, then the policy head, then the value head.
    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden);
        let mut shapes: Vec<_> = dims.windows(2).map(|w| (w[0], w[1])).collect();
        shapes.push((self.body_out(), self.policy_dim));
        shapes.push((self.body_out(), 1));
        shapes
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Row-major `out × in` weights and a bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            w: vec![0.0; in_dim * out_dim],
            b: vec![0.0; out_dim],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.b.iter().copied());
        for (o, row) in out.iter_mut().zip(self.w.chunks_exact(self.in_dim)) {
            *o += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates `dW += g xᵀ`, `db += g` into `grad`, and writes `Wᵀ g` to
    /// `dx` when requested.
    fn backprop(&self, x: &[f64], g: &[f64], grad: &mut Layer, dx: Option<&mut Vec<f64>>) {
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            grad.b[o] += go;
            let row = &mut grad.w[o * self.in_dim..(o + 1) * self.in_dim];
            for (r, &xi) in row.iter_mut().zip(x) {
                *r += go * xi;
            }
        }
        if let Some(dx) = dx {
            dx.clear();
            dx.resize(self.in_dim, 0.0);
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.in_dim..(o + 1) * self.in_dim];
                for (d, &w) in dx.iter_mut().zip(row) {
                    *d += go * w;
                }
            }
        }
    }
}

/// All weights; also used for gradients and Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub logits: Vec<f64>,
    pub value: f64,
}

/// Inputs and post-activations of the body, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn zeros(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec: spec.clone(),
            layers: spec
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        })
    }

    /// He-uniform weights, zero biases, policy head scaled by 0.01.
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(spec)?;
        let policy = p.layers.len() - 2;
        for (k, layer) in p.layers.iter_mut().enumerate() {
            let limit = (6.0 / layer.in_dim as f64).sqrt();
            let scale = if k == policy { 0.01 } else { 1.0 };
            for w in &mut layer.w {
                *w = rng.gen_range(-limit..limit) * scale;
            }
        }
        Ok(p)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn body(&self) -> &[Layer] {
        &self.layers[..self.layers.len() - 2]
    }

    fn policy_head(&self) -> &Layer {
        &self.layers[self.layers.len() - 2]
    }

    fn value_head(&self) -> &Layer {
        &self.layers[self.layers.len() - 1]
    }

    /// Weights then biases, layer by layer.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(&l.w);
            out.extend(&l.b);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(invalid(format!(
                "flat vector has {} entries, network has {}",
                values.len(),
                self.num_params()
            )));
        }
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for w in l.w.iter_mut().chain(l.b.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(&l.b))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.values_mut().for_each(|v| *v *= a);
    }

    /// `self += a · other`.
    pub fn axpy(&mut self, a: f64, other: &ParamSet) -> Result<()> {
        self.check_congruent(other)?;
        for (x, y) in self.values_mut().zip(other.values()) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn check_congruent(&self, other: &ParamSet) -> Result<()> {
        if self.spec != other.spec {
            return Err(invalid("parameter sets have different shapes"));
        }
        Ok(())
    }

    /// Content fingerprint (FNV-1a over the bit patterns).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for v in self.values() {
            for byte in v.to_bits().to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Output> {
        Ok(self.forward_cached(obs)?.0)
    }

    pub fn forward_cached(&self, obs: &[f64]) -> Result<(Output, ForwardCache)> {
        if obs.len() != self.spec.input_dim {
            return Err(invalid(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.spec.input_dim
            )));
        }
        let mut activations = Vec::with_capacity(self.body().len() + 1);
        activations.push(obs.to_vec());
        for layer in self.body() {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.apply(activations.last().expect("nonempty"), &mut z);
            z.iter_mut().for_each(|v| *v = v.max(0.0));
            activations.push(z);
        }
        let top = activations.last().expect("nonempty");
        let mut logits = Vec::with_capacity(self.spec.policy_dim);
        self.policy_head().apply(top, &mut logits);
        let mut value = Vec::with_capacity(1);
        self.value_head().apply(top, &mut value);
        Ok((
            Output {
                logits,
                value: value[0],
            },
            ForwardCache { activations },
        ))
    }

    /// Accumulates into `grad` the parameter gradient of a scalar whose
    /// derivatives with respect to the logits and value are given.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        dvalue: f64,
        grad: &mut ParamSet,
    ) -> Result<()> {
        self.check_congruent(grad)?;
        if dlogits.len() != self.spec.policy_dim {
            return Err(invalid("upstream logit gradient has the wrong length"));
        }
        let n = self.layers.len();
        let top = cache.activations.last().expect("nonempty");
        let mut g_top = Vec::new();
        let mut g_value = Vec::new();
        let (body_grads, head_grads) = grad.layers.split_at_mut(n - 2);
        let (policy_grad, value_grad) = head_grads.split_at_mut(1);
        self.policy_head()
            .backprop(top, dlogits, &mut policy_grad[0], Some(&mut g_top));
        self.value_head()
            .backprop(top, &[dvalue], &mut value_grad[0], Some(&mut g_value));
        for (a, b) in g_top.iter_mut().zip(&g_value) {
            *a += b;
        }
        let mut g = g_top;
        let mut dx = Vec::new();
        for k in (0..n - 2).rev() {
            // ReLU mask from the post-activation.
            for (gi, &a) in g.iter_mut().zip(&cache.activations[k + 1]) {
                if a <= 0.0 {
                    *gi = 0.0;
                }
            }
            let want_dx = k > 0;
            self.layers[k].backprop(
                &cache.activations[k],
                &g,
                &mut body_grads[k],
                if want_dx { Some(&mut dx) } else { None },
            );
            if want_dx {
                std::mem::swap(&mut g, &mut dx);
            }
        }
        Ok(())
    }

    pub fn backward(&self, obs: &[f64], dlogits: &[f64], dvalue: f64) -> Result<ParamSet> {
        let (_, cache) = self.forward_cached(obs)?;
        let mut grad = ParamSet::zeros(&self.spec)?;
        self.backward_into(&cache, dlogits, dvalue, &mut grad)?;
        Ok(grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

pub const DEFAULT_LEARNING_RATE: f64 = 3e-4;

impl AdamState {
    pub fn new(spec: &MlpSpec, learning_rate: f64) -> Result<Self> {
        Ok(Self {
            m: ParamSet::zeros(spec)?,
            v: ParamSet::zeros(spec)?,
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        })
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts the update
/// and leaves both `params` and `state` untouched.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState) -> Result<()> {
    params.check_congruent(grads)?;
    params.check_congruent(&state.m)?;
    if let Some(i) = grads.values().position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at flat index {i}")));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.learning_rate, state.eps);
    for (((p, &g), m), v) in params
        .values_mut()
        .zip(grads.values())
        .zip(state.m.values_mut())
        .zip(state.v.values_mut())
    {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
    }
    Ok(())
}

/// Parameters plus optional optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ParamSet,
    pub adam: Option<AdamState>,
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"RLQITENN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Binary layout, all integers and floats little-endian:
///
/// ```text
/// magic "RLQITENN" | version u32 | input_dim u32 | n_hidden u32 |
/// hidden widths u32... | policy_dim u32 | has_adam u8 |
/// params f64... (per layer: weights row-major, then biases)
/// [t u64 | lr f64 | beta1 f64 | beta2 f64 | eps f64 | m f64... | v f64...]
/// ```
impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = &self.params.spec;
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((spec.input_dim as u32).to_le_bytes());
        out.extend((spec.hidden.len() as u32).to_le_bytes());
        for &w in &spec.hidden {
            out.extend((w as u32).to_le_bytes());
        }
        out.extend((spec.policy_dim as u32).to_le_bytes());
        out.push(self.adam.is_some() as u8);
        let push = |out: &mut Vec<u8>, p: &ParamSet| {
            for v in p.values() {
                out.extend(v.to_le_bytes());
            }
        };
        push(&mut out, &self.params);
        if let Some(a) = &self.adam {
            out.extend(a.t.to_le_bytes());
            for x in [a.learning_rate, a.beta1, a.beta2, a.eps] {
                out.extend(x.to_le_bytes());
            }
            push(&mut out, &a.m);
            push(&mut out, &a.v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Load("not a network checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Load(format!(
                "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
            )));
        }
        let input_dim = r.u32()? as usize;
        let n_hidden = r.u32()? as usize;
        if n_hidden > 1024 {
            return Err(Error::Load(format!("implausible layer count {n_hidden}")));
        }
        let hidden = (0..n_hidden).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
        let policy_dim = r.u32()? as usize;
        let spec = MlpSpec::new(input_dim, hidden, policy_dim).map_err(|e| Error::Load(e.to_string()))?;
        let has_adam = match r.take(1)?[0] {
            0 => false,
            1 => true,
            b => return Err(Error::Load(format!("bad optimizer flag {b}"))),
        };
        let read_params = |r: &mut ByteReader| -> Result<ParamSet> {
            let mut p = ParamSet::zeros(&spec)?;
            let count = p.num_params();
            let needed = count.checked_mul(8).ok_or_else(|| Error::Load("size overflow".into()))?;
            if r.remaining() < needed {
                return Err(Error::Load("checkpoint truncated".into()));
            }
            let flat = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            p.set_flat(&flat)?;
            Ok(p)
        };
        let params = read_params(&mut r)?;
        let adam = if has_adam {
            let t = r.u64()?;
            let (learning_rate, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
            let m = read_params(&mut r)?;
            let v = read_params(&mut r)?;
            Some(AdamState {
                m,
                v,
                t,
                learning_rate,
                beta1,
                beta2,
                eps,
            })
        } else {
            None
        };
        if r.remaining() != 0 {
            return Err(Error::Load(format!("{} trailing bytes", r.remaining())));
        }
        Ok(Self { params, adam })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&JsonCheckpoint {
            version: CHECKPOINT_VERSION,
            checkpoint: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            version: u32,
        }
        let header: Header = serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(Error::Load(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                header.version
            )));
        }
        let parsed: JsonCheckpoint = serde_json::from_str(text).map_err(|e| Error::Load(e.to_string()))?;
        let ck = parsed.checkpoint;
        let expected = ParamSet::zeros(&ck.params.spec).map_err(|e| Error::Load(e.to_string()))?;
        let congruent = |p: &ParamSet| {
            p.layers.len() == expected.layers.len()
                && p.layers.iter().zip(&expected.layers).all(|(a, b)| {
                    a.in_dim == b.in_dim
                        && a.out_dim == b.out_dim
                        && a.w.len() == b.w.len()
                        && a.b.len() == b.b.len()
                })
        };
        let adam_ok = ck.adam.as_ref().map_or(true, |a| congruent(&a.m) && congruent(&a.v));
        if !congruent(&ck.params) || !adam_ok {
            return Err(Error::Load("checkpoint arrays do not match the stored spec".into()));
        }
        Ok(ck)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonCheckpoint {
    version: u32,
    #[serde(flatten)]
    checkpoint: Checkpoint,
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Load("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
