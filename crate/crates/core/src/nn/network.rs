use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 8] = b"UAVNNCK\0";
const CHECKPOINT_VERSION: u32 = 1;

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d { in_ch: usize, out_ch: usize, kernel: usize, stride: usize },
    LeakyRelu { slope: f64 },
    Flatten,
    Dense { units: usize },
    /// Appends the auxiliary input vector to the flattened features.
    ConcatAux { aux_len: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerShape {
    Image { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl LayerShape {
    pub fn numel(&self) -> usize {
        match *self {
            LayerShape::Image { c, h, w } => c * h * w,
            LayerShape::Flat(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Image input as `[channels, height, width]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

impl NetworkSpec {
    /// Convolution stack followed by an MLP head. Every conv and every hidden
    /// dense layer except the last is followed by LeakyReLU; the last hidden
    /// layer is linear, then a dense output of `out_units`.
    pub fn conv_mlp(
        input: [usize; 3],
        convs: &[(usize, usize, usize)],
        hidden: &[usize],
        aux_len: usize,
        out_units: usize,
        slope: f64,
    ) -> Self {
        let mut layers = Vec::new();
        let mut ch = input[0];
        for &(out_ch, kernel, stride) in convs {
            layers.push(LayerSpec::Conv2d { in_ch: ch, out_ch, kernel, stride });
            layers.push(LayerSpec::LeakyRelu { slope });
            ch = out_ch;
        }
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::ConcatAux { aux_len });
        for (i, &units) in hidden.iter().enumerate() {
            layers.push(LayerSpec::Dense { units });
            if i + 1 < hidden.len() {
                layers.push(LayerSpec::LeakyRelu { slope });
            }
        }
        layers.push(LayerSpec::Dense { units: out_units });
        Self { input, layers }
    }

    /// The reference architecture: three convolutions (32 k4 s2, 64 k2 s1,
    /// 64 k1 s1), flatten, position concat, dense 512 / 256 / 256 and a dense
    /// output head.
    pub fn reference(height: usize, width: usize, aux_len: usize, out_units: usize) -> Self {
        Self::conv_mlp(
            [1, height, width],
            &[(32, 4, 2), (64, 2, 1), (64, 1, 1)],
            &[512, 256, 256],
            aux_len,
            out_units,
            0.01,
        )
    }

    /// Smallest `(height, width)` image the convolution stack accepts.
    pub fn min_input(&self) -> (usize, usize) {
        let mut need = (1usize, 1usize);
        for layer in self.layers.iter().rev() {
            if let LayerSpec::Conv2d { kernel, stride, .. } = *layer {
                need.0 = (need.0 - 1) * stride + kernel;
                need.1 = (need.1 - 1) * stride + kernel;
            }
        }
        need
    }

    pub fn aux_len(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match l {
                LayerSpec::ConcatAux { aux_len } => Some(*aux_len),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Output shape of every layer; entry 0 is the input.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        let [c, h, w] = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::Shape(format!("input shape {:?} has a zero dimension", self.input)));
        }
        let mut shapes = vec![LayerShape::Image { c, h, w }];
        let mut seen_flatten = false;
        let mut concat_count = 0;
        for (idx, layer) in self.layers.iter().enumerate() {
            let err = |msg: String| Error::Shape(format!("layer {idx} ({layer:?}): {msg}"));
            let cur = *shapes.last().unwrap();
            let next = match (*layer, cur) {
                (LayerSpec::Conv2d { in_ch, out_ch, kernel, stride }, LayerShape::Image { c, h, w }) => {
                    if in_ch != c {
                        return Err(err(format!("expects {in_ch} input channels, got {c}")));
                    }
                    if out_ch == 0 || kernel == 0 || stride == 0 {
                        return Err(err("channels, kernel and stride must be positive".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(err(format!("kernel {kernel} larger than input {h}x{w}")));
                    }
                    LayerShape::Image { c: out_ch, h: (h - kernel) / stride + 1, w: (w - kernel) / stride + 1 }
                }
                (LayerSpec::Conv2d { .. }, LayerShape::Flat(_)) => {
                    return Err(err("convolution after flatten".into()));
                }
                (LayerSpec::LeakyRelu { slope }, s) => {
                    if !slope.is_finite() {
                        return Err(err("slope must be finite".into()));
                    }
                    s
                }
                (LayerSpec::Flatten, LayerShape::Image { .. }) => {
                    seen_flatten = true;
                    LayerShape::Flat(cur.numel())
                }
                (LayerSpec::Flatten, LayerShape::Flat(_)) => return Err(err("input is already flat".into())),
                (LayerSpec::ConcatAux { aux_len }, LayerShape::Flat(n)) => {
                    if !seen_flatten {
                        return Err(err("concat must follow flatten".into()));
                    }
                    concat_count += 1;
                    LayerShape::Flat(n + aux_len)
                }
                (LayerSpec::ConcatAux { .. }, LayerShape::Image { .. }) => {
                    return Err(err("concat must follow flatten".into()));
                }
                (LayerSpec::Dense { units }, LayerShape::Flat(_)) => {
                    if units == 0 {
                        return Err(err("dense layer needs at least one unit".into()));
                    }
                    LayerShape::Flat(units)
                }
                (LayerSpec::Dense { .. }, LayerShape::Image { .. }) => {
                    return Err(err("dense layer needs flat input".into()));
                }
            };
            shapes.push(next);
        }
        if concat_count != 1 {
            return Err(Error::Shape(format!("expected exactly one concat layer, found {concat_count}")));
        }
        if !matches!(shapes.last(), Some(LayerShape::Flat(_))) {
            return Err(Error::Shape("network must end with a flat output".into()));
        }
        Ok(shapes)
    }

    pub fn output_len(&self) -> Result<usize> {
        Ok(self.shapes()?.last().unwrap().numel())
    }
}

/// Activations retained by a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    batch: usize,
    /// Input of every layer, flattened per batch row.
    inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One entry per parameter tensor, aligned with [`Network::params`].
    pub params: Vec<Tensor>,
    pub image: Tensor,
    pub aux: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    shapes: Vec<LayerShape>,
    params: Vec<Tensor>,
    /// For each layer, index of its weight tensor (bias follows) if it has parameters.
    slots: Vec<Option<usize>>,
    version: u64,
}

impl Network {
    /// Fan-in scaled uniform weights, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(spec, |shape, fan_in| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
        })
    }

    /// Every weight and bias set to `value`.
    pub fn constant(spec: NetworkSpec, value: f64) -> Result<Self> {
        Self::build(spec, |shape, _| vec![value; shape.iter().product()])
    }

    fn build(spec: NetworkSpec, mut init: impl FnMut(&[usize], usize) -> Vec<f64>) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut params = Vec::new();
        let mut slots = Vec::with_capacity(spec.layers.len());
        for (idx, layer) in spec.layers.iter().enumerate() {
            let slot = match *layer {
                LayerSpec::Conv2d { in_ch, out_ch, kernel, .. } => {
                    let wshape = [out_ch, in_ch, kernel, kernel];
                    let w = init(&wshape, in_ch * kernel * kernel);
                    params.push(Tensor::new(wshape.to_vec(), w)?);
                    params.push(Tensor::zeros(&[out_ch]));
                    Some(params.len() - 2)
                }
                LayerSpec::Dense { units } => {
                    let fan_in = shapes[idx].numel();
                    let wshape = [units, fan_in];
                    let w = init(&wshape, fan_in);
                    params.push(Tensor::new(wshape.to_vec(), w)?);
                    params.push(Tensor::zeros(&[units]));
                    Some(params.len() - 2)
                }
                _ => None,
            };
            slots.push(slot);
        }
        Ok(Self { spec, shapes, params, slots, version: fresh_version() })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Mutable parameter access; invalidates outstanding forward caches.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version = fresh_version();
        &mut self.params
    }

    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().numel()
    }

    fn check_inputs(&self, image: &Tensor, aux: &Tensor) -> Result<usize> {
        let [c, h, w] = self.spec.input;
        let batch = image.shape().first().copied().unwrap_or(0);
        if image.shape() != [batch, c, h, w] {
            return Err(Error::Shape(format!(
                "layer 0: image shape {:?} does not match [batch, {c}, {h}, {w}]",
                image.shape()
            )));
        }
        let aux_len = self.spec.aux_len();
        if aux.shape() != [batch, aux_len] {
            return Err(Error::Shape(format!("aux shape {:?} does not match [{batch}, {aux_len}]", aux.shape())));
        }
        Ok(batch)
    }

    /// Inference pass.
    pub fn forward(&self, image: &Tensor, aux: &Tensor) -> Result<Tensor> {
        Ok(self.run(image, aux, false)?.0)
    }

    /// Forward pass keeping the activations needed by [`Network::backward`].
    pub fn forward_train(&self, image: &Tensor, aux: &Tensor) -> Result<(Tensor, ForwardCache)> {
        let (out, cache) = self.run(image, aux, true)?;
        Ok((out, cache.expect("cache requested")))
    }

    fn run(&self, image: &Tensor, aux: &Tensor, keep: bool) -> Result<(Tensor, Option<ForwardCache>)> {
        let batch = self.check_inputs(image, aux)?;
        let mut x = image.data().to_vec();
        let mut inputs = Vec::new();
        for (idx, layer) in self.spec.layers.iter().enumerate() {
            let in_shape = self.shapes[idx];
            let next = match *layer {
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    let (LayerShape::Image { c, h, w }, LayerShape::Image { c: oc, h: oh, w: ow }) =
                        (in_shape, self.shapes[idx + 1])
                    else {
                        unreachable!("validated spec")
                    };
                    let slot = self.slots[idx].unwrap();
                    let geo = ConvGeo { batch, c, h, w, oc, oh, ow, k: kernel, s: stride };
                    conv_forward(&x, self.params[slot].data(), self.params[slot + 1].data(), &geo)
                }
                LayerSpec::LeakyRelu { slope } => x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect(),
                LayerSpec::Flatten => x.clone(),
                LayerSpec::ConcatAux { aux_len } => {
                    let n = in_shape.numel();
                    let mut out = Vec::with_capacity(batch * (n + aux_len));
                    for b in 0..batch {
                        out.extend_from_slice(&x[b * n..(b + 1) * n]);
                        out.extend_from_slice(aux.row(b));
                    }
                    out
                }
                LayerSpec::Dense { units } => {
                    let slot = self.slots[idx].unwrap();
                    dense_forward(&x, self.params[slot].data(), self.params[slot + 1].data(), batch, in_shape.numel(), units)
                }
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("activation after layer {idx} ({layer:?})")));
            }
            if keep {
                inputs.push(std::mem::replace(&mut x, next));
            } else {
                x = next;
            }
        }
        let out = Tensor::new(vec![batch, self.output_len()], x)?;
        let cache = keep.then_some(ForwardCache { version: self.version, batch, inputs });
        Ok((out, cache))
    }

    /// Exact gradients of `sum(grad_out * forward(...))` with respect to every
    /// parameter and both inputs.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Tensor) -> Result<Gradients> {
        if cache.version != self.version || cache.inputs.len() != self.spec.layers.len() {
            return Err(Error::Usage("forward cache is stale or belongs to another network".into()));
        }
        let batch = cache.batch;
        if grad_out.shape() != [batch, self.output_len()] {
            return Err(Error::Shape(format!(
                "upstream gradient {:?} does not match [{batch}, {}]",
                grad_out.shape(),
                self.output_len()
            )));
        }
        let mut pgrads: Vec<Tensor> = self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        let mut g = grad_out.data().to_vec();
        let mut aux_grad = vec![0.0; batch * self.spec.aux_len()];
        for idx in (0..self.spec.layers.len()).rev() {
            let x = &cache.inputs[idx];
            let in_shape = self.shapes[idx];
            g = match self.spec.layers[idx] {
                LayerSpec::Conv2d { kernel, stride, .. } => {
                    let (LayerShape::Image { c, h, w }, LayerShape::Image { c: oc, h: oh, w: ow }) =
                        (in_shape, self.shapes[idx + 1])
                    else {
                        unreachable!("validated spec")
                    };
                    let slot = self.slots[idx].unwrap();
                    let geo = ConvGeo { batch, c, h, w, oc, oh, ow, k: kernel, s: stride };
                    let (gw, gb) = split_pair(&mut pgrads, slot);
                    conv_backward(x, self.params[slot].data(), &g, gw.data_mut(), gb.data_mut(), &geo)
                }
                LayerSpec::LeakyRelu { slope } => {
                    x.iter().zip(&g).map(|(&xi, &gi)| if xi > 0.0 { gi } else { slope * gi }).collect()
                }
                LayerSpec::Flatten => g,
                LayerSpec::ConcatAux { aux_len } => {
                    let n = in_shape.numel();
                    let mut gx = Vec::with_capacity(batch * n);
                    for b in 0..batch {
                        let row = &g[b * (n + aux_len)..(b + 1) * (n + aux_len)];
                        gx.extend_from_slice(&row[..n]);
                        aux_grad[b * aux_len..(b + 1) * aux_len].copy_from_slice(&row[n..]);
                    }
                    gx
                }
                LayerSpec::Dense { units } => {
                    let slot = self.slots[idx].unwrap();
                    let (gw, gb) = split_pair(&mut pgrads, slot);
                    dense_backward(x, self.params[slot].data(), &g, gw.data_mut(), gb.data_mut(), batch, in_shape.numel(), units)
                }
            };
        }
        let [c, h, w] = self.spec.input;
        Ok(Gradients {
            params: pgrads,
            image: Tensor::new(vec![batch, c, h, w], g)?,
            aux: Tensor::new(vec![batch, self.spec.aux_len()], aux_grad)?,
        })
    }

    /// Applies one optimizer step with the given parameter gradients.
    pub fn apply_gradients(&mut self, optimizer: &mut Adam, grads: &[Tensor]) -> Result<()> {
        optimizer.step(&mut self.params, grads)?;
        self.version = fresh_version();
        Ok(())
    }

    /// Binary checkpoint: magic, format version, tensor count, then for each
    /// parameter tensor its rank, dimensions and little-endian `f64` data.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Loads a checkpoint, validating every tensor shape against `spec`.
    pub fn from_checkpoint(spec: NetworkSpec, bytes: &[u8]) -> Result<Self> {
        let mut net = Self::constant(spec, 0.0)?;
        let mut cur = bytes;
        let mut take = |n: usize| -> Result<&[u8]> {
            if cur.len() < n {
                return Err(Error::Parse { line: 0, msg: "truncated checkpoint".into() });
            }
            let (head, rest) = cur.split_at(n);
            cur = rest;
            Ok(head)
        };
        if take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::Parse { line: 0, msg: "not a network checkpoint".into() });
        }
        let read_u32 = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
        let version = read_u32(take(4)?);
        if version != CHECKPOINT_VERSION as usize {
            return Err(Error::Parse { line: 0, msg: format!("unsupported checkpoint version {version}") });
        }
        let count = read_u32(take(4)?);
        if count != net.params.len() {
            return Err(Error::Shape(format!("checkpoint has {count} tensors, spec needs {}", net.params.len())));
        }
        for (i, p) in net.params.iter_mut().enumerate() {
            let rank = read_u32(take(4)?);
            let dims: Vec<usize> = (0..rank).map(|_| take(4).map(read_u32)).collect::<Result<_>>()?;
            if dims != p.shape() {
                return Err(Error::Shape(format!("tensor {i}: checkpoint shape {dims:?}, spec shape {:?}", p.shape())));
            }
            for v in p.data_mut() {
                *v = f64::from_le_bytes(take(8)?.try_into().unwrap());
            }
        }
        if !cur.is_empty() {
            return Err(Error::Parse { line: 0, msg: "trailing bytes after checkpoint".into() });
        }
        net.version = fresh_version();
        Ok(net)
    }
}

fn split_pair(v: &mut [Tensor], slot: usize) -> (&mut Tensor, &mut Tensor) {
    let (a, b) = v[slot..].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

struct ConvGeo {
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    oc: usize,
    oh: usize,
    ow: usize,
    k: usize,
    s: usize,
}

/// `c[m x n] = beta * c + a[m x k] * b[k x n]` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + n - 1 < c.len());
    // SAFETY: the asserted extents keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa as isize, csa as isize,
            b.as_ptr(), rsb as isize, csb as isize,
            beta,
            c.as_mut_ptr(), rsc as isize, 1,
        );
    }
}

/// Patch matrix `[batch * oh * ow, c * k * k]`.
fn im2col(x: &[f64], g: &ConvGeo) -> Vec<f64> {
    let ckk = g.c * g.k * g.k;
    let mut cols = vec![0.0; g.batch * g.oh * g.ow * ckk];
    let mut r = 0;
    for b in 0..g.batch {
        let xb = &x[b * g.c * g.h * g.w..];
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let row = &mut cols[r * ckk..(r + 1) * ckk];
                let mut idx = 0;
                for ci in 0..g.c {
                    for ki in 0..g.k {
                        let start = ci * g.h * g.w + (oi * g.s + ki) * g.w + oj * g.s;
                        row[idx..idx + g.k].copy_from_slice(&xb[start..start + g.k]);
                        idx += g.k;
                    }
                }
                r += 1;
            }
        }
    }
    cols
}

fn conv_forward(x: &[f64], weight: &[f64], bias: &[f64], g: &ConvGeo) -> Vec<f64> {
    let ckk = g.c * g.k * g.k;
    let hw = g.oh * g.ow;
    let cols = im2col(x, g);
    // rows of `prod` are output pixels, columns are output channels
    let mut prod = vec![0.0; g.batch * hw * g.oc];
    gemm(g.batch * hw, ckk, g.oc, &cols, (ckk, 1), weight, (1, ckk), 0.0, &mut prod, g.oc);
    let mut out = vec![0.0; g.batch * g.oc * hw];
    for b in 0..g.batch {
        for p in 0..hw {
            let src = &prod[(b * hw + p) * g.oc..(b * hw + p + 1) * g.oc];
            for (o, v) in src.iter().enumerate() {
                out[(b * g.oc + o) * hw + p] = v + bias[o];
            }
        }
    }
    out
}

fn conv_backward(x: &[f64], weight: &[f64], gout: &[f64], gw: &mut [f64], gb: &mut [f64], g: &ConvGeo) -> Vec<f64> {
    let ckk = g.c * g.k * g.k;
    let hw = g.oh * g.ow;
    let rows = g.batch * hw;
    // upstream gradient as [pixel, channel]
    let mut gt = vec![0.0; rows * g.oc];
    for b in 0..g.batch {
        for o in 0..g.oc {
            let go = &gout[(b * g.oc + o) * hw..(b * g.oc + o + 1) * hw];
            gb[o] += go.iter().sum::<f64>();
            for (p, v) in go.iter().enumerate() {
                gt[(b * hw + p) * g.oc + o] = *v;
            }
        }
    }
    let cols = im2col(x, g);
    // gw[oc, ckk] += gt^T cols
    gemm(g.oc, rows, ckk, &gt, (1, g.oc), &cols, (ckk, 1), 1.0, gw, ckk);
    // gcols[rows, ckk] = gt weight
    let mut gcols = vec![0.0; rows * ckk];
    gemm(rows, g.oc, ckk, &gt, (g.oc, 1), weight, (ckk, 1), 0.0, &mut gcols, ckk);
    let img = g.c * g.h * g.w;
    let mut gx = vec![0.0; x.len()];
    let mut r = 0;
    for b in 0..g.batch {
        let gxb = &mut gx[b * img..(b + 1) * img];
        for oi in 0..g.oh {
            for oj in 0..g.ow {
                let row = &gcols[r * ckk..(r + 1) * ckk];
                let mut idx = 0;
                for ci in 0..g.c {
                    for ki in 0..g.k {
                        let start = ci * g.h * g.w + (oi * g.s + ki) * g.w + oj * g.s;
                        for (d, v) in gxb[start..start + g.k].iter_mut().zip(&row[idx..idx + g.k]) {
                            *d += v;
                        }
                        idx += g.k;
                    }
                }
                r += 1;
            }
        }
    }
    gx
}

fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64], batch: usize, n_in: usize, n_out: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..batch).flat_map(|_| bias.iter().copied()).collect();
    gemm(batch, n_in, n_out, x, (n_in, 1), weight, (1, n_in), 1.0, &mut out, n_out);
    out
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    weight: &[f64],
    gout: &[f64],
    gw: &mut [f64],
    gb: &mut [f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
) -> Vec<f64> {
    for b in 0..batch {
        for (acc, v) in gb.iter_mut().zip(&gout[b * n_out..(b + 1) * n_out]) {
            *acc += v;
        }
    }
    // gw[n_out, n_in] += gout^T x
    gemm(n_out, batch, n_in, gout, (1, n_out), x, (n_in, 1), 1.0, gw, n_in);
    let mut gx = vec![0.0; batch * n_in];
    gemm(batch, n_out, n_in, gout, (n_out, 1), weight, (n_in, 1), 0.0, &mut gx, n_in);
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dense() -> NetworkSpec {
        NetworkSpec {
            input: [1, 1, 1],
            layers: vec![LayerSpec::Flatten, LayerSpec::ConcatAux { aux_len: 0 }, LayerSpec::Dense { units: 1 }],
        }
    }

    #[test]
    fn reference_shape_chain() {
        let spec = NetworkSpec::reference(30, 30, 51, 1);
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[1], LayerShape::Image { c: 32, h: 14, w: 14 });
        assert_eq!(shapes[3], LayerShape::Image { c: 64, h: 13, w: 13 });
        assert_eq!(shapes[5], LayerShape::Image { c: 64, h: 13, w: 13 });
        assert_eq!(shapes[7], LayerShape::Flat(10816));
        assert_eq!(shapes[8], LayerShape::Flat(10816 + 51));
        assert_eq!(*shapes.last().unwrap(), LayerShape::Flat(1));
        assert_eq!(spec.min_input(), (6, 6));
    }

    #[test]
    fn leaky_relu_values() {
        let spec = NetworkSpec {
            input: [1, 1, 2],
            layers: vec![
                LayerSpec::LeakyRelu { slope: 0.01 },
                LayerSpec::Flatten,
                LayerSpec::ConcatAux { aux_len: 0 },
            ],
        };
        let net = Network::new(spec, 0).unwrap();
        let img = Tensor::new(vec![1, 1, 1, 2], vec![2.0, -1.0]).unwrap();
        let out = net.forward(&img, &Tensor::zeros(&[1, 0])).unwrap();
        assert_eq!(out.data(), &[2.0, -0.01]);
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = NetworkSpec::conv_mlp([1, 6, 6], &[(3, 2, 2)], &[5, 4], 2, 3, 0.01);
        let net = Network::constant(spec, 0.0).unwrap();
        let img = Tensor::filled(&[2, 1, 6, 6], 1.7);
        let aux = Tensor::filled(&[2, 2], -0.3);
        assert!(net.forward(&img, &aux).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_weight_gradient_is_input() {
        let net = Network::new(tiny_dense(), 3).unwrap();
        let img = Tensor::new(vec![1, 1, 1, 1], vec![0.75]).unwrap();
        let aux = Tensor::zeros(&[1, 0]);
        let (_, cache) = net.forward_train(&img, &aux).unwrap();
        let g = net.backward(&cache, &Tensor::filled(&[1, 1], 1.0)).unwrap();
        assert_eq!(g.params[0].data(), &[0.75]);
        assert_eq!(g.params[1].data(), &[1.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let spec = NetworkSpec::conv_mlp([1, 5, 5], &[(2, 2, 1)], &[4], 3, 2, 0.01);
        let net = Network::new(spec, 9).unwrap();
        let img = Tensor::filled(&[3, 1, 5, 5], 0.4);
        let aux = Tensor::filled(&[3, 3], 0.1);
        let (_, cache) = net.forward_train(&img, &aux).unwrap();
        let g = net.backward(&cache, &Tensor::zeros(&[3, 2])).unwrap();
        assert!(g.params.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert!(g.image.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = Network::new(tiny_dense(), 1).unwrap();
        let img = Tensor::filled(&[1, 1, 1, 1], 1.0);
        let aux = Tensor::zeros(&[1, 0]);
        let (_, cache) = net.forward_train(&img, &aux).unwrap();
        net.params_mut()[0].data_mut()[0] = 2.0;
        assert!(matches!(net.backward(&cache, &Tensor::filled(&[1, 1], 1.0)), Err(Error::Usage(_))));
        let other = Network::new(tiny_dense(), 1).unwrap();
        let (_, cache) = other.forward_train(&img, &aux).unwrap();
        assert!(net.backward(&cache, &Tensor::filled(&[1, 1], 1.0)).is_err());
    }

    #[test]
    fn mismatched_input_names_layer() {
        let spec = NetworkSpec::conv_mlp([1, 6, 6], &[(2, 4, 2)], &[3], 2, 1, 0.01);
        let net = Network::new(spec, 0).unwrap();
        let err = net.forward(&Tensor::zeros(&[1, 1, 5, 6]), &Tensor::zeros(&[1, 2])).unwrap_err();
        assert!(err.to_string().contains("layer 0"));
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let spec = NetworkSpec::conv_mlp([1, 6, 6], &[(2, 2, 2)], &[4], 3, 2, 0.01);
        let net = Network::new(spec.clone(), 5).unwrap();
        let bytes = net.to_checkpoint();
        let back = Network::from_checkpoint(spec, &bytes).unwrap();
        assert_eq!(back.params(), net.params());
        let other = NetworkSpec::conv_mlp([1, 6, 6], &[(3, 2, 2)], &[4], 3, 2, 0.01);
        assert!(matches!(Network::from_checkpoint(other, &bytes), Err(Error::Shape(_))));
        assert!(Network::from_checkpoint(net.spec().clone(), &bytes[..bytes.len() - 1]).is_err());
    }
}
