//! Model and layer descriptions, the binary model file format, and the
//! synthetic model/input generators.
//!
//! # Model file format (version 1)
//!
//! Little-endian throughout.
//!
//! ```text
//! magic            4 bytes  "BNN1"
//! version          u16      1
//! activation kind  u8       0 = binary, 1 = fixed
//!   (fixed only)   u8, u8   total bits, fractional bits
//! input dims       u32 x3   h, w, c
//! layer count      u16
//! per layer        u8 tag   1 = binconv, 2 = fixconv, 3 = maxpool
//!   (conv only)    u32 x4   r, s, c, k
//!                  u8       padding: 0 = none, 1 = same
//!                  u64 x(k*r*s*ceil(c/64))  packed weights
//!                  i32 xk   thresholds
//!                  u8  xk   comparison flips (0/1)
//! plan count       u16
//! per plan         u16      layer index
//!                  u16      partition count
//!                  u32 xk   kernel execution order (partitions concatenated)
//!                  f64      chain cost
//! ```
//!
//! The writer is deterministic, so save -> load -> save is byte-identical.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::{
    tail_mask, words_for, Activation, BinaryKernelSet, BinaryTensor, Dims, FixedTensor,
};
use crate::error::{Error, Result};
use crate::reorder::ReorderPlan;

const MAGIC: [u8; 4] = *b"BNN1";
const FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Padding {
    None,
    Same,
}

/// Spatial geometry of one convolution. Same-padding offsets taps by one in
/// each dimension and preserves the spatial dims; no-padding shrinks them to
/// (h-r+1, w-s+1). Out-of-range taps are skipped by the address check.
#[derive(Clone, Copy, Debug)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub r: usize,
    pub s: usize,
    pub padding: Padding,
}

impl ConvGeometry {
    pub fn out_dims(&self) -> (usize, usize) {
        match self.padding {
            Padding::Same => (self.in_h, self.in_w),
            Padding::None => (self.in_h - self.r + 1, self.in_w - self.s + 1),
        }
    }

    /// Tap offset: same-padding shifts every tap by one per axis.
    #[inline]
    pub fn pad_offset(&self) -> isize {
        match self.padding {
            Padding::Same => 1,
            Padding::None => 0,
        }
    }

    /// Input coordinate feeding output (h_o, w_o) through tap (rr, ss),
    /// or None when it falls outside the input.
    #[inline]
    pub fn input_coord(&self, h_o: usize, w_o: usize, rr: usize, ss: usize) -> Option<(usize, usize)> {
        let h = h_o as isize + rr as isize - self.pad_offset();
        let w = w_o as isize + ss as isize - self.pad_offset();
        if h < 0 || w < 0 || h >= self.in_h as isize || w >= self.in_w as isize {
            None
        } else {
            Some((h as usize, w as usize))
        }
    }

    /// Output coordinate receiving the contribution of input (h, w) through
    /// tap (rr, ss): (h-r, w-s), shifted by one under same-padding. None when
    /// outside the output range.
    #[inline]
    pub fn output_coord(&self, h: usize, w: usize, rr: usize, ss: usize) -> Option<(usize, usize)> {
        let (out_h, out_w) = self.out_dims();
        let ho = h as isize - rr as isize + self.pad_offset();
        let wo = w as isize - ss as isize + self.pad_offset();
        if ho < 0 || wo < 0 || ho >= out_h as isize || wo >= out_w as isize {
            None
        } else {
            Some((ho as usize, wo as usize))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConvKind {
    /// Binary +-1 input activations.
    Binary,
    /// Fixed-point input activations, binary weights.
    Fixed,
}

/// One convolution layer. Batch normalization is pre-folded into a
/// per-output-channel threshold and comparison flip in accumulator units:
/// the output bit is `(acc >= threshold[k]) XOR flip[k]`.
#[derive(Clone, PartialEq, Debug)]
pub struct ConvLayer {
    pub kind: ConvKind,
    pub weights: BinaryKernelSet,
    pub padding: Padding,
    pub thresholds: Vec<i32>,
    pub flips: Vec<bool>,
}

impl ConvLayer {
    pub fn geometry(&self, input: Dims) -> ConvGeometry {
        ConvGeometry {
            in_h: input.h,
            in_w: input.w,
            r: self.weights.r(),
            s: self.weights.s(),
            padding: self.padding,
        }
    }

    pub fn weight_bits(&self) -> usize {
        self.weights.k() * self.weights.params_per_kernel()
    }
}

#[derive(Clone, PartialEq, Debug)]
pub enum LayerSpec {
    Conv(ConvLayer),
    /// 2x2 max pooling with stride 2, the only pooling in the workload.
    MaxPool,
}

impl LayerSpec {
    pub fn as_conv(&self) -> Option<&ConvLayer> {
        match self {
            LayerSpec::Conv(c) => Some(c),
            LayerSpec::MaxPool => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ActivationKind {
    Binary,
    Fixed { total_bits: u8, frac_bits: u8 },
}

impl ActivationKind {
    pub fn bits(&self) -> usize {
        match self {
            ActivationKind::Binary => 1,
            ActivationKind::Fixed { total_bits, .. } => *total_bits as usize,
        }
    }
}

/// Ordered layer list plus input descriptor and optional per-layer reorder
/// plans. Immutable once loaded; shareable across threads.
#[derive(Clone, PartialEq, Debug)]
pub struct ModelSpec {
    pub input_dims: Dims,
    pub activation: ActivationKind,
    pub layers: Vec<LayerSpec>,
    pub plans: BTreeMap<usize, ReorderPlan>,
}

impl ModelSpec {
    /// Check the dimension chain end to end: channel counts match, pooling
    /// sees even binary dims, fixed-point convolutions only appear while the
    /// activation stream is still fixed-point (i.e. before the first
    /// binarizing convolution), and plans reference valid conv layers.
    pub fn validate(&self) -> Result<()> {
        let mut dims = self.input_dims;
        let mut kind = self.activation;
        if self.layers.is_empty() {
            return Err(Error::DimensionChain {
                layer: 0,
                detail: "model has no layers".into(),
            });
        }
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv(conv) => {
                    let ks = &conv.weights;
                    if ks.c() != dims.c {
                        return Err(Error::DimensionChain {
                            layer: i,
                            detail: format!(
                                "conv expects {} input channels, stream has {}",
                                ks.c(),
                                dims.c
                            ),
                        });
                    }
                    match (conv.kind, kind) {
                        (ConvKind::Binary, ActivationKind::Binary) => {}
                        (ConvKind::Fixed, ActivationKind::Fixed { .. }) => {}
                        _ => {
                            return Err(Error::DimensionChain {
                                layer: i,
                                detail: "conv kind does not match activation stream".into(),
                            });
                        }
                    }
                    if conv.padding == Padding::None && (dims.h < ks.r() || dims.w < ks.s()) {
                        return Err(Error::DimensionChain {
                            layer: i,
                            detail: "input smaller than kernel without padding".into(),
                        });
                    }
                    if conv.thresholds.len() != ks.k() || conv.flips.len() != ks.k() {
                        return Err(Error::DimensionChain {
                            layer: i,
                            detail: "threshold/flip arrays must have length k".into(),
                        });
                    }
                    let (oh, ow) = conv.geometry(dims).out_dims();
                    dims = Dims::new(oh, ow, ks.k());
                    // normalize_binarize follows every conv
                    kind = ActivationKind::Binary;
                }
                LayerSpec::MaxPool => {
                    if kind != ActivationKind::Binary {
                        return Err(Error::DimensionChain {
                            layer: i,
                            detail: "max pooling operates on binary activations".into(),
                        });
                    }
                    if dims.h % 2 != 0 || dims.w % 2 != 0 {
                        return Err(Error::DimensionChain {
                            layer: i,
                            detail: format!("pooling needs even dims, got {}x{}", dims.h, dims.w),
                        });
                    }
                    dims = Dims::new(dims.h / 2, dims.w / 2, dims.c);
                }
            }
        }
        for (&idx, plan) in &self.plans {
            let Some(LayerSpec::Conv(conv)) = self.layers.get(idx) else {
                return Err(Error::PlanMismatch(format!(
                    "plan references layer {idx}, which is not a conv layer"
                )));
            };
            plan.validate_for(conv.weights.k())?;
        }
        Ok(())
    }

    /// Input dims seen by each layer, in layer order.
    pub fn layer_input_dims(&self) -> Vec<Dims> {
        let mut dims = self.input_dims;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            out.push(dims);
            dims = match layer {
                LayerSpec::Conv(conv) => {
                    let (oh, ow) = conv.geometry(dims).out_dims();
                    Dims::new(oh, ow, conv.weights.k())
                }
                LayerSpec::MaxPool => Dims::new(dims.h / 2, dims.w / 2, dims.c),
            };
        }
        out
    }

    /// Conv layers with their model-order index and input dims.
    pub fn conv_layers(&self) -> Vec<(usize, Dims, &ConvLayer)> {
        self.layer_input_dims()
            .into_iter()
            .zip(self.layers.iter())
            .enumerate()
            .filter_map(|(i, (dims, layer))| layer.as_conv().map(|c| (i, dims, c)))
            .collect()
    }

    /// Total nominal MAC-equivalent bit operations for one image:
    /// sum over conv layers of h_o * w_o * r * s * c * k.
    pub fn nominal_ops_per_image(&self) -> u64 {
        self.conv_layers()
            .iter()
            .map(|(_, dims, conv)| {
                let (oh, ow) = conv.geometry(*dims).out_dims();
                (oh * ow * conv.weights.params_per_kernel() * conv.weights.k()) as u64
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// serialization

fn write_u16(w: &mut impl Write, v: u16) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_i32(w: &mut impl Write, v: i32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_bytes<const N: usize>(r: &mut impl Read, what: &'static str) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated(what)
        } else {
            Error::Io(e)
        }
    })?;
    Ok(buf)
}

fn read_u8(r: &mut impl Read, what: &'static str) -> Result<u8> {
    Ok(read_bytes::<1>(r, what)?[0])
}

fn read_u16(r: &mut impl Read, what: &'static str) -> Result<u16> {
    Ok(u16::from_le_bytes(read_bytes(r, what)?))
}

fn read_u32(r: &mut impl Read, what: &'static str) -> Result<u32> {
    Ok(u32::from_le_bytes(read_bytes(r, what)?))
}

fn read_u64(r: &mut impl Read, what: &'static str) -> Result<u64> {
    Ok(u64::from_le_bytes(read_bytes(r, what)?))
}

fn read_i32(r: &mut impl Read, what: &'static str) -> Result<i32> {
    Ok(i32::from_le_bytes(read_bytes(r, what)?))
}

/// Serialize a model. The output is deterministic for equal inputs.
pub fn save_model(m: &ModelSpec, sink: &mut impl Write) -> Result<()> {
    m.validate()?;
    sink.write_all(&MAGIC)?;
    write_u16(sink, FORMAT_VERSION)?;
    match m.activation {
        ActivationKind::Binary => sink.write_all(&[0u8])?,
        ActivationKind::Fixed {
            total_bits,
            frac_bits,
        } => sink.write_all(&[1u8, total_bits, frac_bits])?,
    }
    write_u32(sink, m.input_dims.h as u32)?;
    write_u32(sink, m.input_dims.w as u32)?;
    write_u32(sink, m.input_dims.c as u32)?;
    write_u16(sink, m.layers.len() as u16)?;
    for layer in &m.layers {
        match layer {
            LayerSpec::Conv(conv) => {
                let tag = match conv.kind {
                    ConvKind::Binary => 1u8,
                    ConvKind::Fixed => 2u8,
                };
                sink.write_all(&[tag])?;
                let ks = &conv.weights;
                write_u32(sink, ks.r() as u32)?;
                write_u32(sink, ks.s() as u32)?;
                write_u32(sink, ks.c() as u32)?;
                write_u32(sink, ks.k() as u32)?;
                sink.write_all(&[match conv.padding {
                    Padding::None => 0u8,
                    Padding::Same => 1u8,
                }])?;
                for &word in ks.payload() {
                    write_u64(sink, word)?;
                }
                for &t in &conv.thresholds {
                    write_i32(sink, t)?;
                }
                for &f in &conv.flips {
                    sink.write_all(&[u8::from(f)])?;
                }
            }
            LayerSpec::MaxPool => sink.write_all(&[3u8])?,
        }
    }
    write_u16(sink, m.plans.len() as u16)?;
    for (&idx, plan) in &m.plans {
        write_u16(sink, idx as u16)?;
        write_u16(sink, plan.partition_count() as u16)?;
        for v in plan.execution_order() {
            write_u32(sink, v)?;
        }
        sink.write_all(&plan.chain_cost().to_le_bytes())?;
    }
    Ok(())
}

/// Deserialize a model, validating magic, version, payload sizes, padding
/// bits, and the dimension chain. Trailing bytes are an error.
pub fn load_model(source: &mut impl Read) -> Result<ModelSpec> {
    let magic = read_bytes::<4>(source, "magic")?;
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = read_u16(source, "version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let activation = match read_u8(source, "activation kind")? {
        0 => ActivationKind::Binary,
        1 => {
            let total_bits = read_u8(source, "fixed total bits")?;
            let frac_bits = read_u8(source, "fixed frac bits")?;
            if total_bits == 0 || total_bits > 31 || frac_bits >= total_bits {
                return Err(Error::Malformed("fixed-point descriptor out of range"));
            }
            ActivationKind::Fixed {
                total_bits,
                frac_bits,
            }
        }
        _ => return Err(Error::Malformed("unknown activation kind tag")),
    };
    let h = read_u32(source, "input h")? as usize;
    let w = read_u32(source, "input w")? as usize;
    let c = read_u32(source, "input c")? as usize;
    let input_dims = Dims::new(h, w, c);

    let layer_count = read_u16(source, "layer count")?;
    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        match read_u8(source, "layer tag")? {
            tag @ (1 | 2) => {
                let r = read_u32(source, "kernel r")? as usize;
                let s = read_u32(source, "kernel s")? as usize;
                let c = read_u32(source, "kernel c")? as usize;
                let k = read_u32(source, "kernel k")? as usize;
                if r == 0 || s == 0 || c == 0 || k == 0 {
                    return Err(Error::Malformed("zero kernel dimension"));
                }
                let padding = match read_u8(source, "padding")? {
                    0 => Padding::None,
                    1 => Padding::Same,
                    _ => return Err(Error::Malformed("unknown padding tag")),
                };
                let words = k * r * s * words_for(c);
                let mut payload = Vec::with_capacity(words);
                for _ in 0..words {
                    payload.push(read_u64(source, "weight payload")?);
                }
                let weights = BinaryKernelSet::from_raw(r, s, c, k, payload)?;
                let mut thresholds = Vec::with_capacity(k);
                for _ in 0..k {
                    thresholds.push(read_i32(source, "thresholds")?);
                }
                let mut flips = Vec::with_capacity(k);
                for _ in 0..k {
                    flips.push(match read_u8(source, "flips")? {
                        0 => false,
                        1 => true,
                        _ => return Err(Error::Malformed("flip byte must be 0 or 1")),
                    });
                }
                layers.push(LayerSpec::Conv(ConvLayer {
                    kind: if tag == 1 {
                        ConvKind::Binary
                    } else {
                        ConvKind::Fixed
                    },
                    weights,
                    padding,
                    thresholds,
                    flips,
                }));
            }
            3 => layers.push(LayerSpec::MaxPool),
            _ => return Err(Error::Malformed("unknown layer tag")),
        }
    }

    let plan_count = read_u16(source, "plan count")?;
    let mut plans = BTreeMap::new();
    for _ in 0..plan_count {
        let idx = read_u16(source, "plan layer index")? as usize;
        let parts = read_u16(source, "plan partition count")? as usize;
        let Some(LayerSpec::Conv(conv)) = layers.get(idx) else {
            return Err(Error::PlanMismatch(format!(
                "plan references layer {idx}, which is not a conv layer"
            )));
        };
        let k = conv.weights.k();
        if parts == 0 || k % parts != 0 {
            return Err(Error::PlanMismatch(format!(
                "plan partition count {parts} does not divide k={k}"
            )));
        }
        let size = k / parts;
        let mut partitions = Vec::with_capacity(parts);
        for _ in 0..parts {
            let mut part = Vec::with_capacity(size);
            for _ in 0..size {
                part.push(read_u32(source, "plan order")?);
            }
            partitions.push(part);
        }
        let cost = f64::from_le_bytes(read_bytes(source, "plan chain cost")?);
        if plans.insert(idx, ReorderPlan::new(partitions, cost)?).is_some() {
            return Err(Error::PlanMismatch(format!("duplicate plan for layer {idx}")));
        }
    }

    let mut probe = [0u8; 1];
    match source.read(&mut probe)? {
        0 => {}
        _ => return Err(Error::TrailingData),
    }

    let model = ModelSpec {
        input_dims,
        activation,
        layers,
        plans,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model_to_path(m: &ModelSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_model(m, &mut file)?;
    Ok(file.flush()?)
}

pub fn load_model_from_path(path: impl AsRef<Path>) -> Result<ModelSpec> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_model(&mut file)
}

// ---------------------------------------------------------------------------
// activation tensor files
//
// Same conventions as the model format: magic "BNT1", u16 version, u8 kind
// (0 = binary, 1 = fixed with total/frac bit bytes), u32 dims h/w/c, then
// the payload (u64 words for binary, i32 elements for fixed).

const TENSOR_MAGIC: [u8; 4] = *b"BNT1";

pub fn save_input(t: &Activation, sink: &mut impl Write) -> Result<()> {
    sink.write_all(&TENSOR_MAGIC)?;
    write_u16(sink, FORMAT_VERSION)?;
    match t {
        Activation::Binary(t) => {
            sink.write_all(&[0u8])?;
            let dims = t.dims();
            write_u32(sink, dims.h as u32)?;
            write_u32(sink, dims.w as u32)?;
            write_u32(sink, dims.c as u32)?;
            for &word in t.payload() {
                write_u64(sink, word)?;
            }
        }
        Activation::Fixed(t) => {
            sink.write_all(&[1u8, t.total_bits(), t.frac_bits()])?;
            let dims = t.dims();
            write_u32(sink, dims.h as u32)?;
            write_u32(sink, dims.w as u32)?;
            write_u32(sink, dims.c as u32)?;
            for &v in t.payload() {
                write_i32(sink, v)?;
            }
        }
    }
    Ok(())
}

pub fn load_input(source: &mut impl Read) -> Result<Activation> {
    let magic = read_bytes::<4>(source, "tensor magic")?;
    if magic != TENSOR_MAGIC {
        return Err(Error::BadMagic {
            expected: TENSOR_MAGIC,
            found: magic,
        });
    }
    let version = read_u16(source, "tensor version")?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let kind = read_u8(source, "tensor kind")?;
    let fixed_bits = match kind {
        0 => None,
        1 => Some((
            read_u8(source, "tensor total bits")?,
            read_u8(source, "tensor frac bits")?,
        )),
        _ => return Err(Error::Malformed("unknown tensor kind tag")),
    };
    let h = read_u32(source, "tensor h")? as usize;
    let w = read_u32(source, "tensor w")? as usize;
    let c = read_u32(source, "tensor c")? as usize;
    let dims = Dims::new(h, w, c);
    let out = match fixed_bits {
        None => {
            let words = h * w * words_for(c);
            let mut payload = Vec::with_capacity(words);
            for _ in 0..words {
                payload.push(read_u64(source, "tensor payload")?);
            }
            Activation::Binary(BinaryTensor::from_raw(dims, payload)?)
        }
        Some((total_bits, frac_bits)) => {
            let mut payload = Vec::with_capacity(dims.elements());
            for _ in 0..dims.elements() {
                payload.push(read_i32(source, "tensor payload")?);
            }
            Activation::Fixed(FixedTensor::new(dims, total_bits, frac_bits, payload)?)
        }
    };
    let mut probe = [0u8; 1];
    if source.read(&mut probe)? != 0 {
        return Err(Error::TrailingData);
    }
    Ok(out)
}

pub fn save_input_to_path(t: &Activation, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_input(t, &mut file)?;
    Ok(file.flush()?)
}

pub fn load_input_from_path(path: impl AsRef<Path>) -> Result<Activation> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    load_input(&mut file)
}

// ---------------------------------------------------------------------------
// synthetic generation

/// Architecture entry for the synthetic model generator. Channel counts flow
/// through the chain, so conv entries only give kernel geometry and count.
#[derive(Clone, Copy, Debug)]
pub enum LayerDef {
    Conv {
        r: usize,
        s: usize,
        k: usize,
        padding: Padding,
    },
    Pool,
}

/// The shipped CIFAR-10 style workload: five 3x3 same-padding convolutions
/// with interleaved 2x2 pooling, starting from a 32x32x128 feature map.
pub fn binarynet_cifar10_arch() -> (Dims, Vec<LayerDef>) {
    let conv = |k| LayerDef::Conv {
        r: 3,
        s: 3,
        k,
        padding: Padding::Same,
    };
    (
        Dims::new(32, 32, 128),
        vec![
            conv(128),
            LayerDef::Pool,
            conv(256),
            conv(256),
            LayerDef::Pool,
            conv(512),
            conv(512),
            LayerDef::Pool,
        ],
    )
}

fn random_kernels(rng: &mut ChaCha12Rng, r: usize, s: usize, c: usize, k: usize) -> BinaryKernelSet {
    let wpv = words_for(c);
    let tail = tail_mask(c);
    let mut payload = Vec::with_capacity(k * r * s * wpv);
    for _ in 0..k * r * s {
        for wi in 0..wpv {
            let word: u64 = rng.random();
            payload.push(if wi + 1 == wpv { word & tail } else { word });
        }
    }
    BinaryKernelSet::from_raw(r, s, c, k, payload).expect("generated payload is well-formed")
}

/// Deterministic synthetic model: iid +-1 weights, small iid thresholds,
/// and random comparison flips. Same seed, same model, bit for bit.
pub fn gen_synthetic_model(
    input_dims: Dims,
    activation: ActivationKind,
    defs: &[LayerDef],
    seed: u64,
) -> Result<ModelSpec> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(defs.len());
    let mut dims = input_dims;
    let mut kind = activation;
    for def in defs {
        match *def {
            LayerDef::Conv { r, s, k, padding } => {
                let weights = random_kernels(&mut rng, r, s, dims.c, k);
                let thresholds = (0..k).map(|_| rng.random_range(-7..=7)).collect();
                let flips = (0..k).map(|_| rng.random_bool(0.5)).collect();
                layers.push(LayerSpec::Conv(ConvLayer {
                    kind: match kind {
                        ActivationKind::Binary => ConvKind::Binary,
                        ActivationKind::Fixed { .. } => ConvKind::Fixed,
                    },
                    weights,
                    padding,
                    thresholds,
                    flips,
                }));
                let geom = ConvGeometry {
                    in_h: dims.h,
                    in_w: dims.w,
                    r,
                    s,
                    padding,
                };
                let (oh, ow) = geom.out_dims();
                dims = Dims::new(oh, ow, k);
                kind = ActivationKind::Binary;
            }
            LayerDef::Pool => {
                layers.push(LayerSpec::MaxPool);
                dims = Dims::new(dims.h / 2, dims.w / 2, dims.c);
            }
        }
    }
    let model = ModelSpec {
        input_dims,
        activation,
        layers,
        plans: BTreeMap::new(),
    };
    model.validate()?;
    Ok(model)
}

/// Input classes used for calibration and benchmarking.
///
/// * `Constant`: every element identical; input similarity is exactly 1.
/// * `Noise`: iid uniform elements; binary similarity converges to 0.5.
/// * `VStripes(p)`: each column repeats the previous one with per-element
///   flip probability 1-p, so the measured similarity converges to p.
/// * `Smooth`: binarized horizontal gradient.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum InputKind {
    Constant,
    Noise,
    VStripes(f64),
    Smooth,
}

impl InputKind {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(p) = text.strip_prefix("vstripes:") {
            let p: f64 = p
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("bad vstripes probability: {p}")))?;
            return Ok(InputKind::VStripes(p));
        }
        match text {
            "constant" => Ok(InputKind::Constant),
            "noise" => Ok(InputKind::Noise),
            "smooth" => Ok(InputKind::Smooth),
            other => Err(Error::InvalidParameter(format!(
                "unknown input kind: {other}"
            ))),
        }
    }
}

impl std::fmt::Display for InputKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InputKind::Constant => write!(f, "constant"),
            InputKind::Noise => write!(f, "noise"),
            InputKind::VStripes(p) => write!(f, "vstripes:{p}"),
            InputKind::Smooth => write!(f, "smooth"),
        }
    }
}

fn gen_binary_input(kind: InputKind, dims: Dims, rng: &mut ChaCha12Rng) -> BinaryTensor {
    match kind {
        InputKind::Constant => BinaryTensor::filled(dims, true),
        InputKind::Noise => {
            let mut t = BinaryTensor::filled(dims, false);
            for h in 0..dims.h {
                for w in 0..dims.w {
                    for ch in 0..dims.c {
                        if rng.random_bool(0.5) {
                            t.set_bit(h, w, ch, true);
                        }
                    }
                }
            }
            t
        }
        InputKind::VStripes(p) => {
            let mut t = BinaryTensor::filled(dims, false);
            for h in 0..dims.h {
                for ch in 0..dims.c {
                    if rng.random_bool(0.5) {
                        t.set_bit(h, 0, ch, true);
                    }
                }
                for w in 1..dims.w {
                    for ch in 0..dims.c {
                        let prev = t.bit(h, w - 1, ch);
                        let flip = rng.random_bool(1.0 - p);
                        t.set_bit(h, w, ch, prev ^ flip);
                    }
                }
            }
            t
        }
        InputKind::Smooth => {
            let mut t = BinaryTensor::filled(dims, false);
            for h in 0..dims.h {
                for w in dims.w / 2..dims.w {
                    for ch in 0..dims.c {
                        t.set_bit(h, w, ch, true);
                    }
                }
            }
            t
        }
    }
}

fn gen_fixed_input(
    kind: InputKind,
    dims: Dims,
    total_bits: u8,
    frac_bits: u8,
    rng: &mut ChaCha12Rng,
) -> Result<FixedTensor> {
    let (lo, hi) = FixedTensor::range(total_bits);
    let one = 1i32 << frac_bits;
    let payload = match kind {
        InputKind::Constant => vec![one.min(hi); dims.elements()],
        InputKind::Noise => (0..dims.elements())
            .map(|_| rng.random_range(lo..=hi))
            .collect(),
        InputKind::VStripes(p) => {
            let mut data = vec![0i32; dims.elements()];
            for h in 0..dims.h {
                for ch in 0..dims.c {
                    data[(h * dims.w) * dims.c + ch] = rng.random_range(lo..=hi);
                }
                for w in 1..dims.w {
                    for ch in 0..dims.c {
                        let prev = data[(h * dims.w + w - 1) * dims.c + ch];
                        data[(h * dims.w + w) * dims.c + ch] = if rng.random_bool(1.0 - p) {
                            rng.random_range(lo..=hi)
                        } else {
                            prev
                        };
                    }
                }
            }
            data
        }
        InputKind::Smooth => {
            let mut data = vec![0i32; dims.elements()];
            let span = (dims.w.max(2) - 1) as f64;
            for h in 0..dims.h {
                for w in 0..dims.w {
                    let real = 2.0 * (w as f64) / span - 1.0;
                    let q = (real * f64::from(one)).round() as i32;
                    let q = q.clamp(lo, hi);
                    for ch in 0..dims.c {
                        data[(h * dims.w + w) * dims.c + ch] = q;
                    }
                }
            }
            data
        }
    };
    FixedTensor::new(dims, total_bits, frac_bits, payload)
}

/// Deterministic input generator for either activation kind.
pub fn gen_input(
    kind: InputKind,
    dims: Dims,
    activation: ActivationKind,
    seed: u64,
) -> Result<Activation> {
    if let InputKind::VStripes(p) = kind {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "vstripes probability {p} outside [0, 1]"
            )));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    Ok(match activation {
        ActivationKind::Binary => Activation::Binary(gen_binary_input(kind, dims, &mut rng)),
        ActivationKind::Fixed {
            total_bits,
            frac_bits,
        } => Activation::Fixed(gen_fixed_input(kind, dims, total_bits, frac_bits, &mut rng)?),
    })
}

/// Generate a batch of inputs with consecutive derived seeds.
pub fn gen_inputs(
    kind: InputKind,
    dims: Dims,
    activation: ActivationKind,
    seed: u64,
    count: usize,
) -> Result<Vec<Activation>> {
    (0..count)
        .map(|i| gen_input(kind, dims, activation, seed.wrapping_add(i as u64)))
        .collect()
}
