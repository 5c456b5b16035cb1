//! Bit-packed binary tensors, fixed-point tensors, and the dot-product
//! primitives everything else is built on.
//!
//! Encoding: bit 1 stands for +1, bit 0 for -1. Channel vectors are packed
//! LSB-first into 64-bit words, the channel index varying fastest, and every
//! (row, col) channel vector is padded up to a whole number of words. Padding
//! bits are always zero; the dot-product routines rely on that.

use crate::error::{Error, Result};

pub const WORD_BITS: usize = 64;

/// Number of 64-bit words needed to hold `channels` bits.
#[inline]
pub fn words_for(channels: usize) -> usize {
    channels.div_ceil(WORD_BITS)
}

/// Mask selecting the valid bits of the last word of a `channels`-bit vector.
#[inline]
pub fn tail_mask(channels: usize) -> u64 {
    match channels % WORD_BITS {
        0 => !0u64,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Dims {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Dims {
    pub fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn elements(&self) -> usize {
        self.h * self.w * self.c
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// Bit-packed +-1 activation tensor.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryTensor {
    dims: Dims,
    words_per_vec: usize,
    payload: Vec<u64>,
}

impl BinaryTensor {
    /// All elements set to +1 (`true`) or -1 (`false`).
    pub fn filled(dims: Dims, plus_one: bool) -> Self {
        let wpv = words_for(dims.c);
        let mut payload = vec![0u64; dims.h * dims.w * wpv];
        if plus_one && dims.c > 0 {
            let tail = tail_mask(dims.c);
            for (i, word) in payload.iter_mut().enumerate() {
                *word = if (i + 1) % wpv == 0 { tail } else { !0u64 };
            }
        }
        Self {
            dims,
            words_per_vec: wpv,
            payload,
        }
    }

    /// Deterministic binarization of a real-valued tensor: `sign(x)` with
    /// `sign(0) = +1`. Rejects NaN and infinite inputs.
    pub fn binarize(dims: Dims, data: &[f32]) -> Result<Self> {
        if data.len() != dims.elements() {
            return Err(Error::LengthMismatch {
                context: "binarize input",
                left: data.len(),
                right: dims.elements(),
            });
        }
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let mut t = Self::filled(dims, false);
        let mut i = 0;
        for h in 0..dims.h {
            for w in 0..dims.w {
                for c in 0..dims.c {
                    if data[i] >= 0.0 {
                        t.set_bit(h, w, c, true);
                    }
                    i += 1;
                }
            }
        }
        Ok(t)
    }

    /// Build from an explicit +-1 array in channel-fastest order.
    pub fn from_signs(dims: Dims, signs: &[i8]) -> Result<Self> {
        if signs.len() != dims.elements() {
            return Err(Error::LengthMismatch {
                context: "from_signs input",
                left: signs.len(),
                right: dims.elements(),
            });
        }
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!(
                "sign values must be +1 or -1, got {bad}"
            )));
        }
        let mut t = Self::filled(dims, false);
        let mut i = 0;
        for h in 0..dims.h {
            for w in 0..dims.w {
                for c in 0..dims.c {
                    if signs[i] == 1 {
                        t.set_bit(h, w, c, true);
                    }
                    i += 1;
                }
            }
        }
        Ok(t)
    }

    pub fn to_signs(&self) -> Vec<i8> {
        let mut out = Vec::with_capacity(self.dims.elements());
        for h in 0..self.dims.h {
            for w in 0..self.dims.w {
                for c in 0..self.dims.c {
                    out.push(if self.bit(h, w, c) { 1 } else { -1 });
                }
            }
        }
        out
    }

    /// Rebuild from a raw word payload, checking length and that padding
    /// bits are zero.
    pub fn from_raw(dims: Dims, payload: Vec<u64>) -> Result<Self> {
        let wpv = words_for(dims.c);
        if payload.len() != dims.h * dims.w * wpv {
            return Err(Error::LengthMismatch {
                context: "binary tensor payload",
                left: payload.len(),
                right: dims.h * dims.w * wpv,
            });
        }
        if wpv > 0 {
            let tail = tail_mask(dims.c);
            for (i, word) in payload.iter().enumerate() {
                if (i + 1) % wpv == 0 && word & !tail != 0 {
                    return Err(Error::Malformed("activation padding bits must be zero"));
                }
            }
        }
        Ok(Self {
            dims,
            words_per_vec: wpv,
            payload,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn words_per_vec(&self) -> usize {
        self.words_per_vec
    }

    pub fn payload(&self) -> &[u64] {
        &self.payload
    }

    #[inline]
    fn vec_index(&self, h: usize, w: usize) -> usize {
        (h * self.dims.w + w) * self.words_per_vec
    }

    /// Packed channel vector at spatial position (h, w).
    #[inline]
    pub fn vec_at(&self, h: usize, w: usize) -> &[u64] {
        let i = self.vec_index(h, w);
        &self.payload[i..i + self.words_per_vec]
    }

    #[inline]
    pub fn bit(&self, h: usize, w: usize, c: usize) -> bool {
        let i = self.vec_index(h, w) + c / WORD_BITS;
        self.payload[i] >> (c % WORD_BITS) & 1 == 1
    }

    /// Element as +-1.
    #[inline]
    pub fn sign(&self, h: usize, w: usize, c: usize) -> i32 {
        if self.bit(h, w, c) {
            1
        } else {
            -1
        }
    }

    #[inline]
    pub fn set_bit(&mut self, h: usize, w: usize, c: usize, value: bool) {
        let i = self.vec_index(h, w) + c / WORD_BITS;
        let mask = 1u64 << (c % WORD_BITS);
        if value {
            self.payload[i] |= mask;
        } else {
            self.payload[i] &= !mask;
        }
    }

    pub(crate) fn vec_at_mut(&mut self, h: usize, w: usize) -> &mut [u64] {
        let i = self.vec_index(h, w);
        let wpv = self.words_per_vec;
        &mut self.payload[i..i + wpv]
    }
}

/// Bit-packed convolution kernels: dims (r, s, c, k), one packed channel
/// vector per (k, r, s) in the same word layout as [`BinaryTensor`].
/// The vectors of one kernel are contiguous, so `kernel_words(k)` is a slice.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BinaryKernelSet {
    r: usize,
    s: usize,
    c: usize,
    k: usize,
    words_per_vec: usize,
    payload: Vec<u64>,
}

impl BinaryKernelSet {
    pub fn filled(r: usize, s: usize, c: usize, k: usize, plus_one: bool) -> Self {
        let wpv = words_for(c);
        let mut payload = vec![0u64; k * r * s * wpv];
        if plus_one && c > 0 {
            let tail = tail_mask(c);
            for (i, word) in payload.iter_mut().enumerate() {
                *word = if (i + 1) % wpv == 0 { tail } else { !0u64 };
            }
        }
        Self {
            r,
            s,
            c,
            k,
            words_per_vec: wpv,
            payload,
        }
    }

    /// Build from +-1 values in (k, r, s, c)-major order (channel fastest).
    pub fn from_signs(r: usize, s: usize, c: usize, k: usize, signs: &[i8]) -> Result<Self> {
        if signs.len() != k * r * s * c {
            return Err(Error::LengthMismatch {
                context: "kernel signs",
                left: signs.len(),
                right: k * r * s * c,
            });
        }
        let mut ks = Self::filled(r, s, c, k, false);
        let mut i = 0;
        for kk in 0..k {
            for rr in 0..r {
                for ss in 0..s {
                    for ch in 0..c {
                        match signs[i] {
                            1 => ks.set_bit(kk, rr, ss, ch, true),
                            -1 => {}
                            bad => {
                                return Err(Error::InvalidParameter(format!(
                                    "sign values must be +1 or -1, got {bad}"
                                )))
                            }
                        }
                        i += 1;
                    }
                }
            }
        }
        Ok(ks)
    }

    pub fn from_raw(r: usize, s: usize, c: usize, k: usize, payload: Vec<u64>) -> Result<Self> {
        let wpv = words_for(c);
        if payload.len() != k * r * s * wpv {
            return Err(Error::LengthMismatch {
                context: "kernel payload",
                left: payload.len(),
                right: k * r * s * wpv,
            });
        }
        if wpv > 0 {
            let tail = tail_mask(c);
            for (i, word) in payload.iter().enumerate() {
                if (i + 1) % wpv == 0 && word & !tail != 0 {
                    return Err(Error::Malformed("kernel padding bits must be zero"));
                }
            }
        }
        Ok(Self {
            r,
            s,
            c,
            k,
            words_per_vec: wpv,
            payload,
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }
    pub fn s(&self) -> usize {
        self.s
    }
    pub fn c(&self) -> usize {
        self.c
    }
    pub fn k(&self) -> usize {
        self.k
    }

    /// Parameters per kernel: r * s * c.
    pub fn params_per_kernel(&self) -> usize {
        self.r * self.s * self.c
    }

    pub fn words_per_vec(&self) -> usize {
        self.words_per_vec
    }

    pub fn payload(&self) -> &[u64] {
        &self.payload
    }

    #[inline]
    fn vec_index(&self, kk: usize, rr: usize, ss: usize) -> usize {
        ((kk * self.r + rr) * self.s + ss) * self.words_per_vec
    }

    #[inline]
    pub fn vec_at(&self, kk: usize, rr: usize, ss: usize) -> &[u64] {
        let i = self.vec_index(kk, rr, ss);
        &self.payload[i..i + self.words_per_vec]
    }

    /// All packed words of kernel `kk` (r * s channel vectors, contiguous).
    #[inline]
    pub fn kernel_words(&self, kk: usize) -> &[u64] {
        let len = self.r * self.s * self.words_per_vec;
        &self.payload[kk * len..(kk + 1) * len]
    }

    #[inline]
    pub fn bit(&self, kk: usize, rr: usize, ss: usize, ch: usize) -> bool {
        let i = self.vec_index(kk, rr, ss) + ch / WORD_BITS;
        self.payload[i] >> (ch % WORD_BITS) & 1 == 1
    }

    #[inline]
    pub fn sign(&self, kk: usize, rr: usize, ss: usize, ch: usize) -> i32 {
        if self.bit(kk, rr, ss, ch) {
            1
        } else {
            -1
        }
    }

    pub fn set_bit(&mut self, kk: usize, rr: usize, ss: usize, ch: usize, value: bool) {
        let i = self.vec_index(kk, rr, ss) + ch / WORD_BITS;
        let mask = 1u64 << (ch % WORD_BITS);
        if value {
            self.payload[i] |= mask;
        } else {
            self.payload[i] &= !mask;
        }
    }

    /// Hamming distance between two kernels over all r*s*c parameter bits.
    pub fn kernel_hamming(&self, a: usize, b: usize) -> u32 {
        hamming_words(self.kernel_words(a), self.kernel_words(b))
    }
}

/// Fixed-point activation tensor: per-element two's-complement integers with
/// `total_bits` total and `frac_bits` fractional bits. Stored unscaled; all
/// arithmetic stays in raw integer units.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct FixedTensor {
    dims: Dims,
    total_bits: u8,
    frac_bits: u8,
    payload: Vec<i32>,
}

impl FixedTensor {
    pub const DEFAULT_TOTAL_BITS: u8 = 8;
    pub const DEFAULT_FRAC_BITS: u8 = 4;

    pub fn range(total_bits: u8) -> (i32, i32) {
        let half = 1i32 << (total_bits - 1);
        (-half, half - 1)
    }

    pub fn new(dims: Dims, total_bits: u8, frac_bits: u8, payload: Vec<i32>) -> Result<Self> {
        if total_bits == 0 || total_bits > 31 || frac_bits >= total_bits {
            return Err(Error::InvalidParameter(format!(
                "fixed-point format ({total_bits},{frac_bits}) out of range"
            )));
        }
        if payload.len() != dims.elements() {
            return Err(Error::LengthMismatch {
                context: "fixed tensor payload",
                left: payload.len(),
                right: dims.elements(),
            });
        }
        let (lo, hi) = Self::range(total_bits);
        if payload.iter().any(|&v| v < lo || v > hi) {
            return Err(Error::InvalidParameter(format!(
                "fixed-point element outside {total_bits}-bit range"
            )));
        }
        Ok(Self {
            dims,
            total_bits,
            frac_bits,
            payload,
        })
    }

    pub fn constant(dims: Dims, total_bits: u8, frac_bits: u8, value: i32) -> Result<Self> {
        Self::new(dims, total_bits, frac_bits, vec![value; dims.elements()])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn total_bits(&self) -> u8 {
        self.total_bits
    }

    pub fn frac_bits(&self) -> u8 {
        self.frac_bits
    }

    pub fn payload(&self) -> &[i32] {
        &self.payload
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> i32 {
        self.payload[(h * self.dims.w + w) * self.dims.c + c]
    }

    /// Channel vector at (h, w).
    #[inline]
    pub fn vec_at(&self, h: usize, w: usize) -> &[i32] {
        let i = (h * self.dims.w + w) * self.dims.c;
        &self.payload[i..i + self.dims.c]
    }
}

/// Either kind of activation tensor flowing through a model.
#[derive(Clone, PartialEq, Debug)]
pub enum Activation {
    Binary(BinaryTensor),
    Fixed(FixedTensor),
}

impl Activation {
    pub fn dims(&self) -> Dims {
        match self {
            Activation::Binary(t) => t.dims(),
            Activation::Fixed(t) => t.dims(),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Activation::Binary(_))
    }
}

/// Signed integer accumulators for pre-activation convolution outputs,
/// indexed (h_o, w_o, k) with k fastest.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct AccumulatorMap {
    h: usize,
    w: usize,
    k: usize,
    payload: Vec<i32>,
}

impl AccumulatorMap {
    pub fn zeros(h: usize, w: usize, k: usize) -> Self {
        Self {
            h,
            w,
            k,
            payload: vec![0i32; h * w * k],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.k)
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize, k: usize) -> i32 {
        self.payload[(h * self.w + w) * self.k + k]
    }

    #[inline]
    pub fn at_mut(&mut self, h: usize, w: usize, k: usize) -> &mut i32 {
        &mut self.payload[(h * self.w + w) * self.k + k]
    }

    pub fn payload(&self) -> &[i32] {
        &self.payload
    }

    pub fn payload_mut(&mut self) -> &mut [i32] {
        &mut self.payload
    }

    /// Index of the channel with the largest spatially-summed accumulator;
    /// ties go to the lower channel index.
    pub fn argmax_channel(&self) -> usize {
        let mut sums = vec![0i64; self.k];
        for row in self.payload.chunks_exact(self.k) {
            for (sum, &v) in sums.iter_mut().zip(row) {
                *sum += i64::from(v);
            }
        }
        let mut best = 0;
        let mut best_sum = sums[0];
        for (kk, &sum) in sums.iter().enumerate().skip(1) {
            if sum > best_sum {
                best = kk;
                best_sum = sum;
            }
        }
        best
    }
}

/// +-1 dot product of two packed channel vectors via XNOR/popcount, returned
/// as `2*popcount(XNOR masked to n)-n`. With zeroed padding this equals
/// `n - 2*popcount(XOR)`, which is how it is computed.
pub fn xnor_popcount_dot(x: &[u64], w: &[u64], n: usize) -> Result<i32> {
    if x.len() != w.len() {
        return Err(Error::LengthMismatch {
            context: "xnor_popcount_dot operands",
            left: x.len(),
            right: w.len(),
        });
    }
    if x.len() != words_for(n) {
        return Err(Error::LengthMismatch {
            context: "xnor_popcount_dot word count",
            left: x.len(),
            right: words_for(n),
        });
    }
    Ok(dot_words(x, w, n))
}

/// Hot-path version of [`xnor_popcount_dot`]; callers guarantee lengths.
#[inline]
pub(crate) fn dot_words(x: &[u64], w: &[u64], n: usize) -> i32 {
    let mut diff = 0u32;
    for (a, b) in x.iter().zip(w.iter()) {
        diff += (a ^ b).count_ones();
    }
    n as i32 - 2 * diff as i32
}

/// Number of differing bits between two packed vectors (padding must match).
#[inline]
pub(crate) fn hamming_words(x: &[u64], w: &[u64]) -> u32 {
    debug_assert_eq!(x.len(), w.len());
    let mut diff = 0u32;
    for (a, b) in x.iter().zip(w.iter()) {
        diff += (a ^ b).count_ones();
    }
    diff
}

/// Dot product of a fixed-point channel vector with a packed +-1 weight
/// vector: sum of `w_i = +1 ? x_i : -x_i`, in raw integer units.
pub fn fixed_dot(x: &[i32], w: &[u64], n: usize) -> Result<i32> {
    if x.len() != n {
        return Err(Error::LengthMismatch {
            context: "fixed_dot activation length",
            left: x.len(),
            right: n,
        });
    }
    if w.len() != words_for(n) {
        return Err(Error::LengthMismatch {
            context: "fixed_dot weight word count",
            left: w.len(),
            right: words_for(n),
        });
    }
    Ok(fixed_dot_unchecked(x, w))
}

#[inline]
pub(crate) fn fixed_dot_unchecked(x: &[i32], w: &[u64]) -> i32 {
    let mut acc = 0i32;
    for (ch, &v) in x.iter().enumerate() {
        if w[ch / WORD_BITS] >> (ch % WORD_BITS) & 1 == 1 {
            acc += v;
        } else {
            acc -= v;
        }
    }
    acc
}
