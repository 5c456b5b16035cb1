//! Difference-driven convolution engines.
//!
//! Both engines compute the first unit of work in full (STAGE I) and then
//! update that result from the differences against the previous unit
//! (STAGE II): the previous input pixel along the scan for input reuse, the
//! previous kernel of the execution order for weight reuse. Updates are
//! exact integer arithmetic, so the accumulators match the reference engine
//! bit for bit; only the amount of work performed changes with similarity.

use crate::bits::{
    dot_words, fixed_dot_unchecked, words_for, AccumulatorMap, Activation, WORD_BITS,
};
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::model::ConvKind;
use crate::model::ConvLayer;
use crate::reorder::ReorderPlan;

/// Whether the input-reuse difference chain restarts at each row. The
/// hardware scan path is row-major; restarting matches the horizontal
/// neighbor definition of input similarity and is the default.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChainPolicy {
    RowReset,
    Continuous,
}

fn check_conv_input(input: &Activation, conv: &ConvLayer) -> Result<()> {
    let dims = input.dims();
    if dims.c != conv.weights.c() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, conv expects {}",
            dims.c,
            conv.weights.c()
        )));
    }
    match (input, conv.kind) {
        (Activation::Binary(_), ConvKind::Binary) | (Activation::Fixed(_), ConvKind::Fixed) => {
            Ok(())
        }
        _ => Err(Error::DimensionMismatch(
            "activation kind does not match conv kind".into(),
        )),
    }
}

/// Incremental convolution along the input scan order.
///
/// The first pixel of each chain is computed as full dot products for every
/// tap and kernel; every other pixel contributes through its channel
/// difference set against the previous pixel. Accounting per STAGE-II pixel:
/// `|D| * r * s * k` bit ops, one weight-vector fetch per tap and kernel for
/// each word that contains at least one difference, and `|D|` broadcast
/// elements.
pub fn conv_input_reuse(
    input: &Activation,
    conv: &ConvLayer,
    counters: &mut CostCounters,
) -> Result<AccumulatorMap> {
    conv_input_reuse_with(input, conv, counters, ChainPolicy::RowReset)
}

pub fn conv_input_reuse_with(
    input: &Activation,
    conv: &ConvLayer,
    counters: &mut CostCounters,
    policy: ChainPolicy,
) -> Result<AccumulatorMap> {
    check_conv_input(input, conv)?;
    let dims = input.dims();
    let geom = conv.geometry(dims);
    let (out_h, out_w) = geom.out_dims();
    let ks = &conv.weights;
    let (r, s, c, k) = (ks.r(), ks.s(), ks.c(), ks.k());
    let wpv = words_for(c);
    let taps = r * s;

    // Weight columns transposed to k-fastest: bit kk of column (tap, ch) is
    // kernel kk's weight at that tap and channel. Difference updates then
    // walk one packed column per (diff, tap), matching how each PE owns a
    // slice of the kernel dimension.
    let kwords = words_for(k);
    let mut columns = vec![0u64; taps * c * kwords];
    for kk in 0..k {
        for tap in 0..taps {
            let vec = ks.vec_at(kk, tap / s, tap % s);
            for (ch, col) in columns[(tap * c) * kwords..(tap + 1) * c * kwords]
                .chunks_exact_mut(kwords)
                .enumerate()
            {
                if vec[ch / WORD_BITS] >> (ch % WORD_BITS) & 1 == 1 {
                    col[kk / WORD_BITS] |= 1 << (kk % WORD_BITS);
                }
            }
        }
    }
    let k_tail = crate::bits::tail_mask(k);

    let mut acc = AccumulatorMap::zeros(out_h, out_w, k);
    // Reuse buffer: partial dot products of the current pixel against every
    // (tap, kernel) pair, updated in place between pixels.
    let mut partials = vec![0i32; taps * k];
    // Difference set of the current pixel: (channel, activation delta).
    let mut diffs: Vec<(usize, i32)> = Vec::with_capacity(c);

    for h in 0..dims.h {
        for w in 0..dims.w {
            let chain_start = match policy {
                ChainPolicy::RowReset => w == 0,
                ChainPolicy::Continuous => h == 0 && w == 0,
            };
            if chain_start {
                match input {
                    Activation::Binary(t) => {
                        let x = t.vec_at(h, w);
                        for rr in 0..r {
                            for ss in 0..s {
                                let base = (rr * s + ss) * k;
                                for kk in 0..k {
                                    partials[base + kk] = dot_words(x, ks.vec_at(kk, rr, ss), c);
                                }
                            }
                        }
                    }
                    Activation::Fixed(t) => {
                        let x = t.vec_at(h, w);
                        for rr in 0..r {
                            for ss in 0..s {
                                let base = (rr * s + ss) * k;
                                for kk in 0..k {
                                    partials[base + kk] =
                                        fixed_dot_unchecked(x, ks.vec_at(kk, rr, ss));
                                }
                            }
                        }
                    }
                }
                counters.bit_ops += (taps * k * c) as u64;
                counters.full_computations += (taps * k) as u64;
                counters.weight_words_read += (taps * k * wpv) as u64;
                counters.ia_words_read += ia_words(input) as u64;
            } else {
                let (ph, pw) = match policy {
                    ChainPolicy::RowReset => (h, w - 1),
                    ChainPolicy::Continuous => {
                        if w == 0 {
                            (h - 1, dims.w - 1)
                        } else {
                            (h, w - 1)
                        }
                    }
                };
                diffs.clear();
                let mut diff_words = 0u64;
                match input {
                    Activation::Binary(t) => {
                        let cur = t.vec_at(h, w);
                        let prev = t.vec_at(ph, pw);
                        for wi in 0..wpv {
                            let mut x = cur[wi] ^ prev[wi];
                            if x != 0 {
                                diff_words += 1;
                                while x != 0 {
                                    let bit = x.trailing_zeros() as usize;
                                    let ch = wi * WORD_BITS + bit;
                                    // new - old over +-1 values is +-2
                                    let delta = if cur[wi] >> bit & 1 == 1 { 2 } else { -2 };
                                    diffs.push((ch, delta));
                                    x &= x - 1;
                                }
                            }
                        }
                    }
                    Activation::Fixed(t) => {
                        let cur = t.vec_at(h, w);
                        let prev = t.vec_at(ph, pw);
                        let mut word_marked = vec![false; wpv];
                        for ch in 0..c {
                            if cur[ch] != prev[ch] {
                                diffs.push((ch, cur[ch] - prev[ch]));
                                word_marked[ch / WORD_BITS] = true;
                            }
                        }
                        diff_words = word_marked.iter().filter(|&&m| m).count() as u64;
                    }
                }

                counters.ia_words_read += ia_words(input) as u64;
                counters.broadcasts += diffs.len() as u64;
                counters.bit_ops += (diffs.len() * taps * k) as u64;
                counters.weight_words_read += diff_words * (taps * k) as u64;

                for &(ch, delta) in &diffs {
                    for tap in 0..taps {
                        let col = &columns[(tap * c + ch) * kwords..][..kwords];
                        let part = &mut partials[tap * k..][..k];
                        for (kw, &bits) in col.iter().enumerate() {
                            let base = kw * WORD_BITS;
                            let valid = if kw + 1 == kwords { k_tail } else { !0u64 };
                            let mut plus = bits;
                            while plus != 0 {
                                part[base + plus.trailing_zeros() as usize] += delta;
                                plus &= plus - 1;
                            }
                            let mut minus = !bits & valid;
                            while minus != 0 {
                                part[base + minus.trailing_zeros() as usize] -= delta;
                                minus &= minus - 1;
                            }
                        }
                    }
                }
            }

            // Accumulation stage: route the reuse buffer into the output
            // banks; out-of-range addresses are skipped.
            for rr in 0..r {
                for ss in 0..s {
                    let Some((ho, wo)) = geom.output_coord(h, w, rr, ss) else {
                        continue;
                    };
                    let base = (rr * s + ss) * k;
                    for kk in 0..k {
                        *acc.at_mut(ho, wo, kk) += partials[base + kk];
                    }
                }
            }
        }
    }

    Ok(acc)
}

/// Word fetches needed to read one pixel's channel vector.
fn ia_words(input: &Activation) -> usize {
    match input {
        Activation::Binary(t) => t.words_per_vec(),
        Activation::Fixed(t) => {
            (t.dims().c * t.total_bits() as usize).div_ceil(WORD_BITS)
        }
    }
}

/// Running reconstruction of the most recently executed kernel. After
/// applying a difference mask the base equals that kernel exactly, which is
/// what lets offline same/different encodings replace on-chip subtraction.
#[derive(Clone, Debug)]
pub struct WeightBase {
    words: Vec<u64>,
}

impl WeightBase {
    pub fn new(kernel_words: &[u64]) -> Self {
        Self {
            words: kernel_words.to_vec(),
        }
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// XOR-apply a difference mask, moving the base to the next kernel.
    pub fn apply_mask(&mut self, mask: &[u64]) {
        debug_assert_eq!(self.words.len(), mask.len());
        for (w, m) in self.words.iter_mut().zip(mask) {
            *w ^= m;
        }
    }
}

/// Incremental convolution across kernels in the plan's execution order.
///
/// The first kernel of each partition is computed in full at every output
/// position and loaded into the weight base; every later kernel is applied
/// as a difference mask against the base. Output channels are produced in
/// execution order; [`revert_ofmaps`] restores the original kernel order.
pub fn conv_weight_reuse(
    input: &Activation,
    conv: &ConvLayer,
    plan: &ReorderPlan,
    counters: &mut CostCounters,
) -> Result<AccumulatorMap> {
    check_conv_input(input, conv)?;
    let ks = &conv.weights;
    plan.validate_for(ks.k())?;
    let dims = input.dims();
    let geom = conv.geometry(dims);
    let (out_h, out_w) = geom.out_dims();
    let (r, s, c, k) = (ks.r(), ks.s(), ks.c(), ks.k());
    let wpv = words_for(c);
    let taps = r * s;
    let positions = (out_h * out_w) as u64;

    let mut acc = AccumulatorMap::zeros(out_h, out_w, k);
    // Per-kernel delta plane, dense over output positions.
    let mut scratch = vec![0i32; out_h * out_w];
    let mut pos = 0usize;

    for partition in plan.partitions() {
        let mut base: Option<WeightBase> = None;
        for (j, &kernel) in partition.iter().enumerate() {
            let kernel = kernel as usize;
            if j == 0 {
                // STAGE I: full dot products for every output position.
                match input {
                    Activation::Binary(t) => {
                        for ho in 0..out_h {
                            for wo in 0..out_w {
                                let mut sum = 0i32;
                                for rr in 0..r {
                                    for ss in 0..s {
                                        if let Some((h, w)) = geom.input_coord(ho, wo, rr, ss) {
                                            sum += dot_words(
                                                t.vec_at(h, w),
                                                ks.vec_at(kernel, rr, ss),
                                                c,
                                            );
                                        }
                                    }
                                }
                                *acc.at_mut(ho, wo, pos) = sum;
                            }
                        }
                    }
                    Activation::Fixed(t) => {
                        for ho in 0..out_h {
                            for wo in 0..out_w {
                                let mut sum = 0i32;
                                for rr in 0..r {
                                    for ss in 0..s {
                                        if let Some((h, w)) = geom.input_coord(ho, wo, rr, ss) {
                                            sum += fixed_dot_unchecked(
                                                t.vec_at(h, w),
                                                ks.vec_at(kernel, rr, ss),
                                            );
                                        }
                                    }
                                }
                                *acc.at_mut(ho, wo, pos) = sum;
                            }
                        }
                    }
                }
                counters.bit_ops += positions * (taps * c) as u64;
                counters.full_computations += positions * taps as u64;
                counters.weight_words_read += positions * (taps * wpv) as u64;
                counters.ia_words_read += positions * (taps * wpv) as u64;
                base = Some(WeightBase::new(ks.kernel_words(kernel)));
            } else {
                let base = base.as_mut().expect("partition first kernel sets the base");
                // Offline-precomputed same/different mask versus the base
                // (which equals the previous kernel of the partition).
                let next = ks.kernel_words(kernel);
                let mut mask = vec![0u64; next.len()];
                let mut diff_count = 0u64;
                let mut diff_words = 0u64;
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = base.words()[i] ^ next[i];
                    if *m != 0 {
                        diff_count += u64::from(m.count_ones());
                        diff_words += 1;
                    }
                }

                counters.broadcasts += diff_count;
                counters.bit_ops += positions * diff_count;
                counters.weight_words_read += positions * diff_words;
                counters.ia_words_read += positions * diff_words;

                // Deltas land in a dense per-kernel plane first; the final
                // pass below adds it onto the previous kernel's ofmap.
                scratch.fill(0);

                let pad = geom.pad_offset();
                for vec_idx in 0..taps {
                    let (rr, ss) = (vec_idx / s, vec_idx % s);
                    // Contiguous output rows/cols whose tap stays inside the
                    // input; everything outside is skipped by the address
                    // check, so it never contributes.
                    let ho_lo = (pad - rr as isize).max(0) as usize;
                    let ho_hi = ((dims.h as isize + pad - rr as isize).min(out_h as isize))
                        .max(0) as usize;
                    let wo_lo = (pad - ss as isize).max(0) as usize;
                    let wo_hi = ((dims.w as isize + pad - ss as isize).min(out_w as isize))
                        .max(0) as usize;
                    if ho_hi <= ho_lo || wo_hi <= wo_lo {
                        continue;
                    }
                    for wi in 0..wpv {
                        let mut bits = mask[vec_idx * wpv + wi];
                        while bits != 0 {
                            let bit = bits.trailing_zeros() as usize;
                            let ch = wi * WORD_BITS + bit;
                            // changed weight: contribution moves by
                            // (w_new - w_old) * x = 2 * w_new * x
                            let delta_w: i32 =
                                if ks.vec_at(kernel, rr, ss)[wi] >> bit & 1 == 1 {
                                    2
                                } else {
                                    -2
                                };
                            match input {
                                Activation::Binary(t) => {
                                    let in_wpv = t.words_per_vec();
                                    let data = t.payload();
                                    for ho in ho_lo..ho_hi {
                                        let h = (ho as isize + rr as isize - pad) as usize;
                                        let w0 = (wo_lo as isize + ss as isize - pad) as usize;
                                        let mut in_idx = (h * dims.w + w0) * in_wpv + wi;
                                        let row = &mut scratch[ho * out_w + wo_lo..][..wo_hi - wo_lo];
                                        for v in row {
                                            // branchless +-delta_w by x sign
                                            let x = (data[in_idx] >> bit & 1) as i32;
                                            *v += delta_w * (2 * x - 1);
                                            in_idx += in_wpv;
                                        }
                                    }
                                }
                                Activation::Fixed(t) => {
                                    let data = t.payload();
                                    for ho in ho_lo..ho_hi {
                                        let h = (ho as isize + rr as isize - pad) as usize;
                                        let w0 = (wo_lo as isize + ss as isize - pad) as usize;
                                        let mut in_idx = (h * dims.w + w0) * c + ch;
                                        let row = &mut scratch[ho * out_w + wo_lo..][..wo_hi - wo_lo];
                                        for v in row {
                                            *v += delta_w * data[in_idx];
                                            in_idx += c;
                                        }
                                    }
                                }
                            }
                            bits &= bits - 1;
                        }
                    }
                }

                // acc(pos) = acc(pos - 1) + deltas
                let out = acc.payload_mut();
                for (p, &d) in scratch.iter().enumerate() {
                    out[p * k + pos] = out[p * k + pos - 1] + d;
                }

                base.apply_mask(&mask);
                debug_assert_eq!(base.words(), ks.kernel_words(kernel));
            }
            pos += 1;
        }
    }

    Ok(acc)
}

/// Restore original kernel order: output channel `revert[j]` receives
/// executed channel `j`. Composing with the forward execution order is the
/// identity.
pub fn revert_ofmaps(acc: &AccumulatorMap, plan: &ReorderPlan) -> Result<AccumulatorMap> {
    let (h, w, k) = acc.dims();
    plan.validate_for(k)
        .map_err(|_| Error::DimensionMismatch(format!(
            "plan covers {} channels, accumulators have {k}",
            plan.kernel_count()
        )))?;
    let revert = plan.execution_order();
    let mut out = AccumulatorMap::zeros(h, w, k);
    for p in 0..h * w {
        for (j, &orig) in revert.iter().enumerate() {
            out.payload_mut()[p * k + orig as usize] = acc.payload()[p * k + j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BinaryKernelSet, BinaryTensor, Dims};
    use crate::model::{ConvKind, Padding};
    use crate::reference::conv_reference;

    fn conv_from_signs(
        r: usize,
        s: usize,
        c: usize,
        k: usize,
        signs: &[i8],
        padding: Padding,
    ) -> ConvLayer {
        ConvLayer {
            kind: ConvKind::Binary,
            weights: BinaryKernelSet::from_signs(r, s, c, k, signs).unwrap(),
            padding,
            thresholds: vec![0; k],
            flips: vec![false; k],
        }
    }

    #[test]
    fn input_reuse_hand_example() {
        // columns [+1,-1] then [+1,+1], kernel [+1,+1]: acc 0 -> 2
        let input = Activation::Binary(
            BinaryTensor::from_signs(Dims::new(1, 2, 2), &[1, -1, 1, 1]).unwrap(),
        );
        let conv = conv_from_signs(1, 1, 2, 1, &[1, 1], Padding::None);
        let mut counters = CostCounters::new();
        let acc = conv_input_reuse(&input, &conv, &mut counters).unwrap();
        assert_eq!(acc.at(0, 0, 0), 0);
        assert_eq!(acc.at(0, 1, 0), 2);
        // one difference element broadcast for the second pixel
        assert_eq!(counters.broadcasts, 1);
    }

    #[test]
    fn input_reuse_constant_closed_form() {
        // 4x4x2 constant input, 1x1 kernels, k=2: only the first column is
        // computed fully -> 16 ops vs 64 baseline, 75% saved.
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(4, 4, 2), true));
        let conv = conv_from_signs(1, 1, 2, 2, &[1, 1, 1, -1], Padding::None);
        let mut counters = CostCounters::new();
        let _ = conv_input_reuse(&input, &conv, &mut counters).unwrap();
        assert_eq!(counters.bit_ops, 16);
        assert_eq!(counters.broadcasts, 0);
        let mut base = CostCounters::new();
        let _ = conv_reference(&input, &conv, &mut base).unwrap();
        assert_eq!(base.bit_ops, 64);
    }

    #[test]
    fn weight_reuse_hand_example() {
        // w1=[+,+,-], w2=[+,-,-], x=[+,+,+]: acc1=1, diff at channel 1
        // gives acc2 = 1 - 2 = -1.
        let input = Activation::Binary(
            BinaryTensor::from_signs(Dims::new(1, 1, 3), &[1, 1, 1]).unwrap(),
        );
        let conv = conv_from_signs(1, 1, 3, 2, &[1, 1, -1, 1, -1, -1], Padding::None);
        let plan = ReorderPlan::identity(2, 1).unwrap();
        let mut counters = CostCounters::new();
        let acc = conv_weight_reuse(&input, &conv, &plan, &mut counters).unwrap();
        assert_eq!(acc.at(0, 0, 0), 1);
        assert_eq!(acc.at(0, 0, 1), -1);
        assert_eq!(counters.broadcasts, 1);
    }

    #[test]
    fn weight_reuse_duplicate_kernels_no_broadcasts() {
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(3, 3, 4), true));
        let signs: Vec<i8> = [1i8, -1, 1, 1].repeat(4);
        let conv = conv_from_signs(1, 1, 4, 4, &signs, Padding::None);
        let plan = ReorderPlan::identity(4, 1).unwrap();
        let mut counters = CostCounters::new();
        let _ = conv_weight_reuse(&input, &conv, &plan, &mut counters).unwrap();
        assert_eq!(counters.broadcasts, 0);
        // only the first kernel cost full ops
        assert_eq!(counters.bit_ops, 9 * 4);
    }

    #[test]
    fn weight_reuse_plan_mismatch_rejected() {
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(2, 2, 2), true));
        let conv = conv_from_signs(1, 1, 2, 2, &[1, 1, -1, -1], Padding::None);
        let plan = ReorderPlan::identity(4, 2).unwrap();
        let mut counters = CostCounters::new();
        assert!(conv_weight_reuse(&input, &conv, &plan, &mut counters).is_err());
    }

    #[test]
    fn revert_examples() {
        let mut acc = AccumulatorMap::zeros(1, 1, 3);
        *acc.at_mut(0, 0, 0) = 10;
        *acc.at_mut(0, 0, 1) = 20;
        *acc.at_mut(0, 0, 2) = 30;

        let identity = ReorderPlan::identity(3, 1).unwrap();
        assert_eq!(revert_ofmaps(&acc, &identity).unwrap(), acc);

        let plan = ReorderPlan::new(vec![vec![2, 0, 1]], 0.0).unwrap();
        let reverted = revert_ofmaps(&acc, &plan).unwrap();
        // executed position 0 held kernel 2, etc.
        assert_eq!(reverted.at(0, 0, 2), 10);
        assert_eq!(reverted.at(0, 0, 0), 20);
        assert_eq!(reverted.at(0, 0, 1), 30);

        let wrong = ReorderPlan::identity(4, 1).unwrap();
        assert!(revert_ofmaps(&acc, &wrong).is_err());
    }

    #[test]
    fn chain_policy_continuous_matches_reference() {
        let dims = Dims::new(5, 4, 16);
        let img = crate::model::gen_input(
            crate::model::InputKind::Noise,
            dims,
            crate::model::ActivationKind::Binary,
            77,
        )
        .unwrap();
        let m = crate::model::gen_synthetic_model(
            dims,
            crate::model::ActivationKind::Binary,
            &[crate::model::LayerDef::Conv {
                r: 3,
                s: 3,
                k: 8,
                padding: Padding::Same,
            }],
            78,
        )
        .unwrap();
        let conv = m.layers[0].as_conv().unwrap();
        let mut c0 = CostCounters::new();
        let reference = conv_reference(&img, conv, &mut c0).unwrap();
        let mut c1 = CostCounters::new();
        let cont =
            conv_input_reuse_with(&img, conv, &mut c1, ChainPolicy::Continuous).unwrap();
        assert_eq!(cont, reference);
        // continuous chaining does STAGE I only once
        assert_eq!(c1.full_computations, 9 * 8);
    }
}
