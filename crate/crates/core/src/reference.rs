//! Ground-truth inference path: naive convolution, threshold binarization,
//! and pooling. Every reuse backend must reproduce these accumulators bit
//! for bit, so this module is deliberately the simplest possible
//! implementation of each step.

use crate::bits::{
    dot_words, fixed_dot_unchecked, words_for, AccumulatorMap, Activation, BinaryTensor, Dims,
};
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::model::{ConvKind, ConvLayer, LayerSpec, ModelSpec};
use crate::reuse::{conv_input_reuse, conv_weight_reuse, revert_ofmaps};

/// Which convolution engine executes the model.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Backend {
    Reference,
    InputReuse,
    WeightReuse,
}

impl Backend {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "reference" | "baseline" => Ok(Backend::Reference),
            "input-reuse" | "input_reuse" => Ok(Backend::InputReuse),
            "weight-reuse" | "weight_reuse" => Ok(Backend::WeightReuse),
            other => Err(Error::InvalidParameter(format!(
                "unknown backend: {other}"
            ))),
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Reference => write!(f, "reference"),
            Backend::InputReuse => write!(f, "input-reuse"),
            Backend::WeightReuse => write!(f, "weight-reuse"),
        }
    }
}

fn check_channels(input: &Activation, conv: &ConvLayer) -> Result<()> {
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

/// Record the nominal cost of a full convolution: every output element costs
/// r*s*c bit ops per kernel and r*s weight-vector fetches, no border
/// discount (the hardware computes full windows; the address generator drops
/// out-of-range results).
fn charge_nominal(counters: &mut CostCounters, out_h: usize, out_w: usize, conv: &ConvLayer) {
    let ks = &conv.weights;
    let positions = (out_h * out_w) as u64;
    let taps = (ks.r() * ks.s()) as u64;
    let wpv = words_for(ks.c()) as u64;
    counters.bit_ops += positions * ks.k() as u64 * taps * ks.c() as u64;
    counters.weight_words_read += positions * ks.k() as u64 * taps * wpv;
    counters.ia_words_read += positions * ks.k() as u64 * taps * wpv;
}

/// Naive direct convolution. Out-of-range taps under same-padding contribute
/// zero (skipped), matching the address-generator behavior that reuse
/// engines also follow.
pub fn conv_reference(
    input: &Activation,
    conv: &ConvLayer,
    counters: &mut CostCounters,
) -> Result<AccumulatorMap> {
    check_channels(input, conv)?;
    let dims = input.dims();
    let geom = conv.geometry(dims);
    let (out_h, out_w) = geom.out_dims();
    let ks = &conv.weights;
    let (r, s, c, k) = (ks.r(), ks.s(), ks.c(), ks.k());
    let mut acc = AccumulatorMap::zeros(out_h, out_w, k);

    match input {
        Activation::Binary(t) => {
            for ho in 0..out_h {
                for wo in 0..out_w {
                    for rr in 0..r {
                        for ss in 0..s {
                            let Some((h, w)) = geom.input_coord(ho, wo, rr, ss) else {
                                continue;
                            };
                            let x = t.vec_at(h, w);
                            for kk in 0..k {
                                *acc.at_mut(ho, wo, kk) += dot_words(x, ks.vec_at(kk, rr, ss), c);
                            }
                        }
                    }
                }
            }
        }
        Activation::Fixed(t) => {
            for ho in 0..out_h {
                for wo in 0..out_w {
                    for rr in 0..r {
                        for ss in 0..s {
                            let Some((h, w)) = geom.input_coord(ho, wo, rr, ss) else {
                                continue;
                            };
                            let x = t.vec_at(h, w);
                            for kk in 0..k {
                                *acc.at_mut(ho, wo, kk) +=
                                    fixed_dot_unchecked(x, ks.vec_at(kk, rr, ss));
                            }
                        }
                    }
                }
            }
        }
    }

    charge_nominal(counters, out_h, out_w, conv);
    Ok(acc)
}

/// Fold batch normalization and activation into a threshold compare:
/// output bit (h, w, k) = (acc >= threshold[k]) XOR flip[k].
pub fn normalize_binarize(acc: &AccumulatorMap, conv: &ConvLayer) -> Result<BinaryTensor> {
    let (h, w, k) = acc.dims();
    if k != conv.weights.k() {
        return Err(Error::DimensionMismatch(format!(
            "accumulator k={k} does not match layer k={}",
            conv.weights.k()
        )));
    }
    let mut out = BinaryTensor::filled(Dims::new(h, w, k), false);
    for hh in 0..h {
        for ww in 0..w {
            for kk in 0..k {
                let bit = (acc.at(hh, ww, kk) >= conv.thresholds[kk]) ^ conv.flips[kk];
                if bit {
                    out.set_bit(hh, ww, kk, true);
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 stride-2 max pooling on a binary tensor. Under the bit-1 = +1
/// encoding the window max is the word-wise OR of the four channel vectors;
/// the complementary encoding would use AND.
pub fn maxpool2x2(t: &BinaryTensor) -> Result<BinaryTensor> {
    let dims = t.dims();
    if dims.h % 2 != 0 || dims.w % 2 != 0 {
        return Err(Error::DimensionMismatch(format!(
            "max pooling needs even spatial dims, got {}x{}",
            dims.h, dims.w
        )));
    }
    let out_dims = Dims::new(dims.h / 2, dims.w / 2, dims.c);
    let mut out = BinaryTensor::filled(out_dims, false);
    for ho in 0..out_dims.h {
        for wo in 0..out_dims.w {
            let (h, w) = (ho * 2, wo * 2);
            let wpv = t.words_per_vec();
            let mut merged = t.vec_at(h, w).to_vec();
            for (dh, dw) in [(0, 1), (1, 0), (1, 1)] {
                for (m, &v) in merged.iter_mut().zip(t.vec_at(h + dh, w + dw)) {
                    *m |= v;
                }
            }
            out.vec_at_mut(ho, wo)[..wpv].copy_from_slice(&merged);
        }
    }
    Ok(out)
}

/// Result of a full-model run: the last conv layer's pre-binarization
/// accumulators plus aggregated cost counters.
#[derive(Clone, Debug)]
pub struct InferOutcome {
    pub accumulators: AccumulatorMap,
    pub counters: CostCounters,
}

impl InferOutcome {
    /// Classification without a softmax: channel with the largest summed
    /// accumulator.
    pub fn class(&self) -> usize {
        self.accumulators.argmax_channel()
    }
}

/// Two activation arenas that alternate read/write roles between layers,
/// modeling the on-chip double buffer. Writing lands in the arena not
/// currently being read; the panic guards the no-self-read invariant.
struct BufferPair {
    arenas: [Option<Activation>; 2],
    read: usize,
}

impl BufferPair {
    fn new(initial: Activation) -> Self {
        Self {
            arenas: [Some(initial), None],
            read: 0,
        }
    }

    fn read(&self) -> &Activation {
        self.arenas[self.read]
            .as_ref()
            .expect("read arena is populated")
    }

    fn write_and_swap(&mut self, value: Activation) {
        let write = 1 - self.read;
        assert_ne!(write, self.read, "layer would read its own write buffer");
        self.arenas[write] = Some(value);
        self.read = write;
    }
}

/// Run the model with a tap observing each conv layer's input activation.
/// `infer` uses an empty tap; the similarity analyzer taps every layer.
pub fn run_with_taps<F>(
    m: &ModelSpec,
    img: &Activation,
    backend: Backend,
    mut tap: F,
) -> Result<InferOutcome>
where
    F: FnMut(usize, &Activation, &ConvLayer),
{
    m.validate()?;
    let dims = img.dims();
    if dims != m.input_dims {
        return Err(Error::DimensionMismatch(format!(
            "input dims {dims} do not match model input {}",
            m.input_dims
        )));
    }
    match (img, m.activation) {
        (Activation::Binary(_), crate::model::ActivationKind::Binary) => {}
        (Activation::Fixed(t), crate::model::ActivationKind::Fixed { total_bits, frac_bits })
            if t.total_bits() == total_bits && t.frac_bits() == frac_bits => {}
        _ => {
            return Err(Error::DimensionMismatch(
                "input activation kind does not match model descriptor".into(),
            ))
        }
    }
    if backend == Backend::WeightReuse {
        for (idx, _, _) in m.conv_layers() {
            if !m.plans.contains_key(&idx) {
                return Err(Error::PlanMissing(idx));
            }
        }
    }

    let mut counters = CostCounters::new();
    let mut buffers = BufferPair::new(img.clone());
    let mut last_acc: Option<AccumulatorMap> = None;

    for (idx, layer) in m.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv(conv) => {
                let input = buffers.read();
                tap(idx, input, conv);
                let acc = match backend {
                    Backend::Reference => conv_reference(input, conv, &mut counters)?,
                    Backend::InputReuse => conv_input_reuse(input, conv, &mut counters)?,
                    Backend::WeightReuse => {
                        let plan = m.plans.get(&idx).ok_or(Error::PlanMissing(idx))?;
                        let executed = conv_weight_reuse(input, conv, plan, &mut counters)?;
                        revert_ofmaps(&executed, plan)?
                    }
                };
                let bin = normalize_binarize(&acc, conv)?;
                last_acc = Some(acc);
                buffers.write_and_swap(Activation::Binary(bin));
            }
            LayerSpec::MaxPool => {
                let pooled = match buffers.read() {
                    Activation::Binary(t) => maxpool2x2(t)?,
                    Activation::Fixed(_) => {
                        return Err(Error::DimensionMismatch(
                            "max pooling operates on binary activations".into(),
                        ))
                    }
                };
                buffers.write_and_swap(Activation::Binary(pooled));
            }
        }
    }

    Ok(InferOutcome {
        accumulators: last_acc.expect("validated models contain a conv layer"),
        counters,
    })
}

/// Run all layers in order with double-buffered activations and return the
/// final conv layer's pre-binarization accumulators with aggregated
/// counters. Weight-reuse runs require a plan for every conv layer.
pub fn infer(m: &ModelSpec, img: &Activation, backend: Backend) -> Result<InferOutcome> {
    run_with_taps(m, img, backend, |_, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BinaryKernelSet, BinaryTensor};
    use crate::model::{ActivationKind, ConvGeometry, Padding};

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
    fn conv_1x1_hand_example() {
        let input = Activation::Binary(
            BinaryTensor::from_signs(Dims::new(1, 1, 4), &[1, 1, -1, 1]).unwrap(),
        );
        let conv = conv_from_signs(1, 1, 4, 1, &[1, -1, -1, -1], Padding::None);
        let mut counters = CostCounters::new();
        let acc = conv_reference(&input, &conv, &mut counters).unwrap();
        assert_eq!(acc.at(0, 0, 0), 0);
        assert_eq!(counters.bit_ops, 4);
    }

    #[test]
    fn conv_constant_input_all_ones_kernel() {
        let c = 6;
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(3, 3, c), true));
        let conv = conv_from_signs(1, 1, c, 2, &vec![1i8; c * 2], Padding::None);
        let mut counters = CostCounters::new();
        let acc = conv_reference(&input, &conv, &mut counters).unwrap();
        for h in 0..3 {
            for w in 0..3 {
                for k in 0..2 {
                    assert_eq!(acc.at(h, w, k), c as i32);
                }
            }
        }
    }

    #[test]
    fn same_padding_corners_sum_four_taps() {
        // 4x4 input of +1, 3x3 kernel of +1, c=1: interior outputs see all
        // nine taps, corners only four.
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(4, 4, 1), true));
        let conv = conv_from_signs(3, 3, 1, 1, &[1; 9], Padding::Same);
        let mut counters = CostCounters::new();
        let acc = conv_reference(&input, &conv, &mut counters).unwrap();
        let (h, w, _) = acc.dims();
        assert_eq!((h, w), (4, 4));
        assert_eq!(acc.at(0, 0, 0), 4);
        assert_eq!(acc.at(0, 3, 0), 4);
        assert_eq!(acc.at(1, 1, 0), 9);
        assert_eq!(acc.at(1, 0, 0), 6);
        // nominal counter ignores the border discount
        assert_eq!(counters.bit_ops, 4 * 4 * 9);
    }

    #[test]
    fn no_padding_shrinks_dims() {
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(5, 6, 2), true));
        let conv = conv_from_signs(3, 3, 2, 1, &[1i8; 18], Padding::None);
        let mut counters = CostCounters::new();
        let acc = conv_reference(&input, &conv, &mut counters).unwrap();
        let (h, w, _) = acc.dims();
        assert_eq!((h, w), (3, 4));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let input = Activation::Binary(BinaryTensor::filled(Dims::new(2, 2, 3), true));
        let conv = conv_from_signs(1, 1, 4, 1, &[1, 1, 1, 1], Padding::None);
        let mut counters = CostCounters::new();
        assert!(conv_reference(&input, &conv, &mut counters).is_err());
    }

    #[test]
    fn normalize_threshold_and_flip() {
        let mut acc = AccumulatorMap::zeros(1, 1, 3);
        *acc.at_mut(0, 0, 0) = 5;
        *acc.at_mut(0, 0, 1) = 3;
        *acc.at_mut(0, 0, 2) = 5;
        let conv = ConvLayer {
            kind: ConvKind::Binary,
            weights: BinaryKernelSet::filled(1, 1, 1, 3, true),
            padding: Padding::None,
            thresholds: vec![3, 3, 3],
            flips: vec![false, false, true],
        };
        let out = normalize_binarize(&acc, &conv).unwrap();
        assert_eq!(out.sign(0, 0, 0), 1); // 5 >= 3
        assert_eq!(out.sign(0, 0, 1), 1); // tie uses >=
        assert_eq!(out.sign(0, 0, 2), -1); // flipped comparison
    }

    #[test]
    fn maxpool_windows() {
        let mut t = BinaryTensor::filled(Dims::new(2, 2, 1), false);
        t.set_bit(0, 0, 0, true); // window {+1,-1,-1,-1} -> +1
        let out = maxpool2x2(&t).unwrap();
        assert_eq!(out.sign(0, 0, 0), 1);

        let neg = BinaryTensor::filled(Dims::new(2, 2, 1), false);
        assert_eq!(maxpool2x2(&neg).unwrap().sign(0, 0, 0), -1);

        let ones = BinaryTensor::filled(Dims::new(4, 4, 3), true);
        let pooled = maxpool2x2(&ones).unwrap();
        assert_eq!(pooled.dims(), Dims::new(2, 2, 3));
        assert!(pooled.to_signs().iter().all(|&s| s == 1));

        let odd = BinaryTensor::filled(Dims::new(3, 4, 1), true);
        assert!(maxpool2x2(&odd).is_err());
    }

    #[test]
    fn geometry_coordinates_invert() {
        let geom = ConvGeometry {
            in_h: 6,
            in_w: 7,
            r: 3,
            s: 3,
            padding: Padding::Same,
        };
        for ho in 0..6 {
            for wo in 0..7 {
                for rr in 0..3 {
                    for ss in 0..3 {
                        if let Some((h, w)) = geom.input_coord(ho, wo, rr, ss) {
                            assert_eq!(geom.output_coord(h, w, rr, ss), Some((ho, wo)));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn infer_requires_plan_for_weight_reuse() {
        let m = crate::model::gen_synthetic_model(
            Dims::new(4, 4, 8),
            ActivationKind::Binary,
            &[crate::model::LayerDef::Conv {
                r: 3,
                s: 3,
                k: 4,
                padding: Padding::Same,
            }],
            1,
        )
        .unwrap();
        let img = crate::model::gen_input(
            crate::model::InputKind::Noise,
            Dims::new(4, 4, 8),
            ActivationKind::Binary,
            2,
        )
        .unwrap();
        assert!(matches!(
            infer(&m, &img, Backend::WeightReuse),
            Err(Error::PlanMissing(0))
        ));
        assert!(infer(&m, &img, Backend::Reference).is_ok());
    }

    #[test]
    fn constant_input_gives_constant_interior() {
        let m = crate::model::gen_synthetic_model(
            Dims::new(16, 16, 8),
            ActivationKind::Binary,
            &[
                crate::model::LayerDef::Conv {
                    r: 3,
                    s: 3,
                    k: 8,
                    padding: Padding::Same,
                },
                crate::model::LayerDef::Pool,
                crate::model::LayerDef::Conv {
                    r: 3,
                    s: 3,
                    k: 4,
                    padding: Padding::Same,
                },
            ],
            9,
        )
        .unwrap();
        let img = crate::model::gen_input(
            crate::model::InputKind::Constant,
            Dims::new(16, 16, 8),
            ActivationKind::Binary,
            0,
        )
        .unwrap();
        let out = infer(&m, &img, Backend::Reference).unwrap();
        let (h, w, k) = out.accumulators.dims();
        assert_eq!((h, w), (8, 8));
        // Shift invariance holds where every receptive field avoids rows and
        // columns touched by the first layer's padding: pooled coordinates
        // 1..=6, so second-conv outputs 2..=5.
        for kk in 0..k {
            let v = out.accumulators.at(2, 2, kk);
            for hh in 2..=5 {
                for ww in 2..=5 {
                    assert_eq!(out.accumulators.at(hh, ww, kk), v);
                }
            }
        }
    }
}
