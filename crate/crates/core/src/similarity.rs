//! Input and kernel similarity ratios, plus dataset-level reports over the
//! activations actually flowing through a model.

use crate::bits::{hamming_words, Activation, BinaryKernelSet};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::par;
use crate::reference::{run_with_taps, Backend};
use crate::reorder::{default_plan, ReorderPlan};

/// Match counts between compared element pairs. The ratio denominator is
/// the number of compared pairs, not the total element count, so a constant
/// input reaches exactly 1.0.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct SimilarityStats {
    pub matches: u64,
    pub compared: u64,
}

impl SimilarityStats {
    pub fn ratio(&self) -> f64 {
        debug_assert!(self.compared > 0);
        self.matches as f64 / self.compared as f64
    }

    pub fn merge(&mut self, other: &SimilarityStats) {
        self.matches += other.matches;
        self.compared += other.compared;
    }
}

/// Fraction of elements equal to their horizontal (w-1) neighbor. Binary
/// tensors compare packed bits; fixed-point tensors compare by exact
/// integer equality. Requires at least two columns.
pub fn input_similarity(t: &Activation) -> Result<SimilarityStats> {
    let dims = t.dims();
    if dims.w < 2 {
        return Err(Error::InvalidParameter(format!(
            "input similarity needs width >= 2, got {}",
            dims.w
        )));
    }
    let compared = (dims.h * (dims.w - 1) * dims.c) as u64;
    let mut diffs = 0u64;
    match t {
        Activation::Binary(t) => {
            for h in 0..dims.h {
                for w in 1..dims.w {
                    diffs += u64::from(hamming_words(t.vec_at(h, w), t.vec_at(h, w - 1)));
                }
            }
        }
        Activation::Fixed(t) => {
            for h in 0..dims.h {
                for w in 1..dims.w {
                    let cur = t.vec_at(h, w);
                    let prev = t.vec_at(h, w - 1);
                    diffs += cur.iter().zip(prev).filter(|(a, b)| a != b).count() as u64;
                }
            }
        }
    }
    Ok(SimilarityStats {
        matches: compared - diffs,
        compared,
    })
}

/// Fraction of weight elements equal to the same position in the previous
/// kernel of `order`, skipping pairs that straddle a partition boundary.
/// `order` must be a permutation of the kernel indices and `boundaries` the
/// sorted partition start offsets (first entry 0).
pub fn kernel_similarity(
    ks: &BinaryKernelSet,
    order: &[usize],
    boundaries: &[usize],
) -> Result<SimilarityStats> {
    let k = ks.k();
    if order.len() != k {
        return Err(Error::InvalidParameter(format!(
            "order has {} entries for {k} kernels",
            order.len()
        )));
    }
    let mut seen = vec![false; k];
    for &v in order {
        if v >= k || seen[v] {
            return Err(Error::InvalidParameter(
                "order must be a permutation of kernel indices".into(),
            ));
        }
        seen[v] = true;
    }
    if boundaries.is_empty() || boundaries[0] != 0 {
        return Err(Error::InvalidParameter(
            "partition boundaries must start at 0".into(),
        ));
    }
    if boundaries.windows(2).any(|b| b[1] <= b[0]) || *boundaries.last().unwrap() >= k {
        return Err(Error::InvalidParameter(
            "partition boundaries must be strictly increasing and below k".into(),
        ));
    }
    let pairs = k - boundaries.len();
    if pairs == 0 {
        return Err(Error::InvalidParameter(
            "no comparable kernel pairs (every kernel is a partition start)".into(),
        ));
    }

    let mut is_start = vec![false; k];
    for &b in boundaries {
        is_start[b] = true;
    }
    let params = ks.params_per_kernel() as u64;
    let compared = pairs as u64 * params;
    let mut diffs = 0u64;
    for i in 1..k {
        if is_start[i] {
            continue;
        }
        diffs += u64::from(ks.kernel_hamming(order[i - 1], order[i]));
    }
    Ok(SimilarityStats {
        matches: compared - diffs,
        compared,
    })
}

/// Kernel similarity under a reorder plan's execution order.
pub fn kernel_similarity_for_plan(
    ks: &BinaryKernelSet,
    plan: &ReorderPlan,
) -> Result<SimilarityStats> {
    let order: Vec<usize> = plan.execution_order().iter().map(|&v| v as usize).collect();
    kernel_similarity(ks, &order, &plan.boundaries())
}

/// Identity-order kernel similarity with the same partition boundaries as
/// the plan (the "before reordering" figure).
pub fn kernel_similarity_identity(
    ks: &BinaryKernelSet,
    plan: &ReorderPlan,
) -> Result<SimilarityStats> {
    let order: Vec<usize> = (0..ks.k()).collect();
    kernel_similarity(ks, &order, &plan.boundaries())
}

/// Min/avg/max of a per-image statistic across a dataset.
#[derive(Clone, Copy, Debug)]
pub struct Extrema {
    pub min: f64,
    pub avg: f64,
    pub max: f64,
}

impl Extrema {
    fn from_values(values: &[f64]) -> Self {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &v in values {
            min = min.min(v);
            max = max.max(v);
            sum += v;
        }
        Self {
            min,
            avg: sum / values.len() as f64,
            max,
        }
    }
}

/// Per-layer similarity figures over a dataset.
#[derive(Clone, Debug)]
pub struct LayerSimilarity {
    /// Index in the model's layer list.
    pub layer_index: usize,
    /// Display label, e.g. "conv3".
    pub label: String,
    /// Input similarity of the activations feeding this layer.
    pub input: Extrema,
    /// Kernel similarity in original order (plan boundaries).
    pub kernel_identity: f64,
    /// Kernel similarity in the plan's execution order.
    pub kernel_reordered: f64,
}

/// Table-shaped dataset report: one row per conv layer plus an aggregate
/// over all layers, each with min/avg/max input similarity across images
/// and pre/post-reorder kernel similarity.
#[derive(Clone, Debug)]
pub struct SimilarityReport {
    pub layers: Vec<LayerSimilarity>,
    pub overall_input: Extrema,
    pub overall_kernel_identity: f64,
    pub overall_kernel_reordered: f64,
    pub images: usize,
}

/// Measure similarity on the activations a model actually produces: each
/// conv layer's input (the image itself for the first layer, binarized
/// intermediate outputs after that). Kernel similarity uses the model's
/// plans where present and a default plan otherwise; both the identity-order
/// and reordered figures are reported since the headline number depends on
/// the reordering. Images are processed in parallel and merged by summing
/// counts.
pub fn dataset_report(
    m: &ModelSpec,
    images: &[Activation],
    sample_limit: usize,
) -> Result<SimilarityReport> {
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty image set".into()));
    }
    if sample_limit == 0 {
        return Err(Error::InvalidParameter("sample limit of zero".into()));
    }
    m.validate()?;
    let sample = &images[..images.len().min(sample_limit)];
    let convs = m.conv_layers();
    if convs.is_empty() {
        return Err(Error::InvalidParameter("model has no conv layers".into()));
    }

    // Per-image, per-conv-layer input similarity stats.
    let per_image: Vec<Vec<SimilarityStats>> = par::try_map_collect(sample, |img| {
        let mut stats: Vec<SimilarityStats> = Vec::with_capacity(convs.len());
        let mut tap_err = None;
        let outcome = run_with_taps(m, img, Backend::Reference, |_, input, _| {
            match input_similarity(input) {
                Ok(s) => stats.push(s),
                Err(e) => tap_err = Some(e),
            }
        });
        outcome?;
        match tap_err {
            Some(e) => Err(e),
            None => Ok(stats),
        }
    })?;

    let mut layers = Vec::with_capacity(convs.len());
    let mut conv_no = 0usize;
    for (ci, (layer_index, _, conv)) in convs.iter().enumerate() {
        conv_no += 1;
        let ratios: Vec<f64> = per_image.iter().map(|s| s[ci].ratio()).collect();
        let plan = match m.plans.get(layer_index) {
            Some(p) => p.clone(),
            None => default_plan(&conv.weights)?,
        };
        layers.push(LayerSimilarity {
            layer_index: *layer_index,
            label: format!("conv{conv_no}"),
            input: Extrema::from_values(&ratios),
            kernel_identity: kernel_similarity_identity(&conv.weights, &plan)?.ratio(),
            kernel_reordered: kernel_similarity_for_plan(&conv.weights, &plan)?.ratio(),
        });
    }

    // Aggregate input similarity: per-image totals over all conv layers.
    let overall_ratios: Vec<f64> = per_image
        .iter()
        .map(|stats| {
            let mut total = SimilarityStats::default();
            for s in stats {
                total.merge(s);
            }
            total.ratio()
        })
        .collect();
    // Aggregate kernel similarity: parameter-weighted over layers.
    let mut id_total = SimilarityStats::default();
    let mut re_total = SimilarityStats::default();
    for (layer_index, _, conv) in &convs {
        let plan = match m.plans.get(layer_index) {
            Some(p) => p.clone(),
            None => default_plan(&conv.weights)?,
        };
        id_total.merge(&kernel_similarity_identity(&conv.weights, &plan)?);
        re_total.merge(&kernel_similarity_for_plan(&conv.weights, &plan)?);
    }

    Ok(SimilarityReport {
        layers,
        overall_input: Extrema::from_values(&overall_ratios),
        overall_kernel_identity: id_total.ratio(),
        overall_kernel_reordered: re_total.ratio(),
        images: sample.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::{BinaryTensor, Dims};
    use crate::model::{
        gen_input, gen_inputs, gen_synthetic_model, ActivationKind, InputKind, LayerDef, Padding,
    };

    #[test]
    fn input_similarity_hand_example() {
        // 1x3x2 tensor with columns [+1,-1], [+1,+1], [+1,+1]: 3 of 4 pairs match
        let t = Activation::Binary(
            BinaryTensor::from_signs(Dims::new(1, 3, 2), &[1, -1, 1, 1, 1, 1]).unwrap(),
        );
        let s = input_similarity(&t).unwrap();
        assert_eq!(s.compared, 4);
        assert_eq!(s.matches, 3);
        assert_eq!(s.ratio(), 0.75);
    }

    #[test]
    fn input_similarity_extremes() {
        let constant = Activation::Binary(BinaryTensor::filled(Dims::new(3, 5, 7), true));
        assert_eq!(input_similarity(&constant).unwrap().ratio(), 1.0);

        let mut alt = BinaryTensor::filled(Dims::new(2, 4, 3), false);
        for h in 0..2 {
            for w in (0..4).step_by(2) {
                for c in 0..3 {
                    alt.set_bit(h, w, c, true);
                }
            }
        }
        assert_eq!(
            input_similarity(&Activation::Binary(alt)).unwrap().ratio(),
            0.0
        );

        let narrow = Activation::Binary(BinaryTensor::filled(Dims::new(3, 1, 2), true));
        assert!(input_similarity(&narrow).is_err());
    }

    #[test]
    fn noise_similarity_near_half() {
        let t = gen_input(
            InputKind::Noise,
            Dims::new(32, 32, 128),
            ActivationKind::Binary,
            5,
        )
        .unwrap();
        let r = input_similarity(&t).unwrap().ratio();
        assert!((r - 0.5).abs() < 0.02, "measured {r}");
    }

    #[test]
    fn kernel_similarity_hand_example() {
        // k0=[+,+,-,-], k1=[+,-,-,-], k2=[+,-,-,+]: 3+3 matches of 8
        let signs: &[i8] = &[1, 1, -1, -1, 1, -1, -1, -1, 1, -1, -1, 1];
        let ks = BinaryKernelSet::from_signs(1, 1, 4, 3, signs).unwrap();
        let s = kernel_similarity(&ks, &[0, 1, 2], &[0]).unwrap();
        assert_eq!(s.compared, 8);
        assert_eq!(s.matches, 6);
        assert_eq!(s.ratio(), 0.75);
    }

    #[test]
    fn kernel_similarity_duplicates_and_boundaries() {
        let ks = BinaryKernelSet::filled(1, 1, 8, 4, true);
        assert_eq!(kernel_similarity(&ks, &[0, 1, 2, 3], &[0]).unwrap().ratio(), 1.0);
        // boundary at 2 skips the middle pair
        let s = kernel_similarity(&ks, &[0, 1, 2, 3], &[0, 2]).unwrap();
        assert_eq!(s.compared, 2 * 8);
    }

    #[test]
    fn kernel_similarity_rejects_bad_order() {
        let ks = BinaryKernelSet::filled(1, 1, 4, 3, true);
        assert!(kernel_similarity(&ks, &[0, 1, 1], &[0]).is_err());
        assert!(kernel_similarity(&ks, &[0, 1], &[0]).is_err());
        assert!(kernel_similarity(&ks, &[0, 1, 2], &[1]).is_err());
    }

    #[test]
    fn random_kernel_similarity_near_half() {
        let m = gen_synthetic_model(
            Dims::new(4, 4, 64),
            ActivationKind::Binary,
            &[LayerDef::Conv {
                r: 3,
                s: 3,
                k: 64,
                padding: Padding::Same,
            }],
            13,
        )
        .unwrap();
        let ks = &m.layers[0].as_conv().unwrap().weights;
        let order: Vec<usize> = (0..64).collect();
        let r = kernel_similarity(ks, &order, &[0]).unwrap().ratio();
        assert!((r - 0.5).abs() < 0.02, "measured {r}");
    }

    #[test]
    fn dataset_report_constant_images() {
        let m = gen_synthetic_model(
            Dims::new(8, 8, 16),
            ActivationKind::Binary,
            &[
                LayerDef::Conv {
                    r: 3,
                    s: 3,
                    k: 8,
                    padding: Padding::Same,
                },
                LayerDef::Pool,
                LayerDef::Conv {
                    r: 3,
                    s: 3,
                    k: 8,
                    padding: Padding::Same,
                },
            ],
            3,
        )
        .unwrap();
        let images =
            gen_inputs(InputKind::Constant, m.input_dims, ActivationKind::Binary, 0, 3).unwrap();
        let report = dataset_report(&m, &images, 8).unwrap();
        assert_eq!(report.images, 3);
        assert_eq!(report.layers.len(), 2);
        // first layer sees the constant image exactly
        assert_eq!(report.layers[0].input.min, 1.0);
        assert_eq!(report.layers[0].input.max, 1.0);

        assert!(dataset_report(&m, &[], 8).is_err());
        assert!(dataset_report(&m, &images, 0).is_err());
    }
}
