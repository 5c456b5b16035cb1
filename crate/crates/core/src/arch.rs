//! Parametric cost and timing model of the two accelerator organizations:
//! a checking engine that broadcasts input (or kernel) differences to an
//! array of processing elements, each owning weight and output banks.
//!
//! The model charges five phases per convolution layer:
//!
//! * `load`: off-chip traffic at the configured bandwidth. Under the
//!   default max-overlap policy only the portion not hidden behind compute
//!   shows up in the phase breakdown, so phases always sum to the total.
//! * `check`: the difference scan, per pixel (input reuse) or per kernel
//!   (weight reuse). The baseline skips it.
//! * `broadcast`: the producer/consumer stage. Per work unit the bus needs
//!   `ceil(d / broadcast_lanes)` cycles while the PEs consume
//!   `ceil(d * fanout / popcount_lanes)`; the two overlap, so the stage
//!   costs the max. `d` is the full channel vector for STAGE-I units and
//!   the difference count otherwise; `fanout` is the per-diff update work
//!   (taps x kernels-per-PE for input reuse, owned output positions for
//!   weight reuse).
//! * `accumulate`: draining the reuse buffers into the output banks after
//!   each unit; similarity-independent, which is what caps the speedup of
//!   highly similar inputs.
//! * `normalize`: threshold compare, pooling and writeback, distributed
//!   over the PEs. Ofmap reverting is address remapping during writeback
//!   and costs no extra cycles.
//!
//! Utilization is busy-multiplier-cycles over total, and throughput follows
//! the multiplier-count formula with the clock factor made explicit.

use crate::bits::{words_for, Activation, Dims};
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::model::{ActivationKind, ConvGeometry, ConvLayer, ModelSpec};
use crate::reference::Backend;
use crate::reorder::{default_plan, ReorderPlan};
use crate::similarity::dataset_report;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OverlapMode {
    /// Off-chip transfers overlap compute; the longer one bounds the layer.
    Max,
    /// Transfers complete before compute starts.
    Serial,
}

/// Accelerator configuration. All costs are cycle counts; fractional values
/// model wider-than-one hardware (the default accumulate cost of 1/8 cycle
/// per result corresponds to an 8-wide reduction tree).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchConfig {
    pub pe_count: usize,
    /// Difference elements the broadcast bus moves per cycle.
    pub broadcast_lanes: usize,
    /// Bit-MACs each PE retires per cycle (XNOR+popcount datapath width).
    pub popcount_lanes: usize,
    /// Off-chip bytes per cycle.
    pub offchip_bandwidth: f64,
    pub clock_hz: f64,
    /// Cycles per difference check: per pixel (input reuse) or per kernel
    /// (weight reuse).
    pub check_cost: f64,
    /// Cycles per result drained from a reuse buffer into an output bank.
    pub accumulate_cost: f64,
    pub overlap: OverlapMode,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            pe_count: 8,
            broadcast_lanes: 8,
            popcount_lanes: 64,
            offchip_bandwidth: 2.0,
            clock_hz: 2.0e8,
            check_cost: 1.0,
            accumulate_cost: 0.125,
            overlap: OverlapMode::Max,
        }
    }
}

impl ArchConfig {
    /// Total multiplier (bit-MAC) lanes across the PE array.
    pub fn multiplier_lanes(&self) -> f64 {
        (self.pe_count * self.popcount_lanes) as f64
    }

    /// Parse a plain-text key-value config ("key = value" lines, `#`
    /// comments). Unknown keys and non-positive values are rejected.
    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidParameter(format!(
                    "config line {}: expected key = value",
                    lineno + 1
                )));
            };
            let (key, value) = (key.trim(), value.trim());
            let bad = |k: &str, v: &str| {
                Error::InvalidParameter(format!("config value for {k} invalid: {v}"))
            };
            match key {
                "pe_count" => cfg.pe_count = value.parse().map_err(|_| bad(key, value))?,
                "broadcast_lanes" => {
                    cfg.broadcast_lanes = value.parse().map_err(|_| bad(key, value))?
                }
                "popcount_lanes" => {
                    cfg.popcount_lanes = value.parse().map_err(|_| bad(key, value))?
                }
                "offchip_bandwidth" => {
                    cfg.offchip_bandwidth = value.parse().map_err(|_| bad(key, value))?
                }
                "clock_hz" => cfg.clock_hz = value.parse().map_err(|_| bad(key, value))?,
                "check_cost" => cfg.check_cost = value.parse().map_err(|_| bad(key, value))?,
                "accumulate_cost" => {
                    cfg.accumulate_cost = value.parse().map_err(|_| bad(key, value))?
                }
                "overlap" => {
                    cfg.overlap = match value {
                        "max" => OverlapMode::Max,
                        "serial" => OverlapMode::Serial,
                        other => {
                            return Err(Error::InvalidParameter(format!(
                                "overlap must be max or serial, got {other}"
                            )))
                        }
                    }
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown config key: {other}"
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pe_count == 0
            || self.broadcast_lanes == 0
            || self.popcount_lanes == 0
            || self.offchip_bandwidth <= 0.0
            || self.clock_hz <= 0.0
            || self.check_cost < 0.0
            || self.accumulate_cost <= 0.0
        {
            return Err(Error::InvalidParameter(
                "arch config values must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Output-bank address for the contribution of input (h, w) through weight
/// tap (rr, ss) of kernel k: (h-r, w-s, k), shifted by one per axis under
/// same-padding; None when the result falls outside the output range.
pub fn oabank_address(
    geom: &ConvGeometry,
    h: usize,
    w: usize,
    rr: usize,
    ss: usize,
    k: usize,
) -> Option<(usize, usize, usize)> {
    geom.output_coord(h, w, rr, ss).map(|(ho, wo)| (ho, wo, k))
}

/// Static per-layer quantities the cost model needs.
#[derive(Clone, Copy, Debug)]
pub struct LayerModel {
    pub in_h: usize,
    pub in_w: usize,
    pub c: usize,
    pub k: usize,
    pub r: usize,
    pub s: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub words_per_vec: usize,
    /// Bits per activation element (1 for binary).
    pub act_bits: usize,
}

impl LayerModel {
    pub fn from_conv(conv: &ConvLayer, input_dims: Dims, act_bits: usize) -> Self {
        let geom = conv.geometry(input_dims);
        let (out_h, out_w) = geom.out_dims();
        let ks = &conv.weights;
        Self {
            in_h: input_dims.h,
            in_w: input_dims.w,
            c: ks.c(),
            k: ks.k(),
            r: ks.r(),
            s: ks.s(),
            out_h,
            out_w,
            words_per_vec: words_for(ks.c()),
            act_bits,
        }
    }

    pub fn taps(&self) -> usize {
        self.r * self.s
    }

    /// Nominal MAC-equivalent bit ops: out_h * out_w * r * s * c * k.
    pub fn nominal_ops(&self) -> u64 {
        (self.out_h * self.out_w * self.taps() * self.c * self.k) as u64
    }

    /// Kernels owned by the busiest PE under round-robin distribution.
    fn kernels_per_pe(&self, cfg: &ArchConfig) -> usize {
        self.k.div_ceil(cfg.pe_count)
    }

    /// Output positions owned by the busiest PE when rows are distributed.
    fn positions_per_pe(&self, cfg: &ArchConfig) -> usize {
        self.out_h.div_ceil(cfg.pe_count) * self.out_w
    }

    fn offchip_bytes(&self) -> f64 {
        let weight_bytes = (self.k * self.taps() * self.words_per_vec * 8) as f64;
        let input_bytes = (self.in_h * self.in_w * self.c * self.act_bits) as f64 / 8.0;
        let output_bytes = (self.out_h * self.out_w * self.k) as f64 / 8.0;
        weight_bytes + input_bytes + output_bytes
    }
}

#[derive(Clone, Copy, Default, Debug, PartialEq)]
pub struct PhaseCycles {
    pub load: f64,
    pub check: f64,
    pub broadcast: f64,
    pub accumulate: f64,
    pub normalize: f64,
}

impl PhaseCycles {
    pub fn sum(&self) -> f64 {
        self.load + self.check + self.broadcast + self.accumulate + self.normalize
    }
}

/// Deterministic cycle estimate for one layer under one strategy.
#[derive(Clone, Debug)]
pub struct SimTrace {
    pub strategy: Backend,
    pub phases: PhaseCycles,
    pub total_cycles: f64,
    /// Cycles the multiplier datapaths were busy.
    pub busy_cycles: f64,
    /// busy / total, in [0, 1].
    pub utilization: f64,
    /// Nominal ops of the simulated scope (baseline accounting).
    pub nominal_ops: u64,
    pub counters: CostCounters,
}

impl SimTrace {
    /// Nominal ops over achieved time. Reuse runs count skipped work as
    /// done, so this can exceed the physical lane throughput.
    pub fn effective_gops(&self, cfg: &ArchConfig) -> f64 {
        self.nominal_ops as f64 * cfg.clock_hz / self.total_cycles / 1e9
    }
}

/// Throughput from the multiplier-count formula, with the clock rate made
/// explicit: FPS = lanes * utilization * clock / ops_per_image.
pub fn estimate_fps(trace: &SimTrace, cfg: &ArchConfig, ops_per_image: u64) -> Result<f64> {
    if ops_per_image == 0 {
        return Err(Error::InvalidParameter("ops_per_image must be > 0".into()));
    }
    Ok(cfg.multiplier_lanes() * trace.utilization * cfg.clock_hz / ops_per_image as f64)
}

/// One producer/consumer work unit: a full STAGE-I vector or a difference
/// set of `d` elements, each fanning out to `fanout` MAC updates.
#[derive(Clone, Copy)]
struct WorkUnit {
    d: f64,
    exact: bool,
}

struct PhaseAccumulator {
    check: f64,
    broadcast: f64,
    accumulate: f64,
    busy: f64,
}

impl PhaseAccumulator {
    fn new() -> Self {
        Self {
            check: 0.0,
            broadcast: 0.0,
            accumulate: 0.0,
            busy: 0.0,
        }
    }

    fn unit(&mut self, cfg: &ArchConfig, unit: WorkUnit, fanout: f64, check: f64, acc: f64) {
        let bus_raw = unit.d / cfg.broadcast_lanes as f64;
        let pe_raw = unit.d * fanout / cfg.popcount_lanes as f64;
        let (bus, pe) = if unit.exact {
            (bus_raw.ceil(), pe_raw.ceil())
        } else {
            (bus_raw, pe_raw)
        };
        self.check += check;
        self.broadcast += bus.max(pe);
        self.accumulate += acc;
        self.busy += pe;
    }
}

fn finish_trace(
    strategy: Backend,
    cfg: &ArchConfig,
    lm: &LayerModel,
    acc: PhaseAccumulator,
    counters: CostCounters,
) -> SimTrace {
    let normalize = ((lm.out_h * lm.out_w * lm.k) as f64 / cfg.pe_count as f64).ceil();
    let pipeline = acc.check + acc.broadcast + acc.accumulate + normalize;
    let load_raw = (lm.offchip_bytes() / cfg.offchip_bandwidth).ceil();
    let (load, total) = match cfg.overlap {
        OverlapMode::Max => {
            let total = pipeline.max(load_raw);
            (total - pipeline, total)
        }
        OverlapMode::Serial => (load_raw, pipeline + load_raw),
    };
    let phases = PhaseCycles {
        load,
        check: acc.check,
        broadcast: acc.broadcast,
        accumulate: acc.accumulate,
        normalize,
    };
    SimTrace {
        strategy,
        phases,
        total_cycles: total,
        busy_cycles: acc.busy,
        utilization: acc.busy / total,
        nominal_ops: lm.nominal_ops(),
        counters,
    }
}

/// Per-pixel difference profile of an input tensor along the scan order:
/// (diff elements, words containing a diff) per STAGE-II pixel.
fn input_diff_profile(input: &Activation) -> Vec<(u64, u64)> {
    let dims = input.dims();
    let mut out = Vec::with_capacity(dims.h * (dims.w - 1));
    match input {
        Activation::Binary(t) => {
            for h in 0..dims.h {
                for w in 1..dims.w {
                    let mut d = 0u64;
                    let mut dw = 0u64;
                    for (a, b) in t.vec_at(h, w).iter().zip(t.vec_at(h, w - 1)) {
                        let x = a ^ b;
                        if x != 0 {
                            d += u64::from(x.count_ones());
                            dw += 1;
                        }
                    }
                    out.push((d, dw));
                }
            }
        }
        Activation::Fixed(t) => {
            let wpv = words_for(dims.c);
            for h in 0..dims.h {
                for w in 1..dims.w {
                    let cur = t.vec_at(h, w);
                    let prev = t.vec_at(h, w - 1);
                    let mut d = 0u64;
                    let mut marked = vec![false; wpv];
                    for ch in 0..dims.c {
                        if cur[ch] != prev[ch] {
                            d += 1;
                            marked[ch / 64] = true;
                        }
                    }
                    out.push((d, marked.iter().filter(|&&m| m).count() as u64));
                }
            }
        }
    }
    out
}

/// Per-kernel difference profile along a plan's execution order:
/// (diff bits, words containing a diff) per non-first kernel of each
/// partition, in execution order.
fn kernel_diff_profile(conv: &ConvLayer, plan: &ReorderPlan) -> Vec<(u64, u64)> {
    let ks = &conv.weights;
    let mut out = Vec::new();
    for partition in plan.partitions() {
        for pair in partition.windows(2) {
            let a = ks.kernel_words(pair[0] as usize);
            let b = ks.kernel_words(pair[1] as usize);
            let mut d = 0u64;
            let mut dw = 0u64;
            for (x, y) in a.iter().zip(b) {
                let m = x ^ y;
                if m != 0 {
                    d += u64::from(m.count_ones());
                    dw += 1;
                }
            }
            out.push((d, dw));
        }
    }
    out
}

fn ia_vec_words(lm: &LayerModel) -> u64 {
    (lm.c * lm.act_bits).div_ceil(64) as u64
}

/// Simulate one conv layer on a concrete input tensor. Difference counts
/// are measured exactly from the tensor (and plan), so the trace and its
/// embedded counters are deterministic and agree with the engines.
pub fn simulate_layer(
    conv: &ConvLayer,
    input: &Activation,
    strategy: Backend,
    plan: Option<&ReorderPlan>,
    cfg: &ArchConfig,
) -> Result<SimTrace> {
    cfg.validate()?;
    let dims = input.dims();
    if dims.c != conv.weights.c() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} channels, conv expects {}",
            dims.c,
            conv.weights.c()
        )));
    }
    let act_bits = match input {
        Activation::Binary(_) => 1,
        Activation::Fixed(t) => t.total_bits() as usize,
    };
    let lm = LayerModel::from_conv(conv, dims, act_bits);
    let mut acc = PhaseAccumulator::new();
    let mut counters = CostCounters::new();
    let taps = lm.taps() as u64;
    let k = lm.k as u64;
    let c = lm.c as u64;
    let wpv = lm.words_per_vec as u64;
    let positions = (lm.out_h * lm.out_w) as u64;

    match strategy {
        Backend::Reference => {
            // The baseline is the input-reuse organization with checking
            // disabled: every pixel is a STAGE-I unit.
            let fanout = (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            let drain = cfg.accumulate_cost * (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            for _ in 0..lm.in_h * lm.in_w {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: lm.c as f64,
                        exact: true,
                    },
                    fanout,
                    0.0,
                    drain,
                );
            }
            counters.bit_ops = positions * k * taps * c;
            counters.weight_words_read = positions * k * taps * wpv;
            counters.ia_words_read = positions * k * taps * wpv;
        }
        Backend::InputReuse => {
            let fanout = (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            let drain = cfg.accumulate_cost * (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            // STAGE I: first pixel of every row.
            for _ in 0..lm.in_h {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: lm.c as f64,
                        exact: true,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
            counters.bit_ops += lm.in_h as u64 * taps * k * c;
            counters.full_computations += lm.in_h as u64 * taps * k;
            counters.weight_words_read += lm.in_h as u64 * taps * k * wpv;
            counters.ia_words_read += lm.in_h as u64 * ia_vec_words(&lm);
            for (d, dw) in input_diff_profile(input) {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: d as f64,
                        exact: true,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
                counters.bit_ops += d * taps * k;
                counters.broadcasts += d;
                counters.weight_words_read += dw * taps * k;
                counters.ia_words_read += ia_vec_words(&lm);
            }
        }
        Backend::WeightReuse => {
            let plan = plan.ok_or_else(|| {
                Error::PlanMismatch("weight-reuse simulation needs a reorder plan".into())
            })?;
            plan.validate_for(lm.k)?;
            let fanout = lm.positions_per_pe(cfg) as f64;
            let drain = cfg.accumulate_cost * lm.positions_per_pe(cfg) as f64;
            let full = (lm.taps() * lm.c) as f64;
            for _ in 0..plan.partition_count() {
                acc.unit(
                    cfg,
                    WorkUnit { d: full, exact: true },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
            let parts = plan.partition_count() as u64;
            counters.bit_ops += parts * positions * taps * c;
            counters.full_computations += parts * positions * taps;
            counters.weight_words_read += parts * positions * taps * wpv;
            counters.ia_words_read += parts * positions * taps * wpv;
            for (d, dw) in kernel_diff_profile(conv, plan) {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: d as f64,
                        exact: true,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
                counters.bit_ops += positions * d;
                counters.broadcasts += d;
                counters.weight_words_read += positions * dw;
                counters.ia_words_read += positions * dw;
            }
        }
    }

    Ok(finish_trace(strategy, cfg, &lm, acc, counters))
}

/// Simulate a layer at an abstract similarity operating point: STAGE-II
/// difference counts are replaced by their expectation `(1 - similarity) *
/// vector length`, without per-unit rounding. Used for strategy selection
/// and speedup-vs-similarity curves.
pub fn simulate_layer_parametric(
    lm: &LayerModel,
    strategy: Backend,
    similarity: f64,
    partitions: usize,
    cfg: &ArchConfig,
) -> SimTrace {
    let mut acc = PhaseAccumulator::new();
    match strategy {
        Backend::Reference => {
            let fanout = (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            let drain = cfg.accumulate_cost * (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            for _ in 0..lm.in_h * lm.in_w {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: lm.c as f64,
                        exact: false,
                    },
                    fanout,
                    0.0,
                    drain,
                );
            }
        }
        Backend::InputReuse => {
            let fanout = (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            let drain = cfg.accumulate_cost * (lm.taps() * lm.kernels_per_pe(cfg)) as f64;
            let expected = (1.0 - similarity) * lm.c as f64;
            for _ in 0..lm.in_h {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: lm.c as f64,
                        exact: false,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
            for _ in 0..lm.in_h * (lm.in_w - 1) {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: expected,
                        exact: false,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
        }
        Backend::WeightReuse => {
            let fanout = lm.positions_per_pe(cfg) as f64;
            let drain = cfg.accumulate_cost * lm.positions_per_pe(cfg) as f64;
            let full = (lm.taps() * lm.c) as f64;
            let expected = (1.0 - similarity) * full;
            for _ in 0..partitions {
                acc.unit(
                    cfg,
                    WorkUnit { d: full, exact: false },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
            for _ in 0..lm.k - partitions {
                acc.unit(
                    cfg,
                    WorkUnit {
                        d: expected,
                        exact: false,
                    },
                    fanout,
                    cfg.check_cost,
                    drain,
                );
            }
        }
    }
    finish_trace(strategy, cfg, lm, acc, CostCounters::new())
}

/// Layer geometry plus plan partition count for the parametric model,
/// derived from a validated model.
pub fn layer_models(m: &ModelSpec, cfg_plans: bool) -> Result<Vec<(LayerModel, usize, String)>> {
    let mut out = Vec::new();
    let mut conv_no = 0;
    for (idx, dims, conv) in m.conv_layers() {
        conv_no += 1;
        let act_bits = if conv.kind == crate::model::ConvKind::Fixed {
            match m.activation {
                ActivationKind::Fixed { total_bits, .. } => total_bits as usize,
                ActivationKind::Binary => 1,
            }
        } else {
            1
        };
        let parts = if cfg_plans {
            match m.plans.get(&idx) {
                Some(p) => p.partition_count(),
                None => default_plan(&conv.weights)?.partition_count(),
            }
        } else {
            1
        };
        out.push((
            LayerModel::from_conv(conv, dims, act_bits),
            parts,
            format!("conv{conv_no}"),
        ));
    }
    Ok(out)
}

/// Per-layer evidence backing a strategy decision.
#[derive(Clone, Debug)]
pub struct LayerEvidence {
    pub label: String,
    pub input_sim: f64,
    pub kernel_sim: f64,
    pub cycles_baseline: f64,
    pub cycles_input_reuse: f64,
    pub cycles_weight_reuse: f64,
}

/// Outcome of offline strategy selection.
#[derive(Clone, Debug)]
pub struct StrategySelection {
    pub choice: Backend,
    pub avg_input_sim: f64,
    pub avg_kernel_sim: f64,
    pub total_baseline: f64,
    pub total_input_reuse: f64,
    pub total_weight_reuse: f64,
    pub speedup_input_reuse: f64,
    pub speedup_weight_reuse: f64,
    /// Smallest input similarity (on a 0.01 grid) at which input reuse
    /// overtakes weight reuse at the measured kernel operating point;
    /// > 1.0 when it never does.
    pub crossover_input_sim: f64,
    pub per_layer: Vec<LayerEvidence>,
}

fn model_input_cycles(models: &[(LayerModel, usize, String)], sim: f64, cfg: &ArchConfig) -> f64 {
    models
        .iter()
        .map(|(lm, _, _)| simulate_layer_parametric(lm, Backend::InputReuse, sim, 1, cfg).total_cycles)
        .sum()
}

/// Measure the operating point of a model on a calibration set and pick the
/// strategy with the higher simulated speedup. Ties prefer input reuse,
/// which avoids the ofmap revert machinery.
pub fn select_strategy(
    m: &ModelSpec,
    images: &[Activation],
    cfg: &ArchConfig,
) -> Result<StrategySelection> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::InvalidParameter("empty calibration set".into()));
    }
    let report = dataset_report(m, images, images.len())?;
    let models = layer_models(m, true)?;
    debug_assert_eq!(models.len(), report.layers.len());

    let mut per_layer = Vec::with_capacity(models.len());
    let mut total_baseline = 0.0;
    let mut total_input = 0.0;
    let mut total_weight = 0.0;
    for ((lm, parts, label), layer) in models.iter().zip(&report.layers) {
        let base =
            simulate_layer_parametric(lm, Backend::Reference, 0.0, 1, cfg).total_cycles;
        let input = simulate_layer_parametric(lm, Backend::InputReuse, layer.input.avg, 1, cfg)
            .total_cycles;
        let weight = simulate_layer_parametric(
            lm,
            Backend::WeightReuse,
            layer.kernel_reordered,
            *parts,
            cfg,
        )
        .total_cycles;
        total_baseline += base;
        total_input += input;
        total_weight += weight;
        per_layer.push(LayerEvidence {
            label: label.clone(),
            input_sim: layer.input.avg,
            kernel_sim: layer.kernel_reordered,
            cycles_baseline: base,
            cycles_input_reuse: input,
            cycles_weight_reuse: weight,
        });
    }

    // Crossover: scan the input-similarity axis against the fixed
    // weight-reuse operating point.
    let mut crossover = f64::INFINITY;
    for step in 0..=100 {
        let sim = step as f64 / 100.0;
        if model_input_cycles(&models, sim, cfg) <= total_weight {
            crossover = sim;
            break;
        }
    }
    if !crossover.is_finite() {
        crossover = 1.01;
    }

    let speedup_input = total_baseline / total_input;
    let speedup_weight = total_baseline / total_weight;
    Ok(StrategySelection {
        choice: if speedup_input >= speedup_weight {
            Backend::InputReuse
        } else {
            Backend::WeightReuse
        },
        avg_input_sim: report.overall_input.avg,
        avg_kernel_sim: report.overall_kernel_reordered,
        total_baseline,
        total_input_reuse: total_input,
        total_weight_reuse: total_weight,
        speedup_input_reuse: speedup_input,
        speedup_weight_reuse: speedup_weight,
        crossover_input_sim: crossover,
        per_layer,
    })
}

/// Point on a speedup-vs-input-similarity curve. The weight-reuse speedup
/// is evaluated at the model's measured kernel operating point and does not
/// vary along the input-similarity axis.
#[derive(Clone, Copy, Debug)]
pub struct CurvePoint {
    pub input_sim: f64,
    pub speedup_input_reuse: f64,
    pub speedup_weight_reuse: f64,
}

/// Whole-model speedup curve over the input-similarity axis.
pub fn speedup_curve(
    m: &ModelSpec,
    kernel_sim: f64,
    steps: usize,
    cfg: &ArchConfig,
) -> Result<Vec<CurvePoint>> {
    if steps < 2 {
        return Err(Error::InvalidParameter("curve needs at least 2 steps".into()));
    }
    cfg.validate()?;
    let models = layer_models(m, true)?;
    let baseline: f64 = models
        .iter()
        .map(|(lm, _, _)| {
            simulate_layer_parametric(lm, Backend::Reference, 0.0, 1, cfg).total_cycles
        })
        .sum();
    let weight: f64 = models
        .iter()
        .map(|(lm, parts, _)| {
            simulate_layer_parametric(lm, Backend::WeightReuse, kernel_sim, *parts, cfg)
                .total_cycles
        })
        .sum();
    let points = crate::par::map_range(steps, |i| {
        let sim = i as f64 / (steps - 1) as f64;
        let input = model_input_cycles(&models, sim, cfg);
        CurvePoint {
            input_sim: sim,
            speedup_input_reuse: baseline / input,
            speedup_weight_reuse: baseline / weight,
        }
    });
    Ok(points)
}
