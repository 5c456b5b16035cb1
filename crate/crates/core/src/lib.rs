//! Binarized-network inference with similarity-driven computation reuse.
//!
//! The crate packs +-1 tensors into 64-bit words and provides three
//! bit-exact convolution engines: a naive reference, an input-reuse engine
//! that updates results from per-pixel channel differences, and a
//! weight-reuse engine that walks kernels in a reordered sequence applying
//! same/different masks. An offline optimizer builds the kernel order
//! (balanced dissimilarity partitions plus greedy shortest Hamiltonian
//! paths), a similarity analyzer measures the ratios the engines exploit,
//! and a parametric cost model estimates cycles, utilization and throughput
//! for the two accelerator organizations.
//!
//! Data-parallel paths (dataset analysis, path searches, sweeps) run on
//! rayon under the default `parallel` feature and sequentially without it.

pub mod arch;
pub mod bits;
pub mod counters;
pub mod error;
pub mod model;
pub mod par;
pub mod reference;
pub mod reorder;
pub mod report;
pub mod reuse;
pub mod similarity;

pub use arch::{
    estimate_fps, oabank_address, select_strategy, simulate_layer, simulate_layer_parametric,
    speedup_curve, ArchConfig, LayerModel, OverlapMode, SimTrace, StrategySelection,
};
pub use bits::{
    fixed_dot, xnor_popcount_dot, AccumulatorMap, Activation, BinaryKernelSet, BinaryTensor, Dims,
    FixedTensor,
};
pub use counters::CostCounters;
pub use error::{Error, Result};
pub use model::{
    gen_input, gen_inputs, gen_synthetic_model, load_input, load_input_from_path, load_model,
    load_model_from_path, save_input, save_input_to_path, save_model, save_model_to_path,
    binarynet_cifar10_arch, ActivationKind, ConvKind, ConvLayer, InputKind, LayerDef, LayerSpec, ModelSpec,
    Padding,
};
pub use reference::{conv_reference, infer, maxpool2x2, normalize_binarize, Backend, InferOutcome};
pub use reorder::{
    build_graph, default_plan, greedy_hamiltonian, kernel_dissimilarity, make_blocked_reorder_plan,
    make_reorder_plan, partition_graph, DissimilarityGraph, ReorderPlan,
};
pub use report::{emit_report, ReportFormat, Table, Value};
pub use reuse::{conv_input_reuse, conv_weight_reuse, revert_ofmaps, ChainPolicy, WeightBase};
pub use similarity::{
    dataset_report, input_similarity, kernel_similarity, SimilarityReport, SimilarityStats,
};
