//! Command-line surface for the bnnsim toolkit: model/input generation,
//! similarity analysis, kernel reordering, bit-exact inference with
//! equivalence checks, architecture simulation, and counter comparisons.
//! Every stochastic path takes an explicit seed, so runs are byte
//! reproducible.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bnnsim_core::arch::layer_models;
use bnnsim_core::model::{load_input_from_path, save_input_to_path};
use bnnsim_core::report::{
    compare_table, curve_table, selection_table, similarity_table, trace_table, workload_table,
};
use bnnsim_core::similarity::{kernel_similarity_for_plan, kernel_similarity_identity};
use bnnsim_core::{
    conv_input_reuse, conv_reference, conv_weight_reuse, dataset_report, default_plan, emit_report,
    estimate_fps, gen_input, gen_synthetic_model, infer, load_model_from_path,
    make_blocked_reorder_plan, make_reorder_plan, revert_ofmaps, save_model_to_path,
    select_strategy, simulate_layer, speedup_curve, ActivationKind, Activation, ArchConfig,
    Backend, CostCounters, Dims, Error, InputKind, LayerDef, ModelSpec, Padding, ReportFormat,
    Result, SimilarityStats, Table,
};

#[derive(Parser)]
#[command(
    name = "bnnsim",
    about = "Binarized-network inference with similarity-driven computation reuse",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic models and input tensors.
    Gen {
        #[command(subcommand)]
        what: GenTarget,
    },
    /// Measure input/kernel similarity over a calibration set.
    Analyze(AnalyzeArgs),
    /// Build reorder plans and report before/after kernel similarity.
    Reorder(ReorderArgs),
    /// Run inference with a chosen backend.
    Infer(InferArgs),
    /// Estimate cycles, utilization and throughput on the cost model.
    Simulate(SimulateArgs),
    /// Compare baseline and reuse-engine operation/access counters.
    Compare(CompareArgs),
    /// Pick the better reuse strategy for a model and calibration set.
    Select(SelectArgs),
}

#[derive(Subcommand)]
enum GenTarget {
    /// Write a synthetic-weight model file.
    Model(GenModelArgs),
    /// Write an input tensor file.
    Input(GenInputArgs),
}

#[derive(Args)]
struct GenModelArgs {
    /// Output model path (.bnn).
    #[arg(long)]
    out: PathBuf,
    /// Generator seed (weights, thresholds, flips).
    #[arg(long)]
    seed: u64,
    /// Named architecture preset.
    #[arg(long, conflicts_with_all = ["input", "layers"])]
    arch: Option<String>,
    /// Input dims as HxWxC (with --layers).
    #[arg(long, requires = "layers")]
    input: Option<String>,
    /// Layer list: comma-separated `conv:RxSxK[:same|none]` and `pool`.
    #[arg(long, requires = "input")]
    layers: Option<String>,
    /// Activation stream: `binary` or `fixed[:TOTAL:FRAC]`.
    #[arg(long, default_value = "binary")]
    activation: String,
    /// Attach reorder plans: `blocked:RANGE`, `global:K`, or `none`.
    #[arg(long, default_value = "none")]
    plan: String,
    /// Print the workload summary table after writing.
    #[arg(long)]
    summary: bool,
}

#[derive(Args)]
struct GenInputArgs {
    /// Output tensor path (.bnt).
    #[arg(long)]
    out: PathBuf,
    /// Generator seed.
    #[arg(long)]
    seed: u64,
    /// Input class: constant, noise, smooth, or vstripes:P.
    #[arg(long)]
    kind: String,
    /// Tensor dims as HxWxC.
    #[arg(long)]
    dims: String,
    /// Activation kind: `binary` or `fixed[:TOTAL:FRAC]`.
    #[arg(long, default_value = "binary")]
    activation: String,
}

/// Where calibration/inference inputs come from: tensor files, or a
/// generated batch (kind + seed + count).
#[derive(Args)]
struct InputSource {
    /// Input tensor file(s); repeatable.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Generated input class: constant, noise, smooth, or vstripes:P.
    #[arg(long)]
    input_kind: Option<String>,
    /// Seed for generated inputs (required with --input-kind).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of generated inputs.
    #[arg(long, default_value_t = 1)]
    count: usize,
}

impl InputSource {
    fn resolve(&self, m: &ModelSpec) -> Result<Vec<Activation>> {
        match (&self.inputs[..], &self.input_kind) {
            ([], None) => Err(Error::InvalidParameter(
                "provide --input files or --input-kind with --seed".into(),
            )),
            (files, None) => files.iter().map(load_input_from_path).collect(),
            ([], Some(kind)) => {
                let seed = self.seed.ok_or_else(|| {
                    Error::InvalidParameter("--input-kind needs an explicit --seed".into())
                })?;
                let kind = InputKind::parse(kind)?;
                bnnsim_core::gen_inputs(kind, m.input_dims, m.activation, seed, self.count.max(1))
            }
            (_, Some(_)) => Err(Error::InvalidParameter(
                "--input and --input-kind are mutually exclusive".into(),
            )),
        }
    }
}

#[derive(Args)]
struct OutputSink {
    /// Report format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutputSink {
    fn emit(&self, table: &Table) -> Result<()> {
        let format = ReportFormat::parse(&self.format)?;
        match &self.out {
            Some(path) => {
                let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
                emit_report(table, format, &mut file)?;
                file.flush()?;
            }
            None => {
                let stdout = std::io::stdout();
                emit_report(table, format, &mut stdout.lock())?;
            }
        }
        Ok(())
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: InputSource,
    /// Cap on the number of images analyzed.
    #[arg(long)]
    limit: Option<usize>,
    /// Emit the workload summary instead of similarity figures.
    #[arg(long)]
    summary: bool,
    #[command(flatten)]
    sink: OutputSink,
}

#[derive(Args)]
struct ReorderArgs {
    #[arg(long)]
    model: PathBuf,
    /// Plan scheme: `blocked:RANGE` (range 64 mirrors the shipped workload
    /// parameters) or `global:K`.
    #[arg(long, default_value = "blocked:64")]
    plan: String,
    /// Write the model with plans attached.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write the before/after report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: InputSource,
    /// Convolution engine: reference, input-reuse, or weight-reuse.
    #[arg(long, default_value = "reference")]
    backend: String,
    /// Also run the reference engine and require bit-exact agreement.
    #[arg(long)]
    check_equivalence: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: InputSource,
    /// Strategy to trace: baseline, input-reuse, or weight-reuse;
    /// repeatable, default all three.
    #[arg(long = "strategy")]
    strategies: Vec<String>,
    /// Arch config file (key = value lines); defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Emit a speedup-vs-input-similarity sweep with this many grid steps
    /// instead of per-layer traces.
    #[arg(long)]
    sweep: Option<usize>,
    /// Kernel-similarity operating point for the sweep's weight-reuse line
    /// (measured from the model's plans when omitted).
    #[arg(long)]
    kernel_sim: Option<f64>,
    #[command(flatten)]
    sink: OutputSink,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: InputSource,
    #[command(flatten)]
    sink: OutputSink,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    source: InputSource,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    sink: OutputSink,
}

fn parse_dims(text: &str) -> Result<Dims> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidParameter(format!(
            "dims must be HxWxC, got {text}"
        )));
    }
    let parse = |p: &str| {
        p.parse::<usize>()
            .map_err(|_| Error::InvalidParameter(format!("bad dimension: {p}")))
    };
    Ok(Dims::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
}

fn parse_activation(text: &str) -> Result<ActivationKind> {
    if text == "binary" {
        return Ok(ActivationKind::Binary);
    }
    if text == "fixed" {
        return Ok(ActivationKind::Fixed {
            total_bits: 8,
            frac_bits: 4,
        });
    }
    if let Some(rest) = text.strip_prefix("fixed:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() == 2 {
            let total = parts[0].parse().ok();
            let frac = parts[1].parse().ok();
            if let (Some(total_bits), Some(frac_bits)) = (total, frac) {
                return Ok(ActivationKind::Fixed {
                    total_bits,
                    frac_bits,
                });
            }
        }
    }
    Err(Error::InvalidParameter(format!(
        "activation must be binary or fixed[:TOTAL:FRAC], got {text}"
    )))
}

fn parse_layers(text: &str) -> Result<Vec<LayerDef>> {
    let mut defs = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item == "pool" {
            defs.push(LayerDef::Pool);
            continue;
        }
        let Some(rest) = item.strip_prefix("conv:") else {
            return Err(Error::InvalidParameter(format!(
                "layer must be pool or conv:RxSxK[:same|none], got {item}"
            )));
        };
        let mut fields = rest.split(':');
        let shape = fields.next().unwrap_or("");
        let padding = match fields.next() {
            None | Some("same") => Padding::Same,
            Some("none") => Padding::None,
            Some(p) => {
                return Err(Error::InvalidParameter(format!(
                    "padding must be same or none, got {p}"
                )))
            }
        };
        let dims: Vec<&str> = shape.split('x').collect();
        if dims.len() != 3 {
            return Err(Error::InvalidParameter(format!(
                "conv shape must be RxSxK, got {shape}"
            )));
        }
        let parse = |p: &str| {
            p.parse::<usize>()
                .map_err(|_| Error::InvalidParameter(format!("bad conv dimension: {p}")))
        };
        defs.push(LayerDef::Conv {
            r: parse(dims[0])?,
            s: parse(dims[1])?,
            k: parse(dims[2])?,
            padding,
        });
    }
    Ok(defs)
}

enum PlanScheme {
    None,
    Blocked(usize),
    Global(usize),
}

fn parse_plan_scheme(text: &str) -> Result<PlanScheme> {
    if text == "none" {
        return Ok(PlanScheme::None);
    }
    if let Some(range) = text.strip_prefix("blocked:") {
        let range = range
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad plan range: {range}")))?;
        return Ok(PlanScheme::Blocked(range));
    }
    if let Some(k) = text.strip_prefix("global:") {
        let k = k
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad partition count: {k}")))?;
        return Ok(PlanScheme::Global(k));
    }
    Err(Error::InvalidParameter(format!(
        "plan must be none, blocked:RANGE, or global:K, got {text}"
    )))
}

fn attach_plans(m: &mut ModelSpec, scheme: &PlanScheme) -> Result<()> {
    let convs: Vec<usize> = m.conv_layers().iter().map(|(i, _, _)| *i).collect();
    for idx in convs {
        let conv = m.layers[idx].as_conv().expect("index points at a conv");
        let ks = &conv.weights;
        let plan = match scheme {
            PlanScheme::None => continue,
            // Clamp the range to the layer's kernel count so one scheme
            // covers layers of different widths.
            PlanScheme::Blocked(range) => make_blocked_reorder_plan(ks, (*range).min(ks.k()))?,
            PlanScheme::Global(k_parts) => make_reorder_plan(ks, *k_parts)?,
        };
        m.plans.insert(idx, plan);
    }
    Ok(())
}

fn load_config(path: &Option<PathBuf>) -> Result<ArchConfig> {
    match path {
        Some(path) => ArchConfig::from_kv_text(&std::fs::read_to_string(path)?),
        None => Ok(ArchConfig::default()),
    }
}

fn cmd_gen_model(args: &GenModelArgs) -> Result<()> {
    let activation = parse_activation(&args.activation)?;
    let (input_dims, defs) = match (&args.layers, args.arch.as_deref()) {
        (Some(layers), _) => {
            let dims = parse_dims(args.input.as_deref().expect("clap ties --input to --layers"))?;
            (dims, parse_layers(layers)?)
        }
        (None, Some("binarynet-cifar10") | None) => bnnsim_core::binarynet_cifar10_arch(),
        (None, Some(other)) => {
            return Err(Error::InvalidParameter(format!(
                "unknown architecture preset: {other}"
            )));
        }
    };
    let mut m = gen_synthetic_model(input_dims, activation, &defs, args.seed)?;
    attach_plans(&mut m, &parse_plan_scheme(&args.plan)?)?;
    save_model_to_path(&m, &args.out)?;
    eprintln!(
        "wrote model: {} layers, input {}, {} plan(s) -> {}",
        m.layers.len(),
        m.input_dims,
        m.plans.len(),
        args.out.display()
    );
    if args.summary {
        let stdout = std::io::stdout();
        emit_report(&workload_table(&m), ReportFormat::Csv, &mut stdout.lock())?;
    }
    Ok(())
}

fn cmd_gen_input(args: &GenInputArgs) -> Result<()> {
    let kind = InputKind::parse(&args.kind)?;
    let dims = parse_dims(&args.dims)?;
    let activation = parse_activation(&args.activation)?;
    let tensor = gen_input(kind, dims, activation, args.seed)?;
    save_input_to_path(&tensor, &args.out)?;
    eprintln!("wrote {kind} input {dims} -> {}", args.out.display());
    Ok(())
}

fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let m = load_model_from_path(&args.model)?;
    if args.summary {
        return args.sink.emit(&workload_table(&m));
    }
    let images = args.source.resolve(&m)?;
    let limit = args.limit.unwrap_or(images.len());
    let report = dataset_report(&m, &images, limit)?;
    args.sink.emit(&similarity_table(&report))
}

fn cmd_reorder(args: &ReorderArgs) -> Result<()> {
    let mut m = load_model_from_path(&args.model)?;
    let scheme = parse_plan_scheme(&args.plan)?;
    if matches!(scheme, PlanScheme::None) {
        return Err(Error::InvalidParameter(
            "reorder needs blocked:RANGE or global:K".into(),
        ));
    }
    attach_plans(&mut m, &scheme)?;

    let mut table = Table::new(&[
        "layer",
        "kernels",
        "partitions",
        "kernel_sim_identity",
        "kernel_sim_reordered",
        "chain_cost",
        "sequence_info_bits",
        "sequence_info_pct_of_weights",
    ]);
    let mut conv_no = 0;
    for (idx, _, conv) in m.conv_layers() {
        conv_no += 1;
        let plan = &m.plans[&idx];
        let before = kernel_similarity_identity(&conv.weights, plan)?.ratio();
        let after = kernel_similarity_for_plan(&conv.weights, plan)?.ratio();
        let seq_bits = plan.sequence_info_bits();
        table.push_row(vec![
            format!("conv{conv_no}").into(),
            conv.weights.k().into(),
            plan.partition_count().into(),
            before.into(),
            after.into(),
            plan.chain_cost().into(),
            seq_bits.into(),
            (100.0 * seq_bits as f64 / conv.weight_bits() as f64).into(),
        ]);
    }
    if let Some(out) = &args.out {
        save_model_to_path(&m, out)?;
        eprintln!("wrote reordered model -> {}", out.display());
    }
    let sink = OutputSink {
        format: args.format.clone(),
        out: args.report.clone(),
    };
    sink.emit(&table)
}

fn cmd_infer(args: &InferArgs) -> Result<()> {
    let m = load_model_from_path(&args.model)?;
    let backend = Backend::parse(&args.backend)?;
    let images = args.source.resolve(&m)?;
    for (i, img) in images.iter().enumerate() {
        let outcome = infer(&m, img, backend)?;
        println!(
            "input {i}: class {} (backend {backend}, bit_ops {}, weight_words {}, broadcasts {})",
            outcome.class(),
            outcome.counters.bit_ops,
            outcome.counters.weight_words_read,
            outcome.counters.broadcasts
        );
        if args.check_equivalence {
            let reference = infer(&m, img, Backend::Reference)?;
            if outcome.accumulators == reference.accumulators {
                println!("input {i}: EXACT MATCH vs reference");
            } else {
                return Err(Error::CheckFailed(format!(
                    "backend {backend} diverged from reference on input {i}"
                )));
            }
        }
    }
    Ok(())
}

/// Aggregate kernel similarity of a model under its plans (default plans
/// where absent), parameter-weighted.
fn measured_kernel_sim(m: &ModelSpec) -> Result<f64> {
    let mut total = SimilarityStats::default();
    for (idx, _, conv) in m.conv_layers() {
        let plan = match m.plans.get(&idx) {
            Some(p) => p.clone(),
            None => default_plan(&conv.weights)?,
        };
        total.merge(&kernel_similarity_for_plan(&conv.weights, &plan)?);
    }
    Ok(total.ratio())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let m = load_model_from_path(&args.model)?;
    let cfg = load_config(&args.config)?;

    if let Some(steps) = args.sweep {
        let kernel_sim = match args.kernel_sim {
            Some(q) => q,
            None => measured_kernel_sim(&m)?,
        };
        let curve = speedup_curve(&m, kernel_sim, steps, &cfg)?;
        return args.sink.emit(&curve_table(&curve));
    }

    let strategies: Vec<Backend> = if args.strategies.is_empty() {
        vec![Backend::Reference, Backend::InputReuse, Backend::WeightReuse]
    } else {
        args.strategies
            .iter()
            .map(|s| Backend::parse(s))
            .collect::<Result<_>>()?
    };
    let images = args.source.resolve(&m)?;
    let img = &images[0];

    // Propagate the image through the reference pipeline so each layer is
    // simulated on the activation it would actually see.
    let mut layer_inputs: Vec<Activation> = Vec::new();
    bnnsim_core::reference::run_with_taps(&m, img, Backend::Reference, |_, input, _| {
        layer_inputs.push(input.clone());
    })?;

    let models = layer_models(&m, true)?;
    let mut rows = Vec::new();
    for (ci, (idx, _, conv)) in m.conv_layers().iter().enumerate() {
        let input = &layer_inputs[ci];
        let label = models[ci].2.clone();
        let plan = match m.plans.get(idx) {
            Some(p) => p.clone(),
            None => default_plan(&conv.weights)?,
        };
        let baseline = simulate_layer(conv, input, Backend::Reference, None, &cfg)?;
        for &strategy in &strategies {
            let trace = match strategy {
                Backend::Reference => baseline.clone(),
                Backend::InputReuse => simulate_layer(conv, input, strategy, None, &cfg)?,
                Backend::WeightReuse => simulate_layer(conv, input, strategy, Some(&plan), &cfg)?,
            };
            let speedup = baseline.total_cycles / trace.total_cycles;
            let gops = trace.effective_gops(&cfg);
            rows.push((label.clone(), trace, speedup, gops));
        }
    }

    // Whole-model throughput line on stderr; the table stays per layer.
    let total_cycles: f64 = rows
        .iter()
        .filter(|(_, t, _, _)| t.strategy == Backend::Reference)
        .map(|(_, t, _, _)| t.total_cycles)
        .sum();
    if total_cycles > 0.0 {
        let busy: f64 = rows
            .iter()
            .filter(|(_, t, _, _)| t.strategy == Backend::Reference)
            .map(|(_, t, _, _)| t.busy_cycles)
            .sum();
        let util_trace = bnnsim_core::SimTrace {
            strategy: Backend::Reference,
            phases: Default::default(),
            total_cycles,
            busy_cycles: busy,
            utilization: busy / total_cycles,
            nominal_ops: m.nominal_ops_per_image(),
            counters: CostCounters::new(),
        };
        let fps = estimate_fps(&util_trace, &cfg, m.nominal_ops_per_image())?;
        eprintln!(
            "baseline whole-model: {total_cycles:.0} cycles, {:.1} fps at {:.0} MHz",
            fps,
            cfg.clock_hz / 1e6
        );
    }
    args.sink.emit(&trace_table(&rows))
}

fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let m = load_model_from_path(&args.model)?;
    let images = args.source.resolve(&m)?;

    let mut rows = Vec::new();
    let mut conv_no = 0;
    for (idx, _, conv) in m.conv_layers() {
        conv_no += 1;
        let label = format!("conv{conv_no}");
        let plan = match m.plans.get(&idx) {
            Some(p) => p.clone(),
            None => default_plan(&conv.weights)?,
        };
        let mut base = CostCounters::new();
        let mut by_input = CostCounters::new();
        let mut by_weight = CostCounters::new();
        for img in &images {
            // Each layer is compared on the activation it would see.
            let mut layer_inputs: Vec<Activation> = Vec::new();
            bnnsim_core::reference::run_with_taps(&m, img, Backend::Reference, |i, input, _| {
                if i == idx {
                    layer_inputs.push(input.clone());
                }
            })?;
            let input = &layer_inputs[0];
            let reference = conv_reference(input, conv, &mut base)?;
            let a = conv_input_reuse(input, conv, &mut by_input)?;
            let executed = conv_weight_reuse(input, conv, &plan, &mut by_weight)?;
            if a != reference || revert_ofmaps(&executed, &plan)? != reference {
                return Err(Error::CheckFailed(format!(
                    "reuse engines diverged from reference on layer {label}"
                )));
            }
        }
        rows.push((label.clone(), "input-reuse".to_string(), base, by_input));
        rows.push((label, "weight-reuse".to_string(), base, by_weight));
    }
    args.sink.emit(&compare_table(&rows))
}

fn cmd_select(args: &SelectArgs) -> Result<()> {
    let m = load_model_from_path(&args.model)?;
    let cfg = load_config(&args.config)?;
    let images = args.source.resolve(&m)?;
    let selection = select_strategy(&m, &images, &cfg)?;
    eprintln!(
        "selected {} (input sim {:.4}, kernel sim {:.4}, speedups {:.2}x vs {:.2}x, crossover {:.2})",
        selection.choice,
        selection.avg_input_sim,
        selection.avg_kernel_sim,
        selection.speedup_input_reuse,
        selection.speedup_weight_reuse,
        selection.crossover_input_sim
    );
    args.sink.emit(&selection_table(&selection))
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Gen { what } => match what {
            GenTarget::Model(args) => cmd_gen_model(args),
            GenTarget::Input(args) => cmd_gen_input(args),
        },
        Command::Analyze(args) => cmd_analyze(args),
        Command::Reorder(args) => cmd_reorder(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Select(args) => cmd_select(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
