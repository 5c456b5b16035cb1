//! Acceptance suite: one test per shipping criterion, each printing a
//! PASS line with its measured evidence. Run with
//! `cargo test -p bnnsim-core --test acceptance -- --nocapture`.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use bnnsim_core::arch::{layer_models, simulate_layer_parametric};
use bnnsim_core::bits::{words_for, Activation, BinaryKernelSet, BinaryTensor, Dims};
use bnnsim_core::model::{
    gen_input, gen_inputs, gen_synthetic_model, load_model, save_model, ActivationKind, ConvKind,
    ConvLayer, InputKind, LayerDef, LayerSpec, ModelSpec, Padding,
};
use bnnsim_core::reorder::{
    build_graph, default_plan, make_blocked_reorder_plan, make_reorder_plan, ReorderPlan,
};
use bnnsim_core::similarity::{
    dataset_report, input_similarity, kernel_similarity, kernel_similarity_for_plan,
    kernel_similarity_identity,
};
use bnnsim_core::{
    conv_input_reuse, conv_reference, conv_weight_reuse, infer, revert_ofmaps, select_strategy,
    simulate_layer, speedup_curve, ArchConfig, Backend, CostCounters, Error,
};

/// Random model within the suite's size budget: dims up to 16x16x64,
/// kernels up to 3x3x64x64, one to three conv layers with optional pooling.
fn random_model(rng: &mut ChaCha12Rng, fixed: bool) -> ModelSpec {
    let channel_choices = [3usize, 8, 16, 33, 64];
    let kernel_choices = [4usize, 8, 16, 32, 64];
    let h = rng.random_range(3..=16);
    let w = rng.random_range(2..=16);
    let c = channel_choices[rng.random_range(0..channel_choices.len())];
    let activation = if fixed {
        ActivationKind::Fixed {
            total_bits: 8,
            frac_bits: 4,
        }
    } else {
        ActivationKind::Binary
    };

    let mut defs = Vec::new();
    let mut dims = Dims::new(h, w, c);
    let conv_count = rng.random_range(1..=3);
    for _ in 0..conv_count {
        let r = if dims.h >= 3 && rng.random_bool(0.7) { 3 } else { 1 };
        let s = if dims.w >= 3 && rng.random_bool(0.7) { 3 } else { 1 };
        let padding = if rng.random_bool(0.5) || dims.h < r || dims.w < s {
            Padding::Same
        } else {
            Padding::None
        };
        let k = kernel_choices[rng.random_range(0..kernel_choices.len())];
        defs.push(LayerDef::Conv { r, s, k, padding });
        let (oh, ow) = match padding {
            Padding::Same => (dims.h, dims.w),
            Padding::None => (dims.h - r + 1, dims.w - s + 1),
        };
        dims = Dims::new(oh, ow, k);
        if dims.h % 2 == 0 && dims.w % 2 == 0 && dims.h >= 4 && dims.w >= 4 && rng.random_bool(0.3)
        {
            defs.push(LayerDef::Pool);
            dims = Dims::new(dims.h / 2, dims.w / 2, dims.c);
        }
    }
    gen_synthetic_model(Dims::new(h, w, c), activation, &defs, rng.random())
        .expect("generated architecture is chain-consistent")
}

/// Random valid plan for k kernels: either optimizer output or an arbitrary
/// permutation split into equal partitions of at most 64.
fn random_plan(rng: &mut ChaCha12Rng, ks: &BinaryKernelSet) -> ReorderPlan {
    let k = ks.k();
    if rng.random_bool(0.5) {
        default_plan(ks).unwrap()
    } else {
        let mut divisors: Vec<usize> = (1..=k).filter(|p| k % p == 0 && k / p <= 64).collect();
        divisors.sort_unstable();
        let parts = divisors[rng.random_range(0..divisors.len())];
        let mut order: Vec<u32> = (0..k as u32).collect();
        order.shuffle(rng);
        let size = k / parts;
        let partitions = order.chunks(size).map(|c| c.to_vec()).collect();
        ReorderPlan::new(partitions, 0.0).unwrap()
    }
}

fn random_input(rng: &mut ChaCha12Rng, m: &ModelSpec) -> Activation {
    let kinds = [
        InputKind::Constant,
        InputKind::Noise,
        InputKind::VStripes(0.8),
        InputKind::Smooth,
    ];
    let kind = kinds[rng.random_range(0..kinds.len())];
    gen_input(kind, m.input_dims, m.activation, rng.random()).unwrap()
}

fn with_random_plans(rng: &mut ChaCha12Rng, m: &mut ModelSpec) {
    let convs: Vec<usize> = m.conv_layers().iter().map(|(i, _, _)| *i).collect();
    for idx in convs {
        let plan = {
            let LayerSpec::Conv(conv) = &m.layers[idx] else {
                unreachable!()
            };
            random_plan(rng, &conv.weights)
        };
        m.plans.insert(idx, plan);
    }
}

#[test]
fn ac1_exact_equivalence() {
    let started = Instant::now();
    let trials = 200usize;
    let failures: usize = bnnsim_core::par::map_range(trials, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC01_0000 + i as u64);
        let fixed = i % 2 == 1;
        let mut m = random_model(&mut rng, fixed);
        with_random_plans(&mut rng, &mut m);
        let img = random_input(&mut rng, &m);
        let reference = infer(&m, &img, Backend::Reference).unwrap();
        let input_reuse = infer(&m, &img, Backend::InputReuse).unwrap();
        let weight_reuse = infer(&m, &img, Backend::WeightReuse).unwrap();
        usize::from(
            input_reuse.accumulators != reference.accumulators
                || weight_reuse.accumulators != reference.accumulators,
        )
    })
    .into_iter()
    .sum();
    let elapsed = started.elapsed();
    assert_eq!(failures, 0, "{failures} of {trials} triples diverged");
    assert!(
        elapsed.as_secs() < 60,
        "equivalence suite took {elapsed:?}, budget is 1 min"
    );
    println!(
        "AC1 PASS: {trials}/{trials} randomized triples bit-exact across backends in {:.2?}",
        elapsed
    );
}

/// Sweep fixture shared by AC2/AC3: one workload-shaped conv layer driven
/// by vstripes inputs.
fn sweep_layer() -> (ModelSpec, Dims) {
    let dims = Dims::new(32, 32, 128);
    let m = gen_synthetic_model(
        dims,
        ActivationKind::Binary,
        &[LayerDef::Conv {
            r: 3,
            s: 3,
            k: 128,
            padding: Padding::Same,
        }],
        0xFEED,
    )
    .unwrap();
    (m, dims)
}

struct SweepPoint {
    p: f64,
    op_reduction: f64,
    access_reduction: f64,
}

fn run_sweep() -> Vec<SweepPoint> {
    let (m, dims) = sweep_layer();
    let conv = m.layers[0].as_conv().unwrap();
    let ps = [0.5, 0.75, 0.786, 0.9, 1.0];
    bnnsim_core::par::map_collect(&ps, |&p| {
        let img = gen_input(InputKind::VStripes(p), dims, ActivationKind::Binary, 0x5EED).unwrap();
        let mut reuse = CostCounters::new();
        let _ = conv_input_reuse(&img, conv, &mut reuse).unwrap();
        let mut base = CostCounters::new();
        let _ = conv_reference(&img, conv, &mut base).unwrap();

        // Exclude the STAGE-I first-column work from both sides.
        let ks = &conv.weights;
        let (taps, c, k) = (ks.r() * ks.s(), ks.c(), ks.k());
        let stage1_ops = reuse.full_computations * c as u64;
        let stage1_reads = reuse.full_computations * words_for(c) as u64;
        let base_ops = (dims.h * (dims.w - 1) * taps * c * k) as u64;
        let base_reads = (dims.h * (dims.w - 1) * taps * words_for(c) * k) as u64;
        let op_reduction = 1.0 - (reuse.bit_ops - stage1_ops) as f64 / base_ops as f64;
        let access_reduction =
            1.0 - (reuse.weight_words_read - stage1_reads) as f64 / base_reads as f64;
        SweepPoint {
            p,
            op_reduction,
            access_reduction,
        }
    })
}

#[test]
fn ac2_input_reuse_counter_law() {
    let points = run_sweep();
    for pt in &points {
        assert!(
            (pt.op_reduction - pt.p).abs() <= 0.02,
            "p={}: op reduction {} outside +-2%",
            pt.p,
            pt.op_reduction
        );
    }
    let at_786 = points.iter().find(|pt| pt.p == 0.786).unwrap();
    assert!(
        (at_786.op_reduction - 0.80).abs() <= 0.05,
        "op reduction {} at p=0.786 not within 5% of the 80% skip figure",
        at_786.op_reduction
    );
    println!(
        "AC2 PASS: bit-op reduction tracks p within 2% (p=0.786 -> {:.4}, vs 0.80 skip figure)",
        at_786.op_reduction
    );
}

#[test]
fn ac3_access_reduction_lags_op_reduction() {
    let points = run_sweep();
    for pt in &points {
        assert!(
            pt.access_reduction <= pt.op_reduction + 1e-12,
            "p={}: access reduction {} exceeds op reduction {}",
            pt.p,
            pt.access_reduction,
            pt.op_reduction
        );
    }
    let at_786 = points.iter().find(|pt| pt.p == 0.786).unwrap();
    assert!(
        at_786.access_reduction < at_786.op_reduction,
        "expected a strict word-granularity gap at p=0.786"
    );
    println!(
        "AC3 PASS: word-granular access reduction <= op reduction on the sweep \
         (p=0.786: access {:.4} < ops {:.4})",
        at_786.access_reduction, at_786.op_reduction
    );
}

fn random_kernel_set(rng: &mut ChaCha12Rng, r: usize, s: usize, c: usize, k: usize) -> BinaryKernelSet {
    let mut ks = BinaryKernelSet::filled(r, s, c, k, false);
    for kk in 0..k {
        for rr in 0..r {
            for ss in 0..s {
                for ch in 0..c {
                    if rng.random_bool(0.5) {
                        ks.set_bit(kk, rr, ss, ch, true);
                    }
                }
            }
        }
    }
    ks
}

fn brute_force_optimum(ks: &BinaryKernelSet) -> f64 {
    let g = build_graph(ks).unwrap();
    let n = ks.k();
    let mut best = f64::INFINITY;
    let mut perm: Vec<usize> = (0..n).collect();
    // Heap's algorithm over all n! orders.
    fn heap(
        g: &bnnsim_core::DissimilarityGraph,
        perm: &mut Vec<usize>,
        size: usize,
        best: &mut f64,
    ) {
        if size == 1 {
            let cost: f64 = perm.windows(2).map(|p| g.weight(p[0], p[1])).sum();
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for i in 0..size {
            heap(g, perm, size - 1, best);
            if size % 2 == 0 {
                perm.swap(i, size - 1);
            } else {
                perm.swap(0, size - 1);
            }
        }
    }
    heap(&g, &mut perm, n, &mut best);
    best
}

fn identity_chain_cost(ks: &BinaryKernelSet) -> f64 {
    let g = build_graph(ks).unwrap();
    (1..ks.k()).map(|i| g.weight(i - 1, i)).sum()
}

#[test]
fn ac4_reorder_optimizer_guarantees() {
    // 8-kernel graphs: plan cost bracketed by brute force and identity.
    let violations: usize = bnnsim_core::par::map_range(100, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC04_0000 + i as u64);
        let ks = random_kernel_set(&mut rng, 1, 1, 12, 8);
        let plan = make_reorder_plan(&ks, 1).unwrap();
        let optimum = brute_force_optimum(&ks);
        let identity = identity_chain_cost(&ks);
        usize::from(
            plan.chain_cost() < optimum - 1e-9 || plan.chain_cost() > identity + 1e-9,
        )
    })
    .into_iter()
    .sum();
    assert_eq!(violations, 0, "{violations} of 100 graphs broke the cost bracket");

    // 64-kernel sets: reordering never loses similarity against the same
    // boundaries, for both the blocked and the whole-layer partitioner.
    for i in 0..10u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC04_1000 + i);
        let ks = random_kernel_set(&mut rng, 3, 3, 16, 64);

        let blocked = make_blocked_reorder_plan(&ks, 64).unwrap();
        let after = kernel_similarity_for_plan(&ks, &blocked).unwrap().ratio();
        let before = kernel_similarity_identity(&ks, &blocked).unwrap().ratio();
        assert!(after >= before - 1e-12, "blocked: {after} < {before}");

        let wide = make_reorder_plan(&ks, 8).unwrap();
        let after_w = kernel_similarity_for_plan(&ks, &wide).unwrap().ratio();
        // baseline: the same partitions in ascending order
        let mut sorted_parts: Vec<Vec<u32>> = wide
            .partitions()
            .iter()
            .map(|p| {
                let mut q = p.clone();
                q.sort_unstable();
                q
            })
            .collect();
        sorted_parts.sort_by_key(|p| p[0]);
        let order: Vec<usize> = sorted_parts
            .iter()
            .flatten()
            .map(|&v| v as usize)
            .collect();
        let before_w = kernel_similarity(&ks, &order, &wide.boundaries())
            .unwrap()
            .ratio();
        assert!(after_w >= before_w - 1e-12, "wide: {after_w} < {before_w}");
    }

    // Reordering never slows the simulated weight-reuse run.
    let cfg = ArchConfig::default();
    for i in 0..5u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC04_2000 + i);
        let dims = Dims::new(8, 8, 64);
        let m = gen_synthetic_model(
            dims,
            ActivationKind::Binary,
            &[LayerDef::Conv {
                r: 3,
                s: 3,
                k: 64,
                padding: Padding::Same,
            }],
            rng.random(),
        )
        .unwrap();
        let conv = m.layers[0].as_conv().unwrap();
        let img = gen_input(InputKind::Noise, dims, ActivationKind::Binary, rng.random()).unwrap();
        let plan = make_blocked_reorder_plan(&conv.weights, 64).unwrap();
        let identity = ReorderPlan::identity(64, 1).unwrap();
        let with_plan =
            simulate_layer(conv, &img, Backend::WeightReuse, Some(&plan), &cfg).unwrap();
        let without =
            simulate_layer(conv, &img, Backend::WeightReuse, Some(&identity), &cfg).unwrap();
        assert!(
            with_plan.total_cycles <= without.total_cycles + 1e-9,
            "reordered run slower: {} > {}",
            with_plan.total_cycles,
            without.total_cycles
        );
    }

    println!("AC4 PASS: chain-cost bracket on 100 graphs; similarity and runtime never degrade");
}

#[test]
fn ac5_revert_correctness() {
    let failures: usize = bnnsim_core::par::map_range(40, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC05_0000 + i as u64);
        let m = random_model(&mut rng, i % 2 == 1);
        let (_, dims, conv) = m.conv_layers()[0];
        let img = gen_input(
            InputKind::Noise,
            dims,
            match m.activation {
                a @ ActivationKind::Fixed { .. } => a,
                ActivationKind::Binary => ActivationKind::Binary,
            },
            rng.random(),
        )
        .unwrap();
        let plan = random_plan(&mut rng, &conv.weights);
        let mut counters = CostCounters::new();
        let reference = conv_reference(&img, conv, &mut counters).unwrap();
        let executed = conv_weight_reuse(&img, conv, &plan, &mut counters).unwrap();
        let reverted = revert_ofmaps(&executed, &plan).unwrap();
        usize::from(reverted != reference)
    })
    .into_iter()
    .sum();
    assert_eq!(failures, 0);
    println!("AC5 PASS: revert_ofmaps restores reference channel order on 40 random plans");
}

#[test]
fn ac6_similarity_calibration() {
    // Constant input: exactly 1.0.
    let constant = gen_input(
        InputKind::Constant,
        Dims::new(8, 9, 24),
        ActivationKind::Binary,
        1,
    )
    .unwrap();
    assert_eq!(input_similarity(&constant).unwrap().ratio(), 1.0);

    // iid noise at h*w*c >= 1e5: 0.5 within 0.02.
    let dims = Dims::new(40, 80, 32);
    assert!(dims.elements() >= 100_000);
    let noise = gen_input(InputKind::Noise, dims, ActivationKind::Binary, 2).unwrap();
    let noise_sim = input_similarity(&noise).unwrap().ratio();
    assert!((noise_sim - 0.5).abs() <= 0.02, "noise sim {noise_sim}");

    // Random 64-kernel similarity: 0.5 within 0.02.
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let ks = random_kernel_set(&mut rng, 3, 3, 64, 64);
    let order: Vec<usize> = (0..64).collect();
    let kernel_sim = kernel_similarity(&ks, &order, &[0]).unwrap().ratio();
    assert!((kernel_sim - 0.5).abs() <= 0.02, "kernel sim {kernel_sim}");

    println!(
        "AC6 PASS: constant=1.0000, noise={noise_sim:.4}, random kernels={kernel_sim:.4}"
    );
}

/// Kernel chain with per-bit flip probability 1-q between neighbors, so the
/// identity-order similarity concentrates at q.
fn chained_kernel_set(
    rng: &mut ChaCha12Rng,
    r: usize,
    s: usize,
    c: usize,
    k: usize,
    q: f64,
) -> BinaryKernelSet {
    let mut ks = BinaryKernelSet::filled(r, s, c, k, false);
    for rr in 0..r {
        for ss in 0..s {
            for ch in 0..c {
                if rng.random_bool(0.5) {
                    ks.set_bit(0, rr, ss, ch, true);
                }
            }
        }
    }
    for kk in 1..k {
        for rr in 0..r {
            for ss in 0..s {
                for ch in 0..c {
                    let prev = ks.bit(kk - 1, rr, ss, ch);
                    let flip = rng.random_bool(1.0 - q);
                    ks.set_bit(kk, rr, ss, ch, prev ^ flip);
                }
            }
        }
    }
    ks
}

/// Single-conv model whose kernel chain targets similarity `q`.
fn operating_point_model(activation: ActivationKind, q: f64, seed: u64) -> ModelSpec {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dims = Dims::new(32, 32, 128);
    let weights = chained_kernel_set(&mut rng, 3, 3, 128, 128, q);
    let kind = match activation {
        ActivationKind::Binary => ConvKind::Binary,
        ActivationKind::Fixed { .. } => ConvKind::Fixed,
    };
    let k = weights.k();
    let m = ModelSpec {
        input_dims: dims,
        activation,
        layers: vec![LayerSpec::Conv(ConvLayer {
            kind,
            weights,
            padding: Padding::Same,
            thresholds: vec![0; k],
            flips: vec![false; k],
        })],
        plans: std::collections::BTreeMap::new(),
    };
    m.validate().unwrap();
    m
}

#[test]
fn ac7_strategy_selection() {
    let cfg = ArchConfig::default();

    // Binary activations at roughly (0.786, 0.588): input reuse wins.
    let m_bin = operating_point_model(ActivationKind::Binary, 0.588, 0xAC07);
    let images = gen_inputs(
        InputKind::VStripes(0.786),
        m_bin.input_dims,
        ActivationKind::Binary,
        0xAC07_0001,
        4,
    )
    .unwrap();
    let sel_bin = select_strategy(&m_bin, &images, &cfg).unwrap();
    assert!(
        (sel_bin.avg_input_sim - 0.786).abs() < 0.02,
        "binary input operating point drifted: {}",
        sel_bin.avg_input_sim
    );
    assert!(
        (sel_bin.avg_kernel_sim - 0.588).abs() < 0.05,
        "kernel operating point drifted: {}",
        sel_bin.avg_kernel_sim
    );
    assert_eq!(sel_bin.choice, Backend::InputReuse);

    // Fixed activations at roughly (0.173, 0.588): weight reuse wins.
    let fixed = ActivationKind::Fixed {
        total_bits: 8,
        frac_bits: 4,
    };
    let m_fix = operating_point_model(fixed, 0.588, 0xAC07);
    let images_fix = gen_inputs(
        InputKind::VStripes(0.173),
        m_fix.input_dims,
        fixed,
        0xAC07_0002,
        4,
    )
    .unwrap();
    let sel_fix = select_strategy(&m_fix, &images_fix, &cfg).unwrap();
    assert!(
        (sel_fix.avg_input_sim - 0.173).abs() < 0.02,
        "fixed input operating point drifted: {}",
        sel_fix.avg_input_sim
    );
    assert_eq!(sel_fix.choice, Backend::WeightReuse);

    // Crossover threshold is monotone in the weight-reuse operating point.
    // Chain targets stay above 0.5: below that, multi-hop kernel pairs are
    // closer than adjacent ones and the optimizer converges to ~0.5 for any
    // target, collapsing the operating points.
    let mut crossovers = Vec::new();
    let mut kernel_points = Vec::new();
    for (i, q) in [0.55, 0.7, 0.85].into_iter().enumerate() {
        let m = operating_point_model(ActivationKind::Binary, q, 0xAC07_0100 + i as u64);
        let sel = select_strategy(&m, &images, &cfg).unwrap();
        kernel_points.push(sel.avg_kernel_sim);
        crossovers.push(sel.crossover_input_sim);
    }
    assert!(kernel_points.windows(2).all(|w| w[0] < w[1]));
    assert!(
        crossovers.windows(2).all(|w| w[0] <= w[1]),
        "crossover not monotone: {crossovers:?} at kernel points {kernel_points:?}"
    );

    println!(
        "AC7 PASS: binary (in={:.3}, ker={:.3}) -> {}, fixed (in={:.3}) -> {}, \
         crossovers {:?} monotone",
        sel_bin.avg_input_sim,
        sel_bin.avg_kernel_sim,
        sel_bin.choice,
        sel_fix.avg_input_sim,
        sel_fix.choice,
        crossovers
    );
}

#[test]
fn ac8_simulator_shape() {
    let cfg = ArchConfig::default();
    let (dims, defs) = bnnsim_core::binarynet_cifar10_arch();
    let m = gen_synthetic_model(dims, ActivationKind::Binary, &defs, 0xAC08).unwrap();

    // Speedup-vs-input-similarity: monotone for input reuse, flat for
    // weight reuse.
    let curve = speedup_curve(&m, 0.588, 41, &cfg).unwrap();
    for pair in curve.windows(2) {
        assert!(
            pair[1].speedup_input_reuse >= pair[0].speedup_input_reuse - 1e-9,
            "input-reuse curve dipped at sim {}",
            pair[1].input_sim
        );
        assert!(
            (pair[1].speedup_weight_reuse - pair[0].speedup_weight_reuse).abs() < 1e-9,
            "weight-reuse curve moved with input similarity"
        );
    }

    // Application-class ordering per workload layer: constant ("max") >=
    // image-like >= noise ("rand") speedup, and image GOPS strictly above
    // noise GOPS.
    let models = layer_models(&m, true).unwrap();
    for ((idx, layer_dims, conv), (lm, _, label)) in m.conv_layers().iter().zip(&models) {
        let _ = (idx, lm);
        let base_img = gen_input(InputKind::Noise, *layer_dims, ActivationKind::Binary, 1).unwrap();
        let baseline = simulate_layer(conv, &base_img, Backend::Reference, None, &cfg).unwrap();
        let mut speedups = Vec::new();
        let mut gops = Vec::new();
        for kind in [InputKind::Constant, InputKind::VStripes(0.786), InputKind::Noise] {
            let img = gen_input(kind, *layer_dims, ActivationKind::Binary, 2).unwrap();
            let trace = simulate_layer(conv, &img, Backend::InputReuse, None, &cfg).unwrap();
            speedups.push(baseline.total_cycles / trace.total_cycles);
            gops.push(trace.effective_gops(&cfg));
        }
        assert!(
            speedups[0] >= speedups[1] - 1e-9 && speedups[1] >= speedups[2] - 1e-9,
            "{label}: class ordering broken: {speedups:?}"
        );
        assert!(
            gops[1] > gops[2],
            "{label}: image GOPS {} not above noise GOPS {}",
            gops[1],
            gops[2]
        );
    }

    // The parametric baseline matches its own utilization accounting.
    for (lm, parts, _) in &models {
        let t = simulate_layer_parametric(lm, Backend::Reference, 0.0, *parts, &cfg);
        assert!((t.busy_cycles / t.total_cycles - t.utilization).abs() < 1e-12);
    }

    println!("AC8 PASS: monotone/flat curves and max >= img >= rand on all workload layers");
}

#[test]
fn ac9_format_roundtrip() {
    let failures: usize = bnnsim_core::par::map_range(100, |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(0xAC09_0000 + i as u64);
        let mut m = random_model(&mut rng, i % 3 == 0);
        if i % 2 == 0 {
            with_random_plans(&mut rng, &mut m);
        }
        let mut first = Vec::new();
        save_model(&m, &mut first).unwrap();
        let loaded = load_model(&mut first.as_slice()).unwrap();
        let mut second = Vec::new();
        save_model(&loaded, &mut second).unwrap();
        usize::from(first != second || loaded != m)
    })
    .into_iter()
    .sum();
    assert_eq!(failures, 0);

    // Corrupted headers produce the designated diagnostics.
    let mut rng = ChaCha12Rng::seed_from_u64(0xAC09_FFFF);
    let m = random_model(&mut rng, false);
    let mut buf = Vec::new();
    save_model(&m, &mut buf).unwrap();

    let mut bad_magic = buf.clone();
    bad_magic[2] = b'?';
    assert!(matches!(
        load_model(&mut bad_magic.as_slice()),
        Err(Error::BadMagic { .. })
    ));

    let mut bad_version = buf.clone();
    bad_version[4] = 0xFF;
    assert!(matches!(
        load_model(&mut bad_version.as_slice()),
        Err(Error::UnsupportedVersion(_))
    ));

    let mut truncated = buf.clone();
    truncated.truncate(buf.len() - 3);
    assert!(matches!(
        load_model(&mut truncated.as_slice()),
        Err(Error::Truncated(_))
    ));

    println!("AC9 PASS: 100/100 byte-identical roundtrips; corrupt headers diagnosed");
}

/// Counter law, weight reuse: excluding per-partition first kernels, the
/// bit-op ratio against baseline equals 1 - post-reorder kernel similarity.
#[test]
fn weight_reuse_counter_law() {
    for (q, seed) in [(0.55, 1u64), (0.7, 2), (0.9, 3)] {
        let mut rng = ChaCha12Rng::seed_from_u64(0xC0DE + seed);
        let dims = Dims::new(12, 12, 64);
        let ks = chained_kernel_set(&mut rng, 3, 3, 64, 64, q);
        let conv = ConvLayer {
            kind: ConvKind::Binary,
            weights: ks,
            padding: Padding::Same,
            thresholds: vec![0; 64],
            flips: vec![false; 64],
        };
        let plan = make_blocked_reorder_plan(&conv.weights, 32).unwrap();
        let img = gen_input(InputKind::Noise, dims, ActivationKind::Binary, seed).unwrap();
        let mut counters = CostCounters::new();
        let _ = conv_weight_reuse(&img, &conv, &plan, &mut counters).unwrap();

        let ks = &conv.weights;
        let params = ks.params_per_kernel() as u64;
        let positions = (dims.h * dims.w) as u64;
        // subtract the per-partition first kernels computed in full
        let stage2_ops = counters.bit_ops - plan.partition_count() as u64 * positions * params;
        let stage2_baseline =
            positions * (ks.k() - plan.partition_count()) as u64 * params;
        let reduction = 1.0 - stage2_ops as f64 / stage2_baseline as f64;
        let sim = kernel_similarity_for_plan(ks, &plan).unwrap().ratio();
        assert!(
            (reduction - sim).abs() <= 0.02,
            "q={q}: reduction {reduction} vs similarity {sim}"
        );
    }
}

/// Cross-module law: measured similarity exactly predicts the reuse
/// engines' broadcast volume.
#[test]
fn broadcast_volume_matches_similarity() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xB0AD);
    for _ in 0..10 {
        let m = random_model(&mut rng, false);
        let (_, dims, conv) = m.conv_layers()[0];
        let img = gen_input(
            InputKind::VStripes(0.7),
            dims,
            ActivationKind::Binary,
            rng.random(),
        )
        .unwrap();
        if dims.w < 2 {
            continue;
        }
        let stats = input_similarity(&img).unwrap();
        let mut counters = CostCounters::new();
        let _ = conv_input_reuse(&img, conv, &mut counters).unwrap();
        assert_eq!(counters.broadcasts, stats.compared - stats.matches);

        let plan = default_plan(&conv.weights).unwrap();
        if conv.weights.k() > plan.partition_count() {
            let kstats = kernel_similarity_for_plan(&conv.weights, &plan).unwrap();
            let mut wc = CostCounters::new();
            let _ = conv_weight_reuse(&img, conv, &plan, &mut wc).unwrap();
            assert_eq!(wc.broadcasts, kstats.compared - kstats.matches);
        }
    }
}

/// The dataset report aggregates per-layer stats consistently: every ratio
/// sits in [0, 1] and min <= avg <= max.
#[test]
fn dataset_report_shape() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xD5);
    let m = random_model(&mut rng, false);
    let images: Vec<Activation> = (0..3).map(|_| random_input(&mut rng, &m)).collect();
    if m.input_dims.w < 2 {
        return;
    }
    let report = dataset_report(&m, &images, images.len()).unwrap();
    let seen: BTreeSet<usize> = report.layers.iter().map(|l| l.layer_index).collect();
    assert_eq!(seen.len(), report.layers.len());
    for layer in &report.layers {
        assert!(layer.input.min <= layer.input.avg && layer.input.avg <= layer.input.max);
        assert!(layer.input.min >= 0.0 && layer.input.max <= 1.0);
        assert!(layer.kernel_reordered >= 0.0 && layer.kernel_reordered <= 1.0);
    }
}

/// Double-check the hand example from the weight-reuse figure at suite
/// level: executed-order accumulators, then revert, equal the reference.
#[test]
fn weight_reuse_stage_example() {
    let input = Activation::Binary(
        BinaryTensor::from_signs(Dims::new(1, 1, 3), &[1, 1, 1]).unwrap(),
    );
    let conv = ConvLayer {
        kind: ConvKind::Binary,
        weights: BinaryKernelSet::from_signs(1, 1, 3, 2, &[1, 1, -1, 1, -1, -1]).unwrap(),
        padding: Padding::None,
        thresholds: vec![0, 0],
        flips: vec![false, false],
    };
    let plan = ReorderPlan::new(vec![vec![1, 0]], 0.0).unwrap();
    let mut counters = CostCounters::new();
    let executed = conv_weight_reuse(&input, &conv, &plan, &mut counters).unwrap();
    // executed position 0 is kernel 1
    assert_eq!(executed.at(0, 0, 0), -1);
    assert_eq!(executed.at(0, 0, 1), 1);
    let reverted = revert_ofmaps(&executed, &plan).unwrap();
    assert_eq!(reverted.at(0, 0, 0), 1);
    assert_eq!(reverted.at(0, 0, 1), -1);
}
