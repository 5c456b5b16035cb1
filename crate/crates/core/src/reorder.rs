//! Offline weight-reuse optimization: build a kernel dissimilarity graph,
//! split it into balanced partitions, and order each partition along a cheap
//! (greedy) Hamiltonian path so consecutive kernels differ as little as
//! possible.

use crate::bits::BinaryKernelSet;
use crate::error::{Error, Result};
use crate::par;

/// Largest number of kernels permuted inside one partition. Bounds the
/// sequence-information and ofmap-revert overhead on the accelerator.
pub const MAX_REORDER_RANGE: usize = 64;

/// Dense symmetric dissimilarity graph over kernels: `weight(i, j)` is the
/// fraction of differing parameter bits between kernels i and j.
#[derive(Clone, Debug)]
pub struct DissimilarityGraph {
    n: usize,
    weights: Vec<f64>,
}

impl DissimilarityGraph {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Build directly from a weight matrix (row-major, n*n). Used by tests
    /// and by callers that already have pairwise distances.
    pub fn from_weights(n: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n * n {
            return Err(Error::LengthMismatch {
                context: "dissimilarity matrix",
                left: weights.len(),
                right: n * n,
            });
        }
        for i in 0..n {
            if weights[i * n + i] != 0.0 {
                return Err(Error::InvalidParameter(
                    "dissimilarity diagonal must be zero".into(),
                ));
            }
            for j in 0..i {
                if weights[i * n + j] != weights[j * n + i] {
                    return Err(Error::InvalidParameter(
                        "dissimilarity matrix must be symmetric".into(),
                    ));
                }
            }
        }
        Ok(Self { n, weights })
    }
}

/// Dissimilarity between two kernels: differing bits over total parameters.
pub fn kernel_dissimilarity(ks: &BinaryKernelSet, a: usize, b: usize) -> f64 {
    f64::from(ks.kernel_hamming(a, b)) / ks.params_per_kernel() as f64
}

/// Graph over all kernels of the set.
pub fn build_graph(ks: &BinaryKernelSet) -> Result<DissimilarityGraph> {
    if ks.k() < 2 {
        return Err(Error::InvalidParameter(
            "dissimilarity graph needs at least 2 kernels".into(),
        ));
    }
    let idx: Vec<usize> = (0..ks.k()).collect();
    Ok(build_graph_subset(ks, &idx))
}

/// Graph over a subset of kernels; vertex i of the graph is `subset[i]`.
pub fn build_graph_subset(ks: &BinaryKernelSet, subset: &[usize]) -> DissimilarityGraph {
    let n = subset.len();
    let mut weights = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = kernel_dissimilarity(ks, subset[i], subset[j]);
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
    }
    DissimilarityGraph { n, weights }
}

fn intra_weight(g: &DissimilarityGraph, parts: &[Vec<usize>]) -> f64 {
    let mut sum = 0.0;
    for part in parts {
        for (i, &a) in part.iter().enumerate() {
            for &b in &part[i + 1..] {
                sum += g.weight(a, b);
            }
        }
    }
    sum
}

fn total_weight(g: &DissimilarityGraph) -> f64 {
    let mut sum = 0.0;
    for i in 0..g.n {
        for j in (i + 1)..g.n {
            sum += g.weight(i, j);
        }
    }
    sum
}

/// Sum of edge weights crossing partition boundaries. The partitioner
/// maximizes this, which keeps similar kernels together.
pub fn partition_objective(g: &DissimilarityGraph, parts: &[Vec<usize>]) -> f64 {
    total_weight(g) - intra_weight(g, parts)
}

/// Split the graph into `k_parts` equal-size vertex sets maximizing the
/// summed weight of inter-partition links.
///
/// Exhaustive over all balanced partitions when the graph has at most 8
/// vertices; otherwise pairwise-swap hill climbing from contiguous chunks
/// (Kernighan-Lin style), which terminates at a local maximum under
/// cross-partition swaps. Ties break toward the first candidate in a
/// canonical enumeration, so results are deterministic.
pub fn partition_graph(g: &DissimilarityGraph, k_parts: usize) -> Result<Vec<Vec<usize>>> {
    let n = g.vertex_count();
    if k_parts == 0 || n % k_parts != 0 {
        return Err(Error::InvalidParameter(format!(
            "partition count {k_parts} must divide vertex count {n}"
        )));
    }
    if k_parts == 1 {
        return Ok(vec![(0..n).collect()]);
    }
    let size = n / k_parts;
    if n <= 8 {
        return Ok(partition_exhaustive(g, k_parts, size));
    }
    Ok(partition_swap_climb(g, k_parts, size))
}

fn partition_exhaustive(g: &DissimilarityGraph, k_parts: usize, size: usize) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    let mut parts: Vec<Vec<usize>> = vec![Vec::new(); k_parts];
    let mut assigned = vec![false; n];

    // Canonical enumeration: each block is opened by the smallest vertex not
    // yet assigned, which enumerates unordered balanced partitions once.
    fn recurse(
        g: &DissimilarityGraph,
        size: usize,
        parts: &mut Vec<Vec<usize>>,
        assigned: &mut Vec<bool>,
        done: usize,
        best: &mut Option<(f64, Vec<Vec<usize>>)>,
    ) {
        let n = g.vertex_count();
        if done == n {
            let obj = partition_objective(g, parts);
            if best.as_ref().is_none_or(|(b, _)| obj > *b) {
                *best = Some((obj, parts.clone()));
            }
            return;
        }
        // Find the open block (first with room); if all full, open a new one
        // with the smallest unassigned vertex.
        let open = parts.iter().position(|p| !p.is_empty() && p.len() < size);
        match open {
            Some(pi) => {
                let start = parts[pi].last().copied().unwrap_or(0);
                for v in (start + 1)..n {
                    if !assigned[v] {
                        assigned[v] = true;
                        parts[pi].push(v);
                        recurse(g, size, parts, assigned, done + 1, best);
                        parts[pi].pop();
                        assigned[v] = false;
                    }
                }
            }
            None => {
                let pi = parts.iter().position(|p| p.is_empty()).unwrap();
                let v = (0..n).find(|&v| !assigned[v]).unwrap();
                assigned[v] = true;
                parts[pi].push(v);
                recurse(g, size, parts, assigned, done + 1, best);
                parts[pi].pop();
                assigned[v] = false;
            }
        }
    }

    recurse(g, size, &mut parts, &mut assigned, 0, &mut best);
    best.expect("at least one balanced partition exists").1
}

fn partition_swap_climb(g: &DissimilarityGraph, k_parts: usize, size: usize) -> Vec<Vec<usize>> {
    let n = g.vertex_count();
    let mut member: Vec<usize> = (0..n).map(|v| v / size).collect();
    // part_weight[v][p] = sum of w(v, x) over x currently in partition p
    let mut part_weight = vec![0.0f64; n * k_parts];
    for v in 0..n {
        for x in 0..n {
            part_weight[v * k_parts + member[x]] += g.weight(v, x);
        }
    }

    loop {
        let mut best_gain = 0.0f64;
        let mut best_pair: Option<(usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let (pi, pj) = (member[i], member[j]);
                if pi == pj {
                    continue;
                }
                // Change in inter-partition weight if i and j swap sides.
                let gain = part_weight[i * k_parts + pi] - part_weight[i * k_parts + pj]
                    + part_weight[j * k_parts + pj]
                    - part_weight[j * k_parts + pi]
                    + 2.0 * g.weight(i, j);
                if gain > best_gain {
                    best_gain = gain;
                    best_pair = Some((i, j));
                }
            }
        }
        let Some((i, j)) = best_pair else { break };
        let (pi, pj) = (member[i], member[j]);
        for v in 0..n {
            part_weight[v * k_parts + pi] += g.weight(v, j) - g.weight(v, i);
            part_weight[v * k_parts + pj] += g.weight(v, i) - g.weight(v, j);
        }
        member[i] = pj;
        member[j] = pi;
    }

    let mut parts = vec![Vec::new(); k_parts];
    for v in 0..n {
        parts[member[v]].push(v);
    }
    // Canonical output order: by smallest member.
    parts.sort_by_key(|p| p[0]);
    parts
}

/// Nearest-neighbor Hamiltonian path over `subset`, tried from every start
/// vertex, returning the cheapest (ties to the lowest start / lowest next
/// index). Falls back to the subset's ascending order when greedy does
/// worse, so the result never costs more than the identity order.
pub fn greedy_hamiltonian(g: &DissimilarityGraph, subset: &[usize]) -> (Vec<usize>, f64) {
    assert!(!subset.is_empty(), "hamiltonian path needs vertices");
    let m = subset.len();
    if m == 1 {
        return (subset.to_vec(), 0.0);
    }

    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    let identity_cost = chain_cost_of(g, &sorted);

    let mut best_path: Option<Vec<usize>> = None;
    let mut best_cost = f64::INFINITY;
    for &start in &sorted {
        let mut visited = vec![false; m];
        let mut path = Vec::with_capacity(m);
        let start_pos = sorted.iter().position(|&v| v == start).unwrap();
        visited[start_pos] = true;
        path.push(start);
        let mut cur = start;
        let mut cost = 0.0;
        for _ in 1..m {
            let mut next: Option<(usize, usize, f64)> = None;
            for (pos, &v) in sorted.iter().enumerate() {
                if visited[pos] {
                    continue;
                }
                let d = g.weight(cur, v);
                if next.is_none_or(|(_, _, nd)| d < nd) {
                    next = Some((pos, v, d));
                }
            }
            let (pos, v, d) = next.unwrap();
            visited[pos] = true;
            path.push(v);
            cost += d;
            cur = v;
        }
        if cost < best_cost {
            best_cost = cost;
            best_path = Some(path);
        }
    }

    let (path, cost) = (best_path.unwrap(), best_cost);
    if cost > identity_cost {
        (sorted, identity_cost)
    } else {
        (path, cost)
    }
}

fn chain_cost_of(g: &DissimilarityGraph, path: &[usize]) -> f64 {
    path.windows(2).map(|p| g.weight(p[0], p[1])).sum()
}

/// Kernel execution order produced by the reorder optimizer: equal-size
/// partitions, each an ordered path of original kernel indices. The
/// concatenation of the partitions is the execution order; read as a map
/// from executed ofmap position to original kernel index it is also the
/// revert permutation.
#[derive(Clone, PartialEq, Debug)]
pub struct ReorderPlan {
    partitions: Vec<Vec<u32>>,
    chain_cost: f64,
}

impl ReorderPlan {
    pub fn new(partitions: Vec<Vec<u32>>, chain_cost: f64) -> Result<Self> {
        if partitions.is_empty() {
            return Err(Error::InvalidParameter("plan has no partitions".into()));
        }
        let size = partitions[0].len();
        if size == 0 || size > MAX_REORDER_RANGE {
            return Err(Error::InvalidParameter(format!(
                "partition size {size} outside 1..={MAX_REORDER_RANGE}"
            )));
        }
        if partitions.iter().any(|p| p.len() != size) {
            return Err(Error::InvalidParameter(
                "plan partitions must be equal-sized".into(),
            ));
        }
        let k = size * partitions.len();
        let mut seen = vec![false; k];
        for &v in partitions.iter().flatten() {
            let v = v as usize;
            if v >= k || seen[v] {
                return Err(Error::InvalidParameter(
                    "plan partitions must form a permutation of kernel indices".into(),
                ));
            }
            seen[v] = true;
        }
        Ok(Self {
            partitions,
            chain_cost,
        })
    }

    /// Identity plan: kernels in original order, split into `k_parts`.
    pub fn identity(k: usize, k_parts: usize) -> Result<Self> {
        if k_parts == 0 || k % k_parts != 0 {
            return Err(Error::InvalidParameter(format!(
                "partition count {k_parts} must divide kernel count {k}"
            )));
        }
        let size = k / k_parts;
        let partitions = (0..k_parts)
            .map(|p| ((p * size) as u32..((p + 1) * size) as u32).collect())
            .collect();
        // chain cost unknown without weights; identity plans are used where
        // only the order matters, cost is recomputed when needed
        Self::new(partitions, 0.0)
    }

    pub fn kernel_count(&self) -> usize {
        self.partitions.len() * self.partitions[0].len()
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn partition_size(&self) -> usize {
        self.partitions[0].len()
    }

    pub fn partitions(&self) -> &[Vec<u32>] {
        &self.partitions
    }

    pub fn chain_cost(&self) -> f64 {
        self.chain_cost
    }

    /// Kernel indices in execution order (partitions concatenated). The
    /// entry at executed position p is the original kernel index, i.e. this
    /// is the revert map.
    pub fn execution_order(&self) -> Vec<u32> {
        self.partitions.iter().flatten().copied().collect()
    }

    /// Partition start offsets within the execution order.
    pub fn boundaries(&self) -> Vec<usize> {
        let size = self.partition_size();
        (0..self.partition_count()).map(|p| p * size).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.execution_order()
            .iter()
            .enumerate()
            .all(|(i, &v)| i == v as usize)
    }

    pub fn validate_for(&self, k: usize) -> Result<()> {
        if self.kernel_count() != k {
            return Err(Error::PlanMismatch(format!(
                "plan covers {} kernels, layer has {k}",
                self.kernel_count()
            )));
        }
        Ok(())
    }

    /// Bits needed on-chip to describe the permutation: one index of
    /// `ceil(log2(partition size))` bits per kernel.
    pub fn sequence_info_bits(&self) -> usize {
        let size = self.partition_size();
        let bits_per = usize::BITS as usize - (size - 1).leading_zeros() as usize;
        self.kernel_count() * bits_per.max(1)
    }
}

/// Algorithm-1 plan over the whole kernel set: balanced `k_parts`-way graph
/// partition, then a greedy shortest Hamiltonian path per partition.
/// Requires `k_parts` to divide the kernel count with partitions of at most
/// 64 kernels. Per-partition path searches run independently (in parallel
/// when the `parallel` feature is on); assembly order is deterministic.
pub fn make_reorder_plan(ks: &BinaryKernelSet, k_parts: usize) -> Result<ReorderPlan> {
    let k = ks.k();
    if k_parts == 0 || k % k_parts != 0 {
        return Err(Error::InvalidParameter(format!(
            "partition count {k_parts} must divide kernel count {k}"
        )));
    }
    if k / k_parts > MAX_REORDER_RANGE {
        return Err(Error::InvalidParameter(format!(
            "partition size {} exceeds reorder range {MAX_REORDER_RANGE}",
            k / k_parts
        )));
    }
    if k == 1 {
        return ReorderPlan::new(vec![vec![0]], 0.0);
    }
    let g = build_graph(ks)?;
    let parts = partition_graph(&g, k_parts)?;
    let paths = par::map_collect(&parts, |part| greedy_hamiltonian(&g, part));
    let chain_cost = paths.iter().map(|(_, c)| c).sum();
    let partitions = paths
        .into_iter()
        .map(|(p, _)| p.into_iter().map(|v| v as u32).collect())
        .collect();
    ReorderPlan::new(partitions, chain_cost)
}

/// Blocked plan: consecutive blocks of `range` kernels each form one graph
/// with a single Hamiltonian path. This is the shipped default for workload
/// configs whose partition parameters read as "range 64, applied K times";
/// [`make_reorder_plan`] covers the whole-layer reading of the same
/// parameters.
pub fn make_blocked_reorder_plan(ks: &BinaryKernelSet, range: usize) -> Result<ReorderPlan> {
    let k = ks.k();
    if range == 0 || range > MAX_REORDER_RANGE {
        return Err(Error::InvalidParameter(format!(
            "block range {range} outside 1..={MAX_REORDER_RANGE}"
        )));
    }
    if k % range != 0 {
        return Err(Error::InvalidParameter(format!(
            "block range {range} must divide kernel count {k}"
        )));
    }
    let blocks: Vec<usize> = (0..k / range).collect();
    let paths = par::map_collect(&blocks, |&b| {
        let subset: Vec<usize> = (b * range..(b + 1) * range).collect();
        if range == 1 {
            return (subset, 0.0);
        }
        let g = build_graph_subset(ks, &subset);
        let (local_path, cost) = greedy_hamiltonian(&g, &(0..range).collect::<Vec<_>>());
        (local_path.into_iter().map(|v| subset[v]).collect(), cost)
    });
    let chain_cost = paths.iter().map(|(_, c)| c).sum();
    let partitions = paths
        .into_iter()
        .map(|(p, _)| p.into_iter().map(|v| v as u32).collect())
        .collect();
    ReorderPlan::new(partitions, chain_cost)
}

/// Default plan for a layer: blocked with range `min(k, 64)` when that
/// divides k, otherwise whole-layer with the smallest valid partition count.
pub fn default_plan(ks: &BinaryKernelSet) -> Result<ReorderPlan> {
    let k = ks.k();
    let range = k.min(MAX_REORDER_RANGE);
    if k % range == 0 {
        make_blocked_reorder_plan(ks, range)
    } else {
        let parts = k.div_ceil(MAX_REORDER_RANGE);
        let parts = (parts..=k).find(|p| k % p == 0).unwrap_or(k);
        make_reorder_plan(ks, parts)
    }
}
