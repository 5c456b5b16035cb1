//! Operation and buffer-access accounting shared by all convolution engines.

/// Exact cost accounting for one or more engine runs.
///
/// Conventions, applied identically by every engine so that ratios are
/// comparable:
///
/// * `bit_ops` counts MAC-equivalent bit operations at nominal accounting:
///   each output element of the reference engine costs `r*s*c` ops per
///   kernel regardless of padding-clipped taps (the hardware computes full
///   windows and the address generator drops out-of-range results).
/// * `weight_words_read` / `ia_words_read` count 64-bit word fetches at the
///   engine's application site. A word is read when any bit in it is needed,
///   which is what makes word-granular savings lag bit-granular savings.
/// * `broadcasts` counts difference elements put on the broadcast bus
///   (STAGE-I full vectors are not differences and are not counted here).
/// * `full_computations` counts STAGE-I-style full dot products of channel
///   length, so `full_computations * c` is the op volume excluded by the
///   "first column / first kernel" carve-outs.
#[derive(Clone, Copy, Default, Debug, PartialEq, Eq)]
pub struct CostCounters {
    pub bit_ops: u64,
    pub weight_words_read: u64,
    pub ia_words_read: u64,
    pub broadcasts: u64,
    pub full_computations: u64,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Associative merge; used when per-image or per-layer runs are
    /// aggregated (possibly from different threads).
    pub fn merge(&mut self, other: &CostCounters) {
        self.bit_ops += other.bit_ops;
        self.weight_words_read += other.weight_words_read;
        self.ia_words_read += other.ia_words_read;
        self.broadcasts += other.broadcasts;
        self.full_computations += other.full_computations;
    }
}
