//! Tabular report records with deterministic CSV and JSON emission.
//!
//! Column order is fixed by the builder, floats print with exactly four
//! decimals, and equal inputs produce byte-identical output in both formats.
//! JSON output is an array of objects keyed by column name.

use std::io::Write;

use crate::arch::{CurvePoint, SimTrace, StrategySelection};
use crate::counters::CostCounters;
use crate::error::{Error, Result};
use crate::model::{LayerSpec, ModelSpec};
use crate::similarity::SimilarityReport;

#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Str(String),
    Int(i64),
    UInt(u64),
    Float(f64),
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Str(v.to_string())
    }
}
impl From<String> for Value {
    fn from(v: String) -> Self {
        Value::Str(v)
    }
}
impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}
impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::UInt(v)
    }
}
impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::UInt(v as u64)
    }
}
impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidParameter(format!(
                "unknown report format: {other}"
            ))),
        }
    }
}

/// Homogeneous record table: fixed columns, row-major values.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<Value>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match column count"
        );
        self.rows.push(row);
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    fn format_value(v: &Value) -> String {
        match v {
            Value::Str(s) => s.clone(),
            Value::Int(i) => i.to_string(),
            Value::UInt(u) => u.to_string(),
            Value::Float(f) => format!("{f:.4}"),
        }
    }

    fn csv_escape(field: &str) -> String {
        if field.contains([',', '"', '\n']) {
            format!("\"{}\"", field.replace('"', "\"\""))
        } else {
            field.to_string()
        }
    }

    pub fn to_csv(&self, sink: &mut impl Write) -> Result<()> {
        let header: Vec<String> = self.columns.iter().map(|c| Self::csv_escape(c)).collect();
        writeln!(sink, "{}", header.join(","))?;
        for row in &self.rows {
            let fields: Vec<String> = row
                .iter()
                .map(|v| Self::csv_escape(&Self::format_value(v)))
                .collect();
            writeln!(sink, "{}", fields.join(","))?;
        }
        Ok(())
    }

    fn json_escape(field: &str) -> String {
        let mut out = String::with_capacity(field.len() + 2);
        for ch in field.chars() {
            match ch {
                '"' => out.push_str("\\\""),
                '\\' => out.push_str("\\\\"),
                '\n' => out.push_str("\\n"),
                '\r' => out.push_str("\\r"),
                '\t' => out.push_str("\\t"),
                c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                c => out.push(c),
            }
        }
        out
    }

    pub fn to_json(&self, sink: &mut impl Write) -> Result<()> {
        writeln!(sink, "[")?;
        for (ri, row) in self.rows.iter().enumerate() {
            let fields: Vec<String> = self
                .columns
                .iter()
                .zip(row)
                .map(|(col, v)| {
                    let key = Self::json_escape(col);
                    match v {
                        Value::Str(s) => format!("\"{key}\": \"{}\"", Self::json_escape(s)),
                        Value::Int(i) => format!("\"{key}\": {i}"),
                        Value::UInt(u) => format!("\"{key}\": {u}"),
                        Value::Float(f) => format!("\"{key}\": {f:.4}"),
                    }
                })
                .collect();
            let comma = if ri + 1 < self.rows.len() { "," } else { "" };
            writeln!(sink, "  {{{}}}{comma}", fields.join(", "))?;
        }
        writeln!(sink, "]")?;
        Ok(())
    }
}

/// Emit a table in the requested format. Output depends only on the records
/// and format, never on environment or time.
pub fn emit_report(table: &Table, format: ReportFormat, sink: &mut impl Write) -> Result<()> {
    match format {
        ReportFormat::Csv => table.to_csv(sink),
        ReportFormat::Json => table.to_json(sink),
    }
}

/// Similarity report in the per-layer min/avg/max column shape, with both
/// the identity-order and reordered kernel figures.
pub fn similarity_table(report: &SimilarityReport) -> Table {
    let mut t = Table::new(&[
        "layer",
        "images",
        "min_input_sim",
        "avg_input_sim",
        "max_input_sim",
        "kernel_sim_identity",
        "kernel_sim_reordered",
    ]);
    for layer in &report.layers {
        t.push_row(vec![
            layer.label.as_str().into(),
            report.images.into(),
            layer.input.min.into(),
            layer.input.avg.into(),
            layer.input.max.into(),
            layer.kernel_identity.into(),
            layer.kernel_reordered.into(),
        ]);
    }
    t.push_row(vec![
        "all".into(),
        report.images.into(),
        report.overall_input.min.into(),
        report.overall_input.avg.into(),
        report.overall_input.max.into(),
        report.overall_kernel_identity.into(),
        report.overall_kernel_reordered.into(),
    ]);
    t
}

/// Workload summary: one row per layer with dims, weight size and the plan
/// partition parameters where present.
pub fn workload_table(m: &ModelSpec) -> Table {
    let mut t = Table::new(&[
        "layer",
        "input_h",
        "input_w",
        "r",
        "s",
        "c",
        "k",
        "weight_kbits",
        "plan_range",
        "plan_partitions",
    ]);
    let dims = m.layer_input_dims();
    let mut conv_no = 0;
    for (i, layer) in m.layers.iter().enumerate() {
        match layer {
            LayerSpec::Conv(conv) => {
                conv_no += 1;
                let ks = &conv.weights;
                let (range, parts) = match m.plans.get(&i) {
                    Some(p) => (p.partition_size() as u64, p.partition_count() as u64),
                    None => (0, 0),
                };
                t.push_row(vec![
                    format!("conv{conv_no}").into(),
                    dims[i].h.into(),
                    dims[i].w.into(),
                    ks.r().into(),
                    ks.s().into(),
                    ks.c().into(),
                    ks.k().into(),
                    conv.weight_bits().div_ceil(1024).into(),
                    range.into(),
                    parts.into(),
                ]);
            }
            LayerSpec::MaxPool => {
                t.push_row(vec![
                    "pool".into(),
                    dims[i].h.into(),
                    dims[i].w.into(),
                    0usize.into(),
                    0usize.into(),
                    0usize.into(),
                    0usize.into(),
                    0u64.into(),
                    0u64.into(),
                    0u64.into(),
                ]);
            }
        }
    }
    t
}

/// Baseline-vs-reuse counter comparison rows.
pub fn compare_table(rows: &[(String, String, CostCounters, CostCounters)]) -> Table {
    let mut t = Table::new(&[
        "layer",
        "backend",
        "baseline_bit_ops",
        "reuse_bit_ops",
        "ops_saved_pct",
        "baseline_weight_words",
        "reuse_weight_words",
        "weight_access_saved_pct",
        "broadcasts",
        "full_computations",
    ]);
    for (layer, backend, base, reuse) in rows {
        let ops_saved = 100.0 * (1.0 - reuse.bit_ops as f64 / base.bit_ops as f64);
        let access_saved =
            100.0 * (1.0 - reuse.weight_words_read as f64 / base.weight_words_read as f64);
        t.push_row(vec![
            layer.as_str().into(),
            backend.as_str().into(),
            base.bit_ops.into(),
            reuse.bit_ops.into(),
            ops_saved.into(),
            base.weight_words_read.into(),
            reuse.weight_words_read.into(),
            access_saved.into(),
            reuse.broadcasts.into(),
            reuse.full_computations.into(),
        ]);
    }
    t
}

/// Per-layer simulation trace rows.
pub fn trace_table(rows: &[(String, SimTrace, f64, f64)]) -> Table {
    let mut t = Table::new(&[
        "layer",
        "strategy",
        "load_cycles",
        "check_cycles",
        "broadcast_cycles",
        "accumulate_cycles",
        "normalize_cycles",
        "total_cycles",
        "utilization",
        "speedup_vs_baseline",
        "effective_gops",
    ]);
    for (layer, trace, speedup, gops) in rows {
        t.push_row(vec![
            layer.as_str().into(),
            trace.strategy.to_string().into(),
            trace.phases.load.into(),
            trace.phases.check.into(),
            trace.phases.broadcast.into(),
            trace.phases.accumulate.into(),
            trace.phases.normalize.into(),
            trace.total_cycles.into(),
            trace.utilization.into(),
            (*speedup).into(),
            (*gops).into(),
        ]);
    }
    t
}

/// Speedup-vs-similarity sweep rows.
pub fn curve_table(points: &[CurvePoint]) -> Table {
    let mut t = Table::new(&["input_sim", "speedup_input_reuse", "speedup_weight_reuse"]);
    for p in points {
        t.push_row(vec![
            p.input_sim.into(),
            p.speedup_input_reuse.into(),
            p.speedup_weight_reuse.into(),
        ]);
    }
    t
}

/// Strategy-selection evidence: per-layer rows plus a totals row carrying
/// the decision and the crossover threshold.
pub fn selection_table(sel: &StrategySelection) -> Table {
    let mut t = Table::new(&[
        "layer",
        "input_sim",
        "kernel_sim",
        "cycles_baseline",
        "cycles_input_reuse",
        "cycles_weight_reuse",
        "choice",
        "crossover_input_sim",
    ]);
    for layer in &sel.per_layer {
        t.push_row(vec![
            layer.label.as_str().into(),
            layer.input_sim.into(),
            layer.kernel_sim.into(),
            layer.cycles_baseline.into(),
            layer.cycles_input_reuse.into(),
            layer.cycles_weight_reuse.into(),
            "".into(),
            "".into(),
        ]);
    }
    t.push_row(vec![
        "total".into(),
        sel.avg_input_sim.into(),
        sel.avg_kernel_sim.into(),
        sel.total_baseline.into(),
        sel.total_input_reuse.into(),
        sel.total_weight_reuse.into(),
        sel.choice.to_string().into(),
        sel.crossover_input_sim.into(),
    ]);
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let t = Table::new(&["a", "b"]);
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n");
    }

    #[test]
    fn emission_is_deterministic() {
        let mut t = Table::new(&["name", "value"]);
        t.push_row(vec!["x".into(), 0.123456f64.into()]);
        t.push_row(vec!["y".into(), 2u64.into()]);
        let mut a = Vec::new();
        let mut b = Vec::new();
        emit_report(&t, ReportFormat::Csv, &mut a).unwrap();
        emit_report(&t, ReportFormat::Csv, &mut b).unwrap();
        assert_eq!(a, b);
        assert!(String::from_utf8(a).unwrap().contains("x,0.1235"));

        let mut j = Vec::new();
        emit_report(&t, ReportFormat::Json, &mut j).unwrap();
        let text = String::from_utf8(j).unwrap();
        assert!(text.contains("\"name\": \"x\""));
        assert!(text.contains("\"value\": 0.1235"));
    }

    #[test]
    fn csv_escaping() {
        let mut t = Table::new(&["a"]);
        t.push_row(vec!["x,y\"z".into()]);
        let mut buf = Vec::new();
        t.to_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a\n\"x,y\"\"z\"\n");
    }

    #[test]
    fn workload_summary_has_eight_rows() {
        let (dims, defs) = crate::model::binarynet_cifar10_arch();
        let m = crate::model::gen_synthetic_model(
            dims,
            crate::model::ActivationKind::Binary,
            &defs,
            1,
        )
        .unwrap();
        let t = workload_table(&m);
        assert_eq!(t.rows().len(), 8);
    }
}
