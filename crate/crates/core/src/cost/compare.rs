use serde::{Deserialize, Serialize};

use super::{analyze, CostError, CostReport};
use crate::model_ir::ArchSpec;

/// Per-column ratios against the worst row of a comparison, so the worst
/// model reads `1x` and better models read above one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub flops: f64,
    pub params: f64,
    pub input_elems: f64,
    pub compute_io: f64,
}

/// Hardware measurements echoed next to analytic columns. They are inputs,
/// never computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRow {
    pub arch: String,
    pub accuracy: Option<f64>,
    pub throughput_vps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub arch: String,
    pub flops: u64,
    pub params: u64,
    pub input_elems: u64,
    pub compute_io: f64,
    pub multipliers: Multipliers,
    pub measured: Option<MeasuredRow>,
    pub throughput_multiplier: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn lower_is_better(values: &[f64]) -> impl Fn(f64) -> f64 {
    let worst = values.iter().cloned().fold(f64::MIN, f64::max);
    move |v| worst / v
}

fn higher_is_better(values: &[f64]) -> impl Fn(f64) -> f64 {
    let worst = values.iter().cloned().fold(f64::MAX, f64::min);
    move |v| v / worst
}

/// Builds the comparison table for already analyzed models, rows in the
/// given order.
pub fn compare_reports(reports: &[CostReport]) -> Comparison {
    let col = |f: fn(&CostReport) -> f64| reports.iter().map(f).collect::<Vec<_>>();
    let flops = lower_is_better(&col(|r| r.total_flops as f64));
    let params = lower_is_better(&col(|r| r.total_params as f64));
    let input = lower_is_better(&col(|r| r.input_elems as f64));
    let cio = higher_is_better(&col(|r| r.compute_io));
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            arch: r.arch.clone(),
            flops: r.total_flops,
            params: r.total_params,
            input_elems: r.input_elems,
            compute_io: r.compute_io,
            multipliers: Multipliers {
                flops: flops(r.total_flops as f64),
                params: params(r.total_params as f64),
                input_elems: input(r.input_elems as f64),
                compute_io: cio(r.compute_io),
            },
            measured: None,
            throughput_multiplier: None,
        })
        .collect();
    Comparison { rows }
}

pub fn compare(archs: &[ArchSpec]) -> Result<Comparison, CostError> {
    let reports = archs.iter().map(analyze).collect::<Result<Vec<_>, _>>()?;
    Ok(compare_reports(&reports))
}

/// Reads an `arch,accuracy,throughput_vps` file of measurements. Empty
/// cells stay absent; a header-only file yields no rows.
pub fn read_measured<R: std::io::Read>(input: R) -> Result<Vec<MeasuredRow>, csv::Error> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input).deserialize().collect()
}

impl Comparison {
    /// Attaches measured columns by architecture name. Rows without a
    /// measurement keep analytic columns only.
    pub fn with_measured(mut self, measured: &[MeasuredRow]) -> Self {
        for row in &mut self.rows {
            row.measured = measured.iter().find(|m| m.arch == row.arch).cloned();
        }
        let throughputs: Vec<f64> = self
            .rows
            .iter()
            .filter_map(|r| r.measured.as_ref().and_then(|m| m.throughput_vps))
            .collect();
        if !throughputs.is_empty() {
            let norm = higher_is_better(&throughputs);
            for row in &mut self.rows {
                row.throughput_multiplier = row.measured.as_ref().and_then(|m| m.throughput_vps).map(&norm);
            }
        }
        self
    }

    pub fn row(&self, arch: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.arch == arch)
    }
}
