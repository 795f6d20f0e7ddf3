//! Precision, recall, F1 and hallucination rate; pooled report tables; API
//! cost estimates.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::corpus::ChatTranscript;
use crate::sargo::{Category, ConfusionCounts, PairScore};

/// Set name used for scores that carry none.
pub const DEFAULT_SET: &str = "all";

pub const MICRO_NOTE: &str = "Metrics are micro-averaged: confusion counts are summed across pairs \
(and across categories for Overall) before precision, recall and F1 are computed.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub hallucination_rate: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricSet {
    /// Builds the set from precision and recall alone; the hallucination rate
    /// is `1 - precision`, snapped to 12 decimals so a decimal precision such
    /// as 0.805 yields the double nearest 0.195 rather than 0.19499999999999995.
    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        MetricSet {
            precision,
            recall,
            f1: f1(precision, recall),
            hallucination_rate: ((1.0 - precision) * 1e12).round() / 1e12,
        }
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Zero denominators give zero. The hallucination rate is `fp / (tp + fp)`,
/// which equals `1 - precision` but is computed from the counts so that it
/// carries no extra rounding; with nothing retrieved it is 1.
pub fn compute_metrics(c: &ConfusionCounts) -> MetricSet {
    let precision = ratio(c.tp, c.retrieved());
    let recall = ratio(c.tp, c.relevant());
    let hallucination_rate = if c.retrieved() == 0 {
        1.0
    } else {
        ratio(c.fp, c.retrieved())
    };
    MetricSet {
        precision,
        recall,
        f1: f1(precision, recall),
        hallucination_rate,
    }
}

/// Three decimals, as in the report tables.
pub fn fmt3(x: f64) -> String {
    format!("{x:.3}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    ByCategory,
    Overall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("no scored pairs to report")]
    EmptyReport,
    #[error("prices must be non-negative (got {0})")]
    NegativePrice(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub set: String,
    pub category: String,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub hallucination_rate: f64,
    pub pairs: usize,
    pub counts: ConfusionCounts,
}

impl ReportRow {
    fn new(set: &str, category: &str, pairs: usize, counts: ConfusionCounts) -> Self {
        let m = compute_metrics(&counts);
        ReportRow {
            set: set.to_string(),
            category: category.to_string(),
            recall: m.recall,
            precision: m.precision,
            f1: m.f1,
            hallucination_rate: m.hallucination_rate,
            pairs,
            counts,
        }
    }

    pub fn metrics(&self) -> MetricSet {
        MetricSet {
            precision: self.precision,
            recall: self.recall,
            f1: self.f1,
            hallucination_rate: self.hallucination_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub averaging: String,
    pub rows: Vec<ReportRow>,
    /// Groups where several gold values were folded into one machine value.
    pub backwards_aggregations: u32,
}

pub fn pool_and_report(scores: &[PairScore], grouping: Grouping) -> Result<Report, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    let mut by_set: IndexMap<&str, Vec<&PairScore>> = IndexMap::new();
    for s in scores {
        by_set
            .entry(s.set.as_deref().unwrap_or(DEFAULT_SET))
            .or_default()
            .push(s);
    }

    let mut rows = Vec::new();
    for (set, members) in &by_set {
        if grouping == Grouping::ByCategory {
            for cat in Category::ALL {
                let pooled: ConfusionCounts = members.iter().map(|s| s.get(cat)).sum();
                rows.push(ReportRow::new(set, cat.label(), members.len(), pooled));
            }
        }
        let overall: ConfusionCounts = members.iter().map(|s| s.total()).sum();
        rows.push(ReportRow::new(set, "Overall", members.len(), overall));
    }

    Ok(Report {
        averaging: "micro".into(),
        rows,
        backwards_aggregations: scores.iter().map(|s| s.backwards_aggregations).sum(),
    })
}

impl Report {
    pub fn render(&self, format: ReportFormat) -> Result<String, MetricsError> {
        Ok(match format {
            ReportFormat::Table => self.to_table(),
            ReportFormat::Csv => self.to_csv()?,
            ReportFormat::Json => {
                let mut s = serde_json::to_string_pretty(self).expect("report serializes");
                s.push('\n');
                s
            }
        })
    }

    pub fn to_table(&self) -> String {
        let header = ["Set", "Category", "Recall", "Precision", "F1", "Halluc.", "TP", "FP", "TN", "FN"];
        let body: Vec<[String; 10]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.set.clone(),
                    r.category.clone(),
                    fmt3(r.recall),
                    fmt3(r.precision),
                    fmt3(r.f1),
                    fmt3(r.hallucination_rate),
                    r.counts.tp.to_string(),
                    r.counts.fp.to_string(),
                    r.counts.tn.to_string(),
                    r.counts.fn_.to_string(),
                ]
            })
            .collect();
        let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, cell) in width.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }

        let mut out = String::new();
        let line = |cells: &[&str], out: &mut String| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&width)
                .enumerate()
                .map(|(i, (c, w))| {
                    if i < 2 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                })
                .collect();
            out.push_str(parts.join("  ").trim_end());
            out.push('\n');
        };
        line(&header, &mut out);
        let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
        out.push_str(&rule.join("  "));
        out.push('\n');
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&cells, &mut out);
        }
        out.push('\n');
        out.push_str(MICRO_NOTE);
        out.push('\n');
        if self.backwards_aggregations > 0 {
            let _ = writeln!(
                out,
                "Note: {} aggregation group(s) fold several gold values into one machine value.",
                self.backwards_aggregations
            );
        }
        out
    }

    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "set", "category", "recall", "precision", "f1", "hallucination_rate", "tp", "fp", "tn", "fn",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.set.clone(),
                r.category.clone(),
                fmt3(r.recall),
                fmt3(r.precision),
                fmt3(r.f1),
                fmt3(r.hallucination_rate),
                r.counts.tp.to_string(),
                r.counts.fp.to_string(),
                r.counts.tn.to_string(),
                r.counts.fn_.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 strings"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostInputs {
    pub pair_count: u64,
    pub median_input_tokens: u64,
    pub median_output_tokens: u64,
    /// Currency per 1,000 input tokens.
    pub input_price: f64,
    /// Currency per 1,000 output tokens.
    pub output_price: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub pair_count: u64,
    pub median_input_tokens: u64,
    pub median_output_tokens: u64,
    pub input_price: f64,
    pub output_price: f64,
    pub total: f64,
}

impl CostEstimate {
    /// Whole currency units with thousands separators, e.g. `$16,097`.
    pub fn display_total(&self) -> String {
        let whole = self.total.round() as u64;
        let digits = whole.to_string();
        let mut out = String::from("$");
        for (i, ch) in digits.chars().enumerate() {
            if i > 0 && (digits.len() - i).is_multiple_of(3) {
                out.push(',');
            }
            out.push(ch);
        }
        out
    }
}

pub fn estimate_cost(inputs: &CostInputs) -> Result<CostEstimate, MetricsError> {
    for p in [inputs.input_price, inputs.output_price] {
        if p.is_nan() || p < 0.0 {
            return Err(MetricsError::NegativePrice(p));
        }
    }
    let per_pair = inputs.median_input_tokens as f64 * inputs.input_price
        + inputs.median_output_tokens as f64 * inputs.output_price;
    Ok(CostEstimate {
        pair_count: inputs.pair_count,
        median_input_tokens: inputs.median_input_tokens,
        median_output_tokens: inputs.median_output_tokens,
        input_price: inputs.input_price,
        output_price: inputs.output_price,
        total: inputs.pair_count as f64 * per_pair / 1000.0,
    })
}

/// Integer median; for an even count, the mean of the middle two rounded down.
pub fn median(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Median input and output tokens per pair across transcripts.
pub fn median_tokens(transcripts: &[ChatTranscript]) -> (u64, u64) {
    let ins: Vec<u64> = transcripts.iter().map(|t| t.input_tokens).collect();
    let outs: Vec<u64> = transcripts.iter().map(|t| t.output_tokens).collect();
    (median(&ins), median(&outs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(set: Option<&str>, uc: ConfusionCounts, tools: ConfusionCounts) -> PairScore {
        PairScore {
            pair_id: "p".into(),
            set: set.map(str::to_string),
            data_accessed: ConfusionCounts::new(1, 0, 0, 0),
            use_cases: uc,
            tools,
            backwards_aggregations: 0,
        }
    }

    #[test]
    fn degenerate_counts() {
        let m = compute_metrics(&ConfusionCounts::default());
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.hallucination_rate, 1.0);
    }

    #[test]
    fn outgroup_counts() {
        let m = compute_metrics(&ConfusionCounts::new(4, 0, 0, 8));
        assert_eq!(m.precision, 1.0);
        assert_eq!(fmt3(m.recall), "0.333");
        assert_eq!(fmt3(m.f1), "0.500");
    }

    #[test]
    fn two_pair_pooling() {
        let a = score(None, ConfusionCounts::new(1, 0, 0, 1), ConfusionCounts::default());
        let b = score(None, ConfusionCounts::new(1, 1, 0, 0), ConfusionCounts::default());
        let r = pool_and_report(&[a, b], Grouping::ByCategory).unwrap();
        let uc = r.rows.iter().find(|r| r.category == "Use Cases").unwrap();
        assert_eq!(uc.precision, 2.0 / 3.0);
        assert_eq!(uc.recall, 2.0 / 3.0);
        assert!((uc.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn sets_keep_input_order_and_overall_last() {
        let e = ConfusionCounts::default();
        let r = pool_and_report(
            &[score(Some("Initial"), e, e), score(Some("Evaluation"), e, e)],
            Grouping::ByCategory,
        )
        .unwrap();
        let labels: Vec<_> = r.rows.iter().map(|r| (r.set.as_str(), r.category.as_str())).collect();
        assert_eq!(labels[0], ("Initial", "Data Accessed"));
        assert_eq!(labels[3], ("Initial", "Overall"));
        assert_eq!(labels[7], ("Evaluation", "Overall"));
        let overall = pool_and_report(&[score(None, e, e)], Grouping::Overall).unwrap();
        assert_eq!(overall.rows.len(), 1);
    }

    #[test]
    fn empty_report_rejected() {
        assert!(matches!(
            pool_and_report(&[], Grouping::Overall),
            Err(MetricsError::EmptyReport)
        ));
    }

    #[test]
    fn formats() {
        let s = score(Some("a,b"), ConfusionCounts::new(4, 1, 0, 1), ConfusionCounts::default());
        let r = pool_and_report(&[s], Grouping::ByCategory).unwrap();
        let csv = r.to_csv().unwrap();
        assert!(csv.starts_with("set,category,recall,precision,f1,hallucination_rate,tp,fp,tn,fn\n"));
        assert!(csv.contains("\"a,b\",Use Cases,0.800,0.800,0.800,0.200,4,1,0,1\n"), "{csv}");
        let table = r.to_table();
        assert!(table.contains("micro-averaged"));
        let json: serde_json::Value = serde_json::from_str(&r.render(ReportFormat::Json).unwrap()).unwrap();
        assert_eq!(json["rows"][1]["counts"]["fn"], 1);
    }

    #[test]
    fn cost_cases() {
        let c = |n, i, o, pi, po| {
            estimate_cost(&CostInputs {
                pair_count: n,
                median_input_tokens: i,
                median_output_tokens: o,
                input_price: pi,
                output_price: po,
            })
            .unwrap()
        };
        assert_eq!(c(0, 54_600, 246, 0.0024, 0.0024).total, 0.0);
        assert_eq!(c(1, 1_000, 0, 1.0, 0.0).total, 1.0);
        assert_eq!(c(1, 1_000, 0, 1.0, 0.0).display_total(), "$1");
        assert_eq!(c(122_292, 54_600, 246, 0.0024, 0.0024).display_total(), "$16,097");
        assert!(estimate_cost(&CostInputs {
            pair_count: 1,
            median_input_tokens: 1,
            median_output_tokens: 1,
            input_price: -1.0,
            output_price: 0.0,
        })
        .is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[]), 0);
        assert_eq!(median(&[5, 1, 3]), 3);
        assert_eq!(median(&[1, 2, 3, 10]), 2);
    }
}
