//! Tables of budgets against measured rates, as fixed-width text (three
//! decimals) and CSV (full precision).

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::binomial::Budget;
use crate::error::Result;
use crate::sim::experiments::DetectionOutcome;
use crate::tracking::{composed_edge_budget, EdgeMetrics};

pub const CSV_COLUMNS: [&str; 14] = [
    "method",
    "eps_prp",
    "eps_prs",
    "eps_loc",
    "eps_det",
    "eps_edge",
    "delta_prp",
    "delta_prs",
    "delta_loc",
    "delta_det",
    "delta_edge",
    "desired_fnr",
    "fnr",
    "afp",
];

/// One table row. Missing values print as `-` in text and empty in CSV.
/// `fnr` holds the measured error for detector components.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub eps_prp: Option<f64>,
    pub eps_prs: Option<f64>,
    pub eps_loc: Option<f64>,
    pub eps_det: Option<f64>,
    pub eps_edge: Option<f64>,
    pub delta_prp: Option<f64>,
    pub delta_prs: Option<f64>,
    pub delta_loc: Option<f64>,
    pub delta_det: Option<f64>,
    pub delta_edge: Option<f64>,
    pub desired_fnr: Option<f64>,
    pub fnr: Option<f64>,
    pub afp: Option<f64>,
    /// Measured rate exceeds `desired_fnr`.
    #[serde(default)]
    pub flagged: bool,
}

impl ReportRow {
    fn values(&self) -> [Option<f64>; 13] {
        [
            self.eps_prp,
            self.eps_prs,
            self.eps_loc,
            self.eps_det,
            self.eps_edge,
            self.delta_prp,
            self.delta_prs,
            self.delta_loc,
            self.delta_det,
            self.delta_edge,
            self.desired_fnr,
            self.fnr,
            self.afp,
        ]
    }

    fn flag(mut self) -> Self {
        self.flagged = matches!((self.fnr, self.desired_fnr), (Some(m), Some(d)) if m > d);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    /// Only columns with at least one value are printed. Flagged rows end
    /// with `!`.
    pub fn to_text(&self) -> String {
        let used: Vec<usize> = (0..13).filter(|&c| self.rows.iter().any(|r| r.values()[c].is_some())).collect();
        let width = self.rows.iter().map(|r| r.method.len()).max().unwrap_or(0).max(6);
        let mut out = String::new();
        if !self.title.is_empty() {
            let _ = writeln!(out, "{}", self.title);
        }
        let _ = write!(out, "{:<width$}", CSV_COLUMNS[0]);
        for &c in &used {
            let _ = write!(out, " {:>11}", CSV_COLUMNS[c + 1]);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<width$}", r.method);
            let vals = r.values();
            for &c in &used {
                match vals[c] {
                    Some(v) => {
                        let _ = write!(out, " {:>11}", fmt3(v));
                    }
                    None => {
                        let _ = write!(out, " {:>11}", "-");
                    }
                }
            }
            if r.flagged {
                out.push_str(" !");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_COLUMNS)?;
        for r in &self.rows {
            let mut rec = vec![r.method.clone()];
            rec.extend(r.values().iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

fn fmt3(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.3}")
    } else {
        v.to_string()
    }
}

/// One row per component: its budget and the measured error.
pub fn error_bars_report(outcome: &DetectionOutcome) -> Report {
    let b = &outcome.budgets;
    let rows = outcome
        .bars()
        .iter()
        .map(|&(name, budget, measured)| {
            let mut r = ReportRow { method: name.to_string(), ..Default::default() };
            match name {
                "prp" => (r.eps_prp, r.delta_prp) = (Some(b.prp.epsilon()), Some(b.prp.delta())),
                "prs" => (r.eps_prs, r.delta_prs) = (Some(b.prs.epsilon()), Some(b.prs.delta())),
                "loc" => (r.eps_loc, r.delta_loc) = (Some(b.loc.epsilon()), Some(b.loc.delta())),
                _ => (r.eps_det, r.delta_det) = (Some(budget.epsilon), Some(budget.delta)),
            }
            r.desired_fnr = Some(budget.epsilon);
            r.fnr = Some(measured);
            r.flag()
        })
        .collect();
    Report { title: "component errors".into(), rows }
}

/// A labeled set of edge metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub metrics: EdgeMetrics,
}

/// Edge-set row followed by the baselines, all held to `edge`. Rows whose
/// FNR exceeds `edge.epsilon` are flagged.
pub fn tracking_table(edge_row: &MethodMetrics, edge: Budget, baselines: &[MethodMetrics]) -> Report {
    let rows = std::iter::once(edge_row)
        .chain(baselines)
        .map(|m| {
            ReportRow {
                method: m.method.clone(),
                eps_edge: Some(edge.epsilon),
                delta_edge: Some(edge.delta),
                desired_fnr: Some(edge.epsilon),
                fnr: Some(m.metrics.fnr),
                afp: Some(m.metrics.afp),
                ..Default::default()
            }
            .flag()
        })
        .collect();
    Report { title: "edge sets".into(), rows }
}

/// One composed-guarantee row: detector and edge budgets and the metrics of
/// the edge set over estimated detections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposedRow {
    pub det: Budget,
    pub edge: Budget,
    pub metrics: EdgeMetrics,
}

pub fn composed_table(rows: &[ComposedRow]) -> Report {
    let rows = rows
        .iter()
        .map(|r| {
            let composed = composed_edge_budget(r.det, r.edge);
            ReportRow {
                method: "composed".into(),
                eps_det: Some(r.det.epsilon),
                eps_edge: Some(r.edge.epsilon),
                delta_det: Some(r.det.delta),
                delta_edge: Some(r.edge.delta),
                desired_fnr: Some(composed.epsilon),
                fnr: Some(r.metrics.fnr),
                afp: Some(r.metrics.afp),
                ..Default::default()
            }
            .flag()
        })
        .collect();
    Report { title: "composed edge sets".into(), rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(fnr: f64, afp: f64) -> EdgeMetrics {
        EdgeMetrics { fnr, afp, n_eval: 100, excluded: 0 }
    }

    #[test]
    fn desired_fnr_column() {
        let rows: Vec<ComposedRow> = [0.01, 0.005, 0.001]
            .iter()
            .map(|&e| ComposedRow { det: Budget::new(0.2, 1e-5), edge: Budget::new(e, 1e-2), metrics: m(0.1, 0.3) })
            .collect();
        let t = composed_table(&rows).to_text();
        for want in ["0.210", "0.205", "0.201"] {
            assert!(t.contains(want), "{t}");
        }
    }

    #[test]
    fn zero_edge_budget_keeps_detector_value() {
        let r = composed_table(&[ComposedRow {
            det: Budget::new(0.2, 0.1),
            edge: Budget::new(0.0, 0.0),
            metrics: m(0.0, 0.0),
        }]);
        assert_eq!(r.rows[0].desired_fnr, Some(0.2));
    }

    #[test]
    fn tracking_flags_and_csv() {
        let edge = MethodMetrics { method: "edge".into(), metrics: m(0.004, 0.445) };
        let base = vec![
            MethodMetrics { method: "top-1".into(), metrics: m(0.012, 0.012) },
            MethodMetrics { method: "top-2".into(), metrics: m(0.004, 0.502) },
        ];
        let r = tracking_table(&edge, Budget::new(0.005, 0.01), &base);
        assert_eq!(r.rows.iter().map(|r| r.flagged).collect::<Vec<_>>(), [false, true, false]);
        let csv = r.to_csv().unwrap();
        let first = csv.lines().next().unwrap();
        assert_eq!(first, CSV_COLUMNS.join(","));
        assert!(csv.contains("top-1,,,,,0.005,,,,,0.01,0.005,0.012,0.012"));
        assert_eq!(tracking_table(&edge, Budget::new(0.005, 0.01), &[]).rows.len(), 1);
    }

    #[test]
    fn csv_keeps_full_precision() {
        let r = tracking_table(
            &MethodMetrics { method: "edge".into(), metrics: m(1.0 / 3.0, 0.1) },
            Budget::new(0.5, 0.1),
            &[],
        );
        let csv = r.to_csv().unwrap();
        let v: f64 = csv.lines().nth(1).unwrap().split(',').nth(12).unwrap().parse().unwrap();
        assert_eq!(v, 1.0 / 3.0);
        assert!(r.to_text().contains("0.333"));
    }
}
