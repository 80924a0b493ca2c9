//! Estimate-versus-reference comparison tables with machine-checkable
//! pass/fail. A row never decides its own fate: the verdict comes from the
//! recorded threshold, so re-running a report on the same numbers is
//! idempotent and CI can key off the aggregate.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Threshold {
    /// |estimate − reference| ≤ tol · |reference|
    RelTol { tol: f64 },
    /// |estimate − reference| ≤ tol
    AbsTol { tol: f64 },
    /// lo ≤ estimate ≤ hi; the reference is informational
    Band { lo: f64, hi: f64 },
    /// estimate ≤ max (one-sided claims like "autocorrelation below −0.2")
    UpperBound { max: f64 },
    /// estimate ≥ min
    LowerBound { min: f64 },
}

impl Threshold {
    pub fn admits(&self, estimate: f64, reference: f64) -> bool {
        match *self {
            Threshold::RelTol { tol } => (estimate - reference).abs() <= tol * reference.abs(),
            Threshold::AbsTol { tol } => (estimate - reference).abs() <= tol,
            Threshold::Band { lo, hi } => estimate >= lo && estimate <= hi,
            Threshold::UpperBound { max } => estimate <= max,
            Threshold::LowerBound { min } => estimate >= min,
        }
    }

    fn describe(&self) -> String {
        match *self {
            Threshold::RelTol { tol } => format!("rel {:.3}", tol),
            Threshold::AbsTol { tol } => format!("abs {}", tol),
            Threshold::Band { lo, hi } => format!("band [{lo}, {hi}]"),
            Threshold::UpperBound { max } => format!("<= {max}"),
            Threshold::LowerBound { min } => format!(">= {min}"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Row {
    pub key: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub reference: f64,
    /// (estimate − reference) / |reference|, or the plain difference when the
    /// reference is zero.
    pub rel_error: f64,
    pub threshold: Threshold,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<Row>,
}

impl ComparisonReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failed(&self) -> Vec<&Row> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    /// One line per row, fixed layout, deterministic.
    pub fn render(&self) -> String {
        let key_w = self.rows.iter().map(|r| r.key.len()).max().unwrap_or(4).max(4);
        let mut out = String::new();
        for r in &self.rows {
            let err = match r.stderr {
                Some(e) => format!(" ± {e:.3e}"),
                None => String::new(),
            };
            let _ = writeln!(
                out,
                "{} {:<key_w$}  est {:.6}{}  ref {:.6}  rel {:+.4}  [{}]",
                if r.pass { "PASS" } else { "FAIL" },
                r.key,
                r.estimate,
                err,
                r.reference,
                r.rel_error,
                r.threshold.describe(),
            );
        }
        out
    }
}

/// Join estimates with their references and thresholds by key. The three key
/// sets must agree exactly; anything missing or unmatched is an error rather
/// than a silently passing report. Row order follows the estimates.
pub fn compare(
    estimates: &[(&str, f64, Option<f64>)],
    references: &[(&str, f64)],
    thresholds: &[(&str, Threshold)],
) -> Result<ComparisonReport> {
    let mut rows = Vec::with_capacity(estimates.len());
    let find = |side: &str, keys: &[&str], key: &str| -> Result<usize> {
        let mut hit = None;
        for (i, k) in keys.iter().enumerate() {
            if *k == key {
                if hit.is_some() {
                    return Err(Error::Comparison(format!("duplicate {side} key {key:?}")));
                }
                hit = Some(i);
            }
        }
        hit.ok_or_else(|| Error::Comparison(format!("no {side} entry for key {key:?}")))
    };
    let ref_keys: Vec<&str> = references.iter().map(|(k, _)| *k).collect();
    let thr_keys: Vec<&str> = thresholds.iter().map(|(k, _)| *k).collect();
    let est_keys: Vec<&str> = estimates.iter().map(|(k, _, _)| *k).collect();
    for (key, estimate, stderr) in estimates {
        find("estimate", &est_keys, key)?; // rejects duplicates
        let reference = references[find("reference", &ref_keys, key)?].1;
        let threshold = thresholds[find("threshold", &thr_keys, key)?].1;
        let rel_error = if reference != 0.0 {
            (estimate - reference) / reference.abs()
        } else {
            estimate - reference
        };
        rows.push(Row {
            key: key.to_string(),
            estimate: *estimate,
            stderr: *stderr,
            reference,
            rel_error,
            threshold,
            pass: threshold.admits(*estimate, reference),
        });
    }
    for k in &ref_keys {
        find("estimate", &est_keys, k)?;
    }
    for k in &thr_keys {
        find("estimate", &est_keys, k)?;
    }
    Ok(ComparisonReport { rows })
}
