use std::fmt::Write as _;
use std::sync::Arc;

use serde_json::{json, Value};

use super::{DetectorDistribution, OutcomeLayout, RunRecord};
use crate::error::{Error, Result};
use crate::report::{fixed17, num};

/// Counts per `(detector, probe bits)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceTable {
    layout: Arc<OutcomeLayout>,
    counts: Vec<u64>,
    total: u64,
}

impl CoincidenceTable {
    pub fn empty(layout: Arc<OutcomeLayout>) -> Self {
        let counts = vec![0; layout.n_cells()];
        Self {
            layout,
            counts,
            total: 0,
        }
    }

    pub fn layout(&self) -> &Arc<OutcomeLayout> {
        &self.layout
    }

    pub(crate) fn add_cell(&mut self, cell: usize, n: u64) {
        self.counts[cell] += n;
        self.total += n;
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, detector: usize, bits: usize) -> u64 {
        self.counts[detector * self.layout.n_bitstrings() + bits]
    }

    pub fn frequency(&self, detector: usize, bits: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.count(detector, bits) as f64 / self.total as f64
        }
    }

    /// Sum of two tables over the same layout.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.layout != other.layout {
            return Err(Error::MixedConfigurations);
        }
        Ok(Self {
            layout: Arc::clone(&self.layout),
            counts: self
                .counts
                .iter()
                .zip(&other.counts)
                .map(|(a, b)| a + b)
                .collect(),
            total: self.total + other.total,
        })
    }

    /// Detector frequencies among runs where `probe` read `value`.
    pub fn conditional_frequencies(
        &self,
        probe: &str,
        value: bool,
    ) -> Result<DetectorDistribution> {
        let k = self.layout.probe_index(probe)?;
        let nb = self.layout.n_bitstrings();
        let per: Vec<u64> = (0..self.layout.detectors.len())
            .map(|d| {
                (0..nb)
                    .filter(|b| (b >> k & 1 == 1) == value)
                    .map(|b| self.counts[d * nb + b])
                    .sum()
            })
            .collect();
        let total: u64 = per.iter().sum();
        if total == 0 {
            return Err(Error::ZeroProbabilityCondition(format!(
                "{probe}={}",
                value as u8
            )));
        }
        Ok(DetectorDistribution {
            entries: self
                .layout
                .detectors
                .iter()
                .zip(per)
                .map(|(d, c)| (d.clone(), c as f64 / total as f64))
                .collect(),
        })
    }

    /// `detector,bits,count,frequency`; header only when no runs were made.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("detector,bits,count,frequency\n");
        if self.total == 0 {
            return out;
        }
        let nb = self.layout.n_bitstrings();
        for (d, name) in self.layout.detectors.iter().enumerate() {
            for b in 0..nb {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    name,
                    self.layout.bit_assignments(b),
                    self.count(d, b),
                    fixed17(self.frequency(d, b))
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let nb = self.layout.n_bitstrings();
        let mut rows = Vec::new();
        if self.total > 0 {
            for (d, name) in self.layout.detectors.iter().enumerate() {
                for b in 0..nb {
                    rows.push(json!({
                        "detector": name,
                        "bits": self.layout.bit_string(b),
                        "count": self.count(d, b),
                        "frequency": num(self.frequency(d, b)),
                    }));
                }
            }
        }
        json!({ "total": self.total, "cells": rows })
    }
}

/// Count records that all belong to `layout`.
pub fn aggregate_coincidences(
    layout: &Arc<OutcomeLayout>,
    records: &[RunRecord],
) -> Result<CoincidenceTable> {
    let mut table = CoincidenceTable::empty(Arc::clone(layout));
    let nb = layout.n_bitstrings();
    for r in records {
        if !Arc::ptr_eq(&r.layout, layout) && *r.layout != **layout {
            return Err(Error::MixedConfigurations);
        }
        table.add_cell(r.detector * nb + r.bits, 1);
    }
    Ok(table)
}
