//! Consistent-histories analysis of the interferometer.
//!
//! A history is a sequence of channel projectors at increasing slots ending in
//! a detector event. Its chain ket is obtained by alternating the slot
//! evolution (probe couplings included) with the history's projectors; the
//! decoherence matrix is the Gram matrix of the chain kets of a framework.
//! Probabilities are only handed out for consistent frameworks, and
//! inferences from different frameworks are only combined when their common
//! refinement is itself consistent.

mod framework;
mod guard;

use std::collections::BTreeSet;
use std::fmt;

pub use framework::{check_commuting, Atom, Decomposition, Framework};
pub use guard::{inference_guard, GuardAnswer, InferenceGuard, Query, Verdict};

use crate::error::{Error, Result};
use crate::evolution::Experiment;
use crate::interferometer::InterferometerSpec;
use crate::linalg::{diagonal_projector, inner, CMatrix, CVector, ZERO};

/// Default tolerance for medium consistency.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Conditions less likely than this are treated as impossible.
pub const ZERO_PROBABILITY: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Sum of the listed channel projectors.
    Channels(Vec<String>),
    /// Occupied channels other than the listed ones.
    Complement(Vec<String>),
}

/// A channel-subspace projector at one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorExpr {
    pub slot: usize,
    pub kind: ExprKind,
}

impl ProjectorExpr {
    pub fn channels(slot: usize, labels: &[&str]) -> Self {
        Self {
            slot,
            kind: ExprKind::Channels(labels.iter().map(|s| s.to_string()).collect()),
        }
    }

    pub fn complement_of(slot: usize, labels: &[&str]) -> Self {
        Self {
            slot,
            kind: ExprKind::Complement(labels.iter().map(|s| s.to_string()).collect()),
        }
    }

    /// Parse `B+C`.
    pub fn parse(slot: usize, text: &str) -> Result<Self> {
        let labels: Vec<&str> = text.split('+').map(str::trim).collect();
        if labels.iter().any(|l| !crate::interferometer::is_ident(l)) {
            return Err(Error::FrameworkSyntax(format!("bad projector {text:?}")));
        }
        Ok(Self::channels(slot, &labels))
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ExprKind::Channels(c) => c.join("+"),
            ExprKind::Complement(c) => format!("~({})", c.join(",")),
        }
    }

    /// Occupied channels covered by the projector.
    pub fn resolve(&self, spec: &InterferometerSpec) -> Result<BTreeSet<usize>> {
        match &self.kind {
            ExprKind::Channels(labels) => {
                if labels.is_empty() {
                    return Err(Error::FrameworkSyntax("empty projector".into()));
                }
                spec.resolve_set(labels.iter().map(String::as_str), self.slot)
            }
            ExprKind::Complement(labels) => {
                let listed = spec.resolve_set(labels.iter().map(String::as_str), self.slot)?;
                Ok(spec
                    .occupied(self.slot)
                    .into_iter()
                    .filter(|c| !listed.contains(c))
                    .collect())
            }
        }
    }
}

impl fmt::Display for ProjectorExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.label(), self.slot)
    }
}

/// Projector matrix on the channel space.
pub fn projector_of(spec: &InterferometerSpec, expr: &ProjectorExpr) -> Result<CMatrix> {
    let channels = expr.resolve(spec)?;
    Ok(diagonal_projector(spec.n_channels(), channels))
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub events: Vec<ProjectorExpr>,
    pub detector: String,
}

impl History {
    pub fn new(events: Vec<ProjectorExpr>, detector: &str) -> Self {
        Self {
            events,
            detector: detector.to_string(),
        }
    }
}

/// Zero every joint amplitude whose channel is outside `keep`.
fn project(exp: &Experiment, keep: &BTreeSet<usize>, state: &mut CVector) {
    let space = exp.space();
    for i in 0..space.dim() {
        if !keep.contains(&space.split(i).0) {
            state[i] = ZERO;
        }
    }
}

/// Chain ket for per-slot channel sets and a detector, all pre-resolved.
fn chain(exp: &Experiment, events: &[(usize, &BTreeSet<usize>)], detector: usize) -> CVector {
    let mut state = exp.prepared_state();
    for (_, set) in events.iter().filter(|(s, _)| *s == 0) {
        project(exp, set, &mut state);
    }
    for t in 1..=exp.spec().final_slot() {
        state = exp.apply_slot(t, &state);
        for (_, set) in events.iter().filter(|(s, _)| *s == t) {
            project(exp, set, &mut state);
        }
    }
    let det: BTreeSet<usize> = [exp.spec().detector_channel(detector)].into();
    project(exp, &det, &mut state);
    state
}

/// Unnormalised chain ket of a history; its squared norm is the history's
/// probability.
pub fn chain_ket(exp: &Experiment, history: &History) -> Result<CVector> {
    let spec = exp.spec();
    let detector = spec.detector_index(&history.detector)?;
    let mut last = None;
    let mut resolved = Vec::with_capacity(history.events.len());
    for e in &history.events {
        if last.is_some_and(|s| e.slot <= s) {
            return Err(Error::InvalidParameter(format!(
                "history slots must increase strictly ({e})"
            )));
        }
        last = Some(e.slot);
        resolved.push((e.slot, e.resolve(spec)?));
    }
    let events: Vec<(usize, &BTreeSet<usize>)> = resolved.iter().map(|(s, c)| (*s, c)).collect();
    Ok(chain(exp, &events, detector))
}

/// History of a framework: one atom index per decomposition plus a detector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistoryKey {
    pub atoms: Vec<usize>,
    pub detector: usize,
}

/// Gram matrix `D(Y, Y') = ⟨chain(Y'), chain(Y)⟩` over a framework's histories.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoherenceMatrix {
    pub keys: Vec<HistoryKey>,
    pub labels: Vec<String>,
    pub detectors: Vec<String>,
    pub matrix: CMatrix,
}

impl DecoherenceMatrix {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// History probabilities (the diagonal).
    pub fn probabilities(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.matrix[(i, i)].re).collect()
    }

    pub fn trace(&self) -> f64 {
        self.probabilities().iter().sum()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn entry(&self, a: &str, b: &str) -> Option<num_complex::Complex64> {
        Some(self.matrix[(self.index_of(a)?, self.index_of(b)?)])
    }

    /// Smallest eigenvalue of the Hermitian matrix.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.matrix
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Sub-block of the histories ending in one detector.
    pub fn restricted_to(&self, detector: &str) -> Result<DecoherenceMatrix> {
        let d = self
            .detectors
            .iter()
            .position(|x| x == detector)
            .ok_or_else(|| Error::UnknownDetector(detector.to_string()))?;
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.keys[i].detector == d)
            .collect();
        Ok(DecoherenceMatrix {
            keys: idx.iter().map(|&i| self.keys[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            detectors: self.detectors.clone(),
            matrix: self.matrix.select_rows(&idx).select_columns(&idx),
        })
    }
}

fn history_keys(framework: &Framework, n_detectors: usize) -> Vec<HistoryKey> {
    let mut keys = vec![HistoryKey {
        atoms: vec![],
        detector: 0,
    }];
    for d in framework.decompositions() {
        keys = keys
            .into_iter()
            .flat_map(|k| {
                (0..d.atoms.len()).map(move |a| {
                    let mut atoms = k.atoms.clone();
                    atoms.push(a);
                    HistoryKey { atoms, detector: 0 }
                })
            })
            .collect();
    }
    keys.into_iter()
        .flat_map(|k| {
            (0..n_detectors).map(move |detector| HistoryKey {
                atoms: k.atoms.clone(),
                detector,
            })
        })
        .collect()
}

fn history_label(framework: &Framework, key: &HistoryKey, detectors: &[&str]) -> String {
    let decomps = framework.decompositions();
    let mut parts: Vec<String> = key
        .atoms
        .iter()
        .zip(decomps)
        .map(|(&a, d)| {
            if decomps.len() > 1 {
                format!("slot{}:{}", d.slot, d.atoms[a].label)
            } else {
                d.atoms[a].label.clone()
            }
        })
        .collect();
    parts.push(detectors[key.detector].to_string());
    format!("({})", parts.join(","))
}

/// Chain kets of all histories of the framework, in lexicographic order of
/// (atoms per slot, detector).
pub fn framework_chain_kets(
    exp: &Experiment,
    framework: &Framework,
) -> Vec<(HistoryKey, String, CVector)> {
    let spec = exp.spec();
    let detectors = spec.detectors();
    history_keys(framework, detectors.len())
        .into_iter()
        .map(|key| {
            let events: Vec<(usize, &BTreeSet<usize>)> = key
                .atoms
                .iter()
                .zip(framework.decompositions())
                .map(|(&a, d)| (d.slot, &d.atoms[a].channels))
                .collect();
            let ket = chain(exp, &events, key.detector);
            let label = history_label(framework, &key, &detectors);
            (key, label, ket)
        })
        .collect()
}

pub fn decoherence_matrix(exp: &Experiment, framework: &Framework) -> DecoherenceMatrix {
    let kets = framework_chain_kets(exp, framework);
    let n = kets.len();
    let matrix = CMatrix::from_fn(n, n, |i, j| inner(&kets[j].2, &kets[i].2));
    DecoherenceMatrix {
        keys: kets.iter().map(|k| k.0.clone()).collect(),
        labels: kets.iter().map(|k| k.1.clone()).collect(),
        detectors: exp
            .spec()
            .detectors()
            .iter()
            .map(|d| d.to_string())
            .collect(),
        matrix,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyReport {
    pub consistent: bool,
    pub max_offdiag: f64,
    /// Pair of history labels at the largest off-diagonal, when inconsistent.
    pub witness: Option<(String, String)>,
}

/// Medium consistency: every `|D(Y, Y')|`, `Y ≠ Y'`, at most `tol` times the
/// largest diagonal entry.
pub fn check_consistency(dm: &DecoherenceMatrix, tol: f64) -> ConsistencyReport {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = dm.len();
    let scale = dm.probabilities().into_iter().fold(0.0, f64::max);
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)));
    let max = pairs
        .clone()
        .map(|(i, j)| dm.matrix[(i, j)].norm())
        .fold(0.0, f64::max);
    // ties (up to rounding) go to the first pair in history order
    let arg = pairs
        .into_iter()
        .find(|&(i, j)| dm.matrix[(i, j)].norm() >= max * (1.0 - 1e-9));
    let consistent = max <= tol * scale;
    ConsistencyReport {
        consistent,
        max_offdiag: max,
        witness: if consistent {
            None
        } else {
            arg.map(|(i, j)| (dm.labels[i].clone(), dm.labels[j].clone()))
        },
    }
}

/// `Pr(atom at slot | detector)` for every atom of a consistent framework.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    pub detector: String,
    /// `(slot, atom label, probability)`.
    pub entries: Vec<(usize, String, f64)>,
}

impl Conditionals {
    /// Probability for an atom label (first slot carrying it).
    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(_, l, _)| l == label)
            .map(|&(_, _, p)| p)
    }
}

fn require_consistent(dm: &DecoherenceMatrix, tol: f64) -> Result<()> {
    let report = check_consistency(dm, tol);
    if report.consistent {
        Ok(())
    } else {
        Err(Error::InconsistentFramework {
            max_offdiag: report.max_offdiag,
            witness: report.witness.unwrap_or_default(),
        })
    }
}

/// Conditional probabilities of each atom given a detector click. Refused
/// for inconsistent frameworks.
pub fn conditional_distribution(
    exp: &Experiment,
    framework: &Framework,
    detector: &str,
    tol: f64,
) -> Result<Conditionals> {
    let d = exp.spec().detector_index(detector)?;
    let dm = decoherence_matrix(exp, framework);
    require_consistent(&dm, tol)?;
    conditionals_from(&dm, framework, d, detector)
}

/// Conditional probabilities given a detector click, for the family that
/// applies the framework's decompositions only on the branch ending in that
/// detector (every other detector outcome is left unrefined). Histories
/// ending in different detectors are orthogonal, so only the sub-block of
/// that detector has to be consistent.
pub fn branch_conditional_distribution(
    exp: &Experiment,
    framework: &Framework,
    detector: &str,
    tol: f64,
) -> Result<Conditionals> {
    let d = exp.spec().detector_index(detector)?;
    let dm = decoherence_matrix(exp, framework);
    require_consistent(&dm.restricted_to(detector)?, tol)?;
    conditionals_from(&dm, framework, d, detector)
}

fn conditionals_from(
    dm: &DecoherenceMatrix,
    framework: &Framework,
    d: usize,
    detector: &str,
) -> Result<Conditionals> {
    let probs = dm.probabilities();
    let given: f64 = (0..dm.len())
        .filter(|&i| dm.keys[i].detector == d)
        .map(|i| probs[i])
        .sum();
    if given < ZERO_PROBABILITY {
        return Err(Error::ZeroProbabilityCondition(detector.to_string()));
    }
    let mut entries = Vec::new();
    for (k, decomp) in framework.decompositions().iter().enumerate() {
        for (a, atom) in decomp.atoms.iter().enumerate() {
            let joint: f64 = (0..dm.len())
                .filter(|&i| dm.keys[i].detector == d && dm.keys[i].atoms[k] == a)
                .map(|i| probs[i])
                .sum();
            entries.push((decomp.slot, atom.label.clone(), joint / given));
        }
    }
    Ok(Conditionals {
        detector: detector.to_string(),
        entries,
    })
}

/// Common refinement of two frameworks, provided all projectors at shared
/// slots commute and the refined family is consistent.
pub fn refine_frameworks(
    exp: &Experiment,
    f1: &Framework,
    f2: &Framework,
    tol: f64,
) -> Result<Framework> {
    let refined = framework::refine_structure(exp.spec(), f1, f2)?;
    let report = check_consistency(&decoherence_matrix(exp, &refined), tol);
    if report.consistent {
        Ok(refined)
    } else {
        Err(Error::IncompatibleFrameworks {
            max_offdiag: report.max_offdiag,
            witness: report.witness.unwrap_or_default(),
        })
    }
}
