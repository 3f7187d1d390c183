//! Grid search over beam-splitter angles and phases for points where a
//! framework is consistent and assigns a target event a high conditional
//! probability.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{ParamRange, Scope};
use crate::error::{Error, Result};
use crate::evolution::Experiment;
use crate::histories::{
    check_consistency, decoherence_matrix, ConsistencyReport, Framework, ProjectorExpr,
    ZERO_PROBABILITY,
};
use crate::interferometer::{InterferometerSpec, NodeKind};
use crate::report::num;

/// Event `EXPR[@slot]|DETECTOR` whose conditional probability is scanned.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanTarget {
    pub labels: Vec<String>,
    pub slot: Option<usize>,
    pub detector: String,
}

impl ScanTarget {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || {
            Error::FrameworkSyntax(format!(
                "bad scan target {text:?}, expected EXPR[@slot]|DETECTOR"
            ))
        };
        let (event, detector) = text.split_once('|').ok_or_else(bad)?;
        let (event, slot) = match event.split_once('@') {
            Some((e, s)) => (
                e,
                Some(
                    s.trim()
                        .trim_start_matches("slot")
                        .parse::<usize>()
                        .map_err(|_| bad())?,
                ),
            ),
            None => (event, None),
        };
        let labels: Vec<String> = event.split('+').map(|s| s.trim().to_string()).collect();
        let detector = detector.trim().to_string();
        if labels.iter().any(|l| !crate::interferometer::is_ident(l))
            || !crate::interferometer::is_ident(&detector)
        {
            return Err(bad());
        }
        Ok(Self {
            labels,
            slot,
            detector,
        })
    }

    pub fn label(&self) -> String {
        format!("{}|{}", self.labels.join("+"), self.detector)
    }
}

#[derive(Debug, Clone)]
pub struct ScanSpec {
    pub base: InterferometerSpec,
    pub params: Vec<ParamRange>,
    /// Framework text, re-parsed against every grid point.
    pub framework: String,
    pub target: ScanTarget,
    pub min_probability: f64,
    pub tol: f64,
    pub scope: Scope,
}

/// Evaluation of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPoint {
    /// `(NODE.param, value)` in sweep order.
    pub values: Vec<(String, f64)>,
    /// `None` when the conditioning detector never clicks.
    pub probability: Option<f64>,
    pub full_max_offdiag: f64,
    pub full_consistent: bool,
    pub branch_max_offdiag: f64,
    pub branch_consistent: bool,
    pub hit: bool,
}

impl ScanPoint {
    pub fn to_json(&self) -> Value {
        json!({
            "params": Value::Object(self.values.iter().map(|(k, v)| (k.clone(), num(*v))).collect()),
            "probability": self.probability.map(num),
            "full": { "consistent": self.full_consistent, "max_offdiag": num(self.full_max_offdiag) },
            "branch": { "consistent": self.branch_consistent, "max_offdiag": num(self.branch_max_offdiag) },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanReport {
    pub target: String,
    pub framework: String,
    pub scope: Scope,
    pub points: usize,
    pub hits: Vec<ScanPoint>,
}

fn grid(params: &[ParamRange]) -> Vec<Vec<f64>> {
    params.iter().fold(vec![vec![]], |acc, p| {
        acc.into_iter()
            .flat_map(|prefix| {
                p.values.iter().map(move |&v| {
                    let mut next = prefix.clone();
                    next.push(v);
                    next
                })
            })
            .collect()
    })
}

fn apply(
    base: &InterferometerSpec,
    params: &[ParamRange],
    values: &[f64],
) -> Result<InterferometerSpec> {
    let mut spec = base.clone();
    for (p, &v) in params.iter().zip(values) {
        let node = spec
            .node_index(&p.node)
            .ok_or_else(|| Error::UnknownNode(p.node.clone()))?;
        let NodeKind::BeamSplitter { theta, phi } = spec.nodes()[node].kind else {
            return Err(Error::InvalidParameter(format!(
                "{} is not a beam splitter",
                p.node
            )));
        };
        spec = match p.param.as_str() {
            "theta" => spec.with_beamsplitter(&p.node, v, phi)?,
            _ => spec.with_beamsplitter(&p.node, theta, v)?,
        };
    }
    Ok(spec)
}

/// Target probability and full / branch consistency at one parameter setting.
pub fn evaluate_point(
    spec: &InterferometerSpec,
    scan: &ScanSpec,
) -> Result<(Option<f64>, ConsistencyReport, ConsistencyReport)> {
    let exp = Experiment::from_spec(spec.clone())?;
    let framework = Framework::parse(spec, &scan.framework)?;
    let target = &scan.target;
    let d = spec.detector_index(&target.detector)?;
    let slot = match target.slot {
        Some(s) => s,
        None => match framework.decompositions() {
            [only] => only.slot,
            _ => {
                return Err(Error::FrameworkSyntax(
                    "scan target needs @slot for a multi-slot framework".into(),
                ))
            }
        },
    };
    let labels: Vec<&str> = target.labels.iter().map(String::as_str).collect();
    let channels = ProjectorExpr::channels(slot, &labels).resolve(spec)?;
    let k = framework
        .decompositions()
        .iter()
        .position(|dec| dec.slot == slot)
        .ok_or_else(|| {
            Error::FrameworkSyntax(format!("framework has no decomposition at slot {slot}"))
        })?;
    let atoms: BTreeSet<usize> = framework.decompositions()[k]
        .atoms
        .iter()
        .enumerate()
        .filter(|(_, a)| a.channels.is_subset(&channels))
        .map(|(i, _)| i)
        .collect();
    let covered: BTreeSet<usize> = atoms
        .iter()
        .flat_map(|&i| framework.decompositions()[k].atoms[i].channels.clone())
        .collect();
    if covered != channels {
        return Err(Error::FrameworkSyntax(format!(
            "scan target {} is not a union of the framework's projectors",
            target.label()
        )));
    }
    let dm = decoherence_matrix(&exp, &framework);
    let full = check_consistency(&dm, scan.tol);
    let branch = check_consistency(&dm.restricted_to(&target.detector)?, scan.tol);
    let probs = dm.probabilities();
    let (mut given, mut joint) = (0.0, 0.0);
    for (i, key) in dm
        .keys
        .iter()
        .enumerate()
        .filter(|(_, key)| key.detector == d)
    {
        given += probs[i];
        if atoms.contains(&key.atoms[k]) {
            joint += probs[i];
        }
    }
    let probability = (given >= ZERO_PROBABILITY).then(|| joint / given);
    Ok((probability, full, branch))
}

/// Evaluate every grid point on `workers` threads; hits keep grid order.
pub fn run_scan(scan: &ScanSpec, workers: usize) -> Result<ScanReport> {
    let points = grid(&scan.params);
    let eval = |values: &Vec<f64>| -> Result<ScanPoint> {
        let spec = apply(&scan.base, &scan.params, values)?;
        let (probability, full, branch) = evaluate_point(&spec, scan)?;
        let consistent = match scan.scope {
            Scope::Full => full.consistent,
            Scope::Branch => branch.consistent,
        };
        Ok(ScanPoint {
            values: scan
                .params
                .iter()
                .zip(values)
                .map(|(p, &v)| (format!("{}.{}", p.node, p.param), v))
                .collect(),
            probability,
            full_max_offdiag: full.max_offdiag,
            full_consistent: full.consistent,
            branch_max_offdiag: branch.max_offdiag,
            branch_consistent: branch.consistent,
            hit: consistent && probability.is_some_and(|p| p >= scan.min_probability),
        })
    };
    let evaluated: Vec<Result<ScanPoint>> = match rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
    {
        Ok(pool) => pool.install(|| points.par_iter().map(eval).collect()),
        Err(_) => points.iter().map(eval).collect(),
    };
    let mut hits = Vec::new();
    for p in evaluated {
        let p = p?;
        if p.hit {
            hits.push(p);
        }
    }
    Ok(ScanReport {
        target: scan.target.label(),
        framework: scan.framework.clone(),
        scope: scan.scope,
        points: points.len(),
        hits,
    })
}

impl ScanReport {
    pub fn to_json(&self) -> Value {
        json!({
            "target": self.target,
            "framework": self.framework,
            "scope": match self.scope { Scope::Full => "full", Scope::Branch => "branch" },
            "grid_points": self.points,
            "hits": self.hits.iter().map(ScanPoint::to_json).collect::<Vec<_>>(),
        })
    }
}
