//! Weak values of channel projectors between the pre-selected source state
//! and a post-selected detector, the resulting weak-trace presence table,
//! and a side-by-side comparison with consistent-histories verdicts.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::evolution::{joint_outcome_distribution, Experiment};
use crate::histories::{conditional_distribution, Framework, ProjectorExpr};
use crate::interferometer::{Interferometer, InterferometerSpec, NodeKind, ProbeDecl};
use crate::linalg::{basis_vector, inner, norm_sqr, CVector, ZERO};
use crate::probes::ProbeRegister;
use crate::report::{complex, num};

/// Default presence threshold on |W|.
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
/// |⟨b|f⟩| at or below this makes weak values undefined.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;
/// Probe strength used for the bridge numbers.
pub const BRIDGE_EPSILON: f64 = 1e-3;
/// Probe strength used for the w-null and leakage evidence.
pub const EVIDENCE_EPSILON: f64 = 0.1;
/// Conditional probabilities above this count as presence.
const CH_PRESENT: f64 = 1e-10;

/// Pre-selected state `U(slot, 0)|source⟩`.
pub fn forward_state(itf: &Interferometer, slot: usize) -> Result<CVector> {
    itf.spec().check_slot(slot)?;
    Ok(itf.propagator(0, slot) * itf.source_state())
}

/// Post-selected state pulled back to `slot`: `U(final, slot)†|detector⟩`.
pub fn backward_state(itf: &Interferometer, slot: usize, detector: &str) -> Result<CVector> {
    let spec = itf.spec();
    spec.check_slot(slot)?;
    let d = spec.detector_index(detector)?;
    let det = basis_vector(spec.n_channels(), spec.detector_channel(d));
    Ok(itf.propagator(slot, spec.final_slot()).adjoint() * det)
}

fn restricted(v: &CVector, channels: &BTreeSet<usize>) -> CVector {
    CVector::from_fn(
        v.len(),
        |i, _| if channels.contains(&i) { v[i] } else { ZERO },
    )
}

fn weak_value_of(
    forward: &CVector,
    backward: &CVector,
    channels: &BTreeSet<usize>,
    detector: &str,
) -> Result<Complex64> {
    let overlap = inner(backward, forward);
    if overlap.norm() <= ORTHOGONALITY_TOL {
        return Err(Error::OrthogonalPostSelection {
            detector: detector.to_string(),
        });
    }
    Ok(inner(backward, &restricted(forward, channels)) / overlap)
}

/// `W = ⟨b|P|f⟩ / ⟨b|f⟩` at the expression's slot.
pub fn weak_value(itf: &Interferometer, expr: &ProjectorExpr, detector: &str) -> Result<Complex64> {
    let channels = expr.resolve(itf.spec())?;
    let f = forward_state(itf, expr.slot)?;
    let b = backward_state(itf, expr.slot, detector)?;
    weak_value_of(&f, &b, &channels, detector)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueRow {
    pub slot: usize,
    pub label: String,
    pub channels: BTreeSet<usize>,
    pub value: Complex64,
    pub present: bool,
}

/// Weak values of every occupied channel at every slot, plus any extra
/// projectors, for one post-selection.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakValueTable {
    pub detector: String,
    pub threshold: f64,
    pub rows: Vec<WeakValueRow>,
}

impl WeakValueTable {
    pub fn get(&self, label: &str, slot: usize) -> Option<Complex64> {
        self.rows
            .iter()
            .find(|r| r.label == label && r.slot == slot)
            .map(|r| r.value)
    }

    /// Row labels present at some slot, in table order.
    pub fn present(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in self.rows.iter().filter(|r| r.present) {
            if !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    /// Row labels present at no slot, in table order.
    pub fn absent(&self) -> Vec<String> {
        let present = self.present();
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !present.contains(&r.label) && !out.contains(&r.label) {
                out.push(r.label.clone());
            }
        }
        out
    }

    /// Sum of the single-channel weak values at one slot.
    pub fn slot_sum(&self, slot: usize) -> Complex64 {
        self.rows
            .iter()
            .filter(|r| r.slot == slot && r.channels.len() == 1)
            .map(|r| r.value)
            .sum()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "post": self.detector,
            "threshold": num(self.threshold),
            "rows": self.rows.iter().map(|r| json!({
                "slot": r.slot,
                "channel": r.label,
                "weak_value": complex(r.value),
                "abs": num(r.value.norm()),
                "weak_trace": if r.present { "present" } else { "absent" },
            })).collect::<Vec<_>>(),
            "present": self.present(),
            "absent": self.absent(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("weak values, post-selected on {}\n", self.detector);
        let _ = writeln!(
            out,
            "{:>4}  {:<8} {:>24}  {:>10}  trace",
            "slot", "channel", "W", "|W|"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>4}  {:<8} {:>24}  {:>10.3e}  {}",
                r.slot,
                r.label,
                format_complex(r.value),
                r.value.norm(),
                if r.present { "present" } else { "absent" }
            );
        }
        let _ = writeln!(out, "present: {{{}}}", self.present().join(", "));
        let _ = writeln!(out, "absent: {{{}}}", self.absent().join(", "));
        out
    }
}

fn format_complex(z: Complex64) -> String {
    let clean = |x: f64| if x.abs() < 5e-17 { 0.0 } else { x };
    format!("{:+.6}{:+.6}i", clean(z.re), clean(z.im))
}

/// Weak-trace table for a post-selection. Presence means `|W| > threshold`.
pub fn weak_trace_table(
    itf: &Interferometer,
    detector: &str,
    threshold: f64,
    extras: &[ProjectorExpr],
) -> Result<WeakValueTable> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive, got {threshold}"
        )));
    }
    let spec = itf.spec();
    let mut rows = Vec::new();
    let mut push = |slot: usize, label: String, channels: BTreeSet<usize>| -> Result<()> {
        let f = forward_state(itf, slot)?;
        let b = backward_state(itf, slot, detector)?;
        let value = weak_value_of(&f, &b, &channels, detector)?;
        rows.push(WeakValueRow {
            slot,
            label,
            channels,
            value,
            present: value.norm() > threshold,
        });
        Ok(())
    };
    for slot in 0..=spec.final_slot() {
        for c in spec.occupied(slot) {
            push(slot, spec.display_name(c).to_string(), [c].into())?;
        }
    }
    for e in extras {
        push(e.slot, e.label(), e.resolve(spec)?)?;
    }
    Ok(WeakValueTable {
        detector: detector.to_string(),
        threshold,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChVerdict {
    Present { via: Option<String> },
    Absent { via: Option<String> },
    Undetermined,
}

impl ChVerdict {
    fn as_bool(&self) -> Option<bool> {
        match self {
            ChVerdict::Present { .. } => Some(true),
            ChVerdict::Absent { .. } => Some(false),
            ChVerdict::Undetermined => None,
        }
    }

    pub fn describe(&self) -> String {
        let with = |s: &str, via: &Option<String>| match via {
            Some(v) => format!("{s} (via {v})"),
            None => s.to_string(),
        };
        match self {
            ChVerdict::Present { via } => with("present", via),
            ChVerdict::Absent { via } => with("absent", via),
            ChVerdict::Undetermined => "undetermined".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub channel: String,
    pub slot: usize,
    pub weak_value: Complex64,
    pub weak_trace: bool,
    pub ch: ChVerdict,
    /// Which framework produced the CH verdict.
    pub ch_source: String,
}

impl ComparisonRow {
    pub fn agree(&self) -> bool {
        self.ch.as_bool() == Some(self.weak_trace)
    }
}

/// `Pr(probe fires | post) / sin²ε` against `|W|²` for one target.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeRow {
    pub target: String,
    pub slot: usize,
    pub epsilon: f64,
    pub ratio: f64,
    pub weak_sqr: f64,
}

impl BridgeRow {
    /// Relative deviation, or absolute deviation when `|W|²` vanishes.
    pub fn deviation(&self) -> f64 {
        if self.weak_sqr > 1e-12 {
            (self.ratio - self.weak_sqr).abs() / self.weak_sqr
        } else {
            (self.ratio - self.weak_sqr).abs()
        }
    }
}

/// Joint probability that a probe on a multi-channel atom fires and the
/// post-selected detector clicks.
#[derive(Debug, Clone, PartialEq)]
pub struct NullEvidence {
    pub target: String,
    pub slot: usize,
    pub epsilon: f64,
    pub joint: f64,
}

/// Amplitude reaching a channel that is dark in the unperturbed device,
/// split by the probe's readout.
#[derive(Debug, Clone, PartialEq)]
pub struct LeakageEvidence {
    pub probe_target: String,
    pub dark_channel: String,
    pub slot: usize,
    pub epsilon: f64,
    pub untriggered: Complex64,
    pub triggered: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub post: String,
    pub framework: String,
    pub threshold: f64,
    pub rows: Vec<ComparisonRow>,
    pub bridge: Vec<BridgeRow>,
    pub null_evidence: Vec<NullEvidence>,
    pub leakage: Vec<LeakageEvidence>,
}

impl Comparison {
    pub fn row(&self, channel: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.channel == channel)
    }

    pub fn disagreements(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| !r.agree())
            .map(|r| r.channel.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "post": self.post,
            "framework": self.framework,
            "threshold": num(self.threshold),
            "rows": self.rows.iter().map(|r| json!({
                "channel": r.channel,
                "slot": r.slot,
                "weak_value": complex(r.weak_value),
                "weak_trace": if r.weak_trace { "present" } else { "absent" },
                "ch": r.ch.describe(),
                "ch_framework": r.ch_source,
                "agree": r.agree(),
            })).collect::<Vec<_>>(),
            "disputed": self.disagreements(),
            "bridge": self.bridge.iter().map(|b| json!({
                "target": b.target,
                "slot": b.slot,
                "epsilon": num(b.epsilon),
                "trigger_ratio": num(b.ratio),
                "weak_value_sqr": num(b.weak_sqr),
                "deviation": num(b.deviation()),
            })).collect::<Vec<_>>(),
            "null_evidence": self.null_evidence.iter().map(|n| json!({
                "target": n.target,
                "slot": n.slot,
                "epsilon": num(n.epsilon),
                "p_trigger_and_post": num(n.joint),
            })).collect::<Vec<_>>(),
            "leakage": self.leakage.iter().map(|l| json!({
                "probe_target": l.probe_target,
                "dark_channel": l.dark_channel,
                "slot": l.slot,
                "epsilon": num(l.epsilon),
                "untriggered_amplitude": complex(l.untriggered),
                "triggered_amplitude": complex(l.triggered),
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "post-selection {}  framework {}  threshold {:e}\n",
            self.post, self.framework, self.threshold
        );
        let _ = writeln!(
            out,
            "{:<8} {:>4}  {:>24}  {:<10} {:<22} agree",
            "channel", "slot", "weak value", "weak trace", "histories"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<8} {:>4}  {:>24}  {:<10} {:<22} {}{}",
                r.channel,
                r.slot,
                format_complex(r.weak_value),
                if r.weak_trace { "present" } else { "absent" },
                r.ch.describe(),
                if r.agree() { "yes" } else { "NO" },
                if r.agree() { "" } else { "  <- disputed" }
            );
        }
        let _ = writeln!(
            out,
            "\nbridge: Pr(trigger | {})/sin^2(eps) vs |W|^2",
            self.post
        );
        for b in &self.bridge {
            let _ = writeln!(
                out,
                "  {:<8} slot {} eps {:e}: {:.9} vs {:.9} (deviation {:.2e})",
                b.target,
                b.slot,
                b.epsilon,
                b.ratio,
                b.weak_sqr,
                b.deviation()
            );
        }
        for n in &self.null_evidence {
            let _ = writeln!(
                out,
                "null: probe on {} at eps {}: Pr(fires and {}) = {:.3e}",
                n.target, n.epsilon, self.post, n.joint
            );
        }
        for l in &self.leakage {
            let _ = writeln!(
                out,
                "leakage: probe on {} at eps {}: amplitude in {} (slot {}) untriggered |{:.6e}|, triggered |{:.6e}|",
                l.probe_target,
                l.epsilon,
                l.dark_channel,
                l.slot,
                l.untriggered.norm(),
                l.triggered.norm()
            );
        }
        out
    }
}

/// Channels strictly inside the device: not fed by the source and not
/// feeding a detector.
fn interior_channels(spec: &InterferometerSpec) -> Vec<usize> {
    (0..spec.n_channels())
        .filter(|&c| {
            let (from, to) = spec.channel_endpoints(c);
            spec.nodes()[from].kind != NodeKind::Source
                && spec.nodes()[to].kind != NodeKind::Detector
        })
        .collect()
}

/// Representative (segment name, slot, channel) per interior segment: the
/// framework's first slot where the segment is occupied, else its first
/// occupied slot.
fn comparison_targets(
    spec: &InterferometerSpec,
    framework: &Framework,
) -> Vec<(String, usize, usize)> {
    let interior = interior_channels(spec);
    let mut out: Vec<(String, usize, usize)> = Vec::new();
    for &c in &interior {
        let name = spec.display_name(c).to_string();
        if out.iter().any(|(n, _, _)| *n == name) {
            continue;
        }
        let members: Vec<usize> = interior
            .iter()
            .copied()
            .filter(|&m| spec.display_name(m) == name)
            .collect();
        let at = |slot: usize| members.iter().copied().find(|&m| spec.is_occupied(m, slot));
        let chosen = framework
            .decompositions()
            .iter()
            .find_map(|d| at(d.slot).map(|m| (d.slot, m)))
            .or_else(|| (0..=spec.final_slot()).find_map(|t| at(t).map(|m| (t, m))));
        if let Some((slot, m)) = chosen {
            out.push((name, slot, m));
        }
    }
    out.sort_by_key(|&(_, slot, c)| (slot, c));
    out
}

fn verdict_from(
    exp: &Experiment,
    framework: &Framework,
    slot: usize,
    channel: usize,
    detector: &str,
    tol: f64,
) -> Option<ChVerdict> {
    let decomp = framework.decomposition_at(slot)?;
    let atom = decomp
        .atoms
        .iter()
        .find(|a| a.channels.contains(&channel))?;
    let cond = conditional_distribution(exp, framework, detector, tol).ok()?;
    let p = cond
        .entries
        .iter()
        .find(|(s, l, _)| *s == slot && *l == atom.label)
        .map(|e| e.2)?;
    let via = (atom.channels.len() > 1).then(|| atom.label.clone());
    Some(if p > CH_PRESENT {
        if via.is_some() && p < 1.0 - CH_PRESENT {
            // the coarse atom was only partly occupied; nothing follows for one member
            ChVerdict::Undetermined
        } else {
            ChVerdict::Present { via }
        }
    } else {
        ChVerdict::Absent { via }
    })
}

fn single_probe(
    exp_spec: &InterferometerSpec,
    targets: &[String],
    slot: usize,
    eps: f64,
) -> Result<Experiment> {
    let decl = ProbeDecl {
        name: "x".into(),
        targets: targets.to_vec(),
        epsilon: eps,
        slot: Some(slot),
    };
    let spec = exp_spec.with_probes(vec![])?;
    let register = ProbeRegister::new(&spec, &[decl])?;
    Ok(Experiment::new(spec, register))
}

fn bridge_row(
    spec: &InterferometerSpec,
    itf: &Interferometer,
    target: &[String],
    slot: usize,
    detector: &str,
) -> Result<BridgeRow> {
    let exp = single_probe(spec, target, slot, BRIDGE_EPSILON)?;
    let dist = joint_outcome_distribution(&exp.evolve())?;
    let d = spec.detector_index(detector)?;
    let (p0, p1) = (dist.get(d, 0), dist.get(d, 1));
    let ratio = p1 / (p0 + p1) / BRIDGE_EPSILON.sin().powi(2);
    let labels: Vec<&str> = target.iter().map(String::as_str).collect();
    let w = weak_value(itf, &ProjectorExpr::channels(slot, &labels), detector)?;
    Ok(BridgeRow {
        target: target.join("+"),
        slot,
        epsilon: BRIDGE_EPSILON,
        ratio,
        weak_sqr: w.norm_sqr(),
    })
}

/// Compare weak-trace presence with the verdicts of a consistent framework
/// for every interior channel, with bridge, null and leakage evidence.
pub fn compare_ch_weaktrace(
    spec: &InterferometerSpec,
    detector: &str,
    framework: &Framework,
    threshold: f64,
    tol: f64,
) -> Result<Comparison> {
    let spec = spec.with_probes(vec![])?;
    let exp = Experiment::without_probes(spec.clone());
    let itf = exp.interferometer();
    // refuse up front when the named framework is inconsistent
    conditional_distribution(&exp, framework, detector, tol)?;

    let mut rows = Vec::new();
    for (name, slot, channel) in comparison_targets(&spec, framework) {
        let expr = ProjectorExpr::channels(slot, &[spec.channel_name(channel)]);
        let w = weak_value(itf, &expr, detector)?;
        let (ch, source) = match verdict_from(&exp, framework, slot, channel, detector, tol) {
            Some(v) => (v, framework.describe()),
            None => {
                let labels: Vec<&str> = spec
                    .occupied(slot)
                    .into_iter()
                    .map(|c| spec.channel_name(c))
                    .collect();
                let exprs = labels
                    .iter()
                    .map(|l| ProjectorExpr::channels(slot, &[l]))
                    .collect();
                let fine = Framework::new(&spec, vec![(slot, exprs)])?;
                match verdict_from(&exp, &fine, slot, channel, detector, tol) {
                    Some(v) => (v, fine.describe()),
                    None => (ChVerdict::Undetermined, fine.describe()),
                }
            }
        };
        rows.push(ComparisonRow {
            channel: name,
            slot,
            weak_value: w,
            weak_trace: w.norm() > threshold,
            ch,
            ch_source: source,
        });
    }

    let mut bridge = Vec::new();
    for r in &rows {
        bridge.push(bridge_row(
            &spec,
            itf,
            std::slice::from_ref(&r.channel),
            r.slot,
            detector,
        )?);
    }
    let mut null_evidence = Vec::new();
    let mut leakage = Vec::new();
    let d = spec.detector_index(detector)?;
    let dark: Vec<(String, usize, usize)> = comparison_targets(&spec, &Framework::trivial())
        .into_iter()
        .filter(|&(_, slot, c)| {
            forward_state(itf, slot)
                .map(|f| f[c].norm() <= ORTHOGONALITY_TOL)
                .unwrap_or(false)
        })
        .collect();
    for decomp in framework.decompositions() {
        for atom in decomp
            .atoms
            .iter()
            .filter(|a| a.channels.len() > 1 && !a.complement)
        {
            let names: Vec<String> = atom
                .channels
                .iter()
                .map(|&c| spec.channel_name(c).to_string())
                .collect();
            let mut row = bridge_row(&spec, itf, &names, decomp.slot, detector)?;
            row.target = atom.label.clone();
            bridge.push(row);
            let exp_w = single_probe(&spec, &names, decomp.slot, EVIDENCE_EPSILON)?;
            let dist = joint_outcome_distribution(&exp_w.evolve())?;
            null_evidence.push(NullEvidence {
                target: atom.label.clone(),
                slot: decomp.slot,
                epsilon: EVIDENCE_EPSILON,
                joint: dist.get(d, 1),
            });
            for &member in &atom.channels {
                let target = vec![spec.channel_name(member).to_string()];
                let exp_m = single_probe(&spec, &target, decomp.slot, EVIDENCE_EPSILON)?;
                let trajectory = exp_m.trajectory();
                for (dark_name, dark_slot, dark_c) in &dark {
                    if *dark_slot <= decomp.slot {
                        continue;
                    }
                    let state = &trajectory[*dark_slot];
                    leakage.push(LeakageEvidence {
                        probe_target: spec.display_name(member).to_string(),
                        dark_channel: dark_name.clone(),
                        slot: *dark_slot,
                        epsilon: EVIDENCE_EPSILON,
                        untriggered: state.amplitude(*dark_c, 0),
                        triggered: state.amplitude(*dark_c, 1),
                    });
                }
            }
        }
    }

    Ok(Comparison {
        post: detector.to_string(),
        framework: framework.describe(),
        threshold,
        rows,
        bridge,
        null_evidence,
        leakage,
    })
}

/// Norm of the forward state at every slot (all 1 for a unitary device).
pub fn forward_norms(itf: &Interferometer) -> Vec<f64> {
    (0..=itf.spec().final_slot())
        .map(|t| norm_sqr(&forward_state(itf, t).expect("slot in range")).sqrt())
        .collect()
}
