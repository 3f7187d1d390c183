//! Unitary evolution of particle ⊗ probes, exact outcome distributions and
//! reproducible Monte Carlo coincidence statistics.
//!
//! Probes are read out after the detector click, in the trigger basis, so the
//! exact joint distribution over (detector, probe bits) is simply the Born
//! distribution of the final joint state. Sampling draws from that
//! distribution; nothing collapses mid-run.

mod coincidence;
mod sampling;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::{json, Value};

pub use coincidence::{aggregate_coincidences, CoincidenceTable};
pub use sampling::{sample_runs, sample_table, RunRecord, Sampler};

use crate::error::{Error, Result};
use crate::interferometer::{Interferometer, InterferometerSpec};
use crate::linalg::{norm_sqr, CVector};
use crate::probes::{apply_coupling, assemble_joint_space, JointSpace, ProbeRegister};
use crate::report::num;

/// Names that give meaning to outcome indices.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeLayout {
    pub detectors: Vec<String>,
    pub detector_channels: Vec<usize>,
    pub probes: Vec<String>,
    pub probe_slots: Vec<usize>,
    pub final_slot: usize,
}

impl OutcomeLayout {
    pub fn n_bitstrings(&self) -> usize {
        1 << self.probes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.detectors.len() * self.n_bitstrings()
    }

    pub fn detector_index(&self, name: &str) -> Result<usize> {
        self.detectors
            .iter()
            .position(|d| d == name)
            .ok_or_else(|| Error::UnknownDetector(name.to_string()))
    }

    pub fn probe_index(&self, name: &str) -> Result<usize> {
        self.probes
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| Error::UnknownProbe(name.to_string()))
    }

    /// `"0100"`, probe 0 first.
    pub fn bit_string(&self, bits: usize) -> String {
        (0..self.probes.len())
            .map(|k| if bits >> k & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// `"a=0;b=1"`.
    pub fn bit_assignments(&self, bits: usize) -> String {
        self.probes
            .iter()
            .enumerate()
            .map(|(k, p)| format!("{p}={}", bits >> k & 1))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Interferometer plus probe register, ready to evolve.
#[derive(Debug, Clone)]
pub struct Experiment {
    interferometer: Interferometer,
    register: ProbeRegister,
    space: JointSpace,
    layout: Arc<OutcomeLayout>,
}

impl Experiment {
    pub fn new(spec: InterferometerSpec, register: ProbeRegister) -> Self {
        let space = assemble_joint_space(&spec, &register);
        let detectors = spec.detectors().iter().map(|d| d.to_string()).collect();
        let detector_channels = (0..spec.detectors().len())
            .map(|d| spec.detector_channel(d))
            .collect();
        let layout = Arc::new(OutcomeLayout {
            detectors,
            detector_channels,
            probes: register.names(),
            probe_slots: register.probes().iter().map(|p| p.slot).collect(),
            final_slot: spec.final_slot(),
        });
        Self {
            interferometer: Interferometer::new(spec),
            register,
            space,
            layout,
        }
    }

    /// Experiment with the probes declared in the description.
    pub fn from_spec(spec: InterferometerSpec) -> Result<Self> {
        let register = ProbeRegister::from_spec(&spec)?;
        Ok(Self::new(spec, register))
    }

    pub fn without_probes(spec: InterferometerSpec) -> Self {
        Self::new(spec, ProbeRegister::empty())
    }

    pub fn spec(&self) -> &InterferometerSpec {
        self.interferometer.spec()
    }

    pub fn interferometer(&self) -> &Interferometer {
        &self.interferometer
    }

    pub fn register(&self) -> &ProbeRegister {
        &self.register
    }

    pub fn space(&self) -> JointSpace {
        self.space
    }

    pub fn layout(&self) -> &Arc<OutcomeLayout> {
        &self.layout
    }

    /// `|source⟩ ⊗ |0…0⟩` at slot 0.
    pub fn initial_state(&self) -> JointState {
        JointState {
            amplitudes: self.space.product_state(self.spec().source_channel()),
            slot: 0,
            space: self.space,
            layout: Arc::clone(&self.layout),
        }
    }

    /// Stage unitary for `slot`, then every probe coupling scheduled there.
    pub fn apply_slot(&self, slot: usize, amplitudes: &CVector) -> CVector {
        let mut next = self
            .space
            .apply_channel_op(self.interferometer.stage(slot), amplitudes);
        for (k, probe) in self.register.probes().iter().enumerate() {
            if probe.slot == slot {
                apply_coupling(&self.space, probe, k, &mut next);
            }
        }
        next
    }

    /// Slot-0 state: the initial state after any probe coupled at slot 0.
    pub fn prepared_state(&self) -> CVector {
        let mut amplitudes = self.initial_state().amplitudes;
        self.apply_initial_couplings(&mut amplitudes);
        amplitudes
    }

    /// Probes at slot 0 act on the source state before any element.
    fn apply_initial_couplings(&self, amplitudes: &mut CVector) {
        for (k, probe) in self.register.probes().iter().enumerate() {
            if probe.slot == 0 {
                apply_coupling(&self.space, probe, k, amplitudes);
            }
        }
    }

    /// States at slots `0..=final`.
    pub fn trajectory(&self) -> Vec<JointState> {
        let mut state = self.initial_state();
        self.apply_initial_couplings(&mut state.amplitudes);
        let mut out = vec![state.clone()];
        for slot in 1..=self.spec().final_slot() {
            state = JointState {
                amplitudes: self.apply_slot(slot, &state.amplitudes),
                slot,
                ..state
            };
            out.push(state.clone());
        }
        out
    }

    /// Final joint state over detector channels ⊗ probe bits.
    pub fn evolve(&self) -> JointState {
        self.trajectory().pop().expect("at least slot 0")
    }
}

/// Evolve from the given initial channel, which must be the source channel.
pub fn evolve(
    spec: &InterferometerSpec,
    register: &ProbeRegister,
    initial: &str,
) -> Result<JointState> {
    let channel = spec.channel_index(initial)?;
    if channel != spec.source_channel() {
        return Err(Error::InvalidParameter(format!(
            "initial channel {initial} is not the source channel"
        )));
    }
    Ok(Experiment::new(spec.clone(), register.clone()).evolve())
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    pub amplitudes: CVector,
    pub slot: usize,
    pub space: JointSpace,
    pub layout: Arc<OutcomeLayout>,
}

impl JointState {
    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn amplitude(&self, channel: usize, bits: usize) -> num_complex::Complex64 {
        self.amplitudes[self.space.index(channel, bits)]
    }
}

/// Probability per detector, in detector order.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorDistribution {
    pub entries: Vec<(String, f64)>,
}

impl DetectorDistribution {
    pub fn get(&self, detector: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(d, _)| d == detector)
            .map(|&(_, p)| p)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, p)| p).collect()
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.entries
                .iter()
                .map(|(d, p)| (d.clone(), num(*p)))
                .collect(),
        )
    }
}

/// Exact probability of every `(detector, probe bits)` outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    layout: Arc<OutcomeLayout>,
    /// Detector-major: `detector * 2^n + bits`.
    probs: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn layout(&self) -> &Arc<OutcomeLayout> {
        &self.layout
    }

    pub fn cells(&self) -> &[f64] {
        &self.probs
    }

    pub fn get(&self, detector: usize, bits: usize) -> f64 {
        self.probs[detector * self.layout.n_bitstrings() + bits]
    }

    /// Probability of `(detector, bits)` by name, bits given as `"0100"`.
    pub fn prob(&self, detector: &str, bits: &str) -> Result<f64> {
        let d = self.layout.detector_index(detector)?;
        let b = parse_bits(bits, self.layout.probes.len())?;
        Ok(self.get(d, b))
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Pr(probe = value).
    pub fn probe_marginal(&self, probe: &str, value: bool) -> Result<f64> {
        let k = self.layout.probe_index(probe)?;
        Ok(self
            .iter()
            .filter(|&(_, bits, _)| (bits >> k & 1 == 1) == value)
            .map(|(_, _, p)| p)
            .sum())
    }

    /// `(detector index, bits, probability)` in cell order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let nb = self.layout.n_bitstrings();
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (i / nb, i % nb, p))
    }

    pub fn detector_marginals(&self) -> DetectorDistribution {
        let nb = self.layout.n_bitstrings();
        DetectorDistribution {
            entries: self
                .layout
                .detectors
                .iter()
                .enumerate()
                .map(|(d, name)| (name.clone(), self.probs[d * nb..(d + 1) * nb].iter().sum()))
                .collect(),
        }
    }

    /// `{ "outcomes": [ {"detector", "bits", "p"} ], "total_p" }`.
    pub fn to_json(&self) -> Value {
        let outcomes: Vec<Value> = self
            .iter()
            .map(|(d, b, p)| {
                json!({
                    "detector": self.layout.detectors[d],
                    "bits": self.layout.bit_string(b),
                    "p": num(p),
                })
            })
            .collect();
        json!({ "outcomes": outcomes, "total_p": num(self.total()) })
    }
}

fn parse_bits(bits: &str, n: usize) -> Result<usize> {
    if bits.len() != n || !bits.chars().all(|c| c == '0' || c == '1') {
        return Err(Error::InvalidParameter(format!(
            "bitstring {bits:?} does not match {n} probes"
        )));
    }
    Ok(bits
        .chars()
        .enumerate()
        .filter(|&(_, c)| c == '1')
        .map(|(k, _)| 1 << k)
        .sum())
}

fn require_final(state: &JointState) -> Result<()> {
    if state.slot != state.layout.final_slot {
        return Err(Error::InvalidSlot {
            slot: state.slot,
            last: state.layout.final_slot,
        });
    }
    Ok(())
}

/// Marginal distribution over detectors.
pub fn detector_distribution(state: &JointState) -> Result<DetectorDistribution> {
    Ok(joint_outcome_distribution(state)?.detector_marginals())
}

/// Born probabilities for every `(detector, bits)` outcome.
pub fn joint_outcome_distribution(state: &JointState) -> Result<OutcomeDistribution> {
    require_final(state)?;
    let layout = Arc::clone(&state.layout);
    let nb = layout.n_bitstrings();
    let mut probs = Vec::with_capacity(layout.n_cells());
    for &ch in &layout.detector_channels {
        for bits in 0..nb {
            probs.push(state.amplitude(ch, bits).norm_sqr());
        }
    }
    Ok(OutcomeDistribution { layout, probs })
}

/// Detector distribution conditioned on one probe's readout.
pub fn conditional_given_probe(
    dist: &OutcomeDistribution,
    probe: &str,
    value: bool,
) -> Result<DetectorDistribution> {
    let k = dist.layout.probe_index(probe)?;
    let mut per_detector: BTreeMap<usize, f64> = BTreeMap::new();
    for (d, bits, p) in dist.iter() {
        if (bits >> k & 1 == 1) == value {
            *per_detector.entry(d).or_default() += p;
        }
    }
    let total: f64 = per_detector.values().sum();
    if total <= 0.0 {
        return Err(Error::ZeroProbabilityCondition(format!(
            "{probe}={}",
            value as u8
        )));
    }
    Ok(DetectorDistribution {
        entries: dist
            .layout
            .detectors
            .iter()
            .enumerate()
            .map(|(d, name)| {
                (
                    name.clone(),
                    per_detector.get(&d).copied().unwrap_or(0.0) / total,
                )
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{default_nested_mzi, ProbeDecl};

    fn with_probes(decls: &[(&str, &[&str], f64)]) -> Experiment {
        let spec = default_nested_mzi();
        let decls: Vec<ProbeDecl> = decls
            .iter()
            .map(|(n, t, e)| ProbeDecl {
                name: n.to_string(),
                targets: t.iter().map(|s| s.to_string()).collect(),
                epsilon: *e,
                slot: None,
            })
            .collect();
        let reg = ProbeRegister::new(&spec, &decls).unwrap();
        Experiment::new(spec, reg)
    }

    #[test]
    fn norm_is_conserved_every_slot() {
        let exp = with_probes(&[
            ("a", &["A"], 0.3),
            ("b", &["B"], 0.2),
            ("w", &["B", "C"], 0.7),
        ]);
        for state in exp.trajectory() {
            assert!(
                (state.norm_sqr() - 1.0).abs() < 1e-12,
                "slot {}",
                state.slot
            );
        }
    }

    #[test]
    fn zero_probability_condition() {
        let exp = with_probes(&[("w", &["B", "C"], 0.0)]);
        let dist = joint_outcome_distribution(&exp.evolve()).unwrap();
        assert!(matches!(
            conditional_given_probe(&dist, "w", true),
            Err(Error::ZeroProbabilityCondition(_))
        ));
        assert!(matches!(
            conditional_given_probe(&dist, "x", true),
            Err(Error::UnknownProbe(_))
        ));
    }

    #[test]
    fn evolve_requires_source_channel() {
        let spec = default_nested_mzi();
        let reg = ProbeRegister::empty();
        assert!(evolve(&spec, &reg, "S").is_ok());
        assert!(matches!(
            evolve(&spec, &reg, "D"),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn bits_by_name() {
        let exp = with_probes(&[("b", &["B"], 0.1), ("w", &["B", "C"], 0.1)]);
        let dist = joint_outcome_distribution(&exp.evolve()).unwrap();
        assert_eq!(dist.prob("D1", "10").unwrap(), dist.get(0, 1));
        assert!(dist.prob("D1", "1").is_err());
        assert_eq!(exp.layout().bit_assignments(0b10), "b=0;w=1");
    }
}
