//! Qubit probes weakly coupled to channels, and the joint particle ⊗ probes
//! space they live in.
//!
//! A probe starts in `|0⟩` (untriggered). When the particle occupies one of
//! its target channels at the probe's slot, the probe is rotated by
//! `R(ε) = [[cos ε, -sin ε], [sin ε, cos ε]]`; otherwise it is untouched. A
//! probe with several targets (such as `w` on `B+C`) applies the same rotation
//! coherently on the whole subspace, so it leaves relative phases between its
//! targets alone.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::interferometer::{InterferometerSpec, ProbeDecl};
use crate::linalg::{CMatrix, CVector, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSpec {
    pub name: String,
    /// Target labels as written.
    pub targets: Vec<String>,
    pub epsilon: f64,
    pub slot: usize,
    /// Channels the targets resolve to at `slot`.
    channels: BTreeSet<usize>,
}

impl ProbeSpec {
    pub fn channels(&self) -> &BTreeSet<usize> {
        &self.channels
    }

    /// `B` or `B+C`.
    pub fn target_label(&self) -> String {
        self.targets.join("+")
    }
}

/// Ordered probes; probe `k` owns bit `k` of every outcome bitstring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProbeRegister {
    probes: Vec<ProbeSpec>,
}

impl ProbeRegister {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validate probe declarations against slot occupancy.
    pub fn new(spec: &InterferometerSpec, decls: &[ProbeDecl]) -> Result<Self> {
        let mut probes: Vec<ProbeSpec> = Vec::with_capacity(decls.len());
        for d in decls {
            if probes.iter().any(|p| p.name == d.name) {
                return Err(Error::DuplicateName(d.name.clone()));
            }
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&d.epsilon) {
                return Err(Error::InvalidParameter(format!(
                    "probe {}: epsilon {} outside [0, pi/2]",
                    d.name, d.epsilon
                )));
            }
            if d.targets.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "probe {}: no targets",
                    d.name
                )));
            }
            let slot = d.slot.unwrap_or_else(|| spec.probe_slot());
            spec.check_slot(slot)?;
            let mut channels = BTreeSet::new();
            for t in &d.targets {
                spec.channel_index(t)?;
                let c = spec
                    .resolve(t, slot)
                    .map_err(|_| Error::TargetNotOccupiedAtSlot {
                        probe: d.name.clone(),
                        channel: t.clone(),
                        slot,
                    })?;
                channels.insert(c);
            }
            probes.push(ProbeSpec {
                name: d.name.clone(),
                targets: d.targets.clone(),
                epsilon: d.epsilon,
                slot,
                channels,
            });
        }
        if probes.len() > 16 {
            return Err(Error::InvalidParameter("at most 16 probes".into()));
        }
        Ok(Self { probes })
    }

    /// Register built from the probe lines of the description itself.
    pub fn from_spec(spec: &InterferometerSpec) -> Result<Self> {
        Self::new(spec, spec.probe_decls())
    }

    pub fn len(&self) -> usize {
        self.probes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probes.is_empty()
    }

    pub fn probes(&self) -> &[ProbeSpec] {
        &self.probes
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.probes
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::UnknownProbe(name.to_string()))
    }

    pub fn names(&self) -> Vec<String> {
        self.probes.iter().map(|p| p.name.clone()).collect()
    }
}

/// Basis layout of particle ⊗ probes: channel-major, probe bits
/// little-endian by register index (`index = channel * 2^n + bits`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSpace {
    pub n_channels: usize,
    pub n_probes: usize,
}

impl JointSpace {
    pub fn n_bitstrings(&self) -> usize {
        1 << self.n_probes
    }

    pub fn dim(&self) -> usize {
        self.n_channels << self.n_probes
    }

    #[inline]
    pub fn index(&self, channel: usize, bits: usize) -> usize {
        (channel << self.n_probes) | bits
    }

    #[inline]
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index >> self.n_probes, index & (self.n_bitstrings() - 1))
    }

    /// Bits rendered probe 0 first, e.g. `"0100"`.
    pub fn bit_string(&self, bits: usize) -> String {
        (0..self.n_probes)
            .map(|k| if bits >> k & 1 == 1 { '1' } else { '0' })
            .collect()
    }

    /// `|channel⟩ ⊗ |0…0⟩`.
    pub fn product_state(&self, channel: usize) -> CVector {
        crate::linalg::basis_vector(self.dim(), self.index(channel, 0))
    }

    /// Apply `U ⊗ 1` for a channel-space operator `U`.
    pub fn apply_channel_op(&self, op: &CMatrix, state: &CVector) -> CVector {
        let nb = self.n_bitstrings();
        let mut out = CVector::zeros(self.dim());
        for row in 0..self.n_channels {
            for col in 0..self.n_channels {
                let u = op[(row, col)];
                if u == ZERO {
                    continue;
                }
                for bits in 0..nb {
                    out[self.index(row, bits)] += u * state[self.index(col, bits)];
                }
            }
        }
        out
    }

    /// Dense `U ⊗ 1`.
    pub fn lift(&self, op: &CMatrix) -> CMatrix {
        let nb = self.n_bitstrings();
        CMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            let (rc, rb) = (r / nb, r % nb);
            let (cc, cb) = (c / nb, c % nb);
            if rb == cb {
                op[(rc, cc)]
            } else {
                ZERO
            }
        })
    }
}

pub fn assemble_joint_space(spec: &InterferometerSpec, register: &ProbeRegister) -> JointSpace {
    JointSpace {
        n_channels: spec.n_channels(),
        n_probes: register.len(),
    }
}

/// Apply the coupling of probe `k` in place.
pub fn apply_coupling(space: &JointSpace, probe: &ProbeSpec, k: usize, state: &mut CVector) {
    let (s, c) = probe.epsilon.sin_cos();
    let mask = 1usize << k;
    for &ch in probe.channels() {
        for bits in (0..space.n_bitstrings()).filter(|b| b & mask == 0) {
            let i0 = space.index(ch, bits);
            let i1 = space.index(ch, bits | mask);
            let (a0, a1) = (state[i0], state[i1]);
            state[i0] = a0 * c - a1 * s;
            state[i1] = a0 * s + a1 * c;
        }
    }
}

/// `P ⊗ R(ε) + (1 - P) ⊗ 1` on the probe's qubit, identity on the others.
pub fn coupling_unitary(
    probe: &str,
    register: &ProbeRegister,
    spec: &InterferometerSpec,
) -> Result<CMatrix> {
    let k = register.index_of(probe)?;
    let space = assemble_joint_space(spec, register);
    let mut u = CMatrix::identity(space.dim(), space.dim());
    for col in 0..space.dim() {
        let mut v = u.column(col).into_owned();
        apply_coupling(&space, &register.probes()[k], k, &mut v);
        u.set_column(col, &v);
    }
    Ok(u)
}
