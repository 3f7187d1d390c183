use super::{InterferometerSpec, NodeKind, Port};
use crate::linalg::{real, unitarity_deviation, CMatrix, CVector, Complex64, I, ONE, ZERO};

/// Unitary acting on the channel space between slot `slot - 1` and `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageUnitary {
    pub slot: usize,
    pub matrix: CMatrix,
}

/// 2x2 transfer block of an element, rows `(out1, out2)`, columns `(in1, in2)`.
/// Mirrors are the 1x1 block `[1]`; sources and detectors have none.
pub fn node_transfer(kind: &NodeKind) -> Option<CMatrix> {
    match *kind {
        NodeKind::BeamSplitter { theta, phi } => {
            let (s, c) = theta.sin_cos();
            let e = Complex64::from_polar(1.0, phi);
            Some(CMatrix::from_row_slice(
                2,
                2,
                &[real(c), I * s, e * I * s, e * c],
            ))
        }
        NodeKind::Mirror => Some(CMatrix::from_element(1, 1, ONE)),
        NodeKind::Source | NodeKind::Detector => None,
    }
}

/// Unitary of one element on the full channel space.
///
/// Input amplitudes move to the output channels through the transfer block.
/// The output channels are empty before the element acts, so they are mapped
/// back through the adjoint block; an unconnected beam-splitter input is a
/// vacuum mode whose column is folded into the output subspace. Channels the
/// element does not touch keep identity.
pub fn node_unitary(spec: &InterferometerSpec, node: usize) -> CMatrix {
    let n = spec.n_channels();
    let mut u = CMatrix::identity(n, n);
    let kind = &spec.nodes()[node].kind;
    let Some(block) = node_transfer(kind) else {
        return u;
    };
    let port_channel = |port: Port| {
        spec.channels()
            .iter()
            .enumerate()
            .find(|(_, ch)| {
                let r = if port.is_input() { &ch.to } else { &ch.from };
                r.port == port && spec.node_index(&r.node) == Some(node)
            })
            .map(|(i, _)| i)
    };
    let ins: Vec<Option<usize>> = kind.inputs().iter().map(|&p| port_channel(p)).collect();
    let outs: Vec<usize> = kind
        .outputs()
        .iter()
        .map(|&p| port_channel(p).expect("validated outputs are connected"))
        .collect();

    for &c in ins.iter().flatten().chain(outs.iter()) {
        u[(c, c)] = ZERO;
    }
    for (k, input) in ins.iter().enumerate() {
        match *input {
            Some(i) => {
                for (r, &o) in outs.iter().enumerate() {
                    u[(o, i)] = block[(r, k)];
                    u[(i, o)] = block[(r, k)].conj();
                }
            }
            None => {
                for (r, &o) in outs.iter().enumerate() {
                    for (s, &o2) in outs.iter().enumerate() {
                        u[(o2, o)] += block[(r, k)].conj() * block[(s, k)];
                    }
                }
            }
        }
    }
    u
}

/// One unitary per slot `1..=final_slot`, each the ordered product of the
/// elements acting at that slot. Slots where nothing acts get identity.
pub fn compile_stages(spec: &InterferometerSpec) -> Vec<StageUnitary> {
    let n = spec.n_channels();
    (1..=spec.final_slot())
        .map(|slot| {
            let matrix = spec
                .topo_order()
                .iter()
                .filter(|&&node| spec.node_slot(node) == slot)
                .fold(CMatrix::identity(n, n), |acc, &node| {
                    node_unitary(spec, node) * acc
                });
            StageUnitary { slot, matrix }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitarityReport {
    pub tol: f64,
    /// `(slot, max |U†U - 1|)` per stage.
    pub deviations: Vec<(usize, f64)>,
    pub pass: bool,
    /// Slots whose deviation exceeds `tol`.
    pub offending: Vec<usize>,
}

impl UnitarityReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|&(_, d)| d).fold(0.0, f64::max)
    }
}

pub fn validate_unitarity(stages: &[StageUnitary], tol: f64) -> UnitarityReport {
    assert!(tol > 0.0, "tolerance must be positive");
    let deviations: Vec<(usize, f64)> = stages
        .iter()
        .map(|s| (s.slot, unitarity_deviation(&s.matrix)))
        .collect();
    let offending: Vec<usize> = deviations
        .iter()
        .filter(|&&(_, d)| d > tol)
        .map(|&(s, _)| s)
        .collect();
    UnitarityReport {
        tol,
        pass: offending.is_empty(),
        deviations,
        offending,
    }
}

/// A validated spec together with its compiled stages.
#[derive(Debug, Clone)]
pub struct Interferometer {
    spec: InterferometerSpec,
    stages: Vec<StageUnitary>,
}

impl Interferometer {
    pub fn new(spec: InterferometerSpec) -> Self {
        let stages = compile_stages(&spec);
        Self { spec, stages }
    }

    pub fn spec(&self) -> &InterferometerSpec {
        &self.spec
    }

    pub fn stages(&self) -> &[StageUnitary] {
        &self.stages
    }

    /// Stage unitary taking slot `slot - 1` to `slot` (`slot >= 1`).
    pub fn stage(&self, slot: usize) -> &CMatrix {
        &self.stages[slot - 1].matrix
    }

    /// Evolution from slot `from` to slot `to` (`from <= to`).
    pub fn propagator(&self, from: usize, to: usize) -> CMatrix {
        let n = self.spec.n_channels();
        (from + 1..=to).fold(CMatrix::identity(n, n), |acc, t| self.stage(t) * acc)
    }

    /// Full product of all stages.
    pub fn total_unitary(&self) -> CMatrix {
        self.propagator(0, self.spec.final_slot())
    }

    pub fn source_state(&self) -> CVector {
        crate::linalg::basis_vector(self.spec.n_channels(), self.spec.source_channel())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::default_nested_mzi;
    use crate::linalg::max_abs_diff;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn bs1_block_at_quarter_pi() {
        let spec = default_nested_mzi();
        let t = node_transfer(&spec.nodes()[1].kind).unwrap();
        let h = FRAC_1_SQRT_2;
        let expected = CMatrix::from_row_slice(2, 2, &[real(h), I * h, I * h, real(h)]);
        assert!(max_abs_diff(&t, &expected) < 1e-15);
    }

    #[test]
    fn zero_theta_is_identity_block() {
        let t = node_transfer(&NodeKind::BeamSplitter {
            theta: 0.0,
            phi: 0.0,
        })
        .unwrap();
        assert_eq!(t, CMatrix::identity(2, 2));
    }

    #[test]
    fn five_unitary_stages() {
        let ifm = Interferometer::new(default_nested_mzi());
        assert_eq!(ifm.stages().len(), 5);
        // idle probe slot
        assert_eq!(ifm.stage(3), &CMatrix::identity(12, 12));
        let report = validate_unitarity(ifm.stages(), 1e-12);
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn perturbed_stage_is_reported() {
        let ifm = Interferometer::new(default_nested_mzi());
        let mut stages = ifm.stages().to_vec();
        stages[1].matrix[(0, 0)] += real(1e-6);
        let strict = validate_unitarity(&stages, 1e-12);
        assert!(!strict.pass);
        assert_eq!(strict.offending, vec![2]);
        assert!(validate_unitarity(&stages, 1e-3).pass);
    }

    #[test]
    fn vacuum_input_node_is_unitary() {
        let spec = default_nested_mzi();
        for node in 0..spec.nodes().len() {
            let u = node_unitary(&spec, node);
            assert!(
                unitarity_deviation(&u) < 1e-14,
                "{}",
                spec.nodes()[node].name
            );
        }
    }
}
