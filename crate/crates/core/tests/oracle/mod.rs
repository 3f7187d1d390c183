//! Brute-force path enumeration, independent of the stage compiler and the
//! joint-state evolution. Each source→detector path contributes the product
//! of its beam-splitter coefficients (written out here from the convention)
//! and, per probe, `cos ε` / `sin ε` when the path crosses a target channel.

#![allow(dead_code)]

use std::collections::BTreeMap;

use nested_mzi::interferometer::{InterferometerSpec, NodeKind, Port};
use num_complex::Complex64;

pub struct Path {
    pub channels: Vec<String>,
    pub detector: String,
    pub amplitude: Complex64,
}

pub struct OracleProbe {
    pub targets: Vec<&'static str>,
    pub eps: f64,
}

pub fn probe(targets: &[&'static str], eps: f64) -> OracleProbe {
    OracleProbe {
        targets: targets.to_vec(),
        eps,
    }
}

fn coefficient(kind: &NodeKind, input: Port, output: Port) -> Complex64 {
    match *kind {
        NodeKind::Mirror => Complex64::new(1.0, 0.0),
        NodeKind::BeamSplitter { theta, phi } => {
            let i = Complex64::new(0.0, 1.0);
            let phase = Complex64::new(phi.cos(), phi.sin());
            match (input, output) {
                (Port::In1, Port::Out1) => Complex64::new(theta.cos(), 0.0),
                (Port::In2, Port::Out1) => i * theta.sin(),
                (Port::In1, Port::Out2) => phase * i * theta.sin(),
                (Port::In2, Port::Out2) => phase * theta.cos(),
                _ => unreachable!(),
            }
        }
        _ => unreachable!(),
    }
}

pub fn paths(spec: &InterferometerSpec) -> Vec<Path> {
    let src = &spec.source().name;
    let start = spec
        .channels()
        .iter()
        .find(|c| &c.from.node == src)
        .unwrap();
    let mut out = Vec::new();
    let mut stack = vec![(start, vec![start.name.clone()], Complex64::new(1.0, 0.0))];
    while let Some((ch, names, amp)) = stack.pop() {
        let node = spec.nodes().iter().find(|n| n.name == ch.to.node).unwrap();
        if node.kind == NodeKind::Detector {
            out.push(Path {
                channels: names,
                detector: node.name.clone(),
                amplitude: amp,
            });
            continue;
        }
        for next in spec.channels().iter().filter(|c| c.from.node == node.name) {
            let coef = coefficient(&node.kind, ch.to.port, next.from.port);
            let mut n2 = names.clone();
            n2.push(next.name.clone());
            stack.push((next, n2, amp * coef));
        }
    }
    out.sort_by(|a, b| a.channels.cmp(&b.channels));
    out
}

fn crosses(path: &Path, targets: &[&str]) -> bool {
    path.channels.iter().any(|c| targets.contains(&c.as_str()))
}

/// Amplitude per (detector, probe bits) where bit k belongs to probe k.
pub fn amplitudes(
    spec: &InterferometerSpec,
    probes: &[OracleProbe],
) -> BTreeMap<(String, usize), Complex64> {
    let mut out = BTreeMap::new();
    for d in spec.detectors() {
        for bits in 0..1usize << probes.len() {
            out.insert((d.to_string(), bits), Complex64::new(0.0, 0.0));
        }
    }
    for path in paths(spec) {
        for bits in 0..1usize << probes.len() {
            let mut amp = path.amplitude;
            for (k, p) in probes.iter().enumerate() {
                let set = bits >> k & 1 == 1;
                amp *= match (crosses(&path, &p.targets), set) {
                    (true, false) => p.eps.cos(),
                    (true, true) => p.eps.sin(),
                    (false, false) => 1.0,
                    (false, true) => 0.0,
                };
            }
            *out.get_mut(&(path.detector.clone(), bits)).unwrap() += amp;
        }
    }
    out
}

pub fn probabilities(
    spec: &InterferometerSpec,
    probes: &[OracleProbe],
) -> BTreeMap<(String, usize), f64> {
    amplitudes(spec, probes)
        .into_iter()
        .map(|(k, a)| (k, a.norm_sqr()))
        .collect()
}

/// Sum of path amplitudes into `detector` restricted to paths crossing `through`.
pub fn restricted_amplitude(
    spec: &InterferometerSpec,
    through: &[&str],
    detector: &str,
) -> Complex64 {
    paths(spec)
        .iter()
        .filter(|p| p.detector == detector && (through.is_empty() || crosses(p, through)))
        .map(|p| p.amplitude)
        .sum()
}

/// Weak value of "the path crossed one of `through`" with post-selection on `detector`.
pub fn weak_value(spec: &InterferometerSpec, through: &[&str], detector: &str) -> Complex64 {
    restricted_amplitude(spec, through, detector) / restricted_amplitude(spec, &[], detector)
}

/// Decoherence entry between single-slot histories `(x, det)` and `(y, det)`.
pub fn decoherence(spec: &InterferometerSpec, x: &[&str], y: &[&str], detector: &str) -> Complex64 {
    restricted_amplitude(spec, y, detector).conj() * restricted_amplitude(spec, x, detector)
}
