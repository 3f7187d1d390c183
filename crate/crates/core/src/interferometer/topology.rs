use std::collections::{BTreeSet, HashMap, HashSet};
use std::f64::consts::FRAC_PI_2;

use super::{ChannelSpec, InterferometerSpec, NodeKind, NodeSpec, Port, PortRef, ProbeDecl};
use crate::error::{Error, Result};

pub(super) fn build(
    nodes: Vec<NodeSpec>,
    channels: Vec<ChannelSpec>,
    probes: Vec<ProbeDecl>,
) -> Result<InterferometerSpec> {
    check_unique(nodes.iter().map(|n| n.name.as_str()))?;
    check_unique(channels.iter().map(|c| c.name.as_str()))?;
    check_unique(probes.iter().map(|p| p.name.as_str()))?;
    for node in &nodes {
        if let NodeKind::BeamSplitter { theta, phi } = node.kind {
            if !(0.0..=FRAC_PI_2).contains(&theta) {
                return Err(Error::InvalidParameter(format!(
                    "{}: theta {theta} outside [0, pi/2]",
                    node.name
                )));
            }
            if !phi.is_finite() {
                return Err(Error::InvalidParameter(format!("{}: phi {phi}", node.name)));
            }
        }
    }

    let sources: Vec<usize> = (0..nodes.len())
        .filter(|&i| nodes[i].kind == NodeKind::Source)
        .collect();
    let source = match sources.as_slice() {
        [] => return Err(Error::NoSource),
        [s] => *s,
        many => {
            let names: Vec<_> = many.iter().map(|&i| nodes[i].name.as_str()).collect();
            return Err(Error::MultipleSources(names.join(", ")));
        }
    };

    let index: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.name.as_str(), i))
        .collect();
    let mut used: HashSet<(usize, Port)> = HashSet::new();
    let mut endpoints = Vec::with_capacity(channels.len());
    for ch in &channels {
        let from = endpoint(&index, &nodes, &ch.from, false)?;
        let to = endpoint(&index, &nodes, &ch.to, true)?;
        for (node, port, r) in [(from, ch.from.port, &ch.from), (to, ch.to.port, &ch.to)] {
            if !used.insert((node, port)) {
                return Err(Error::PortConnectedTwice(r.to_string()));
            }
        }
        endpoints.push((from, to));
    }

    let topo_order = topological_order(&nodes, &endpoints)?;

    for (i, node) in nodes.iter().enumerate() {
        let connected = |p: Port| used.contains(&(i, p));
        let port_ref = |p: Port| format!("{}.{}", node.name, p.as_str());
        for &p in node.kind.outputs() {
            if !connected(p) {
                return Err(Error::DanglingPort(port_ref(p)));
            }
        }
        let inputs = node.kind.inputs();
        match node.kind {
            // A free beam-splitter input is a vacuum port; one connected input suffices.
            NodeKind::BeamSplitter { .. } => {
                if !inputs.iter().any(|&p| connected(p)) {
                    return Err(Error::DanglingPort(port_ref(Port::In1)));
                }
            }
            _ => {
                if let Some(&p) = inputs.iter().find(|&&p| !connected(p)) {
                    return Err(Error::DanglingPort(port_ref(p)));
                }
            }
        }
    }

    let slots = assign_slots(&nodes, &endpoints, &topo_order, source);
    let final_slot = slots.iter().copied().max().unwrap_or(0);
    let segments = mirror_segments(&nodes, &endpoints);
    let detectors = (0..nodes.len())
        .filter(|&i| nodes[i].kind == NodeKind::Detector)
        .collect();

    let spec = InterferometerSpec {
        nodes,
        channels,
        probes,
        source,
        detectors,
        slots,
        topo_order,
        endpoints,
        segments,
        final_slot,
    };
    check_probes(&spec)?;
    Ok(spec)
}

fn check_unique<'a>(names: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(Error::DuplicateName(n.to_string()));
        }
    }
    Ok(())
}

fn endpoint(
    index: &HashMap<&str, usize>,
    nodes: &[NodeSpec],
    r: &PortRef,
    incoming: bool,
) -> Result<usize> {
    let &i = index
        .get(r.node.as_str())
        .ok_or_else(|| Error::UnknownNode(r.node.clone()))?;
    let kind = &nodes[i].kind;
    let allowed = if incoming {
        kind.inputs()
    } else {
        kind.outputs()
    };
    if !allowed.contains(&r.port) {
        return Err(Error::UnknownPort(r.to_string()));
    }
    Ok(i)
}

/// Kahn's algorithm, always taking the earliest-declared ready node.
fn topological_order(nodes: &[NodeSpec], endpoints: &[(usize, usize)]) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut indegree = vec![0usize; n];
    for &(_, to) in endpoints {
        indegree[to] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&next) = ready.iter().next() {
        ready.remove(&next);
        order.push(next);
        for &(from, to) in endpoints {
            if from == next {
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    ready.insert(to);
                }
            }
        }
    }
    if order.len() < n {
        let stuck: Vec<_> = (0..n)
            .filter(|&i| indegree[i] > 0)
            .map(|i| nodes[i].name.as_str())
            .collect();
        return Err(Error::NotADag(stuck.join(", ")));
    }
    Ok(order)
}

/// Longest-path rank with every element counted as one step; mirrors are
/// then executed together with the element feeding them and detectors all
/// sit on the last slot.
fn assign_slots(
    nodes: &[NodeSpec],
    endpoints: &[(usize, usize)],
    order: &[usize],
    source: usize,
) -> Vec<usize> {
    let preds = |i: usize| {
        endpoints
            .iter()
            .filter(move |&&(_, to)| to == i)
            .map(|&(f, _)| f)
    };
    let mut rank = vec![0usize; nodes.len()];
    for &i in order {
        if i != source && nodes[i].kind != NodeKind::Detector {
            rank[i] = preds(i).map(|p| rank[p] + 1).max().unwrap_or(0);
        }
    }
    let last = (0..nodes.len())
        .filter(|&i| nodes[i].kind != NodeKind::Detector)
        .map(|i| rank[i])
        .max()
        .unwrap_or(0);
    let mut slots = vec![0usize; nodes.len()];
    for &i in order {
        slots[i] = match nodes[i].kind {
            NodeKind::Source => 0,
            NodeKind::BeamSplitter { .. } => rank[i],
            NodeKind::Mirror => preds(i).map(|p| slots[p]).max().unwrap_or(0).max(1),
            NodeKind::Detector => last,
        };
    }
    slots
}

fn mirror_segments(nodes: &[NodeSpec], endpoints: &[(usize, usize)]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..endpoints.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for (m, node) in nodes.iter().enumerate() {
        if node.kind != NodeKind::Mirror {
            continue;
        }
        let incoming = endpoints.iter().position(|&(_, to)| to == m);
        let outgoing = endpoints.iter().position(|&(from, _)| from == m);
        if let (Some(a), Some(b)) = (incoming, outgoing) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    (0..endpoints.len()).map(|c| find(&mut parent, c)).collect()
}

fn check_probes(spec: &InterferometerSpec) -> Result<()> {
    for p in spec.probe_decls() {
        if !(0.0..=FRAC_PI_2).contains(&p.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "probe {}: epsilon {} outside [0, pi/2]",
                p.name, p.epsilon
            )));
        }
        let slot = p.slot.unwrap_or_else(|| spec.probe_slot());
        spec.check_slot(slot)?;
        let mut seen = HashSet::new();
        for t in &p.targets {
            spec.channel_index(t)?;
            let c = spec
                .resolve(t, slot)
                .map_err(|_| Error::TargetNotOccupiedAtSlot {
                    probe: p.name.clone(),
                    channel: t.clone(),
                    slot,
                })?;
            if !seen.insert(c) {
                return Err(Error::DuplicateName(format!("{}: target {t}", p.name)));
            }
        }
    }
    Ok(())
}
