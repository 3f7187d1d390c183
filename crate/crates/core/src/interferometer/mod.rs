//! Interferometer descriptions: the line-oriented DSL, topology validation,
//! time-slot assignment and compilation into per-slot unitaries on the
//! channel space.
//!
//! A channel is one basis state of the particle. Every element sits at a
//! time slot; slot 0 holds the source and the last slot holds the
//! detectors. The particle state "at slot t" is the state after all elements
//! of slots `1..=t` have acted, and a channel is *occupied* at slot t when
//! its producing element has acted and its consuming element has not.
//!
//! Mirrors are coefficient-1 relabellings, so a chain of channels joined by
//! mirrors is one optical path segment. Channel labels used in projectors and
//! probe targets resolve through that segment to whichever member is occupied
//! at the requested slot.

mod parse;
mod stages;
mod topology;

use std::collections::BTreeSet;
use std::fmt;

pub(crate) use parse::is_ident;
pub use parse::parse_itf;
pub use stages::{
    compile_stages, node_transfer, node_unitary, validate_unitarity, Interferometer, StageUnitary,
    UnitarityReport,
};

use crate::error::{Error, Result};

/// Canonical nested Mach-Zehnder description shipped with the crate.
pub const NESTED_MZI_ITF: &str = include_str!("../../data/nested_mzi.itf");

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeKind {
    Source,
    /// `out1 = cos(theta) in1 + i sin(theta) in2`,
    /// `out2 = e^{i phi} (i sin(theta) in1 + cos(theta) in2)`.
    BeamSplitter {
        theta: f64,
        phi: f64,
    },
    Mirror,
    Detector,
}

impl NodeKind {
    pub fn keyword(&self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::BeamSplitter { .. } => "bs",
            NodeKind::Mirror => "mirror",
            NodeKind::Detector => "detector",
        }
    }

    pub fn inputs(&self) -> &'static [Port] {
        match self {
            NodeKind::Source => &[],
            NodeKind::BeamSplitter { .. } => &[Port::In1, Port::In2],
            NodeKind::Mirror | NodeKind::Detector => &[Port::In1],
        }
    }

    pub fn outputs(&self) -> &'static [Port] {
        match self {
            NodeKind::Source | NodeKind::Mirror => &[Port::Out1],
            NodeKind::BeamSplitter { .. } => &[Port::Out1, Port::Out2],
            NodeKind::Detector => &[],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Port {
    In1,
    In2,
    Out1,
    Out2,
}

impl Port {
    pub fn as_str(&self) -> &'static str {
        match self {
            Port::In1 => "in1",
            Port::In2 => "in2",
            Port::Out1 => "out1",
            Port::Out2 => "out2",
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Port::In1 | Port::In2)
    }

    fn from_name(s: &str) -> Option<Port> {
        match s {
            "in1" => Some(Port::In1),
            "in2" => Some(Port::In2),
            "out1" => Some(Port::Out1),
            "out2" => Some(Port::Out2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PortRef {
    pub node: String,
    pub port: Port,
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.node, self.port.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub name: String,
    pub from: PortRef,
    pub to: PortRef,
}

/// A probe line of the DSL, before it is checked against slot occupancy.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDecl {
    pub name: String,
    pub targets: Vec<String>,
    pub epsilon: f64,
    /// `None` means the canonical probe slot.
    pub slot: Option<usize>,
}

/// A validated interferometer topology with its time-slot assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferometerSpec {
    nodes: Vec<NodeSpec>,
    channels: Vec<ChannelSpec>,
    probes: Vec<ProbeDecl>,
    source: usize,
    detectors: Vec<usize>,
    /// Slot per node, indexed like `nodes`.
    slots: Vec<usize>,
    /// Node indices in a deterministic topological order.
    topo_order: Vec<usize>,
    /// `(producer node, consumer node)` per channel.
    endpoints: Vec<(usize, usize)>,
    /// Segment id per channel (channels joined through mirrors share one).
    segments: Vec<usize>,
    final_slot: usize,
}

impl InterferometerSpec {
    /// Validate raw declarations and assign time slots.
    pub fn new(
        nodes: Vec<NodeSpec>,
        channels: Vec<ChannelSpec>,
        probes: Vec<ProbeDecl>,
    ) -> Result<Self> {
        topology::build(nodes, channels, probes)
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn channels(&self) -> &[ChannelSpec] {
        &self.channels
    }

    pub fn probe_decls(&self) -> &[ProbeDecl] {
        &self.probes
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn source(&self) -> &NodeSpec {
        &self.nodes[self.source]
    }

    /// The channel leaving the source.
    pub fn source_channel(&self) -> usize {
        self.endpoints
            .iter()
            .position(|&(from, _)| from == self.source)
            .expect("validated spec has a source channel")
    }

    /// Detector names in declaration order.
    pub fn detectors(&self) -> Vec<&str> {
        self.detectors
            .iter()
            .map(|&n| self.nodes[n].name.as_str())
            .collect()
    }

    pub fn detector_index(&self, name: &str) -> Result<usize> {
        self.detectors
            .iter()
            .position(|&n| self.nodes[n].name == name)
            .ok_or_else(|| Error::UnknownDetector(name.to_string()))
    }

    /// Channel feeding the given detector (by detector position).
    pub fn detector_channel(&self, detector: usize) -> usize {
        let node = self.detectors[detector];
        self.endpoints
            .iter()
            .position(|&(_, to)| to == node)
            .expect("validated detector has an input channel")
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node_slot(&self, node: usize) -> usize {
        self.slots[node]
    }

    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.node_index(name).map(|n| self.slots[n])
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Index of the last slot; there are `final_slot() + 1` slots.
    pub fn final_slot(&self) -> usize {
        self.final_slot
    }

    pub fn n_slots(&self) -> usize {
        self.final_slot + 1
    }

    pub fn channel_index(&self, name: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownChannel(name.to_string()))
    }

    pub fn channel_name(&self, channel: usize) -> &str {
        &self.channels[channel].name
    }

    pub fn channel_endpoints(&self, channel: usize) -> (usize, usize) {
        self.endpoints[channel]
    }

    /// Slots during which the channel carries amplitude.
    pub fn occupancy_span(&self, channel: usize) -> std::ops::Range<usize> {
        let (from, to) = self.endpoints[channel];
        let start = self.slots[from];
        let end = if self.nodes[to].kind == NodeKind::Detector {
            self.final_slot + 1
        } else {
            self.slots[to]
        };
        start..end.max(start)
    }

    pub fn is_occupied(&self, channel: usize, slot: usize) -> bool {
        self.occupancy_span(channel).contains(&slot)
    }

    /// Occupied channels at `slot`, in declaration order.
    pub fn occupied(&self, slot: usize) -> Vec<usize> {
        (0..self.channels.len())
            .filter(|&c| self.is_occupied(c, slot))
            .collect()
    }

    /// Label used for a channel in reports: the shortest name on its mirror
    /// segment (earliest declaration wins ties).
    pub fn display_name(&self, channel: usize) -> &str {
        let seg = self.segments[channel];
        let best = (0..self.channels.len())
            .filter(|&c| self.segments[c] == seg)
            .min_by_key(|&c| (self.channels[c].name.len(), c))
            .unwrap_or(channel);
        &self.channels[best].name
    }

    /// Resolve a channel label to the member of its mirror segment that is
    /// occupied at `slot`.
    pub fn resolve(&self, label: &str, slot: usize) -> Result<usize> {
        self.check_slot(slot)?;
        let channel = self.channel_index(label)?;
        if self.is_occupied(channel, slot) {
            return Ok(channel);
        }
        let seg = self.segments[channel];
        (0..self.channels.len())
            .find(|&c| self.segments[c] == seg && self.is_occupied(c, slot))
            .ok_or_else(|| Error::ChannelNotOccupiedAtSlot {
                channel: label.to_string(),
                slot,
            })
    }

    pub fn check_slot(&self, slot: usize) -> Result<()> {
        if slot > self.final_slot {
            Err(Error::InvalidSlot {
                slot,
                last: self.final_slot,
            })
        } else {
            Ok(())
        }
    }

    /// Slot at which probes act by default: the first idle slot (no element
    /// acts there) strictly between the source and the detectors, otherwise
    /// the earliest slot with the most occupied channels.
    pub fn probe_slot(&self) -> usize {
        let idle = (1..self.final_slot).find(|&t| {
            !self.nodes.iter().enumerate().any(|(n, node)| {
                self.slots[n] == t
                    && matches!(node.kind, NodeKind::BeamSplitter { .. } | NodeKind::Mirror)
            })
        });
        idle.unwrap_or_else(|| {
            let mut best = 0;
            for t in 0..=self.final_slot {
                if self.occupied(t).len() > self.occupied(best).len() {
                    best = t;
                }
            }
            best
        })
    }

    /// Copy with one beam splitter's angles replaced.
    pub fn with_beamsplitter(&self, name: &str, theta: f64, phi: f64) -> Result<Self> {
        let idx = self
            .node_index(name)
            .ok_or_else(|| Error::UnknownNode(name.to_string()))?;
        let mut nodes = self.nodes.clone();
        match nodes[idx].kind {
            NodeKind::BeamSplitter { .. } => {
                nodes[idx].kind = NodeKind::BeamSplitter { theta, phi }
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "{name} is not a beam splitter"
                )))
            }
        }
        Self::new(nodes, self.channels.clone(), self.probes.clone())
    }

    /// Copy with the probe declarations replaced.
    pub fn with_probes(&self, probes: Vec<ProbeDecl>) -> Result<Self> {
        Self::new(self.nodes.clone(), self.channels.clone(), probes)
    }

    /// Channels that a set of labels resolves to at `slot`.
    pub fn resolve_set<'a>(
        &self,
        labels: impl IntoIterator<Item = &'a str>,
        slot: usize,
    ) -> Result<BTreeSet<usize>> {
        labels.into_iter().map(|l| self.resolve(l, slot)).collect()
    }
}

/// Canonical text form; reparses to an identical spec.
impl fmt::Display for InterferometerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for node in &self.nodes {
            match node.kind {
                NodeKind::BeamSplitter { theta, phi } => {
                    write!(f, "bs {} theta {:?}", node.name, theta)?;
                    if phi != 0.0 {
                        write!(f, " phi {:?}", phi)?;
                    }
                    writeln!(f)?;
                }
                kind => writeln!(f, "{} {}", kind.keyword(), node.name)?,
            }
        }
        for ch in &self.channels {
            writeln!(f, "chan {}: {} -> {}", ch.name, ch.from, ch.to)?;
        }
        for p in &self.probes {
            write!(
                f,
                "probe {} on {} eps {:?}",
                p.name,
                p.targets.join("+"),
                p.epsilon
            )?;
            if let Some(slot) = p.slot {
                write!(f, " slot {slot}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// The nested Mach-Zehnder of the canonical description: all beam splitters
/// 50/50, no extra phases.
pub fn default_nested_mzi() -> InterferometerSpec {
    parse_itf(NESTED_MZI_ITF).expect("embedded description is valid")
}
