use std::collections::BTreeSet;

use super::{ExprKind, ProjectorExpr};
use crate::error::{Error, Result};
use crate::interferometer::InterferometerSpec;
use crate::linalg::{diagonal_projector, max_abs_diff, CMatrix};

/// One element of a slot decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub label: String,
    /// Occupied channels the projector covers.
    pub channels: BTreeSet<usize>,
    /// Added automatically to complete the decomposition.
    pub complement: bool,
}

/// Mutually orthogonal projectors at one slot, summing to the identity on
/// the occupied subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub slot: usize,
    pub atoms: Vec<Atom>,
}

/// Per-slot decompositions; the histories are their Cartesian product
/// followed by a detector event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Framework {
    decomps: Vec<Decomposition>,
}

impl Framework {
    /// Only detector events.
    pub fn trivial() -> Self {
        Self::default()
    }

    /// Build from user expressions per slot; the complement of the listed
    /// channels is appended when it is nonzero on the occupied subspace.
    pub fn new(spec: &InterferometerSpec, slots: Vec<(usize, Vec<ProjectorExpr>)>) -> Result<Self> {
        let mut decomps: Vec<Decomposition> = Vec::new();
        for (slot, exprs) in slots {
            if decomps.iter().any(|d| d.slot == slot) {
                return Err(Error::FrameworkSyntax(format!("slot {slot} given twice")));
            }
            let mut atoms: Vec<Atom> = Vec::new();
            for e in exprs {
                if e.slot != slot {
                    return Err(Error::FrameworkSyntax(format!(
                        "{} belongs to slot {}, not {slot}",
                        e.label(),
                        e.slot
                    )));
                }
                let channels = e.resolve(spec)?;
                if channels.is_empty() {
                    continue;
                }
                if let Some(prev) = atoms.iter().find(|a| !a.channels.is_disjoint(&channels)) {
                    return Err(Error::OverlappingProjectors {
                        slot,
                        first: prev.label.clone(),
                        second: e.label(),
                    });
                }
                atoms.push(Atom {
                    label: e.label(),
                    channels,
                    complement: matches!(e.kind, ExprKind::Complement(_)),
                });
            }
            let covered: BTreeSet<usize> = atoms.iter().flat_map(|a| a.channels.clone()).collect();
            let rest: BTreeSet<usize> = spec
                .occupied(slot)
                .into_iter()
                .filter(|c| !covered.contains(c))
                .collect();
            if !rest.is_empty() {
                let listed: Vec<String> = atoms.iter().map(|a| a.label.clone()).collect();
                atoms.push(Atom {
                    label: format!("~({})", listed.join(",")),
                    channels: rest,
                    complement: true,
                });
            }
            decomps.push(Decomposition { slot, atoms });
        }
        decomps.sort_by_key(|d| d.slot);
        Ok(Self { decomps })
    }

    /// Parse `slot3:{A, B+C}; detector`. A slot is written `probe`,
    /// `slotN` or `N`; the detector entry is optional and implied.
    pub fn parse(spec: &InterferometerSpec, text: &str) -> Result<Self> {
        let mut slots = Vec::new();
        for entry in text.split(';').map(str::trim).filter(|e| !e.is_empty()) {
            if entry == "detector" {
                continue;
            }
            let (slot_text, body) = entry.split_once(':').ok_or_else(|| {
                Error::FrameworkSyntax(format!("expected SLOT:{{...}} in {entry:?}"))
            })?;
            let slot = parse_slot(spec, slot_text.trim())?;
            let body = body.trim();
            let inner = body
                .strip_prefix('{')
                .and_then(|b| b.strip_suffix('}'))
                .ok_or_else(|| Error::FrameworkSyntax(format!("expected {{...}} in {entry:?}")))?;
            let mut exprs = Vec::new();
            for item in inner.split(',').map(str::trim) {
                let labels: Vec<&str> = item.split('+').map(str::trim).collect();
                if labels.iter().any(|l| !crate::interferometer::is_ident(l)) {
                    return Err(Error::FrameworkSyntax(format!("bad projector {item:?}")));
                }
                exprs.push(ProjectorExpr::channels(slot, &labels));
            }
            slots.push((slot, exprs));
        }
        Self::new(spec, slots)
    }

    pub fn decompositions(&self) -> &[Decomposition] {
        &self.decomps
    }

    pub fn decomposition_at(&self, slot: usize) -> Option<&Decomposition> {
        self.decomps.iter().find(|d| d.slot == slot)
    }

    /// Canonical text, reparseable with [`Framework::parse`].
    pub fn describe(&self) -> String {
        let mut parts: Vec<String> = self
            .decomps
            .iter()
            .map(|d| {
                let atoms: Vec<&str> = d
                    .atoms
                    .iter()
                    .filter(|a| !a.complement)
                    .map(|a| a.label.as_str())
                    .collect();
                format!("slot{}:{{{}}}", d.slot, atoms.join(", "))
            })
            .collect();
        parts.push("detector".into());
        parts.join("; ")
    }
}

fn parse_slot(spec: &InterferometerSpec, text: &str) -> Result<usize> {
    let slot = if text == "probe" {
        spec.probe_slot()
    } else {
        text.strip_prefix("slot")
            .unwrap_or(text)
            .parse::<usize>()
            .map_err(|_| Error::FrameworkSyntax(format!("bad slot {text:?}")))?
    };
    spec.check_slot(slot)?;
    Ok(slot)
}

pub(crate) fn atom_projector(n: usize, atom: &Atom) -> CMatrix {
    diagonal_projector(n, atom.channels.iter().copied())
}

/// Fails when any projector of `a` fails to commute with any of `b`.
pub fn check_commuting(slot: usize, a: &[CMatrix], b: &[CMatrix]) -> Result<()> {
    for p in a {
        for q in b {
            if max_abs_diff(&(p * q), &(q * p)) > 1e-12 {
                return Err(Error::NonCommutingProjectors { slot });
            }
        }
    }
    Ok(())
}

/// Common refinement without the consistency step: per-slot products of
/// projectors, in lexicographic order of the factors, zero products dropped.
pub(crate) fn refine_structure(
    spec: &InterferometerSpec,
    f1: &Framework,
    f2: &Framework,
) -> Result<Framework> {
    let n = spec.n_channels();
    let mut slots: BTreeSet<usize> = f1.decomps.iter().map(|d| d.slot).collect();
    slots.extend(f2.decomps.iter().map(|d| d.slot));
    let mut decomps = Vec::new();
    for slot in slots {
        let decomp = match (f1.decomposition_at(slot), f2.decomposition_at(slot)) {
            (Some(a), None) | (None, Some(a)) => a.clone(),
            (Some(a), Some(b)) => {
                let pa: Vec<CMatrix> = a.atoms.iter().map(|x| atom_projector(n, x)).collect();
                let pb: Vec<CMatrix> = b.atoms.iter().map(|x| atom_projector(n, x)).collect();
                check_commuting(slot, &pa, &pb)?;
                let mut atoms = Vec::new();
                for x in &a.atoms {
                    for y in &b.atoms {
                        let channels: BTreeSet<usize> =
                            x.channels.intersection(&y.channels).copied().collect();
                        if channels.is_empty() {
                            continue;
                        }
                        let (label, complement) = if channels == x.channels {
                            (x.label.clone(), x.complement)
                        } else if channels == y.channels {
                            (y.label.clone(), y.complement)
                        } else {
                            let names: Vec<&str> =
                                channels.iter().map(|&c| spec.display_name(c)).collect();
                            (names.join("+"), false)
                        };
                        atoms.push(Atom {
                            label,
                            channels,
                            complement,
                        });
                    }
                }
                Decomposition { slot, atoms }
            }
            (None, None) => unreachable!(),
        };
        decomps.push(decomp);
    }
    Ok(Framework { decomps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::default_nested_mzi;
    use crate::linalg::{real, CMatrix};

    #[test]
    fn parse_and_complete() {
        let spec = default_nested_mzi();
        let f = Framework::parse(&spec, "slot3:{A, B+C}; detector").unwrap();
        let d = &f.decompositions()[0];
        assert_eq!(d.slot, 3);
        let labels: Vec<_> = d.atoms.iter().map(|a| a.label.as_str()).collect();
        assert_eq!(labels, ["A", "B+C"]);
        let f2 = Framework::parse(&spec, "probe:{A}").unwrap();
        let labels: Vec<_> = f2.decompositions()[0]
            .atoms
            .iter()
            .map(|a| a.label.as_str())
            .collect();
        assert_eq!(labels, ["A", "~(A)"]);
        assert_eq!(Framework::parse(&spec, &f.describe()).unwrap(), f);
    }

    #[test]
    fn parse_errors() {
        let spec = default_nested_mzi();
        for bad in [
            "probe{A}",
            "probe:A,B",
            "slotx:{A}",
            "probe:{A,B+}",
            "3:{A};3:{B}",
        ] {
            assert!(
                matches!(Framework::parse(&spec, bad), Err(Error::FrameworkSyntax(_))),
                "{bad}"
            );
        }
        assert!(matches!(
            Framework::parse(&spec, "probe:{A, A+B}"),
            Err(Error::OverlappingProjectors { .. })
        ));
        assert!(matches!(
            Framework::parse(&spec, "probe:{D}"),
            Err(Error::ChannelNotOccupiedAtSlot { .. })
        ));
        assert!(matches!(
            Framework::parse(&spec, "slot9:{A}"),
            Err(Error::InvalidSlot { .. })
        ));
    }

    #[test]
    fn noncommuting_detected() {
        let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![real(1.0), real(0.0)]));
        let plus = CMatrix::from_element(2, 2, real(0.5));
        assert!(
            check_commuting(1, std::slice::from_ref(&diag), std::slice::from_ref(&diag)).is_ok()
        );
        assert_eq!(
            check_commuting(1, &[diag], &[plus]),
            Err(Error::NonCommutingProjectors { slot: 1 })
        );
    }

    #[test]
    fn refine_structure_products() {
        let spec = default_nested_mzi();
        let f1 = Framework::parse(&spec, "probe:{A, B+C}").unwrap();
        let f2 = Framework::parse(&spec, "probe:{C, A+B}").unwrap();
        let r = refine_structure(&spec, &f1, &f2).unwrap();
        let labels: Vec<_> = r.decompositions()[0]
            .atoms
            .iter()
            .map(|a| a.label.as_str())
            .collect();
        assert_eq!(labels, ["A", "C", "B"]);
        assert_eq!(refine_structure(&spec, &f1, &f1).unwrap(), f1);
        assert_eq!(
            refine_structure(&spec, &f1, &Framework::trivial()).unwrap(),
            f1
        );
    }
}
