use std::collections::BTreeSet;
use std::fmt;

use super::{check_consistency, decoherence_matrix, refine_frameworks, Framework, ProjectorExpr};
use crate::error::{Error, Result};
use crate::evolution::Experiment;

/// One conditional event `framework:EXPR[@slot]|detector`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub framework: String,
    /// Defaults to the framework's only decomposition slot.
    pub slot: Option<usize>,
    pub event: Vec<String>,
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.framework, self.event.join("+"))?;
        if let Some(s) = self.slot {
            write!(f, "@{s}")?;
        }
        Ok(())
    }
}

/// A conjunction of events under a common detector condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub terms: Vec<Term>,
    pub detector: String,
}

impl Query {
    /// Parse `f1:A|D1 & f2:C|D1`. The detector may also be given once at the
    /// end, as in `f1:A & f2:C | D1`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::FrameworkSyntax(format!("{m} in query {text:?}"));
        let mut terms = Vec::new();
        let mut detector: Option<String> = None;
        for part in text.split('&').map(str::trim) {
            let (body, det) = match part.split_once('|') {
                Some((b, d)) => (b.trim(), Some(d.trim())),
                None => (part, None),
            };
            if let Some(d) = det {
                if !crate::interferometer::is_ident(d) {
                    return Err(bad("bad detector"));
                }
                match &detector {
                    Some(prev) if prev != d => return Err(bad("conflicting conditions")),
                    _ => detector = Some(d.to_string()),
                }
            }
            let (framework, event) = body
                .split_once(':')
                .ok_or_else(|| bad("expected FRAMEWORK:EVENT"))?;
            let (event, slot) = match event.split_once('@') {
                Some((e, s)) => (
                    e,
                    Some(
                        s.trim()
                            .trim_start_matches("slot")
                            .parse::<usize>()
                            .map_err(|_| bad("bad slot"))?,
                    ),
                ),
                None => (event, None),
            };
            let event: Vec<String> = event.split('+').map(|s| s.trim().to_string()).collect();
            let framework = framework.trim().to_string();
            if !crate::interferometer::is_ident(&framework)
                || event.iter().any(|e| !crate::interferometer::is_ident(e))
            {
                return Err(bad("bad term"));
            }
            terms.push(Term {
                framework,
                slot,
                event,
            });
        }
        let detector = detector.ok_or_else(|| bad("missing |DETECTOR"))?;
        Ok(Self { terms, detector })
    }

    pub fn frameworks(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.terms {
            if !out.contains(&t.framework.as_str()) {
                out.push(&t.framework);
            }
        }
        out
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self.terms.iter().map(|t| t.to_string()).collect();
        write!(f, "{} | {}", terms.join(" & "), self.detector)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Answered(f64),
    Refused(String),
}

impl Verdict {
    pub fn is_refused(&self) -> bool {
        matches!(self, Verdict::Refused(_))
    }

    pub fn probability(&self) -> Option<f64> {
        match self {
            Verdict::Answered(p) => Some(*p),
            Verdict::Refused(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuardAnswer {
    pub query: Query,
    pub verdict: Verdict,
}

/// Named frameworks over one experiment; answers conditional queries only
/// within a single consistent framework or a consistent common refinement.
#[derive(Debug, Clone)]
pub struct InferenceGuard<'a> {
    exp: &'a Experiment,
    frameworks: Vec<(String, Framework)>,
    tol: f64,
}

impl<'a> InferenceGuard<'a> {
    pub fn new(exp: &'a Experiment, tol: f64) -> Self {
        Self {
            exp,
            frameworks: Vec::new(),
            tol,
        }
    }

    /// Register (or replace) a named framework.
    pub fn register(&mut self, name: &str, framework: Framework) {
        match self.frameworks.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = framework,
            None => self.frameworks.push((name.to_string(), framework)),
        }
    }

    pub fn framework(&self, name: &str) -> Option<&Framework> {
        self.frameworks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
    }

    pub fn ask(&self, query: &Query) -> GuardAnswer {
        let verdict = match self.evaluate(query) {
            Ok(p) => Verdict::Answered(p),
            Err(reason) => Verdict::Refused(reason),
        };
        GuardAnswer {
            query: query.clone(),
            verdict,
        }
    }

    fn evaluate(&self, query: &Query) -> std::result::Result<f64, String> {
        let names = query.frameworks();
        let mut combined: Option<Framework> = None;
        for name in &names {
            let f = self
                .framework(name)
                .ok_or_else(|| format!("unknown framework {name}"))?;
            combined = Some(match combined {
                None => f.clone(),
                Some(acc) => {
                    refine_frameworks(self.exp, &acc, f, self.tol).map_err(|e| match e {
                        Error::IncompatibleFrameworks {
                            max_offdiag,
                            witness,
                        } => format!(
                            "single framework rule: frameworks {} cannot be combined \
                         (refinement inconsistent, |D| = {max_offdiag:.6e} at {} / {})",
                            names.join(", "),
                            witness.0,
                            witness.1
                        ),
                        other => format!("single framework rule: {other}"),
                    })?
                }
            });
        }
        let framework = combined.ok_or("empty query")?;
        let dm = decoherence_matrix(self.exp, &framework);
        let report = check_consistency(&dm, self.tol);
        if !report.consistent {
            return Err(format!(
                "framework {} is inconsistent (|D| = {:.6e}); no probabilities assigned",
                names.join(", "),
                report.max_offdiag
            ));
        }
        let spec = self.exp.spec();
        let d = spec
            .detector_index(&query.detector)
            .map_err(|e| e.to_string())?;

        // per term: decomposition index and the atoms making up the event
        let mut constraints: Vec<(usize, BTreeSet<usize>)> = Vec::new();
        for term in &query.terms {
            let own = self.framework(&term.framework).expect("checked above");
            let slot = match term.slot {
                Some(s) => s,
                None => match own.decompositions() {
                    [only] => only.slot,
                    _ => return Err(format!("term {term} needs an explicit @slot")),
                },
            };
            let labels: Vec<&str> = term.event.iter().map(String::as_str).collect();
            let channels = ProjectorExpr::channels(slot, &labels)
                .resolve(spec)
                .map_err(|e| e.to_string())?;
            let k = framework
                .decompositions()
                .iter()
                .position(|dec| dec.slot == slot)
                .ok_or_else(|| {
                    format!("term {term}: framework has no decomposition at slot {slot}")
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
                return Err(format!(
                    "term {term} is not a union of the framework's projectors"
                ));
            }
            constraints.push((k, atoms));
        }

        let probs = dm.probabilities();
        let mut given = 0.0;
        let mut joint = 0.0;
        for (i, key) in dm.keys.iter().enumerate() {
            if key.detector != d {
                continue;
            }
            given += probs[i];
            if constraints
                .iter()
                .all(|(k, atoms)| atoms.contains(&key.atoms[*k]))
            {
                joint += probs[i];
            }
        }
        if given < super::ZERO_PROBABILITY {
            return Err(format!("condition {} has zero probability", query.detector));
        }
        Ok(joint / given)
    }
}

/// Answer every query against the named frameworks.
pub fn inference_guard(
    exp: &Experiment,
    frameworks: &[(String, Framework)],
    queries: &[Query],
    tol: f64,
) -> Vec<GuardAnswer> {
    let mut guard = InferenceGuard::new(exp, tol);
    for (name, f) in frameworks {
        guard.register(name, f.clone());
    }
    queries.iter().map(|q| guard.ask(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::histories::DEFAULT_TOL;
    use crate::interferometer::default_nested_mzi;

    fn guard(exp: &Experiment) -> InferenceGuard<'_> {
        let mut g = InferenceGuard::new(exp, DEFAULT_TOL);
        g.register(
            "f1",
            Framework::parse(exp.spec(), "probe:{A, B+C}").unwrap(),
        );
        g.register(
            "f2",
            Framework::parse(exp.spec(), "probe:{C, A+B}").unwrap(),
        );
        g
    }

    #[test]
    fn parse_queries() {
        let q = Query::parse("f1:A|D1 & f2:C|D1").unwrap();
        assert_eq!(q.frameworks(), ["f1", "f2"]);
        assert_eq!(q.detector, "D1");
        assert_eq!(Query::parse("f1:A & f2:C | D1").unwrap(), q);
        let q = Query::parse("f1:B+C@3|D3").unwrap();
        assert_eq!(q.terms[0].slot, Some(3));
        assert_eq!(q.terms[0].event, ["B", "C"]);
        for bad in ["f1:A", "A|D1", "f1:A|D1 & f2:C|D2", "f1:A@x|D1", "f1:A+|D1"] {
            assert!(Query::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn single_framework_answers() {
        let exp = Experiment::without_probes(default_nested_mzi());
        let g = guard(&exp);
        let a = g.ask(&Query::parse("f1:A|D1").unwrap());
        assert!((a.verdict.probability().unwrap() - 1.0).abs() < 1e-12);
        let a = g.ask(&Query::parse("f1:A|D1 & f1:A|D1").unwrap());
        assert!((a.verdict.probability().unwrap() - 1.0).abs() < 1e-12);
        let a = g.ask(&Query::parse("f1:B+C|D3").unwrap());
        assert!((a.verdict.probability().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_framework_refused() {
        let exp = Experiment::without_probes(default_nested_mzi());
        let g = guard(&exp);
        let a = g.ask(&Query::parse("f1:A|D1 & f2:C|D1").unwrap());
        match a.verdict {
            Verdict::Refused(reason) => assert!(reason.contains("single framework rule")),
            v => panic!("expected refusal, got {v:?}"),
        }
        // f2 alone is itself inconsistent at these parameters
        assert!(g
            .ask(&Query::parse("f2:C|D1").unwrap())
            .verdict
            .is_refused());
        assert!(g
            .ask(&Query::parse("f9:C|D1").unwrap())
            .verdict
            .is_refused());
        assert!(g
            .ask(&Query::parse("f1:B|D1").unwrap())
            .verdict
            .is_refused());
    }
}
