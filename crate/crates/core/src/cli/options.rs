use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use super::CliError;
use crate::interferometer::{is_ident, ProbeDecl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Text,
}

/// Which histories must be mutually consistent for a scan hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Every history of the framework, over all detectors.
    Full,
    /// Only the histories ending in the conditioning detector.
    Branch,
}

/// Options shared by all subcommands. Every flag may also be given in a
/// `--config` file as a `key=value` line; command-line values override
/// single-valued keys and extend repeatable ones.
#[derive(Debug, Clone, Args)]
pub struct Options {
    /// Interferometer description (defaults to the built-in nested MZI).
    #[arg(long, global = true, value_name = "PATH")]
    pub itf: Option<PathBuf>,
    /// Probes as name:targets:eps[:slot], comma separated (e.g. w:B+C:0.1).
    #[arg(long, global = true, value_name = "LIST")]
    pub probes: Vec<String>,
    /// Post-selection detector.
    #[arg(long, global = true)]
    pub post: Option<String>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub runs: u64,
    /// Output format (default: csv for mc, text otherwise).
    #[arg(long, global = true, value_enum)]
    pub out: Option<Format>,
    /// Consistency tolerance relative to the largest history probability.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub tol: f64,
    /// Worker threads for mc and scan; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    /// Framework as [name=]SPEC, e.g. f1=probe:{A,B+C}; repeatable.
    #[arg(long, global = true, value_name = "SPEC")]
    pub framework: Vec<String>,
    /// Detector to condition on; repeatable.
    #[arg(long, global = true, value_name = "DETECTOR")]
    pub given: Vec<String>,
    /// Combine two named frameworks.
    #[arg(long, global = true, num_args = 2, value_names = ["F1", "F2"])]
    pub combine: Option<Vec<String>>,
    /// Guarded query such as "f1:A|D1 & f2:C|D1"; repeatable.
    #[arg(long, global = true)]
    pub query: Vec<String>,
    /// Probe readout to condition on, e.g. b=1; repeatable.
    #[arg(long, global = true, value_name = "PROBE=BIT")]
    pub condition: Vec<String>,
    /// Weak-trace presence threshold on |W|.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub threshold: f64,
    /// Extra weak-value projector EXPR[@slot], e.g. B+C@3; repeatable.
    #[arg(long, global = true)]
    pub expr: Vec<String>,
    /// With `weak`: also print the histories comparison.
    #[arg(long, global = true)]
    pub compare: bool,
    /// Scan parameter NODE.theta|phi=start:stop:steps or NODE.theta=value.
    #[arg(long, global = true, value_name = "NODE.PARAM=RANGE")]
    pub param: Vec<String>,
    /// Scan target event, e.g. "C|D1".
    #[arg(long, global = true)]
    pub target: Option<String>,
    /// Minimum conditional probability of the scan target.
    #[arg(long, global = true, default_value_t = 0.999)]
    pub min: f64,
    /// Consistency scope for scan hits.
    #[arg(long, global = true, value_enum, default_value_t = Scope::Full)]
    pub scope: Scope,
    /// key=value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the report to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub output: Option<PathBuf>,
}

/// Parse `a:A:0.1,w:B+C:0.1:3`.
pub fn parse_probe_list(text: &str) -> Result<Vec<ProbeDecl>, CliError> {
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let parts: Vec<&str> = item.split(':').map(str::trim).collect();
        let bad = || {
            CliError::Usage(format!(
                "bad probe {item:?}, expected name:targets:eps[:slot]"
            ))
        };
        if !(3..=4).contains(&parts.len()) || !is_ident(parts[0]) {
            return Err(bad());
        }
        let targets: Vec<String> = parts[1].split('+').map(|t| t.trim().to_string()).collect();
        if targets.iter().any(|t| !is_ident(t)) {
            return Err(bad());
        }
        let epsilon: f64 = parts[2].parse().map_err(|_| bad())?;
        let slot = match parts.get(3) {
            Some(s) => Some(s.parse::<usize>().map_err(|_| bad())?),
            None => None,
        };
        out.push(ProbeDecl {
            name: parts[0].to_string(),
            targets,
            epsilon,
            slot,
        });
    }
    Ok(out)
}

/// One swept parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub node: String,
    /// `theta` or `phi`.
    pub param: String,
    pub values: Vec<f64>,
}

impl ParamRange {
    /// `BS1.theta=0:1.5707963267948966:11`, `BS1.phi=3.141592653589793`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |m: &str| CliError::Usage(format!("bad --param {text:?}: {m}"));
        let (lhs, rhs) = text
            .split_once('=')
            .ok_or_else(|| bad("expected NODE.PARAM=RANGE"))?;
        let (node, param) = lhs
            .trim()
            .split_once('.')
            .ok_or_else(|| bad("expected NODE.PARAM"))?;
        if !is_ident(node) || !matches!(param, "theta" | "phi") {
            return Err(bad("parameter must be theta or phi"));
        }
        let num = |s: &str| -> Result<f64, CliError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad("not a finite number"))
        };
        let parts: Vec<&str> = rhs.split(':').collect();
        let values = match parts.as_slice() {
            [v] => vec![num(v)?],
            [start, stop, steps] => {
                let (a, b) = (num(start)?, num(stop)?);
                let n: usize = steps
                    .trim()
                    .parse()
                    .map_err(|_| bad("steps must be an integer"))?;
                match n {
                    0 => vec![],
                    1 => vec![a],
                    _ => (0..n)
                        .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
                        .collect(),
                }
            }
            _ => return Err(bad("expected start:stop:steps or a single value")),
        };
        Ok(Self {
            node: node.to_string(),
            param: param.to_string(),
            values,
        })
    }
}

/// Insert the `key=value` lines of a `--config` file right after the program
/// name, so explicit flags override them.
pub(super) fn splice_config(args: Vec<String>) -> Result<Vec<String>, CliError> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Io(format!("{path}: {e}")))?;
    let mut extra = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{path}:{}: expected key=value", n + 1)))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "config" || key.is_empty() || key.starts_with('-') {
            return Err(CliError::Usage(format!(
                "{path}:{}: bad key {key:?}",
                n + 1
            )));
        }
        match (key, value) {
            ("compare", "true") => extra.push("--compare".to_string()),
            ("compare", "false") => {}
            ("combine", v) => {
                extra.push("--combine".into());
                extra.extend(v.split_whitespace().map(String::from));
            }
            (k, v) => {
                extra.push(format!("--{k}"));
                extra.push(v.to_string());
            }
        }
    }
    let mut out = Vec::with_capacity(args.len() + extra.len());
    let mut rest = args.into_iter();
    out.extend(rest.next());
    out.extend(extra);
    out.extend(rest);
    Ok(out)
}

/// Canonical configuration text hashed into every report. Worker count,
/// output format and destination are excluded: they do not change results.
pub(super) fn canonical_config(
    command: &str,
    spec_text: &str,
    probes: &[ProbeDecl],
    o: &Options,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "command={command}");
    let _ = writeln!(s, "itf-sha256={}", crate::report::digest(spec_text));
    for p in probes {
        let _ = writeln!(
            s,
            "probe={}:{}:{:?}:{}",
            p.name,
            p.targets.join("+"),
            p.epsilon,
            p.slot.map(|t| t.to_string()).unwrap_or_default()
        );
    }
    let _ = writeln!(s, "post={}", o.post.as_deref().unwrap_or(""));
    let _ = writeln!(s, "seed={}", o.seed);
    let _ = writeln!(s, "runs={}", o.runs);
    let _ = writeln!(s, "tol={:?}", o.tol);
    let _ = writeln!(s, "threshold={:?}", o.threshold);
    let _ = writeln!(s, "min={:?}", o.min);
    let _ = writeln!(s, "scope={:?}", o.scope);
    let _ = writeln!(s, "compare={}", o.compare);
    let lists: [(&str, &[String]); 6] = [
        ("framework", &o.framework),
        ("given", &o.given),
        ("query", &o.query),
        ("condition", &o.condition),
        ("expr", &o.expr),
        ("param", &o.param),
    ];
    for (key, values) in lists {
        for v in values {
            let _ = writeln!(s, "{key}={v}");
        }
    }
    if let Some(c) = &o.combine {
        let _ = writeln!(s, "combine={}", c.join(" "));
    }
    if let Some(t) = &o.target {
        let _ = writeln!(s, "target={t}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probe_lists() {
        let p = parse_probe_list("a:A:0.1, w:B+C:0.05:3").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].targets, ["B", "C"]);
        assert_eq!(p[1].slot, Some(3));
        for bad in ["a:A", "a:A:x", "a:B+:0.1", "1a:A:0.1", "a:A:0.1:s"] {
            assert!(parse_probe_list(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn param_ranges() {
        let r = ParamRange::parse("BS1.theta=0:1:5").unwrap();
        assert_eq!(r.values, [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(ParamRange::parse("BS1.phi=2").unwrap().values, [2.0]);
        assert!(ParamRange::parse("BS1.theta=0:1:0")
            .unwrap()
            .values
            .is_empty());
        for bad in [
            "BS1.x=1",
            "BS1=1",
            "BS1.theta=a:b:2",
            "BS1.theta=0:1",
            "BS1.theta=inf",
        ] {
            assert!(ParamRange::parse(bad).is_err(), "{bad}");
        }
    }
}
