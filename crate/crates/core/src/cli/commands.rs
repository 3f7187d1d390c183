use std::fmt::Write as _;

use serde_json::{json, Value};

use super::options::canonical_config;
use super::scan::{run_scan, ScanSpec, ScanTarget};
use super::{parse_probe_list, Cli, CliError, Command, Format, ParamRange};
use crate::error::Error;
use crate::evolution::{
    conditional_given_probe, joint_outcome_distribution, sample_table, DetectorDistribution,
    Experiment, OutcomeDistribution,
};
use crate::histories::{
    check_consistency, conditional_distribution, decoherence_matrix, refine_frameworks, Framework,
    InferenceGuard, ProjectorExpr, Query, Verdict,
};
use crate::interferometer::{
    default_nested_mzi, parse_itf, validate_unitarity, Interferometer, InterferometerSpec,
};
use crate::report::{fixed17, num};
use crate::weaktrace::{compare_ch_weaktrace, weak_trace_table, Comparison, WeakValueTable};

/// Report text, or the error plus any report produced before it.
pub(super) type Outcome = Result<String, (Option<String>, CliError)>;

fn fail<T>(e: impl Into<CliError>) -> Result<T, (Option<String>, CliError)> {
    Err((None, e.into()))
}

struct Context {
    spec: InterferometerSpec,
    digest: String,
    format: Format,
}

fn load_spec(cli: &Cli) -> Result<InterferometerSpec, CliError> {
    let base = match &cli.options.itf {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            parse_itf(&text)?
        }
        None => default_nested_mzi(),
    };
    let mut probes = base.probe_decls().to_vec();
    for list in &cli.options.probes {
        probes.extend(parse_probe_list(list)?);
    }
    if probes.len() == base.probe_decls().len() {
        return Ok(base);
    }
    Ok(base.with_probes(probes)?)
}

fn context(cli: &Cli, default_format: Format) -> Result<Context, CliError> {
    let spec = load_spec(cli)?;
    let digest = crate::report::digest(&canonical_config(
        cli.command.name(),
        &spec.to_string(),
        spec.probe_decls(),
        &cli.options,
    ));
    Ok(Context {
        spec,
        digest,
        format: cli.options.out.unwrap_or(default_format),
    })
}

pub(super) fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Validate { path } => validate(cli, path.as_deref()),
        Command::Simulate => simulate(cli),
        Command::Mc => mc(cli),
        Command::Histories => histories(cli),
        Command::Weak => weak(cli),
        Command::Compare => compare(cli),
        Command::Scan => scan(cli),
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

fn with_digest(digest: &str, mut body: Value) -> Value {
    if let Value::Object(map) = &mut body {
        let mut out = serde_json::Map::new();
        out.insert("config_digest".into(), Value::String(digest.to_string()));
        out.append(map);
        return Value::Object(out);
    }
    json!({ "config_digest": digest, "report": body })
}

fn csv_header(digest: &str) -> String {
    format!("# config-sha256={digest}\n")
}

fn text_header(digest: &str) -> String {
    format!("config-sha256 {digest}\n")
}

fn no_csv(command: &str) -> CliError {
    CliError::Usage(format!("--out csv is not available for {command}"))
}

fn validate(cli: &Cli, path: Option<&std::path::Path>) -> Outcome {
    let mut cli = Cli {
        command: cli.command.clone(),
        options: cli.options.clone(),
    };
    if let Some(p) = path {
        cli.options.itf = Some(p.to_path_buf());
    }
    let ctx = context(&cli, Format::Text).or_else(fail)?;
    let spec = &ctx.spec;
    let itf = Interferometer::new(spec.clone());
    let report = validate_unitarity(itf.stages(), 1e-12);
    let occupancy: Vec<(usize, Vec<&str>)> = (0..=spec.final_slot())
        .map(|t| {
            (
                t,
                spec.occupied(t)
                    .into_iter()
                    .map(|c| spec.channel_name(c))
                    .collect(),
            )
        })
        .collect();
    let text = match ctx.format {
        Format::Json => pretty(&with_digest(
            &ctx.digest,
            json!({
                "valid": report.pass,
                "nodes": spec.nodes().len(),
                "channels": spec.n_channels(),
                "detectors": spec.detectors(),
                "stages": itf.stages().len(),
                "probe_slot": spec.probe_slot(),
                "unitarity": {
                    "tolerance": num(report.tol),
                    "max_deviation": num(report.max_deviation()),
                    "per_stage": report.deviations.iter().map(|(t, d)| json!({"slot": t, "deviation": num(*d)})).collect::<Vec<_>>(),
                    "offending_slots": report.offending,
                },
                "occupancy": occupancy.iter().map(|(t, c)| json!({"slot": t, "channels": c})).collect::<Vec<_>>(),
            }),
        )),
        Format::Csv => return fail(no_csv("validate")),
        Format::Text => {
            let mut s = text_header(&ctx.digest);
            let _ = writeln!(
                s,
                "valid: {} nodes, {} channels, {} stages, unitary to {:.1e}",
                spec.nodes().len(),
                spec.n_channels(),
                itf.stages().len(),
                report.max_deviation()
            );
            let _ = writeln!(s, "probe slot: {}", spec.probe_slot());
            for (t, c) in &occupancy {
                let _ = writeln!(s, "slot {t}: {}", c.join(" "));
            }
            s
        }
    };
    if !report.pass {
        return Err((
            Some(text),
            CliError::Usage(format!("stages {:?} are not unitary", report.offending)),
        ));
    }
    Ok(text)
}

fn parse_condition(text: &str) -> Result<(String, bool), CliError> {
    match text.split_once('=') {
        Some((p, "1")) => Ok((p.trim().to_string(), true)),
        Some((p, "0")) => Ok((p.trim().to_string(), false)),
        _ => Err(CliError::Usage(format!(
            "bad --condition {text:?}, expected PROBE=0|1"
        ))),
    }
}

fn detector_row(d: &DetectorDistribution) -> String {
    d.entries
        .iter()
        .map(|(n, p)| format!("{n} {p:.12}"))
        .collect::<Vec<_>>()
        .join("  ")
}

fn simulate(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Text).or_else(fail)?;
    let exp = Experiment::from_spec(ctx.spec.clone()).or_else(fail)?;
    let dist = joint_outcome_distribution(&exp.evolve()).or_else(fail)?;
    let layout = dist.layout().clone();
    let mut conditioned = Vec::new();
    for c in &cli.options.condition {
        let (probe, value) = parse_condition(c).or_else(fail)?;
        let d = conditional_given_probe(&dist, &probe, value).or_else(fail)?;
        conditioned.push((format!("{probe}={}", value as u8), d));
    }
    let per_probe: Vec<(
        String,
        f64,
        Option<DetectorDistribution>,
        Option<DetectorDistribution>,
    )> = layout
        .probes
        .iter()
        .map(|p| {
            (
                p.clone(),
                dist.probe_marginal(p, true).unwrap_or(0.0),
                conditional_given_probe(&dist, p, false).ok(),
                conditional_given_probe(&dist, p, true).ok(),
            )
        })
        .collect();
    let text = match ctx.format {
        Format::Json => {
            let mut body = dist.to_json();
            let obj = body.as_object_mut().expect("distribution is an object");
            obj.insert("detectors".into(), dist.detector_marginals().to_json());
            obj.insert(
                "probes".into(),
                Value::Array(
                    per_probe
                        .iter()
                        .map(|(p, m, c0, c1)| {
                            json!({
                                "probe": p,
                                "p_triggered": num(*m),
                                "given_0": c0.as_ref().map(DetectorDistribution::to_json),
                                "given_1": c1.as_ref().map(DetectorDistribution::to_json),
                            })
                        })
                        .collect(),
                ),
            );
            obj.insert(
                "conditioned".into(),
                Value::Object(
                    conditioned
                        .iter()
                        .map(|(k, d)| (k.clone(), d.to_json()))
                        .collect(),
                ),
            );
            pretty(&with_digest(&ctx.digest, body))
        }
        Format::Csv => {
            let mut s = csv_header(&ctx.digest);
            s.push_str("detector,bits,p\n");
            for (d, b, p) in dist.iter() {
                let _ = writeln!(
                    s,
                    "{},{},{}",
                    layout.detectors[d],
                    layout.bit_assignments(b),
                    fixed17(p)
                );
            }
            s
        }
        Format::Text => simulate_text(&ctx, &dist, &per_probe, &conditioned),
    };
    Ok(text)
}

type ProbeSummary = (
    String,
    f64,
    Option<DetectorDistribution>,
    Option<DetectorDistribution>,
);

fn simulate_text(
    ctx: &Context,
    dist: &OutcomeDistribution,
    per_probe: &[ProbeSummary],
    conditioned: &[(String, DetectorDistribution)],
) -> String {
    let layout = dist.layout();
    let mut s = text_header(&ctx.digest);
    if !layout.probes.is_empty() {
        let _ = writeln!(s, "probes: {}", layout.probes.join(" "));
    }
    let _ = writeln!(s, "{:<8} {:<8} {:>16}", "detector", "bits", "p");
    for (d, b, p) in dist.iter() {
        let bits = if layout.probes.is_empty() {
            "-".to_string()
        } else {
            layout.bit_string(b)
        };
        let _ = writeln!(s, "{:<8} {:<8} {:>16.12}", layout.detectors[d], bits, p);
    }
    let _ = writeln!(s, "total {:.12}", dist.total());
    let _ = writeln!(s, "detectors: {}", detector_row(&dist.detector_marginals()));
    for (p, m, c0, c1) in per_probe {
        let _ = writeln!(s, "probe {p}: Pr(triggered) {m:.12}");
        if let Some(c) = c0 {
            let _ = writeln!(s, "  given {p}=0: {}", detector_row(c));
        }
        if let Some(c) = c1 {
            let _ = writeln!(s, "  given {p}=1: {}", detector_row(c));
        }
    }
    for (k, d) in conditioned {
        let _ = writeln!(s, "conditioned on {k}: {}", detector_row(d));
    }
    s
}

fn mc(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Csv).or_else(fail)?;
    let exp = Experiment::from_spec(ctx.spec.clone()).or_else(fail)?;
    let dist = joint_outcome_distribution(&exp.evolve()).or_else(fail)?;
    let o = &cli.options;
    let table = sample_table(&dist, o.runs, o.seed, o.workers);
    let text = match ctx.format {
        Format::Csv => csv_header(&ctx.digest) + &table.to_csv(),
        Format::Json => {
            let mut body = table.to_json();
            let obj = body.as_object_mut().expect("table is an object");
            obj.insert("seed".into(), json!(o.seed));
            obj.insert("runs".into(), json!(o.runs));
            pretty(&with_digest(&ctx.digest, body))
        }
        Format::Text => {
            let layout = table.layout().clone();
            let mut s = text_header(&ctx.digest);
            let _ = writeln!(s, "runs {}  seed {}", o.runs, o.seed);
            let _ = writeln!(
                s,
                "{:<8} {:<8} {:>10} {:>14} {:>14}",
                "detector", "bits", "count", "frequency", "exact"
            );
            for (d, b, p) in dist.iter() {
                let _ = writeln!(
                    s,
                    "{:<8} {:<8} {:>10} {:>14.9} {:>14.9}",
                    layout.detectors[d],
                    layout.bit_string(b),
                    table.count(d, b),
                    table.frequency(d, b),
                    p
                );
            }
            s
        }
    };
    Ok(text)
}

fn named_frameworks(
    cli: &Cli,
    spec: &InterferometerSpec,
) -> Result<Vec<(String, Framework)>, CliError> {
    let mut out: Vec<(String, Framework)> = Vec::new();
    for (i, text) in cli.options.framework.iter().enumerate() {
        let (name, body) = match text.split_once('=') {
            Some((n, b)) if crate::interferometer::is_ident(n.trim()) => (n.trim().to_string(), b),
            _ => (format!("f{}", i + 1), text.as_str()),
        };
        if out.iter().any(|(n, _)| *n == name) {
            return Err(CliError::Usage(format!("framework name {name} used twice")));
        }
        out.push((name, Framework::parse(spec, body)?));
    }
    Ok(out)
}

fn histories(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Text).or_else(fail)?;
    let o = &cli.options;
    let exp = Experiment::from_spec(ctx.spec.clone()).or_else(fail)?;
    let mut frameworks = named_frameworks(cli, &ctx.spec).or_else(fail)?;
    if frameworks.is_empty() {
        frameworks.push(("trivial".into(), Framework::trivial()));
    }
    for d in &o.given {
        ctx.spec.detector_index(d).or_else(fail)?;
    }
    let detectors: Vec<String> = if o.given.is_empty() {
        ctx.spec.detectors().iter().map(|d| d.to_string()).collect()
    } else {
        o.given.clone()
    };
    let demanded = !o.given.is_empty();
    let mut refusals: Vec<String> = Vec::new();

    let mut reports = Vec::new();
    let mut text = text_header(&ctx.digest);
    let mut csv = csv_header(&ctx.digest) + "framework,row,column,re,im\n";
    for (name, f) in &frameworks {
        let dm = decoherence_matrix(&exp, f);
        let r = check_consistency(&dm, o.tol);
        let _ = writeln!(text, "framework {name}: {}", f.describe());
        let _ = writeln!(text, "  {} histories, trace {:.12}", dm.len(), dm.trace());
        match &r.witness {
            None => {
                let _ = writeln!(text, "  CONSISTENT, max off-diag {:.3e}", r.max_offdiag);
            }
            Some((a, b)) => {
                let _ = writeln!(
                    text,
                    "  INCONSISTENT, max off-diag {:.3e} between {a} and {b}",
                    r.max_offdiag
                );
            }
        }
        for (i, label) in dm.labels.iter().enumerate() {
            let _ = writeln!(text, "  Pr{label} = {:.12}", dm.matrix[(i, i)].re);
        }
        for i in 0..dm.len() {
            for j in 0..dm.len() {
                let z = dm.matrix[(i, j)];
                let _ = writeln!(
                    csv,
                    "{name},{},{},{},{}",
                    dm.labels[i],
                    dm.labels[j],
                    fixed17(z.re),
                    fixed17(z.im)
                );
            }
        }
        let mut conditionals = serde_json::Map::new();
        for det in &detectors {
            match conditional_distribution(&exp, f, det, o.tol) {
                Ok(c) => {
                    let row: serde_json::Map<String, Value> = c
                        .entries
                        .iter()
                        .map(|(slot, l, p)| {
                            let key = if f.decompositions().len() > 1 {
                                format!("{l}@{slot}")
                            } else {
                                l.clone()
                            };
                            (key, num(*p))
                        })
                        .collect();
                    let shown: Vec<String> = c
                        .entries
                        .iter()
                        .map(|(slot, l, p)| format!("{l}@{slot} {p:.12}"))
                        .collect();
                    let _ = writeln!(text, "  given {det}: {}", shown.join("  "));
                    conditionals.insert(det.clone(), Value::Object(row));
                }
                Err(Error::ZeroProbabilityCondition(_)) => {
                    let _ = writeln!(text, "  given {det}: zero probability");
                    conditionals.insert(det.clone(), Value::Null);
                }
                Err(e @ Error::InconsistentFramework { .. }) => {
                    let _ = writeln!(
                        text,
                        "  given {det}: REFUSED (single framework rule: no probabilities from an inconsistent framework)"
                    );
                    if demanded {
                        refusals.push(format!("{name} given {det}: {e}"));
                    }
                    conditionals.insert(det.clone(), Value::Null);
                }
                Err(e) => return fail(e),
            }
        }
        reports.push(json!({
            "name": name,
            "framework": f.describe(),
            "consistent": r.consistent,
            "max_offdiag": num(r.max_offdiag),
            "witness": r.witness.as_ref().map(|(a, b)| vec![a.clone(), b.clone()]),
            "trace": num(dm.trace()),
            "min_eigenvalue": num(dm.min_eigenvalue()),
            "histories": dm.labels.iter().enumerate().map(|(i, l)| json!({"history": l, "p": num(dm.matrix[(i, i)].re)})).collect::<Vec<_>>(),
            "conditionals": Value::Object(conditionals),
        }));
    }

    let mut combine_json = Value::Null;
    if let Some(pair) = &o.combine {
        let find = |n: &str| {
            frameworks
                .iter()
                .find(|(m, _)| m == n)
                .map(|(_, f)| f)
                .ok_or_else(|| CliError::Usage(format!("--combine: unknown framework {n}")))
        };
        let (f1, f2) = (find(&pair[0]).or_else(fail)?, find(&pair[1]).or_else(fail)?);
        match refine_frameworks(&exp, f1, f2, o.tol) {
            Ok(refined) => {
                let _ = writeln!(
                    text,
                    "combine {} {}: compatible, refinement {}",
                    pair[0],
                    pair[1],
                    refined.describe()
                );
                let mut cond = serde_json::Map::new();
                for det in &detectors {
                    if let Ok(c) = conditional_distribution(&exp, &refined, det, o.tol) {
                        let shown: Vec<String> = c
                            .entries
                            .iter()
                            .map(|(s, l, p)| format!("{l}@{s} {p:.12}"))
                            .collect();
                        let _ = writeln!(text, "  given {det}: {}", shown.join("  "));
                        cond.insert(
                            det.clone(),
                            Value::Object(
                                c.entries
                                    .iter()
                                    .map(|(_, l, p)| (l.clone(), num(*p)))
                                    .collect(),
                            ),
                        );
                    }
                }
                combine_json = json!({"frameworks": pair, "compatible": true, "refinement": refined.describe(), "conditionals": cond});
            }
            Err(
                e @ (Error::IncompatibleFrameworks { .. } | Error::NonCommutingProjectors { .. }),
            ) => {
                let reason = format!(
                    "single framework rule: results from {} and {} cannot be combined ({e})",
                    pair[0], pair[1]
                );
                let _ = writeln!(text, "combine {} {}: REFUSED, {reason}", pair[0], pair[1]);
                combine_json = json!({"frameworks": pair, "compatible": false, "refused": reason});
                refusals.push(reason);
            }
            Err(e) => return fail(e),
        }
    }

    let mut queries = Vec::new();
    if !o.query.is_empty() {
        let mut guard = InferenceGuard::new(&exp, o.tol);
        for (n, f) in &frameworks {
            guard.register(n, f.clone());
        }
        for q in &o.query {
            let query = Query::parse(q).or_else(fail)?;
            let answer = guard.ask(&query);
            match &answer.verdict {
                Verdict::Answered(p) => {
                    let _ = writeln!(text, "query {query}: {p:.12}");
                    queries.push(json!({"query": query.to_string(), "answered": num(*p)}));
                }
                Verdict::Refused(reason) => {
                    let _ = writeln!(text, "query {query}: REFUSED, {reason}");
                    queries.push(json!({"query": query.to_string(), "refused": reason}));
                    refusals.push(format!("{query}: {reason}"));
                }
            }
        }
    }

    let out = match ctx.format {
        Format::Text => text,
        Format::Csv => csv,
        Format::Json => pretty(&with_digest(
            &ctx.digest,
            json!({"frameworks": reports, "combine": combine_json, "queries": queries}),
        )),
    };
    if refusals.is_empty() {
        Ok(out)
    } else {
        Err((Some(out), CliError::Refused(refusals.join("; "))))
    }
}

fn require_post(cli: &Cli) -> Result<String, CliError> {
    cli.options
        .post
        .clone()
        .ok_or_else(|| CliError::Usage("--post DETECTOR is required".into()))
}

fn single_framework(cli: &Cli, spec: &InterferometerSpec) -> Result<Framework, CliError> {
    let fs = named_frameworks(cli, spec)?;
    match fs.len() {
        1 => Ok(fs.into_iter().next().expect("one framework").1),
        0 => Err(CliError::Usage(
            "--framework is required for the comparison".into(),
        )),
        _ => Err(CliError::Usage(
            "the comparison takes exactly one --framework".into(),
        )),
    }
}

fn comparison(cli: &Cli, spec: &InterferometerSpec, post: &str) -> Result<Comparison, CliError> {
    let framework = single_framework(cli, spec)?;
    compare_ch_weaktrace(
        spec,
        post,
        &framework,
        cli.options.threshold,
        cli.options.tol,
    )
    .map_err(|e| match e {
        e @ Error::InconsistentFramework { .. } => CliError::Refused(format!(
            "single framework rule: no verdicts from an inconsistent framework ({e})"
        )),
        e => CliError::Config(e),
    })
}

fn weak_table(cli: &Cli, ctx: &Context, post: &str) -> Result<WeakValueTable, CliError> {
    let spec = &ctx.spec;
    let mut extras = Vec::new();
    for text in &cli.options.expr {
        let (body, slot) = match text.split_once('@') {
            Some((b, s)) => (
                b,
                s.trim()
                    .trim_start_matches("slot")
                    .parse::<usize>()
                    .map_err(|_| CliError::Usage(format!("bad --expr {text:?}")))?,
            ),
            None => (text.as_str(), spec.probe_slot()),
        };
        extras.push(ProjectorExpr::parse(slot, body)?);
    }
    for p in spec.probe_decls().iter().filter(|p| p.targets.len() > 1) {
        let labels: Vec<&str> = p.targets.iter().map(String::as_str).collect();
        extras.push(ProjectorExpr::channels(
            p.slot.unwrap_or(spec.probe_slot()),
            &labels,
        ));
    }
    let itf = Interferometer::new(spec.with_probes(vec![])?);
    Ok(weak_trace_table(
        &itf,
        post,
        cli.options.threshold,
        &extras,
    )?)
}

fn weak_csv(digest: &str, t: &WeakValueTable) -> String {
    let mut s = csv_header(digest) + "slot,channel,re,im,abs,weak_trace\n";
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.slot,
            r.label,
            fixed17(r.value.re),
            fixed17(r.value.im),
            fixed17(r.value.norm()),
            if r.present { "present" } else { "absent" }
        );
    }
    s
}

fn compare_csv(c: &Comparison) -> String {
    let mut s = String::from("channel,slot,re,im,weak_trace,ch,agree\n");
    for r in &c.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.channel,
            r.slot,
            fixed17(r.weak_value.re),
            fixed17(r.weak_value.im),
            if r.weak_trace { "present" } else { "absent" },
            r.ch.describe(),
            r.agree()
        );
    }
    s
}

fn weak(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Text).or_else(fail)?;
    let post = require_post(cli).or_else(fail)?;
    let table = weak_table(cli, &ctx, &post).or_else(fail)?;
    let cmp = if cli.options.compare {
        Some(comparison(cli, &ctx.spec, &post).or_else(fail)?)
    } else {
        None
    };
    Ok(match ctx.format {
        Format::Json => {
            let mut body = json!({ "weak": table.to_json() });
            if let Some(c) = &cmp {
                body["comparison"] = c.to_json();
            }
            pretty(&with_digest(&ctx.digest, body))
        }
        Format::Csv => {
            let mut s = weak_csv(&ctx.digest, &table);
            if let Some(c) = &cmp {
                s.push('\n');
                s.push_str(&compare_csv(c));
            }
            s
        }
        Format::Text => {
            let mut s = text_header(&ctx.digest) + &table.to_text();
            if let Some(c) = &cmp {
                s.push('\n');
                s.push_str(&c.to_text());
            }
            s
        }
    })
}

fn compare(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Text).or_else(fail)?;
    let post = require_post(cli).or_else(fail)?;
    let c = comparison(cli, &ctx.spec, &post).or_else(fail)?;
    Ok(match ctx.format {
        Format::Json => pretty(&with_digest(&ctx.digest, c.to_json())),
        Format::Csv => csv_header(&ctx.digest) + &compare_csv(&c),
        Format::Text => text_header(&ctx.digest) + &c.to_text(),
    })
}

fn scan(cli: &Cli) -> Outcome {
    let ctx = context(cli, Format::Text).or_else(fail)?;
    let o = &cli.options;
    let params = o
        .param
        .iter()
        .map(|p| ParamRange::parse(p))
        .collect::<Result<Vec<_>, _>>()
        .or_else(fail)?;
    let framework = match o.framework.as_slice() {
        [one] => one
            .split_once('=')
            .filter(|(n, _)| crate::interferometer::is_ident(n.trim()))
            .map_or(one.as_str(), |(_, b)| b),
        _ => return fail(CliError::Usage("scan takes exactly one --framework".into())),
    };
    let target = o
        .target
        .as_deref()
        .ok_or_else(|| CliError::Usage("--target EXPR|DETECTOR is required".into()))
        .or_else(fail)?;
    // fail early on a malformed framework or target
    Framework::parse(&ctx.spec, framework).or_else(fail)?;
    let spec = ScanSpec {
        base: ctx.spec.with_probes(vec![]).or_else(fail)?,
        params,
        framework: framework.to_string(),
        target: ScanTarget::parse(target).or_else(fail)?,
        min_probability: o.min,
        tol: o.tol,
        scope: o.scope,
    };
    let report = run_scan(&spec, o.workers).or_else(fail)?;
    Ok(match ctx.format {
        Format::Json => pretty(&with_digest(&ctx.digest, report.to_json())),
        Format::Csv => {
            let names: Vec<String> = spec
                .params
                .iter()
                .map(|p| format!("{}.{}", p.node, p.param))
                .collect();
            let mut s = csv_header(&ctx.digest);
            let mut header = names.clone();
            header.extend(
                [
                    "probability",
                    "full_max_offdiag",
                    "full_consistent",
                    "branch_max_offdiag",
                    "branch_consistent",
                ]
                .map(String::from),
            );
            let _ = writeln!(s, "{}", header.join(","));
            for h in &report.hits {
                let mut row: Vec<String> = h.values.iter().map(|(_, v)| fixed17(*v)).collect();
                row.push(h.probability.map(fixed17).unwrap_or_default());
                row.push(fixed17(h.full_max_offdiag));
                row.push(h.full_consistent.to_string());
                row.push(fixed17(h.branch_max_offdiag));
                row.push(h.branch_consistent.to_string());
                let _ = writeln!(s, "{}", row.join(","));
            }
            s
        }
        Format::Text => {
            let mut s = text_header(&ctx.digest);
            let _ = writeln!(
                s,
                "scan {} in {} ({:?} consistency, min {}): {} of {} grid points",
                report.target,
                report.framework,
                report.scope,
                o.min,
                report.hits.len(),
                report.points
            );
            for h in &report.hits {
                let params: Vec<String> = h
                    .values
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.12}"))
                    .collect();
                let _ = writeln!(
                    s,
                    "  {}  Pr={:.12}  full max off-diag {:.3e}{}  branch max off-diag {:.3e}",
                    params.join(" "),
                    h.probability.unwrap_or(f64::NAN),
                    h.full_max_offdiag,
                    if h.full_consistent {
                        ""
                    } else {
                        " (inconsistent)"
                    },
                    h.branch_max_offdiag
                );
            }
            s
        }
    })
}
