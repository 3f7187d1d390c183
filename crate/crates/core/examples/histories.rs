//! Decoherence matrices, consistency checks and the single framework rule.

use nested_mzi::evolution::Experiment;
use nested_mzi::histories::{
    check_consistency, conditional_distribution, decoherence_matrix, refine_frameworks, Framework,
    InferenceGuard, Query, DEFAULT_TOL,
};
use nested_mzi::interferometer::default_nested_mzi;

fn main() -> nested_mzi::Result<()> {
    let spec = default_nested_mzi();
    let exp = Experiment::without_probes(spec.clone());
    for text in ["probe:{A,B+C}", "probe:{C,A+B}", "probe:{A,B,C}"] {
        let fw = Framework::parse(&spec, text)?;
        let dm = decoherence_matrix(&exp, &fw);
        let report = check_consistency(&dm, DEFAULT_TOL);
        println!(
            "{text}: consistent {}, max off-diagonal {:.4}",
            report.consistent, report.max_offdiag
        );
        match conditional_distribution(&exp, &fw, "D1", DEFAULT_TOL) {
            Ok(c) => println!("  given D1: {:?}", c.entries),
            Err(e) => println!("  given D1: {e}"),
        }
    }

    let f1 = Framework::parse(&spec, "probe:{A,B+C}")?;
    let f2 = Framework::parse(&spec, "probe:{C,A+B}")?;
    if let Err(e) = refine_frameworks(&exp, &f1, &f2, DEFAULT_TOL) {
        println!("refine: {e}");
    }
    let mut guard = InferenceGuard::new(&exp, DEFAULT_TOL);
    guard.register("f1", f1);
    guard.register("f2", f2);
    for q in ["f1:A|D1", "f1:A|D1 & f2:C|D1"] {
        println!("{q}: {:?}", guard.ask(&Query::parse(q)?).verdict);
    }
    Ok(())
}
