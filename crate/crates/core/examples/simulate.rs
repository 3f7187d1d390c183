//! Exact joint distributions of detector clicks and probe readouts: the w
//! probe on B+C alone, then a b probe on B alone.

use nested_mzi::evolution::{conditional_given_probe, joint_outcome_distribution, Experiment};
use nested_mzi::interferometer::{default_nested_mzi, InterferometerSpec, ProbeDecl};
use nested_mzi::probes::ProbeRegister;

fn probed(
    spec: &InterferometerSpec,
    name: &str,
    targets: &[&str],
    epsilon: f64,
) -> nested_mzi::Result<Experiment> {
    let decl = ProbeDecl {
        name: name.into(),
        targets: targets.iter().map(|s| s.to_string()).collect(),
        epsilon,
        slot: None,
    };
    Ok(Experiment::new(
        spec.clone(),
        ProbeRegister::new(spec, &[decl])?,
    ))
}

fn main() -> nested_mzi::Result<()> {
    let spec = default_nested_mzi();
    for (name, targets) in [("w", &["B", "C"][..]), ("b", &["B"])] {
        let exp = probed(&spec, name, targets, 0.1)?;
        let dist = joint_outcome_distribution(&exp.evolve())?;
        println!("probe {name} on {}, eps 0.1", targets.join("+"));
        for (d, bits, p) in dist.iter() {
            println!(
                "  {} {} {p:.6e}",
                exp.layout().detectors[d],
                exp.layout().bit_assignments(bits)
            );
        }
        let fired = conditional_given_probe(&dist, name, true)?;
        println!("  detectors given {name}=1: {:?}", fired.probabilities());
    }
    Ok(())
}
