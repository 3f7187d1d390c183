//! Monte Carlo coincidence counts with a reproducible seed. The table is the
//! same for any worker count.

use nested_mzi::evolution::{joint_outcome_distribution, sample_table, Experiment};
use nested_mzi::interferometer::{default_nested_mzi, ProbeDecl};
use nested_mzi::probes::ProbeRegister;

fn main() -> nested_mzi::Result<()> {
    let spec = default_nested_mzi();
    let w = ProbeDecl {
        name: "w".into(),
        targets: vec!["B".into(), "C".into()],
        epsilon: 0.3,
        slot: None,
    };
    let exp = Experiment::new(spec.clone(), ProbeRegister::new(&spec, &[w])?);
    let dist = joint_outcome_distribution(&exp.evolve())?;
    let table = sample_table(&dist, 100_000, 42, 4);
    assert_eq!(table, sample_table(&dist, 100_000, 42, 1));
    print!("{}", table.to_csv());
    Ok(())
}
