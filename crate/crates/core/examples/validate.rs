//! Parse the built-in device description, compile its stages and check
//! that every stage is unitary.

use nested_mzi::interferometer::{parse_itf, validate_unitarity, Interferometer, NESTED_MZI_ITF};

fn main() -> nested_mzi::Result<()> {
    let spec = parse_itf(NESTED_MZI_ITF)?;
    let itf = Interferometer::new(spec.clone());
    let report = validate_unitarity(itf.stages(), 1e-12);
    println!(
        "{} nodes, {} channels, {} stages, unitary: {}",
        spec.nodes().len(),
        spec.n_channels(),
        itf.stages().len(),
        report.pass
    );
    for slot in 0..=spec.final_slot() {
        let names: Vec<&str> = spec
            .occupied(slot)
            .into_iter()
            .map(|c| spec.display_name(c))
            .collect();
        println!("slot {slot}: {}", names.join(" "));
    }
    println!("\n{spec}");
    Ok(())
}
