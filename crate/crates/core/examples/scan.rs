//! Search BS1 settings for a point where the D1 branch of {C, A+B} is
//! consistent and C is certain given D1.

use nested_mzi::cli::scan::{run_scan, ScanSpec, ScanTarget};
use nested_mzi::cli::{ParamRange, Scope};
use nested_mzi::interferometer::default_nested_mzi;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let param = |s: &str| ParamRange::parse(s).map_err(|e| e.to_string());
    let scan = ScanSpec {
        base: default_nested_mzi(),
        params: vec![
            // 21 points on [0, 2 atan(1/2)], so the midpoint is atan(1/2)
            param(&format!("BS1.theta=0:{}:21", 2.0 * 0.5f64.atan()))?,
            param("BS1.phi=0:3.141592653589793:5")?,
        ],
        framework: "probe:{C,A+B}".into(),
        target: ScanTarget::parse("C|D1")?,
        min_probability: 0.99,
        tol: 1e-10,
        scope: Scope::Branch,
    };
    let report = run_scan(&scan, 4)?;
    println!("{} grid points, {} hits", report.points, report.hits.len());
    for hit in &report.hits {
        println!(
            "{:?} Pr = {:?}, full family consistent: {}",
            hit.values, hit.probability, hit.full_consistent
        );
    }
    println!("atan(1/2) = {}", 0.5f64.atan());
    Ok(())
}
