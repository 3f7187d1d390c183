//! Side-by-side verdicts from a consistent framework and from weak values,
//! with the probe evidence attached to each.

use nested_mzi::histories::{Framework, DEFAULT_TOL};
use nested_mzi::interferometer::default_nested_mzi;
use nested_mzi::weaktrace::{compare_ch_weaktrace, DEFAULT_THRESHOLD};

fn main() -> nested_mzi::Result<()> {
    let spec = default_nested_mzi();
    let framework = Framework::parse(&spec, "probe:{A,B+C}")?;
    let cmp = compare_ch_weaktrace(&spec, "D1", &framework, DEFAULT_THRESHOLD, DEFAULT_TOL)?;
    print!("{}", cmp.to_text());
    println!("disagreements: {:?}", cmp.disagreements());
    Ok(())
}
