//! Weak values at every slot, post-selected on D1, and the resulting
//! presence table.

use nested_mzi::histories::ProjectorExpr;
use nested_mzi::interferometer::{default_nested_mzi, Interferometer};
use nested_mzi::weaktrace::{weak_trace_table, DEFAULT_THRESHOLD};

fn main() -> nested_mzi::Result<()> {
    let itf = Interferometer::new(default_nested_mzi());
    let extras = [ProjectorExpr::parse(3, "B+C")?];
    let table = weak_trace_table(&itf, "D1", DEFAULT_THRESHOLD, &extras)?;
    print!("{}", table.to_text());
    Ok(())
}
