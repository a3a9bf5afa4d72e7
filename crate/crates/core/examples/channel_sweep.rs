//! A small sweep over Gaussian noise levels, printed as a table.

use tokensteg::config::PipelineConfig;
use tokensteg::sweep::{run_sweep, SweepSpec};

fn main() -> tokensteg::Result<()> {
    let spec = SweepSpec::channels("none;gaussian:0.01;gaussian:0.05;rescale:0.5", 3, 0, 600);
    let table = run_sweep(&PipelineConfig::default(), &spec, 2)?;
    print!("{}", table.render());
    println!();
    print!("{}", table.to_jsonl().lines().next().unwrap_or_default());
    println!();
    Ok(())
}
