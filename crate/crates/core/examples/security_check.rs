//! Cover against stego grids, and against the greedy control.
//!
//!     cargo run --release --example security_check -- 2000

use tokensteg::config::PipelineConfig;
use tokensteg::security::{compare, sample_class, Generator};

fn main() -> tokensteg::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1000);
    let config = PipelineConfig::default();
    let cover = sample_class(&config, Generator::Cover, n, 1, "reference", 4)?;
    for g in [Generator::Cover, Generator::Stego, Generator::Greedy] {
        let other = sample_class(&config, g, n, 1, "candidate", 4)?;
        let r = compare(&config, &cover, &other, 1);
        println!(
            "{g:?}: pooled p {:.3e}  KS p {:.3e}  KL {:.2e} bits (null {:.2e})  capacity {:.0}",
            r.pooled_rank.p_value, r.per_position.p_value, r.kl_bits.estimate, r.kl_bits.null_mean, r.mean_capacity
        );
    }
    Ok(())
}
