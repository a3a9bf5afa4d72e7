//! Residual-error records: encode, decode, and what a text budget buys.

use tokensteg::bits::BitString;
use tokensteg::config::PipelineConfig;
use tokensteg::ecc::{capacity_tau, clustered_corruption, ecc_decode, ecc_encode, error_stats};
use tokensteg::key::StegoKey;
use tokensteg::pipeline::Pipeline;

fn main() -> tokensteg::Result<()> {
    let config = PipelineConfig::default();
    let pipeline = Pipeline::new(config.clone())?;
    let key = StegoKey::from_u64(5);
    let sent = pipeline.send(&BitString::from_bytes(b"records"), &key)?;

    let book = pipeline.tokenizer().codebook();
    let model = &config.image_model;
    let params = config.ecc_params();
    let damaged = clustered_corruption(&sent.grid, book, 3, 4, 8, 1);
    println!("errors: {}", sent.grid.disagreement(&damaged));

    let enc = ecc_encode(&sent.grid, &damaged, model, sent.condition, book, &params, usize::MAX)?;
    for r in &enc.records.records {
        println!("  pos {:3}  delta {:3}  rank {:3}", r.position, r.delta, r.rank);
    }
    println!("{} bits for {} corrections", enc.bits.len(), enc.corrected());
    let fixed = ecc_decode(&enc.bits, &damaged, model, sent.condition, book, &params)?;
    println!("repaired: {}", fixed == sent.grid);

    let stats = error_stats(&sent.grid, &damaged, model, sent.condition, book)?;
    println!(
        "mean bits: absolute {:.2} vs relative {:.2};  mean rank: probability {:.1} vs proximity {:.1}",
        stats.absolute_positions.mean_bits,
        stats.relative_coordinates.mean_bits,
        stats.probability_ranks.mean,
        stats.proximity_ranks.mean
    );

    for budget in [100, 300, 628] {
        let (formula, layout) = capacity_tau(&params, budget);
        let enc = ecc_encode(&sent.grid, &damaged, model, sent.condition, book, &params, budget)?;
        println!(
            "budget {budget:4}: tau formula {formula:3}, layout {layout:3}, corrected {}",
            enc.corrected()
        );
    }
    Ok(())
}
