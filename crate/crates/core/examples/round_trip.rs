//! Lossless embed and extract through the pixel decoder and back.
//!
//!     cargo run --release --example round_trip -- "attack at dawn"

use tokensteg::bits::BitString;
use tokensteg::config::PipelineConfig;
use tokensteg::key::StegoKey;
use tokensteg::pipeline::Pipeline;

fn main() -> tokensteg::Result<()> {
    let text = std::env::args().nth(1).unwrap_or_else(|| "attack at dawn".into());
    let mut config = PipelineConfig::default();
    config.ecc.enabled = false;
    let pipeline = Pipeline::new(config)?;
    let key = StegoKey::from_u64(2024);

    let message = BitString::from_bytes(text.as_bytes());
    let sent = pipeline.send(&message, &key)?;
    println!(
        "condition {}  grid {}x{}  carried {} of {} bits",
        sent.condition.0, sent.grid.height, sent.grid.width, sent.embedded_bits, sent.capacity_bits
    );

    let received = pipeline.transmit(&sent.image);
    let got = pipeline.receive(&received, None, &key)?;
    println!("re-encoded tokens match: {:.2}%", got.m1.recovery_rate(&sent.grid));
    println!("recovered: {:?}", String::from_utf8_lossy(&got.message.to_bytes()));

    let wrong = pipeline.receive(&received, None, &StegoKey::from_u64(2025))?;
    println!("wrong key: complete={} ({} bits)", wrong.complete, wrong.message.len());
    Ok(())
}
