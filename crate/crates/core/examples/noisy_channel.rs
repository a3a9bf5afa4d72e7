//! Token recovery through a lossy channel, before and after latent optimization.
//!
//!     cargo run --release --example noisy_channel -- "quantize:32"

use tokensteg::config::PipelineConfig;
use tokensteg::key::StegoKey;
use tokensteg::pipeline::{seeded_message, Pipeline};

fn main() -> tokensteg::Result<()> {
    let stages = std::env::args().nth(1).unwrap_or_else(|| "gaussian:0.02".into());
    let mut config = PipelineConfig::default();
    config.channel.stages = stages;
    config.ecc.enabled = false;
    let pipeline = Pipeline::new(config)?;

    let key = StegoKey::from_u64(11);
    let message = seeded_message(11, 800);
    let sent = pipeline.send(&message, &key)?;
    let received = pipeline.transmit(&sent.image);
    let got = pipeline.receive(&received, None, &key)?;

    println!("channel {}", pipeline.channel());
    println!("re-encode only   {:6.2}%", got.m1.recovery_rate(&sent.grid));
    println!("after optimizer  {:6.2}%", got.m12.recovery_rate(&sent.grid));
    println!(
        "loss {:.4} -> {:.4} in {} steps",
        got.optim.initial_loss, got.optim.final_loss, got.optim.iterations
    );
    for (step, loss) in got.optim.loss_trace.iter().step_by(4) {
        println!("  step {step:5}  loss {loss:.5}");
    }
    println!("message intact: {}", got.complete && got.message == message);
    Ok(())
}
