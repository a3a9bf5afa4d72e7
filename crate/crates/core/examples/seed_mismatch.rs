//! What the text corrections are worth when the sender's channel replay uses a
//! different noise realization from the real channel.

use tokensteg::config::PipelineConfig;
use tokensteg::key::StegoKey;
use tokensteg::pipeline::{seeded_message, Pipeline};

fn main() -> tokensteg::Result<()> {
    let stages = std::env::args().nth(1).unwrap_or_else(|| "gaussian:0.05,rescale:0.5".into());
    for sender_seed in [None, Some(999)] {
        let mut config = PipelineConfig::default();
        config.channel.stages = stages.clone();
        config.channel.sender_noise_seed = sender_seed;
        let pipeline = Pipeline::new(config)?;
        println!("sender seed {sender_seed:?}");
        for seed in 0..3u64 {
            let key = StegoKey::from_u64(seed);
            let message = seeded_message(seed, 800);
            let sent = pipeline.send(&message, &key)?;
            let received = pipeline.transmit(&sent.image);
            let text = sent.text.as_ref().map(|t| t.tokens.as_slice());
            let got = pipeline.receive(&received, text, &key)?;
            let m = pipeline.score(seed, &sent, &message, &got);
            println!(
                "  run {seed}: M1 {:6.2}  M12 {:6.2}  M123 {:6.2}  cap {:4}  {}",
                m.rq_m1,
                m.rq_m12,
                m.rq_m123,
                m.cap,
                got.issues.join("; ")
            );
        }
    }
    Ok(())
}
