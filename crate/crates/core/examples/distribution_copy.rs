//! One embedding step in detail: capacity, copies, and the selected token.

use tokensteg::bits::BitString;
use tokensteg::codec::{embed_step, expected_capacity, extract_step, shifted, step_capacity};
use tokensteg::key::StegoKey;
use tokensteg::model::{next_distribution, Condition, ModelSpec};

fn main() -> tokensteg::Result<()> {
    let model = ModelSpec::text_default();
    let dist = next_distribution(&model, Condition(3), &[], 0)?;
    println!(
        "support {}  entropy {:.3} bits  E[k*] {:.3} bits  max p {:.3}",
        dist.len(),
        dist.entropy_bits(),
        expected_capacity(&dist),
        dist.max_prob()
    );

    let key = StegoKey::from_u64(7);
    let mut sampling = key.stream("demo/sampling");
    let mut pad = key.stream("demo/pad");
    let message = BitString::parse_binary("1011001110")?;
    let mut reader = message.reader();
    for _ in 0..5 {
        let r = sampling.next_uniform();
        let k = step_capacity(&dist, r);
        let copies: Vec<u32> = (0..1u64 << k).map(|i| dist.locate(shifted(r, i, k))).collect();
        let step = embed_step(&dist, r, &mut reader, &mut pad);
        let (bits, _) = extract_step(&dist, r, step.token)?;
        println!(
            "r={r:.6} k*={k} copies={copies:?} -> token {} (copy {}), read back {bits}",
            step.token, step.copy_index
        );
    }

    // Low-entropy step: nothing fits, so the token is an ordinary sample.
    let peaked = tokensteg::model::Distribution::from_ordered(vec![(0, 0.97), (1, 0.02), (2, 0.01)])?;
    println!("peaked: E[k*] = {:.3}", expected_capacity(&peaked));
    Ok(())
}
