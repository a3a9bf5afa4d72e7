//! Stego text as a side channel: payload room against text length.

use tokensteg::codec::expected_capacity;
use tokensteg::key::StegoKey;
use tokensteg::model::{next_distribution, Condition, ModelSpec};
use tokensteg::text::{embed_text, random_bits, realized_capacity, StegoText};

fn main() -> tokensteg::Result<()> {
    let model = ModelSpec::text_default();
    let key = StegoKey::from_u64(8);
    let condition = Condition(42);

    let bits = random_bits(&mut key.stream("demo/payload"), 80);
    let text = embed_text(&bits, condition, &key, &model, 50)?;
    println!("{} bits in {} words:", text.payload_bits, text.len());
    println!("  {}", text.to_words());
    assert_eq!(StegoText::parse_words(&text.to_words())?, text.tokens);

    let first = next_distribution(&model, condition, &[], 0)?;
    println!("first step: E[k*] {:.2} of {:.2} bits entropy", expected_capacity(&first), first.entropy_bits());

    println!("max_tokens  capacity (5 seeds)");
    for n in [50, 100, 200] {
        let caps: Vec<usize> = (0..5)
            .map(|s| realized_capacity(condition, &StegoKey::from_u64(s), &model, n, s))
            .collect::<Result<_, _>>()?;
        println!("{n:10}  {caps:?}");
    }
    Ok(())
}
