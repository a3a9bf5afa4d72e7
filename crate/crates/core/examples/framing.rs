//! Keyed streams and the encrypted length frame.

use tokensteg::bits::{frame_message, unframe_message, BitString};
use tokensteg::key::StegoKey;

fn main() -> tokensteg::Result<()> {
    let key = StegoKey::from_hex("00112233445566778899aabbccddeeff00112233445566778899aabbccddeeff")?;
    let mut a = key.stream("demo");
    let mut b = key.stream("other");
    println!("demo  {:016x} {:016x}", a.next_u64(), a.next_u64());
    println!("other {:016x}", b.next_u64());
    println!("uniform draws: {:.6} {:.6}", a.next_uniform(), a.next_uniform());

    let payload = BitString::from_bytes(b"hi");
    let framed = frame_message(&payload, &mut key.stream("frame"))?;
    println!("payload {payload}\nframed  {framed}");
    let back = unframe_message(&framed, &mut key.stream("frame"))?;
    println!("unframed matches: {}", back == payload);

    // A receiver with extra trailing bits still reads the declared length.
    let mut padded = framed.clone();
    padded.extend_from(&BitString::parse_binary("0110")?);
    println!("with trailing bits: {}", unframe_message(&padded, &mut key.stream("frame"))? == payload);

    let short = framed.slice(0, 40);
    println!("truncated: {}", unframe_message(&short, &mut key.stream("frame")).unwrap_err());
    Ok(())
}
