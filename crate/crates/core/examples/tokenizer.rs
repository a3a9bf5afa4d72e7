//! Token grid to pixels and back; writes the image as PNM.
//!
//!     cargo run --release --example tokenizer -- /tmp/grid.pnm

use tokensteg::key::StegoKey;
use tokensteg::vq::{TokenGrid, Tokenizer, TokenizerSpec};

fn main() -> tokensteg::Result<()> {
    let tok = Tokenizer::new(TokenizerSpec::default())?;
    let spec = tok.spec();
    println!(
        "codebook {}x{}  min distance {:.3}  image {}x{}x{}",
        tok.codebook().size(),
        tok.codebook().dim(),
        tok.codebook().min_distance(),
        spec.image_height(),
        spec.image_width(),
        spec.channels
    );

    let mut stream = StegoKey::from_u64(3).stream("demo/tokens");
    let indices = (0..spec.tokens())
        .map(|_| (stream.next_u64() % spec.codebook_size as u64) as u32)
        .collect();
    let grid = TokenGrid::new(spec.grid_height, spec.grid_width, indices)?;
    let image = tok.decode(&grid)?;
    let back = tok.reencode(&image)?;
    println!("clean re-encode: {:.2}% of tokens", back.recovery_rate(&grid));
    let noisy = tok.reencode(&image.round_to_f32())?;
    println!("after f32 rounding: {:.2}%", noisy.recovery_rate(&grid));

    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, image.to_pnm()?)?;
        println!("wrote {path}");
    }
    Ok(())
}
