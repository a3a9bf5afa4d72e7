//! Configuration as a sectioned `key = value` file.

use tokensteg::config::PipelineConfig;

fn main() -> tokensteg::Result<()> {
    let config = PipelineConfig::from_toml(
        r#"
[run]
seed = 17

[channel]
stages = "quantize:32,gaussian:0.01"

[optimizer]
steps = 500

[text]
max_tokens = 100
"#,
    )?;
    println!("hash {}", config.hash());
    println!("channel {}", config.channel.spec()?);
    print!("{}", config.to_toml());

    match PipelineConfig::from_toml("[tokenizer]\ncodebook_size = 10\n") {
        Err(e) => println!("rejected: {e} (exit code {})", e.exit_code()),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
