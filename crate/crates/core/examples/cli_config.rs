//! Drive the command-line front end from code: write a config, run `sigma` and
//! `classify` into one directory, then merge them with `report`.
//!
//!     cargo run --release --example cli_config

use homog_jump::cli::{run, Cli, Command};

fn main() -> homog_jump::Result<()> {
    let dir = std::env::temp_dir().join("homog-jump-cli-example");
    std::fs::create_dir_all(&dir)?;
    let config = dir.join("harmonic.json");
    let model = concat!(env!("CARGO_MANIFEST_DIR"), "/models/harmonic_1d.json");
    std::fs::write(&config, format!(r#"{{ "seed": 42, "modelPath": {model:?}, "params": {{ "resolution": [128] }} }}"#))?;

    let out = dir.join("out");
    for command in [Command::Validate, Command::Sigma, Command::Classify] {
        let status = run(&Cli { command, config: Some(config.clone()), out: Some(out.clone()), threads: Some(1) })?;
        println!("{command:?}: {status:?}");
    }
    run(&Cli { command: Command::Report, config: None, out: Some(out.clone()), threads: None })?;
    println!("{}", std::fs::read_to_string(out.join("summary.txt"))?);
    Ok(())
}
