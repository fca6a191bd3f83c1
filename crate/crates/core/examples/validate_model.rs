//! Parse a model from JSON and run the structural checks. A second model with a
//! diffusion that is not positive semidefinite shows what a failing report looks like.
//!
//!     cargo run --example validate_model

use homog_jump::model::{validate_model, CheckStatus};
use homog_jump::schema::parse_model;
use homog_jump::{shipped, ValidatedModel};

const INDEFINITE: &str = r#"{
  "dimension": 1,
  "period": [1.0],
  "diffusion": { "shape": "matrix", "terms": [
    { "m": [0], "cos": [[0.5]], "sin": [[0.0]] },
    { "m": [1], "cos": [[0.0]], "sin": [[1.0]] }
  ] },
  "jumps": []
}"#;

fn main() -> homog_jump::Result<()> {
    for (name, json) in shipped::ALL {
        let report = validate_model(&parse_model(json)?);
        println!("{name}: passed = {}", report.passed);
        for c in &report.checks {
            println!("  {:?} {:?} {}", c.condition, c.status, c.detail);
        }
    }

    // c(x) = 0.5 + sin 2πx is negative near x = 3/4.
    let model = parse_model(INDEFINITE)?;
    let report = validate_model(&model);
    if let Some(c) = report.first_failure() {
        assert_eq!(c.status, CheckStatus::Fail);
        println!("indefinite model fails {:?}: {}", c.condition, c.detail);
    }
    match ValidatedModel::new(model) {
        Err(e) => println!("ValidatedModel::new refuses it: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
