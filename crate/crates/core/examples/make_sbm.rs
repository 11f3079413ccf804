//! Writes the planted-partition fixture bundle.
//!
//! ```text
//! cargo run -p graphclust --example make_sbm -- crates/core/tests/fixtures/sbm200
//! ```

use graphclust::synthetic::{stochastic_block_model, SbmConfig};
use graphclust::{save_bundle, FeaturesFormat};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "sbm200".into());
    let bundle = stochastic_block_model(&SbmConfig::default()).expect("default config is valid");
    save_bundle(&bundle, &out, FeaturesFormat::F32le).expect("bundle written");
    println!("{} {} {} {} -> {out}", bundle.n(), bundle.edges().len(), bundle.d(), bundle.k());
}
