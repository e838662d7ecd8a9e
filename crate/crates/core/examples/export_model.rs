//! Strips a trainer state file down to a model-only checkpoint (drops
//! optimizer moments and RNG state), or emits a freshly initialized model.
//!
//! ```text
//! cargo run --release -p sigil-core --example export_model -- <in.ckpt> <out.ckpt>
//! cargo run --release -p sigil-core --example export_model -- --fresh <out.ckpt>
//! ```

use std::path::Path;

use sigil_core::model::{ModelConfig, WatermarkCodec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (model, out) = match args.as_slice() {
        [flag, out] if flag == "--fresh" => (
            WatermarkCodec::new(ModelConfig::desk()).expect("desk config"),
            out.clone(),
        ),
        [input, out] => (
            WatermarkCodec::load(Path::new(input)).expect("load trainer state"),
            out.clone(),
        ),
        _ => {
            eprintln!("usage: export_model (<in.ckpt> | --fresh) <out.ckpt>");
            std::process::exit(2);
        }
    };
    model.save(Path::new(&out)).expect("save model checkpoint");
    let bytes = std::fs::metadata(&out).map(|m| m.len()).unwrap_or(0);
    println!(
        "wrote {} ({} params, {} bytes)",
        out,
        model.param_count(),
        bytes
    );
}
