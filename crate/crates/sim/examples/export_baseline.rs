//! Writes the built-in baseline scenario to `scenarios/baseline.json` so the
//! checked-in file never drifts from the in-code definition.
//!
//! Run from the workspace root: `cargo run -p nuit-sim --example export_baseline`

use nuit_sim::scenario::baseline_nuit;

fn main() {
    let scenario = baseline_nuit();
    let json = scenario.to_json_pretty();
    let path = std::path::Path::new("scenarios/baseline.json");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).expect("create scenarios dir");
    }
    std::fs::write(path, json).expect("write baseline.json");
    println!("wrote {}", path.display());
}
