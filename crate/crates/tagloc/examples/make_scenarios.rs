//! Regenerates the bundled scenario files in `scenarios/` from the presets.

use std::path::Path;

use tagloc::formats;
use tagloc::sim::presets;

fn main() {
    let dir = Path::new("scenarios");
    std::fs::create_dir_all(dir).unwrap();
    for (file, scenario) in [
        ("path1.toml", presets::path1(1)),
        ("consistency.toml", presets::consistency(1)),
        ("delayed.toml", presets::delayed(1)),
        ("kidnap.toml", presets::kidnap(1)),
    ] {
        let path = dir.join(file);
        formats::write_scenario(&path, &scenario).unwrap();
        println!("wrote {}", path.display());
    }
}
