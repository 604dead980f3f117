//! Regenerates the JSON fixtures under `fixtures/` at the workspace root.
//!
//! ```text
//! cargo run -p skillforge --example write_fixtures
//! ```

use std::path::Path;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    std::fs::create_dir_all(&dir)?;
    for (name, text) in skillforge::mockenv::fixture_documents() {
        let path = dir.join(name);
        std::fs::write(&path, text)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
