use std::path::{Path, PathBuf};

use pe_consensus_cli::{LoadedConfig, RunConfig};

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load(path: &Path) -> RunConfig {
    LoadedConfig::read(path).unwrap_or_else(|e| panic!("{e}")).config
}

fn reparse(text: &str) -> RunConfig {
    LoadedConfig::parse(Path::new("canonical.toml"), text.to_string())
        .unwrap_or_else(|e| panic!("{e}"))
        .config
}

/// Freezes key names, section layout and the serialized number format.
#[test]
fn canonical_form_matches_golden_file() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    for name in ["full", "minimal"] {
        let config = load(&data.join(format!("{name}.toml")));
        let golden = std::fs::read_to_string(data.join(format!("{name}.canonical.toml"))).unwrap();
        assert_eq!(config.to_canonical(), golden, "{name}");
    }
}

#[test]
fn parse_then_serialize_is_idempotent() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(workspace().join("configs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    paths.push(data.join("full.toml"));
    paths.push(data.join("minimal.toml"));
    for path in paths {
        let config = load(&path);
        let once = config.to_canonical();
        let again = reparse(&once);
        assert_eq!(again, config, "{}", path.display());
        assert_eq!(again.to_canonical(), once, "{}", path.display());
    }
}
