use std::path::Path;

use fovsearch::config::{load_config, save_config, Config};
use fovsearch::seed::DEFAULT_SEED;

fn shipped() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

#[test]
fn shipped_reference_config_is_the_reference_run() {
    let c = load_config(&shipped()).unwrap();
    assert_eq!(c.seed, Some(DEFAULT_SEED));
    assert_eq!(Config { seed: None, ..c }, Config::reference());
}

#[test]
fn saved_config_reloads_identically() {
    let c = load_config(&shipped()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    save_config(&c, &path).unwrap();
    assert_eq!(load_config(&path).unwrap(), c);
}
