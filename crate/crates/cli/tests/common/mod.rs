#![allow(dead_code)]

use std::path::{Path, PathBuf};

use mtpp_cli::RunConfig;

pub fn config_text(setting: &str, decoder: &str, seed: u64) -> String {
    format!(
        r#"
seed = {seed}

[data.synth]
mu = [0.6, 0.4]
alpha = [[0.4, 0.1], [0.3, 0.3]]
beta = [[1.5, 1.0], [1.0, 2.0]]
horizon = 10.0
sequences = 30

[model]
family = "{decoder}"
setting = "{setting}"

[model.widths]
time_encoding = 4
mark_embedding = 2
hidden = 4
mlp = 4
mixtures = 2
channels = 2

[train]
lr = 0.01
batch_size = 6
max_epochs = 3
patience = 2
"#
    )
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

pub fn config(setting: &str, decoder: &str, seed: u64) -> RunConfig {
    RunConfig::parse(&config_text(setting, decoder, seed), Path::new("test.toml")).unwrap()
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}
