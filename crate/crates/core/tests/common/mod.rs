//! Shared loaders for the integration tests.

#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use leakward::pipeline::PipelineConfig;
use leakward::repair::{PreCloseStyle, RepairConfig};

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Every `.mj` file of the bundled corpus as `(file name, text)`, sorted by
/// name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = fs::read_dir(corpus_dir())
        .expect("corpus directory exists")
        .map(|e| e.expect("readable entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "mj"))
        .map(|p| {
            let name = p.file_name().expect("file").to_string_lossy().into_owned();
            (name, fs::read_to_string(&p).expect("readable source"))
        })
        .collect();
    out.sort();
    out
}

pub fn source(name: &str) -> String {
    fs::read_to_string(corpus_dir().join(name)).expect("corpus file exists")
}

/// Files whose expected repairs let the exception propagate from the
/// pre-close block.
pub const PROPAGATING: &[&str] = &["fig2_tempfilewriter.mj", "case_parser_tables.mj"];

/// The default configuration with the propagating pre-close style for the
/// files in [`PROPAGATING`].
pub fn corpus_config() -> PipelineConfig {
    let mut config = PipelineConfig::default();
    for f in PROPAGATING {
        config.repair_overrides.insert((*f).to_string(), RepairConfig { preclose_style: PreCloseStyle::Propagate });
    }
    config
}
