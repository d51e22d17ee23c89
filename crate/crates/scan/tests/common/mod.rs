//! Shared fixtures: a small synthetic corpus run through every stage.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use horizon_scan::config::PipelineConfig;
use horizon_scan::pipeline::{self, Workspace};
use horizon_scan::synth::{write_synthetic, SynthConfig, Synthetic};
use tempfile::TempDir;

pub struct Fixture {
    pub dir: TempDir,
    pub syn: Synthetic,
    pub config: PipelineConfig,
    pub snapshot: PathBuf,
}

impl Fixture {
    pub fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }
    pub fn ws(&self) -> Workspace {
        Workspace::new(&self.snapshot)
    }
}

pub fn small_synth() -> SynthConfig {
    SynthConfig { docs: 400, topics: 6, lda_iterations: 120, seed: 11, ..Default::default() }
}

/// Config for the synthetic corpus in `data`, writing runs under `out`.
pub fn config_for(data: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&data.join("scan.conf")).expect("synthetic config loads");
    cfg.out = out.to_path_buf();
    cfg.knn_k = 3;
    cfg
}

pub fn build(sc: &SynthConfig) -> Fixture {
    let dir = tempfile::tempdir().expect("tempdir");
    let data = dir.path().join("data");
    let syn = write_synthetic(sc, &data).expect("synthetic corpus");
    let config = config_for(&data, &dir.path().join("runs"));
    let snapshot = pipeline::run_pipeline(&config).expect("pipeline runs");
    Fixture { dir, syn, config, snapshot }
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn copy_dir(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), target).unwrap();
        }
    }
}
