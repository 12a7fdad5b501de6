use std::path::{Path, PathBuf};

use gslider_core::io::{read_json, write_json};
use gslider_core::solver::SolverConfig;
use gslider_core::Result;
use serde::{Deserialize, Serialize};

use crate::args::Command;

/// Record of one run; replaying it regenerates the outputs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub command: Command,
    /// Solver settings actually used, when the command reconstructs.
    pub config: Option<SolverConfig>,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started: String,
    pub finished: String,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}
