use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "gslider-sr", version, about = "Simulation, reconstruction and evaluation of undersampled gSlider diffusion data")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GsliderSr,
    Tikhonov,
}

fn parse_triple<T: std::str::FromStr>(s: &str) -> Result<[T; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated values, got {s:?}"));
    }
    let mut out = Vec::with_capacity(3);
    for p in parts {
        out.push(p.parse::<T>().map_err(|_| format!("cannot parse {p:?}"))?);
    }
    out.try_into().map_err(|_| "expected three values".to_string())
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    parse_triple(s)
}

fn parse_voxel(s: &str) -> Result<[f64; 3], String> {
    parse_triple(s)
}

fn parse_snr(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("cannot parse SNR {s:?}"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("SNR must be > 0 (or inf), got {s}"))
    }
}

/// SNR values in manifests; JSON has no infinity, so it is written as "inf".
mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Write a spherical-spiral gradient table.
    Gradients {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 2000.0)]
        bvalue: f64,
        #[arg(long, default_value_t = 0)]
        n_b0: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the ground-truth phantom, its labels and gradient table.
    Phantom {
        #[arg(long, value_parser = parse_dims, default_value = "40,40,20")]
        dims: [usize; 3],
        #[arg(long, value_parser = parse_voxel, default_value = "1,1,1")]
        voxel_size: [f64; 3],
        #[arg(long)]
        gradients: PathBuf,
        /// Output stem; labels go to `<out>_labels`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the RF-encoded, q-undersampled thick-slice acquisitions.
    Simulate {
        #[arg(long)]
        truth: PathBuf,
        /// Gradient table of the truth (default `<truth>_gradients.txt`).
        #[arg(long)]
        gradients: Option<PathBuf>,
        /// Encoding basis JSON (default J − 2I with AF = 5).
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        scheme_factor: usize,
        /// Thick-slice b0 SNR, or `inf` for noiseless data.
        #[arg(long, value_parser = parse_snr, default_value = "20")]
        #[serde(with = "snr_serde")]
        snr: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reconstruct the thin-slice set from an acquisition directory.
    Reconstruct {
        #[arg(long)]
        acq_dir: PathBuf,
        /// Solver configuration JSON (default: simulation settings).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::GsliderSr)]
        method: Method,
        /// Volume whose non-zero voxels are reconstructed.
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Use S^t instead of S^{t+1} in the γ update.
        #[arg(long)]
        literal_gamma_update: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a reconstruction with the ground truth.
    Evaluate {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Label volume (default `<truth>_labels`).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Gradient table (default `<truth>_gradients.txt`).
        #[arg(long)]
        gradients: Option<PathBuf>,
        /// Value of the `scheme` column.
        #[arg(long, default_value = "recon")]
        scheme: String,
        /// Optional stem for the NMSE map.
        #[arg(long)]
        nmse_map: Option<PathBuf>,
        #[arg(long)]
        out_csv: PathBuf,
    },
    /// Monte-Carlo study over undersampling schemes.
    Mc {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        gradients: Option<PathBuf>,
        #[arg(long)]
        basis: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        factors: Vec<usize>,
        #[arg(long)]
        include_hr: bool,
        #[arg(long, default_value_t = 20)]
        n_mc: usize,
        #[arg(long, value_parser = parse_snr, default_value = "20")]
        #[serde(with = "snr_serde")]
        snr: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Re-run the command recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Gradients { .. } => "gradients",
            Command::Phantom { .. } => "phantom",
            Command::Simulate { .. } => "simulate",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Evaluate { .. } => "evaluate",
            Command::Mc { .. } => "mc",
            Command::Replay { .. } => "replay",
        }
    }
}
