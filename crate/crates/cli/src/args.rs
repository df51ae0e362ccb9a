use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmcluster::mixture::DEFAULT_RELATIVE_RIDGE;
use gmcluster::{AmiNormalization, ClusterConfig, CovarianceModel, Preprocess};
use serde::Serialize;

/// Cluster high-dimensional objects through the normalized left Gram matrix.
///
/// Every option can also be set through the environment variable shown in
/// its help; an explicit flag wins over the environment, which wins over the
/// built-in default.
#[derive(Debug, Parser)]
#[command(name = "gmcluster", version, about, long_about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster the rows of a CSV file and select the number of clusters by BIC.
    Cluster {
        /// CSV with one object per row; optional header, `id` and `label` columns.
        input: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the adjusted mutual information between two label files.
    Eval {
        /// Predicted labels (`object_id,label`).
        pred: PathBuf,
        /// Reference labels (`object_id,label`).
        truth: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Monte-Carlo check of the transform's concentration bound on a synthetic spec.
    Simulate {
        /// JSON simulation spec.
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum CovModelArg {
    Diagonal,
    FullRidge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessArg {
    None,
    Standardize,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AmiNormArg {
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Threads {
    Auto,
    Fixed(usize),
}

impl Serialize for Threads {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Threads::Auto => s.serialize_str("auto"),
            Threads::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

fn parse_threads(s: &str) -> Result<Threads, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(Threads::Auto);
    }
    s.parse::<usize>()
        .map(Threads::Fixed)
        .map_err(|_| format!("expected a thread count or `auto`, got `{s}`"))
}

fn parse_delimiter(s: &str) -> Result<u8, String> {
    match s {
        "\\t" | "tab" => Ok(b'\t'),
        _ if s.len() == 1 && s.is_ascii() => Ok(s.as_bytes()[0]),
        _ => Err(format!("delimiter must be a single ASCII character, got `{s}`")),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    /// Largest number of clusters to try (clamped to the number of objects).
    #[arg(long, env = "GMCLUSTER_KMAX", default_value_t = gmcluster::select::DEFAULT_KMAX)]
    pub kmax: usize,

    /// Cap on classification-EM sweeps per K.
    #[arg(long, env = "GMCLUSTER_MAX_ITER", default_value_t = gmcluster::mixture::DEFAULT_MAX_ITER)]
    pub max_iter: usize,

    #[arg(long, env = "GMCLUSTER_COV_MODEL", value_enum, default_value_t = CovModelArg::Diagonal)]
    pub cov_model: CovModelArg,

    /// Relative ridge for `full_ridge`, scaled by trace/dimension.
    #[arg(long, env = "GMCLUSTER_RIDGE", default_value_t = DEFAULT_RELATIVE_RIDGE)]
    pub ridge: f64,

    /// `paper`: log when all values are positive, median-center, sd-scale, then standardize.
    #[arg(long, env = "GMCLUSTER_PREPROCESS", value_enum, default_value_t = PreprocessArg::Paper)]
    pub preprocess: PreprocessArg,

    #[arg(long, env = "GMCLUSTER_AMI_NORM", value_enum, default_value_t = AmiNormArg::Mean)]
    pub ami_norm: AmiNormArg,

    /// Seed for `simulate` (overrides the spec's seed); recorded for `cluster`.
    #[arg(long, env = "GMCLUSTER_SEED")]
    pub seed: Option<u64>,

    /// Worker threads, or `auto` for all available cores.
    #[arg(long, env = "GMCLUSTER_THREADS", default_value = "auto", value_parser = parse_threads)]
    pub threads: Threads,

    /// Directory for result files (created if missing).
    #[arg(long, env = "GMCLUSTER_OUTPUT_DIR", default_value = ".")]
    #[serde(skip)]
    pub output_dir: PathBuf,

    /// Field delimiter for CSV input (`\t` or `tab` for tabs).
    #[arg(long, env = "GMCLUSTER_DELIMITER", default_value = ",", value_parser = parse_delimiter)]
    #[serde(serialize_with = "serialize_delimiter")]
    pub delimiter: u8,
}

fn serialize_delimiter<S: serde::Serializer>(d: &u8, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&(*d as char).to_string())
}

impl RunArgs {
    pub fn cov_model(&self) -> CovarianceModel {
        match self.cov_model {
            CovModelArg::Diagonal => CovarianceModel::Diagonal,
            CovModelArg::FullRidge => CovarianceModel::FullRidge {
                relative_ridge: self.ridge,
            },
        }
    }

    pub fn ami_norm(&self) -> AmiNormalization {
        match self.ami_norm {
            AmiNormArg::Mean => AmiNormalization::Mean,
            AmiNormArg::Max => AmiNormalization::Max,
        }
    }

    pub fn threads(&self) -> Option<usize> {
        match self.threads {
            Threads::Auto => None,
            Threads::Fixed(n) => Some(n),
        }
    }

    pub fn cluster_config(&self) -> ClusterConfig {
        ClusterConfig {
            kmax: self.kmax,
            max_iter: self.max_iter,
            cov_model: self.cov_model(),
            preprocess: match self.preprocess {
                PreprocessArg::None => Preprocess::None,
                PreprocessArg::Standardize => Preprocess::Standardize,
                PreprocessArg::Paper => Preprocess::Paper,
            },
            threads: self.threads(),
        }
    }

    /// Range checks that apply to every subcommand.
    pub fn validate(&self) -> Result<(), String> {
        if self.kmax < 1 {
            return Err("--kmax must be at least 1".into());
        }
        if self.max_iter < 1 {
            return Err("--max-iter must be at least 1".into());
        }
        if !self.ridge.is_finite() || self.ridge < 0.0 {
            return Err("--ridge must be a finite value >= 0".into());
        }
        if self.threads == Threads::Fixed(0) {
            return Err("--threads must be at least 1".into());
        }
        Ok(())
    }
}
