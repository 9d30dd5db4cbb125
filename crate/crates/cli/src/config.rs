//! Command-line flags and the resolved run configuration echoed into every
//! report.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use qcluster_core::adiabatic::Interpolation;

#[derive(Debug, Parser)]
#[command(name = "qcluster", version, about = "Quantum clustering simulations with classical oracles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Squared distance from one row to the mean of a set of rows.
    Distance(DistanceArgs),
    /// Assign a row to the nearer of two class means.
    Classify(ClassifyArgs),
    /// Adiabatic search for k mutually distant seed vectors.
    Seeds(SeedsArgs),
    /// Adiabatic search for r mutually close vectors.
    ClusterFind(ClusterFindArgs),
    /// Adiabatic Lloyd iteration.
    Qkmeans(QkmeansArgs),
    /// Classical Lloyd iteration.
    Kmeans(KmeansArgs),
    /// q-copy observable on two encoded rows.
    Nonlinear(NonlinearArgs),
    /// Query-ledger charges for encoding rows.
    Queries(QueriesArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationArg {
    Linear,
    Smoothstep,
    Smootherstep,
}

impl From<InterpolationArg> for Interpolation {
    fn from(x: InterpolationArg) -> Self {
        match x {
            InterpolationArg::Linear => Interpolation::Linear,
            InterpolationArg::Smoothstep => Interpolation::Smoothstep,
            InterpolationArg::Smootherstep => Interpolation::Smootherstep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservableArg {
    Swap,
    Identity,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(format!("`{s}` must be a positive number"))
    }
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("`{s}` must be a non-negative number"))
    }
}

/// Row list such as `0-3,7,9`.
pub fn parse_rows(s: &str) -> Result<Vec<usize>, String> {
    let mut rows = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("`{part}` is not a row index or range like 1-4");
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a > b {
                    return Err(format!("range `{part}` is decreasing"));
                }
                rows.extend(a..=b);
            }
            None => rows.push(part.parse().map_err(|_| bad())?),
        }
    }
    if rows.is_empty() {
        return Err("row list is empty".into());
    }
    Ok(rows)
}

/// Compact form of a row list, inverse of [`parse_rows`].
pub fn format_rows(rows: &[usize]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let mut j = i;
        while j + 1 < rows.len() && rows[j + 1] == rows[j] + 1 {
            j += 1;
        }
        parts.push(if j > i { format!("{}-{}", rows[i], rows[j]) } else { rows[i].to_string() });
        i = j + 1;
    }
    parts.join(",")
}

fn rows_arg(s: &str) -> Result<Rows, String> {
    parse_rows(s).map(Rows)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rows(pub Vec<usize>);

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// CSV data file, one vector per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report path; defaults to $QCLUSTER_OUT_DIR/<subcommand>.json, else stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct Sampling {
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub shots: u64,
}

#[derive(Debug, Clone, Args)]
pub struct Annealing {
    #[arg(long, default_value_t = 200.0, value_parser = positive_f64)]
    pub tau: f64,
    #[arg(long, default_value_t = 2000, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
}

#[derive(Debug, Clone, Args)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long)]
    pub u_row: usize,
    /// Rows whose mean is the target, e.g. 1-4.
    #[arg(long, value_parser = rows_arg)]
    pub rows: Rows,
    /// Flag evolution time; defaults to 0.05 over the largest norm.
    #[arg(long, value_parser = positive_f64)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long)]
    pub u_row: usize,
    #[arg(long, value_parser = rows_arg)]
    pub v_rows: Rows,
    #[arg(long, value_parser = rows_arg)]
    pub w_rows: Rows,
    #[arg(long, value_parser = positive_f64)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SeedsArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: Sampling,
    #[command(flatten)]
    pub annealing: Annealing,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, value_enum, default_value_t = InterpolationArg::Linear)]
    pub interpolation: InterpolationArg,
}

#[derive(Debug, Clone, Args)]
pub struct ClusterFindArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: Sampling,
    #[command(flatten)]
    pub annealing: Annealing,
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub r: u64,
    /// Penalty per coincident label pair; defaults to 10 * max distance.
    #[arg(long, value_parser = non_negative_f64)]
    pub kappa: Option<f64>,
    #[arg(long, value_enum, default_value_t = InterpolationArg::Linear)]
    pub interpolation: InterpolationArg,
}

#[derive(Debug, Clone, Args)]
pub struct QkmeansArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub annealing: Annealing,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub shots: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Seed rows; drawn by k-means++ when absent.
    #[arg(long, value_parser = rows_arg)]
    pub seeds: Option<Rows>,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iter: u64,
    /// Copies per distance evaluation.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub d: u64,
    /// Distance accuracy; also the noise amplitude with --noisy.
    #[arg(long, default_value_t = 1e-2, value_parser = positive_f64)]
    pub delta: f64,
    /// Perturb every label-to-centroid distance by up to delta.
    #[arg(long)]
    pub noisy: bool,
    #[arg(long, value_enum, default_value_t = InterpolationArg::Smootherstep)]
    pub interpolation: InterpolationArg,
}

#[derive(Debug, Clone, Args)]
pub struct KmeansArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, value_parser = rows_arg)]
    pub seeds: Option<Rows>,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_iter: u64,
}

#[derive(Debug, Clone, Args)]
pub struct NonlinearArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub sampling: Sampling,
    #[arg(long)]
    pub u_row: usize,
    #[arg(long)]
    pub v_row: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub q: u64,
    #[arg(long, value_enum, default_value_t = ObservableArg::Swap)]
    pub observable: ObservableArg,
}

#[derive(Debug, Clone, Args)]
pub struct QueriesArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rows to encode once each; all rows when absent.
    #[arg(long, value_parser = rows_arg)]
    pub rows: Option<Rows>,
}

/// Every setting a run used, with defaults filled in. `to_argv` turns it
/// back into a command line that reproduces the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub subcommand: String,
    pub input: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_rows: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub w_rows: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interpolation: Option<InterpolationArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub noisy: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableArg>,
}

#[cfg_attr(not(test), allow(dead_code))]
fn value_name<T: ValueEnum>(x: &T) -> String {
    x.to_possible_value().expect("no skipped variants").get_name().to_string()
}

impl RunConfig {
    fn base(subcommand: &str, common: &Common) -> Self {
        Self {
            subcommand: subcommand.into(),
            input: common.input.display().to_string(),
            seed: common.seed,
            output: common.output.as_ref().map(|p| p.display().to_string()),
            ..Self::default()
        }
    }

    fn sampling(mut self, s: &Sampling) -> Self {
        self.mode = Some(s.mode);
        self.shots = Some(s.shots);
        self
    }

    fn annealing(mut self, a: &Annealing, interpolation: InterpolationArg) -> Self {
        self.tau = Some(a.tau);
        self.steps = Some(a.steps);
        self.interpolation = Some(interpolation);
        self
    }

    pub fn from_command(command: &Command) -> Self {
        match command {
            Command::Distance(a) => Self {
                u_row: Some(a.u_row),
                rows: Some(format_rows(&a.rows.0)),
                t: a.t,
                ..Self::base("distance", &a.common).sampling(&a.sampling)
            },
            Command::Classify(a) => Self {
                u_row: Some(a.u_row),
                v_rows: Some(format_rows(&a.v_rows.0)),
                w_rows: Some(format_rows(&a.w_rows.0)),
                t: a.t,
                ..Self::base("classify", &a.common).sampling(&a.sampling)
            },
            Command::Seeds(a) => Self {
                k: Some(a.k),
                ..Self::base("seeds", &a.common)
                    .sampling(&a.sampling)
                    .annealing(&a.annealing, a.interpolation)
            },
            Command::ClusterFind(a) => Self {
                r: Some(a.r),
                kappa: a.kappa,
                ..Self::base("cluster-find", &a.common)
                    .sampling(&a.sampling)
                    .annealing(&a.annealing, a.interpolation)
            },
            Command::Qkmeans(a) => Self {
                k: Some(a.k),
                shots: Some(a.shots),
                seeds: a.seeds.as_ref().map(|s| format_rows(&s.0)),
                max_iter: Some(a.max_iter),
                d: Some(a.d),
                delta: Some(a.delta),
                noisy: a.noisy,
                ..Self::base("qkmeans", &a.common).annealing(&a.annealing, a.interpolation)
            },
            Command::Kmeans(a) => Self {
                k: Some(a.k),
                seeds: a.seeds.as_ref().map(|s| format_rows(&s.0)),
                max_iter: Some(a.max_iter),
                ..Self::base("kmeans", &a.common)
            },
            Command::Nonlinear(a) => Self {
                u_row: Some(a.u_row),
                v_row: Some(a.v_row),
                q: Some(a.q),
                observable: Some(a.observable),
                ..Self::base("nonlinear", &a.common).sampling(&a.sampling)
            },
            Command::Queries(a) => Self {
                rows: a.rows.as_ref().map(|s| format_rows(&s.0)),
                ..Self::base("queries", &a.common)
            },
        }
    }

    /// Command line (without the program name) that reproduces this run.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_argv(&self) -> Vec<String> {
        let mut argv = vec![self.subcommand.clone()];
        let mut push = |flag: &str, value: String| {
            argv.push(format!("--{flag}"));
            argv.push(value);
        };
        push("input", self.input.clone());
        push("seed", self.seed.to_string());
        if let Some(x) = &self.output {
            push("output", x.clone());
        }
        if let Some(x) = &self.mode {
            push("mode", value_name(x));
        }
        let numbers = [
            ("shots", self.shots.map(|x| x.to_string())),
            ("u-row", self.u_row.map(|x| x.to_string())),
            ("v-row", self.v_row.map(|x| x.to_string())),
            ("rows", self.rows.clone()),
            ("v-rows", self.v_rows.clone()),
            ("w-rows", self.w_rows.clone()),
            ("seeds", self.seeds.clone()),
            ("t", self.t.map(|x| x.to_string())),
            ("k", self.k.map(|x| x.to_string())),
            ("r", self.r.map(|x| x.to_string())),
            ("q", self.q.map(|x| x.to_string())),
            ("kappa", self.kappa.map(|x| x.to_string())),
            ("tau", self.tau.map(|x| x.to_string())),
            ("steps", self.steps.map(|x| x.to_string())),
            ("interpolation", self.interpolation.as_ref().map(value_name)),
            ("d", self.d.map(|x| x.to_string())),
            ("delta", self.delta.map(|x| x.to_string())),
            ("max-iter", self.max_iter.map(|x| x.to_string())),
            ("observable", self.observable.as_ref().map(value_name)),
        ];
        for (flag, value) in numbers {
            if let Some(v) = value {
                push(flag, v);
            }
        }
        if self.noisy {
            argv.push("--noisy".into());
        }
        argv
    }
}
