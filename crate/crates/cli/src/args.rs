use clap::{Args, Parser, Subcommand, ValueEnum};
use ehi_core::spaces::{Kind, MeasureScheme, MetricChoice};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser, Serialize)]
#[command(name = "ehi", version, about = "Harnack, capacity and scale-function experiments on weighted networks")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where the JSON report goes.
    #[arg(long, global = true, default_value = "ehi-report.json")]
    pub report: PathBuf,
    /// Extra plot-ready tables, e.g. `--emit csv:psi`; written next to the report.
    #[arg(long = "emit", global = true, value_name = "csv:TABLE")]
    pub emit: Vec<String>,
    /// Leave wall-clock timings out of the report (for byte comparisons).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_timings: bool,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpaceArgs {
    /// A space JSON file, or a generator: path, grid, gasket, vicsek, joined_gsq, vicsek_interval.
    #[arg(long)]
    pub space: String,
    /// Generator size: level for fractals, vertex count for paths, side for grids.
    #[arg(long, alias = "size")]
    pub level: Option<u32>,
    /// Second generator size (joined_gsq square side, vicsek_interval length).
    #[arg(long)]
    pub aux: Option<u32>,
    #[arg(long, value_parser = parse_metric, default_value = "graph")]
    pub metric: MetricChoice,
    #[arg(long, value_parser = parse_scheme, default_value = "counting")]
    pub measure: MeasureScheme,
    #[arg(long, default_value_t = 1)]
    pub subdivide: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum MuSource {
    /// The measure stored in the space.
    Space,
    /// The measure built from cube capacities.
    Vk,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Printed,
    Unshifted,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PsiArgs {
    #[arg(long, value_enum, default_value = "space")]
    pub mu: MuSource,
    /// Ratio A in the capacity window of Ψ.
    #[arg(long = "psi-a", default_value_t = 2.0)]
    pub psi_a: f64,
    #[arg(long, value_enum, default_value = "unshifted")]
    pub window: Window,
    /// Ratio A of the dyadic cubes (only used with `--mu vk`).
    #[arg(long = "A", default_value_t = 8.0)]
    pub a: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct IneqArgs {
    #[arg(long = "A1", default_value_t = 2.0)]
    pub a1: f64,
    #[arg(long = "A2", default_value_t = 4.0)]
    pub a2: f64,
    /// Sampled ball centres (all points if omitted).
    #[arg(long)]
    pub centres: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Greens,
    Caps,
    Pi,
    Cs,
    Cappsi,
    Cross,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Cmd {
    /// Write a generated or normalized space file.
    Gen {
        #[command(flatten)]
        space: SpaceArgs,
        /// Output file (stdout if omitted).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Green function of a domain.
    Green {
        #[command(flatten)]
        space: SpaceArgs,
        /// Comma-separated point ids.
        #[arg(long)]
        domain: String,
    },
    /// Relative capacity Cap_D(A).
    Cap {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        target: String,
    },
    /// Harnack constant of one ball, or a scan over centres and radii.
    Harnack {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long)]
        center: Option<i64>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long)]
        centres: Option<usize>,
    },
    /// Build (or load) and verify dyadic cubes.
    Cubes {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long = "A", default_value_t = 8.0)]
        a: f64,
        /// Root point id (first point if omitted).
        #[arg(long)]
        root: Option<i64>,
        /// Verify this decomposition file instead of building one.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Doubling measure from cube capacities, or replay of a saved ledger.
    Vk {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long = "A", default_value_t = 8.0)]
        a: f64,
        #[arg(long)]
        root: Option<i64>,
        #[arg(long, default_value_t = 32)]
        samples: usize,
        /// Audit this ledger file instead of building a measure.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        ledger_out: Option<PathBuf>,
        /// Write the space with the new measure.
        #[arg(long)]
        measure_out: Option<PathBuf>,
    },
    /// Scale function Ψ and its regularity.
    Psi {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        psi: PsiArgs,
        #[arg(long, default_value_t = 20_000)]
        pairs: usize,
    },
    /// The metric d_Ψ.
    Remetric {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        psi: PsiArgs,
        #[arg(long, default_value_t = 20_000)]
        pairs: usize,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
    },
    /// Inequality suites.
    Check {
        #[arg(value_enum)]
        suite: Suite,
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        psi: PsiArgs,
        #[command(flatten)]
        ineq: IneqArgs,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
    },
    /// Constants before and after random conductance perturbations.
    Stability {
        #[command(flatten)]
        space: SpaceArgs,
        #[command(flatten)]
        psi: PsiArgs,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: u64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long)]
        centres: Option<usize>,
        /// Largest accepted before/after ratio.
        #[arg(long, default_value_t = 10.0)]
        max_ratio: f64,
    },
    /// Every stage in order: space, EHI scan, cubes, measure, Ψ, d_Ψ, checks.
    Pipeline {
        #[command(flatten)]
        space: SpaceArgs,
        #[arg(long = "A", default_value_t = 8.0)]
        a: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Also run a perturbation stage with this λ (needs `--seed`).
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 4)]
        trials: u64,
        #[arg(long, default_value_t = 16)]
        centres: usize,
        #[arg(long, value_enum, default_value = "vk")]
        mu: MuSource,
    },
}

impl Cmd {
    pub fn name(&self) -> &'static str {
        match self {
            Cmd::Gen { .. } => "gen",
            Cmd::Green { .. } => "green",
            Cmd::Cap { .. } => "cap",
            Cmd::Harnack { .. } => "harnack",
            Cmd::Cubes { .. } => "cubes",
            Cmd::Vk { .. } => "vk",
            Cmd::Psi { .. } => "psi",
            Cmd::Remetric { .. } => "remetric",
            Cmd::Check { .. } => "check",
            Cmd::Stability { .. } => "stability",
            Cmd::Pipeline { .. } => "pipeline",
        }
    }

    /// CSV tables this command can emit.
    pub fn tables(&self) -> &'static [&'static str] {
        match self {
            Cmd::Gen { .. } => &["edges", "measure"],
            Cmd::Green { .. } => &["green"],
            Cmd::Cap { .. } => &["potential"],
            Cmd::Harnack { .. } => &["harnack", "scales"],
            Cmd::Cubes { .. } => &["cubes"],
            Cmd::Vk { .. } => &["measure"],
            Cmd::Psi { .. } => &["psi"],
            Cmd::Remetric { .. } => &["psi", "dpsi"],
            Cmd::Check { .. } => &["balls"],
            Cmd::Stability { .. } => &["trials"],
            Cmd::Pipeline { .. } => &["scales", "measure", "psi"],
        }
    }
}

fn from_name<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("unknown value `{s}`"))
}

fn parse_metric(s: &str) -> Result<MetricChoice, String> {
    from_name(s)
}

fn parse_scheme(s: &str) -> Result<MeasureScheme, String> {
    from_name(s)
}

pub fn parse_kind(s: &str) -> Option<Kind> {
    from_name(s).ok()
}
