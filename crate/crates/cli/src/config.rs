//! Run configuration: a TOML file whose keys mirror the long flags, with
//! flags taking precedence.

use std::path::{Path, PathBuf};

use clap::Args;
use derham_shape::{Error, GammaSelector, Problem, SolveOptions};
use serde::Deserialize;

/// Cube resolution used when neither `--gen-cube` nor `--mesh` is given.
pub const DEFAULT_CUBE: usize = 2;

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Options {
    /// TOML file with defaults for any of these flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Generate the unit cube with n³ Kuhn-split cells.
    #[arg(long = "gen-cube", visible_alias = "n", value_name = "N")]
    pub gen_cube: Option<usize>,

    /// Mesh JSON file.
    #[arg(long, conflicts_with = "gen_cube")]
    pub mesh: Option<PathBuf>,

    /// Γt selector: all, none, z0, or planes such as `x=0|z=1`.
    #[arg(long = "gamma-t", value_name = "SEL")]
    pub gamma_t: Option<String>,

    /// identity | scaled:eps=..,mu=..,nu=..,kappa=.. | random:<seed> | <file>
    #[arg(long)]
    pub coeffs: Option<String>,

    /// laplace | laplace-dual | maxwell | vector-laplacian
    #[arg(long)]
    pub problem: Option<String>,

    /// Number of distinct eigenvalues to report.
    #[arg(long)]
    pub count: Option<usize>,

    #[arg(long = "eigen-index")]
    pub eigen_index: Option<usize>,

    /// dilate | translate | shear | stretch | random:<seed> | <file>
    #[arg(long)]
    pub psi: Option<String>,

    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub t: Option<Vec<f64>>,

    #[arg(long = "zero-tol")]
    pub zero_tol: Option<f64>,

    #[arg(long = "gap-tol")]
    pub gap_tol: Option<f64>,

    /// Largest accepted eigenpair residual relative to the top eigenvalue.
    #[arg(long = "residual-tol")]
    pub residual_tol: Option<f64>,

    /// Laplace branch scaling of the vector Laplacian.
    #[arg(long)]
    pub rho: Option<f64>,

    /// random | grad | eigen (helmholtz only).
    #[arg(long)]
    pub field: Option<String>,

    /// Seed for random fields.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// CSV table path (fd-check).
    #[arg(long)]
    pub csv: Option<PathBuf>,

    /// json | csv; csv prints the table instead of the report.
    #[arg(long)]
    pub format: Option<String>,

    /// Directory for coordinate-triplet dumps of the assembled operators.
    #[arg(long = "dump-ops", value_name = "DIR")]
    pub dump_ops: Option<PathBuf>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($f:ident),*) => {
        Options { config: $flags.config, $($f: $flags.$f.or($file.$f)),* }
    };
}

impl Options {
    /// Flags overlaid on the config file, if any.
    pub fn merged(self) -> Result<Options, Error> {
        let file = match &self.config {
            Some(path) => Self::load(path)?,
            None => Options::default(),
        };
        let merged = overlay!(
            self, file, gen_cube, mesh, gamma_t, coeffs, problem, count, eigen_index, psi, t, zero_tol,
            gap_tol, residual_tol, rho, field, seed, out, csv, format, dump_ops
        );
        if merged.gen_cube.is_some() && merged.mesh.is_some() {
            return Err(Error::Usage("gen-cube and mesh are mutually exclusive".into()));
        }
        Ok(merged)
    }

    fn load(path: &Path) -> Result<Options, Error> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {}", path.display(), e.message())))
    }
}

#[derive(Debug, Clone)]
pub enum MeshSource {
    Cube(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mesh: MeshSource,
    /// `None` keeps the partition stored in a mesh file.
    pub gamma_t: Option<GammaSelector>,
    pub coeffs: String,
    pub problem: Problem,
    pub count: usize,
    pub eigen_index: usize,
    pub psi: String,
    pub t: Vec<f64>,
    pub solve: SolveOptions,
    pub residual_tol: f64,
    pub rho: f64,
    pub field: String,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub format: Format,
    pub dump_ops: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<f64, Error> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name}: must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_options(o: Options) -> Result<Self, Error> {
        let mesh = match (o.gen_cube, o.mesh) {
            (_, Some(path)) => MeshSource::File(path),
            (n, None) => MeshSource::Cube(n.unwrap_or(DEFAULT_CUBE)),
        };
        let gamma_t = match (&mesh, o.gamma_t) {
            (_, Some(s)) => Some(GammaSelector::parse(&s).map_err(|e| field_err("gamma-t", e))?),
            (MeshSource::Cube(_), None) => Some(GammaSelector::All),
            (MeshSource::File(_), None) => None,
        };
        let problem = o
            .problem
            .as_deref()
            .unwrap_or("laplace")
            .parse::<Problem>()
            .map_err(|e| field_err("problem", e))?;
        let count = o.count.unwrap_or(5);
        if count == 0 {
            return Err(Error::InvalidInput("count: must be at least 1".into()));
        }
        let t = o.t.unwrap_or_else(|| vec![1e-2, 5e-3]);
        if t.is_empty() {
            return Err(Error::InvalidInput("t: list is empty".into()));
        }
        for &v in &t {
            positive("t", v)?;
        }
        let defaults = SolveOptions::default();
        let solve = SolveOptions {
            zero_tol: positive("zero-tol", o.zero_tol.unwrap_or(defaults.zero_tol))?,
            gap_tol: positive("gap-tol", o.gap_tol.unwrap_or(defaults.gap_tol))?,
            ..defaults
        };
        let format = match o.format.as_deref().unwrap_or("json") {
            "json" => Format::Json,
            "csv" => Format::Csv,
            other => return Err(Error::Parse(format!("format: expected json or csv, got `{other}`"))),
        };
        let field = o.field.unwrap_or_else(|| "random".into());
        if !matches!(field.as_str(), "random" | "grad" | "eigen") {
            return Err(Error::Parse(format!("field: expected random, grad or eigen, got `{field}`")));
        }
        Ok(RunConfig {
            mesh,
            gamma_t,
            coeffs: o.coeffs.unwrap_or_else(|| "identity".into()),
            problem,
            count,
            eigen_index: o.eigen_index.unwrap_or(0),
            psi: o.psi.unwrap_or_else(|| "dilate".into()),
            t,
            solve,
            residual_tol: positive("residual-tol", o.residual_tol.unwrap_or(1e-8))?,
            rho: positive("rho", o.rho.unwrap_or(1.0))?,
            field,
            seed: o.seed.unwrap_or(0),
            out: o.out,
            csv: o.csv,
            format,
            dump_ops: o.dump_ops,
        })
    }
}

fn field_err(name: &str, e: Error) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{name}: {m}")),
        other => other,
    }
}
