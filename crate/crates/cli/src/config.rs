//! Run configuration: a single TOML file with `model`, `task` and `numeric`
//! blocks. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thomas_lab::cross_section::{BoundaryCondition, CrossSectionSpec};
use thomas_lab::fit::log_grid;
use thomas_lab::galerkin::Model;
use thomas_lab::lattice::Lattice;
use thomas_lab::potential::{parse_coefficients, read_samples, BoundarySigma, Caps, PotentialSpec, SampleGrid};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of every random stream used by the task.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    pub task: TaskConfig,
    #[serde(default)]
    pub numeric: NumericConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Rows are the period vectors.
    pub lattice: Vec<Vec<f64>>,
    /// Rescale the lattice so that `|b₁| = 1`; otherwise it must already be.
    #[serde(default = "yes")]
    pub normalize: bool,
    pub cross_section: CrossSectionConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub sigma: Option<SigmaConfig>,
    /// Decoupled constant diagonal entries appended to the fiber matrix.
    #[serde(default)]
    pub injected_levels: Vec<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

impl From<Bc> for BoundaryCondition {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Dirichlet => BoundaryCondition::Dirichlet,
            Bc::Neumann => BoundaryCondition::Neumann,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CrossSectionConfig {
    Interval { length: f64, bc: Bc },
    Circle { length: f64 },
    FlatTorus { basis: Vec<Vec<f64>> },
    IntervalTorus { length: f64, bc: Bc, basis: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
        #[serde(default)]
        declared_p: Option<f64>,
    },
    /// `2·amplitude·cos⟨b̃_axis, y⟩`.
    Cosine {
        axis: usize,
        amplitude: f64,
        #[serde(default)]
        declared_p: Option<f64>,
    },
    /// Coefficient text file; relative paths resolve against the config.
    Coefficients { path: PathBuf },
    /// Binary samples on the default grid of the model.
    Samples {
        path: PathBuf,
        cross_cap: usize,
        nu_max: i64,
        cross_resolution: usize,
        cell_points: usize,
        #[serde(default)]
        declared_p: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SigmaConfig {
    Constant {
        value: f64,
        #[serde(default)]
        declared_q: Option<f64>,
    },
    /// `amplitude·cos⟨b̃_axis, y⟩` on both faces.
    Cosine {
        axis: usize,
        amplitude: f64,
        #[serde(default)]
        declared_q: Option<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Grid {
    Log { min: f64, max: f64, points: usize },
    Linear { min: f64, max: f64, points: usize },
    List { values: Vec<f64> },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Log { min, max, points } => log_grid(*min, *max, *points),
            Grid::Linear { min, max, points } => match points {
                0 => vec![],
                1 => vec![*min],
                n => (0..*n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect(),
            },
            Grid::List { values } => values.clone(),
        }
    }

    fn check(&self, path: &str) -> Result<(), CliError> {
        let ok = match self {
            Grid::Log { min, max, points } => *min > 0.0 && max > min && *points >= 1,
            Grid::Linear { min, max, points } => max >= min && *points >= 1,
            Grid::List { values } => !values.is_empty(),
        };
        if ok && self.values().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CliError::Schema(format!("{path}: empty or malformed grid")))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeAssertion {
    pub q: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeTarget {
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Bands {
        xi_perp: Vec<f64>,
        /// Equispaced shifts over `[−π, π)`.
        points: usize,
        count: usize,
        #[serde(default)]
        assert_min_variation: Option<f64>,
        #[serde(default)]
        assert_no_flat_bands: bool,
        #[serde(default)]
        assert_flat_bands: Option<Vec<usize>>,
    },
    Thomas {
        xi_perp: Vec<f64>,
        /// Spectral parameters as `[re, im]` pairs.
        lambdas: Vec<[f64; 2]>,
        tau: Grid,
        #[serde(default)]
        tau_min: f64,
        #[serde(default)]
        assert_slope_at_most: Option<f64>,
        #[serde(default)]
        assert_slope_near: Option<SlopeTarget>,
        #[serde(default)]
        assert_free_bound: bool,
    },
    Clusters {
        k_min: u64,
        k_max: u64,
        q: Vec<f64>,
        /// Include the longitudinal lattice at `ξ = πb₁ + ξ′`.
        #[serde(default)]
        xi_perp: Option<Vec<f64>>,
        #[serde(default = "default_starts")]
        starts: usize,
        #[serde(default = "default_iterations")]
        max_iterations: usize,
        #[serde(default = "default_interval_points")]
        interval_points: usize,
        #[serde(default)]
        assert_slope: Vec<SlopeAssertion>,
    },
    LemmaSums {
        epsilon: f64,
        tau: Grid,
        /// Also evaluate the cluster-weighted sum on the model spectrum.
        #[serde(default)]
        weighted: bool,
        #[serde(default)]
        xi_perp: Option<Vec<f64>>,
        /// Assert that the maximum over `τ ≥ split` is at most the maximum
        /// over `τ < split`.
        #[serde(default)]
        assert_uniform_split: Option<f64>,
    },
    RobinTrace {
        xi_perp: Vec<f64>,
        tau: Grid,
        #[serde(default)]
        boundary_points: Option<usize>,
        /// Assert `c̃(τ_last) < factor · c̃(τ_first)`.
        #[serde(default)]
        assert_decay_factor: Option<f64>,
    },
    Probe {
        xi_perp: Vec<f64>,
        tau: f64,
        samples: u64,
        #[serde(default = "default_delta")]
        delta: f64,
        #[serde(default = "default_p")]
        p: f64,
        #[serde(default = "default_margin")]
        margin: f64,
        #[serde(default)]
        assert_free_lower_bound: bool,
        #[serde(default)]
        assert_positive_ratio: bool,
    },
}

fn default_starts() -> usize {
    32
}
fn default_iterations() -> usize {
    200
}
fn default_interval_points() -> usize {
    513
}
fn default_delta() -> f64 {
    0.1
}
fn default_p() -> f64 {
    2.0
}
fn default_margin() -> f64 {
    0.5
}

impl TaskConfig {
    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Bands { .. } => "bands",
            TaskConfig::Thomas { .. } => "thomas",
            TaskConfig::Clusters { .. } => "clusters",
            TaskConfig::LemmaSums { .. } => "lemma-sums",
            TaskConfig::RobinTrace { .. } => "robin-trace",
            TaskConfig::Probe { .. } => "probe",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    /// Margin over `4τ_max²` in the truncation rule.
    #[serde(default = "default_lambda_margin")]
    pub lambda_margin: f64,
    /// Fixed truncation for real-quasimomentum tasks and cluster contexts.
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
}

fn default_lambda_margin() -> f64 {
    100.0
}
fn default_lambda_max() -> f64 {
    400.0
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self { lambda_margin: default_lambda_margin(), lambda_max: default_lambda_max() }
    }
}

/// Parses a config, reporting the field path of the first schema error.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let de = toml::Deserializer::parse(text).map_err(|e| CliError::Schema(e.to_string()))?;
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Schema(format!("at `{path}`: {}", e.into_inner().message().trim()))
    })?;
    cfg.check()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<(RunConfig, String), CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    Ok((parse(&text)?, text))
}

fn check_xi(xi: &[f64], m: usize, path: &str) -> Result<(), CliError> {
    if xi.len() != m {
        return Err(CliError::Schema(format!("{path}: expected {m} components, got {}", xi.len())));
    }
    Ok(())
}

impl RunConfig {
    fn check(&self) -> Result<(), CliError> {
        let m = self.model.lattice.len();
        if m == 0 {
            return Err(CliError::Schema("model.lattice: empty basis".into()));
        }
        match &self.task {
            TaskConfig::Bands { xi_perp, points, count, .. } => {
                check_xi(xi_perp, m, "task.xi_perp")?;
                if *points < 2 || *count == 0 {
                    return Err(CliError::Schema("task: need points ≥ 2 and count ≥ 1".into()));
                }
            }
            TaskConfig::Thomas { xi_perp, lambdas, tau, .. } => {
                check_xi(xi_perp, m, "task.xi_perp")?;
                tau.check("task.tau")?;
                if lambdas.is_empty() {
                    return Err(CliError::Schema("task.lambdas: empty list".into()));
                }
            }
            TaskConfig::Clusters { k_min, k_max, q, xi_perp, .. } => {
                if *k_min == 0 || k_max < k_min || q.is_empty() {
                    return Err(CliError::Schema("task: need 1 ≤ k_min ≤ k_max and a nonempty q list".into()));
                }
                if let Some(xi) = xi_perp {
                    check_xi(xi, m, "task.xi_perp")?;
                }
            }
            TaskConfig::LemmaSums { tau, xi_perp, .. } => {
                tau.check("task.tau")?;
                if let Some(xi) = xi_perp {
                    check_xi(xi, m, "task.xi_perp")?;
                }
            }
            TaskConfig::RobinTrace { xi_perp, tau, .. } => {
                check_xi(xi_perp, m, "task.xi_perp")?;
                tau.check("task.tau")?;
            }
            TaskConfig::Probe { xi_perp, samples, .. } => {
                check_xi(xi_perp, m, "task.xi_perp")?;
                if *samples == 0 {
                    return Err(CliError::Schema("task.samples: must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

fn schema(e: impl std::fmt::Display, path: &str) -> CliError {
    CliError::Schema(format!("{path}: {e}"))
}

impl ModelConfig {
    pub fn lattice(&self) -> Result<Lattice, CliError> {
        let lat = if self.normalize { Lattice::new(self.lattice.clone()) } else { Lattice::strict(self.lattice.clone()) };
        lat.map_err(|e| schema(e, "model.lattice"))
    }

    pub fn cross_section(&self) -> Result<CrossSectionSpec, CliError> {
        let spec = match &self.cross_section {
            CrossSectionConfig::Interval { length, bc } => CrossSectionSpec::Interval { length: *length, bc: (*bc).into() },
            CrossSectionConfig::Circle { length } => CrossSectionSpec::Circle { length: *length },
            CrossSectionConfig::FlatTorus { basis } => {
                CrossSectionSpec::FlatTorus(Lattice::raw(basis.clone()).map_err(|e| schema(e, "model.cross_section.basis"))?)
            }
            CrossSectionConfig::IntervalTorus { length, bc, basis } => CrossSectionSpec::IntervalTimesTorus {
                length: *length,
                bc: (*bc).into(),
                torus: Lattice::raw(basis.clone()).map_err(|e| schema(e, "model.cross_section.basis"))?,
            },
        };
        spec.validate().map_err(|e| schema(e, "model.cross_section"))?;
        Ok(spec)
    }

    /// Builds the model; relative data paths resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Model, CliError> {
        let lat = self.lattice()?;
        let spec = self.cross_section()?;
        let m = lat.dim();
        let potential = match &self.potential {
            PotentialConfig::Zero => PotentialSpec::zero(m),
            PotentialConfig::Constant { value, declared_p } => {
                with_p(PotentialSpec::constant(m, *value), *declared_p)
            }
            PotentialConfig::Cosine { axis, amplitude, declared_p } => with_p(
                PotentialSpec::cosine(m, *axis, *amplitude).map_err(|e| schema(e, "model.potential"))?,
                *declared_p,
            ),
            PotentialConfig::Coefficients { path } => {
                let file = std::fs::File::open(base.join(path)).map_err(|e| schema(e, "model.potential.path"))?;
                parse_coefficients(std::io::BufReader::new(file)).map_err(|e| schema(e, "model.potential.path"))?
            }
            PotentialConfig::Samples { path, cross_cap, nu_max, cross_resolution, cell_points, declared_p } => {
                let mut file = std::fs::File::open(base.join(path)).map_err(|e| schema(e, "model.potential.path"))?;
                let (shape, values) = read_samples(&mut file).map_err(|e| schema(e, "model.potential.path"))?;
                let grid = SampleGrid::new(&spec, &lat, *cross_resolution, *cross_cap, *cell_points)
                    .map_err(|e| schema(e, "model.potential"))?;
                thomas_lab::potential::check_sample_shape(&grid, &shape).map_err(|e| schema(e, "model.potential.path"))?;
                let caps = Caps { cross: *cross_cap, nu_max: *nu_max };
                let proj = PotentialSpec::from_samples(&spec, &lat, &grid, &values, caps)
                    .map_err(|e| schema(e, "model.potential"))?;
                if let Some(w) = &proj.warning {
                    eprintln!("warning: {w}");
                }
                with_p(proj.potential, *declared_p)
            }
        };
        let mut model = Model::new(lat, spec, potential).map_err(|e| schema(e, "model"))?;
        if let Some(s) = &self.sigma {
            let sigma = match s {
                SigmaConfig::Constant { value, declared_q } => with_q(BoundarySigma::constant(m, *value), *declared_q),
                SigmaConfig::Cosine { axis, amplitude, declared_q } => with_q(
                    BoundarySigma::cosine(m, *axis, *amplitude).map_err(|e| schema(e, "model.sigma"))?,
                    *declared_q,
                ),
            };
            model = model.with_sigma(sigma).map_err(|e| schema(e, "model.sigma"))?;
        }
        for &level in &self.injected_levels {
            model = model.with_injected_level(level);
        }
        Ok(model)
    }
}

fn with_p(v: PotentialSpec, p: Option<f64>) -> PotentialSpec {
    match p {
        Some(p) => v.with_declared_p(p),
        None => v,
    }
}

fn with_q(s: BoundarySigma, q: Option<f64>) -> BoundarySigma {
    match q {
        Some(q) => s.with_declared_q(q),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BANDS: &str = r#"
seed = 3
[model]
lattice = [[1.0]]
cross_section = { kind = "interval", length = 3.141592653589793, bc = "neumann" }
potential = { kind = "cosine", axis = 0, amplitude = 1.0 }
[task]
kind = "bands"
xi_perp = [0.0]
points = 16
count = 4
"#;

    #[test]
    fn parses_and_builds() {
        let cfg = parse(BANDS).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.numeric.lambda_margin, 100.0);
        let model = cfg.model.build(Path::new(".")).unwrap();
        assert_eq!(model.dimension(), 2);
    }

    #[test]
    fn unknown_key_names_path() {
        let bad = BANDS.replace("count = 4", "count = 4\ncolour = 1");
        let CliError::Schema(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("task") && msg.contains("colour"), "{msg}");
    }

    #[test]
    fn missing_lattice_is_schema_error() {
        let bad = BANDS.replace("lattice = [[1.0]]\n", "");
        let CliError::Schema(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("model") && msg.contains("lattice"), "{msg}");
    }

    #[test]
    fn wrong_type_names_nested_path() {
        let bad = BANDS.replace("length = 3.141592653589793", "length = \"pi\"");
        let CliError::Schema(msg) = parse(&bad).unwrap_err() else { panic!() };
        assert!(msg.contains("model.cross_section"), "{msg}");
    }

    #[test]
    fn xi_dimension_checked() {
        let bad = BANDS.replace("xi_perp = [0.0]", "xi_perp = [0.0, 1.0]");
        assert!(matches!(parse(&bad), Err(CliError::Schema(_))));
    }

    #[test]
    fn grids() {
        assert_eq!(Grid::Linear { min: 0.0, max: 1.0, points: 3 }.values(), vec![0.0, 0.5, 1.0]);
        let g = Grid::Log { min: 1.0, max: 100.0, points: 3 }.values();
        assert!((g[1] - 10.0).abs() < 1e-12 && g[2] == 100.0);
        assert!(Grid::Log { min: 0.0, max: 1.0, points: 3 }.check("x").is_err());
    }
}
