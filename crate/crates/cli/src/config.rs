//! Run configuration: one JSON document with top-level blocks
//! {grid, spec, newton, continuation, eigen, output}. Unknown keys are hard
//! errors so typos in exponents never pass silently; every default is
//! expanded into the echoed `resolved_config.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hessphere::pde::{PhiSpec, ProblemSpec};
use hessphere::sphere::{read_csv_file, AmbientFn, Monomial};
use hessphere::verify;
use hessphere::NewtonSettings;

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub spec: SpecConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub continuation: ContinuationConfig,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_lat: usize,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct SpecConfig {
    pub k: usize,
    pub p: f64,
    pub q: f64,
    #[serde(default)]
    pub epsilon: f64,
    pub phi: PhiConfig,
    /// Tolerance for the data curvature check; default 1e-8 max f.
    #[serde(default)]
    pub tol_assume: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "lowercase")]
pub enum PhiConfig {
    Constant { value: f64 },
    Polynomial { terms: Vec<TermConfig> },
    Tabulated { path: PathBuf },
    Manufactured { support: SupportConfig },
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub coeff: f64,
    pub powers: [u32; 3],
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "lowercase")]
pub enum SupportConfig {
    Constant { value: f64 },
    Polynomial { terms: Vec<TermConfig> },
}

#[derive(Debug, Deserialize, Serialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    /// Max-norm residual target; default 1e-10 C_n^k scaled by the grid's
    /// measured rounding floor, (n_lat/32)^4 above n_lat = 32.
    #[serde(default)]
    pub tol_res: Option<f64>,
    #[serde(default)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct ContinuationConfig {
    #[serde(default)]
    pub n_steps_init: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize, Clone, Default)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default)]
    pub eps_sequence: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Serialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_solution_csv")]
    pub solution_csv: String,
    #[serde(default = "default_trace_json")]
    pub trace_json: String,
    #[serde(default = "default_bounds_json")]
    pub bounds_json: String,
    #[serde(default = "default_eigen_json")]
    pub eigen_json: String,
    #[serde(default = "default_assumption_json")]
    pub assumption_json: String,
    #[serde(default = "default_surface_obj")]
    pub surface_obj: String,
    #[serde(default = "default_violations_csv")]
    pub violations_csv: String,
    #[serde(default = "default_props_json")]
    pub props_json: String,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_solution_csv() -> String {
    "solution.csv".into()
}
fn default_trace_json() -> String {
    "trace.json".into()
}
fn default_bounds_json() -> String {
    "bounds.json".into()
}
fn default_eigen_json() -> String {
    "eigen.json".into()
}
fn default_assumption_json() -> String {
    "assumption.json".into()
}
fn default_surface_obj() -> String {
    "surface.obj".into()
}
fn default_violations_csv() -> String {
    "violations.csv".into()
}
fn default_props_json() -> String {
    "props.json".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_out_dir(),
            solution_csv: default_solution_csv(),
            trace_json: default_trace_json(),
            bounds_json: default_bounds_json(),
            eigen_json: default_eigen_json(),
            assumption_json: default_assumption_json(),
            surface_obj: default_surface_obj(),
            violations_csv: default_violations_csv(),
            props_json: default_props_json(),
        }
    }
}

pub const DEFAULT_EPS_SEQUENCE: [f64; 6] = [0.4, 0.2, 0.1, 0.05, 0.025, 0.0125];
pub const DEFAULT_N_STEPS_INIT: usize = 10;

/// A config with every default expanded, bound to core types.
pub struct Resolved {
    pub config: RunConfig,
    pub n_lat: usize,
    pub spec: ProblemSpec,
    pub settings: NewtonSettings,
    pub n_steps_init: usize,
    pub eps_sequence: Vec<f64>,
    pub out_dir: PathBuf,
    pub tol_assume: Option<f64>,
}

fn ambient_from_terms(terms: &[TermConfig]) -> Result<AmbientFn, String> {
    AmbientFn::polynomial(
        terms.iter().map(|t| Monomial { coeff: t.coeff, powers: t.powers }).collect(),
    )
    .map_err(|e| e.to_string())
}

pub fn load(path: &Path, out_override: Option<PathBuf>) -> Result<Resolved, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let config: RunConfig =
        serde_json::from_str(&text).map_err(|e| format!("config parse error: {e}"))?;
    let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    let phi = match &config.spec.phi {
        PhiConfig::Constant { value } => PhiSpec::Ambient(AmbientFn::Constant(*value)),
        PhiConfig::Polynomial { terms } => PhiSpec::Ambient(ambient_from_terms(terms)?),
        PhiConfig::Tabulated { path } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let field = read_csv_file(&full)
                .map_err(|e| format!("tabulated phi {}: {e}", full.display()))?;
            PhiSpec::Tabulated(field)
        }
        PhiConfig::Manufactured { support } => {
            let f = match support {
                SupportConfig::Constant { value } => AmbientFn::Constant(*value),
                SupportConfig::Polynomial { terms } => ambient_from_terms(terms)?,
            };
            PhiSpec::Manufactured { support: f }
        }
    };
    // class-of-exponent preconditions (p > q for solve, p = q > 1 for
    // eigen) are enforced by the individual commands
    let spec = ProblemSpec::for_data_check(
        2,
        config.spec.k,
        config.spec.p,
        config.spec.q,
        config.spec.epsilon,
        phi,
    )
    .map_err(|e| e.to_string())?;

    let n_lat = config.grid.n_lat;
    let mut settings = verify::settings_for_grid(&spec, n_lat);
    if let Some(tol) = config.newton.tol_res {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(format!("newton.tol_res = {tol} must be positive and finite"));
        }
        settings.tol_res = tol;
    }
    if let Some(it) = config.newton.max_iter {
        if it == 0 {
            return Err("newton.max_iter must be at least 1".into());
        }
        settings.max_iter = it;
    }
    let n_steps_init = config.continuation.n_steps_init.unwrap_or(DEFAULT_N_STEPS_INIT);
    if n_steps_init == 0 {
        return Err("continuation.n_steps_init must be at least 1".into());
    }
    let eps_sequence =
        config.eigen.eps_sequence.clone().unwrap_or_else(|| DEFAULT_EPS_SEQUENCE.to_vec());
    let out_dir = out_override.unwrap_or_else(|| {
        if config.output.dir.is_absolute() {
            config.output.dir.clone()
        } else {
            base_dir.join(&config.output.dir)
        }
    });
    let tol_assume = config.spec.tol_assume;
    Ok(Resolved {
        config,
        n_lat,
        spec,
        settings,
        n_steps_init,
        eps_sequence,
        out_dir,
        tol_assume,
    })
}

impl Resolved {
    /// Echo with all defaults made explicit.
    pub fn echo_json(&self, seed: u64) -> serde_json::Value {
        serde_json::json!({
            "grid": { "n_lat": self.n_lat },
            "spec": {
                "k": self.spec.k,
                "p": self.spec.p,
                "q": self.spec.q,
                "epsilon": self.spec.epsilon,
                "phi": self.config.spec.phi,
                "tol_assume": self.tol_assume,
            },
            "newton": {
                "tol_res": self.settings.tol_res,
                "max_iter": self.settings.max_iter,
            },
            "continuation": { "n_steps_init": self.n_steps_init },
            "eigen": { "eps_sequence": self.eps_sequence },
            "output": self.config.output,
            "seed": seed,
        })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}
