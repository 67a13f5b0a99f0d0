//! Strict JSON run configuration.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use weakkam_core::characteristics::ShootParams;
use weakkam_core::critical::DriftParams;
use weakkam_core::longtime::LongtimeParams;
use weakkam_core::propagator::{PicardParams, MAX_LAMBDA_DT};
use weakkam_core::{HamiltonianModel, PeriodicGrid, Scheme, TimeGrid, URule, ValueField};

use crate::expr::parse_function;
use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default)]
    pub characteristics: CharacteristicsConfig,
    #[serde(default)]
    pub critical: CriticalConfig,
    #[serde(default)]
    pub longtime: LongtimeConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// `H = (kinetic_coefficient/2)·p² + u_coupling·u + V(x) − shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kinetic_coefficient: f64,
    pub u_coupling: f64,
    #[serde(default = "zero_expr")]
    pub potential: String,
    #[serde(default)]
    pub shift: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kinetic_coefficient: 1.0, u_coupling: 0.0, potential: zero_expr(), shift: 0.0 }
    }
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(default = "unit_length")]
    pub length: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 200, length: 1.0 }
    }
}

fn unit_length() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { dt: 1e-2, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub window_radius: usize,
    pub u_rule: URule,
    pub picard: PicardConfig,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self { window_radius: 8, u_rule: URule::Explicit, picard: PicardConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub initial_offset: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        let p = PicardParams::default();
        Self { tol: p.tol, max_iter: p.max_iter, initial_offset: p.initial_offset }
    }
}

/// Initial datum `φ`, same grammar as the potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub phi: String,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { phi: zero_expr() }
    }
}

/// Source `(x0, u0)` of the fundamental solution and the barrier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub node: usize,
    pub u0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacteristicsConfig {
    pub x0: f64,
    pub u0: f64,
    pub p0: f64,
    pub n_steps: usize,
    /// Shooting targets (characteristics) or evaluation points (min-char).
    pub targets: Vec<f64>,
    pub shoot: ShootParams,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        Self { x0: 0.0, u0: 0.0, p0: 0.0, n_steps: 100, targets: Vec::new(), shoot: ShootParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalConfig {
    pub bracket: Option<[f64; 2]>,
    pub shifts: Vec<f64>,
    pub max_bisect: usize,
    pub drift_tol: f64,
    pub k_guard: f64,
    /// Constant `a` at which the frozen Mañé value is reported.
    pub mane_a: f64,
    pub mane_n_fine: usize,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        let d = DriftParams::default();
        Self {
            bracket: None,
            shifts: Vec::new(),
            max_bisect: 20,
            drift_tol: d.drift_tol,
            k_guard: d.k_guard,
            mane_a: 0.0,
            mane_n_fine: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LongtimeConfig {
    pub window: f64,
    pub stationary_tol: f64,
    pub max_steps: usize,
    pub aubry_tol: f64,
    pub drift_tol: f64,
    pub k_guard: f64,
}

impl Default for LongtimeConfig {
    fn default() -> Self {
        let d = LongtimeParams::default();
        Self {
            window: d.window,
            stationary_tol: d.stationary_tol,
            max_steps: d.max_steps,
            aubry_tol: d.aubry_tol,
            drift_tol: d.drift_tol,
            k_guard: d.k_guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub n_coarse: usize,
    pub k_steps: usize,
    pub coarse_dt: f64,
    pub coarse_window: usize,
    pub exact_tol: f64,
    pub ode_dt: f64,
    pub ode_tol: f64,
    pub hopf_lax_dt: f64,
    pub hopf_lax_tol: f64,
    pub characteristic_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_coarse: 8,
            k_steps: 4,
            coarse_dt: 0.1,
            coarse_window: 2,
            exact_tol: 1e-12,
            ode_dt: 1e-3,
            ode_tol: 5e-3,
            hopf_lax_dt: 1e-2,
            hopf_lax_tol: 5e-2,
            characteristic_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
    /// Write every `stride`-th time slice of space-time fields (the final
    /// slice is always written).
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: "out".into(), formats: vec![Format::Csv, Format::Json], stride: 1 }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

/// Dotted paths of keys in `given` that have no counterpart in `schema`.
fn unknown_keys(given: &Value, schema: &Value, prefix: &str, out: &mut BTreeSet<String>) {
    let (Value::Object(g), Value::Object(s)) = (given, schema) else {
        return;
    };
    for (k, v) in g {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match s.get(k) {
            None => {
                out.insert(path);
            }
            Some(sub) => unknown_keys(v, sub, &path, out),
        }
    }
}

/// A parsed and validated configuration with everything the commands need.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub model: HamiltonianModel,
    pub grid: PeriodicGrid,
    pub tgrid: TimeGrid,
    pub scheme: Scheme,
    pub phi: ValueField,
}

impl RunConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed JSON: {e}")))?;
        let schema = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        let mut unknown = BTreeSet::new();
        unknown_keys(&value, &schema, "", &mut unknown);
        if !unknown.is_empty() {
            let list: Vec<_> = unknown.into_iter().collect();
            return Err(CliError::Config(format!("unknown keys: {}", list.join(", "))));
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<(Self, PathBuf), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((Self::from_json_str(&text)?, base))
    }

    pub fn drift_params(&self) -> DriftParams {
        DriftParams {
            horizon: self.time.horizon,
            dt: self.time.dt,
            drift_tol: self.critical.drift_tol,
            k_guard: self.critical.k_guard,
            window_radius: self.scheme.window_radius,
        }
    }

    pub fn longtime_params(&self) -> LongtimeParams {
        LongtimeParams {
            horizon: self.time.horizon,
            window: self.longtime.window,
            dt: self.time.dt,
            window_radius: self.scheme.window_radius,
            drift_tol: self.longtime.drift_tol,
            k_guard: self.longtime.k_guard,
            stationary_tol: self.longtime.stationary_tol,
            max_steps: self.longtime.max_steps,
            aubry_tol: self.longtime.aubry_tol,
        }
    }

    pub fn picard_params(&self) -> PicardParams {
        let p = &self.scheme.picard;
        PicardParams { tol: p.tol, max_iter: p.max_iter, initial_offset: p.initial_offset }
    }

    /// Checks the cross-field invariants and builds the model, grids and `φ`.
    pub fn resolve(self, base_dir: &Path) -> Result<Resolved, CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let grid = PeriodicGrid::new(self.grid.n, self.grid.length).map_err(|e| CliError::Config(e.to_string()))?;
        let tgrid = TimeGrid::with_horizon(self.time.horizon, self.time.dt).map_err(|e| CliError::Config(e.to_string()))?;
        let potential = parse_function(&self.model.potential, grid.length(), base_dir)
            .map_err(|e| CliError::Config(format!("model.potential: {e}")))?;
        let model = HamiltonianModel::quadratic(self.model.kinetic_coefficient, self.model.u_coupling, potential)
            .map_err(|e| CliError::Config(format!("model: {e}")))?
            .with_shift(self.model.shift);
        if !self.model.shift.is_finite() {
            return bad("model.shift must be finite".into());
        }
        let lambda_dt = model.lipschitz_constant() * self.time.dt;
        if lambda_dt > MAX_LAMBDA_DT {
            return bad(format!("lambda*dt = {lambda_dt} exceeds {MAX_LAMBDA_DT}; reduce time.dt"));
        }
        let r = self.scheme.window_radius;
        if r == 0 || r > grid.len() / 2 {
            return bad(format!("scheme.window_radius must be in 1..={} for n = {}", grid.len() / 2, grid.len()));
        }
        let tolerances = [
            ("scheme.picard.tol", self.scheme.picard.tol),
            ("characteristics.shoot.eps_hit", self.characteristics.shoot.eps_hit),
            ("characteristics.shoot.ode_dt", self.characteristics.shoot.ode_dt),
            ("characteristics.shoot.p_max", self.characteristics.shoot.p_max),
            ("critical.drift_tol", self.critical.drift_tol),
            ("critical.k_guard", self.critical.k_guard),
            ("longtime.window", self.longtime.window),
            ("longtime.stationary_tol", self.longtime.stationary_tol),
            ("longtime.aubry_tol", self.longtime.aubry_tol),
            ("longtime.drift_tol", self.longtime.drift_tol),
            ("longtime.k_guard", self.longtime.k_guard),
            ("oracle.coarse_dt", self.oracle.coarse_dt),
            ("oracle.exact_tol", self.oracle.exact_tol),
            ("oracle.ode_dt", self.oracle.ode_dt),
            ("oracle.ode_tol", self.oracle.ode_tol),
            ("oracle.hopf_lax_dt", self.oracle.hopf_lax_dt),
            ("oracle.hopf_lax_tol", self.oracle.hopf_lax_tol),
            ("oracle.characteristic_tol", self.oracle.characteristic_tol),
        ];
        for (key, v) in tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{key} must be positive and finite, got {v}"));
            }
        }
        if self.source.node >= grid.len() {
            return bad(format!("source.node {} outside grid of {} nodes", self.source.node, grid.len()));
        }
        if let Some([lo, hi]) = self.critical.bracket {
            if !(lo < hi) {
                return bad(format!("critical.bracket must satisfy lo < hi, got [{lo}, {hi}]"));
            }
        }
        if self.output.stride == 0 {
            return bad("output.stride must be at least 1".into());
        }
        if self.output.formats.is_empty() {
            return bad("output.formats must not be empty".into());
        }
        let phi_fn = parse_function(&self.initial.phi, grid.length(), base_dir)
            .map_err(|e| CliError::Config(format!("initial.phi: {e}")))?;
        let phi = ValueField::from_fn(grid, |x| phi_fn.value(x));
        let scheme = Scheme { window_radius: r, u_rule: self.scheme.u_rule };
        Ok(Resolved { config: self, model, grid, tgrid, scheme, phi })
    }
}
