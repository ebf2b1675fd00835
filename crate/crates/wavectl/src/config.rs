//! Run configuration: defaults, JSON file, `WAVECTL_*` environment and `--set` overrides.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use wwcontrol::control::ControlSpec;
use wwcontrol::spectral::default_mx;
use wwcontrol::{Depth, Grid};

/// Raised for anything the user has to fix in the invocation or the config.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub control: ControlConfig,
    pub ingham: InghamConfig,
    pub transform: TransformConfig,
    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            physics: PhysicsConfig::default(),
            control: ControlConfig::default(),
            ingham: InghamConfig::default(),
            transform: TransformConfig::default(),
            seeds: Seeds::default(),
            output_dir: PathBuf::from("wavectl-out"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Largest Fourier mode.
    #[serde(rename = "N")]
    pub n: usize,
    /// Physical samples; `null` picks the smallest power of two ≥ 3N+1.
    #[serde(rename = "M_x")]
    pub mx: Option<usize>,
    /// Time steps on `[0, T]`.
    #[serde(rename = "K_t")]
    pub kt: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n: 16, mx: None, kt: 32 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Inf {
    #[serde(rename = "inf")]
    Inf,
}

/// Depth as a number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DepthConfig {
    Finite(f64),
    Infinite(Inf),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub g: f64,
    pub b: DepthConfig,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { g: 1.0, b: DepthConfig::Finite(1.0) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    /// `η = ε cos(mode·x)`, `ψ = 0`.
    Mode,
    /// Seeded smooth random `(η, ψ)` with `‖η‖_{L²} = ‖ψ‖_{L²} = ε`.
    Random,
    Zero,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// End-to-end residual bound, relative to `epsilon_amplitude`.
    pub residual: f64,
    /// Stop rule of the quasi-linear iteration.
    pub scheme: f64,
    /// Relative terminal residual accepted from the linear HUM solve.
    pub hum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { residual: 1e-4, scheme: 1e-8, hum: 1e-6 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    #[serde(rename = "T")]
    pub t: f64,
    /// Control region as a union of intervals `[a, b]` in `[0, 2π)`.
    pub omega: Vec<[f64; 2]>,
    pub epsilon_amplitude: f64,
    pub data: DataKind,
    pub mode: i64,
    pub tolerances: Tolerances,
    /// Iteration budget of the quasi-linear scheme.
    pub n_max: usize,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            omega: vec![[0.0, FRAC_PI_2]],
            epsilon_amplitude: 1e-5,
            data: DataKind::Mode,
            mode: 1,
            tolerances: Tolerances::default(),
            n_max: 20,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InghamConfig {
    #[serde(rename = "T")]
    pub t: f64,
    /// Modes `0..=n_max` (one per ± pair).
    pub n_max: i64,
    /// `β(t) = delta·sin(t)`.
    pub delta: f64,
    /// Horizon and cutoff of the high-frequency check.
    pub t_high: f64,
    pub n_cut: i64,
}

impl Default for InghamConfig {
    fn default() -> Self {
        Self { t: 1.0, n_max: 16, delta: 0.0, t_high: 2.0, n_cut: 4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformConfig {
    /// Include the time-dependent phase shift `β₀` in `A`.
    pub beta0: bool,
    pub flip_transport: bool,
    pub flip_lower: bool,
    /// Amplitude of the transport coefficient `W` used by the cancellation check.
    pub w_amplitude: f64,
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self { beta0: true, flip_transport: false, flip_lower: false, w_amplitude: 0.5 }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub data: u64,
}

impl RunConfig {
    pub fn depth(&self) -> Depth {
        match self.physics.b {
            DepthConfig::Finite(b) => Depth::Finite(b),
            DepthConfig::Infinite(_) => Depth::Infinite,
        }
    }

    /// Lattice with horizon `t_end` and `kt` steps.
    pub fn grid_with(&self, t_end: f64, kt: usize) -> anyhow::Result<Grid> {
        let mx = self.grid.mx.unwrap_or_else(|| default_mx(self.grid.n));
        Grid::new(self.grid.n, mx, self.physics.g, self.depth(), t_end, kt).map_err(|e| bad(e.to_string()))
    }

    pub fn grid(&self) -> anyhow::Result<Grid> {
        self.grid_with(self.control.t, self.grid.kt)
    }

    pub fn spec(&self) -> anyhow::Result<ControlSpec> {
        ControlSpec::new(self.control.omega.iter().map(|w| (w[0], w[1])).collect()).map_err(|e| bad(e.to_string()))
    }

    fn validate(&self) -> anyhow::Result<()> {
        if self.grid.n == 0 || self.grid.kt == 0 {
            return Err(bad("grid.N and grid.K_t must be positive"));
        }
        if !(self.physics.g > 0.0) {
            return Err(bad("physics.g must be positive"));
        }
        if let DepthConfig::Finite(b) = self.physics.b {
            if !(b > 0.0) {
                return Err(bad("physics.b must be positive or \"inf\""));
            }
        }
        let c = &self.control;
        if !(c.t > 0.0) || !(c.epsilon_amplitude >= 0.0) {
            return Err(bad("control.T must be positive and control.epsilon_amplitude non-negative"));
        }
        if c.mode == 0 || c.mode.unsigned_abs() as usize > self.grid.n {
            return Err(bad(format!("control.mode must be a non-zero mode with |mode| ≤ N, got {}", c.mode)));
        }
        let tol = &c.tolerances;
        if [tol.residual, tol.scheme, tol.hum].iter().any(|v| !(*v >= 0.0)) {
            return Err(bad("tolerances must be non-negative"));
        }
        if !(self.ingham.t > 0.0 && self.ingham.t_high > 0.0) || self.ingham.n_max < 1 {
            return Err(bad("ingham.T, ingham.t_high and ingham.n_max must be positive"));
        }
        self.grid()?;
        self.spec()?;
        Ok(())
    }
}

/// Deep merge of `patch` into `base`.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Sets `value` at a dot-separated path; intermediate objects are created.
fn set_path(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(bad(format!("bad key {path:?}")));
    }
    for p in &parts[..parts.len() - 1] {
        let obj = cur.as_object_mut().ok_or_else(|| bad(format!("{path}: {p} is not a section")))?;
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur.as_object_mut().ok_or_else(|| bad(format!("{path}: parent is not a section")))?;
    obj.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// JSON if it parses, otherwise a plain string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// `WAVECTL_CONTROL__EPSILON_AMPLITUDE` → `control.epsilon_amplitude`. Section
/// separators are double underscores; keys are matched case-insensitively.
fn env_key(name: &str, template: &Value) -> Option<String> {
    let rest = name.strip_prefix("WAVECTL_")?;
    let mut node = template;
    let mut out = Vec::new();
    for part in rest.split("__") {
        let obj = node.as_object()?;
        let (k, v) = obj.iter().find(|(k, _)| k.eq_ignore_ascii_case(part))?;
        out.push(k.clone());
        node = v;
    }
    Some(out.join("."))
}

/// Overrides applied on top of the defaults, in increasing precedence.
pub struct Overrides<'a> {
    pub file: Option<&'a Path>,
    pub env: Vec<(String, String)>,
    pub set: &'a [String],
    pub out: Option<&'a Path>,
    pub seed: Option<u64>,
}

pub fn resolve(o: &Overrides<'_>) -> anyhow::Result<RunConfig> {
    let defaults = serde_json::to_value(RunConfig::default())?;
    let mut v = defaults.clone();
    if let Some(path) = o.file {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if !file.is_object() {
            return Err(bad(format!("{}: top level must be an object", path.display())));
        }
        merge(&mut v, file);
    }
    let mut env = o.env.clone();
    env.sort();
    for (name, raw) in env.iter().filter(|(n, _)| n.starts_with("WAVECTL_")) {
        let key = env_key(name, &defaults).ok_or_else(|| bad(format!("{name} does not name a config key")))?;
        set_path(&mut v, &key, parse_value(raw))?;
    }
    for item in o.set {
        let (k, raw) = item.split_once('=').ok_or_else(|| bad(format!("--set expects key=value, got {item:?}")))?;
        set_path(&mut v, k.trim(), parse_value(raw))?;
    }
    if let Some(out) = o.out {
        v["output_dir"] = Value::String(out.to_string_lossy().into_owned());
    }
    if let Some(seed) = o.seed {
        v["seeds"]["data"] = Value::from(seed);
    }
    let cfg: RunConfig = serde_json::from_value(v).map_err(|e| bad(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with(set: &[&str], env: &[(&str, &str)]) -> anyhow::Result<RunConfig> {
        let set: Vec<String> = set.iter().map(|s| s.to_string()).collect();
        let env = env.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        resolve(&Overrides { file: None, env, set: &set, out: None, seed: None })
    }

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = with(&[], &[]).unwrap();
        assert_eq!(c.grid.n, 16);
        assert_eq!(c.grid().unwrap().mx, 64);
        let back: RunConfig = serde_json::from_value(serde_json::to_value(&c).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), serde_json::to_string(&c).unwrap());
    }

    #[test]
    fn set_and_env_precedence() {
        let c = with(&["control.T=0.5", "physics.b=\"inf\""], &[("WAVECTL_CONTROL__T", "2.0"), ("WAVECTL_GRID__N", "8")]).unwrap();
        assert_eq!(c.control.t, 0.5);
        assert_eq!(c.grid.n, 8);
        assert_eq!(c.depth(), Depth::Infinite);
        let c = with(&["physics.b=inf"], &[]).unwrap();
        assert_eq!(c.depth(), Depth::Infinite);
    }

    #[test]
    fn schema_errors_are_config_errors() {
        for set in [&["grid.N=-1"][..], &["control.bogus=1"], &["physics.b=\"deep\""], &["control.omega=[[2,1]]"], &["novalue"]] {
            let e = with(set, &[]).unwrap_err();
            assert!(e.downcast_ref::<ConfigError>().is_some(), "{set:?}: {e}");
        }
        assert!(with(&[], &[("WAVECTL_NOPE", "1")]).is_err());
    }
}
