//! Experiment configuration: one JSON document, with every CLI `--set`
//! override applied by dotted path before deserialization.

use ionize3d_core::alpha_model::FourierAlpha;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriveCoeff {
    pub n: i64,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriveConfig {
    pub omega: f64,
    pub coefficients: Vec<DriveCoeff>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialStateConfig {
    /// bound state of alpha(0); requires alpha(0) < 0
    Bound,
    Gaussian {
        sigma: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub h: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModesConfig {
    #[serde(default = "default_m")]
    pub m: i64,
    #[serde(default = "default_eps_ladder")]
    pub eps_ladder: Vec<f64>,
    #[serde(default = "default_s_points")]
    pub s_points: usize,
    #[serde(default = "default_fit_window")]
    pub fit_window: (f64, f64),
    #[serde(default = "default_fit_points")]
    pub fit_points: usize,
    /// Laplace-duality cross-check points (real parts; imaginary parts are
    /// spread over the strip)
    #[serde(default = "default_duality_re")]
    pub duality_re: Vec<f64>,
}

fn default_m() -> i64 {
    64
}
fn default_eps_ladder() -> Vec<f64> {
    vec![1e-3, 1e-4, 1e-5, 1e-6]
}
fn default_s_points() -> usize {
    32
}
fn default_fit_window() -> (f64, f64) {
    (1e-6, 1e-2)
}
fn default_fit_points() -> usize {
    32
}
fn default_duality_re() -> Vec<f64> {
    vec![0.3, 0.7, 1.1, 1.5]
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig {
            m: default_m(),
            eps_ladder: default_eps_ladder(),
            s_points: default_s_points(),
            fit_window: default_fit_window(),
            fit_points: default_fit_points(),
            duality_re: default_duality_re(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservablesConfig {
    #[serde(default = "default_radii")]
    pub ball_radii: Vec<f64>,
    #[serde(default = "default_ball_samples")]
    pub ball_time_samples: usize,
    /// defaults to [t_end/4, 0.9 t_end]
    #[serde(default)]
    pub decay_window: Option<(f64, f64)>,
    #[serde(default = "default_theta_samples")]
    pub theta_samples: usize,
    /// sample decay fits at drive-period multiples
    #[serde(default = "default_true")]
    pub stroboscopic: bool,
}

fn default_radii() -> Vec<f64> {
    vec![2.0]
}
fn default_ball_samples() -> usize {
    101
}
fn default_theta_samples() -> usize {
    1200
}
fn default_true() -> bool {
    true
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        ObservablesConfig {
            ball_radii: default_radii(),
            ball_time_samples: default_ball_samples(),
            decay_window: None,
            theta_samples: default_theta_samples(),
            stroboscopic: default_true(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputsConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_dir() -> String {
    "out".into()
}
fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

impl Default for OutputsConfig {
    fn default() -> Self {
        OutputsConfig {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Config {
    pub drive: DriveConfig,
    #[serde(default = "default_case_hint")]
    pub case_hint: String,
    /// declare a drive resonant explicitly when float classification is
    /// ambiguous
    #[serde(default)]
    pub resonant_hint: bool,
    #[serde(default = "default_state")]
    pub initial_state: InitialStateConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub modes: ModesConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default = "default_tol")]
    pub classification_tol: f64,
    #[serde(default = "default_n_max")]
    pub genericity_n_max: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_case_hint() -> String {
    "auto".into()
}
fn default_state() -> InitialStateConfig {
    InitialStateConfig::Bound
}
fn default_tol() -> f64 {
    1e-9
}
fn default_n_max() -> usize {
    200
}
fn default_seed() -> u64 {
    7
}

impl Config {
    pub fn drive_model(&self) -> Result<FourierAlpha, String> {
        let coeffs: Vec<(i64, Complex64)> = self
            .drive
            .coefficients
            .iter()
            .map(|c| (c.n, Complex64::new(c.re, c.im)))
            .collect();
        FourierAlpha::new(self.drive.omega, &coeffs).map_err(|e| e.to_string())
    }

    pub fn validate(&self) -> Result<(), String> {
        let model = self.drive_model()?;
        if !(self.grid.h > 0.0) {
            return Err(format!("grid.h must be positive, got {}", self.grid.h));
        }
        if !(self.grid.t_end > self.grid.h) {
            return Err("grid.t_end must exceed grid.h".into());
        }
        if self.modes.m < model.support_radius() {
            return Err(format!(
                "modes.m = {} is below the drive support radius {}",
                self.modes.m,
                model.support_radius()
            ));
        }
        match self.case_hint.as_str() {
            "auto" | "I" | "II" | "III" => {}
            other => return Err(format!("case_hint must be auto|I|II|III, got {other}")),
        }
        if let InitialStateConfig::Bound = self.initial_state {
            if model.at_zero() >= 0.0 {
                return Err(format!(
                    "initial_state bound requires alpha(0) < 0, got {}",
                    model.at_zero()
                ));
            }
        }
        Ok(())
    }
}

/// Apply `--set key=value` to a JSON document by dotted path. The value is
/// parsed as JSON when possible, otherwise taken as a string.
pub fn apply_override(doc: &mut serde_json::Value, key: &str, raw: &str) -> Result<(), String> {
    let parsed: serde_json::Value =
        serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match node {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), parsed);
                    return Ok(());
                }
                _ => return Err(format!("cannot set `{key}`: parent is not an object")),
            }
        }
        node = match node {
            serde_json::Value::Object(map) => map
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default())),
            _ => return Err(format!("cannot descend into `{part}` in `{key}`")),
        };
    }
    Ok(())
}
