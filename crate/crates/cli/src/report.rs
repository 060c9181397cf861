//! Machine-readable run report. Every field is either a struct (stable key
//! order) or a BTreeMap (sorted keys), so two runs with the same config and
//! seed serialize byte-identically apart from the timing block.

use serde::Serialize;
use std::collections::BTreeMap;

pub const UNITS: &str =
    "natural units: hbar = 1, 2m = 1 (H0 = -Laplacian); alpha carries 1/length, energies 1/length^2";

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceJson {
    pub class: String,
    pub n_bar: Option<i64>,
    pub p_bar_im: Option<f64>,
    pub resonant_n: Option<i64>,
    pub mean: f64,
    pub alpha_at_zero: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GenericityJson {
    pub verdict: String,
    pub final_residual: f64,
    pub plateau: Option<f64>,
    pub threshold: f64,
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitJson {
    pub series: String,
    pub sampling: String,
    pub window: (f64, f64),
    pub exponent: f64,
    pub amplitude: f64,
    pub r_squared: f64,
    pub points: usize,
    pub remainder_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityGapJson {
    pub p_re: f64,
    pub p_im: f64,
    pub relative_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchJson {
    pub n: i64,
    pub c_re: f64,
    pub c_im: f64,
    pub d_re: f64,
    pub d_im: f64,
    pub residual: f64,
    pub closed_form_d_re: Option<f64>,
    pub closed_form_d_im: Option<f64>,
    pub slope_agreement: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanJson {
    pub max_condition: f64,
    pub growth_flags: Vec<f64>,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveJson {
    pub grid_points: usize,
    pub residual_norm: f64,
    pub q_abs_initial: f64,
    pub q_abs_final: f64,
    pub apriori_rate: f64,
    pub apriori_satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlagJson {
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub units: String,
    /// fully resolved configuration (defaults materialized)
    pub config: serde_json::Value,
    pub resonance: Option<ResonanceJson>,
    pub genericity: Option<GenericityJson>,
    pub solve: Option<SolveJson>,
    pub decay_fits: BTreeMap<String, FitJson>,
    pub duality_gaps: Vec<DualityGapJson>,
    pub branch: Option<BranchJson>,
    pub scan: Option<ScanJson>,
    pub survival_unitarity_flag: Option<bool>,
    pub acceptance: BTreeMap<String, FlagJson>,
    pub stage_errors: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
    /// wall-clock seconds per stage; excluded from determinism comparisons
    pub timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(config: serde_json::Value) -> Self {
        RunReport {
            tool: "ionize3d".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            units: UNITS.into(),
            config,
            resonance: None,
            genericity: None,
            solve: None,
            decay_fits: BTreeMap::new(),
            duality_gaps: Vec::new(),
            branch: None,
            scan: None,
            survival_unitarity_flag: None,
            acceptance: BTreeMap::new(),
            stage_errors: BTreeMap::new(),
            artifacts: Vec::new(),
            timing: BTreeMap::new(),
        }
    }

    /// Exit-code predicate: every acceptance flag in scope passes and no
    /// structural stage failed. Decay fits that could not stabilize on an
    /// undersized window are diagnostics, not failures (an eligible window
    /// turns them into failing flags instead).
    pub fn all_flags_pass(&self) -> bool {
        self.acceptance.values().all(|f| f.pass)
            && self
                .stage_errors
                .keys()
                .all(|k| k.starts_with("decayfit.") || k.starts_with("duality."))
    }
}
