//! Numeric tolerances and algorithm constants.
//!
//! Every tolerance used anywhere in the crate lives in [`NumericPolicy`].
//! Operations that need one take `&NumericPolicy`; the defaults reproduce the
//! documented behaviour. A policy can be loaded from a flat `key = value`
//! file and partially overridden field by field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment variable naming a policy override file for the CLI.
pub const POLICY_ENV: &str = "VIETA_POLICY";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericPolicy {
    /// A point is on the surface when `|F(p)| <= on_surface_tol`.
    pub on_surface_tol: f64,
    /// Slack on the `[-2, 2]^3` box used for compact-component membership.
    pub box_tol: f64,
    /// A trace counts as `±2` within this distance.
    pub trace_pm2_tol: f64,
    /// Relative tolerance for a vanishing discriminant.
    pub discriminant_rel_tol: f64,

    pub singular_grid_radius: f64,
    pub singular_grid_points: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub singular_dedup: f64,
    pub singular_verify: f64,

    /// Minimum gradient norm for a tangent frame.
    pub frame_min_grad: f64,
    pub frame_orth_tol: f64,
    /// Residual allowed when expressing `J e_i` in the image frame.
    pub frame_solve_tol: f64,
    /// Relative agreement required between two area-form charts.
    pub area_agreement_tol: f64,

    pub envelope_grid: usize,
    pub envelope_safety: f64,
    /// Total area below which a compact component is treated as a point.
    pub singleton_area: f64,

    pub escape_radius: f64,
    pub lyapunov_cadence: usize,
    pub lyapunov_blocks: usize,
    /// Entries of the running cocycle are renormalised once they exceed this.
    pub cocycle_norm_cap: f64,
    pub moment_batches: usize,

    /// Minimum largest-coordinate modulus for the charts at infinity.
    pub chart_threshold: f64,
    /// Chart region `|u|, |v| <= chart_region` for the graph function.
    pub chart_region: f64,
    pub graph_newton_iter: usize,
    pub graph_newton_tol: f64,
    pub shadow_calibration_samples: usize,
    /// Width of the log-coordinate band used for calibration.
    pub shadow_band: f64,
    /// Relative distance allowed when a backtracking step returns to a stacked point.
    pub backtrack_rel_tol: f64,

    pub orbit_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        Self {
            on_surface_tol: 1e-9,
            box_tol: 1e-9,
            trace_pm2_tol: 1e-12,
            discriminant_rel_tol: 1e-10,
            singular_grid_radius: 6.0,
            singular_grid_points: 11,
            newton_tol: 1e-12,
            newton_max_iter: 60,
            singular_dedup: 1e-6,
            singular_verify: 1e-8,
            frame_min_grad: 1e-8,
            frame_orth_tol: 1e-10,
            frame_solve_tol: 1e-8,
            area_agreement_tol: 1e-8,
            envelope_grid: 200,
            envelope_safety: 0.8,
            singleton_area: 1e-6,
            escape_radius: 1e8,
            lyapunov_cadence: 8,
            lyapunov_blocks: 20,
            cocycle_norm_cap: 1e100,
            moment_batches: 100,
            chart_threshold: 10.0,
            chart_region: 0.3,
            graph_newton_iter: 30,
            graph_newton_tol: 1e-14,
            shadow_calibration_samples: 1000,
            shadow_band: 5.0,
            backtrack_rel_tol: 1e-6,
            orbit_tol: 1e-8,
        }
    }
}

impl NumericPolicy {
    /// Parses a flat `key = value` document; unknown keys are errors.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("numeric policy: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Loads the file named by [`POLICY_ENV`], or the defaults when unset.
    pub fn from_env() -> Result<Self> {
        match std::env::var_os(POLICY_ENV) {
            Some(path) => Self::from_file(Path::new(&path)),
            None => Ok(Self::default()),
        }
    }

    /// Names of all fields, for config validation.
    pub fn field_names() -> Vec<String> {
        match serde_json::to_value(Self::default()) {
            Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
            _ => Vec::new(),
        }
    }

    /// Applies a single override given as a JSON value.
    pub fn set_field(&mut self, key: &str, value: serde_json::Value) -> Result<()> {
        let mut map = match serde_json::to_value(&*self) {
            Ok(serde_json::Value::Object(map)) => map,
            _ => unreachable!("policy serialises to an object"),
        };
        if !map.contains_key(key) {
            return Err(Error::Config(format!("unknown policy field `{key}`")));
        }
        map.insert(key.to_string(), value);
        *self = serde_json::from_value(serde_json::Value::Object(map))
            .map_err(|e| Error::Config(format!("policy field `{key}`: {e}")))?;
        Ok(())
    }
}
