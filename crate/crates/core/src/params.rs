//! Construction constants of the Katok map and the named parameter presets.

use serde::{Deserialize, Serialize};

use crate::error::{KatokError, Result};
use crate::geometry::frame;

/// Margin by which the switching radius exceeds `lambda * sqrt(r0)`.
pub const SWITCH_MARGIN: f64 = 1.1;

/// Closed-form invariant cone slope `2a / (2a + 1 + sqrt(4a + 1))`.
pub fn beta_of_alpha(alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(KatokError::Domain(format!("beta_of_alpha needs alpha in [0, 1), got {alpha}")));
    }
    Ok(2.0 * alpha / (2.0 * alpha + 1.0 + (4.0 * alpha + 1.0).sqrt()))
}

/// `(1 + beta) / (1 - beta)`.
pub fn gamma_of_beta(beta: f64) -> f64 {
    (1.0 + beta) / (1.0 - beta)
}

/// Named parameter sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Working scale sized for separated-set pressure experiments.
    Pressure,
    /// Working scale small enough for local product structure and the orbit decomposition.
    Product,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Pressure => "pressure",
            Preset::Product => "product",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "pressure" => Ok(Preset::Pressure),
            "product" => Ok(Preset::Product),
            other => Err(KatokError::Config(format!("unknown preset '{other}' (expected 'pressure' or 'product')"))),
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            Preset::Pressure => 0.01,
            Preset::Product => 5e-4,
        }
    }
}

/// All constants of the construction.
///
/// `r0` is measured in the squared radius `u = s1^2 + s2^2`, the variable of the
/// slow-down profile, so the slowed region is the disc of radius `sqrt(r0)`.
/// `r1` is the radius of the disc on which the slowed flow replaces `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapParams {
    pub alpha: f64,
    pub r0: f64,
    pub r1: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub gamma: f64,
    pub ode_step: f64,
    pub blend_lo: f64,
    pub quad_tol: f64,
}

impl Default for MapParams {
    fn default() -> Self {
        MapParams::preset(Preset::Pressure)
    }
}

impl MapParams {
    pub const DEFAULT_ALPHA: f64 = 0.1;
    pub const DEFAULT_R0: f64 = 1e-4;
    pub const DEFAULT_ODE_STEP: f64 = 1.0 / 128.0;
    pub const DEFAULT_QUAD_TOL: f64 = 1e-12;

    pub fn preset(p: Preset) -> Self {
        Self::new(Self::DEFAULT_ALPHA, Self::DEFAULT_R0, p.epsilon(), Self::DEFAULT_ODE_STEP, Self::DEFAULT_QUAD_TOL)
            .expect("preset parameters are valid")
    }

    /// Build and validate, filling every derived constant.
    pub fn new(alpha: f64, r0: f64, epsilon: f64, ode_step: f64, quad_tol: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(KatokError::InvalidParams(format!("alpha must lie in (0, 0.5), got {alpha}")));
        }
        let lambda = frame().lambda;
        let r1 = SWITCH_MARGIN * lambda * r0.sqrt();
        if !(r0 > 0.0) || lambda * r1 >= 0.5 {
            return Err(KatokError::InvalidParams(format!(
                "r0 must be positive with lambda*r1 < 1/2 so the slowed disc and its image do not wrap (r0 = {r0}, r1 = {r1})"
            )));
        }
        if !(epsilon > 0.0) {
            return Err(KatokError::InvalidParams(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(ode_step > 0.0 && ode_step <= 0.5) {
            return Err(KatokError::InvalidParams(format!("ode_step must lie in (0, 0.5], got {ode_step}")));
        }
        if !(quad_tol > 0.0 && quad_tol < 1e-3) {
            return Err(KatokError::InvalidParams(format!("quad_tol must lie in (0, 1e-3), got {quad_tol}")));
        }
        let beta = beta_of_alpha(alpha)?;
        Ok(MapParams {
            alpha,
            r0,
            r1,
            lambda,
            epsilon,
            beta,
            gamma: gamma_of_beta(beta),
            ode_step,
            blend_lo: r0 / 2.0,
            quad_tol,
        })
    }

    /// Radius of the region where the profile is below one.
    pub fn slow_radius(&self) -> f64 {
        self.r0.sqrt()
    }

    /// Local product structure scale `500 lambda epsilon`.
    pub fn product_scale(&self) -> f64 {
        500.0 * self.lambda * self.epsilon
    }

    /// Radius of the disc defining the decomposition indicator.
    pub fn chi_radius(&self) -> f64 {
        100.0 * self.gamma * self.epsilon + self.r1
    }

    /// Scale requirements of the construction, reported rather than enforced.
    pub fn scale_conditions(&self) -> Vec<(&'static str, bool)> {
        vec![
            ("500*lambda*epsilon < 1", self.product_scale() < 1.0),
            ("r0 <= epsilon", self.r0 <= self.epsilon),
            ("chi disc smaller than the torus", self.chi_radius() < 0.5),
        ]
    }
}
