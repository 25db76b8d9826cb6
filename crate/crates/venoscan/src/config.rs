//! Scenario configuration: a nested key-value TOML document covering the
//! phantom, robot posture, controller gains, rates, path planning, and
//! noise. Every section except `[phantom]` is optional and falls back to
//! the built-in defaults.

use crate::controller::{ControllerGains, ForceLawParams, SoftLandingState, Vec7};
use crate::geomath::Vec3;
use crate::pathfit::FitParams;
use crate::planner::UsFrameGeometry;
use crate::simworld::{ControllerLaw, Phantom, PhantomSpec, ScanScenario};
use crate::vfixture::InteractionParams;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RobotConfig {
    /// Home joint configuration; also the null-space posture target.
    pub q_home: [f64; 7],
}

impl Default for RobotConfig {
    fn default() -> Self {
        // Elbow configuration hovering ~27 mm above the default phantom's
        // path start with the probe frame aligned to the base axes.
        Self {
            q_home: [0.0, 0.2279, 0.0, -1.8494, 0.0, 1.0643, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GainsConfig {
    pub kp_translational: f64,
    pub kp_rotational: f64,
    pub kp_nullspace: f64,
    pub damping_ratio: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            kp_translational: 1200.0,
            kp_rotational: 90.0,
            kp_nullspace: 1e-3,
            damping_ratio: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ForceLawConfig {
    pub k_c: f64,
    pub k_s: f64,
    pub k_mf: f64,
    pub k_f: f64,
}

impl Default for ForceLawConfig {
    fn default() -> Self {
        Self {
            k_c: 0.4,
            k_s: 0.99,
            k_mf: 0.008,
            k_f: 0.0065,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LandingConfig {
    pub f_lo: f64,
    pub f_hi: f64,
    pub k_alpha: f64,
    pub v0: f64,
}

impl Default for LandingConfig {
    fn default() -> Self {
        Self {
            f_lo: 1.0,
            f_hi: 2.0,
            k_alpha: 10.0,
            v0: 0.015,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PathPlanConfig {
    /// Injected lateral bias of the coarse path (m), emulating the
    /// misalignment of an externally extracted skeleton.
    pub lateral_bias: f64,
    /// Longitudinal margins of the scan span from the phantom edges (m).
    pub start_margin: f64,
    pub end_margin: f64,
    /// Manual seed frame override for centroid chaining.
    pub seed_frame: Option<usize>,
}

impl Default for PathPlanConfig {
    fn default() -> Self {
        Self {
            lateral_bias: 0.010,
            start_margin: 0.04,
            end_margin: 0.04,
            seed_frame: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Desired contact force during the sweep and at session start (N).
    pub f_d: f64,
    /// Scan velocity (m/s).
    pub v_s: f64,
    pub approach_timeout: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            f_d: 6.0,
            v_s: 0.015,
            approach_timeout: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RatesConfig {
    pub control_hz: f64,
    /// Imaging every N control ticks (~30 Hz at 1 kHz control).
    pub imaging_divisor: u64,
    /// Interaction every N control ticks (50 Hz at 1 kHz control).
    pub interaction_divisor: u64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            control_hz: 1000.0,
            imaging_divisor: 33,
            interaction_divisor: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// `proposed` or `fundamental`.
    pub law: String,
    /// Feedback gain of the fundamental law.
    pub k: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            law: "proposed".into(),
            k: 0.015,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub force_std: f64,
    pub interaction_std: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            force_std: 0.0,
            interaction_std: 0.0,
            seed: 1,
        }
    }
}

/// Top-level scenario document. `[phantom]` is mandatory; everything else
/// defaults.
#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioConfig {
    pub phantom: PhantomSpec,
    #[serde(default)]
    pub robot: RobotConfig,
    #[serde(default)]
    pub gains: GainsConfig,
    #[serde(default)]
    pub force_law: ForceLawConfig,
    #[serde(default)]
    pub landing: LandingConfig,
    #[serde(default)]
    pub interaction: InteractionParams,
    #[serde(default)]
    pub imaging: UsFrameGeometry,
    #[serde(default)]
    pub fit: FitParams,
    #[serde(default)]
    pub path: PathPlanConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        if self.rates.control_hz <= 0.0 {
            return Err(ConfigError::Invalid("control_hz must be positive".into()));
        }
        if self.rates.imaging_divisor == 0 || self.rates.interaction_divisor == 0 {
            return Err(ConfigError::Invalid(
                "rate divisors must be at least 1".into(),
            ));
        }
        if !matches!(self.controller.law.as_str(), "proposed" | "fundamental") {
            return Err(ConfigError::Invalid(format!(
                "unknown controller law `{}`",
                self.controller.law
            )));
        }
        self.interaction
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.phantom.vessel_depth <= self.phantom.vessel_radius {
            return Err(ConfigError::Invalid(
                "vessel_depth must exceed vessel_radius (vessel below the surface)".into(),
            ));
        }
        let mut prev_end = 0.0;
        for seg in &self.phantom.segments {
            if seg.f_close <= 0.0 {
                return Err(ConfigError::Invalid(
                    "segment f_close must be positive".into(),
                ));
            }
            if !(0.0..1.0).contains(&seg.residual_ratio) {
                return Err(ConfigError::Invalid(
                    "residual_ratio must lie in [0, 1)".into(),
                ));
            }
            if seg.span[0] < prev_end - 1e-12 || seg.span[1] <= seg.span[0] {
                return Err(ConfigError::Invalid(
                    "vessel segments must be ordered and non-overlapping".into(),
                ));
            }
            prev_end = seg.span[1];
        }
        Ok(())
    }

    /// Assembles the runtime scenario.
    pub fn scenario(&self) -> Result<ScanScenario, ConfigError> {
        let force_params = ForceLawParams::new(
            self.force_law.k_s,
            self.force_law.k_c,
            self.force_law.k_mf,
            self.force_law.k_f,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let law = match self.controller.law.as_str() {
            "fundamental" => ControllerLaw::Fundamental {
                k: self.controller.k,
            },
            _ => ControllerLaw::Proposed,
        };
        let robot = crate::simworld::RobotModel::default_table();
        let gains = ControllerGains::new(
            self.gains.kp_translational,
            self.gains.kp_rotational,
            self.gains.kp_nullspace,
            self.gains.damping_ratio,
            robot.inertia,
        );
        Ok(ScanScenario {
            phantom: Phantom::from_spec(&self.phantom),
            robot,
            gains,
            force_params,
            landing: SoftLandingState {
                alpha: 0.0,
                f_lo: self.landing.f_lo,
                f_hi: self.landing.f_hi,
                k_alpha: self.landing.k_alpha,
                v0: self.landing.v0,
            },
            interaction: self.interaction.clone(),
            imaging: self.imaging.clone(),
            fit: self.fit.clone(),
            q_home: Vec7::from_column_slice(&self.robot.q_home),
            law,
            control_dt: 1.0 / self.rates.control_hz,
            imaging_divisor: self.rates.imaging_divisor,
            interaction_divisor: self.rates.interaction_divisor,
            approach_timeout: self.sweep.approach_timeout,
            noise: crate::simworld::NoiseParams {
                enabled: self.noise.enabled,
                force_std: self.noise.force_std,
                interaction_std: self.noise.interaction_std,
                seed: self.noise.seed,
            },
        })
    }

    /// Scan span endpoints on the phantom's longitudinal axis.
    pub fn path_endpoints(&self) -> (Vec3, Vec3) {
        let p = &self.phantom;
        (
            Vec3::new(p.origin_x + self.path.start_margin, p.center_y, 0.0),
            Vec3::new(
                p.origin_x + p.length - self.path.end_margin,
                p.center_y,
                0.0,
            ),
        )
    }
}

/// FNV-1a 64 over the raw config bytes; stable across runs and platforms.
pub fn config_hash(text: &str) -> String {
    let mut hash: u64 = 0xCBF29CE484222325;
    for b in text.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001B3);
    }
    format!("{hash:016x}")
}
