//! Run configuration (`scatlab-config/1`, TOML).
//!
//! ```toml
//! schema = "scatlab-config/1"
//! seed = 7
//! freqs = [2e9, 4e9]
//!
//! [grid]
//! nx = 32
//! ny = 32
//! extent = 0.15
//!
//! [sensors]
//! layout = "ring"        # or "fresnel"
//! radius = 1.67
//! P = 8
//! Q = 241
//!
//! [inversion]
//! beta = 1e-3
//! T = 5e-4
//! max_iters = 200
//! calibration_mode = "joint"
//! lambda_domain = "complex"
//! surrogate_mode = "exact_forward"
//! ```
//!
//! Every section is optional; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationMode, LambdaDomain};
use crate::domain::{
    fresnel_geometry, FrequencySet, ImagingGrid, Point2, Primitive, SceneSpec, SensorArray,
    FRESNEL_RADIUS,
};
use crate::forward::SolverSettings;
use crate::inversion::{ChiStep, InversionConfig, SurrogateMode};
use crate::subspace::CutoffRule;
use crate::surrogate::TrainingConfig;
use crate::{Complex64, Error, Result};

pub const CONFIG_SCHEMA: &str = "scatlab-config/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub schema: String,
    pub seed: u64,
    /// Operating frequencies, Hz.
    pub freqs: Vec<f64>,
    pub grid: GridSection,
    pub sensors: SensorSection,
    pub inversion: InversionSection,
    pub surrogate: SurrogateSection,
    /// Ground truth used by `forward`.
    pub scene: SceneSection,
    pub synthetic: SyntheticSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.into(),
            seed: 0,
            freqs: vec![2e9, 4e9, 6e9, 8e9],
            grid: GridSection::default(),
            sensors: SensorSection::default(),
            inversion: InversionSection::default(),
            surrogate: SurrogateSection::default(),
            scene: SceneSection::preset("foam_diel_ext"),
            synthetic: SyntheticSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    /// Side length along x, metres; y follows from square cells.
    pub extent: f64,
    pub center: [f64; 2],
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 32,
            ny: 32,
            extent: 0.15,
            center: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SensorLayout {
    Ring,
    #[default]
    Fresnel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub layout: SensorLayout,
    pub radius: f64,
    #[serde(rename = "P")]
    pub n_tx: usize,
    /// Receivers per transmitter.
    #[serde(rename = "Q")]
    pub n_rx: usize,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self {
            layout: SensorLayout::Fresnel,
            radius: FRESNEL_RADIUS,
            n_tx: 8,
            n_rx: 241,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionSection {
    pub beta: f64,
    #[serde(rename = "T")]
    pub termination_tol: f64,
    pub max_iters: usize,
    pub calibration_mode: CalibrationMode,
    pub lambda_domain: LambdaDomain,
    pub surrogate_mode: SurrogateMode,
    pub w_iterations: usize,
    pub lambda_passes: usize,
    pub chi_step: ChiStep,
    pub cutoff: CutoffRule,
    pub divergence_factor: f64,
    pub solver: SolverSettings,
}

impl Default for InversionSection {
    fn default() -> Self {
        let d = InversionConfig::default();
        Self {
            beta: d.beta,
            termination_tol: d.termination_tol,
            max_iters: d.max_outer_iters,
            calibration_mode: d.calibration_mode,
            lambda_domain: d.lambda_domain,
            surrogate_mode: d.surrogate_mode,
            w_iterations: d.w_iterations,
            lambda_passes: d.lambda_passes,
            chi_step: d.chi_step,
            cutoff: CutoffRule::default(),
            divergence_factor: d.divergence_factor,
            solver: d.solver,
        }
    }
}

impl InversionSection {
    pub fn to_config(&self) -> InversionConfig {
        InversionConfig {
            beta: self.beta,
            termination_tol: self.termination_tol,
            max_outer_iters: self.max_iters,
            w_iterations: self.w_iterations,
            chi_step: self.chi_step,
            lambda_passes: self.lambda_passes,
            calibration_mode: self.calibration_mode,
            lambda_domain: self.lambda_domain,
            surrogate_mode: self.surrogate_mode,
            divergence_factor: self.divergence_factor,
            solver: self.solver,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateSection {
    pub layers: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Training samples drawn per template.
    pub n_per_config: usize,
    pub templates: Vec<SceneSection>,
}

impl Default for SurrogateSection {
    fn default() -> Self {
        let d = TrainingConfig::default();
        Self {
            layers: d.layers,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            epochs: d.epochs,
            patience: d.patience,
            validation_fraction: d.validation_fraction,
            n_per_config: 100,
            templates: vec![
                SceneSection::preset("foam_diel_ext"),
                SceneSection::preset("foam_diel_int"),
            ],
        }
    }
}

impl SurrogateSection {
    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            layers: self.layers.clone(),
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn template_scenes(&self) -> Result<Vec<SceneSpec>> {
        self.templates.iter().map(SceneSection::resolve).collect()
    }
}

/// A named preset scene or an explicit primitive list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub preset: Option<String>,
    pub primitives: Option<Vec<Primitive>>,
}

impl SceneSection {
    pub fn preset(name: &str) -> Self {
        Self {
            preset: Some(name.into()),
            primitives: None,
        }
    }

    pub fn resolve(&self) -> Result<SceneSpec> {
        match (&self.preset, &self.primitives) {
            (Some(_), Some(_)) => Err(Error::Config(
                "a scene takes either `preset` or `primitives`, not both".into(),
            )),
            (Some(name), None) => match name.as_str() {
                "foam_diel_ext" => Ok(SceneSpec::foam_diel_ext()),
                "foam_diel_int" => Ok(SceneSpec::foam_diel_int()),
                "empty" => Ok(SceneSpec::default()),
                other => Err(Error::Config(format!(
                    "unknown scene preset `{other}` (expected foam_diel_ext, foam_diel_int or empty)"
                ))),
            },
            (None, Some(p)) => Ok(SceneSpec { primitives: p.clone() }),
            (None, None) => Err(Error::Config("scene needs `preset` or `primitives`".into())),
        }
    }
}

/// Settings for synthetic data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSection {
    /// `[re, im]` calibration factor applied to every transmitter.
    pub lambda: [f64; 2],
    /// Optional per-transmitter factors, overriding `lambda`.
    pub per_tx: Option<Vec<[f64; 2]>>,
    /// Complex white noise at this SNR (dB, per `(k, p)` vector); none if absent.
    pub snr_db: Option<f64>,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            lambda: [1.0, 0.0],
            per_tx: None,
            snr_db: None,
        }
    }
}

impl SyntheticSection {
    pub fn lambdas(&self, n_tx: usize) -> Result<Vec<Complex64>> {
        match &self.per_tx {
            Some(v) if v.len() != n_tx => Err(Error::Config(format!(
                "synthetic.per_tx has {} entries for {n_tx} transmitters",
                v.len()
            ))),
            Some(v) => Ok(v.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()),
            None => Ok(vec![Complex64::new(self.lambda[0], self.lambda[1]); n_tx]),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported schema `{}` (expected `{CONFIG_SCHEMA}`)",
                self.schema
            )));
        }
        self.inversion.to_config().validate()?;
        self.surrogate.training_config().validate()?;
        if self.surrogate.n_per_config == 0 {
            return Err(Error::Config("surrogate.n_per_config must be positive".into()));
        }
        if self.sensors.layout == SensorLayout::Fresnel
            && (self.sensors.n_tx != 8
                || self.sensors.n_rx != 241
                || (self.sensors.radius - FRESNEL_RADIUS).abs() > 1e-12)
        {
            return Err(Error::Config(format!(
                "the fresnel layout is fixed at P = 8, Q = 241, radius = {FRESNEL_RADIUS}"
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<ImagingGrid> {
        let g = &self.grid;
        let extent_y = g.extent * g.ny as f64 / g.nx.max(1) as f64;
        ImagingGrid::with_center(g.nx, g.ny, g.extent, extent_y, Point2::new(g.center[0], g.center[1]))
    }

    pub fn sensors(&self) -> Result<SensorArray> {
        match self.sensors.layout {
            SensorLayout::Fresnel => Ok(fresnel_geometry()),
            SensorLayout::Ring => {
                SensorArray::ring(self.sensors.radius, self.sensors.n_tx, self.sensors.n_rx)
            }
        }
    }

    pub fn frequencies(&self) -> Result<FrequencySet> {
        FrequencySet::new(self.freqs.clone())
    }
}
