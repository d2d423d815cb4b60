//! Experiment configuration, presets and hashing.

use std::path::{Path, PathBuf};

use eit_oed::contact::ElectrodeLayout;
use eit_oed::mesh::{HeadSurface, LayeredBall, Region, Vec3};
use eit_oed::model::{HeadModel, LayerConductivity};
use eit_oed::oed::OptimizerOptions;
use eit_oed::presets::{self, HalfSpace, RegionOfInterest};
use eit_oed::tv::TvParams;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const PRESETS: [&str; 3] = ["gaussian-fullbrain", "gaussian-quadrant", "tv-adaptive"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSource {
    Generator(GeneratorConfig),
    /// Mesh file plus the radius of the spherical top it was cut from.
    File { path: PathBuf, surface_radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub outer_radius: f64,
    pub skull_shell: [f64; 2],
    pub target_edge_length: f64,
    pub flat_bottom_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayoutSource {
    Preset { preset: String },
    Angles { theta: Vec<f64>, phi: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conductivities {
    pub skin: f64,
    pub skull: f64,
    pub brain: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub omega: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GaussianRoi,
    TvAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub length: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvConfig {
    pub gamma: f64,
    pub smoothing: f64,
    pub cutoff_steepness: f64,
    pub cutoff_offset: f64,
    pub inner_steps: usize,
    pub linearizations: usize,
    pub known_contacts: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceConfig {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub region: String,
    pub halfspaces: Vec<HalfSpaceConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step: f64,
    pub armijo_trials: usize,
    pub alpha: f64,
    pub beta: f64,
    pub pole_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    pub center: [f64; 3],
    pub radius: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshSource,
    pub layout: LayoutSource,
    pub electrode_radius: f64,
    pub contact_shape: f64,
    /// One value per electrode, or a single value for all.
    pub contact_peaks: Vec<f64>,
    /// One-based feeding electrode.
    pub feeder: usize,
    pub conductivity: Conductivities,
    pub noise: NoiseConfig,
    pub mode: Mode,
    pub prior: PriorConfig,
    pub tv: TvConfig,
    pub roi: RoiConfig,
    pub optimizer: OptimizerConfig,
    pub inclusion: Option<InclusionConfig>,
    pub adaptive_rounds: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { omega: 1e-3, seed: 0 }
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig { length: 0.05, std: 0.2 }
    }
}

impl Default for TvConfig {
    fn default() -> Self {
        let p = TvParams::default();
        TvConfig {
            gamma: p.gamma,
            smoothing: p.smoothing,
            cutoff_steepness: p.cutoff_steepness,
            cutoff_offset: p.cutoff_offset,
            inner_steps: p.inner_steps,
            linearizations: p.linearizations,
            known_contacts: true,
        }
    }
}

impl Default for RoiConfig {
    fn default() -> Self {
        RoiConfig {
            region: "brain".into(),
            halfspaces: vec![HalfSpaceConfig {
                normal: [0.0, 0.0, 1.0],
                offset: -0.02,
            }],
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let o = OptimizerOptions::default();
        OptimizerConfig {
            tolerance: o.tolerance,
            max_iterations: o.max_iterations,
            step: o.step,
            armijo_trials: o.armijo_trials,
            alpha: o.alpha,
            beta: o.beta,
            pole_threshold: o.pole_threshold,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh: MeshSource::Generator(GeneratorConfig {
                outer_radius: 0.09,
                skull_shell: [0.07, 0.08],
                target_edge_length: 0.02,
                flat_bottom_height: 0.09,
            }),
            layout: LayoutSource::Preset {
                preset: "symmetric12".into(),
            },
            electrode_radius: presets::ELECTRODE_RADIUS,
            contact_shape: presets::CONTACT_SHAPE,
            contact_peaks: vec![presets::CONTACT_PEAK],
            feeder: 1,
            conductivity: Conductivities {
                skin: 0.2,
                skull: 0.06,
                brain: 0.2,
            },
            noise: NoiseConfig::default(),
            mode: Mode::GaussianRoi,
            prior: PriorConfig::default(),
            tv: TvConfig::default(),
            roi: RoiConfig::default(),
            optimizer: OptimizerConfig::default(),
            inclusion: None,
            adaptive_rounds: 1,
        }
    }
}

/// Preset as a JSON object; config files are merged on top of it.
pub fn preset(name: &str) -> Result<Value, CliError> {
    let mut cfg = ExperimentConfig::default();
    match name {
        "gaussian-fullbrain" => {}
        "gaussian-quadrant" => {
            cfg.roi.halfspaces.push(HalfSpaceConfig {
                normal: [-1.0, 0.0, 0.0],
                offset: 0.0,
            });
            cfg.roi.halfspaces.push(HalfSpaceConfig {
                normal: [0.0, -1.0, 0.0],
                offset: 0.0,
            });
        }
        "tv-adaptive" => {
            cfg.mode = Mode::TvAdaptive;
            cfg.inclusion = Some(InclusionConfig {
                center: [-0.025, -0.025, 0.02],
                radius: 0.018,
                amplitude: 0.1,
            });
            cfg.adaptive_rounds = 2;
        }
        _ => {
            return Err(CliError::Config(format!(
                "unknown preset `{name}`, expected one of {}",
                PRESETS.join(", ")
            )))
        }
    }
    Ok(serde_json::to_value(cfg).expect("config serializes"))
}

/// Recursive object merge; `top` wins.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, t) => *b = t,
    }
}

/// Parses a config file on top of an optional preset.
pub fn resolve(text: &str, preset_name: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let top: Value = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
    let mut base = match preset_name {
        Some(name) => preset(name)?,
        None => serde_json::json!({}),
    };
    merge(&mut base, top);
    serde_json::from_value(base).map_err(|e| CliError::Config(format!("config: {e}")))
}

pub fn load(path: &Path, preset_name: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| {
        CliError::Run(eit_oed::Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })?;
    resolve(&text, preset_name)
}

fn check(ok: bool, field: &str, what: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{field}: {what}")))
    }
}

fn positive(v: f64, field: &str) -> Result<(), CliError> {
    check(v > 0.0 && v.is_finite(), field, &format!("must be positive, got {v}"))
}

impl ExperimentConfig {
    /// Checks every field against its domain; errors name the field path.
    pub fn validate(&self) -> Result<(), CliError> {
        match &self.mesh {
            MeshSource::Generator(g) => {
                positive(g.outer_radius, "mesh.generator.outer_radius")?;
                positive(g.target_edge_length, "mesh.generator.target_edge_length")?;
                positive(g.flat_bottom_height, "mesh.generator.flat_bottom_height")?;
                let [a, b] = g.skull_shell;
                check(
                    0.0 < a && a < b && b < g.outer_radius,
                    "mesh.generator.skull_shell",
                    "must satisfy 0 < r_in < r_out < outer_radius",
                )?;
            }
            MeshSource::File { path, surface_radius } => {
                positive(*surface_radius, "mesh.file.surface_radius")?;
                check(path.is_file(), "mesh.file.path", &format!("{} does not exist", path.display()))?;
            }
        }
        match &self.layout {
            LayoutSource::Preset { preset } => check(
                presets::layout_by_name(preset).is_ok(),
                "layout.preset",
                &format!("unknown layout `{preset}`"),
            )?,
            LayoutSource::Angles { theta, phi } => {
                check(theta.len() == phi.len(), "layout", "theta and phi differ in length")?;
                check(theta.len() >= 2, "layout.theta", "needs at least two electrodes")?;
            }
        }
        positive(self.electrode_radius, "electrode_radius")?;
        check(
            self.contact_shape >= 0.0 && self.contact_shape.is_finite(),
            "contact_shape",
            "must be nonnegative",
        )?;
        check(!self.contact_peaks.is_empty(), "contact_peaks", "must not be empty")?;
        for (i, z) in self.contact_peaks.iter().enumerate() {
            positive(*z, &format!("contact_peaks[{i}]"))?;
        }
        let m = self.electrode_count();
        check(
            self.contact_peaks.len() == 1 || self.contact_peaks.len() == m,
            "contact_peaks",
            &format!("needs 1 or {m} values"),
        )?;
        check(
            (1..=m).contains(&self.feeder),
            "feeder",
            &format!("must lie in 1..={m}"),
        )?;
        positive(self.conductivity.skin, "conductivity.skin")?;
        positive(self.conductivity.skull, "conductivity.skull")?;
        positive(self.conductivity.brain, "conductivity.brain")?;
        check(
            self.noise.omega >= 0.0 && self.noise.omega.is_finite(),
            "noise.omega",
            "must be nonnegative",
        )?;
        positive(self.prior.length, "prior.length")?;
        positive(self.prior.std, "prior.std")?;
        self.tv_params()
            .validate()
            .map_err(|e| CliError::Config(format!("tv: {e}")))?;
        check(
            matches!(self.roi.region.as_str(), "brain" | "skull" | "skin"),
            "roi.region",
            "must be brain, skull or skin",
        )?;
        for (i, h) in self.roi.halfspaces.iter().enumerate() {
            let n = Vec3::from(h.normal);
            check(
                n.norm() > 0.0 && n.iter().all(|v| v.is_finite()) && h.offset.is_finite(),
                &format!("roi.halfspaces[{i}]"),
                "needs a finite nonzero normal",
            )?;
        }
        self.optimizer_options()
            .validate()
            .map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
        if let Some(inc) = &self.inclusion {
            positive(inc.radius, "inclusion.radius")?;
            check(
                inc.amplitude.is_finite() && inc.center.iter().all(|v| v.is_finite()),
                "inclusion",
                "must be finite",
            )?;
        }
        check(self.adaptive_rounds >= 1, "adaptive_rounds", "must be at least 1")?;
        Ok(())
    }

    pub fn electrode_count(&self) -> usize {
        match &self.layout {
            LayoutSource::Preset { preset } => presets::layout_by_name(preset).map(|l| l.count()).unwrap_or(0),
            LayoutSource::Angles { theta, .. } => theta.len(),
        }
    }

    /// Stable hash of the resolved config.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        eit_oed::bayes::config_hash(text.as_bytes())
    }

    pub fn model(&self) -> eit_oed::Result<HeadModel> {
        match &self.mesh {
            MeshSource::Generator(g) => HeadModel::layered_ball(&LayeredBall {
                outer_radius: g.outer_radius,
                skull_shell: g.skull_shell,
                target_edge_length: g.target_edge_length,
                flat_bottom_height: g.flat_bottom_height,
            }),
            MeshSource::File { path, surface_radius } => Ok(HeadModel::new(
                eit_oed::mesh::load_mesh(path)?,
                HeadSurface::sphere(*surface_radius)?,
            )),
        }
    }

    fn peaks(&self, m: usize) -> Vec<f64> {
        if self.contact_peaks.len() == 1 {
            vec![self.contact_peaks[0]; m]
        } else {
            self.contact_peaks.clone()
        }
    }

    fn layout_from(&self, theta: Vec<f64>, phi: Vec<f64>) -> eit_oed::Result<ElectrodeLayout> {
        let m = theta.len();
        ElectrodeLayout::new(theta, phi, self.electrode_radius, self.contact_shape, self.peaks(m))
    }

    pub fn layout(&self) -> eit_oed::Result<ElectrodeLayout> {
        match &self.layout {
            LayoutSource::Preset { preset } => {
                let l = presets::layout_by_name(preset)?;
                self.layout_from(l.theta().to_vec(), l.phi().to_vec())
            }
            LayoutSource::Angles { theta, phi } => self.layout_from(theta.clone(), phi.clone()),
        }
    }

    /// Symmetric preset with this config's contact parameters; fixes the
    /// noise level.
    pub fn reference_layout(&self) -> eit_oed::Result<ElectrodeLayout> {
        let (theta, phi) = presets::symmetric12();
        let m = theta.len();
        let peaks = if self.contact_peaks.len() == m {
            self.contact_peaks.clone()
        } else {
            vec![self.contact_peaks[0]; m]
        };
        ElectrodeLayout::new(theta, phi, self.electrode_radius, self.contact_shape, peaks)
    }

    pub fn layers(&self) -> LayerConductivity {
        LayerConductivity {
            skin: self.conductivity.skin,
            skull: self.conductivity.skull,
            brain: self.conductivity.brain,
        }
    }

    pub fn roi(&self) -> RegionOfInterest {
        let region = match self.roi.region.as_str() {
            "skin" => Region::Skin,
            "skull" => Region::Skull,
            _ => Region::Brain,
        };
        RegionOfInterest {
            region,
            halfspaces: self
                .roi
                .halfspaces
                .iter()
                .map(|h| HalfSpace {
                    normal: Vec3::from(h.normal),
                    offset: h.offset,
                })
                .collect(),
        }
    }

    pub fn tv_params(&self) -> TvParams {
        TvParams {
            gamma: self.tv.gamma,
            smoothing: self.tv.smoothing,
            cutoff_steepness: self.tv.cutoff_steepness,
            cutoff_offset: self.tv.cutoff_offset,
            inner_steps: self.tv.inner_steps,
            linearizations: self.tv.linearizations,
        }
    }

    pub fn optimizer_options(&self) -> OptimizerOptions {
        OptimizerOptions {
            tolerance: self.optimizer.tolerance,
            max_iterations: self.optimizer.max_iterations,
            step: self.optimizer.step,
            armijo_trials: self.optimizer.armijo_trials,
            alpha: self.optimizer.alpha,
            beta: self.optimizer.beta,
            pole_threshold: self.optimizer.pole_threshold,
        }
    }
}
