//! The four commands. Every output embeds the config hash and is a pure
//! function of the config, the input files and the seed.

use std::path::{Path, PathBuf};

use eit_oed::bayes::{self, GaussianDensity, NoiseModel};
use eit_oed::contact::ElectrodeLayout;
use eit_oed::forward::{self, CurrentBasis};
use eit_oed::jacobian::jacobian_sigma;
use eit_oed::linalg::restrict_csr;
use eit_oed::mesh::{mass_matrix_on, Region, Vec3};
use eit_oed::model::HeadModel;
use eit_oed::oed::{self, Design, DesignTrace, OedProblem};
use eit_oed::presets::mean_angular_distance;
use eit_oed::tv::{self, TvOperator, TvProblem};
use eit_oed::Error;
use log::info;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::CliError;

pub const MEASUREMENTS: &str = "measurements.csv";
pub const RECONSTRUCTION: &str = "reconstruction.csv";
pub const COVARIANCE: &str = "covariance.bin";
pub const TRACE: &str = "trace.csv";
pub const DESIGN_TRACE: &str = "design_trace.csv";
pub const LAYOUT: &str = "layout.json";
pub const STATE: &str = "state.json";

pub struct RunOptions {
    pub out: PathBuf,
    pub preflight: bool,
}

/// Frozen noise level, written once per output directory.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NoiseState {
    pub config: String,
    pub omega: f64,
    pub eta: f64,
}

/// Final design of one optimization run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayoutFile {
    pub config: String,
    pub round: usize,
    pub feeder: usize,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi_initial: f64,
    pub psi_final: f64,
    pub relative_reduction: f64,
    /// Mean angle between electrode centres and the ROI centroid, before and
    /// after.
    pub roi_angular_distance: [f64; 2],
    /// Mean distance from electrode centres to the inclusion centre, before
    /// and after.
    pub inclusion_distance: Option<[f64; 2]>,
}

/// Summary of a reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionSummary {
    pub peak_node: usize,
    pub peak_value: f64,
    pub peak_position: Vec3,
}

pub struct Context {
    cfg: ExperimentConfig,
    hash: String,
    model: HeadModel,
    background: Vec<f64>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, data).map_err(io(path))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn mismatch(path: &Path, found: &str, expected: &str) -> CliError {
    CliError::Run(Error::Validation {
        invariant: "config-hash",
        detail: format!("{} was written under config {found}, expected {expected}", path.display()),
    })
}

fn round_dir(out: &Path, round: usize) -> PathBuf {
    out.join(format!("round_{round}"))
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        cfg.validate()?;
        let hash = cfg.hash();
        let model = cfg.model()?;
        let background = model.layered_conductivity(&cfg.layers())?;
        info!("config {hash}: {} nodes", model.node_count());
        Ok(Context {
            cfg,
            hash,
            model,
            background,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn model(&self) -> &HeadModel {
        &self.model
    }

    pub fn initial_layout(&self) -> Result<ElectrodeLayout, CliError> {
        Ok(self.cfg.layout()?)
    }

    fn basis(&self, m: usize) -> Result<CurrentBasis, CliError> {
        Ok(CurrentBasis::with_feeder(m, self.cfg.feeder - 1)?)
    }

    fn comments(&self, round: usize) -> Vec<String> {
        vec![
            format!("config {}", self.hash),
            format!("seed {}", self.cfg.noise.seed),
            format!("round {round}"),
        ]
    }

    fn check_comments(&self, path: &Path, comments: &[String]) -> Result<(), CliError> {
        let found = comments
            .iter()
            .find_map(|c| c.strip_prefix("config "))
            .unwrap_or("<none>");
        if found != self.hash {
            return Err(mismatch(path, found, &self.hash));
        }
        Ok(())
    }

    /// Layered background plus the inclusion on brain nodes off the skull.
    pub fn phantom(&self) -> Vec<f64> {
        let Some(inc) = &self.cfg.inclusion else {
            return self.background.clone();
        };
        let c = Vec3::from(inc.center);
        let brain = self.model.mesh().region_nodes(Region::Brain);
        let skull = self.model.mesh().region_nodes(Region::Skull);
        self.background
            .iter()
            .zip(self.model.mesh().nodes())
            .enumerate()
            .map(|(i, (s, p))| {
                if brain[i] && !skull[i] && (p - c).norm() <= inc.radius {
                    s + inc.amplitude
                } else {
                    *s
                }
            })
            .collect()
    }

    /// `η` from the symmetric preset background, read from or written to
    /// the state file in `root`.
    pub fn frozen_noise(&self, root: &Path) -> Result<f64, CliError> {
        let path = root.join(STATE);
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(io(&path))?;
            let state: NoiseState = serde_json::from_str(&text).map_err(|e| {
                CliError::Run(Error::Parse {
                    line: e.line(),
                    message: e.to_string(),
                })
            })?;
            if state.config != self.hash {
                return Err(mismatch(&path, &state.config, &self.hash));
            }
            return Ok(state.eta);
        }
        let eta = if self.cfg.noise.omega == 0.0 {
            0.0
        } else {
            let layout = self.cfg.reference_layout()?;
            let basis = self.basis(layout.count())?;
            let u = forward::measurement_map(&self.model, &self.background, &layout, &basis)?;
            bayes::noise_std(&u, self.cfg.noise.omega)?.std()
        };
        let state = NoiseState {
            config: self.hash.clone(),
            omega: self.cfg.noise.omega,
            eta,
        };
        write(&path, serde_json::to_string_pretty(&state).expect("state serializes") + "\n")?;
        Ok(eta)
    }

    fn noise_model(&self, root: &Path) -> Result<NoiseModel, CliError> {
        let eta = self.frozen_noise(root)?;
        if eta == 0.0 {
            return Err(CliError::Config("noise.omega: must be positive for inversion and design".into()));
        }
        Ok(NoiseModel::new(eta)?)
    }

    /// Noisy phantom data at `layout`, written to `dir/measurements.csv`.
    pub fn simulate(&self, layout: &ElectrodeLayout, dir: &Path, round: usize) -> Result<DVector<f64>, CliError> {
        self.simulate_in(layout, dir, dir, round)
    }

    fn simulate_in(&self, layout: &ElectrodeLayout, root: &Path, dir: &Path, round: usize) -> Result<DVector<f64>, CliError> {
        let eta = self.frozen_noise(root)?;
        let m = layout.count();
        let mut data = forward::measurement_map(&self.model, &self.phantom(), layout, &self.basis(m)?)?;
        if eta > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.noise.seed);
            rng.set_stream(round as u64);
            for v in data.iter_mut() {
                *v += eta * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let mut comments = self.comments(round);
        comments.push(format!("noise_std {eta:?}"));
        write(&dir.join(MEASUREMENTS), forward::write_measurements_csv(&data, m, &comments))?;
        Ok(data)
    }

    /// Reconstructs from `dir/measurements.csv` at `layout`.
    pub fn reconstruct(&self, layout: &ElectrodeLayout, dir: &Path) -> Result<ReconstructionSummary, CliError> {
        self.reconstruct_in(layout, dir, dir, 0)
    }

    fn reconstruct_in(
        &self,
        layout: &ElectrodeLayout,
        root: &Path,
        dir: &Path,
        round: usize,
    ) -> Result<ReconstructionSummary, CliError> {
        let m = layout.count();
        let path = dir.join(MEASUREMENTS);
        let (comments, data) = forward::load_measurements(&path, m)?;
        self.check_comments(&path, &comments)?;
        let noise = self.noise_model(root)?;
        let basis = self.basis(m)?;
        let out_comments = self.comments(round);
        let (nodal, posterior) = match self.cfg.mode {
            Mode::GaussianRoi => {
                let fwd = forward::ForwardModel::new(&self.model, &self.background, layout, &basis)?;
                let y = &data - fwd.measurements();
                let dofs: Vec<usize> = (0..self.model.node_count()).collect();
                let prior =
                    bayes::squared_exp_prior(self.model.mesh().nodes(), &dofs, self.cfg.prior.length, self.cfg.prior.std)?;
                let post = bayes::posterior(&jacobian_sigma(&fwd), &prior, &noise, &y)?;
                (post.mean.as_slice().to_vec(), post)
            }
            Mode::TvAdaptive => {
                let params = self.cfg.tv_params();
                let op = TvOperator::new(&self.model, &params)?;
                let problem = TvProblem {
                    operator: &op,
                    layout,
                    basis: &basis,
                    background: &self.background,
                    noise,
                    params,
                    known_contacts: self.cfg.tv.known_contacts,
                };
                let rec = tv::sequential_reconstruct(&problem, &data)?;
                write(&dir.join(TRACE), rec.trace_csv(&out_comments))?;
                (op.extend(&rec.kappa), rec.posterior)
            }
        };
        write(&dir.join(RECONSTRUCTION), tv::reconstruction_csv(&self.model, &nodal, &out_comments))?;
        let cov = dir.join(COVARIANCE);
        posterior.save(&cov, &self.hash)?;
        info!("wrote {}", cov.display());
        let (peak_node, peak_value) = nodal
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best });
        let peak_position = self.model.mesh().nodes()[peak_node];
        info!("reconstruction peak {peak_value:.3e} at {peak_position:?}");
        Ok(ReconstructionSummary {
            peak_node,
            peak_value,
            peak_position,
        })
    }

    /// Prior and weight: the squared-exponential prior in Gaussian mode,
    /// the reconstruction covariance in `dir` otherwise.
    fn design_prior(&self, dir: &Path) -> Result<(GaussianDensity, nalgebra_sparse::CsrMatrix<f64>), CliError> {
        let mask = self.cfg.roi().mask(self.model.mesh());
        let mass = mass_matrix_on(self.model.mesh(), &mask)?;
        match self.cfg.mode {
            Mode::GaussianRoi => {
                let dofs: Vec<usize> = (0..self.model.node_count()).collect();
                let prior =
                    bayes::squared_exp_prior(self.model.mesh().nodes(), &dofs, self.cfg.prior.length, self.cfg.prior.std)?;
                Ok((prior, mass))
            }
            Mode::TvAdaptive => {
                let prior = GaussianDensity::load(dir.join(COVARIANCE), Some(&self.hash))?;
                let weight = restrict_csr(&mass, &prior.dofs);
                Ok((prior, weight))
            }
        }
    }

    /// Optimizes from `layout`, writing the trace and final layout to `dir`.
    pub fn optimize(
        &self,
        layout: &ElectrodeLayout,
        dir: &Path,
        round: usize,
        opts: &RunOptions,
    ) -> Result<LayoutFile, CliError> {
        self.optimize_in(layout, &opts.out, dir, round, opts.preflight)
    }

    fn optimize_in(
        &self,
        layout: &ElectrodeLayout,
        root: &Path,
        dir: &Path,
        round: usize,
        preflight: bool,
    ) -> Result<LayoutFile, CliError> {
        let noise = self.noise_model(root)?;
        let (prior, weight) = self.design_prior(dir)?;
        let problem = OedProblem {
            model: &self.model,
            background: &self.background,
            template: layout,
            prior: &prior,
            noise,
            weight: &weight,
        };
        let initial = Design::from_layout(layout, self.cfg.feeder - 1);
        if preflight {
            oed::gradient_preflight(&problem, &initial)?;
        }
        let trace = oed::optimize_design(&problem, &initial, &self.cfg.optimizer_options())?;
        let mut comments = self.comments(round);
        comments.push(format!("prior_trace {:?}", problem.prior_trace()));
        write(&dir.join(DESIGN_TRACE), trace.to_csv(&comments))?;
        let summary = self.summarize(&problem, &trace, round)?;
        write(
            &dir.join(LAYOUT),
            serde_json::to_string_pretty(&summary).expect("layout serializes") + "\n",
        )?;
        info!(
            "round {round}: Ψ_A {:.6e} -> {:.6e} ({:.2}% reduction)",
            summary.psi_initial,
            summary.psi_final,
            100.0 * summary.relative_reduction
        );
        Ok(summary)
    }

    fn summarize(&self, problem: &OedProblem, trace: &DesignTrace, round: usize) -> Result<LayoutFile, CliError> {
        let surface = self.model.surface();
        let first = problem.layout(&trace.first().design)?.centers(surface);
        let last_design = &trace.last().design;
        let last = problem.layout(last_design)?.centers(surface);
        let centroid = self.cfg.roi().centroid(self.model.mesh())?;
        let inclusion_distance = self.cfg.inclusion.map(|inc| {
            let c = Vec3::from(inc.center);
            let mean = |pts: &[Vec3]| pts.iter().map(|p| (p - c).norm()).sum::<f64>() / pts.len() as f64;
            [mean(&first), mean(&last)]
        });
        Ok(LayoutFile {
            config: self.hash.clone(),
            round,
            feeder: last_design.feeder + 1,
            theta: last_design.theta.clone(),
            phi: last_design.phi.clone(),
            psi_initial: trace.first().psi,
            psi_final: trace.last().psi,
            relative_reduction: trace.relative_reduction(),
            roi_angular_distance: [
                mean_angular_distance(&first, &centroid),
                mean_angular_distance(&last, &centroid),
            ],
            inclusion_distance,
        })
    }

    /// `rounds` repetitions of simulate, reconstruct and optimize, each in
    /// `out/round_k` and starting from the previous round's layout.
    pub fn pipeline(&self, rounds: usize, opts: &RunOptions) -> Result<Vec<LayoutFile>, CliError> {
        let root = &opts.out;
        let mut layout = self.initial_layout()?;
        let mut out = Vec::with_capacity(rounds);
        for round in 1..=rounds {
            let dir = round_dir(root, round);
            std::fs::create_dir_all(&dir).map_err(io(&dir))?;
            self.simulate_in(&layout, root, &dir, round)?;
            self.reconstruct_in(&layout, root, &dir, round)?;
            let summary = self.optimize_in(&layout, root, &dir, round, opts.preflight)?;
            layout = layout.with_angles(&summary.theta, &summary.phi)?;
            out.push(summary);
        }
        Ok(out)
    }
}

/// Reads a layout file written by an optimization run.
pub fn read_layout(path: &Path) -> Result<LayoutFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Run(Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    })
}
