//! Experiment configuration (TOML) and the builders that turn it into
//! models, forcings and noise intensities.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::decay_scale::{DecayScale, ScaleMode, DEFAULT_QUAD_TOL, DEFAULT_X_MIN};
use crate::diagnostics::Tolerances;
use crate::error::{Error, Result};
use crate::nonlinearity::{Family, NonlinearityModel, DEFAULT_LOG_CROSSOVER};
use crate::ode::StepPolicy;
use crate::perturbations::{
    GammaSpec, NoiseIntensity, NoiseKind, Oscillator, Perturbation, PerturbationKind,
    SpikedFunction,
};
use crate::sde::SdeParams;
use crate::table::SampledTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Ode,
    OdeInternal,
    Sde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleChoice {
    #[default]
    Auto,
    ClosedForm,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    PurePower,
    PowerLogLoglog,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: FamilyName,
    #[serde(default = "one")]
    pub a: f64,
    pub beta: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default)]
    pub beta2: f64,
    pub crossover: Option<f64>,
    #[serde(default)]
    pub scale: ScaleChoice,
}

fn one() -> f64 {
    1.0
}

/// `Γ` by name (`linear`, `one_plus_t`, `square`, `exp`) or `table:PATH`.
#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct GrowthName(pub String);

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ForcingConfig {
    Zero,
    PowerDecay {
        c: f64,
        p: f64,
    },
    ScaledDerivativeRate {
        c: f64,
    },
    /// `xi` defaults to the first initial condition
    ZeroLimitSynthetic {
        xi: Option<f64>,
    },
    Oscillating {
        growth: GrowthName,
        /// defaults to the smallest admissible power for the model's β
        n: Option<u32>,
    },
    Spiked {
        c: f64,
        p: f64,
        growth: GrowthName,
    },
    Sampled {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    Zero,
    PowerDecay { c: f64, gamma: f64 },
    SpikedSquare { c: f64, p: f64, growth: GrowthName },
    Sampled { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub paths: u64,
    /// number of leading paths whose series are written out
    pub keep: usize,
    pub lil_window: [f64; 2],
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            paths: 100,
            keep: 3,
            lil_window: [0.1, 0.5],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CriteriaConfig {
    /// horizon for the deterministic ratio series; defaults to `t_end`
    pub t_end: Option<f64>,
    pub eps: Vec<f64>,
    pub h: Vec<f64>,
}

impl Default for CriteriaConfig {
    fn default() -> Self {
        Self {
            t_end: None,
            eps: vec![0.1, 1.0, 10.0],
            h: vec![0.1, 1.0, 10.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// noise amplitude
    pub c: f64,
    /// grid points this close to a threshold are reported but flagged
    pub band: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            betas: vec![1.5, 2.0, 3.0, 5.0],
            gammas: (0..13).map(|k| (6.0 + 2.0 * k as f64) / 10.0).collect(),
            c: 1.0,
            band: 0.05,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstructConfig {
    pub t_end: f64,
    pub samples_per_unit: usize,
}

impl Default for ConstructConfig {
    fn default() -> Self {
        Self {
            t_end: 100.0,
            samples_per_unit: 20,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub t_end: f64,
    pub seed: Option<u64>,
    pub model: ModelConfig,
    pub forcing: Option<ForcingConfig>,
    pub noise: Option<NoiseConfig>,
    #[serde(default = "default_xi")]
    pub xi: Vec<f64>,
    #[serde(default)]
    pub step: StepPolicy,
    #[serde(default)]
    pub sde: SdeParams,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub criteria: CriteriaConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub construct: ConstructConfig,
    pub out: Option<PathBuf>,
    /// directory that relative table paths are resolved against
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_xi() -> Vec<f64> {
    vec![1.0]
}

fn config_err(field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

fn wrap(field: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => config_err(field, other.to_string()),
    })
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| config_err("<toml>", e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>)> {
        let bytes = std::fs::read(path).map_err(|e| config_err("<file>", format!("{}: {e}", path.display())))?;
        let text = String::from_utf8(bytes.clone()).map_err(|_| config_err("<file>", "config is not UTF-8"))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok((Self::parse(&text, &base)?, bytes))
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(config_err("t_end", format!("must be positive and finite, got {}", self.t_end)));
        }
        if self.xi.is_empty() || self.xi.iter().any(|x| !x.is_finite()) {
            return Err(config_err("xi", "needs at least one finite initial condition"));
        }
        let model = self.build_model()?;
        self.build_scale()?;
        wrap("step", self.step.validate())?;
        wrap("sde", self.sde.validate())?;
        if self.forcing.is_some() {
            self.build_forcing(&model)?;
        }
        if self.noise.is_some() {
            self.build_noise()?;
        }
        match self.kind {
            Kind::Sde => {
                if self.seed.is_none() {
                    return Err(config_err("seed", "required when kind = \"sde\""));
                }
                if self.noise.is_none() {
                    return Err(config_err("noise", "required when kind = \"sde\""));
                }
                if self.ensemble.paths == 0 {
                    return Err(config_err("ensemble.paths", "must be positive"));
                }
                for &h in &self.sde.increments {
                    wrap("sde.increments", self.sde.steps_for(h).map(|_| ()))?;
                }
            }
            Kind::Ode | Kind::OdeInternal => {}
        }
        let [a, b] = self.ensemble.lil_window;
        if !(0.0 < a && a < b && b <= 1.0) {
            return Err(config_err("ensemble.lil_window", "needs 0 < a < b <= 1"));
        }
        if self.criteria.eps.iter().chain(&self.criteria.h).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(config_err("criteria", "eps and h must be positive"));
        }
        if let Some(t) = self.criteria.t_end {
            if !(t > 1.0 && t.is_finite()) {
                return Err(config_err("criteria.t_end", "must exceed 1"));
            }
        }
        if self.sweep.betas.iter().any(|b| !(*b > 1.0)) || self.sweep.gammas.iter().any(|g| !g.is_finite()) {
            return Err(config_err("sweep", "betas must exceed 1 and gammas be finite"));
        }
        if !(self.construct.t_end > 0.0) || self.construct.samples_per_unit == 0 {
            return Err(config_err("construct", "needs positive t_end and samples_per_unit"));
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<NonlinearityModel> {
        model_from(&self.model).map_err(|e| config_err("model", e.to_string()))
    }

    pub fn build_scale(&self) -> Result<DecayScale> {
        let model = self.build_model()?;
        let mode = match self.model.scale {
            ScaleChoice::Auto => return DecayScale::new(model).map_err(|e| config_err("model.scale", e.to_string())),
            ScaleChoice::ClosedForm => ScaleMode::ClosedForm,
            ScaleChoice::Numeric => ScaleMode::Numeric,
        };
        DecayScale::with_options(model, mode, DEFAULT_X_MIN, DEFAULT_QUAD_TOL)
            .map_err(|e| config_err("model.scale", e.to_string()))
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn growth(&self, field: &str, g: &GrowthName) -> Result<GammaSpec> {
        Ok(match g.0.as_str() {
            "linear" => GammaSpec::Linear,
            "one_plus_t" => GammaSpec::OnePlusT,
            "square" => GammaSpec::Square,
            "exp" => GammaSpec::Exp,
            other => match other.strip_prefix("table:") {
                Some(p) => {
                    let tab = SampledTable::from_csv(&self.resolve(Path::new(p)))
                        .map_err(|e| config_err(field, e.to_string()))?;
                    GammaSpec::table(tab).map_err(|e| config_err(field, e.to_string()))?
                }
                None => {
                    return Err(config_err(
                        field,
                        format!("unknown growth `{other}`; use linear, one_plus_t, square, exp or table:PATH"),
                    ))
                }
            },
        })
    }

    pub fn build_forcing(&self, model: &NonlinearityModel) -> Result<Perturbation> {
        let Some(fc) = &self.forcing else {
            return Ok(Perturbation::zero(f64::INFINITY));
        };
        let field = "forcing";
        let err = |e: Error| config_err(field, e.to_string());
        let kind = match fc {
            ForcingConfig::Zero => PerturbationKind::Zero,
            ForcingConfig::PowerDecay { c, p } => PerturbationKind::PowerDecay { c: *c, p: *p },
            ForcingConfig::ScaledDerivativeRate { c } => PerturbationKind::ScaledDerivativeRate {
                c: *c,
                scale: Arc::new(self.build_scale()?),
            },
            ForcingConfig::ZeroLimitSynthetic { xi } => PerturbationKind::ZeroLimitSynthetic {
                xi: xi.unwrap_or(self.xi[0]),
                model: model.clone(),
            },
            ForcingConfig::Oscillating { growth, n } => {
                let n = n.unwrap_or_else(|| Oscillator::default_power(model.beta()));
                PerturbationKind::Oscillating(
                    Oscillator::new(self.growth("forcing.growth", growth)?, n).map_err(err)?,
                )
            }
            ForcingConfig::Spiked { c, p, growth } => PerturbationKind::Spiked(
                SpikedFunction::new(*c, *p, self.growth("forcing.growth", growth)?).map_err(err)?,
            ),
            ForcingConfig::Sampled { path } => PerturbationKind::Sampled(
                SampledTable::from_csv(&self.resolve(path)).map_err(|e| config_err("forcing.path", e.to_string()))?,
            ),
        };
        // a table only defines the forcing up to its last sample
        let horizon = match kind {
            PerturbationKind::Sampled(_) => self.t_end,
            _ => f64::INFINITY,
        };
        Perturbation::new(kind, horizon).map_err(err)
    }

    pub fn build_noise(&self) -> Result<NoiseIntensity> {
        let Some(nc) = &self.noise else {
            return Ok(NoiseIntensity::zero());
        };
        let err = |e: Error| config_err("noise", e.to_string());
        let kind = match nc {
            NoiseConfig::Zero => NoiseKind::Zero,
            NoiseConfig::PowerDecay { c, gamma } => NoiseKind::PowerDecay { c: *c, gamma: *gamma },
            NoiseConfig::SpikedSquare { c, p, growth } => NoiseKind::SpikedSquare(
                SpikedFunction::new(*c, *p, self.growth("noise.growth", growth)?).map_err(err)?,
            ),
            NoiseConfig::Sampled { path } => NoiseKind::Sampled(
                SampledTable::from_csv(&self.resolve(path)).map_err(|e| config_err("noise.path", e.to_string()))?,
            ),
        };
        NoiseIntensity::new(kind).map_err(err)
    }
}

pub fn model_from(m: &ModelConfig) -> Result<NonlinearityModel> {
    let (family, default_cross) = match m.family {
        FamilyName::PurePower => (Family::PurePower, f64::INFINITY),
        FamilyName::PowerLogLoglog => (Family::PowerLogLoglog, DEFAULT_LOG_CROSSOVER),
    };
    NonlinearityModel::new(
        family,
        m.a,
        m.beta,
        m.beta1,
        m.beta2,
        m.crossover.unwrap_or(default_cross),
    )
}
