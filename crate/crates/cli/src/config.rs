//! TOML experiment configuration and its validation.

use std::path::{Path, PathBuf};

use gaussvae::linalg::check_psd;
use gaussvae::trainer::TrainInit;
use gaussvae::{
    DecoderParams64, EncoderParams64, GaussianDist64, LinearGaussianModel64, Mat64, Optimizer, Problem64,
    SampleSet64, TrainerConfig, Vector64,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub problem: String,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub beta: Option<f64>,
    pub latent_dim: Option<usize>,
    pub model: Option<RawModel>,
    pub data: Option<RawData>,
    pub trainer: Option<RawTrainer>,
    pub sweep: Option<RawSweep>,
    pub fixed_point: Option<RawFixedPoint>,
    pub init: Option<RawInit>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModel {
    pub a: Vec<Vec<f64>>,
    pub s: Vec<Vec<f64>>,
    pub prior_mean: Option<Vec<f64>>,
    pub prior_cov: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawData {
    pub mean: Option<Vec<f64>>,
    pub cov: Option<Vec<Vec<f64>>>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTrainer {
    pub samples: Option<usize>,
    pub lr: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub optimizer: Option<String>,
    pub adam_betas: Option<[f64; 2]>,
    pub adam_eps: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub ib_betas: Vec<f64>,
    pub grid_points: Option<usize>,
    pub width_sd: Option<f64>,
    pub ba: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFixedPoint {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub relaxation: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInit {
    pub r: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<f64>>,
    pub q: Option<Vec<Vec<f64>>>,
    pub a_dec: Option<Vec<Vec<f64>>>,
    pub s_dec: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Vei,
    Ves,
    BetaVes,
    Vaei,
    Vaes,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Vei => "vei",
            Kind::Ves => "ves",
            Kind::BetaVes => "beta_ves",
            Kind::Vaei => "vaei",
            Kind::Vaes => "vaes",
        }
    }

    pub fn has_decoder(self) -> bool {
        matches!(self, Kind::Vaei | Kind::Vaes)
    }
}

#[derive(Debug, Clone)]
pub struct TrainerSettings {
    pub samples: usize,
    pub config: TrainerConfig,
}

#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub betas: Vec<f64>,
    pub ib_betas: Vec<f64>,
    pub grid_points: usize,
    pub width_sd: f64,
    pub ba: bool,
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub kind: Kind,
    pub seed: u64,
    pub output: PathBuf,
    pub problem: Problem64,
    /// Generating model, when the config has one.
    pub model: Option<LinearGaussianModel64>,
    /// Data distribution the exact losses and closed forms use.
    pub data: GaussianDist64,
    /// Dataset read from `data.path`.
    pub dataset: Option<SampleSet64>,
    pub m: usize,
    pub trainer: Option<TrainerSettings>,
    pub sweep: Option<SweepSettings>,
    pub fixed_point: gaussvae::FixedPointConfig,
    pub init: TrainInit<f64>,
    /// `true` when `[init]` set any encoder field.
    pub init_override: bool,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn matrix(rows: &[Vec<f64>], field: &str) -> Result<Mat64, CliError> {
    let r = rows.len();
    if r == 0 {
        return Err(invalid(format!("{field}: matrix has no rows")));
    }
    let c = rows[0].len();
    if c == 0 {
        return Err(invalid(format!("{field}: matrix has no columns")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, row)| row.len() != c) {
        return Err(invalid(format!(
            "{field}: row {i} has {} entries, expected {c} (matrices must be rectangular)",
            row.len()
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{field}: entries must be finite")));
    }
    Ok(Mat64::from_fn(r, c, |i, j| rows[i][j]))
}

fn shaped(rows: &[Vec<f64>], field: &str, r: usize, c: usize) -> Result<Mat64, CliError> {
    let m = matrix(rows, field)?;
    if m.shape() != (r, c) {
        return Err(invalid(format!(
            "{field}: expected a {r}x{c} matrix, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(m)
}

fn covariance(rows: &[Vec<f64>], field: &str, d: usize) -> Result<Mat64, CliError> {
    let m = shaped(rows, field, d, d)?;
    if (&m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return Err(invalid(format!("{field}: matrix must be symmetric")));
    }
    check_psd(&m, field).map_err(|e| invalid(format!("{field}: {e}")))?;
    Ok(m)
}

fn vector(xs: &[f64], field: &str, d: usize) -> Result<Vector64, CliError> {
    if xs.len() != d {
        return Err(invalid(format!("{field}: expected {d} entries, found {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid(format!("{field}: entries must be finite")));
    }
    Ok(Vector64::from_column_slice(xs))
}

fn model_from(raw: &RawModel) -> Result<LinearGaussianModel64, CliError> {
    let a = matrix(&raw.a, "model.a")?;
    let (n, m) = a.shape();
    let s = covariance(&raw.s, "model.s", n)?;
    let mean = match &raw.prior_mean {
        Some(v) => vector(v, "model.prior_mean", m)?,
        None => Vector64::zeros(m),
    };
    let cov = match &raw.prior_cov {
        Some(c) => covariance(c, "model.prior_cov", m)?,
        None => Mat64::identity(m, m),
    };
    let prior = GaussianDist64::new(mean, cov).map_err(|e| invalid(format!("model.prior_cov: {e}")))?;
    LinearGaussianModel64::new(a, s, prior).map_err(|e| invalid(format!("model: {e}")))
}

fn read_dataset(path: &Path, seed: u64) -> Result<SampleSet64, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| invalid(format!("data.path: cannot read {}: {e}", path.display())))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| invalid(format!("data.path: row {i}: {e}")))?;
        let row: Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| invalid(format!("data.path: row {i}: {e}")))?);
    }
    let y = matrix(&rows, "data.path")?;
    SampleSet64::new(y, None, seed).map_err(|e| invalid(format!("data.path: {e}")))
}

fn trainer_from(raw: &RawTrainer, seed: u64) -> Result<TrainerSettings, CliError> {
    let defaults = TrainerConfig::default();
    let optimizer = match raw.optimizer.as_deref().unwrap_or("adam") {
        "adam" => Optimizer::Adam,
        "sgd" => Optimizer::Sgd,
        other => return Err(invalid(format!("trainer.optimizer: expected \"adam\" or \"sgd\", found \"{other}\""))),
    };
    let config = TrainerConfig {
        learning_rate: raw.lr.unwrap_or(defaults.learning_rate),
        batch_size: raw.batch_size.unwrap_or(defaults.batch_size),
        epochs: raw.epochs.unwrap_or(defaults.epochs),
        optimizer,
        adam_betas: raw.adam_betas.map(|b| (b[0], b[1])).unwrap_or(defaults.adam_betas),
        adam_eps: raw.adam_eps.unwrap_or(defaults.adam_eps),
        seed,
    };
    let samples = raw.samples.unwrap_or(1024);
    if samples == 0 {
        return Err(invalid("trainer.samples: must be positive"));
    }
    Ok(TrainerSettings { samples, config })
}

fn sweep_from(raw: &RawSweep) -> Result<SweepSettings, CliError> {
    for (field, list) in [("sweep.betas", &raw.betas), ("sweep.ib_betas", &raw.ib_betas)] {
        if list.iter().any(|b| !(*b > 0.0) || !b.is_finite()) {
            return Err(invalid(format!("{field}: every beta must be positive and finite")));
        }
    }
    let grid_points = raw.grid_points.unwrap_or(201);
    if grid_points < 3 {
        return Err(invalid("sweep.grid_points: need at least 3 points"));
    }
    let width_sd = raw.width_sd.unwrap_or(6.0);
    if !(width_sd > 0.0) {
        return Err(invalid("sweep.width_sd: must be positive"));
    }
    Ok(SweepSettings {
        betas: raw.betas.clone(),
        ib_betas: raw.ib_betas.clone(),
        grid_points,
        width_sd,
        ba: raw.ba.unwrap_or(true),
    })
}

fn fixed_point_from(raw: Option<&RawFixedPoint>) -> Result<gaussvae::FixedPointConfig, CliError> {
    let d = gaussvae::FixedPointConfig::default();
    let Some(raw) = raw else { return Ok(d) };
    let cfg = gaussvae::FixedPointConfig {
        tol: raw.tol.unwrap_or(d.tol),
        max_iter: raw.max_iter.unwrap_or(d.max_iter),
        relaxation: raw.relaxation.unwrap_or(d.relaxation),
    };
    if !(cfg.tol > 0.0) {
        return Err(invalid("fixed_point.tol: must be positive"));
    }
    if !(cfg.relaxation > 0.0 && cfg.relaxation <= 1.0) {
        return Err(invalid("fixed_point.relaxation: must lie in (0, 1]"));
    }
    Ok(cfg)
}

fn init_from(raw: Option<&RawInit>, kind: Kind, n: usize, m: usize) -> Result<(TrainInit<f64>, bool), CliError> {
    let mut init = TrainInit::standard(n, m, kind.has_decoder());
    if let Some(d) = init.dec.as_mut() {
        // A zero decoder is a stationary point of the autoencoder problems.
        d.a = Mat64::from_element(n, m, 0.5);
    }
    let Some(raw) = raw else { return Ok((init, false)) };
    let r = match &raw.r {
        Some(x) => shaped(x, "init.r", m, n)?,
        None => init.enc.r.clone(),
    };
    let b = match &raw.b {
        Some(x) => vector(x, "init.b", m)?,
        None => init.enc.b.clone(),
    };
    let q = match &raw.q {
        Some(x) => covariance(x, "init.q", m)?,
        None => init.enc.q.clone(),
    };
    let touched = raw.r.is_some() || raw.b.is_some() || raw.q.is_some();
    init.enc = EncoderParams64::from_cov(r, b, q).map_err(|e| invalid(format!("init.q: {e}")))?;
    if raw.a_dec.is_some() || raw.s_dec.is_some() {
        let Some(dec) = init.dec.as_mut() else {
            return Err(invalid(format!("init.a_dec: {} has no decoder", kind.name())));
        };
        let a = match &raw.a_dec {
            Some(x) => shaped(x, "init.a_dec", n, m)?,
            None => dec.a.clone(),
        };
        let s = match &raw.s_dec {
            Some(x) => covariance(x, "init.s_dec", n)?,
            None => dec.s.clone(),
        };
        *dec = DecoderParams64::new(a, s).map_err(|e| invalid(format!("init.s_dec: {e}")))?;
    }
    Ok((init, touched))
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks every field and resolves relative paths against `base`.
    pub fn validate(&self, base: &Path) -> Result<Experiment, CliError> {
        let kind = match self.problem.as_str() {
            "vei" => Kind::Vei,
            "ves" => Kind::Ves,
            "beta_ves" => Kind::BetaVes,
            "vaei" => Kind::Vaei,
            "vaes" => Kind::Vaes,
            other => {
                return Err(invalid(format!(
                    "problem: expected one of vei, ves, beta_ves, vaei, vaes, found \"{other}\""
                )))
            }
        };
        if self.model.is_some() && self.data.is_some() {
            return Err(invalid("model, data: give exactly one of the two blocks"));
        }
        let needs_model = kind != Kind::Vaes;
        if needs_model && self.model.is_none() {
            return Err(invalid(format!("model: {} needs a [model] block", kind.name())));
        }
        if self.model.is_none() && self.data.is_none() {
            return Err(invalid("model, data: one of the two blocks is required"));
        }
        if kind == Kind::BetaVes {
            match self.beta {
                Some(b) if b > 0.0 && b.is_finite() => {}
                Some(_) => return Err(invalid("beta: must be positive and finite")),
                None => return Err(invalid("beta: beta_ves needs a beta value")),
            }
        } else if self.beta.is_some() {
            return Err(invalid(format!("beta: only used by beta_ves, not {}", kind.name())));
        }

        let model = self.model.as_ref().map(model_from).transpose()?;
        let (data, dataset) = match (&model, &self.data) {
            (Some(m), _) => (m.data_marginal(), None),
            (None, Some(raw)) => match (&raw.path, &raw.mean, &raw.cov) {
                (Some(p), None, None) => {
                    let set = read_dataset(&base.join(p), self.seed)?;
                    (set.empirical(), Some(set))
                }
                (None, Some(mean), Some(cov)) => {
                    let mean = Vector64::from_column_slice(mean);
                    let cov = covariance(cov, "data.cov", mean.len())?;
                    let g = GaussianDist64::new(mean, cov).map_err(|e| invalid(format!("data.cov: {e}")))?;
                    (g, None)
                }
                (Some(_), _, _) => return Err(invalid("data.path: give either path or mean and cov, not both")),
                _ => return Err(invalid("data: needs both mean and cov, or a path")),
            },
            (None, None) => unreachable!("checked above"),
        };
        let n = data.dim();
        let m = match (&model, self.latent_dim) {
            (Some(md), None) => md.m(),
            (Some(md), Some(l)) if l == md.m() => l,
            (Some(md), Some(l)) => {
                return Err(invalid(format!("latent_dim: {l} disagrees with model.a ({} columns)", md.m())))
            }
            (None, Some(l)) if l > 0 => l,
            (None, _) => return Err(invalid("latent_dim: a positive latent dimension is needed without a model")),
        };

        let problem = match (kind, &model) {
            (Kind::Vei, Some(md)) => Problem64::Vei(md.clone()),
            (Kind::Ves, Some(md)) => Problem64::Ves { a: md.a().clone(), s: md.s().clone() },
            (Kind::BetaVes, Some(md)) => Problem64::BetaVes {
                a: md.a().clone(),
                s: md.s().clone(),
                beta: self.beta.expect("checked above"),
            },
            (Kind::Vaei, Some(md)) => Problem64::Vaei { prior: md.prior().clone() },
            (Kind::Vaes, _) => Problem64::Vaes,
            _ => unreachable!("model presence checked above"),
        };

        let trainer = self.trainer.as_ref().map(|t| trainer_from(t, self.seed)).transpose()?;
        if let Some(t) = &trainer {
            let samples = dataset.as_ref().map_or(t.samples, |d| d.len());
            t.config.validate(samples).map_err(|e| invalid(e.to_string()))?;
        }
        let sweep = self.sweep.as_ref().map(sweep_from).transpose()?;
        if sweep.is_some() && model.is_none() {
            return Err(invalid("sweep: rate-distortion sweeps need a [model] block"));
        }
        let fixed_point = fixed_point_from(self.fixed_point.as_ref())?;
        let (init, init_override) = init_from(self.init.as_ref(), kind, n, m)?;
        let output = match &self.output {
            Some(p) => base.join(p),
            None => base.join("out"),
        };
        Ok(Experiment {
            kind,
            seed: self.seed,
            output,
            problem,
            model,
            data,
            dataset,
            m,
            trainer,
            sweep,
            fixed_point,
            init,
            init_override,
        })
    }
}
