//! Closed forms, training and sweeps for one experiment.

use std::path::PathBuf;

use gaussvae::info::{gaussian_ib_curve, ib_frontier, scalar_ib_joint, scalar_rd_grid, BaConfig};
use gaussvae::trainer::scoring_model;
use gaussvae::{
    achieved_distortion, achieved_rate, analytic_gradient, ba_rate_distortion, breakdown_with_data, generate_dataset,
    objective, rd_curve, solve_beta_ves, solve_vaei, solve_vaes, solve_vei, solve_ves, train, vaei_residuals,
    vaes_residuals, ves_residuals, DecoderParams64, EncoderParams64, Error, FixedPointReport, GaussianDist64,
    LinearGaussianModel64, LossBreakdown64, Mat64, Problem64, SampleSet64, TrainTrace64,
};
use rayon::prelude::*;

use crate::config::{Experiment, Kind, SweepSettings};
use crate::{output, CliError};

/// Stationary point of the configured problem.
#[derive(Debug, Clone)]
pub struct ClosedForm {
    pub enc: EncoderParams64,
    pub dec: Option<DecoderParams64>,
    /// Max-abs residual of each stationarity equation; the gradient norm for inference.
    pub residuals: Vec<f64>,
    pub gradient_max_abs: f64,
    pub objective: f64,
    pub report: Option<FixedPointReport>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdRow {
    pub beta: f64,
    pub rate: f64,
    pub distortion: f64,
    pub achieved_rate: f64,
    pub achieved_distortion: f64,
    pub ba_rate: f64,
    pub ba_distortion: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IbRow {
    pub beta: f64,
    pub i_yz: f64,
    pub i_xz: f64,
    pub gaussian_i_xz: f64,
}

/// Everything `run` writes and `verify` inspects.
#[derive(Debug)]
pub struct Artifacts {
    pub closed: Result<ClosedForm, Error>,
    pub trace: Option<Result<TrainTrace64, Error>>,
    pub rd: Option<Vec<RdRow>>,
    pub ib: Option<Vec<IbRow>>,
    pub warnings: Vec<String>,
}

impl Artifacts {
    /// First solver failure, in the order closed form, training.
    pub fn failure(&self) -> Option<&Error> {
        self.closed
            .as_ref()
            .err()
            .or_else(|| self.trace.as_ref().and_then(|t| t.as_ref().err()))
    }
}

pub fn closed_form(exp: &Experiment) -> Result<ClosedForm, Error> {
    let data = &exp.data;
    let (enc, dec, residuals, report) = match (&exp.problem, exp.kind) {
        (Problem64::Vei(model), _) => {
            let enc = solve_vei(model)?;
            let g = analytic_gradient(&exp.problem, data, &enc, None)?.max_abs();
            (enc, None, vec![g], None)
        }
        (Problem64::Ves { a, s }, _) => {
            let enc = solve_ves(data, a, s)?;
            let r = ves_residuals(data, a, s, 1.0, &enc)?;
            (enc, None, r.to_vec(), None)
        }
        (Problem64::BetaVes { a, s, beta }, _) => {
            let enc = solve_beta_ves(data, a, s, *beta)?;
            let r = ves_residuals(data, a, s, *beta, &enc)?;
            (enc, None, r.to_vec(), None)
        }
        (Problem64::Vaei { prior }, _) => {
            let init_dec = exp.init.dec.as_ref().expect("autoencoder init has a decoder");
            let (enc, dec, report) = solve_vaei(data, prior, &exp.init.enc, init_dec, &exp.fixed_point)?;
            let r = vaei_residuals(data, prior, &enc, &dec)?;
            (enc, Some(dec), r.to_vec(), Some(report))
        }
        (Problem64::Vaes, Kind::Vaes) => {
            let init_dec = exp.init.dec.as_ref().expect("autoencoder init has a decoder");
            let (enc, dec, report) = solve_vaes(data, exp.m, &exp.init.enc, init_dec, &exp.fixed_point)?;
            let r = vaes_residuals(data, &enc, &dec)?;
            (enc, Some(dec), r.to_vec(), Some(report))
        }
        (Problem64::Vaes, _) => unreachable!("problem built from kind"),
    };
    // Search optima may have singular Q, where the gradient is unbounded.
    let gradient_max_abs = analytic_gradient(&exp.problem, data, &enc, dec.as_ref())
        .map(|g| g.max_abs())
        .unwrap_or(f64::NAN);
    let objective = objective(&exp.problem, data, &enc, dec.as_ref())?;
    Ok(ClosedForm {
        enc,
        dec,
        residuals,
        gradient_max_abs,
        objective,
        report,
    })
}

/// `Q` with no spread along some latent direction; the budget terms and the gradient need `Q ≻ 0`.
pub fn singular_q(enc: &EncoderParams64) -> bool {
    let ev = gaussvae::linalg::eigenvalues(&enc.q);
    ev.min() <= 1e-10 * ev.max().max(f64::MIN_POSITIVE)
}

/// Budget terms of `(enc, dec)` on the experiment's data.
pub fn budget(exp: &Experiment, enc: &EncoderParams64, dec: Option<&DecoderParams64>) -> Result<LossBreakdown64, Error> {
    let model = scoring_model(&exp.problem, &exp.data, enc, dec)?;
    breakdown_with_data(&exp.data, &model, enc)
}

/// Training samples: the configured dataset, or draws from the model or the data Gaussian.
pub fn training_set(exp: &Experiment, samples: usize) -> Result<SampleSet64, Error> {
    if let Some(d) = &exp.dataset {
        return Ok(d.clone());
    }
    match &exp.model {
        Some(model) => generate_dataset(model, samples, exp.seed),
        None => {
            let n = exp.data.dim();
            let copy = LinearGaussianModel64::new(Mat64::identity(n, n), Mat64::zeros(n, n), exp.data.clone())?;
            generate_dataset(&copy, samples, exp.seed)
        }
    }
}

pub fn train_experiment(exp: &Experiment) -> Option<Result<TrainTrace64, Error>> {
    let settings = exp.trainer.as_ref()?;
    Some(training_set(exp, settings.samples).and_then(|set| {
        train(&exp.problem, &set, exp.model.as_ref(), &settings.config, &exp.init)
    }))
}

fn scalar_variance(g: &GaussianDist64) -> f64 {
    g.cov()[(0, 0)]
}

/// Smallest feasible β of a scalar search problem.
fn critical_beta(model: &LinearGaussianModel64) -> f64 {
    model.s()[(0, 0)] / scalar_variance(&model.data_marginal())
}

/// BA runs only on scalar observations and well inside the feasible range.
pub fn ba_applicable(model: &LinearGaussianModel64, beta: f64) -> bool {
    model.n() == 1 && beta >= 1.5 * critical_beta(model)
}

pub fn ba_point(model: &LinearGaussianModel64, beta: f64, sweep: &SweepSettings) -> Result<(f64, f64), Error> {
    let grid = scalar_rd_grid(
        scalar_variance(&model.data_marginal()),
        model.s()[(0, 0)],
        sweep.grid_points,
        sweep.width_sd,
    )?;
    let sol = ba_rate_distortion(&grid.source, &grid.distortion, beta, &BaConfig::default())?;
    Ok((sol.rate, sol.distortion))
}

pub fn rd_rows(model: &LinearGaussianModel64, sweep: &SweepSettings, warnings: &mut Vec<String>) -> Result<Vec<RdRow>, Error> {
    let info = model.information()?;
    let h_cond = model.conditional_entropy()?;
    let data = model.data_marginal();
    let curve = rd_curve(info, h_cond, model.n(), &sweep.betas);
    let rows: Vec<(RdRow, Option<String>)> = curve
        .par_iter()
        .map(|pt| {
            let mut note = None;
            let (achieved_rate, achieved_distortion) = match solve_beta_ves(&data, model.a(), model.s(), pt.beta) {
                Ok(enc) => (
                    achieved_rate(&data, &enc).unwrap_or(f64::NAN),
                    achieved_distortion(&data, model.a(), model.s(), &enc).unwrap_or(f64::NAN),
                ),
                Err(e) => {
                    note = Some(format!("beta {}: closed form skipped: {e}", pt.beta));
                    (f64::NAN, f64::NAN)
                }
            };
            let (ba_rate, ba_distortion) = if sweep.ba && ba_applicable(model, pt.beta) {
                match ba_point(model, pt.beta, sweep) {
                    Ok(p) => p,
                    Err(e) => {
                        note = Some(format!("beta {}: Blahut-Arimoto skipped: {e}", pt.beta));
                        (f64::NAN, f64::NAN)
                    }
                }
            } else {
                (f64::NAN, f64::NAN)
            };
            let row = RdRow {
                beta: pt.beta,
                rate: pt.rate,
                distortion: pt.distortion,
                achieved_rate,
                achieved_distortion,
                ba_rate,
                ba_distortion,
            };
            (row, note)
        })
        .collect();
    warnings.extend(rows.iter().filter_map(|(_, n)| n.clone()));
    Ok(rows.into_iter().map(|(r, _)| r).collect())
}

pub fn ib_rows(model: &LinearGaussianModel64, sweep: &SweepSettings) -> Result<Vec<IbRow>, Error> {
    let var_y = scalar_variance(&model.data_marginal());
    let noise = model.s()[(0, 0)];
    let joint = scalar_ib_joint(var_y - noise, noise, sweep.grid_points, sweep.width_sd)?;
    let cfg = BaConfig {
        objective_tol: 1e-10,
        ..Default::default()
    };
    let lambda = noise / var_y;
    Ok(ib_frontier(&joint, &sweep.ib_betas, &cfg)?
        .into_iter()
        .map(|p| IbRow {
            beta: p.beta,
            i_yz: p.i_yz,
            i_xz: p.i_xz,
            gaussian_i_xz: gaussian_ib_curve(lambda, p.i_yz),
        })
        .collect())
}

pub fn compute(exp: &Experiment) -> Result<Artifacts, CliError> {
    let mut warnings = Vec::new();
    let closed = closed_form(exp);
    let trace = train_experiment(exp);
    let (mut rd, mut ib) = (None, None);
    if let (Some(sweep), Some(model)) = (&exp.sweep, &exp.model) {
        if !sweep.betas.is_empty() {
            rd = Some(rd_rows(model, sweep, &mut warnings)?);
        }
        if !sweep.ib_betas.is_empty() {
            if model.n() == 1 {
                ib = Some(ib_rows(model, sweep)?);
            } else {
                warnings.push("sweep.ib_betas: the bottleneck frontier needs a scalar observation".into());
            }
        }
    }
    Ok(Artifacts {
        closed,
        trace,
        rd,
        ib,
        warnings,
    })
}

/// Computes and writes all outputs; a solver failure is reported after the files exist.
pub fn run(exp: &Experiment, quiet: bool) -> Result<Vec<PathBuf>, CliError> {
    let art = compute(exp)?;
    let files = output::write_all(exp, &art)?;
    if !quiet {
        for w in &art.warnings {
            eprintln!("warning: {w}");
        }
        for f in &files {
            println!("wrote {}", f.display());
        }
        if let Ok(c) = &art.closed {
            println!("closed-form objective {:.10}", c.objective);
        }
        if let Some(Ok(t)) = &art.trace {
            let last = t.last();
            println!(
                "final epoch {}: l_rec {:.6} l_reg {:.6}",
                last.epoch, last.exact.l_rec, last.exact.l_reg
            );
        }
    }
    match art.failure() {
        Some(e) => Err(CliError::Solver(e.clone())),
        None => Ok(files),
    }
}
