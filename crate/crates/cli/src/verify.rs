//! Invariant checks for one configured experiment.

use gaussvae::closed_form::rate_of_distortion;
use gaussvae::{analytic_gradient, objective, DecoderParams64, EncoderParams64, GaussianDist64, Mat64, Problem64, Vector64};

use crate::config::Experiment;
use crate::run::{ba_applicable, ba_point, budget, compute, singular_q, Artifacts, ClosedForm};
use crate::CliError;

const BUDGET_TOL: f64 = 1e-9;
const PARAM_TOL: f64 = 1e-6;
const TRAINED_GAP: f64 = 0.05;
const BA_TOL: f64 = 0.02;
const DPI_TOL: f64 = 1e-9;
const RD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Pass,
    Fail,
    Skip(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub limit: f64,
    pub status: Status,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, limit: f64) -> Self {
        let status = if measured <= limit { Status::Pass } else { Status::Fail };
        Check { name, measured, limit, status }
    }

    fn skip(name: &'static str, why: impl Into<String>) -> Self {
        Check {
            name,
            measured: f64::NAN,
            limit: f64::NAN,
            status: Status::Skip(why.into()),
        }
    }

    fn fail(name: &'static str, why: impl std::fmt::Display) -> Self {
        eprintln!("{name}: {why}");
        Check {
            name,
            measured: f64::NAN,
            limit: f64::NAN,
            status: Status::Fail,
        }
    }

    pub fn line(&self) -> String {
        match &self.status {
            Status::Pass => format!("PASS  {:<28} {:.3e} (limit {:.1e})", self.name, self.measured, self.limit),
            Status::Fail => format!("FAIL  {:<28} {:.3e} (limit {:.1e})", self.name, self.measured, self.limit),
            Status::Skip(why) => format!("SKIP  {:<28} {why}", self.name),
        }
    }
}

#[derive(Debug)]
pub struct Report {
    pub checks: Vec<Check>,
    pub failure: Option<gaussvae::Error>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Richardson-extrapolated central difference, error `O(h⁴)`.
fn central(f: &dyn Fn(f64) -> f64, h: f64) -> f64 {
    let d = |h: f64| (f(h) - f(-h)) / (2.0 * h);
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn fd_mat(x: &Mat64, symmetric: bool, h: f64, f: &dyn Fn(&Mat64) -> f64) -> Mat64 {
    let mut g = Mat64::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if symmetric && j < i {
                continue;
            }
            let bumped = |t: f64| {
                let mut y = x.clone();
                y[(i, j)] += t;
                if symmetric && i != j {
                    y[(j, i)] += t;
                }
                f(&y)
            };
            let d = central(&bumped, h);
            if symmetric && i != j {
                g[(i, j)] = d / 2.0;
                g[(j, i)] = d / 2.0;
            } else {
                g[(i, j)] = d;
            }
        }
    }
    g
}

fn fd_vec(x: &Vector64, h: f64, f: &dyn Fn(&Vector64) -> f64) -> Vector64 {
    Vector64::from_fn(x.len(), |i, _| {
        central(
            &|t| {
                let mut y = x.clone();
                y[i] += t;
                f(&y)
            },
            h,
        )
    })
}

fn excess<'a>(an: impl Iterator<Item = &'a f64>, fd: impl Iterator<Item = &'a f64>) -> f64 {
    an.zip(fd)
        .map(|(a, f)| (a - f).abs() - 1e-5 * a.abs())
        .fold(0.0, f64::max)
}

/// Largest `|analytic − FD| − 1e-5·|analytic|` over every gradient entry.
pub fn gradient_error(
    problem: &Problem64,
    data: &GaussianDist64,
    enc: &EncoderParams64,
    dec: Option<&DecoderParams64>,
) -> Result<f64, gaussvae::Error> {
    let h = 1e-5;
    let g = analytic_gradient(problem, data, enc, dec)?;
    let obj = |e: Result<EncoderParams64, gaussvae::Error>, d: Option<&DecoderParams64>| {
        e.and_then(|e| objective(problem, data, &e, d)).unwrap_or(f64::NAN)
    };
    let fr = fd_mat(&enc.r, false, h, &|r| {
        obj(EncoderParams64::from_cov(r.clone(), enc.b.clone(), enc.q.clone()), dec)
    });
    let fb = fd_vec(&enc.b, h, &|b| {
        obj(EncoderParams64::from_cov(enc.r.clone(), b.clone(), enc.q.clone()), dec)
    });
    let fq = fd_mat(&enc.q, true, h, &|q| {
        obj(EncoderParams64::from_cov(enc.r.clone(), enc.b.clone(), q.clone()), dec)
    });
    let mut worst = excess(g.dr.iter(), fr.iter())
        .max(excess(g.db.iter(), fb.iter()))
        .max(excess(g.dq.iter(), fq.iter()));
    if let (Some(d), Some(ga), Some(gs)) = (dec, &g.da_dec, &g.ds_dec) {
        let with = |a: &Mat64, s: &Mat64| match DecoderParams64::new(a.clone(), s.clone()) {
            Ok(nd) => objective(problem, data, enc, Some(&nd)).unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        };
        let fa = fd_mat(&d.a, false, h, &|a| with(a, &d.s));
        let fs = fd_mat(&d.s, true, h, &|s| with(&d.a, s));
        worst = worst.max(excess(ga.iter(), fa.iter())).max(excess(gs.iter(), fs.iter()));
    }
    Ok(if worst.is_nan() { f64::INFINITY } else { worst })
}

fn param_distance(a: &EncoderParams64, b: &EncoderParams64) -> f64 {
    (&a.r - &b.r)
        .abs()
        .max()
        .max((&a.b - &b.b).abs().max())
        .max((&a.q - &b.q).abs().max())
}

fn candidate(exp: &Experiment, closed: Option<&ClosedForm>) -> Option<(EncoderParams64, Option<DecoderParams64>)> {
    if exp.init_override {
        Some((exp.init.enc.clone(), exp.init.dec.clone()))
    } else {
        closed.map(|c| (c.enc.clone(), c.dec.clone()))
    }
}

fn problem_beta(problem: &Problem64) -> Option<f64> {
    match problem {
        Problem64::Vei(_) | Problem64::Ves { .. } => Some(1.0),
        Problem64::BetaVes { beta, .. } => Some(*beta),
        _ => None,
    }
}

pub fn checks(exp: &Experiment, art: &Artifacts) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    let closed = art.closed.as_ref().ok();
    let cand = candidate(exp, closed);

    let name = "budget identity";
    match &cand {
        Some((enc, _)) if singular_q(enc) => out.push(Check::skip(name, "candidate Q is singular")),
        Some((enc, dec)) => match budget(exp, enc, dec.as_ref()) {
            Ok(b) => {
                let scale = b.h_y.abs().max(1.0);
                out.push(Check::at_most(name, b.budget_residual().abs() / scale, BUDGET_TOL));
            }
            Err(e) => out.push(Check::fail(name, e)),
        },
        None => out.push(Check::skip(name, "no candidate parameters")),
    }

    let name = "gradient vs finite difference";
    match &cand {
        Some((enc, _)) if singular_q(enc) => out.push(Check::skip(name, "candidate Q is singular")),
        Some((enc, dec)) => match gradient_error(&exp.problem, &exp.data, enc, dec.as_ref()) {
            Ok(v) => out.push(Check::at_most(name, v, 1e-8)),
            Err(e) => out.push(Check::fail(name, e)),
        },
        None => out.push(Check::skip(name, "no candidate parameters")),
    }

    let name = "closed-form stationarity";
    match &art.closed {
        Ok(c) => {
            let (measured, limit) = match &c.report {
                Some(r) => (r.residual, exp.fixed_point.tol),
                None => (c.residuals.iter().copied().fold(0.0, f64::max), 1e-9),
            };
            out.push(Check::at_most(name, measured, limit));
        }
        Err(e) => out.push(Check::fail(name, e)),
    }

    let name = "candidate vs closed form";
    match (closed, &cand) {
        (Some(c), Some((enc, dec))) if exp.kind.has_decoder() => {
            // Autoencoder optima are only unique up to latent reparameterizations.
            match objective(&exp.problem, &exp.data, enc, dec.as_ref()) {
                Ok(v) => out.push(Check::at_most(name, (v - c.objective).abs(), PARAM_TOL)),
                Err(e) => out.push(Check::fail(name, e)),
            }
        }
        (Some(c), Some((enc, _))) => out.push(Check::at_most(name, param_distance(enc, &c.enc), PARAM_TOL)),
        _ => out.push(Check::skip(name, "closed form unavailable")),
    }

    let name = "trained vs closed form";
    match (&art.trace, closed) {
        (None, _) => out.push(Check::skip(name, "no [trainer] block")),
        (Some(Err(e)), _) => out.push(Check::fail(name, e)),
        (Some(Ok(_)), _) if exp.kind.has_decoder() => {
            out.push(Check::skip(name, "autoencoder training may reach another stationary point"))
        }
        (Some(Ok(_)), None) => out.push(Check::skip(name, "closed form unavailable")),
        (Some(Ok(t)), Some(c)) => {
            let last = t.last();
            match objective(&exp.problem, &exp.data, &last.enc, last.dec.as_ref()) {
                Ok(v) => out.push(Check::at_most(name, v - c.objective, TRAINED_GAP)),
                Err(e) => out.push(Check::fail(name, e)),
            }
        }
    }

    let name = "Blahut-Arimoto vs closed form";
    match (&exp.model, problem_beta(&exp.problem), exp.sweep.as_ref()) {
        (Some(model), Some(beta), sweep) if ba_applicable(model, beta) => {
            let defaults = crate::config::SweepSettings {
                betas: Vec::new(),
                ib_betas: Vec::new(),
                grid_points: 201,
                width_sd: 6.0,
                ba: true,
            };
            let settings = sweep.unwrap_or(&defaults);
            let analytic = gaussvae::rd_curve(model.information()?, model.conditional_entropy()?, 1, &[beta])[0];
            match ba_point(model, beta, settings) {
                Ok((r, d)) => {
                    let gap = (r - analytic.rate).abs().max((d - analytic.distortion).abs());
                    out.push(Check::at_most(name, gap, BA_TOL));
                }
                Err(e) => out.push(Check::fail(name, e)),
            }
        }
        (Some(model), Some(_), _) if model.n() != 1 => out.push(Check::skip(name, "grid solver needs n = 1")),
        (Some(_), Some(beta), _) => out.push(Check::skip(name, format!("beta {beta} too close to the critical value"))),
        _ => out.push(Check::skip(name, "autoencoder problem")),
    }

    let name = "data processing along trace";
    match &art.trace {
        Some(Ok(t)) if t.records.iter().any(|r| r.info.is_some()) => {
            let worst = t
                .records
                .iter()
                .filter_map(|r| r.info.map(|p| p.dpi_violation()))
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(Check::at_most(name, worst, DPI_TOL));
        }
        Some(Ok(_)) => out.push(Check::skip(name, "no reference model for information coordinates")),
        _ => out.push(Check::skip(name, "no trajectory")),
    }

    let name = "rate-distortion formula";
    match (&art.rd, &exp.model) {
        (Some(rows), Some(model)) => {
            let (i, h) = (model.information()?, model.conditional_entropy()?);
            let worst = rows
                .iter()
                .map(|r| {
                    let formula = (rate_of_distortion(i, h, model.n(), r.distortion) - r.rate).abs();
                    let achieved = if r.achieved_rate.is_nan() {
                        0.0
                    } else {
                        (r.achieved_rate - r.rate).abs().max((r.achieved_distortion - r.distortion).abs())
                    };
                    formula.max(achieved)
                })
                .fold(0.0, f64::max);
            out.push(Check::at_most(name, worst, RD_TOL));
        }
        _ => out.push(Check::skip(name, "no sweep.betas")),
    }

    let name = "sweep Blahut-Arimoto";
    match &art.rd {
        Some(rows) if rows.iter().any(|r| !r.ba_rate.is_nan()) => {
            let worst = rows
                .iter()
                .filter(|r| !r.ba_rate.is_nan())
                .map(|r| (r.ba_rate - r.rate).abs().max((r.ba_distortion - r.distortion).abs()))
                .fold(0.0, f64::max);
            out.push(Check::at_most(name, worst, BA_TOL));
        }
        _ => out.push(Check::skip(name, "no grid points in the sweep")),
    }

    Ok(out)
}

pub fn verify(exp: &Experiment) -> Result<Report, CliError> {
    let art = compute(exp)?;
    let checks = checks(exp, &art)?;
    let failure = art.failure().cloned();
    Ok(Report { checks, failure })
}
