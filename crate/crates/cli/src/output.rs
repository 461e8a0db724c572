//! Result files: solution.json, budget.json, trace.csv, rd_curve.csv, ib_frontier.csv.
//!
//! CSV floats use `{:.16e}` (17 significant digits), `NaN` marks a missing value.
//! Budget terms of an encoder with singular `Q` are flagged `q_singular`; their log-det parts are regularized.

use std::fs;
use std::path::{Path, PathBuf};

use gaussvae::{DecoderParams64, EncoderParams64, LossBreakdown64, Mat64, TrainTrace64, Vector64};
use serde_json::{json, Value};

use crate::config::Experiment;
use crate::run::{budget, singular_q, Artifacts, IbRow, RdRow};
use crate::CliError;

pub const TRACE_COLUMNS: [&str; 10] = [
    "epoch",
    "l_rec_sampled",
    "l_reg_sampled",
    "l_rec_exact",
    "l_reg_exact",
    "i_phi",
    "t_phi",
    "d_phi",
    "i_yz",
    "i_tz",
];
pub const AUTOENCODER_COLUMNS: [&str; 3] = ["i_yy_tilde", "i_ty_tilde", "i_zy_tilde"];
pub const RD_COLUMNS: [&str; 7] = [
    "beta",
    "rate",
    "distortion",
    "achieved_rate",
    "achieved_distortion",
    "ba_rate",
    "ba_distortion",
];
pub const IB_COLUMNS: [&str; 4] = ["beta", "i_yz", "i_xz", "gaussian_i_xz"];

fn io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn matrix_json(m: &Mat64) -> Value {
    let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
    json!(rows)
}

fn vector_json(v: &Vector64) -> Value {
    json!(v.iter().copied().collect::<Vec<f64>>())
}

fn encoder_json(e: &EncoderParams64) -> Value {
    json!({ "r": matrix_json(&e.r), "b": vector_json(&e.b), "q": matrix_json(&e.q) })
}

fn decoder_json(d: &DecoderParams64) -> Value {
    json!({ "a": matrix_json(&d.a), "s": matrix_json(&d.s) })
}

fn breakdown_json(b: &LossBreakdown64, enc: &EncoderParams64) -> Value {
    json!({
        "q_singular": singular_q(enc),
        "h_y": b.h_y,
        "l_rec": b.l_rec,
        "l_reg": b.l_reg,
        "i_phi": b.i_phi,
        "t_phi": b.t_phi,
        "d_phi": b.d_phi,
        "budget_residual": b.budget_residual(),
        "split_residual": b.split_residual(),
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| io(path, e))
}

fn write_json(path: &Path, v: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| io(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io(path, e))?;
    w.write_record(header).map_err(|e| io(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn solution_json(exp: &Experiment, art: &Artifacts) -> Value {
    let mut v = json!({ "problem": exp.kind.name(), "seed": exp.seed });
    if let gaussvae::Problem64::BetaVes { beta, .. } = &exp.problem {
        v["beta"] = json!(beta);
    }
    match &art.closed {
        Ok(c) => {
            v["converged"] = json!(true);
            v["encoder"] = encoder_json(&c.enc);
            if let Some(d) = &c.dec {
                v["decoder"] = decoder_json(d);
            }
            v["residuals"] = json!(c.residuals);
            v["gradient_max_abs"] = json!(c.gradient_max_abs);
            v["objective"] = json!(c.objective);
            if let Some(r) = &c.report {
                v["iterations"] = json!(r.iterations);
                v["fixed_point_residual"] = json!(r.residual);
            }
        }
        Err(e) => {
            v["converged"] = json!(false);
            v["error"] = json!(e.to_string());
            if let gaussvae::Error::NoConvergence { report } = e {
                v["iterations"] = json!(report.iterations);
                v["fixed_point_residual"] = json!(report.residual);
            }
        }
    }
    if let Some(model) = &exp.model {
        if let (Ok(i), Ok(h)) = (model.information(), model.conditional_entropy()) {
            v["model"] = json!({ "information": i, "conditional_entropy": h });
        }
    }
    v
}

pub fn budget_json(exp: &Experiment, art: &Artifacts) -> Result<Value, CliError> {
    let mut v = json!({ "problem": exp.kind.name() });
    if let Ok(c) = &art.closed {
        v["closed_form"] = breakdown_json(&budget(exp, &c.enc, c.dec.as_ref())?, &c.enc);
    }
    if let Some(Ok(t)) = &art.trace {
        let last = t.last();
        v["trained"] = breakdown_json(&budget(exp, &last.enc, last.dec.as_ref())?, &last.enc);
    }
    Ok(v)
}

pub fn trace_header(exp: &Experiment) -> Vec<&'static str> {
    let mut h = TRACE_COLUMNS.to_vec();
    if exp.kind.has_decoder() {
        h.extend(AUTOENCODER_COLUMNS);
    }
    h
}

pub fn trace_rows<'a>(exp: &Experiment, trace: &'a TrainTrace64) -> impl Iterator<Item = Vec<String>> + 'a {
    let with_dec = exp.kind.has_decoder();
    trace.records.iter().map(move |r| {
        let info = r.info.as_ref();
        let opt = |x: Option<f64>| float(x.unwrap_or(f64::NAN));
        let mut row = vec![
            r.epoch.to_string(),
            float(r.l_rec_sampled),
            float(r.l_reg_sampled),
            float(r.exact.l_rec),
            float(r.exact.l_reg),
            float(r.exact.i_phi),
            float(r.exact.t_phi),
            float(r.exact.d_phi),
            opt(info.map(|p| p.i_yz)),
            opt(info.map(|p| p.i_tz)),
        ];
        if with_dec {
            row.push(opt(info.and_then(|p| p.i_yy_tilde)));
            row.push(opt(info.and_then(|p| p.i_ty_tilde)));
            row.push(opt(info.and_then(|p| p.i_zy_tilde)));
        }
        row
    })
}

fn rd_row(r: &RdRow) -> Vec<String> {
    [r.beta, r.rate, r.distortion, r.achieved_rate, r.achieved_distortion, r.ba_rate, r.ba_distortion]
        .into_iter()
        .map(float)
        .collect()
}

fn ib_row(r: &IbRow) -> Vec<String> {
    [r.beta, r.i_yz, r.i_xz, r.gaussian_i_xz].into_iter().map(float).collect()
}

pub fn write_all(exp: &Experiment, art: &Artifacts) -> Result<Vec<PathBuf>, CliError> {
    let dir = &exp.output;
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut files = Vec::new();

    let path = dir.join("solution.json");
    write_json(&path, &solution_json(exp, art))?;
    files.push(path);

    let path = dir.join("budget.json");
    write_json(&path, &budget_json(exp, art)?)?;
    files.push(path);

    if let Some(Ok(trace)) = &art.trace {
        let path = dir.join("trace.csv");
        write_csv(&path, &trace_header(exp), trace_rows(exp, trace))?;
        files.push(path);
    }
    if let Some(rows) = &art.rd {
        let path = dir.join("rd_curve.csv");
        write_csv(&path, &RD_COLUMNS, rows.iter().map(rd_row))?;
        files.push(path);
    }
    if let Some(rows) = &art.ib {
        let path = dir.join("ib_frontier.csv");
        write_csv(&path, &IB_COLUMNS, rows.iter().map(ib_row))?;
        files.push(path);
    }
    Ok(files)
}
