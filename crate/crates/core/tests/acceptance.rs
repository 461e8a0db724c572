//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use gaussvae::info::{ib_frontier, not_beyond_frontier, scalar_ib_joint, scalar_rd_grid, BaConfig};
use gaussvae::linalg::mat_from;
use gaussvae::model::{THETA, Y};
use gaussvae::trainer::TrainInit;
use gaussvae::*;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!(
            "panicked: {}",
            e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default()
        ),
    });
    let took = start.elapsed();
    let in_time = took <= limit;
    let pass = out.pass && in_time;
    println!(
        "criterion {id}: {} | {title} | {} | {:.2} s (limit {} s{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        limit.as_secs(),
        if in_time { "" } else { ", exceeded" }
    );
    pass
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn c1_vei_is_bayes() -> Outcome {
    let enc = solve_vei(&reference_model()).unwrap();
    let r = mat_from(2, 1, &[5.0 / 7.0, 3.0 / 7.0]);
    let q = mat_from(2, 2, &[10.0, -15.0, -15.0, 26.0]) / 35.0;
    let reference = max_abs_diff(&enc.r, &r).max(enc.b.abs().max()).max(max_abs_diff(&enc.q, &q));

    let mut g = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (n, m) = (g.random_range(1..=5), g.random_range(1..=5));
        let model = rand_model(&mut g, n, m);
        let e = solve_vei(&model).unwrap();
        let c = model.joint().condition(THETA, Y).unwrap();
        worst = worst
            .max(max_abs_diff(&e.r, &c.gain))
            .max(max_abs_diff_vec(&e.b, &c.offset))
            .max(max_abs_diff(&e.q, &c.cov));
    }
    Outcome {
        pass: reference <= 1e-10 && worst <= 1e-9,
        detail: format!("reference max err {reference:.2e} (tol 1e-10), 100 random max err {worst:.2e} (tol 1e-9)"),
    }
}

fn c2_budget() -> Outcome {
    let mut g = rng(202);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (n, m) = (g.random_range(1..=4), g.random_range(1..=4));
        let model = rand_model(&mut g, n, m);
        let enc = rand_encoder(&mut g, n, m);
        let b = full_breakdown(&model, &enc).unwrap();
        let resid = b.h_y - (b.l_rec + b.l_reg + b.d_phi);
        worst = worst.max(resid.abs());
    }
    Outcome {
        pass: worst <= 1e-8,
        detail: format!("200 pairs, max |H(Y) - (L_rec + L_reg + D)| = {worst:.2e} (tol 1e-8)"),
    }
}

fn c3_gradients() -> Outcome {
    let mut g = rng(303);
    let mut parts = Vec::new();
    let mut pass = true;
    for kind in KINDS {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..20 {
            let (p, data, enc, dec) = random_problem(kind, &mut g);
            worst = worst.max(gradient_fd_excess(&p, &data, &enc, dec.as_ref()));
        }
        pass &= worst <= 0.0;
        parts.push(format!("{kind} {worst:+.1e}"));
    }
    Outcome {
        pass,
        detail: format!("20 points per kind, worst excess over 1e-5 rel + 1e-8 abs: {}", parts.join(", ")),
    }
}

fn c4_beta_rd() -> Outcome {
    let model = reference_model();
    let data = model.data_marginal();
    let (i, h) = (model.information().unwrap(), model.conditional_entropy().unwrap());
    let betas = [1.0 / 35.0, 0.1, 0.5, 1.0, 2.0, 10.0];
    let mut worst: f64 = 0.0;
    let mut ends = (f64::NAN, f64::NAN, f64::NAN);
    for (beta, pt) in betas.iter().zip(rd_curve(i, h, 1, &betas)) {
        let enc = solve_beta_ves(&data, model.a(), model.s(), *beta).unwrap();
        let rate = achieved_rate(&data, &enc).unwrap();
        let dist = achieved_distortion(&data, model.a(), model.s(), &enc).unwrap();
        let rate_f = i + 0.5 * beta.ln();
        let dist_f = h + 0.5 * (1.0 / beta - 1.0);
        worst = worst
            .max((rate - rate_f).abs())
            .max((dist - dist_f).abs())
            .max((pt.rate - rate_f).abs())
            .max((pt.distortion - dist_f).abs());
        if *beta == betas[0] {
            ends.0 = rate;
        }
        if *beta == 1.0 {
            ends.1 = (rate - i).abs();
            ends.2 = (dist - h).abs();
        }
    }
    Outcome {
        pass: worst <= 1e-9 && ends.0.abs() <= 1e-9 && ends.1 <= 1e-9 && ends.2 <= 1e-9,
        detail: format!(
            "max err {worst:.2e} (tol 1e-9), rate at 1/35 = {:.1e}, H(Y|Θ) = {h:.5}",
            ends.0
        ),
    }
}

fn c5_ba_rd() -> Outcome {
    let model = reference_model();
    let (i, h) = (model.information().unwrap(), model.conditional_entropy().unwrap());
    let betas = [0.05, 0.1, 0.5, 1.0, 2.0, 10.0];
    let coarse = scalar_rd_grid(1.4, 0.04, 201, 6.0).unwrap();
    let fine = scalar_rd_grid(1.4, 0.04, 401, 6.0).unwrap();
    let cfg = BaConfig::default();
    let (mut vs_analytic, mut vs_refined): (f64, f64) = (0.0, 0.0);
    for (beta, pt) in betas.iter().zip(rd_curve(i, h, 1, &betas)) {
        let a = ba_rate_distortion(&coarse.source, &coarse.distortion, *beta, &cfg).unwrap();
        let b = ba_rate_distortion(&fine.source, &fine.distortion, *beta, &cfg).unwrap();
        vs_analytic = vs_analytic.max((a.rate - pt.rate).abs()).max((a.distortion - pt.distortion).abs());
        vs_refined = vs_refined.max((a.rate - b.rate).abs()).max((a.distortion - b.distortion).abs());
    }
    Outcome {
        pass: vs_analytic <= 0.02 && vs_refined < 0.01,
        detail: format!(
            "β in {betas:?}: max |BA - analytic| = {vs_analytic:.2e} (tol 0.02), 201 vs 401 points = {vs_refined:.2e} (tol 0.01)"
        ),
    }
}

fn reference_training() -> (LinearGaussianModel64, TrainTrace64) {
    let model = reference_model();
    let data = generate_dataset(&model, 1024, 7).unwrap();
    let cfg = TrainerConfig {
        learning_rate: 1e-3,
        batch_size: 32,
        epochs: 500,
        seed: 7,
        ..Default::default()
    };
    let trace = train(&Problem::Vei(model.clone()), &data, Some(&model), &cfg, &TrainInit::standard(1, 2, false)).unwrap();
    (model, trace)
}

fn c6_sgd() -> Outcome {
    let (model, trace) = reference_training();
    let last = trace.last();
    let exact = solve_vei(&model).unwrap();
    let rel_r = frob(&(&last.enc.r - &exact.r)) / frob(&exact.r);
    let (reg_err, rec_err) = ((last.exact.l_reg - half_ln35()).abs(), (last.exact.l_rec - h_cond_reference()).abs());
    Outcome {
        pass: reg_err <= 0.05 && rec_err <= 0.05 && rel_r <= 0.05,
        detail: format!(
            "L_reg {:.5} vs {:.5} (err {reg_err:.4}), L_rec {:.5} vs {:.5} (err {rec_err:.4}), rel R err {rel_r:.4} (tols 0.05)",
            last.exact.l_reg,
            half_ln35(),
            last.exact.l_rec,
            h_cond_reference()
        ),
    }
}

fn c7_info_plane() -> Outcome {
    let (model, trace) = reference_training();
    let points: Vec<InfoPlanePoint> = trace.records.iter().map(|r| r.info.unwrap()).collect();
    let dpi = points.iter().map(|p| p.i_tz - p.i_yz).fold(f64::NEG_INFINITY, f64::max);
    let (mx, my) = mss_point(&model).unwrap();
    let mss_err = (mx - half_ln35()).abs().max((my - half_ln35()).abs());

    let joint = scalar_ib_joint(1.36, 0.04, 201, 6.0).unwrap();
    let betas = [1.05, 1.1, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0, 50.0, 100.0, 1000.0];
    let cfg = BaConfig { objective_tol: 1e-10, ..Default::default() };
    let front = ib_frontier(&joint, &betas, &cfg).unwrap();
    let dominated = points
        .iter()
        .filter(|p| !not_beyond_frontier((p.i_yz, p.i_tz), &front, 0.02))
        .count();
    Outcome {
        pass: dpi <= 1e-9 && mss_err <= 1e-9 && dominated == 0,
        detail: format!(
            "{} points, max I(Θ;Z) - I(Y;Z) = {dpi:.2e}, MSS err {mss_err:.1e}, {dominated} points beyond the {}-point BA-IB frontier by 0.02",
            points.len(),
            front.len()
        ),
    }
}

fn c8_fixed_points() -> Outcome {
    let data = GaussianDist64::scalar(0.0, 2.0).unwrap();
    let prior = GaussianDist64::standard(1);
    let enc = EncoderParams64::from_cov(mat_from(1, 1, &[0.5]), Vector64::zeros(1), mat_from(1, 1, &[0.5])).unwrap();
    let dec = DecoderParams64::new(mat_from(1, 1, &[1.0]), mat_from(1, 1, &[1.0])).unwrap();
    let oracle = vaei_residuals(&data, &prior, &enc, &dec)
        .unwrap()
        .into_iter()
        .chain(vaes_residuals(&data, &enc, &dec).unwrap())
        .fold(0.0, f64::max);

    let mut g = rng(3);
    let cfg = FixedPointConfig { tol: 1e-8, ..Default::default() };
    let (mut ok, mut honest, mut bad) = ([0usize; 2], [0usize; 2], 0usize);
    for _ in 0..20 {
        let data = GaussianDist64::scalar(g.random_range(-1.0..1.0), g.random_range(0.5..3.0)).unwrap();
        let prior = GaussianDist64::scalar(g.random_range(-1.0..1.0), g.random_range(0.5..2.0)).unwrap();
        let enc = EncoderParams64::from_cov(
            mat_from(1, 1, &[g.random_range(-1.0..1.0)]),
            Vector64::from_element(1, g.random_range(-1.0..1.0)),
            mat_from(1, 1, &[g.random_range(0.2..2.0)]),
        )
        .unwrap();
        let dec = DecoderParams64::new(
            mat_from(1, 1, &[g.random_range(0.2..2.0)]),
            mat_from(1, 1, &[g.random_range(0.2..2.0)]),
        )
        .unwrap();
        let runs = [
            solve_vaei(&data, &prior, &enc, &dec, &cfg).map(|(e, d, r)| (vaei_residuals(&data, &prior, &e, &d).unwrap(), r)),
            solve_vaes(&data, 1, &enc, &dec, &cfg).map(|(e, d, r)| (vaes_residuals(&data, &e, &d).unwrap(), r)),
        ];
        for (k, run) in runs.into_iter().enumerate() {
            match run {
                Ok((res, rep)) if rep.converged && res.iter().all(|x| *x <= cfg.tol) => ok[k] += 1,
                Err(Error::NoConvergence { report }) if !report.converged && report.residual > cfg.tol => honest[k] += 1,
                _ => bad += 1,
            }
        }
    }
    Outcome {
        pass: oracle <= 1e-9 && bad == 0,
        detail: format!(
            "oracle residual {oracle:.1e} (tol 1e-9); VAEI {} converged, {} NoConvergence; VAES {} converged, {} NoConvergence; {bad} inconsistent",
            ok[0], honest[0], ok[1], honest[1]
        ),
    }
}

fn c9_four_rows() -> Outcome {
    let model = four_row_model();
    let data = generate_dataset(&model, 1024, 9).unwrap();
    let cfg = TrainerConfig { seed: 9, ..Default::default() };
    match train(&Problem::Vei(model.clone()), &data, Some(&model), &cfg, &TrainInit::standard(4, 2, false)) {
        Ok(trace) => {
            let dpi = trace
                .records
                .iter()
                .map(|r| r.info.unwrap().dpi_violation())
                .fold(f64::NEG_INFINITY, f64::max);
            let last = trace.last();
            Outcome {
                pass: dpi <= 1e-9 && trace.records.len() == 500,
                detail: format!(
                    "{} epochs, max DPI violation {dpi:.2e}, final L_reg {:.4} (I(Θ;Y) = {:.4})",
                    trace.records.len(),
                    last.exact.l_reg,
                    model.information().unwrap()
                ),
            }
        }
        Err(e) => Outcome { pass: false, detail: format!("training failed: {e}") },
    }
}

fn main() {
    let results = [
        check(1, "VEI equals Bayes posterior", secs(1), c1_vei_is_bayes),
        check(2, "budget identity", secs(5), c2_budget),
        check(3, "gradient fidelity", secs(30), c3_gradients),
        check(4, "beta-VES analytic RD", secs(1), c4_beta_rd),
        check(5, "BA rate-distortion cross-check", secs(60), c5_ba_rd),
        check(6, "SGD reproduction", secs(60), c6_sgd),
        check(7, "information-plane properties", secs(120), c7_info_plane),
        check(8, "VAEI/VAES fixed points", secs(10), c8_fixed_points),
        check(9, "n=4 robustness", secs(120), c9_four_rows),
    ];
    let passed = results.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
