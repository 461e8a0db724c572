#![allow(dead_code)]

use gaussvae::linalg::{mat_from, vec_from};
use gaussvae::*;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat64 {
    Mat64::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn rand_vec(rng: &mut ChaCha8Rng, len: usize) -> Vector64 {
    Vector64::from_fn(len, |_, _| rng.random_range(-1.0..1.0))
}

/// `GGᵀ + floor·I`, comfortably conditioned.
pub fn rand_spd(rng: &mut ChaCha8Rng, d: usize, floor: f64) -> Mat64 {
    let g = rand_mat(rng, d, d);
    &g * g.transpose() + Mat64::identity(d, d) * floor
}

pub fn rand_gaussian(rng: &mut ChaCha8Rng, d: usize) -> GaussianDist64 {
    let mean = rand_vec(rng, d);
    let cov = rand_spd(rng, d, 0.5);
    GaussianDist64::new(mean, cov).unwrap()
}

pub fn rand_model(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearGaussianModel64 {
    let a = rand_mat(rng, n, m) * 1.5;
    let s = rand_spd(rng, n, 0.3);
    LinearGaussianModel64::new(a, s, rand_gaussian(rng, m)).unwrap()
}

pub fn rand_encoder(rng: &mut ChaCha8Rng, n: usize, m: usize) -> EncoderParams64 {
    let r = rand_mat(rng, m, n);
    let b = rand_vec(rng, m);
    let q = rand_spd(rng, m, 0.3);
    EncoderParams64::from_cov(r, b, q).unwrap()
}

pub fn rand_decoder(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DecoderParams64 {
    DecoderParams64::new(rand_mat(rng, n, m), rand_spd(rng, n, 0.5)).unwrap()
}

pub fn reference_model() -> LinearGaussianModel64 {
    LinearGaussianModel64::new(
        mat_from(1, 2, &[1.0, 0.6]),
        mat_from(1, 1, &[0.04]),
        GaussianDist64::standard(2),
    )
    .unwrap()
}

pub fn four_row_model() -> LinearGaussianModel64 {
    LinearGaussianModel64::new(
        mat_from(4, 2, &[1.0, 0.6, 3.2, -2.0, 4.0, 1.0, 3.1, -1.0]),
        Mat64::identity(4, 4) * 0.04,
        GaussianDist64::standard(2),
    )
    .unwrap()
}

pub fn half_ln35() -> f64 {
    0.5 * 35f64.ln()
}

/// `½ ln(2πe·0.04)`.
pub fn h_cond_reference() -> f64 {
    0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E * 0.04).ln()
}

/// Probabilists' Gauss-Hermite rule (weight N(0,1)) via Golub-Welsch.
pub fn gauss_hermite(points: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = Mat64::from_fn(points, points, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..points)
        .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// `E[f(y)]` for scalar `y ~ N(mean, var)` on a 64-point rule.
pub fn expect_scalar(mean: f64, var: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (x, w) = gauss_hermite(64);
    x.iter().zip(&w).map(|(x, w)| w * f(mean + var.sqrt() * x)).sum()
}

pub fn scalar_vec(y: f64) -> Vector64 {
    vec_from(&[y])
}

pub fn frob(m: &Mat64) -> f64 {
    m.norm()
}

/// Central difference of `f` in every entry of `x`, keeping symmetric matrices symmetric.
pub fn fd_matrix(x: &Mat64, symmetric: bool, h: f64, f: impl Fn(&Mat64) -> f64) -> Mat64 {
    let mut g = Mat64::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            if symmetric && j < i {
                continue;
            }
            let bump = |sign: f64| {
                let mut y = x.clone();
                y[(i, j)] += sign * h;
                if symmetric && i != j {
                    y[(j, i)] += sign * h;
                }
                f(&y)
            };
            let d = (bump(1.0) - bump(-1.0)) / (2.0 * h);
            if symmetric && i != j {
                // The bump moved two entries of a symmetric-gradient pair.
                g[(i, j)] = d / 2.0;
                g[(j, i)] = d / 2.0;
            } else {
                g[(i, j)] = d;
            }
        }
    }
    g
}

pub fn fd_vector(x: &Vector64, h: f64, f: impl Fn(&Vector64) -> f64) -> Vector64 {
    Vector64::from_fn(x.len(), |i, _| {
        let mut p = x.clone();
        let mut q = x.clone();
        p[i] += h;
        q[i] -= h;
        (f(&p) - f(&q)) / (2.0 * h)
    })
}

/// Largest entrywise excess of `|fd − an|` over `rel·|an| + floor`; ≤ 0 means pass.
pub fn gradient_excess<'a>(
    an: impl IntoIterator<Item = &'a f64>,
    fd: impl IntoIterator<Item = &'a f64>,
    rel: f64,
    floor: f64,
) -> f64 {
    an.into_iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() - (rel * a.abs() + floor))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn max_abs_diff(a: &Mat64, b: &Mat64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).abs().max()
}

pub fn max_abs_diff_vec(a: &Vector64, b: &Vector64) -> f64 {
    assert_eq!(a.len(), b.len());
    (a - b).abs().max()
}

/// Worst FD excess over all gradient blocks of `problem` at `(enc, dec)`.
///
/// Finite differences use step 1e-5; the tolerance is `1e-5·|analytic| + 1e-8` per entry.
pub fn gradient_fd_excess(
    problem: &Problem64,
    data: &GaussianDist64,
    enc: &EncoderParams64,
    dec: Option<&DecoderParams64>,
) -> f64 {
    let (rel, floor, h) = (1e-5, 1e-8, 1e-5);
    let g = analytic_gradient(problem, data, enc, dec).unwrap();
    let obj = |e: &EncoderParams64, d: Option<&DecoderParams64>| objective(problem, data, e, d).unwrap();
    let with_enc = |r: &Mat64, b: &Vector64, q: &Mat64| EncoderParams64::from_cov(r.clone(), b.clone(), q.clone()).unwrap();

    let fr = fd_matrix(&enc.r, false, h, |r| obj(&with_enc(r, &enc.b, &enc.q), dec));
    let fb = fd_vector(&enc.b, h, |b| obj(&with_enc(&enc.r, b, &enc.q), dec));
    let fq = fd_matrix(&enc.q, true, h, |q| obj(&with_enc(&enc.r, &enc.b, q), dec));
    let mut worst = gradient_excess(g.dr.iter(), fr.iter(), rel, floor)
        .max(gradient_excess(g.db.iter(), fb.iter(), rel, floor))
        .max(gradient_excess(g.dq.iter(), fq.iter(), rel, floor));
    if let Some(d) = dec {
        let fa = fd_matrix(&d.a, false, h, |a| obj(enc, Some(&DecoderParams64::new(a.clone(), d.s.clone()).unwrap())));
        let fs = fd_matrix(&d.s, true, h, |s| obj(enc, Some(&DecoderParams64::new(d.a.clone(), s.clone()).unwrap())));
        let ga = g.da_dec.as_ref().expect("decoder gradient");
        let gs = g.ds_dec.as_ref().expect("decoder gradient");
        worst = worst
            .max(gradient_excess(ga.iter(), fa.iter(), rel, floor))
            .max(gradient_excess(gs.iter(), fs.iter(), rel, floor));
    }
    worst
}

/// One random problem instance of the given kind: `(problem, data, enc, dec)`.
pub fn random_problem(
    kind: &str,
    rng: &mut ChaCha8Rng,
) -> (Problem64, GaussianDist64, EncoderParams64, Option<DecoderParams64>) {
    let n = rng.random_range(1..=3);
    let m = rng.random_range(1..=3);
    let data = rand_gaussian(rng, n);
    let enc = rand_encoder(rng, n, m);
    let model = rand_model(rng, n, m);
    let (a, s) = (model.a().clone(), model.s().clone());
    match kind {
        "vei" => (Problem::Vei(model), data, enc, None),
        "ves" => (Problem::Ves { a, s }, data, enc, None),
        "beta_ves" => {
            let beta = rng.random_range(0.2..5.0);
            (Problem::BetaVes { a, s, beta }, data, enc, None)
        }
        "vaei" => {
            let dec = rand_decoder(rng, n, m);
            (Problem::Vaei { prior: model.prior().clone() }, data, enc, Some(dec))
        }
        "vaes" => {
            let dec = rand_decoder(rng, n, m);
            (Problem::Vaes, data, enc, Some(dec))
        }
        other => panic!("unknown problem kind {other}"),
    }
}

pub const KINDS: [&str; 5] = ["vei", "ves", "beta_ves", "vaei", "vaes"];
