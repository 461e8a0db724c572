//! Closed-form stationary points of the five problems and the analytic rate-distortion curve.

use crate::elbo::reconstruction_loss;
use crate::error::{Error, FixedPointReport, Result};
use crate::gaussian::GaussianDist;
use crate::linalg::{
    check_psd_scaled, check_shape, check_square, max_abs, max_abs_vec, psd_project, right_pinv, sym, Mat, SymFactor,
    Vector,
};
use crate::model::{bayes_posterior, encoder_joint, DecoderParams, EncoderParams, LinearGaussianModel, THETA, Y};
use crate::scalar::Real;

/// One point of the rate-distortion curve, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RDPoint {
    pub beta: f64,
    pub rate: f64,
    pub distortion: f64,
}

/// Inference problem optimum: the Bayes posterior.
pub fn solve_vei<T: Real>(model: &LinearGaussianModel<T>) -> Result<EncoderParams<T>> {
    bayes_posterior(model)
}

fn check_search_inputs<T: Real>(data: &GaussianDist<T>, a: &Mat<T>, s: &Mat<T>) -> Result<()> {
    let n = data.dim();
    check_shape(a, n, a.ncols(), "likelihood matrix")?;
    check_square(s, n, "likelihood covariance")
}

/// β-weighted search optimum; requires `A` of full row rank and a feasible β.
pub fn solve_beta_ves<T: Real>(data: &GaussianDist<T>, a: &Mat<T>, s: &Mat<T>, beta: T) -> Result<EncoderParams<T>> {
    check_search_inputs(data, a, s)?;
    if !(beta > T::zero()) || !beta.finite() {
        return Err(Error::InfeasibleBeta {
            beta: beta.as_f64(),
            reason: "beta must be positive".into(),
        });
    }
    let ap = right_pinv(a)?;
    let n = data.dim();
    let fy = SymFactor::new(data.cov(), "data covariance")?;
    let inv_beta = T::one() / beta;
    let s_syinv = fy.solve(s).transpose();
    let inner_q = sym(&((s - &s_syinv * s * inv_beta) * inv_beta));
    let q = sym(&(&ap * &inner_q * ap.transpose()));
    let r = &ap * (Mat::identity(n, n) - &s_syinv * inv_beta);
    let b = &ap * &s_syinv * data.mean() * inv_beta;
    let agg = sym(&(&ap * (data.cov() - s * inv_beta) * ap.transpose()));

    let q_scale = max_abs(&(&ap * s * ap.transpose())).as_f64() / beta.as_f64();
    let agg_scale = max_abs(&(&ap * data.cov() * ap.transpose())).as_f64();
    if check_psd_scaled(&q, 1e-10, q_scale, "Q").is_err() {
        return Err(Error::InfeasibleBeta {
            beta: beta.as_f64(),
            reason: "encoder covariance is not positive semi-definite".into(),
        });
    }
    if check_psd_scaled(&agg, 1e-10, agg_scale, "aggregated covariance").is_err() {
        return Err(Error::InfeasibleBeta {
            beta: beta.as_f64(),
            reason: "aggregated posterior covariance is not positive semi-definite".into(),
        });
    }
    let q = psd_project(&q, T::lit(1e-12 * q_scale));
    EncoderParams::from_cov(r, b, q)
}

/// Search optimum (β = 1).
pub fn solve_ves<T: Real>(data: &GaussianDist<T>, a: &Mat<T>, s: &Mat<T>) -> Result<EncoderParams<T>> {
    solve_beta_ves(data, a, s, T::one())
}

/// Max-abs residuals of the three β-search stationarity equations:
/// `AQAᵀ = S/β − SΣ_Y⁻¹S/β²`, `R = βQAᵀS⁻¹`, `AᵀS⁻¹(μ_Y − Aμ^φ) = 0`.
pub fn ves_residuals<T: Real>(
    data: &GaussianDist<T>,
    a: &Mat<T>,
    s: &Mat<T>,
    beta: T,
    enc: &EncoderParams<T>,
) -> Result<[T; 3]> {
    check_search_inputs(data, a, s)?;
    enc.check_data(data.dim())?;
    let fy = SymFactor::new(data.cov(), "data covariance")?;
    let fs = SymFactor::new(s, "likelihood covariance")?;
    let inv_beta = T::one() / beta;
    let s_syinv_s = s * fy.solve(s);
    let e1 = a * &enc.q * a.transpose() - (s * inv_beta - s_syinv_s * (inv_beta * inv_beta));
    let e2 = &enc.r - &enc.q * fs.solve(a).transpose() * beta;
    let mu_phi = enc.posterior_mean(data.mean());
    let e3 = a.transpose() * fs.solve_vec(&(data.mean() - a * mu_phi));
    Ok([max_abs(&e1), max_abs(&e2), max_abs_vec(&e3)])
}

/// `I_φ(Θ; Y)` of the encoder on the data, valid for singular `Q` and aggregated covariance.
pub fn achieved_rate<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<T> {
    encoder_joint(data, enc)?.mutual_information_degenerate(Y, THETA)
}

/// Reconstruction loss of the encoder, the distortion of the rate-distortion problem.
pub fn achieved_distortion<T: Real>(
    data: &GaussianDist<T>,
    a: &Mat<T>,
    s: &Mat<T>,
    enc: &EncoderParams<T>,
) -> Result<T> {
    reconstruction_loss(data, a, s, enc)
}

/// Analytic curve: `rate = I + (n/2) ln β`, `distortion = H(Y|Θ) + (n/2)(1/β − 1)`.
pub fn rd_curve(info: f64, h_cond: f64, n: usize, betas: &[f64]) -> Vec<RDPoint> {
    let half_n = 0.5 * n as f64;
    betas
        .iter()
        .map(|&beta| RDPoint {
            beta,
            rate: info + half_n * beta.ln(),
            distortion: h_cond + half_n * (1.0 / beta - 1.0),
        })
        .collect()
}

/// `R(D) = I − (n/2) ln[1 + (2/n)(D − H(Y|Θ))]`.
pub fn rate_of_distortion(info: f64, h_cond: f64, n: usize, distortion: f64) -> f64 {
    let half_n = 0.5 * n as f64;
    info - half_n * (1.0 + (distortion - h_cond) / half_n).ln()
}

/// Damped alternating iteration settings for the autoencoder problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in each damped update.
    pub relaxation: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 10_000,
            relaxation: 0.5,
        }
    }
}

fn check_autoencoder<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>, dec: &DecoderParams<T>) -> Result<()> {
    enc.check_data(data.dim())?;
    check_shape(&dec.a, data.dim(), enc.m(), "decoder matrix")?;
    check_square(&dec.s, data.dim(), "decoder covariance")
}

/// Normal-equation decoder for the current encoder.
fn decoder_target<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<(Mat<T>, Mat<T>)> {
    let n = data.dim();
    let mu_y = data.mean();
    let mu_phi = enc.posterior_mean(mu_y);
    let agg = &enc.r * data.cov() * enc.r.transpose() + &enc.q;
    let second = &mu_phi * mu_phi.transpose() + agg;
    let cross = mu_y * mu_phi.transpose() + data.cov() * enc.r.transpose();
    let f = SymFactor::new(&second, "latent second moment")?;
    let a = f.solve(&cross.transpose()).transpose();
    let s = data.cov() * (Mat::identity(n, n) - enc.r.transpose() * a.transpose())
        + (mu_y - &a * mu_phi) * mu_y.transpose();
    Ok((a, sym(&s)))
}

/// Posterior of the decoder likelihood under a Gaussian prior.
fn encoder_target<T: Real>(dec: &DecoderParams<T>, prior: &GaussianDist<T>) -> Result<(Mat<T>, Vector<T>, Mat<T>)> {
    let model = LinearGaussianModel::new(dec.a.clone(), dec.s.clone(), prior.clone())?;
    let e = bayes_posterior(&model)?;
    Ok((e.r, e.b, e.q))
}

fn blend<T: Real>(old: &Mat<T>, new: &Mat<T>, w: T) -> Mat<T> {
    old * (T::one() - w) + new * w
}

/// Max-abs residuals of the five inference-autoencoder equations.
pub fn vaei_residuals<T: Real>(
    data: &GaussianDist<T>,
    prior: &GaussianDist<T>,
    enc: &EncoderParams<T>,
    dec: &DecoderParams<T>,
) -> Result<[T; 5]> {
    check_autoencoder(data, enc, dec)?;
    let m = enc.m();
    let fs = SymFactor::new(&dec.s, "decoder covariance")?;
    let fp = SymFactor::new(prior.cov(), "prior covariance")?;
    let sinv_a = fs.solve(&dec.a);
    let prec = dec.a.transpose() * &sinv_a + fp.inverse();
    let e1 = &enc.q * prec - Mat::identity(m, m);
    let e2 = &enc.r - &enc.q * sinv_a.transpose();
    let e3 = &enc.b - &enc.q * fp.solve_vec(prior.mean());
    let [e4, e5] = decoder_residuals(data, enc, dec);
    Ok([max_abs(&e1), max_abs(&e2), max_abs_vec(&e3), e4, e5])
}

fn decoder_residuals<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>, dec: &DecoderParams<T>) -> [T; 2] {
    let n = data.dim();
    let mu_y = data.mean();
    let mu_phi = enc.posterior_mean(mu_y);
    let agg = &enc.r * data.cov() * enc.r.transpose() + &enc.q;
    let e4 = &dec.a * (&mu_phi * mu_phi.transpose() + agg) - (mu_y * mu_phi.transpose() + data.cov() * enc.r.transpose());
    let e5 = &dec.s
        - (data.cov() * (Mat::identity(n, n) - enc.r.transpose() * dec.a.transpose())
            + (mu_y - &dec.a * &mu_phi) * mu_y.transpose());
    [max_abs(&e4), max_abs(&e5)]
}

/// Max-abs residuals of the five search-autoencoder equations.
pub fn vaes_residuals<T: Real>(
    data: &GaussianDist<T>,
    enc: &EncoderParams<T>,
    dec: &DecoderParams<T>,
) -> Result<[T; 5]> {
    check_autoencoder(data, enc, dec)?;
    let fs = SymFactor::new(&dec.s, "decoder covariance")?;
    let fy = SymFactor::new(data.cov(), "data covariance")?;
    let sinv_a = fs.solve(&dec.a);
    let s = &dec.s;
    let e1 = &enc.r - &enc.q * sinv_a.transpose();
    let e2 = &dec.a * &enc.q * dec.a.transpose() - (s - s * fy.solve(s));
    let [e3, e4] = decoder_residuals(data, enc, dec);
    let mu_phi = enc.posterior_mean(data.mean());
    let e5 = sinv_a.transpose() * (&dec.a * mu_phi - data.mean());
    Ok([max_abs(&e1), max_abs(&e2), e3, e4, max_abs_vec(&e5)])
}

fn worst<T: Real>(r: &[T]) -> f64 {
    r.iter().fold(0.0f64, |m, x| {
        let v = x.as_f64();
        if v.is_nan() {
            f64::NAN
        } else {
            m.max(v)
        }
    })
}

fn fixed_point<T: Real>(
    data: &GaussianDist<T>,
    init_enc: &EncoderParams<T>,
    init_dec: &DecoderParams<T>,
    config: &FixedPointConfig,
    prior: Option<&GaussianDist<T>>,
) -> Result<(EncoderParams<T>, DecoderParams<T>, FixedPointReport)> {
    if !(config.relaxation > 0.0 && config.relaxation <= 1.0) {
        return Err(Error::ConfigInvalid("relaxation must lie in (0, 1]".into()));
    }
    check_autoencoder(data, init_enc, init_dec)?;
    let residual = |e: &EncoderParams<T>, d: &DecoderParams<T>| -> Result<f64> {
        Ok(match prior {
            Some(p) => worst(&vaei_residuals(data, p, e, d)?),
            None => worst(&vaes_residuals(data, e, d)?),
        })
    };
    let w = T::lit(config.relaxation);
    let mut enc = init_enc.clone();
    let mut dec = init_dec.clone();
    let mut res = residual(&enc, &dec)?;
    let mut it = 0;
    while !(res <= config.tol) && it < config.max_iter {
        if !res.is_finite() {
            break;
        }
        let (a_new, s_new) = decoder_target(data, &enc)?;
        dec = DecoderParams {
            a: blend(&dec.a, &a_new, w),
            s: sym(&blend(&dec.s, &s_new, w)),
        };
        let target_prior = match prior {
            Some(p) => p.clone(),
            None => enc.aggregated(data)?,
        };
        let (r, b, q) = encoder_target(&dec, &target_prior)?;
        enc = EncoderParams::from_cov(
            blend(&enc.r, &r, w),
            &enc.b * (T::one() - w) + b * w,
            sym(&blend(&enc.q, &q, w)),
        )?;
        it += 1;
        res = residual(&enc, &dec)?;
    }
    let report = FixedPointReport {
        iterations: it,
        residual: res,
        converged: res <= config.tol,
    };
    if !report.converged {
        return Err(Error::NoConvergence { report });
    }
    Ok((enc, dec, report))
}

/// Stationary point of the inference autoencoder from `init`.
pub fn solve_vaei<T: Real>(
    data: &GaussianDist<T>,
    prior: &GaussianDist<T>,
    init_enc: &EncoderParams<T>,
    init_dec: &DecoderParams<T>,
    config: &FixedPointConfig,
) -> Result<(EncoderParams<T>, DecoderParams<T>, FixedPointReport)> {
    if prior.dim() != init_enc.m() {
        return Err(Error::dims("prior dimension", init_enc.m(), prior.dim()));
    }
    fixed_point(data, init_enc, init_dec, config, Some(prior))
}

/// Stationary point of the search autoencoder with latent dimension `m`.
pub fn solve_vaes<T: Real>(
    data: &GaussianDist<T>,
    m: usize,
    init_enc: &EncoderParams<T>,
    init_dec: &DecoderParams<T>,
    config: &FixedPointConfig,
) -> Result<(EncoderParams<T>, DecoderParams<T>, FixedPointReport)> {
    if m == 0 || init_enc.m() != m {
        return Err(Error::dims("latent dimension", m, init_enc.m()));
    }
    fixed_point(data, init_enc, init_dec, config, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from;

    fn reference_model() -> LinearGaussianModel<f64> {
        LinearGaussianModel::new(
            mat_from(1, 2, &[1.0, 0.6]),
            mat_from(1, 1, &[0.04]),
            GaussianDist::standard(2),
        )
        .unwrap()
    }

    #[test]
    fn beta_one_matches_similarity_relation() {
        let m = reference_model();
        let e = solve_ves(&m.data_marginal(), m.a(), m.s()).unwrap();
        assert!((e.r[(0, 0)] - 0.714_285_714_285_714_3).abs() < 1e-12);
        assert!((e.r[(1, 0)] - 0.428_571_428_571_428_6).abs() < 1e-12);
        let k = e.q[(0, 0)];
        assert!((k - 0.021_009_4).abs() < 1e-6);
        assert!((e.q[(0, 1)] - 0.6 * k).abs() < 1e-12);
        assert!((e.q[(1, 1)] - 0.36 * k).abs() < 1e-12);
    }

    #[test]
    fn zero_rate_beta() {
        let m = reference_model();
        let e = solve_beta_ves(&m.data_marginal(), m.a(), m.s(), 1.0 / 35.0).unwrap();
        let rate = achieved_rate(&m.data_marginal(), &e).unwrap();
        assert!(rate.abs() < 1e-8);
        assert!(matches!(
            solve_beta_ves(&m.data_marginal(), m.a(), m.s(), 0.02),
            Err(Error::InfeasibleBeta { .. })
        ));
    }

    #[test]
    fn large_beta_limit() {
        let m = reference_model();
        let e = solve_beta_ves(&m.data_marginal(), m.a(), m.s(), 1e8).unwrap();
        assert!((e.r[(0, 0)] - 1.0 / 1.36).abs() < 1e-7);
        assert!(max_abs(&e.q) < 1e-9);
    }

    #[test]
    fn rd_formula() {
        let pts = rd_curve(1.0, -0.2, 2, &[0.5, 1.0, 3.0]);
        for p in &pts {
            assert!((rate_of_distortion(1.0, -0.2, 2, p.distortion) - p.rate).abs() < 1e-12);
        }
        assert_eq!(pts[1].rate, 1.0);
        assert_eq!(pts[1].distortion, -0.2);
    }

    #[test]
    fn scalar_fixed_point_oracle() {
        let data = GaussianDist::scalar(0.0, 2.0).unwrap();
        let prior = GaussianDist::scalar(0.0, 1.0).unwrap();
        let enc = EncoderParams::from_cov(mat_from(1, 1, &[0.5]), Vector::zeros(1), mat_from(1, 1, &[0.5])).unwrap();
        let dec = DecoderParams::new(mat_from(1, 1, &[1.0]), mat_from(1, 1, &[1.0])).unwrap();
        assert!(worst(&vaei_residuals(&data, &prior, &enc, &dec).unwrap()) < 1e-14);
        assert!(worst(&vaes_residuals(&data, &enc, &dec).unwrap()) < 1e-14);
        let (_, _, rep) = solve_vaei(&data, &prior, &enc, &dec, &FixedPointConfig::default()).unwrap();
        assert_eq!(rep.iterations, 0);
    }
}
