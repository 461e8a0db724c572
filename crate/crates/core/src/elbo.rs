//! Exact ELBO decomposition terms, the entropy budget and analytic gradients.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::gaussian::{cross_entropy, kl_divergence, GaussianDist};
use crate::linalg::{check_len, check_shape, sym, Mat, SymFactor, Vector};
use crate::model::{bayes_posterior, DecoderParams, EncoderParams, LinearGaussianModel};
use crate::scalar::Real;

/// The entropy budget `H(Y) = L_rec + I_φ + T_φ + D_φ`, all in nats.
///
/// With data other than the model marginal, `h_y` is the cross-entropy of the data
/// under the model marginal and the identity still closes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T: Real> {
    pub l_rec: T,
    pub l_reg: T,
    pub i_phi: T,
    pub t_phi: T,
    /// Minus the expected KL to the true posterior, so never positive.
    pub d_phi: T,
    pub h_y: T,
}

impl<T: Real> LossBreakdown<T> {
    pub fn budget_residual(&self) -> T {
        self.h_y - (self.l_rec + self.l_reg + self.d_phi)
    }

    pub fn split_residual(&self) -> T {
        self.l_reg - (self.i_phi + self.t_phi)
    }
}

/// Gradient blocks; the decoder blocks are present only for autoencoder problems.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T: Real> {
    pub dr: Mat<T>,
    pub db: Vector<T>,
    pub dq: Mat<T>,
    pub da_dec: Option<Mat<T>>,
    pub ds_dec: Option<Mat<T>>,
}

impl<T: Real> GradientSet<T> {
    pub fn max_abs(&self) -> T {
        let mut m = crate::linalg::max_abs(&self.dr)
            .max(crate::linalg::max_abs_vec(&self.db))
            .max(crate::linalg::max_abs(&self.dq));
        if let Some(a) = &self.da_dec {
            m = m.max(crate::linalg::max_abs(a));
        }
        if let Some(s) = &self.ds_dec {
            m = m.max(crate::linalg::max_abs(s));
        }
        m
    }
}

/// The five variational problems.
#[derive(Debug, Clone, PartialEq)]
pub enum Problem<T: Real> {
    /// Inference: `L_rec + L_reg` under a known model.
    Vei(LinearGaussianModel<T>),
    /// Search: `L_rec + I_φ` with known likelihood, unknown prior.
    Ves { a: Mat<T>, s: Mat<T> },
    /// `I_φ + β·L_rec`.
    BetaVes { a: Mat<T>, s: Mat<T>, beta: T },
    /// Autoencoder inference: decoder learned, prior fixed.
    Vaei { prior: GaussianDist<T> },
    /// Autoencoder search: decoder learned, no prior.
    Vaes,
}

impl<T: Real> Problem<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::Vei(_) => "vei",
            Problem::Ves { .. } => "ves",
            Problem::BetaVes { .. } => "beta_ves",
            Problem::Vaei { .. } => "vaei",
            Problem::Vaes => "vaes",
        }
    }

    pub fn has_decoder(&self) -> bool {
        matches!(self, Problem::Vaei { .. } | Problem::Vaes)
    }

    /// Likelihood `(A, S)` the reconstruction term is scored against.
    pub(crate) fn likelihood<'a>(&'a self, dec: Option<&'a DecoderParams<T>>) -> Result<(&'a Mat<T>, &'a Mat<T>)> {
        match self {
            Problem::Vei(m) => Ok((m.a(), m.s())),
            Problem::Ves { a, s } | Problem::BetaVes { a, s, .. } => Ok((a, s)),
            Problem::Vaei { .. } | Problem::Vaes => match dec {
                Some(d) => Ok((&d.a, &d.s)),
                None => Err(Error::ConfigInvalid(format!("{} needs decoder parameters", self.name()))),
            },
        }
    }
}

fn half<T: Real>() -> T {
    T::lit(0.5)
}

/// Shared moments of the closed-form loss expressions.
struct Moments<T: Real> {
    mu_phi: Vector<T>,
    sigma_phi: Mat<T>,
}

fn moments<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<Moments<T>> {
    enc.check_data(data.dim())?;
    let mu_phi = enc.posterior_mean(data.mean());
    let sigma_phi = sym(&(&enc.r * data.cov() * enc.r.transpose() + &enc.q));
    Ok(Moments { mu_phi, sigma_phi })
}

fn check_likelihood<T: Real>(a: &Mat<T>, s: &Mat<T>, n: usize, m: usize) -> Result<()> {
    check_shape(a, n, m, "likelihood matrix")?;
    check_shape(s, n, n, "likelihood covariance")
}

/// `E_{p(y) p_φ(θ|y)}[−ln N(y; Aθ, S)]`.
pub fn reconstruction_loss<T: Real>(
    data: &GaussianDist<T>,
    a: &Mat<T>,
    s: &Mat<T>,
    enc: &EncoderParams<T>,
) -> Result<T> {
    let mo = moments(data, enc)?;
    let n = data.dim();
    check_likelihood(a, s, n, enc.m())?;
    let fs = SymFactor::new(s, "likelihood covariance")?;
    let e = data.mean() - a * &mo.mu_phi;
    // Tr[S⁻¹Σ_Y − 2S⁻¹ARΣ_Y + S⁻¹AΣ^φAᵀ]
    let inner = data.cov() - (a * &enc.r * data.cov()) * T::lit(2.0) + a * &mo.sigma_phi * a.transpose();
    let tr = fs.solve(&inner).trace();
    Ok(T::from_count(n) * T::lit(0.5 * (2.0 * PI).ln()) + half::<T>() * (fs.logdet() + fs.quad(&e) + tr))
}

/// `E_Y[KL(p_φ(θ|y) ‖ prior)]`.
pub fn prior_regularizer<T: Real>(
    data: &GaussianDist<T>,
    prior: &GaussianDist<T>,
    enc: &EncoderParams<T>,
) -> Result<T> {
    let mo = moments(data, enc)?;
    check_len(prior.mean(), enc.m(), "prior dimension")?;
    let fp = SymFactor::new(prior.cov(), "prior covariance")?;
    let fq = SymFactor::new(&enc.q, "encoder covariance Q")?;
    let dm = prior.mean() - &mo.mu_phi;
    let tr = fp.solve(&mo.sigma_phi).trace();
    let m = T::from_count(enc.m());
    Ok(half::<T>() * (fp.logdet() - fq.logdet() + tr - m + fp.quad(&dm)))
}

/// `I_φ(Y; Θ) = ½ ln(|Σ^φ| / |Q|)`.
pub fn encoder_information<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<T> {
    let mo = moments(data, enc)?;
    let fa = SymFactor::new(&mo.sigma_phi, "aggregated posterior covariance")?;
    let fq = SymFactor::new(&enc.q, "encoder covariance Q")?;
    Ok(half::<T>() * (fa.logdet() - fq.logdet()))
}

/// `KL(aggregated posterior ‖ prior)`.
pub fn aggregated_kl<T: Real>(
    data: &GaussianDist<T>,
    prior: &GaussianDist<T>,
    enc: &EncoderParams<T>,
) -> Result<T> {
    let agg = enc.aggregated(data)?;
    kl_divergence(&agg, prior)
}

/// `−E_Y[KL(p_φ(θ|y) ‖ p(θ|y))]` against the model's exact posterior.
pub fn posterior_gap<T: Real>(
    data: &GaussianDist<T>,
    model: &LinearGaussianModel<T>,
    enc: &EncoderParams<T>,
) -> Result<T> {
    enc.check_data(data.dim())?;
    let exact = bayes_posterior(model)?;
    let fx = SymFactor::new(&exact.q, "posterior covariance")?;
    let fq = SymFactor::new(&enc.q, "encoder covariance Q")?;
    let dr = &enc.r - &exact.r;
    let db = &enc.b - &exact.b;
    let shift = &dr * data.mean() + db;
    let qinv_dr = fx.solve(&dr);
    let tr_y = (dr.transpose() * qinv_dr * data.cov()).trace();
    let tr_q = fx.solve(&enc.q).trace();
    let m = T::from_count(enc.m());
    Ok(-half::<T>() * (fx.logdet() - fq.logdet() + tr_q - m + fx.quad(&shift) + tr_y))
}

/// All budget terms for an encoder scored against `model` on data `data`.
pub fn breakdown_with_data<T: Real>(
    data: &GaussianDist<T>,
    model: &LinearGaussianModel<T>,
    enc: &EncoderParams<T>,
) -> Result<LossBreakdown<T>> {
    if data.dim() != model.n() {
        return Err(Error::dims("data dimension", model.n(), data.dim()));
    }
    if enc.m() != model.m() {
        return Err(Error::dims("encoder latent dimension", model.m(), enc.m()));
    }
    Ok(LossBreakdown {
        l_rec: reconstruction_loss(data, model.a(), model.s(), enc)?,
        l_reg: prior_regularizer(data, model.prior(), enc)?,
        i_phi: encoder_information(data, enc)?,
        t_phi: aggregated_kl(data, model.prior(), enc)?,
        d_phi: posterior_gap(data, model, enc)?,
        h_y: cross_entropy(data, &model.data_marginal())?,
    })
}

/// Budget terms with the data drawn from the model itself.
pub fn full_breakdown<T: Real>(model: &LinearGaussianModel<T>, enc: &EncoderParams<T>) -> Result<LossBreakdown<T>> {
    breakdown_with_data(&model.data_marginal(), model, enc)
}

/// Per-observation `(ℓ_rec, ℓ_reg, d_φ)` at `y`.
pub fn density_terms<T: Real>(
    model: &LinearGaussianModel<T>,
    enc: &EncoderParams<T>,
    y: &Vector<T>,
) -> Result<(T, T, T)> {
    let n = model.n();
    check_len(y, n, "observation")?;
    enc.check_data(n)?;
    let fs = SymFactor::new(model.s(), "likelihood covariance")?;
    let fq = SymFactor::new(&enc.q, "encoder covariance Q")?;
    let fp = SymFactor::new(model.prior().cov(), "prior covariance")?;
    let a = model.a();
    let mean = enc.posterior_mean(y);
    let resid = a * &mean - y;
    let ata = a.transpose() * fs.solve(a);
    let l_rec = T::from_count(n) * T::lit(0.5 * (2.0 * PI).ln())
        + half::<T>() * (fs.logdet() + fs.quad(&resid) + (ata * &enc.q).trace());
    let m = T::from_count(enc.m());
    let l_reg = half::<T>()
        * (fp.logdet() - fq.logdet() + fp.quad(&(&mean - model.prior().mean())) + fp.solve(&enc.q).trace() - m);
    let exact = bayes_posterior(model)?;
    let fx = SymFactor::new(&exact.q, "posterior covariance")?;
    let gap = &mean - exact.posterior_mean(y);
    let d = -half::<T>() * (fx.logdet() - fq.logdet() + fx.quad(&gap) + fx.solve(&enc.q).trace() - m);
    Ok((l_rec, l_reg, d))
}

/// Value of the problem's objective.
pub fn objective<T: Real>(
    problem: &Problem<T>,
    data: &GaussianDist<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
) -> Result<T> {
    let (a, s) = problem.likelihood(dec)?;
    let rec = reconstruction_loss(data, a, s, enc)?;
    Ok(match problem {
        Problem::Vei(m) => rec + prior_regularizer(data, m.prior(), enc)?,
        Problem::Vaei { prior } => rec + prior_regularizer(data, prior, enc)?,
        Problem::Ves { .. } | Problem::Vaes => rec + encoder_information(data, enc)?,
        Problem::BetaVes { beta, .. } => encoder_information(data, enc)? + *beta * rec,
    })
}

struct RecGrad<T: Real> {
    dr: Mat<T>,
    db: Vector<T>,
    dq: Mat<T>,
    da: Mat<T>,
    ds: Mat<T>,
}

fn reconstruction_gradient<T: Real>(
    data: &GaussianDist<T>,
    a: &Mat<T>,
    s: &Mat<T>,
    enc: &EncoderParams<T>,
) -> Result<RecGrad<T>> {
    let mo = moments(data, enc)?;
    check_likelihood(a, s, data.dim(), enc.m())?;
    let fs = SymFactor::new(s, "likelihood covariance")?;
    let sinv = fs.inverse();
    let sy = data.cov();
    let mu_y = data.mean();
    let r = &enc.r;
    let e = mu_y - a * &mo.mu_phi;
    let sinv_e = &sinv * &e;
    let at_sinv = a.transpose() * &sinv;
    let h = T::lit(0.5);
    let dr = -(&at_sinv * &e) * mu_y.transpose() - &at_sinv * sy + &at_sinv * a * r * sy;
    let db = -(&at_sinv * &e);
    let dq = sym(&(&at_sinv * a)) * h;
    let da = -(&sinv_e * mo.mu_phi.transpose()) - &sinv * sy * r.transpose() + &sinv * a * &mo.sigma_phi;
    let ds = &sinv_e * sinv_e.transpose() * (-h)
        + &sinv * sy * r.transpose() * a.transpose() * &sinv
        - &sinv * a * &mo.sigma_phi * a.transpose() * &sinv * h
        - &sinv * sy * &sinv * h
        + &sinv * h;
    Ok(RecGrad { dr, db, dq, da, ds: sym(&ds) })
}

/// Gradient of the prior regularizer with respect to `(R, b, Q)`.
fn prior_regularizer_gradient<T: Real>(
    data: &GaussianDist<T>,
    prior: &GaussianDist<T>,
    enc: &EncoderParams<T>,
) -> Result<(Mat<T>, Vector<T>, Mat<T>)> {
    let mo = moments(data, enc)?;
    let pinv = SymFactor::new(prior.cov(), "prior covariance")?.inverse();
    let qinv = SymFactor::new(&enc.q, "encoder covariance Q")?.inverse();
    let dm = prior.mean() - &mo.mu_phi;
    let g = &pinv * dm;
    let dr = -(&g * data.mean().transpose()) + &pinv * &enc.r * data.cov();
    let h = T::lit(0.5);
    let dq = (pinv - qinv) * h;
    Ok((dr, -g, sym(&dq)))
}

/// Gradient of `I_φ` with respect to `(R, b, Q)`; the `b` block is zero.
fn information_gradient<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<(Mat<T>, Mat<T>)> {
    let mo = moments(data, enc)?;
    let ainv = SymFactor::new(&mo.sigma_phi, "aggregated posterior covariance")?.inverse();
    let qinv = SymFactor::new(&enc.q, "encoder covariance Q")?.inverse();
    let dr = &ainv * &enc.r * data.cov();
    let dq = (ainv - qinv) * T::lit(0.5);
    Ok((dr, sym(&dq)))
}

/// Exact gradient of the problem's objective.
///
/// `Q` and `S_ψ` are treated as free symmetric matrices and their blocks are symmetrized.
pub fn analytic_gradient<T: Real>(
    problem: &Problem<T>,
    data: &GaussianDist<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
) -> Result<GradientSet<T>> {
    let (a, s) = problem.likelihood(dec)?;
    let rec = reconstruction_gradient(data, a, s, enc)?;
    let with_dec = problem.has_decoder();
    let (da, ds) = if with_dec {
        (Some(rec.da), Some(rec.ds))
    } else {
        (None, None)
    };
    let (dr, db, dq) = match problem {
        Problem::Vei(m) => {
            let (r2, b2, q2) = prior_regularizer_gradient(data, m.prior(), enc)?;
            (rec.dr + r2, rec.db + b2, rec.dq + q2)
        }
        Problem::Vaei { prior } => {
            let (r2, b2, q2) = prior_regularizer_gradient(data, prior, enc)?;
            (rec.dr + r2, rec.db + b2, rec.dq + q2)
        }
        Problem::Ves { .. } | Problem::Vaes => {
            let (r2, q2) = information_gradient(data, enc)?;
            (rec.dr + r2, rec.db, rec.dq + q2)
        }
        Problem::BetaVes { beta, .. } => {
            let (r2, q2) = information_gradient(data, enc)?;
            (rec.dr * *beta + r2, rec.db * *beta, rec.dq * *beta + q2)
        }
    };
    Ok(GradientSet {
        dr,
        db,
        dq,
        da_dec: da,
        ds_dec: ds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from;
    use std::f64::consts::E;

    fn reference_model() -> LinearGaussianModel<f64> {
        LinearGaussianModel::new(
            mat_from(1, 2, &[1.0, 0.6]),
            mat_from(1, 1, &[0.04]),
            GaussianDist::standard(2),
        )
        .unwrap()
    }

    #[test]
    fn exact_posterior_budget() {
        let m = reference_model();
        let p = bayes_posterior(&m).unwrap();
        let b = full_breakdown(&m, &p).unwrap();
        assert!(b.d_phi.abs() < 1e-12);
        assert!(b.t_phi.abs() < 1e-12);
        assert!((b.i_phi - 0.5 * 35f64.ln()).abs() < 1e-12);
        assert!((b.l_rec - 0.5 * (2.0 * PI * E * 0.04).ln()).abs() < 1e-12);
        assert!(b.budget_residual().abs() < 1e-12);
        assert!(b.split_residual().abs() < 1e-12);
    }

    #[test]
    fn scaled_covariance_has_negative_gap() {
        let m = reference_model();
        let p = bayes_posterior(&m).unwrap();
        let e = EncoderParams::from_cov(p.r.clone(), p.b.clone(), &p.q * 2.0).unwrap();
        let b = full_breakdown(&m, &e).unwrap();
        assert!(b.d_phi < 0.0);
        assert!(b.budget_residual().abs() < 1e-12);
    }

    #[test]
    fn density_terms_at_origin() {
        let m = reference_model();
        let p = bayes_posterior(&m).unwrap();
        let (_, l_reg, d) = density_terms(&m, &p, &Vector::zeros(1)).unwrap();
        assert!(d.abs() < 1e-12);
        let want = 0.5 * 35f64.ln() + 0.5 * p.q.trace() - 1.0;
        assert!((l_reg - want).abs() < 1e-12);
        let kl = kl_divergence(&GaussianDist::from_parts(p.b.clone(), p.q.clone()), m.prior()).unwrap();
        assert!((l_reg - kl).abs() < 1e-12);
    }

    #[test]
    fn vei_gradient_vanishes_at_posterior() {
        let m = reference_model();
        let p = bayes_posterior(&m).unwrap();
        let g = analytic_gradient(&Problem::Vei(m.clone()), &m.data_marginal(), &p, None).unwrap();
        assert!(g.max_abs() < 1e-9);
        assert!(g.da_dec.is_none());
    }

    #[test]
    fn decoder_problems_need_decoder() {
        let m = reference_model();
        let p = bayes_posterior(&m).unwrap();
        let r = objective(&Problem::Vaes, &m.data_marginal(), &p, None);
        assert!(matches!(r, Err(Error::ConfigInvalid(_))));
    }
}
