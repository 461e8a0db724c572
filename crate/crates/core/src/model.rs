//! The linear-Gaussian generating process, encoders, decoders and the joints they induce.

use crate::error::{Error, Result};
use crate::gaussian::{GaussianDist, JointGaussian};
use crate::linalg::{
    check_len, check_psd, check_shape, check_square, check_symmetric, psd_cholesky, sym, Mat, SymFactor, Vector,
};
use crate::scalar::Real;

pub const THETA: &str = "theta";
pub const Y: &str = "y";
pub const Z: &str = "z";
pub const Y_TILDE: &str = "y_tilde";

/// θ ~ N(μ_Θ, Σ_Θ), y | θ ~ N(Aθ, S).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianModel<T: Real> {
    a: Mat<T>,
    s: Mat<T>,
    prior: GaussianDist<T>,
}

impl<T: Real> LinearGaussianModel<T> {
    /// `S` may be singular (noise-free likelihood); `Σ_Θ` must be positive definite.
    pub fn new(a: Mat<T>, s: Mat<T>, prior: GaussianDist<T>) -> Result<Self> {
        let (n, m) = a.shape();
        if n == 0 || m == 0 {
            return Err(Error::dims("likelihood matrix", 1, 0));
        }
        check_len(prior.mean(), m, "prior mean (columns of A)")?;
        check_square(&s, n, "likelihood covariance S (rows of A)")?;
        check_symmetric(&s, "likelihood covariance S")?;
        check_psd(&s, "likelihood covariance S")?;
        SymFactor::new(prior.cov(), "prior covariance")?;
        Ok(Self { a, s: sym(&s), prior })
    }

    pub fn a(&self) -> &Mat<T> {
        &self.a
    }

    pub fn s(&self) -> &Mat<T> {
        &self.s
    }

    pub fn prior(&self) -> &GaussianDist<T> {
        &self.prior
    }

    /// Observation dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Latent dimension.
    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn data_marginal(&self) -> GaussianDist<T> {
        data_marginal(self)
    }

    /// The (Θ, Y) joint.
    pub fn joint(&self) -> JointGaussian<T> {
        let (n, m) = (self.n(), self.m());
        let st = self.prior.cov();
        let cross = &self.a * st;
        let mut cov = Mat::zeros(m + n, m + n);
        cov.view_mut((0, 0), (m, m)).copy_from(st);
        cov.view_mut((m, 0), (n, m)).copy_from(&cross);
        cov.view_mut((0, m), (m, n)).copy_from(&cross.transpose());
        cov.view_mut((m, m), (n, n))
            .copy_from(&(&cross * self.a.transpose() + &self.s));
        let mut mean = Vector::zeros(m + n);
        mean.rows_mut(0, m).copy_from(self.prior.mean());
        mean.rows_mut(m, n).copy_from(&(&self.a * self.prior.mean()));
        JointGaussian::from_parts(vec![(THETA.into(), m), (Y.into(), n)], mean, cov)
    }

    /// I(Θ; Y) = ½ ln(|Σ_Y| / |S|).
    pub fn information(&self) -> Result<T> {
        let sy = SymFactor::new(self.data_marginal().cov(), "data covariance")?;
        let s = SymFactor::new(&self.s, "likelihood covariance S")?;
        Ok(T::lit(0.5) * (sy.logdet() - s.logdet()))
    }

    /// H(Y | Θ), the entropy of N(·, S).
    pub fn conditional_entropy(&self) -> Result<T> {
        crate::gaussian::entropy(&GaussianDist::from_parts(Vector::zeros(self.n()), self.s.clone()))
    }
}

/// Encoder p_φ(θ | y) = N(Ry + b, Q) with `Q = CCᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams<T: Real> {
    pub r: Mat<T>,
    pub b: Vector<T>,
    pub q: Mat<T>,
    pub c: Mat<T>,
}

impl<T: Real> EncoderParams<T> {
    /// From a PSD covariance; the factor is a (pivot-tolerant) Cholesky factor.
    pub fn from_cov(r: Mat<T>, b: Vector<T>, q: Mat<T>) -> Result<Self> {
        let m = r.nrows();
        check_len(&b, m, "encoder offset b")?;
        check_square(&q, m, "encoder covariance Q")?;
        check_symmetric(&q, "encoder covariance Q")?;
        let c = psd_cholesky(&q, "encoder covariance Q")?;
        Ok(Self { r, b, q: sym(&q), c })
    }

    /// From a lower-triangular factor; entries above the diagonal are ignored.
    pub fn from_factor(r: Mat<T>, b: Vector<T>, c: Mat<T>) -> Result<Self> {
        let m = r.nrows();
        check_len(&b, m, "encoder offset b")?;
        check_square(&c, m, "encoder factor C")?;
        let c = c.lower_triangle();
        let q = sym(&(&c * c.transpose()));
        Ok(Self { r, b, q, c })
    }

    pub fn m(&self) -> usize {
        self.r.nrows()
    }

    pub fn n(&self) -> usize {
        self.r.ncols()
    }

    pub fn posterior_mean(&self, y: &Vector<T>) -> Vector<T> {
        &self.r * y + &self.b
    }

    /// Aggregated posterior N(Rμ_Y + b, RΣ_YRᵀ + Q).
    pub fn aggregated(&self, data: &GaussianDist<T>) -> Result<GaussianDist<T>> {
        check_len(data.mean(), self.n(), "data dimension (columns of R)")?;
        Ok(GaussianDist::from_parts(
            self.posterior_mean(data.mean()),
            &self.r * data.cov() * self.r.transpose() + &self.q,
        ))
    }

    pub(crate) fn check_data(&self, n: usize) -> Result<()> {
        check_shape(&self.r, self.m(), n, "encoder gain R")
    }
}

/// Decoder p_ψ(y | θ) = N(A_ψθ, S_ψ).
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams<T: Real> {
    pub a: Mat<T>,
    pub s: Mat<T>,
}

impl<T: Real> DecoderParams<T> {
    pub fn new(a: Mat<T>, s: Mat<T>) -> Result<Self> {
        check_square(&s, a.nrows(), "decoder covariance")?;
        check_symmetric(&s, "decoder covariance")?;
        check_psd(&s, "decoder covariance")?;
        Ok(Self { a, s: sym(&s) })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }
}

pub fn data_marginal<T: Real>(model: &LinearGaussianModel<T>) -> GaussianDist<T> {
    let a = model.a();
    GaussianDist::from_parts(
        a * model.prior().mean(),
        a * model.prior().cov() * a.transpose() + model.s(),
    )
}

/// Exact posterior: `Q = (AᵀS⁻¹A + Σ_Θ⁻¹)⁻¹`, `R = QAᵀS⁻¹`, `b = QΣ_Θ⁻¹μ_Θ`.
pub fn bayes_posterior<T: Real>(model: &LinearGaussianModel<T>) -> Result<EncoderParams<T>> {
    let fs = SymFactor::new(model.s(), "likelihood covariance S")?;
    let fp = SymFactor::new(model.prior().cov(), "prior covariance")?;
    let sinv_a = fs.solve(model.a());
    let precision = model.a().transpose() * &sinv_a + fp.inverse();
    let fq = SymFactor::new(&precision, "posterior precision")?;
    let q = fq.inverse();
    let r = &q * sinv_a.transpose();
    let b = &q * fp.solve_vec(model.prior().mean());
    EncoderParams::from_cov(r, b, q)
}

/// The (Θ, Y) joint induced by the data distribution and the encoder.
pub fn encoder_joint<T: Real>(data: &GaussianDist<T>, enc: &EncoderParams<T>) -> Result<JointGaussian<T>> {
    enc.check_data(data.dim())?;
    let gain = enc.r.clone();
    let cond = crate::gaussian::LinearConditional {
        gain,
        offset: enc.b.clone(),
        cov: enc.q.clone(),
    };
    let yt = JointGaussian::from_conditional(Y, data, THETA, &cond)?;
    yt.marginalize(&[THETA, Y])
}

/// The (Θ, Y, Z) joint with Z ~ p_φ(z | y).
pub fn chain_joint<T: Real>(model: &LinearGaussianModel<T>, enc: &EncoderParams<T>) -> Result<JointGaussian<T>> {
    let (n, m) = (model.n(), model.m());
    enc.check_data(n)?;
    let base = model.joint();
    let r = &enc.r;
    let st = model.prior().cov();
    let sy = base.cross(Y, Y)?;
    let s_tz = st * model.a().transpose() * r.transpose();
    let s_yz = &sy * r.transpose();
    let s_z = r * &sy * r.transpose() + &enc.q;
    let k = enc.m();
    let d = m + n + k;
    let mut cov = Mat::zeros(d, d);
    cov.view_mut((0, 0), (m + n, m + n)).copy_from(base.cov());
    cov.view_mut((0, m + n), (m, k)).copy_from(&s_tz);
    cov.view_mut((m + n, 0), (k, m)).copy_from(&s_tz.transpose());
    cov.view_mut((m, m + n), (n, k)).copy_from(&s_yz);
    cov.view_mut((m + n, m), (k, n)).copy_from(&s_yz.transpose());
    cov.view_mut((m + n, m + n), (k, k)).copy_from(&s_z);
    let mut mean = Vector::zeros(d);
    mean.rows_mut(0, m + n).copy_from(base.mean());
    let mu_y = base.mean().rows(m, n).into_owned();
    mean.rows_mut(m + n, k).copy_from(&enc.posterior_mean(&mu_y));
    Ok(JointGaussian::from_parts(
        vec![(THETA.into(), m), (Y.into(), n), (Z.into(), k)],
        mean,
        cov,
    ))
}

/// The decoder-side (Θ, Y) joint p_ψ(y | θ) p(θ).
pub fn decoder_joint<T: Real>(theta: &GaussianDist<T>, dec: &DecoderParams<T>) -> Result<JointGaussian<T>> {
    check_shape(&dec.a, dec.n(), theta.dim(), "decoder matrix")?;
    let cond = crate::gaussian::LinearConditional {
        gain: dec.a.clone(),
        offset: Vector::zeros(dec.n()),
        cov: dec.s.clone(),
    };
    JointGaussian::from_conditional(THETA, theta, Y, &cond)
}

/// The Θ → Y → Z → Ỹ chain with Ỹ ~ p_ψ(ỹ | z).
pub fn autoencoder_chain<T: Real>(
    model: &LinearGaussianModel<T>,
    enc: &EncoderParams<T>,
    dec: &DecoderParams<T>,
) -> Result<JointGaussian<T>> {
    let chain = chain_joint(model, enc)?;
    let k = enc.m();
    check_shape(&dec.a, dec.n(), k, "decoder matrix")?;
    let base = chain.dim();
    let zr = chain.range(Z)?;
    let n2 = dec.n();
    let d = base + n2;
    let a = &dec.a;
    // Cov(Ỹ, ·) = A_ψ Cov(Z, ·).
    let cz_all = chain.cov().view((zr.start, 0), (k, base)).into_owned();
    let c_ty = a * &cz_all;
    let s_z = chain.cov().view((zr.start, zr.start), (k, k)).into_owned();
    let s_tt = a * s_z * a.transpose() + &dec.s;
    let mut cov = Mat::zeros(d, d);
    cov.view_mut((0, 0), (base, base)).copy_from(chain.cov());
    cov.view_mut((base, 0), (n2, base)).copy_from(&c_ty);
    cov.view_mut((0, base), (base, n2)).copy_from(&c_ty.transpose());
    cov.view_mut((base, base), (n2, n2)).copy_from(&s_tt);
    let mut mean = Vector::zeros(d);
    mean.rows_mut(0, base).copy_from(chain.mean());
    let mu_z = chain.mean().rows(zr.start, k).into_owned();
    mean.rows_mut(base, n2).copy_from(&(a * mu_z));
    let mut blocks = chain.blocks().to_vec();
    blocks.push((Y_TILDE.into(), n2));
    Ok(JointGaussian::from_parts(blocks, mean, cov))
}
