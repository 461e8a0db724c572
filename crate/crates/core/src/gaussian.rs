//! Multivariate normal distributions, block joints and their information measures.
//!
//! All information quantities are in nats.

use std::f64::consts::{E, PI};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::linalg::{self, check_len, check_psd, check_square, check_symmetric, sym, Mat, SymFactor, Vector};
use crate::scalar::Real;

/// Multivariate normal N(mean, cov).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist<T: Real> {
    mean: Vector<T>,
    cov: Mat<T>,
}

impl<T: Real> GaussianDist<T> {
    /// Validates symmetry and positive semi-definiteness, then symmetrizes.
    pub fn new(mean: Vector<T>, cov: Mat<T>) -> Result<Self> {
        check_square(&cov, mean.len(), "covariance")?;
        check_symmetric(&cov, "covariance")?;
        check_psd(&cov, "covariance")?;
        Ok(Self::from_parts(mean, cov))
    }

    /// Skips validation; `cov` is still symmetrized.
    pub(crate) fn from_parts(mean: Vector<T>, cov: Mat<T>) -> Self {
        Self { mean, cov: sym(&cov) }
    }

    pub fn standard(d: usize) -> Self {
        Self::from_parts(Vector::zeros(d), Mat::identity(d, d))
    }

    pub fn scalar(mean: T, var: T) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), Mat::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector<T> {
        &self.mean
    }

    pub fn cov(&self) -> &Mat<T> {
        &self.cov
    }
}

/// `x ↦ G x + c` plus Gaussian noise with covariance `cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConditional<T: Real> {
    pub gain: Mat<T>,
    pub offset: Vector<T>,
    pub cov: Mat<T>,
}

impl<T: Real> LinearConditional<T> {
    pub fn mean_at(&self, x: &Vector<T>) -> Vector<T> {
        &self.gain * x + &self.offset
    }

    pub fn at(&self, x: &Vector<T>) -> GaussianDist<T> {
        GaussianDist::from_parts(self.mean_at(x), self.cov.clone())
    }
}

/// Gaussian over a stack of labelled blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian<T: Real> {
    blocks: Vec<(String, usize)>,
    mean: Vector<T>,
    cov: Mat<T>,
}

impl<T: Real> JointGaussian<T> {
    pub fn new(blocks: Vec<(String, usize)>, mean: Vector<T>, cov: Mat<T>) -> Result<Self> {
        let total: usize = blocks.iter().map(|b| b.1).sum();
        check_len(&mean, total, "joint mean")?;
        check_square(&cov, total, "joint covariance")?;
        for (i, (label, _)) in blocks.iter().enumerate() {
            if blocks[..i].iter().any(|(l, _)| l == label) {
                return Err(Error::ConfigInvalid(format!("duplicate block label `{label}`")));
            }
        }
        check_symmetric(&cov, "joint covariance")?;
        check_psd(&cov, "joint covariance")?;
        Ok(Self::from_parts(blocks, mean, cov))
    }

    pub(crate) fn from_parts(blocks: Vec<(String, usize)>, mean: Vector<T>, cov: Mat<T>) -> Self {
        Self { blocks, mean, cov: sym(&cov) }
    }

    /// Joint of `(given, target)` from p(given) and p(target | given).
    pub fn from_conditional(
        given_label: &str,
        given: &GaussianDist<T>,
        target_label: &str,
        cond: &LinearConditional<T>,
    ) -> Result<Self> {
        let g = given.dim();
        linalg::check_shape(&cond.gain, cond.offset.len(), g, "conditional gain")?;
        let t = cond.offset.len();
        check_square(&cond.cov, t, "conditional covariance")?;
        let mut mean = Vector::zeros(g + t);
        mean.rows_mut(0, g).copy_from(given.mean());
        mean.rows_mut(g, t).copy_from(&cond.mean_at(given.mean()));
        let cross = &cond.gain * given.cov();
        let mut cov = Mat::zeros(g + t, g + t);
        cov.view_mut((0, 0), (g, g)).copy_from(given.cov());
        cov.view_mut((g, 0), (t, g)).copy_from(&cross);
        cov.view_mut((0, g), (g, t)).copy_from(&cross.transpose());
        cov.view_mut((g, g), (t, t))
            .copy_from(&(&cross * cond.gain.transpose() + &cond.cov));
        Ok(Self::from_parts(
            vec![(given_label.to_string(), g), (target_label.to_string(), t)],
            mean,
            cov,
        ))
    }

    pub fn blocks(&self) -> &[(String, usize)] {
        &self.blocks
    }

    pub fn mean(&self) -> &Vector<T> {
        &self.mean
    }

    pub fn cov(&self) -> &Mat<T> {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn range(&self, label: &str) -> Result<Range<usize>> {
        let mut start = 0;
        for (l, d) in &self.blocks {
            if l == label {
                return Ok(start..start + d);
            }
            start += d;
        }
        Err(Error::UnknownLabel(label.to_string()))
    }

    fn indices(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut idx = Vec::new();
        for l in labels {
            idx.extend(self.range(l)?);
        }
        Ok(idx)
    }

    /// Covariance block `Cov(a, b)`.
    pub fn cross(&self, a: &str, b: &str) -> Result<Mat<T>> {
        let ra = self.range(a)?;
        let rb = self.range(b)?;
        Ok(self
            .cov
            .view((ra.start, rb.start), (ra.len(), rb.len()))
            .into_owned())
    }

    pub fn marginal(&self, label: &str) -> Result<GaussianDist<T>> {
        let r = self.range(label)?;
        Ok(GaussianDist::from_parts(
            self.mean.rows(r.start, r.len()).into_owned(),
            self.cov.view((r.start, r.start), (r.len(), r.len())).into_owned(),
        ))
    }

    /// Sub-joint over `labels`, in the given order.
    pub fn marginalize(&self, labels: &[&str]) -> Result<JointGaussian<T>> {
        let idx = self.indices(labels)?;
        let blocks = labels
            .iter()
            .map(|l| {
                let r = self.range(l).expect("label checked");
                (l.to_string(), r.len())
            })
            .collect();
        let mean = Vector::from_iterator(idx.len(), idx.iter().map(|&i| self.mean[i]));
        let cov = Mat::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self::from_parts(blocks, mean, cov))
    }

    fn group(&self, labels: &[&str]) -> Result<(Vector<T>, Mat<T>)> {
        let j = self.marginalize(labels)?;
        Ok((j.mean, j.cov))
    }

    fn cross_group(&self, a: &[&str], b: &[&str]) -> Result<Mat<T>> {
        let ia = self.indices(a)?;
        let ib = self.indices(b)?;
        Ok(Mat::from_fn(ia.len(), ib.len(), |i, j| self.cov[(ia[i], ib[j])]))
    }

    /// p(target | given) as gain, offset and covariance.
    pub fn condition(&self, target: &str, given: &str) -> Result<LinearConditional<T>> {
        self.condition_on(&[target], &[given])
    }

    pub fn condition_on(&self, target: &[&str], given: &[&str]) -> Result<LinearConditional<T>> {
        check_distinct(target, given)?;
        let (mt, stt) = self.group(target)?;
        let (mg, sgg) = self.group(given)?;
        let stg = self.cross_group(target, given)?;
        let f = SymFactor::new(&sgg, "conditioning block")?;
        let gain = f.solve(&stg.transpose()).transpose();
        let offset = &mt - &gain * &mg;
        let cov = sym(&(&stt - &gain * stg.transpose()));
        Ok(LinearConditional { gain, offset, cov })
    }

    /// I(a; b) = ½ ln(|Σ_a| / |Σ_{a|b}|).
    pub fn mutual_information(&self, a: &str, b: &str) -> Result<T> {
        self.mutual_information_groups(&[a], &[b])
    }

    pub fn mutual_information_groups(&self, a: &[&str], b: &[&str]) -> Result<T> {
        check_distinct(a, b)?;
        let (_, saa) = self.group(a)?;
        let cond = self.condition_on(a, b)?;
        let la = SymFactor::new(&saa, "marginal covariance")?.logdet();
        let lc = SymFactor::new(&cond.cov, "conditional covariance")?.logdet();
        Ok(T::lit(0.5) * (la - lc))
    }

    /// I(a; b) allowing a singular `Σ_b`: conditioning uses its eigen pseudo-inverse.
    ///
    /// Eigenvalues of `Σ_b` at or below `1e-10·max diag(Σ)` of the whole joint are discarded.
    pub fn mutual_information_degenerate(&self, a: &str, b: &str) -> Result<T> {
        check_distinct(&[a], &[b])?;
        let saa = self.marginal(a)?.cov;
        let sbb = self.marginal(b)?.cov;
        let sab = self.cross(a, b)?;
        let scale = (0..self.dim()).fold(T::zero(), |m, i| m.max(self.cov[(i, i)].abs()));
        let pinv = linalg::pinv_sym_abs(&sbb, T::lit(1e-10) * scale);
        let cond = sym(&(&saa - &sab * pinv * sab.transpose()));
        let la = SymFactor::new(&saa, "marginal covariance")?.logdet();
        let lc = SymFactor::new(&cond, "conditional covariance")?.logdet();
        Ok(T::lit(0.5) * (la - lc))
    }
}

fn check_distinct(a: &[&str], b: &[&str]) -> Result<()> {
    if let Some(l) = a.iter().find(|l| b.contains(l)) {
        return Err(Error::ConfigInvalid(format!("label `{l}` on both sides")));
    }
    Ok(())
}

fn half_log_2pi<T: Real>() -> T {
    T::lit(0.5 * (2.0 * PI).ln())
}

/// Differential entropy `d/2·ln(2πe) + ½ln|Σ|`.
pub fn entropy<T: Real>(g: &GaussianDist<T>) -> Result<T> {
    let logdet = SymFactor::new(g.cov(), "entropy covariance")?.logdet();
    let d = T::from_count(g.dim());
    Ok(d * T::lit(0.5 * (2.0 * PI * E).ln()) + T::lit(0.5) * logdet)
}

/// `−E_p[ln q(x)]`.
pub fn cross_entropy<T: Real>(p: &GaussianDist<T>, q: &GaussianDist<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::dims("cross-entropy", q.dim(), p.dim()));
    }
    let fq = SymFactor::new(q.cov(), "cross-entropy reference covariance")?;
    let dm = p.mean() - q.mean();
    let tr = fq.solve(p.cov()).trace();
    let half = T::lit(0.5);
    Ok(T::from_count(p.dim()) * half_log_2pi::<T>() + half * fq.logdet() + half * fq.quad(&dm) + half * tr)
}

/// KL(p ‖ q).
pub fn kl_divergence<T: Real>(p: &GaussianDist<T>, q: &GaussianDist<T>) -> Result<T> {
    if p.dim() != q.dim() {
        return Err(Error::dims("KL divergence", q.dim(), p.dim()));
    }
    let fq = SymFactor::new(q.cov(), "KL reference covariance")?;
    let fp = SymFactor::new(p.cov(), "KL covariance")?;
    let dm = p.mean() - q.mean();
    let tr = fq.solve(p.cov()).trace();
    let d = T::from_count(p.dim());
    Ok(T::lit(0.5) * (fq.logdet() - fp.logdet() + fq.quad(&dm) + tr - d))
}

/// Log-density of `g` at `x`.
pub fn log_density<T: Real>(g: &GaussianDist<T>, x: &Vector<T>) -> Result<T> {
    check_len(x, g.dim(), "log-density point")?;
    let f = SymFactor::new(g.cov(), "density covariance")?;
    let dx = x - g.mean();
    let half = T::lit(0.5);
    Ok(-(T::from_count(g.dim()) * half_log_2pi::<T>() + half * f.logdet() + half * f.quad(&dx)))
}

/// Nats to bits.
pub fn to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}
