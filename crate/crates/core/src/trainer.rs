//! Minibatch training of encoders (and decoders) on one-sample reparameterized losses.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::elbo::{breakdown_with_data, LossBreakdown, Problem};
use crate::error::{Error, Result};
use crate::gaussian::GaussianDist;
use crate::info::{info_plane_point, InfoPlanePoint};
use crate::linalg::{check_len, check_shape, psd_cholesky, sym, Mat, SymFactor, Vector};
use crate::model::{DecoderParams, EncoderParams, LinearGaussianModel};
use crate::scalar::Real;

/// Observations `y` (one per row) and, for generated data, the latent draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T: Real> {
    pub y: Mat<T>,
    pub theta: Option<Mat<T>>,
    pub seed: u64,
}

impl<T: Real> SampleSet<T> {
    pub fn new(y: Mat<T>, theta: Option<Mat<T>>, seed: u64) -> Result<Self> {
        if y.nrows() == 0 {
            return Err(Error::ConfigInvalid("dataset is empty".into()));
        }
        if let Some(t) = &theta {
            if t.nrows() != y.nrows() {
                return Err(Error::dims("latent sample count", y.nrows(), t.nrows()));
            }
        }
        Ok(Self { y, theta, seed })
    }

    pub fn len(&self) -> usize {
        self.y.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.y.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.y.ncols()
    }

    pub fn row(&self, i: usize) -> Vector<T> {
        self.y.row(i).transpose()
    }

    /// Sample mean and biased sample covariance as a Gaussian.
    pub fn empirical(&self) -> GaussianDist<T> {
        moments_of_rows(&self.y, &(0..self.len()).collect::<Vec<_>>())
    }
}

fn moments_of_rows<T: Real>(y: &Mat<T>, idx: &[usize]) -> GaussianDist<T> {
    let n = y.ncols();
    let k = T::from_count(idx.len());
    let mut mean = Vector::zeros(n);
    for &i in idx {
        mean += y.row(i).transpose();
    }
    mean /= k;
    let mut cov = Mat::zeros(n, n);
    for &i in idx {
        let d = y.row(i).transpose() - &mean;
        cov += &d * d.transpose();
    }
    cov /= k;
    GaussianDist::from_parts(mean, cov)
}

fn normal_vec<T: Real>(rng: &mut ChaCha8Rng, d: usize) -> Vector<T> {
    Vector::from_iterator(d, (0..d).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))))
}

/// Draws θ ~ prior and y ~ N(Aθ, S), deterministically in `seed`.
pub fn generate_dataset<T: Real>(model: &LinearGaussianModel<T>, count: usize, seed: u64) -> Result<SampleSet<T>> {
    if count == 0 {
        return Err(Error::ConfigInvalid("sample count must be positive".into()));
    }
    let (n, m) = (model.n(), model.m());
    let lp = psd_cholesky(model.prior().cov(), "prior covariance")?;
    let ls = psd_cholesky(model.s(), "likelihood covariance S")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = Mat::zeros(count, m);
    let mut y = Mat::zeros(count, n);
    for i in 0..count {
        let t = model.prior().mean() + &lp * normal_vec::<T>(&mut rng, m);
        let obs = model.a() * &t + &ls * normal_vec::<T>(&mut rng, n);
        theta.row_mut(i).copy_from(&t.transpose());
        y.row_mut(i).copy_from(&obs.transpose());
    }
    SampleSet::new(y, Some(theta), seed)
}

/// `Ry + b + Cε`.
pub fn reparam_sample<T: Real>(enc: &EncoderParams<T>, y: &Vector<T>, eps: &Vector<T>) -> Result<Vector<T>> {
    check_len(y, enc.n(), "observation")?;
    check_len(eps, enc.m(), "noise draw")?;
    Ok(enc.posterior_mean(y) + &enc.c * eps)
}

/// Gradient of a sampled batch loss in the `(R, b, C, A_ψ, S_ψ)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGradient<T: Real> {
    pub dr: Mat<T>,
    pub db: Vector<T>,
    /// Lower-triangular.
    pub dc: Mat<T>,
    pub da_dec: Option<Mat<T>>,
    /// Symmetric, with `S_ψ` treated as a free symmetric matrix.
    pub ds_dec: Option<Mat<T>>,
}

/// Mean one-sample `(L*_rec, L*_reg)` over a batch.
///
/// `y` and `eps` hold one row per batch element.
pub fn sampled_losses<T: Real>(
    problem: &Problem<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
    y: &Mat<T>,
    eps: &Mat<T>,
) -> Result<(T, T)> {
    let (l, _) = evaluate(problem, enc, dec, y, eps, false)?;
    Ok(l)
}

/// Batch losses and the exact gradient of their (objective-weighted) sum.
pub fn sampled_gradient<T: Real>(
    problem: &Problem<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
    y: &Mat<T>,
    eps: &Mat<T>,
) -> Result<((T, T), SampledGradient<T>)> {
    let (l, g) = evaluate(problem, enc, dec, y, eps, true)?;
    Ok((l, g.expect("gradient requested")))
}

fn rec_weight<T: Real>(problem: &Problem<T>) -> T {
    match problem {
        Problem::BetaVes { beta, .. } => *beta,
        _ => T::one(),
    }
}

/// Sampled `(ℓ_rec, ℓ_reg)` batch means and, on request, their gradient.
type BatchEval<T> = ((T, T), Option<SampledGradient<T>>);

fn evaluate<T: Real>(
    problem: &Problem<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
    y: &Mat<T>,
    eps: &Mat<T>,
    want_grad: bool,
) -> Result<BatchEval<T>> {
    let batch = y.nrows();
    if batch == 0 {
        return Err(Error::ConfigInvalid("empty batch".into()));
    }
    let (n, m) = (enc.n(), enc.m());
    check_shape(y, batch, n, "batch observations")?;
    check_shape(eps, batch, m, "batch noise draws")?;
    let (a, s) = problem.likelihood(dec)?;
    check_shape(a, n, m, "likelihood matrix")?;
    let fs = SymFactor::new(s, "likelihood covariance")?;
    let sinv = fs.inverse();
    let half = T::lit(0.5);
    let rec_const = T::from_count(n) * T::lit(0.5 * (2.0 * PI).ln()) + half * fs.logdet();
    let logdet_q = enc
        .c
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, x| acc + T::lit(2.0) * x.abs().ln());
    let wrec = rec_weight(problem);

    enum Reg<T: Real> {
        Prior { mean: Vector<T>, inv: Mat<T>, logdet: T },
        Aggregated { ybar: Vector<T>, sigma_hat: Mat<T>, pinv: Mat<T>, logdet: T },
    }
    let reg = match problem {
        Problem::Vei(model) => prior_reg(model.prior())?,
        Problem::Vaei { prior } => prior_reg(prior)?,
        Problem::Ves { .. } | Problem::BetaVes { .. } | Problem::Vaes => {
            let idx: Vec<usize> = (0..batch).collect();
            let emp = moments_of_rows(y, &idx);
            let p = sym(&(&enc.r * emp.cov() * enc.r.transpose() + &enc.q));
            let fp = SymFactor::new(&p, "batch aggregated posterior covariance")?;
            Reg::Aggregated {
                ybar: emp.mean().clone(),
                sigma_hat: emp.cov().clone(),
                pinv: fp.inverse(),
                logdet: fp.logdet(),
            }
        }
    };
    fn prior_reg<T: Real>(prior: &GaussianDist<T>) -> Result<Reg<T>> {
        let f = SymFactor::new(prior.cov(), "prior covariance")?;
        Ok(Reg::Prior {
            mean: prior.mean().clone(),
            inv: f.inverse(),
            logdet: f.logdet(),
        })
    }

    let mut rec_sum = T::zero();
    let mut reg_sum = T::zero();
    let mut dr = Mat::zeros(m, n);
    let mut db = Vector::zeros(m);
    let mut dc = Mat::zeros(m, m);
    let mut da = Mat::zeros(n, m);
    let mut uu = Mat::zeros(n, n);
    let mut vv = Mat::zeros(m, m);
    for i in 0..batch {
        let yi = y.row(i).transpose();
        let ei = eps.row(i).transpose();
        let theta = enc.posterior_mean(&yi) + &enc.c * &ei;
        let resid = a * &theta - &yi;
        let u = &sinv * &resid;
        rec_sum += rec_const + half * resid.dot(&u);
        let ee = ei.dot(&ei);
        let mut g_theta = a.transpose() * &u * wrec;
        match &reg {
            Reg::Prior { mean, inv, logdet } => {
                let diff = &theta - mean;
                let w = inv * &diff;
                reg_sum += half * (*logdet - logdet_q + diff.dot(&w) - ee);
                g_theta += w;
            }
            Reg::Aggregated { ybar, pinv, logdet, .. } => {
                let yc = &yi - ybar;
                let d = &enc.r * &yc + &enc.c * &ei;
                let v = pinv * &d;
                reg_sum += half * (*logdet - logdet_q + d.dot(&v) - ee);
                if want_grad {
                    dr += &v * yc.transpose();
                    dc += &v * ei.transpose();
                    vv += &v * v.transpose();
                }
            }
        }
        if want_grad {
            dr += &g_theta * yi.transpose();
            db += &g_theta;
            dc += &g_theta * ei.transpose();
            da += &u * theta.transpose();
            uu += &u * u.transpose();
        }
    }
    let k = T::from_count(batch);
    let losses = (rec_sum / k, reg_sum / k);
    if !want_grad {
        return Ok((losses, None));
    }
    dr /= k;
    db /= k;
    dc /= k;
    for j in 0..m {
        dc[(j, j)] -= T::one() / enc.c[(j, j)];
    }
    if let Reg::Aggregated { sigma_hat, pinv, .. } = &reg {
        let gp = (pinv - &vv / k) * half;
        dr += &gp * &enc.r * sigma_hat * T::lit(2.0);
        dc += &gp * &enc.c * T::lit(2.0);
    }
    let dc = dc.lower_triangle();
    let (da_dec, ds_dec) = if problem.has_decoder() {
        let da = da / k * wrec;
        let ds = (&sinv - uu / k) * half * wrec;
        (Some(da), Some(sym(&ds)))
    } else {
        (None, None)
    };
    Ok((losses, Some(SampledGradient { dr, db, dc, da_dec, ds_dec })))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// Zero is accepted and leaves the parameters untouched.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 500,
            optimizer: Optimizer::Adam,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self, samples: usize) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::ConfigInvalid("trainer.lr must be a finite non-negative number".into()));
        }
        if self.batch_size == 0 || self.batch_size > samples {
            return Err(Error::ConfigInvalid(format!(
                "trainer.batch_size must lie in 1..={samples}, found {}",
                self.batch_size
            )));
        }
        if self.epochs == 0 {
            return Err(Error::ConfigInvalid("trainer.epochs must be positive".into()));
        }
        let (b1, b2) = self.adam_betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::ConfigInvalid("trainer.adam_betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::ConfigInvalid("trainer.adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// Starting point of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainInit<T: Real> {
    pub enc: EncoderParams<T>,
    pub dec: Option<DecoderParams<T>>,
}

impl<T: Real> TrainInit<T> {
    /// `R = 0`, `b = 0`, `Q = I` and, for autoencoders, `A_ψ = 0`, `S_ψ = I`.
    pub fn standard(n: usize, m: usize, with_decoder: bool) -> Self {
        let enc = EncoderParams::from_factor(Mat::zeros(m, n), Vector::zeros(m), Mat::identity(m, m))
            .expect("identity factor");
        let dec = with_decoder.then(|| DecoderParams {
            a: Mat::zeros(n, m),
            s: Mat::identity(n, n),
        });
        Self { enc, dec }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord<T: Real> {
    pub epoch: usize,
    pub l_rec_sampled: T,
    pub l_reg_sampled: T,
    pub exact: LossBreakdown<T>,
    pub info: Option<InfoPlanePoint>,
    pub enc: EncoderParams<T>,
    pub dec: Option<DecoderParams<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace<T: Real> {
    pub records: Vec<EpochRecord<T>>,
}

impl<T: Real> TrainTrace<T> {
    pub fn last(&self) -> &EpochRecord<T> {
        self.records.last().expect("at least one epoch")
    }
}

/// Unconstrained coordinates: `C = diag(exp σ)·L` with `L` a correlation Cholesky factor
/// built from canonical partial correlations `tanh(raw)`; `S_ψ = L_S L_Sᵀ` with `exp` diagonal.
#[derive(Debug, Clone)]
struct Params<T: Real> {
    r: Mat<T>,
    b: Vector<T>,
    log_sigma: Vector<T>,
    cpc: Mat<T>,
    a_dec: Option<Mat<T>>,
    s_raw: Option<Mat<T>>,
}

impl<T: Real> Params<T> {
    fn from_init(init: &TrainInit<T>) -> Result<Self> {
        let enc = &init.enc;
        let m = enc.m();
        let mut log_sigma = Vector::zeros(m);
        let mut cpc = Mat::zeros(m, m);
        // CCᵀ = Q is all that matters; refactor Q canonically.
        let chol = SymFactor::new(&enc.q, "initial encoder covariance")
            .map_err(|_| Error::ConfigInvalid("initial encoder covariance must be positive definite".into()))?;
        let l = chol.l();
        let bound = T::lit(1.0 - 1e-12);
        for i in 0..m {
            let norm = (0..=i).fold(T::zero(), |acc, j| acc + l[(i, j)] * l[(i, j)]).sqrt();
            log_sigma[i] = norm.ln();
            let mut w = T::one();
            for j in 0..i {
                let z = (l[(i, j)] / norm / w).max(-bound).min(bound);
                cpc[(i, j)] = atanh(z);
                w *= (T::one() - z * z).sqrt();
            }
        }
        let s_raw = match &init.dec {
            Some(d) => {
                let f = SymFactor::new(&d.s, "initial decoder covariance")
                    .map_err(|_| Error::ConfigInvalid("initial decoder covariance must be positive definite".into()))?;
                let mut raw = f.l().clone();
                for i in 0..raw.nrows() {
                    raw[(i, i)] = raw[(i, i)].ln();
                }
                Some(raw)
            }
            None => None,
        };
        Ok(Self {
            r: enc.r.clone(),
            b: enc.b.clone(),
            log_sigma,
            cpc,
            a_dec: init.dec.as_ref().map(|d| d.a.clone()),
            s_raw,
        })
    }

    fn correlation_factor(&self) -> Mat<T> {
        let m = self.log_sigma.len();
        let mut l = Mat::zeros(m, m);
        for i in 0..m {
            let mut w = T::one();
            for j in 0..i {
                let x = self.cpc[(i, j)];
                l[(i, j)] = x.tanh() * w;
                w *= sech(x);
            }
            l[(i, i)] = w;
        }
        l
    }

    fn factor(&self) -> Mat<T> {
        let mut c = self.correlation_factor();
        for i in 0..c.nrows() {
            let s = self.log_sigma[i].exp();
            for j in 0..=i {
                c[(i, j)] *= s;
            }
        }
        c
    }

    fn s_factor(&self) -> Option<Mat<T>> {
        self.s_raw.as_ref().map(|raw| {
            let mut l = raw.lower_triangle();
            for i in 0..l.nrows() {
                l[(i, i)] = raw[(i, i)].exp();
            }
            l
        })
    }

    fn encoder(&self) -> EncoderParams<T> {
        EncoderParams::from_factor(self.r.clone(), self.b.clone(), self.factor()).expect("shapes fixed at init")
    }

    fn decoder(&self) -> Option<DecoderParams<T>> {
        let l = self.s_factor()?;
        Some(DecoderParams {
            a: self.a_dec.clone().expect("decoder present with S"),
            s: sym(&(&l * l.transpose())),
        })
    }

    /// Chains a sampled gradient to the unconstrained coordinates.
    fn pullback(&self, g: &SampledGradient<T>) -> Params<T> {
        let m = self.log_sigma.len();
        let l = self.correlation_factor();
        let mut d_sigma = Vector::zeros(m);
        let mut d_cpc = Mat::zeros(m, m);
        for i in 0..m {
            let s = self.log_sigma[i].exp();
            let mut gl = vec![T::zero(); i + 1];
            for j in 0..=i {
                d_sigma[i] += g.dc[(i, j)] * l[(i, j)] * s;
                gl[j] = g.dc[(i, j)] * s;
            }
            // Running products w_k of sech along the row.
            let mut w = T::one();
            for k in 0..i {
                let x = self.cpc[(i, k)];
                let sh = sech(x);
                let th = x.tanh();
                let tail = ((k + 1)..=i).fold(T::zero(), |acc, j| acc + gl[j] * l[(i, j)]);
                d_cpc[(i, k)] = gl[k] * sh * sh * w - th * tail;
                w *= sh;
            }
        }
        let (d_a, d_s) = match (&g.da_dec, &g.ds_dec, self.s_factor()) {
            (Some(da), Some(ds), Some(ls)) => {
                let mut dl = (ds * &ls * T::lit(2.0)).lower_triangle();
                for i in 0..dl.nrows() {
                    dl[(i, i)] *= ls[(i, i)];
                }
                (Some(da.clone()), Some(dl))
            }
            _ => (None, None),
        };
        Params {
            r: g.dr.clone(),
            b: g.db.clone(),
            log_sigma: d_sigma,
            cpc: d_cpc,
            a_dec: d_a,
            s_raw: d_s,
        }
    }

    fn flatten(&self) -> Vec<T> {
        let mut out: Vec<T> = self.r.iter().copied().collect();
        out.extend(self.b.iter().copied());
        out.extend(self.log_sigma.iter().copied());
        let m = self.log_sigma.len();
        for i in 0..m {
            for j in 0..i {
                out.push(self.cpc[(i, j)]);
            }
        }
        if let Some(a) = &self.a_dec {
            out.extend(a.iter().copied());
        }
        if let Some(s) = &self.s_raw {
            for i in 0..s.nrows() {
                for j in 0..=i {
                    out.push(s[(i, j)]);
                }
            }
        }
        out
    }

    fn assign(&mut self, v: &[T]) {
        let mut it = v.iter().copied();
        for x in self.r.iter_mut() {
            *x = it.next().expect("length");
        }
        for x in self.b.iter_mut() {
            *x = it.next().expect("length");
        }
        for x in self.log_sigma.iter_mut() {
            *x = it.next().expect("length");
        }
        let m = self.log_sigma.len();
        for i in 0..m {
            for j in 0..i {
                self.cpc[(i, j)] = it.next().expect("length");
            }
        }
        if let Some(a) = &mut self.a_dec {
            for x in a.iter_mut() {
                *x = it.next().expect("length");
            }
        }
        if let Some(s) = &mut self.s_raw {
            for i in 0..s.nrows() {
                for j in 0..=i {
                    s[(i, j)] = it.next().expect("length");
                }
            }
        }
    }
}

fn sech<T: Real>(x: T) -> T {
    T::one() / x.cosh()
}

fn atanh<T: Real>(z: T) -> T {
    T::lit(0.5) * ((T::one() + z) / (T::one() - z)).ln()
}

struct Stepper<T: Real> {
    kind: Optimizer,
    lr: T,
    b1: T,
    b2: T,
    eps: T,
    t: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> Stepper<T> {
    fn new(config: &TrainerConfig, len: usize) -> Self {
        Self {
            kind: config.optimizer,
            lr: T::lit(config.learning_rate),
            b1: T::lit(config.adam_betas.0),
            b2: T::lit(config.adam_betas.1),
            eps: T::lit(config.adam_eps),
            t: 0,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
        }
    }

    fn step(&mut self, x: &mut [T], g: &[T]) {
        match self.kind {
            Optimizer::Sgd => {
                for (xi, gi) in x.iter_mut().zip(g) {
                    *xi -= self.lr * *gi;
                }
            }
            Optimizer::Adam => {
                self.t += 1;
                let one = T::one();
                let c1 = one - self.b1.powi(self.t);
                let c2 = one - self.b2.powi(self.t);
                for i in 0..x.len() {
                    self.m[i] = self.b1 * self.m[i] + (one - self.b1) * g[i];
                    self.v[i] = self.b2 * self.v[i] + (one - self.b2) * g[i] * g[i];
                    let mh = self.m[i] / c1;
                    let vh = self.v[i] / c2;
                    x[i] -= self.lr * mh / (vh.sqrt() + self.eps);
                }
            }
        }
    }
}

const DIVERGENCE_LIMIT: f64 = 1e6;

/// Likelihood model the exact budget of each epoch is scored against.
/// Model whose budget terms describe `problem` at `(enc, dec)`; search problems use the aggregated posterior as prior.
pub fn scoring_model<T: Real>(
    problem: &Problem<T>,
    data: &GaussianDist<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
) -> Result<LinearGaussianModel<T>> {
    match problem {
        Problem::Vei(m) => Ok(m.clone()),
        Problem::Ves { a, s } | Problem::BetaVes { a, s, .. } => {
            LinearGaussianModel::new(a.clone(), s.clone(), enc.aggregated(data)?)
        }
        Problem::Vaei { prior } => {
            let (a, s) = problem.likelihood(dec)?;
            LinearGaussianModel::new(a.clone(), s.clone(), prior.clone())
        }
        Problem::Vaes => {
            let (a, s) = problem.likelihood(dec)?;
            LinearGaussianModel::new(a.clone(), s.clone(), enc.aggregated(data)?)
        }
    }
}

/// Runs `epochs × ⌈N / batch⌉` optimizer steps and records one [`EpochRecord`] per epoch.
///
/// Exact losses use the data marginal of `truth` when given, else the empirical Gaussian of
/// the dataset. Information-plane points need `truth`.
pub fn train<T: Real>(
    problem: &Problem<T>,
    data: &SampleSet<T>,
    truth: Option<&LinearGaussianModel<T>>,
    config: &TrainerConfig,
    init: &TrainInit<T>,
) -> Result<TrainTrace<T>> {
    config.validate(data.len())?;
    let (n, m) = (data.dim(), init.enc.m());
    init.enc.check_data(n)?;
    if problem.has_decoder() != init.dec.is_some() {
        return Err(Error::ConfigInvalid(format!(
            "{} {} decoder initialization",
            problem.name(),
            if problem.has_decoder() { "needs a" } else { "takes no" }
        )));
    }
    if let Some(d) = &init.dec {
        check_shape(&d.a, n, m, "initial decoder matrix")?;
    }
    if let Some(t) = truth {
        if t.n() != n {
            return Err(Error::dims("reference model observation dimension", n, t.n()));
        }
    }
    let exact_data = match truth {
        Some(t) => t.data_marginal(),
        None => data.empirical(),
    };

    let mut params = Params::from_init(init)?;
    let mut x = params.flatten();
    let mut opt = Stepper::new(config, x.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut records = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut rec_acc = 0.0;
        let mut reg_acc = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let y = Mat::from_fn(chunk.len(), n, |i, j| data.y[(chunk[i], j)]);
            let eps = Mat::from_fn(chunk.len(), m, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
            let enc = params.encoder();
            let dec = params.decoder();
            let ((rec, reg), g) = sampled_gradient(problem, &enc, dec.as_ref(), &y, &eps)?;
            let w = chunk.len() as f64;
            rec_acc += rec.as_f64() * w;
            reg_acc += reg.as_f64() * w;
            let loss = rec.as_f64() + reg.as_f64();
            if !loss.is_finite() {
                return Err(Error::DivergenceDetected { epoch, loss });
            }
            let gx = params.pullback(&g).flatten();
            if gx.iter().any(|v| !v.finite()) {
                return Err(Error::DivergenceDetected { epoch, loss: f64::NAN });
            }
            opt.step(&mut x, &gx);
            params.assign(&x);
        }
        let count = data.len() as f64;
        let (l_rec_s, l_reg_s) = (rec_acc / count, reg_acc / count);
        let total = l_rec_s + l_reg_s;
        if !total.is_finite() || total.abs() > DIVERGENCE_LIMIT {
            return Err(Error::DivergenceDetected { epoch, loss: total });
        }
        let enc = params.encoder();
        let dec = params.decoder();
        let scoring = scoring_model(problem, &exact_data, &enc, dec.as_ref())
            .map_err(|_| Error::DivergenceDetected { epoch, loss: total })?;
        let exact = breakdown_with_data(&exact_data, &scoring, &enc)
            .map_err(|_| Error::DivergenceDetected { epoch, loss: total })?;
        let info = match truth {
            Some(t) => Some(info_plane_point(t, &enc, dec.as_ref(), epoch)?),
            None => None,
        };
        records.push(EpochRecord {
            epoch,
            l_rec_sampled: T::lit(l_rec_s),
            l_reg_sampled: T::lit(l_reg_s),
            exact,
            info,
            enc,
            dec,
        });
    }
    Ok(TrainTrace { records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_from, max_abs};

    #[test]
    fn cpc_roundtrip() {
        let q = mat_from::<f64>(3, 3, &[2.0, 0.3, -0.4, 0.3, 1.0, 0.2, -0.4, 0.2, 0.5]);
        let enc = EncoderParams::from_cov(Mat::zeros(3, 1), Vector::zeros(3), q.clone()).unwrap();
        let p = Params::from_init(&TrainInit { enc, dec: None }).unwrap();
        let c = p.factor();
        assert!(max_abs(&(&c * c.transpose() - q)) < 1e-12);
    }

    #[test]
    fn two_dim_factor_matches_sigma_rho_form() {
        let (s1, s2, rho) = (0.7f64, 1.3f64, -0.4f64);
        let mut p = Params::<f64> {
            r: Mat::zeros(2, 1),
            b: Vector::zeros(2),
            log_sigma: Vector::from_vec(vec![s1.ln(), s2.ln()]),
            cpc: Mat::zeros(2, 2),
            a_dec: None,
            s_raw: None,
        };
        p.cpc[(1, 0)] = atanh(rho);
        let q = p.encoder().q;
        assert!((q[(0, 0)] - s1 * s1).abs() < 1e-14);
        assert!((q[(1, 0)] - rho * s1 * s2).abs() < 1e-14);
        assert!((q[(1, 1)] - s2 * s2).abs() < 1e-14);
    }

    #[test]
    fn flatten_assign_roundtrip() {
        let init = TrainInit::<f64>::standard(2, 3, true);
        let mut p = Params::from_init(&init).unwrap();
        let mut v = p.flatten();
        for (i, x) in v.iter_mut().enumerate() {
            *x = i as f64 * 0.01;
        }
        p.assign(&v);
        assert_eq!(p.flatten(), v);
    }
}
