//! Discrete Shannon measures, Blahut-Arimoto solvers on grids and information-plane diagnostics.
//!
//! Grids and channels are `f64` throughout: they are the numerical oracle side.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, FixedPointReport, Result};
use crate::model::{autoencoder_chain, chain_joint, DecoderParams, EncoderParams, LinearGaussianModel};
use crate::model::{THETA, Y, Y_TILDE, Z};
use crate::scalar::Real;

const NORM_TOL: f64 = 1e-12;
const LOG_FLOOR: f64 = 1e-300;

/// Probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist {
    probs: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(p.is_finite() && *p >= -1e-15)) {
            return Err(Error::NotNormalized { total: f64::NAN });
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { total });
        }
        Ok(Self {
            probs: probs.into_iter().map(|p| p.max(0.0)).collect(),
        })
    }

    /// Normalizes nonnegative weights.
    pub fn from_weights(w: &[f64]) -> Result<Self> {
        let total: f64 = w.iter().sum();
        if !(total > 0.0) || w.iter().any(|x| *x < 0.0) {
            return Err(Error::NotNormalized { total });
        }
        Self::new(w.iter().map(|x| x / total).collect())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn entropy(&self) -> f64 {
        -self.probs.iter().map(|&p| plogp(p)).sum::<f64>()
    }
}

/// Row-stochastic matrix of conditionals `p(z | y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChannel {
    matrix: DMatrix<f64>,
}

impl DiscreteChannel {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        for row in matrix.row_iter() {
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > 1e-9 || row.iter().any(|p| *p < -1e-15) {
                return Err(Error::NotNormalized { total });
            }
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Output marginal under input distribution `p`.
    pub fn output(&self, p: &DiscreteDist) -> Vec<f64> {
        let mut out = vec![0.0; self.matrix.ncols()];
        for (i, &pi) in p.probs().iter().enumerate() {
            for (z, o) in out.iter_mut().enumerate() {
                *o += pi * self.matrix[(i, z)];
            }
        }
        out
    }

    /// I(input; output) under input distribution `p`.
    pub fn mutual_information(&self, p: &DiscreteDist) -> f64 {
        let q = self.output(p);
        let mut acc = 0.0;
        for (i, &pi) in p.probs().iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            for (z, &qz) in q.iter().enumerate() {
                let c = self.matrix[(i, z)];
                if c > 0.0 {
                    acc += pi * c * (c / qz).ln();
                }
            }
        }
        acc
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Entropies and mutual information of a discrete joint, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteMeasures {
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub i_xy: f64,
}

impl DiscreteMeasures {
    /// H(X | Y).
    pub fn h_x_given_y(&self) -> f64 {
        self.h_xy - self.h_y
    }
}

/// Plug-in measures of a joint with rows indexed by x and columns by y.
pub fn discrete_measures(joint: &DMatrix<f64>) -> Result<DiscreteMeasures> {
    let total: f64 = joint.iter().sum();
    if joint.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { total });
    }
    let px: Vec<f64> = joint.row_iter().map(|r| r.sum()).collect();
    let py: Vec<f64> = joint.column_iter().map(|c| c.sum()).collect();
    let h_x = -px.iter().map(|&p| plogp(p)).sum::<f64>();
    let h_y = -py.iter().map(|&p| plogp(p)).sum::<f64>();
    let h_xy = -joint.iter().map(|&p| plogp(p)).sum::<f64>();
    let mut i_xy = 0.0;
    for i in 0..joint.nrows() {
        for j in 0..joint.ncols() {
            let p = joint[(i, j)];
            if p > 0.0 {
                i_xy += p * (p / (px[i] * py[j])).ln();
            }
        }
    }
    Ok(DiscreteMeasures { h_x, h_y, h_xy, i_xy })
}

/// Stopping rule of the Blahut-Arimoto loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaConfig {
    /// Max-abs change of the channel between sweeps.
    pub tol: f64,
    /// Relative change of the Lagrangian between sweeps.
    pub objective_tol: f64,
    pub max_iter: usize,
}

impl Default for BaConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            objective_tol: 1e-12,
            max_iter: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdSolution {
    pub channel: DiscreteChannel,
    pub rate: f64,
    pub distortion: f64,
    pub report: FixedPointReport,
}

/// Minimizes `I(Y; Z) + β·E[d(Y, Z)]` over channels.
///
/// `distortion` has one row per source symbol and one column per reproduction symbol.
pub fn ba_rate_distortion(
    source: &DiscreteDist,
    distortion: &DMatrix<f64>,
    beta: f64,
    config: &BaConfig,
) -> Result<RdSolution> {
    let (ny, nz) = distortion.shape();
    if ny != source.len() {
        return Err(Error::dims("distortion rows", source.len(), ny));
    }
    if nz == 0 {
        return Err(Error::dims("distortion columns", 1, 0));
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InfeasibleBeta {
            beta,
            reason: "beta must be positive".into(),
        });
    }
    if distortion.iter().any(|d| !d.is_finite()) {
        return Err(Error::ConfigInvalid("distortion matrix has non-finite entries".into()));
    }
    let p = source.probs();
    // Row-shifted kernel keeps exp() in range for large β.
    let mut kernel = DMatrix::zeros(ny, nz);
    for i in 0..ny {
        let lo = distortion.row(i).min();
        for z in 0..nz {
            kernel[(i, z)] = (-beta * (distortion[(i, z)] - lo)).exp();
        }
    }
    let mut q = vec![1.0 / nz as f64; nz];
    let mut channel = DMatrix::zeros(ny, nz);
    let mut prev_channel = DMatrix::from_element(ny, nz, f64::NAN);
    let mut prev_j = f64::NAN;
    let mut rate = 0.0;
    let mut dist = 0.0;
    let mut change = f64::INFINITY;
    for it in 1..=config.max_iter {
        for i in 0..ny {
            let mut total = 0.0;
            for z in 0..nz {
                let v = q[z] * kernel[(i, z)];
                channel[(i, z)] = v;
                total += v;
            }
            for z in 0..nz {
                channel[(i, z)] /= total;
            }
        }
        q.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..ny {
            for z in 0..nz {
                q[z] += p[i] * channel[(i, z)];
            }
        }
        rate = 0.0;
        dist = 0.0;
        for i in 0..ny {
            if p[i] <= 0.0 {
                continue;
            }
            for z in 0..nz {
                let c = channel[(i, z)];
                if c > 0.0 {
                    rate += p[i] * c * (c / q[z]).ln();
                    dist += p[i] * c * distortion[(i, z)];
                }
            }
        }
        let j = rate + beta * dist;
        change = (&channel - &prev_channel).amax();
        let dj = (j - prev_j).abs();
        prev_channel.copy_from(&channel);
        prev_j = j;
        if change <= config.tol || dj <= config.objective_tol * j.abs().max(1.0) {
            return Ok(RdSolution {
                channel: DiscreteChannel { matrix: channel },
                rate: rate.max(0.0),
                distortion: dist,
                report: FixedPointReport {
                    iterations: it,
                    residual: change,
                    converged: true,
                },
            });
        }
    }
    let _ = (rate, dist);
    Err(Error::NoConvergence {
        report: FixedPointReport {
            iterations: config.max_iter,
            residual: change,
            converged: false,
        },
    })
}

/// Uniform grid of `points` nodes over `center ± half_width`.
pub fn uniform_grid(center: f64, half_width: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2, "grid needs at least two points");
    let step = 2.0 * half_width / (points - 1) as f64;
    (0..points).map(|i| center - half_width + step * i as f64).collect()
}

/// Grid-normalized masses of N(mean, var) at the nodes.
pub fn gaussian_masses(grid: &[f64], mean: f64, var: f64) -> Result<DiscreteDist> {
    let w: Vec<f64> = grid
        .iter()
        .map(|x| (-(x - mean).powi(2) / (2.0 * var)).exp())
        .collect();
    DiscreteDist::from_weights(&w)
}

/// Discretized scalar rate-distortion problem with negative log-likelihood distortion.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRdGrid {
    pub y: Vec<f64>,
    pub w: Vec<f64>,
    pub source: DiscreteDist,
    pub distortion: DMatrix<f64>,
}

/// Source N(0, var_y), reproduction `w = Aθ` scored by `−ln N(y; w, s)`,
/// both grids spanning `±width_sd` standard deviations of y.
pub fn scalar_rd_grid(var_y: f64, s: f64, points: usize, width_sd: f64) -> Result<ScalarRdGrid> {
    if !(var_y > 0.0 && s > 0.0) {
        return Err(Error::singular("scalar rate-distortion grid"));
    }
    let half = width_sd * var_y.sqrt();
    let y = uniform_grid(0.0, half, points);
    let w = y.clone();
    let source = gaussian_masses(&y, 0.0, var_y)?;
    let c = 0.5 * (2.0 * std::f64::consts::PI * s).ln();
    let distortion = DMatrix::from_fn(points, points, |i, j| c + (y[i] - w[j]).powi(2) / (2.0 * s));
    Ok(ScalarRdGrid { y, w, source, distortion })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IbSolution {
    pub channel: DiscreteChannel,
    pub i_yz: f64,
    pub i_xz: f64,
    pub report: FixedPointReport,
}

/// Minimizes `I(Y; Z) − β·I(X; Z)` over channels `p(z | y)`.
///
/// `joint_yx` holds `p(y, x)` with rows indexed by the compressed variable y.
/// The bottleneck has one symbol per y and starts from a soft identity channel.
pub fn ba_information_bottleneck(joint_yx: &DMatrix<f64>, beta: f64, config: &BaConfig) -> Result<IbSolution> {
    let (ny, nx) = joint_yx.shape();
    let total: f64 = joint_yx.iter().sum();
    if joint_yx.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized { total });
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InfeasibleBeta {
            beta,
            reason: "beta must be positive".into(),
        });
    }
    let py: Vec<f64> = joint_yx.row_iter().map(|r| r.sum()).collect();
    let px: Vec<f64> = joint_yx.column_iter().map(|c| c.sum()).collect();
    let nz = ny;
    let p_x_given_y = DMatrix::from_fn(ny, nx, |i, j| if py[i] > 0.0 { joint_yx[(i, j)] / py[i] } else { 0.0 });
    let negent: Vec<f64> = p_x_given_y.row_iter().map(|r| r.iter().map(|&p| plogp(p)).sum()).collect();

    let mut channel = DMatrix::from_fn(ny, nz, |i, z| (-((i as f64 - z as f64).powi(2)) / 8.0).exp());
    for mut row in channel.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    let mut prev_channel = channel.clone();
    let mut prev_j = f64::NAN;
    let mut change = f64::INFINITY;
    for it in 1..=config.max_iter {
        let pz: Vec<f64> = (0..nz).map(|z| (0..ny).map(|i| py[i] * channel[(i, z)]).sum()).collect();
        let pxz = joint_yx.transpose() * &channel;
        let log_px_given_z = DMatrix::from_fn(nx, nz, |j, z| {
            let v = if pz[z] > 0.0 { pxz[(j, z)] / pz[z] } else { 0.0 };
            v.max(LOG_FLOOR).ln()
        });
        let cross = &p_x_given_y * &log_px_given_z;
        for i in 0..ny {
            let mut best = f64::NEG_INFINITY;
            for z in 0..nz {
                let kl = negent[i] - cross[(i, z)];
                let v = pz[z].max(LOG_FLOOR).ln() - beta * kl;
                channel[(i, z)] = v;
                best = best.max(v);
            }
            let mut s = 0.0;
            for z in 0..nz {
                let e = (channel[(i, z)] - best).exp();
                channel[(i, z)] = e;
                s += e;
            }
            for z in 0..nz {
                channel[(i, z)] /= s;
            }
        }
        let (i_yz, i_xz) = ib_pair(joint_yx, &py, &px, &channel);
        let j = i_yz - beta * i_xz;
        change = (&channel - &prev_channel).amax();
        let dj = (j - prev_j).abs();
        prev_channel.copy_from(&channel);
        prev_j = j;
        if change <= config.tol || dj <= config.objective_tol * j.abs().max(1.0) {
            return Ok(IbSolution {
                channel: DiscreteChannel { matrix: channel },
                i_yz,
                i_xz,
                report: FixedPointReport {
                    iterations: it,
                    residual: change,
                    converged: true,
                },
            });
        }
    }
    Err(Error::NoConvergence {
        report: FixedPointReport {
            iterations: config.max_iter,
            residual: change,
            converged: false,
        },
    })
}

fn ib_pair(joint_yx: &DMatrix<f64>, py: &[f64], px: &[f64], channel: &DMatrix<f64>) -> (f64, f64) {
    let (ny, nz) = channel.shape();
    let pz: Vec<f64> = (0..nz).map(|z| (0..ny).map(|i| py[i] * channel[(i, z)]).sum()).collect();
    let mut i_yz = 0.0;
    for i in 0..ny {
        for z in 0..nz {
            let c = channel[(i, z)];
            if c > 0.0 && py[i] > 0.0 {
                i_yz += py[i] * c * (c / pz[z]).ln();
            }
        }
    }
    let pxz = joint_yx.transpose() * channel;
    let mut i_xz = 0.0;
    for j in 0..px.len() {
        for z in 0..nz {
            let p = pxz[(j, z)];
            if p > 0.0 {
                i_xz += p * (p / (px[j] * pz[z])).ln();
            }
        }
    }
    (i_yz.max(0.0), i_xz.max(0.0))
}

/// Discretized `(Y, W)` joint for `W ~ N(0, var_w)`, `Y = W + N(0, noise)`.
///
/// Rows index the y-grid; both grids span `±width_sd` marginal standard deviations.
pub fn scalar_ib_joint(var_w: f64, noise: f64, points: usize, width_sd: f64) -> Result<DMatrix<f64>> {
    if !(var_w > 0.0 && noise > 0.0) {
        return Err(Error::singular("scalar bottleneck joint"));
    }
    let wg = uniform_grid(0.0, width_sd * var_w.sqrt(), points);
    let yg = uniform_grid(0.0, width_sd * (var_w + noise).sqrt(), points);
    let mut j = DMatrix::from_fn(points, points, |i, k| {
        let (y, w) = (yg[i], wg[k]);
        (-(w * w) / (2.0 * var_w) - (y - w).powi(2) / (2.0 * noise)).exp()
    });
    let total = j.sum();
    j /= total;
    Ok(j)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierPoint {
    pub beta: f64,
    pub i_yz: f64,
    pub i_xz: f64,
}

/// BA bottleneck at every β, in parallel; output keeps the input order.
pub fn ib_frontier(joint_yx: &DMatrix<f64>, betas: &[f64], config: &BaConfig) -> Result<Vec<FrontierPoint>> {
    betas
        .par_iter()
        .map(|&beta| {
            let s = ba_information_bottleneck(joint_yx, beta, config)?;
            Ok(FrontierPoint {
                beta,
                i_yz: s.i_yz,
                i_xz: s.i_xz,
            })
        })
        .collect()
}

/// Scalar Gaussian bottleneck curve `I(X;Z) = −½ ln(λ + (1 − λ) e^{−2 I(Y;Z)})`,
/// with `λ = Var(Y|X) / Var(Y)`.
pub fn gaussian_ib_curve(lambda: f64, i_yz: f64) -> f64 {
    -0.5 * (lambda + (1.0 - lambda) * (-2.0 * i_yz).exp()).ln()
}

/// `true` if no frontier point has both more `I(Y;Z)` and less `I(X;Z)` than `p`, beyond `tol`.
pub fn not_beyond_frontier(point: (f64, f64), frontier: &[FrontierPoint], tol: f64) -> bool {
    let (i_yz, i_tz) = point;
    !frontier
        .iter()
        .any(|f| f.i_yz - i_yz > tol && i_tz - f.i_xz > tol)
}

/// Information-plane coordinates of an encoder (and optional decoder), in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoPlanePoint {
    pub i_yz: f64,
    pub i_tz: f64,
    pub i_yy_tilde: Option<f64>,
    pub i_ty_tilde: Option<f64>,
    pub i_zy_tilde: Option<f64>,
    /// I(Θ; Y), the sufficiency line.
    pub sufficiency: f64,
    pub epoch: usize,
}

impl InfoPlanePoint {
    /// Largest violation of the data-processing inequalities along Θ → Y → Z → Ỹ.
    pub fn dpi_violation(&self) -> f64 {
        let mut v = self.i_tz - self.i_yz;
        if let (Some(yy), Some(ty), Some(zy)) = (self.i_yy_tilde, self.i_ty_tilde, self.i_zy_tilde) {
            v = v.max(ty - self.i_tz).max(yy - zy);
        }
        v
    }
}

pub fn info_plane_point<T: Real>(
    model: &LinearGaussianModel<T>,
    enc: &EncoderParams<T>,
    dec: Option<&DecoderParams<T>>,
    epoch: usize,
) -> Result<InfoPlanePoint> {
    let sufficiency = model.information()?.as_f64();
    let (i_yz, i_tz, tilde) = match dec {
        None => {
            let j = chain_joint(model, enc)?;
            (j.mutual_information(Y, Z)?, j.mutual_information(THETA, Z)?, None)
        }
        Some(d) => {
            let j = autoencoder_chain(model, enc, d)?;
            let t = (
                j.mutual_information(Y, Y_TILDE)?.as_f64(),
                j.mutual_information(THETA, Y_TILDE)?.as_f64(),
                j.mutual_information(Z, Y_TILDE)?.as_f64(),
            );
            (j.mutual_information(Y, Z)?, j.mutual_information(THETA, Z)?, Some(t))
        }
    };
    Ok(InfoPlanePoint {
        i_yz: i_yz.as_f64(),
        i_tz: i_tz.as_f64(),
        i_yy_tilde: tilde.map(|t| t.0),
        i_ty_tilde: tilde.map(|t| t.1),
        i_zy_tilde: tilde.map(|t| t.2),
        sufficiency,
        epoch,
    })
}

/// Minimal-sufficient-statistic corner `(I(Θ;Y), I(Θ;Y))`.
pub fn mss_point<T: Real>(model: &LinearGaussianModel<T>) -> Result<(f64, f64)> {
    let i = model.information()?.as_f64();
    Ok((i, i))
}
