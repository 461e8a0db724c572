//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Mat<T> = DMatrix<T>;
pub type Vector<T> = DVector<T>;

/// `(M + Mᵀ) / 2`.
pub fn sym<T: Real>(m: &Mat<T>) -> Mat<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub fn max_abs<T: Real>(m: &Mat<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn max_abs_vec<T: Real>(v: &Vector<T>) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn asymmetry<T: Real>(m: &Mat<T>) -> T {
    max_abs(&(m - m.transpose()))
}

pub fn check_square<T: Real>(m: &Mat<T>, n: usize, context: &str) -> Result<()> {
    if m.nrows() != n {
        return Err(Error::dims(format!("{context} rows"), n, m.nrows()));
    }
    if m.ncols() != n {
        return Err(Error::dims(format!("{context} columns"), n, m.ncols()));
    }
    Ok(())
}

pub fn check_shape<T: Real>(m: &Mat<T>, rows: usize, cols: usize, context: &str) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::dims(format!("{context} rows"), rows, m.nrows()));
    }
    if m.ncols() != cols {
        return Err(Error::dims(format!("{context} columns"), cols, m.ncols()));
    }
    Ok(())
}

pub fn check_len<T: Real>(v: &Vector<T>, n: usize, context: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::dims(context, n, v.len()));
    }
    Ok(())
}

/// Symmetric test: `max|M − Mᵀ| ≤ 1e-12·max|M|`.
pub fn check_symmetric<T: Real>(m: &Mat<T>, context: &str) -> Result<()> {
    let asym = asymmetry(m);
    let scale = max_abs(m);
    if asym.as_f64() > 1e-12 * scale.as_f64() {
        return Err(Error::NotSymmetric {
            context: context.into(),
            asymmetry: asym.as_f64(),
        });
    }
    Ok(())
}

pub fn eigenvalues<T: Real>(m: &Mat<T>) -> Vector<T> {
    SymmetricEigen::new(sym(m)).eigenvalues
}

/// PSD test: smallest eigenvalue ≥ −tol·max(|largest|, floor).
///
/// `floor` lets callers pass an absolute scale so the all-zero matrix counts as PSD.
pub fn check_psd_scaled<T: Real>(m: &Mat<T>, rel_tol: f64, floor: f64, context: &str) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let ev = eigenvalues(m);
    let lo = ev.iter().fold(f64::INFINITY, |a, x| a.min(x.as_f64()));
    let hi = ev.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x.as_f64()));
    if !lo.is_finite() || lo < -rel_tol * hi.abs().max(floor) {
        return Err(Error::NotPositiveSemiDefinite {
            context: context.into(),
            min_eigenvalue: lo,
        });
    }
    Ok(())
}

pub fn check_psd<T: Real>(m: &Mat<T>, context: &str) -> Result<()> {
    check_psd_scaled(m, 1e-10, 0.0, context)
}

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// On failure, `1e-12·trace/d` is added to the diagonal and the factorization retried once.
#[derive(Debug, Clone)]
pub struct SymFactor<T: Real> {
    l: Mat<T>,
}

impl<T: Real> SymFactor<T> {
    pub fn new(m: &Mat<T>, context: &str) -> Result<Self> {
        let d = m.nrows();
        if d != m.ncols() {
            return Err(Error::dims(format!("{context} columns"), d, m.ncols()));
        }
        if m.iter().any(|x| !x.finite()) {
            return Err(Error::singular(context));
        }
        let s = sym(m);
        if let Some(ch) = s.clone().cholesky() {
            return Ok(Self { l: ch.l() });
        }
        let trace = s.trace();
        if trace <= T::zero() {
            return Err(Error::singular(context));
        }
        let jitter = T::lit(1e-12) * trace / T::from_count(d);
        let shifted = s + Mat::identity(d, d) * jitter;
        match shifted.cholesky() {
            Some(ch) => Ok(Self { l: ch.l() }),
            None => Err(Error::singular(context)),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &Mat<T> {
        &self.l
    }

    pub fn logdet(&self) -> T {
        let two = T::lit(2.0);
        self.l.diagonal().iter().fold(T::zero(), |acc, x| acc + two * x.ln())
    }

    pub fn solve(&self, b: &Mat<T>) -> Mat<T> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has nonzero diagonal");
        self.l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has nonzero diagonal")
    }

    pub fn solve_vec(&self, b: &Vector<T>) -> Vector<T> {
        let y = self
            .l
            .solve_lower_triangular(b)
            .expect("cholesky factor has nonzero diagonal");
        self.l
            .transpose()
            .solve_upper_triangular(&y)
            .expect("cholesky factor has nonzero diagonal")
    }

    pub fn inverse(&self) -> Mat<T> {
        let d = self.dim();
        sym(&self.solve(&Mat::identity(d, d)))
    }

    /// `xᵀ M⁻¹ x`.
    pub fn quad(&self, x: &Vector<T>) -> T {
        let y = self
            .l
            .solve_lower_triangular(x)
            .expect("cholesky factor has nonzero diagonal");
        y.dot(&y)
    }
}

pub fn inv_spd<T: Real>(m: &Mat<T>, context: &str) -> Result<Mat<T>> {
    Ok(SymFactor::new(m, context)?.inverse())
}

pub fn logdet_spd<T: Real>(m: &Mat<T>, context: &str) -> Result<T> {
    Ok(SymFactor::new(m, context)?.logdet())
}

/// Lower-triangular `C` with `CCᵀ = M` for a PSD (possibly singular) `M`.
///
/// Falls back to an eigen square root followed by an LQ step when plain Cholesky fails.
pub fn psd_cholesky<T: Real>(m: &Mat<T>, context: &str) -> Result<Mat<T>> {
    let d = m.nrows();
    if d != m.ncols() {
        return Err(Error::dims(format!("{context} columns"), d, m.ncols()));
    }
    let s = sym(m);
    if let Some(ch) = s.clone().cholesky() {
        return Ok(ch.l());
    }
    check_psd(&s, context)?;
    let eig = SymmetricEigen::new(s);
    let roots = eig.eigenvalues.map(|x| x.max(T::zero()).sqrt());
    let b = &eig.eigenvectors * Mat::from_diagonal(&roots);
    // B = CW with W orthogonal: QR of Bᵀ gives C = Rᵀ.
    let mut c = b.transpose().qr().r().transpose();
    for j in 0..d {
        if c[(j, j)] < T::zero() {
            for i in 0..d {
                c[(i, j)] = -c[(i, j)];
            }
        }
    }
    Ok(c)
}

/// Projection onto the PSD cone; eigenvalues below `cut` become exactly zero.
pub fn psd_project<T: Real>(m: &Mat<T>, cut: T) -> Mat<T> {
    let eig = SymmetricEigen::new(sym(m));
    let kept = eig.eigenvalues.map(|x| if x > cut { x } else { T::zero() });
    sym(&(&eig.eigenvectors * Mat::from_diagonal(&kept) * eig.eigenvectors.transpose()))
}

/// Eigen pseudo-inverse of a symmetric matrix; eigenvalues below `rel_tol·max|λ|` are dropped.
pub fn pinv_sym<T: Real>(m: &Mat<T>, rel_tol: f64) -> Mat<T> {
    let hi = eigenvalues(m).iter().fold(T::zero(), |a, x| a.max(x.abs()));
    pinv_sym_abs(m, T::lit(rel_tol) * hi)
}

/// Eigen pseudo-inverse dropping eigenvalues with magnitude at or below `cut`.
pub fn pinv_sym_abs<T: Real>(m: &Mat<T>, cut: T) -> Mat<T> {
    let eig = SymmetricEigen::new(sym(m));
    let inv = eig
        .eigenvalues
        .map(|x| if x.abs() > cut && x != T::zero() { T::one() / x } else { T::zero() });
    sym(&(&eig.eigenvectors * Mat::from_diagonal(&inv) * eig.eigenvectors.transpose()))
}

/// Sum of the logs of eigenvalues above `abs_tol`, with the count kept.
pub fn pseudo_logdet<T: Real>(m: &Mat<T>, abs_tol: f64) -> (T, usize) {
    let ev = eigenvalues(m);
    let mut acc = T::zero();
    let mut rank = 0;
    for x in ev.iter() {
        if x.as_f64() > abs_tol {
            acc += x.ln();
            rank += 1;
        }
    }
    (acc, rank)
}

/// Full row rank test for an n×m matrix: n ≤ m and `AAᵀ` well-conditioned.
pub fn has_full_row_rank<T: Real>(a: &Mat<T>) -> bool {
    let (n, m) = a.shape();
    if n > m || n == 0 {
        return false;
    }
    let g = a * a.transpose();
    let ev = eigenvalues(&g);
    let hi = ev.iter().fold(0.0f64, |acc, x| acc.max(x.as_f64()));
    let lo = ev.iter().fold(f64::INFINITY, |acc, x| acc.min(x.as_f64()));
    hi > 0.0 && lo > 1e-12 * hi
}

/// `Aᵀ(AAᵀ)⁻¹`.
pub fn right_pinv<T: Real>(a: &Mat<T>) -> Result<Mat<T>> {
    if !has_full_row_rank(a) {
        return Err(Error::NotFullRowRank);
    }
    let g = SymFactor::new(&(a * a.transpose()), "A Aᵀ")?;
    Ok(g.solve(a).transpose())
}

pub fn lower_triangle<T: Real>(m: &Mat<T>) -> Mat<T> {
    m.lower_triangle()
}

pub fn vec_from<T: Real>(xs: &[f64]) -> Vector<T> {
    Vector::from_iterator(xs.len(), xs.iter().map(|&x| T::lit(x)))
}

/// Row-major construction from `f64` literals.
pub fn mat_from<T: Real>(rows: usize, cols: usize, xs: &[f64]) -> Mat<T> {
    assert_eq!(xs.len(), rows * cols, "element count");
    Mat::from_row_iterator(rows, cols, xs.iter().map(|&x| T::lit(x)))
}

pub fn to_f64_mat<T: Real>(m: &Mat<T>) -> DMatrix<f64> {
    m.map(|x| x.as_f64())
}

pub fn to_f64_vec<T: Real>(v: &Vector<T>) -> DVector<f64> {
    v.map(|x| x.as_f64())
}
