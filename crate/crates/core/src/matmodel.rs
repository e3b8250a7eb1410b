//! Linear Gaussian state-space model, belief statistics, and the block
//! matrices that lift the model onto a sliding window of states.
//!
//! A window of `w` states is stored newest first:
//! `X_k = [x_k; x_{k-1}; ...; x_{k-w+1}]`, so block position 1 always holds
//! the most recent state.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const MODEL_TOL: f64 = 1e-12;
const BELIEF_TOL: f64 = 1e-9;

/// Time-invariant model
///
/// `x_{k+1} = A x_k + B u_k + w_k`, `w_k ~ N(0, Q)`
///
/// `y_k = C x_k + v_k`, `v_k ~ N(0, R)`, with `R` diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    r_diag: DVector<f64>,
}

impl StateSpaceModel {
    /// Validates dimensions, symmetry and semidefiniteness of `Q`, and strict
    /// diagonality and positivity of `R`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let nx = a.nrows();
        if nx == 0 || a.ncols() != nx {
            return Err(Error::dim("A", "square with n_state > 0", shape(&a)));
        }
        if b.nrows() != nx || b.ncols() == 0 {
            return Err(Error::dim("B", format!("{nx}x(n_input > 0)"), shape(&b)));
        }
        let ny = c.nrows();
        if ny == 0 || c.ncols() != nx {
            return Err(Error::dim("C", format!("(n_output > 0)x{nx}"), shape(&c)));
        }
        if q.nrows() != nx || q.ncols() != nx {
            return Err(Error::dim("Q", format!("{nx}x{nx}"), shape(&q)));
        }
        if r.nrows() != ny || r.ncols() != ny {
            return Err(Error::dim("R", format!("{ny}x{ny}"), shape(&r)));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("Q", &q), ("R", &r)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg(format!("{name} must contain only finite entries")));
            }
        }

        let q_norm = q.norm();
        if asymmetry(&q) > MODEL_TOL * q_norm {
            return Err(Error::arg("Q must be symmetric"));
        }
        if q_norm > 0.0 && min_eigenvalue(&q) < -MODEL_TOL * q_norm {
            return Err(Error::arg("Q must be positive semidefinite"));
        }

        for i in 0..ny {
            for j in 0..ny {
                if i != j && r[(i, j)] != 0.0 {
                    return Err(Error::arg("R must be strictly diagonal"));
                }
            }
            if r[(i, i)] <= 0.0 {
                return Err(Error::arg("R diagonal entries must be positive"));
            }
        }
        let r_diag = r.diagonal();

        Ok(Self { a, b, c, q, r, r_diag })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    /// Diagonal of `R`.
    pub fn r_diag(&self) -> &DVector<f64> {
        &self.r_diag
    }

    pub fn n_state(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_input(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_output(&self) -> usize {
        self.c.nrows()
    }

    /// The position-velocity benchmark system: double integrator driven by
    /// acceleration, both position and velocity observed.
    pub fn position_velocity() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.25, 0.5, 0.5, 1.0]) * 1e-4,
            DMatrix::identity(2, 2) * 1e-3,
        )
        .expect("benchmark model is valid")
    }
}

/// Mean and covariance of a normal belief.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Checked constructor: the covariance must be symmetric and PSD within
    /// `1e-9 * ||cov||`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::dim("covariance", format!("{n}x{n}"), shape(&cov)));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("belief statistics must be finite"));
        }
        let norm = cov.norm();
        if asymmetry(&cov) > BELIEF_TOL * norm {
            return Err(Error::arg("covariance must be symmetric"));
        }
        if n > 0 && norm > 0.0 && min_eigenvalue(&cov) < -BELIEF_TOL * norm {
            return Err(Error::arg("covariance must be positive semidefinite"));
        }
        Ok(Self { mean, cov })
    }

    /// Isotropic belief `N(mean, scale * I)`.
    pub fn isotropic(mean: DVector<f64>, scale: f64) -> Result<Self> {
        let n = mean.len();
        Self::new(mean, DMatrix::identity(n, n) * scale)
    }

    /// Skips validation except in debug builds.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        debug_assert!(is_valid_covariance(&cov, BELIEF_TOL), "covariance lost symmetry or PSD");
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Block `index` (1-based) of a windowed belief's mean.
    pub fn mean_block(&self, index: usize, block: usize) -> DVector<f64> {
        self.mean.rows((index - 1) * block, block).into_owned()
    }
}

/// Diagonal scale matrix and degrees of freedom of an inverse-Wishart factor.
#[derive(Debug, Clone, PartialEq)]
pub struct WishartStats {
    /// Diagonal entries of the scale matrix.
    pub sigma: DVector<f64>,
    pub nu: f64,
}

impl WishartStats {
    pub fn new(sigma: DVector<f64>, nu: f64) -> Result<Self> {
        if sigma.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::arg("Wishart scale diagonal must be finite and nonnegative"));
        }
        if !nu.is_finite() || nu < 0.0 {
            return Err(Error::arg("degrees of freedom must be finite and nonnegative"));
        }
        Ok(Self { sigma, nu })
    }

    /// Accepts a full matrix and rejects any off-diagonal content.
    pub fn from_matrix(sigma: &DMatrix<f64>, nu: f64) -> Result<Self> {
        if !sigma.is_square() {
            return Err(Error::dim("sigma0", "square", shape(sigma)));
        }
        let n = sigma.nrows();
        for i in 0..n {
            for j in 0..n {
                if i != j && sigma[(i, j)] != 0.0 {
                    return Err(Error::arg("sigma0 must be diagonal"));
                }
            }
        }
        Self::new(sigma.diagonal(), nu)
    }

    pub fn zeros(n: usize) -> Self {
        Self { sigma: DVector::zeros(n), nu: 0.0 }
    }
}

/// Windowed model matrices for one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedMatrices {
    /// Selector of the newest block, `ẙ x (w·x̊)`.
    pub selector: DMatrix<f64>,
    /// `((l+1)·x̊) x (w·x̊)`
    pub transition: DMatrix<f64>,
    /// `((l+1)·x̊) x ů`
    pub input: DMatrix<f64>,
    /// `((l+1)·x̊) x ((l+1)·x̊)`
    pub noise: DMatrix<f64>,
}

impl AugmentedMatrices {
    pub fn new(model: &StateSpaceModel, w: usize, l: usize) -> Result<Self> {
        let selector = build_output_selector(w, 1, model.c())?;
        let (transition, input, noise) = build_transition(w, l, model.a(), model.b(), model.q())?;
        Ok(Self { selector, transition, input, noise })
    }
}

/// Block row vector with `c` at block column `offset` (1-based) and zeros
/// elsewhere; applied to a window it picks `C x` of the state at that offset.
pub fn build_output_selector(w: usize, offset: usize, c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w == 0 || offset == 0 || offset > w {
        return Err(Error::arg(format!("selector offset {offset} outside 1..={w}")));
    }
    let (ny, nx) = c.shape();
    let mut out = DMatrix::zeros(ny, w * nx);
    out.view_mut((0, (offset - 1) * nx), (ny, nx)).copy_from(c);
    Ok(out)
}

/// Windowed transition, input and noise matrices.
///
/// With `l = w - 1` the oldest block is dropped (the window is full); with
/// `l = w` the window grows by one block.
pub fn build_transition(
    w: usize,
    l: usize,
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    if w == 0 || !(l + 1 == w || l == w) {
        return Err(Error::arg(format!("carried block count l={l} inconsistent with window w={w}")));
    }
    let nx = a.nrows();
    if a.ncols() != nx || b.nrows() != nx || q.shape() != (nx, nx) {
        return Err(Error::dim("transition blocks", format!("A, B, Q with {nx} rows"), shape(a)));
    }
    let rows = (l + 1) * nx;

    let mut transition = DMatrix::zeros(rows, w * nx);
    transition.view_mut((0, 0), (nx, nx)).copy_from(a);
    for i in 0..l {
        transition.view_mut(((i + 1) * nx, i * nx), (nx, nx)).fill_with_identity();
    }

    let mut input = DMatrix::zeros(rows, b.ncols());
    input.view_mut((0, 0), (nx, b.ncols())).copy_from(b);

    let mut noise = DMatrix::zeros(rows, rows);
    noise.view_mut((0, 0), (nx, nx)).copy_from(q);

    Ok((transition, input, noise))
}

/// Replaces `p` by `(p + p') / 2`.
pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = avg;
            p[(j, i)] = avg;
        }
    }
}

/// Largest absolute difference between `m` and its transpose.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    if !m.is_square() {
        return f64::INFINITY;
    }
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Symmetric and PSD within `tol * ||p||`.
pub fn is_valid_covariance(p: &DMatrix<f64>, tol: f64) -> bool {
    if !p.is_square() || p.iter().any(|v| !v.is_finite()) {
        return false;
    }
    if p.nrows() == 0 {
        return true;
    }
    let norm = p.norm();
    asymmetry(p) <= tol * norm && min_eigenvalue(p) >= -tol * norm
}

fn shape(m: &DMatrix<f64>) -> String {
    format!("{}x{}", m.nrows(), m.ncols())
}
