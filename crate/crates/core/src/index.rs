//! Robbin-Salamon and Conley-Zehnder indices of paths of symplectic
//! matrices, computed numerically from crossings of the Maslov cycle.
//!
//! The engine detects crossing times from the smallest singular value of
//! `Phi(t) - Id`, refines them by golden-section search, and evaluates the
//! crossing form `Gamma_t(v, w) = omega(Phi'(t) Phi(t)^{-1} v, w)` on the
//! kernel. Directions fixed by the whole path (shear lines, identity blocks)
//! carry an identically vanishing crossing form; they are split off by a
//! symplectic reduction before crossings are counted, which realizes the
//! vanishing axiom and keeps direct sums with degenerate blocks additive.
//!
//! Sign conventions: `omega(u, v) = u^T J0 v` with `J0` the block-diagonal
//! matrix of `[[0, -1], [1, 0]]`, under which the crossing form of the
//! rotation path `e^{J0 theta t}` is `theta <v, w>` and
//! `RS(e^{J0 theta t}, t in [0, 1]) = 1` for `0 < theta < 2 pi`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::certified::CertifiedError;
use crate::spectrum::{Ellipsoid, OrbitLabel};

#[derive(Debug, Clone, thiserror::Error)]
pub enum IndexError {
    #[error("matrix at t = {t} is not symplectic (defect {defect:.3e})")]
    NonSymplectic { t: f64, defect: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("concatenation endpoints differ by {defect:.3e}")]
    ConcatMismatch { defect: f64 },
    #[error("t = {t} is not a crossing")]
    NotACrossing { t: f64 },
    #[error("degenerate crossing at t = {t}")]
    DegenerateCrossing { t: f64 },
    #[error("crossings at t = {t1} and t = {t2} cannot be separated")]
    UnresolvedCrossing { t1: f64, t2: f64 },
    #[error("endpoint of the path is degenerate")]
    DegenerateEndpoint,
    #[error("path does not start at the identity")]
    NotBasedAtIdentity,
    #[error("rotation rate is zero")]
    ZeroRate,
    #[error("Hessian restricted to the normal plane is indefinite")]
    IndefiniteHessian,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("csv import: {0}")]
    Csv(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Certified(#[from] CertifiedError),
}

/// Half-integer stored exactly as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct HalfInt(i64);

impl HalfInt {
    pub fn from_integer(n: i64) -> Self {
        HalfInt(2 * n)
    }

    pub fn from_halves(h: i64) -> Self {
        HalfInt(h)
    }

    pub fn halves(&self) -> i64 {
        self.0
    }

    pub fn is_integer(&self) -> bool {
        self.0 % 2 == 0
    }

    pub fn to_integer(&self) -> Option<i64> {
        if self.is_integer() {
            Some(self.0 / 2)
        } else {
            None
        }
    }

    pub fn to_f64(&self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl std::ops::Add for HalfInt {
    type Output = HalfInt;
    fn add(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 + rhs.0)
    }
}

impl std::ops::Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, rhs: HalfInt) -> HalfInt {
        HalfInt(self.0 - rhs.0)
    }
}

impl std::ops::AddAssign for HalfInt {
    fn add_assign(&mut self, rhs: HalfInt) {
        self.0 += rhs.0;
    }
}

impl std::ops::Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt(-self.0)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

/// Standard complex-structure matrix: block diagonal `[[0, -1], [1, 0]]`.
pub fn j0(dim: usize) -> DMatrix<f64> {
    assert!(dim % 2 == 0);
    let mut m = DMatrix::zeros(dim, dim);
    for b in 0..dim / 2 {
        m[(2 * b, 2 * b + 1)] = -1.0;
        m[(2 * b + 1, 2 * b)] = 1.0;
    }
    m
}

type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// A path of symplectic matrices on `[0, T]`, given by an evaluator (closed
/// form, composition, or interpolated CSV samples) plus an optional analytic
/// derivative.
#[derive(Clone)]
pub struct SymplecticPath {
    dim: usize,
    duration: f64,
    eval: MatrixFn,
    deriv: Option<MatrixFn>,
    grid: usize,
}

impl fmt::Debug for SymplecticPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SymplecticPath")
            .field("dim", &self.dim)
            .field("duration", &self.duration)
            .field("grid", &self.grid)
            .finish()
    }
}

const SYMPLECTIC_TOL: f64 = 1e-10;
const CROSSING_ACCEPT: f64 = 1e-7;
const KERNEL_TOL: f64 = 1e-6;
const TIME_TOL: f64 = 1e-12;
const FIXED_SUBSPACE_TOL: f64 = 1e-8;
const ZERO_FORM_TOL: f64 = 1e-9;
const DEGENERATE_EIG_RATIO: f64 = 1e-8;

impl SymplecticPath {
    pub fn from_fn<F>(dim: usize, duration: f64, eval: F) -> Result<Self, IndexError>
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let path = SymplecticPath {
            dim,
            duration,
            eval: Arc::new(eval),
            deriv: None,
            grid: 2048,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn with_derivative<F>(mut self, deriv: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.deriv = Some(Arc::new(deriv));
        self
    }

    pub fn with_grid(mut self, grid: usize) -> Self {
        self.grid = grid.max(64);
        self
    }

    /// Rotation block `e^{J0 theta t}` on `[0, duration]`.
    pub fn rotation(theta: f64, duration: f64) -> Result<Self, IndexError> {
        let eval = move |t: f64| {
            let (s, c) = (theta * t).sin_cos();
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        };
        let path = SymplecticPath {
            dim: 2,
            duration,
            eval: Arc::new(eval),
            deriv: Some(Arc::new(move |t: f64| {
                let (s, c) = (theta * t).sin_cos();
                DMatrix::from_row_slice(2, 2, &[-s * theta, -c * theta, c * theta, -s * theta])
            })),
            grid: 2048,
        };
        path.validate()?;
        Ok(path)
    }

    /// Shear `[[1, t], [0, 1]]`: rank of `Phi(t) - Id` constant away from 0.
    pub fn shear(duration: f64) -> Result<Self, IndexError> {
        let path = SymplecticPath {
            dim: 2,
            duration,
            eval: Arc::new(|t: f64| DMatrix::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0])),
            deriv: Some(Arc::new(|_t: f64| {
                DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])
            })),
            grid: 2048,
        };
        path.validate()?;
        Ok(path)
    }

    pub fn identity(dim: usize, duration: f64) -> Result<Self, IndexError> {
        if dim % 2 != 0 {
            return Err(IndexError::DimensionMismatch("odd dimension".into()));
        }
        SymplecticPath::from_fn(dim, duration, move |_t| DMatrix::identity(dim, dim))
    }

    pub fn direct_sum(&self, other: &SymplecticPath) -> Result<SymplecticPath, IndexError> {
        if (self.duration - other.duration).abs() > 1e-12 * self.duration.max(1.0) {
            return Err(IndexError::DimensionMismatch(
                "direct sum requires equal durations".into(),
            ));
        }
        let (da, db) = (self.dim, other.dim);
        let (ea, eb) = (self.eval.clone(), other.eval.clone());
        let eval = move |t: f64| {
            let a = ea(t);
            let b = eb(t);
            let mut m = DMatrix::zeros(da + db, da + db);
            m.view_mut((0, 0), (da, da)).copy_from(&a);
            m.view_mut((da, da), (db, db)).copy_from(&b);
            m
        };
        let deriv = match (self.deriv.clone(), other.deriv.clone()) {
            (Some(fa), Some(fb)) => {
                let f = move |t: f64| {
                    let a = fa(t);
                    let b = fb(t);
                    let mut m = DMatrix::zeros(da + db, da + db);
                    m.view_mut((0, 0), (da, da)).copy_from(&a);
                    m.view_mut((da, da), (db, db)).copy_from(&b);
                    m
                };
                Some(Arc::new(f) as MatrixFn)
            }
            _ => None,
        };
        Ok(SymplecticPath {
            dim: da + db,
            duration: self.duration,
            eval: Arc::new(eval),
            deriv,
            grid: self.grid.max(other.grid),
        })
    }

    /// Concatenation of composable paths: `other(0)` must equal
    /// `self(duration)`.
    pub fn concat(&self, other: &SymplecticPath) -> Result<SymplecticPath, IndexError> {
        if self.dim != other.dim {
            return Err(IndexError::DimensionMismatch(
                "concatenation requires equal dimensions".into(),
            ));
        }
        let defect = (self.at(self.duration) - other.at(0.0)).abs().max();
        if defect > 1e-8 {
            return Err(IndexError::ConcatMismatch { defect });
        }
        let t1 = self.duration;
        let (ea, eb) = (self.eval.clone(), other.eval.clone());
        let eval = move |t: f64| if t <= t1 { ea(t) } else { eb(t - t1) };
        let deriv = match (self.deriv.clone(), other.deriv.clone()) {
            (Some(fa), Some(fb)) => {
                let f = move |t: f64| if t <= t1 { fa(t) } else { fb(t - t1) };
                Some(Arc::new(f) as MatrixFn)
            }
            _ => None,
        };
        Ok(SymplecticPath {
            dim: self.dim,
            duration: self.duration + other.duration,
            eval: Arc::new(eval),
            deriv,
            grid: self.grid.max(other.grid),
        })
    }

    /// Import from CSV rows `t, m_11, m_12, ..., m_dd` (row-major entries),
    /// strictly increasing times starting at 0; evaluation between samples
    /// is piecewise linear, the derivative the segment slope.
    pub fn from_csv_str(text: &str) -> Result<Self, IndexError> {
        let mut times: Vec<f64> = Vec::new();
        let mut mats: Vec<DMatrix<f64>> = Vec::new();
        let mut dim = 0usize;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
                continue;
            }
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| IndexError::Csv(format!("line {}: {e}", ln + 1)))?;
            if fields.len() < 5 {
                return Err(IndexError::Csv(format!("line {}: too few fields", ln + 1)));
            }
            let n2 = fields.len() - 1;
            let d = (n2 as f64).sqrt().round() as usize;
            if d * d != n2 || d % 2 != 0 {
                return Err(IndexError::Csv(format!(
                    "line {}: {n2} entries is not a square even-dimensional matrix",
                    ln + 1
                )));
            }
            if dim == 0 {
                dim = d;
            } else if dim != d {
                return Err(IndexError::Csv("inconsistent matrix sizes".into()));
            }
            times.push(fields[0]);
            mats.push(DMatrix::from_row_slice(d, d, &fields[1..]));
        }
        if times.len() < 2 {
            return Err(IndexError::Csv("need at least two samples".into()));
        }
        if times[0].abs() > 1e-12 {
            return Err(IndexError::Csv("first sample time must be 0".into()));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(IndexError::Csv("sample times must strictly increase".into()));
            }
        }
        let duration = *times.last().unwrap();
        let j = j0(dim);
        for (k, m) in mats.iter().enumerate() {
            let defect = (m.transpose() * &j * m - &j).abs().max();
            if defect > SYMPLECTIC_TOL * (1.0 + m.abs().max().powi(2)) {
                return Err(IndexError::NonSymplectic { t: times[k], defect });
            }
        }
        let times_c = times.clone();
        let mats_c = mats.clone();
        let eval = move |t: f64| {
            let t = t.clamp(times_c[0], *times_c.last().unwrap());
            let i = times_c
                .partition_point(|x| *x < t)
                .clamp(1, times_c.len() - 1);
            let (t0, t1) = (times_c[i - 1], times_c[i]);
            let w = ((t - t0) / (t1 - t0)).clamp(0.0, 1.0);
            &mats_c[i - 1] * (1.0 - w) + &mats_c[i] * w
        };
        let deriv = move |t: f64| {
            let t = t.clamp(times[0], *times.last().unwrap());
            let i = times.partition_point(|x| *x < t).clamp(1, times.len() - 1);
            let (t0, t1) = (times[i - 1], times[i]);
            (&mats[i] - &mats[i - 1]) / (t1 - t0)
        };
        Ok(SymplecticPath {
            dim,
            duration,
            eval: Arc::new(eval),
            deriv: Some(Arc::new(deriv)),
            grid: 2048,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        (self.eval)(t)
    }

    /// Path derivative: analytic hint when present, else a 4th-order finite
    /// difference with step `1e-5 * duration` (one-sided near the ends).
    pub fn derivative_at(&self, t: f64) -> DMatrix<f64> {
        if let Some(d) = &self.deriv {
            return d(t);
        }
        let h = 1e-5 * self.duration.max(1e-6);
        let f = &self.eval;
        if t - 2.0 * h < 0.0 {
            (f(t) * (-25.0) + f(t + h) * 48.0 - f(t + 2.0 * h) * 36.0 + f(t + 3.0 * h) * 16.0
                - f(t + 4.0 * h) * 3.0)
                / (12.0 * h)
        } else if t + 2.0 * h > self.duration {
            (f(t) * 25.0 - f(t - h) * 48.0 + f(t - 2.0 * h) * 36.0 - f(t - 3.0 * h) * 16.0
                + f(t - 4.0 * h) * 3.0)
                / (12.0 * h)
        } else {
            (f(t - 2.0 * h) - f(t - h) * 8.0 + f(t + h) * 8.0 - f(t + 2.0 * h)) / (12.0 * h)
        }
    }

    fn validate(&self) -> Result<(), IndexError> {
        if self.dim % 2 != 0 || self.dim == 0 {
            return Err(IndexError::DimensionMismatch(format!(
                "dimension {} is not even and positive",
                self.dim
            )));
        }
        if !(self.duration > 0.0) {
            return Err(IndexError::DimensionMismatch(
                "duration must be positive".into(),
            ));
        }
        let j = j0(self.dim);
        for k in 0..=4 {
            let t = self.duration * k as f64 / 4.0;
            let m = self.at(t);
            let defect = (m.transpose() * &j * &m - &j).abs().max();
            let scale = 1.0 + m.abs().max().powi(2);
            if defect > SYMPLECTIC_TOL * scale {
                return Err(IndexError::NonSymplectic { t, defect });
            }
        }
        Ok(())
    }
}

fn smallest_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
}

fn sigma_min_at(path: &SymplecticPath, t: f64) -> f64 {
    let m = path.at(t) - DMatrix::identity(path.dim, path.dim);
    smallest_singular_value(&m)
}

/// Orthonormal basis of the numerical null space of `m` (as columns).
/// Wide inputs are zero-padded so the thin SVD still carries the full V.
fn null_space(m: &DMatrix<f64>, tol_rel: f64) -> DMatrix<f64> {
    let work = if m.nrows() < m.ncols() {
        let mut padded = DMatrix::zeros(m.ncols(), m.ncols());
        padded.view_mut((0, 0), (m.nrows(), m.ncols())).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.svd(false, true);
    let v_t = svd.v_t.expect("svd with v requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = tol_rel * smax.max(1.0);
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s < tol {
            cols.push(v_t.row(i).transpose());
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Intersection of the column spans of two orthonormal bases.
fn intersect_subspaces(b1: &DMatrix<f64>, b2: &DMatrix<f64>) -> DMatrix<f64> {
    if b1.ncols() == 0 || b2.ncols() == 0 {
        return DMatrix::zeros(b1.nrows(), 0);
    }
    let mut stacked = DMatrix::zeros(b1.nrows(), b1.ncols() + b2.ncols());
    stacked
        .view_mut((0, 0), (b1.nrows(), b1.ncols()))
        .copy_from(b1);
    stacked
        .view_mut((0, b1.ncols()), (b2.nrows(), b2.ncols()))
        .copy_from(&(-b2));
    let null = null_space(&stacked, 1e-10);
    if null.ncols() == 0 {
        return DMatrix::zeros(b1.nrows(), 0);
    }
    let x = null.rows(0, b1.ncols()).into_owned();
    orthonormalize(&(b1 * x))
}

fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 {
        return m.clone();
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("svd with u requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let mut cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * smax.max(1.0) {
            cols.push(u.column(i).into_owned());
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Data of a single crossing of the Maslov cycle.
#[derive(Debug, Clone)]
pub struct CrossingData {
    pub time: f64,
    pub kernel_dim: usize,
    pub signature: i32,
}

/// Kernel basis and signature of the crossing form at `t`.
///
/// When the path is degenerate on a whole neighborhood of `t` (constant-rank
/// directions; e.g. the shear at `t = 0`, where the momentary kernel
/// inflates to the full space), the kernel is taken as the limit kernel
/// shared with nearby times. On such directions the crossing form vanishes
/// identically and the signature is 0.
pub fn crossing_form(path: &SymplecticPath, t: f64) -> Result<CrossingData, IndexError> {
    let dim = path.dim();
    let id = DMatrix::identity(dim, dim);
    let phi = path.at(t);
    let m = &phi - &id;
    let mut kernel = null_space(&m, KERNEL_TOL);
    if kernel.ncols() == 0 {
        return Err(IndexError::NotACrossing { t });
    }
    let delta = 1e-4 * path.duration().max(1e-9);
    for side in [t - delta, t + delta] {
        if side < 0.0 || side > path.duration() {
            continue;
        }
        if sigma_min_at(path, side) < CROSSING_ACCEPT {
            let side_kernel = null_space(&(path.at(side) - &id), KERNEL_TOL);
            let common = intersect_subspaces(&kernel, &side_kernel);
            if common.ncols() > 0 {
                kernel = common;
            }
        }
    }
    let inv = phi
        .clone()
        .try_inverse()
        .ok_or_else(|| IndexError::NumericalFailure(format!("Phi({t}) not invertible")))?;
    let a = path.derivative_at(t) * inv;
    let j = j0(dim);
    let w = a.transpose() * &j;
    let g = (&w + &w.transpose()) * 0.5;
    let gamma = kernel.transpose() * &g * &kernel;
    let gamma = (&gamma + &gamma.transpose()) * 0.5;
    let gnorm = g.abs().max().max(1.0);
    if gamma.abs().max() < ZERO_FORM_TOL * gnorm {
        return Ok(CrossingData {
            time: t,
            kernel_dim: kernel.ncols(),
            signature: 0,
        });
    }
    let eig = nalgebra::SymmetricEigen::new(gamma);
    let lmax = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &l| acc.max(l.abs()));
    let mut pos = 0i32;
    let mut neg = 0i32;
    for &l in eig.eigenvalues.iter() {
        if l.abs() < DEGENERATE_EIG_RATIO * lmax {
            return Err(IndexError::DegenerateCrossing { t });
        }
        if l > 0.0 {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    Ok(CrossingData {
        time: t,
        kernel_dim: kernel.ncols(),
        signature: pos - neg,
    })
}

/// Golden-section minimization of `sigma_min` over `[a, b]`.
fn refine_minimum(path: &SymplecticPath, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let tol = TIME_TOL * path.duration().max(1.0);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = sigma_min_at(path, c);
    let mut fd = sigma_min_at(path, d);
    while (b - a) > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = sigma_min_at(path, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = sigma_min_at(path, d);
        }
    }
    0.5 * (a + b)
}

/// Crossing times of the path, endpoint crossings included, refined to the
/// time tolerance.
pub fn detect_crossings(path: &SymplecticPath) -> Result<Vec<f64>, IndexError> {
    let n = path.grid;
    let big_t = path.duration();
    let ts: Vec<f64> = (0..=n).map(|i| big_t * i as f64 / n as f64).collect();
    let sig: Vec<f64> = ts.iter().map(|&t| sigma_min_at(path, t)).collect();
    let degenerate_fraction =
        sig.iter().filter(|&&s| s < CROSSING_ACCEPT).count() as f64 / sig.len() as f64;
    if degenerate_fraction > 0.3 {
        return Err(IndexError::NumericalFailure(
            "crossing continuum: the path is degenerate on a positive fraction of times"
                .into(),
        ));
    }
    let mut found: Vec<f64> = Vec::new();
    if sig[0] < CROSSING_ACCEPT {
        found.push(0.0);
    }
    for i in 1..n {
        if sig[i] <= sig[i - 1] && sig[i] <= sig[i + 1] {
            let t_star = refine_minimum(path, ts[i - 1], ts[i + 1]);
            if sigma_min_at(path, t_star) < CROSSING_ACCEPT {
                found.push(t_star.clamp(0.0, big_t));
            }
        }
    }
    if sig[n] < CROSSING_ACCEPT {
        found.push(big_t);
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out: Vec<f64> = Vec::new();
    for t in found {
        if let Some(&last) = out.last() {
            if (t - last).abs() < 1e-10 * big_t.max(1.0) {
                continue;
            }
            if (t - last).abs() < 1e-8 * big_t.max(1.0) {
                return Err(IndexError::UnresolvedCrossing { t1: last, t2: t });
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Subspace fixed pointwise by the whole path, estimated from interior
/// samples.
fn common_fixed_subspace(path: &SymplecticPath) -> DMatrix<f64> {
    let dim = path.dim();
    let id = DMatrix::identity(dim, dim);
    let samples = 16usize;
    let mut stacked = DMatrix::zeros(dim * samples, dim);
    for s in 0..samples {
        let t = path.duration() * (s + 1) as f64 / samples as f64;
        let m = path.at(t) - &id;
        stacked.view_mut((s * dim, 0), (dim, dim)).copy_from(&m);
    }
    null_space(&stacked, FIXED_SUBSPACE_TOL)
}

/// Darboux change of basis: columns `T` with `T^t Omega T` in the standard
/// block form (pairs with `omega(u_i, v_i) = -1`, matching `j0`).
fn darboux_basis(omega: &DMatrix<f64>) -> Result<DMatrix<f64>, IndexError> {
    let c = omega.nrows();
    if c % 2 != 0 {
        return Err(IndexError::NumericalFailure(
            "odd-dimensional reduced symplectic space".into(),
        ));
    }
    let mut remaining: Vec<DVector<f64>> = (0..c)
        .map(|i| DVector::from_fn(c, |r, _| if r == i { 1.0 } else { 0.0 }))
        .collect();
    let pairing = |x: &DVector<f64>, y: &DVector<f64>| (x.transpose() * omega * y)[(0, 0)];
    let mut cols: Vec<DVector<f64>> = Vec::new();
    while !remaining.is_empty() {
        let u = remaining.remove(0);
        let mut best = 0usize;
        let mut best_val = 0.0f64;
        for (i, w) in remaining.iter().enumerate() {
            let v = pairing(&u, w).abs();
            if v > best_val {
                best_val = v;
                best = i;
            }
        }
        if best_val < 1e-10 {
            return Err(IndexError::NumericalFailure(
                "degenerate form in symplectic reduction".into(),
            ));
        }
        let w = remaining.remove(best);
        let v = &w * (-1.0 / pairing(&u, &w));
        for r in remaining.iter_mut() {
            let a = pairing(r, &v);
            let b = pairing(r, &u);
            *r += &u * a - &v * b;
        }
        cols.push(u);
        cols.push(v);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// Split off the directions fixed by the whole path and return the induced
/// path on the symplectic reduction, or `None` when nothing remains.
fn reduce_fixed_directions(path: &SymplecticPath) -> Result<Option<SymplecticPath>, IndexError> {
    let k = common_fixed_subspace(path);
    if k.ncols() == 0 {
        return Ok(Some(path.clone()));
    }
    let dim = path.dim();
    if k.ncols() == dim {
        return Ok(None);
    }
    let j = j0(dim);
    // V' = omega-orthogonal complement of K; its radical is V' meet K.
    let constraints = k.transpose() * &j;
    let b_v = null_space(&constraints, 1e-10);
    if b_v.ncols() == 0 {
        return Ok(None);
    }
    let b_r = intersect_subspaces(&b_v, &k);
    let b_c = if b_r.ncols() == 0 {
        b_v.clone()
    } else {
        let r_coords = b_v.transpose() * &b_r;
        let n = null_space(&r_coords.transpose(), 1e-10);
        if n.ncols() == 0 {
            return Ok(None);
        }
        &b_v * n
    };
    if b_c.ncols() == 0 {
        return Ok(None);
    }
    let omega_c = b_c.transpose() * &j * &b_c;
    let t_mat = darboux_basis(&omega_c)?;
    let right = &b_c * &t_mat;
    let tt = t_mat.transpose() * &t_mat;
    let left = tt
        .try_inverse()
        .ok_or_else(|| IndexError::NumericalFailure("singular Darboux normalization".into()))?
        * t_mat.transpose()
        * b_c.transpose();
    let eval_src = path.eval.clone();
    let (l, r) = (left.clone(), right.clone());
    let eval = move |t: f64| &l * eval_src(t) * &r;
    let deriv = path.deriv.clone().map(|d| {
        let (l, r) = (left, right);
        Arc::new(move |t: f64| &l * d(t) * &r) as MatrixFn
    });
    let reduced = SymplecticPath {
        dim: b_c.ncols(),
        duration: path.duration(),
        eval: Arc::new(eval),
        deriv,
        grid: path.grid,
    };
    let jr = j0(reduced.dim);
    for k in 0..=4 {
        let t = reduced.duration * k as f64 / 4.0;
        let m = reduced.at(t);
        let defect = (m.transpose() * &jr * &m - &jr).abs().max();
        if defect > 1e-6 * (1.0 + m.abs().max().powi(2)) {
            return Err(IndexError::NumericalFailure(format!(
                "symplectic reduction failed (defect {defect:.3e} at t = {t})"
            )));
        }
    }
    Ok(Some(reduced))
}

/// Robbin-Salamon index: `1/2 sign(Gamma_0) + sum of interior signatures +
/// 1/2 sign(Gamma_T)` over the crossings of the path.
pub fn rs_index(path: &SymplecticPath) -> Result<HalfInt, IndexError> {
    let reduced = match reduce_fixed_directions(path)? {
        Some(p) => p,
        None => return Ok(HalfInt::from_integer(0)),
    };
    let crossings = detect_crossings(&reduced)?;
    let mut halves = 0i64;
    let big_t = reduced.duration();
    for t in crossings {
        let data = crossing_form(&reduced, t)?;
        let endpoint = t < 1e-9 * big_t.max(1.0) || t > big_t * (1.0 - 1e-9);
        let weight = if endpoint { 1 } else { 2 };
        halves += weight * data.signature as i64;
    }
    Ok(HalfInt::from_halves(halves))
}

/// Closed-form RS index of the rotation block `t -> e^{J0 theta t}` on
/// `[0, T]`, read off the crossing formula: crossings at `theta t = 0 mod
/// 2 pi`, each of signature `2 sign(theta)`, endpoints at half weight.
pub fn rs_rotation_block(theta: f64, duration: f64) -> Result<HalfInt, IndexError> {
    if theta == 0.0 {
        return Err(IndexError::ZeroRate);
    }
    if !(duration > 0.0) {
        return Err(IndexError::DimensionMismatch(
            "duration must be positive".into(),
        ));
    }
    let x = theta.abs() * duration / (2.0 * std::f64::consts::PI);
    let nearest = x.round();
    let at_end = nearest >= 1.0 && (x - nearest).abs() < 1e-9 * x.max(1.0);
    let interior = if at_end {
        nearest as i64 - 1
    } else {
        x.floor() as i64
    };
    let sign = if theta > 0.0 { 1i64 } else { -1 };
    let halves = sign * (4 * interior + 2 + if at_end { 2 } else { 0 });
    Ok(HalfInt::from_halves(halves))
}

/// Conley-Zehnder index of a nondegenerate path based at the identity.
pub fn cz_nondegenerate(path: &SymplecticPath) -> Result<i64, IndexError> {
    let id = DMatrix::identity(path.dim(), path.dim());
    if (path.at(0.0) - &id).abs().max() > 1e-8 {
        return Err(IndexError::NotBasedAtIdentity);
    }
    if sigma_min_at(path, path.duration()) < 1e-6 {
        return Err(IndexError::DegenerateEndpoint);
    }
    let rs = rs_index(path)?;
    rs.to_integer().ok_or_else(|| {
        IndexError::NumericalFailure(format!(
            "nondegenerate path produced non-integer index {rs}"
        ))
    })
}

/// A Morse-Bott family datum: RS index of the family, its (even) dimension,
/// and the Morse index of the critical point along the family image.
#[derive(Debug, Clone, Copy)]
pub struct MorseBottOrbit {
    pub rs_family: HalfInt,
    pub dim_family: u32,
    pub morse_index: u32,
}

impl MorseBottOrbit {
    pub fn new(rs_family: HalfInt, dim_family: u32, morse_index: u32) -> Result<Self, IndexError> {
        if dim_family % 2 != 0 {
            return Err(IndexError::DimensionMismatch(
                "Morse-Bott family dimension must be even".into(),
            ));
        }
        if morse_index > dim_family {
            return Err(IndexError::DimensionMismatch(
                "Morse index exceeds the family dimension".into(),
            ));
        }
        Ok(MorseBottOrbit {
            rs_family,
            dim_family,
            morse_index,
        })
    }
}

/// CZ index of the perturbed orbit attached to a Morse-Bott family:
/// `RS(family) + dim(family)/2 - morse_index`.
pub fn cz_morse_bott(d: &MorseBottOrbit) -> HalfInt {
    d.rs_family + HalfInt::from_integer(d.dim_family as i64 / 2)
        - HalfInt::from_integer(d.morse_index as i64)
}

/// Parity identity between the CH grading and the Morse index:
/// `(n - 3 + CZ) == morse_index mod 2`.
pub fn grading_parity_check(ambient_n: u32, d: &MorseBottOrbit) -> bool {
    match cz_morse_bott(d).to_integer() {
        Some(cz) => {
            (ambient_n as i64 - 3 + cz).rem_euclid(2) == (d.morse_index as i64).rem_euclid(2)
        }
        None => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianDefiniteness {
    PositiveDefinite,
    NegativeDefinite,
    Indefinite,
}

/// Classify a symmetric matrix by the signs of its eigenvalues.
pub fn classify_definiteness(m: &DMatrix<f64>) -> HessianDefiniteness {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    if eig.eigenvalues.iter().all(|&l| l > 0.0) {
        HessianDefiniteness::PositiveDefinite
    } else if eig.eigenvalues.iter().all(|&l| l < 0.0) {
        HessianDefiniteness::NegativeDefinite
    } else {
        HessianDefiniteness::Indefinite
    }
}

/// Normal CZ index of an orbit from the definiteness of the perturbing
/// Hessian on the normal symplectic plane: +1 at the maximum orbit
/// (negative-definite Hessian), -1 otherwise.
pub fn normal_cz_from_hessian(h: HessianDefiniteness) -> Result<i32, IndexError> {
    match h {
        HessianDefiniteness::NegativeDefinite => Ok(1),
        HessianDefiniteness::PositiveDefinite => Ok(-1),
        HessianDefiniteness::Indefinite => Err(IndexError::IndefiniteHessian),
    }
}

/// Linearized Reeb flow along the orbit `(axis i, iterate j)` of an
/// ellipsoid, restricted to the contact structure and written in the
/// disk-bounded trivialization: rotation blocks of rate `2 pi / a_k` for
/// `k != i`, with the trivialization winding adding `2 pi / a_i` to the
/// first block, over the orbit period `j * a_i`.
pub fn ellipsoid_linearized_path(
    e: &Ellipsoid,
    label: OrbitLabel,
) -> Result<SymplecticPath, IndexError> {
    let n = e.n();
    if n < 2 {
        return Err(IndexError::Unsupported(
            "contact structure of a 1-axis ellipsoid is 0-dimensional".into(),
        ));
    }
    if label.axis == 0 || label.axis > n || label.iterate == 0 {
        return Err(IndexError::DimensionMismatch("orbit label out of range".into()));
    }
    let axes = e.axes_f64();
    let a_i = axes[label.axis - 1];
    let duration = label.iterate as f64 * a_i;
    let tau = 2.0 * std::f64::consts::PI;
    let mut rates = Vec::with_capacity(n - 1);
    let mut first = true;
    for (k, &a_k) in axes.iter().enumerate() {
        if k == label.axis - 1 {
            continue;
        }
        let mut rate = tau / a_k;
        if first {
            rate += tau / a_i;
            first = false;
        }
        rates.push(rate);
    }
    let mut path = SymplecticPath::rotation(rates[0], duration)?;
    for &rate in &rates[1..] {
        path = path.direct_sum(&SymplecticPath::rotation(rate, duration)?)?;
    }
    Ok(path)
}

/// JSON record for an index computation.
pub fn index_record_json(
    path_id: &str,
    rs: HalfInt,
    crossings: &[CrossingData],
) -> serde_json::Value {
    serde_json::json!({
        "path_id": path_id,
        "rs_num": rs.halves(),
        "rs_den": 2,
        "crossings": crossings.iter().map(|c| serde_json::json!({
            "t": c.time,
            "kernel_dim": c.kernel_dim,
            "signature": c.signature,
        })).collect::<Vec<_>>(),
    })
}

/// Refined crossing times with kernel data, after fixed-direction reduction.
pub fn crossing_report(path: &SymplecticPath) -> Result<Vec<CrossingData>, IndexError> {
    let reduced = match reduce_fixed_directions(path)? {
        Some(p) => p,
        None => return Ok(Vec::new()),
    };
    detect_crossings(&reduced)?
        .into_iter()
        .map(|t| crossing_form(&reduced, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn rs_num(path: &SymplecticPath) -> HalfInt {
        rs_index(path).unwrap()
    }

    #[test]
    fn rotation_crossing_form_at_zero() {
        let path = SymplecticPath::rotation(PI, 1.0).unwrap();
        let data = crossing_form(&path, 0.0).unwrap();
        assert_eq!(data.kernel_dim, 2);
        assert_eq!(data.signature, 2);
        let neg = SymplecticPath::rotation(-PI, 1.0).unwrap();
        let data = crossing_form(&neg, 0.0).unwrap();
        assert_eq!(data.signature, -2);
    }

    #[test]
    fn shear_crossing_form_vanishes_on_fixed_line() {
        let path = SymplecticPath::shear(1.0).unwrap();
        let data = crossing_form(&path, 0.0).unwrap();
        assert_eq!(data.kernel_dim, 1);
        assert_eq!(data.signature, 0);
    }

    #[test]
    fn not_a_crossing() {
        let path = SymplecticPath::rotation(PI, 1.0).unwrap();
        assert!(matches!(
            crossing_form(&path, 0.5),
            Err(IndexError::NotACrossing { .. })
        ));
    }

    #[test]
    fn rotation_rs_values() {
        let cases = [
            (PI, 1.0, 2),       // RS = 1
            (2.0 * PI, 1.0, 4), // RS = 2
            (-PI, 1.0, -2),     // RS = -1
            (3.0 * PI, 1.0, 6), // RS = 3
            (PI / 2.0, 1.0, 2), // RS = 1
        ];
        for (theta, dur, halves) in cases {
            let path = SymplecticPath::rotation(theta, dur).unwrap();
            assert_eq!(
                rs_num(&path).halves(),
                halves,
                "rotation theta = {theta}, T = {dur}"
            );
            assert_eq!(
                rs_rotation_block(theta, dur).unwrap().halves(),
                halves,
                "closed form theta = {theta}"
            );
        }
        assert!(matches!(
            rs_rotation_block(0.0, 1.0),
            Err(IndexError::ZeroRate)
        ));
    }

    #[test]
    fn shear_vanishes() {
        let path = SymplecticPath::shear(1.0).unwrap();
        assert_eq!(rs_num(&path).halves(), 0);
    }

    #[test]
    fn identity_block_vanishes() {
        let path = SymplecticPath::identity(4, 1.0).unwrap();
        assert_eq!(rs_num(&path).halves(), 0);
    }

    #[test]
    fn direct_sum_additivity() {
        let a = SymplecticPath::rotation(PI / 2.0, 1.0).unwrap();
        let b = SymplecticPath::rotation(3.0 * PI, 1.0).unwrap();
        let sum = a.direct_sum(&b).unwrap();
        assert_eq!(
            rs_num(&sum).halves(),
            rs_num(&a).halves() + rs_num(&b).halves()
        );
        assert_eq!(cz_nondegenerate(&sum).unwrap(), 4);

        // Direct sums with degenerate blocks reduce to the moving part.
        let with_shear = a.direct_sum(&SymplecticPath::shear(1.0).unwrap()).unwrap();
        assert_eq!(rs_num(&with_shear).halves(), rs_num(&a).halves());
        let with_id = b
            .direct_sum(&SymplecticPath::identity(2, 1.0).unwrap())
            .unwrap();
        assert_eq!(rs_num(&with_id).halves(), rs_num(&b).halves());
    }

    #[test]
    fn concatenation_additivity() {
        let theta = 1.3 * PI;
        let full = SymplecticPath::rotation(theta, 1.0).unwrap();
        let first = SymplecticPath::rotation(theta, 0.4).unwrap();
        let second = SymplecticPath::from_fn(2, 0.6, move |t| {
            let s = theta * (t + 0.4);
            DMatrix::from_row_slice(2, 2, &[s.cos(), -s.sin(), s.sin(), s.cos()])
        })
        .unwrap();
        let joined = first.concat(&second).unwrap();
        assert_eq!(rs_num(&joined).halves(), rs_num(&full).halves());
        assert_eq!(
            rs_num(&joined).halves(),
            rs_num(&first).halves() + rs_num(&second).halves()
        );
    }

    #[test]
    fn homotopy_invariance_under_small_loops() {
        let theta = 0.9 * PI;
        let base = SymplecticPath::rotation(theta, 1.0).unwrap();
        let eps = 1e-3;
        let perturbed = SymplecticPath::from_fn(2, 1.0, move |t| {
            let s = theta * t;
            let rot = DMatrix::from_row_slice(2, 2, &[s.cos(), -s.sin(), s.sin(), s.cos()]);
            let bump = eps * (PI * t).sin().powi(2);
            let loopm = DMatrix::from_row_slice(2, 2, &[bump.exp(), 0.0, 0.0, (-bump).exp()]);
            loopm * rot
        })
        .unwrap();
        assert_eq!(rs_num(&perturbed).halves(), rs_num(&base).halves());
    }

    #[test]
    fn cz_examples() {
        let path = SymplecticPath::rotation(PI / 2.0, 1.0).unwrap();
        assert_eq!(cz_nondegenerate(&path).unwrap(), 1);
        let path = SymplecticPath::rotation(3.0 * PI, 1.0).unwrap();
        assert_eq!(cz_nondegenerate(&path).unwrap(), 3);
        let degenerate = SymplecticPath::rotation(2.0 * PI, 1.0).unwrap();
        assert!(matches!(
            cz_nondegenerate(&degenerate),
            Err(IndexError::DegenerateEndpoint)
        ));
    }

    #[test]
    fn morse_bott_formula() {
        let d = MorseBottOrbit::new(HalfInt::from_integer(4), 2, 0).unwrap();
        assert_eq!(cz_morse_bott(&d), HalfInt::from_integer(5));
        let d = MorseBottOrbit::new(HalfInt::from_integer(4), 2, 2).unwrap();
        assert_eq!(cz_morse_bott(&d), HalfInt::from_integer(3));
        // rs computed numerically from a doubled full rotation.
        let block = SymplecticPath::rotation(2.0 * PI, 1.0).unwrap();
        let path = block.direct_sum(&block).unwrap();
        let rs = rs_index(&path).unwrap();
        assert_eq!(rs, HalfInt::from_integer(4));
        let d = MorseBottOrbit::new(rs, 4, 0).unwrap();
        assert_eq!(cz_morse_bott(&d), HalfInt::from_integer(6));
    }

    #[test]
    fn parity_identity() {
        // RS built from unitary blocks: one block of non-integer winding plus
        // a 2-dimensional family direction, ambient n = 3 so n - 1 - d = 1.
        let block = SymplecticPath::rotation(1.7 * 2.0 * PI, 1.0).unwrap();
        let rs = rs_index(&block).unwrap();
        let d = MorseBottOrbit::new(rs, 2, 0).unwrap();
        assert!(grading_parity_check(3, &d));
        // Changing the Morse index shifts both sides: the identity persists.
        let d = MorseBottOrbit::new(rs, 2, 1).unwrap();
        assert!(grading_parity_check(3, &d));
        // An rs of the wrong parity (here RS must be odd = n-1-d) fails.
        let wrong = MorseBottOrbit::new(rs + HalfInt::from_integer(1), 2, 0).unwrap();
        assert!(!grading_parity_check(3, &wrong));
        // Half-integer CZ never satisfies the integer parity identity.
        let bad = MorseBottOrbit::new(HalfInt::from_halves(1), 2, 0).unwrap();
        assert!(!grading_parity_check(2, &bad));
    }

    #[test]
    fn normal_cz_values() {
        assert_eq!(
            normal_cz_from_hessian(HessianDefiniteness::NegativeDefinite).unwrap(),
            1
        );
        assert_eq!(
            normal_cz_from_hessian(HessianDefiniteness::PositiveDefinite).unwrap(),
            -1
        );
        assert!(matches!(
            normal_cz_from_hessian(HessianDefiniteness::Indefinite),
            Err(IndexError::IndefiniteHessian)
        ));
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(classify_definiteness(&m), HessianDefiniteness::Indefinite);
    }

    #[test]
    fn ellipsoid_path_matches_cz_formula() {
        let e = Ellipsoid::from_strs(&["1", "sqrt(2)"]).unwrap();
        for (label, expected) in [
            (OrbitLabel::new(1, 1), 3i64),
            (OrbitLabel::new(2, 1), 5),
            (OrbitLabel::new(1, 2), 7),
        ] {
            let path = ellipsoid_linearized_path(&e, label).unwrap();
            assert_eq!(cz_nondegenerate(&path).unwrap(), expected);
            assert_eq!(crate::spectrum::cz_index(&e, label).unwrap(), expected);
        }
        let e3 = Ellipsoid::from_strs(&["1", "sqrt(2)", "sqrt(3)"]).unwrap();
        for label in [
            OrbitLabel::new(1, 1),
            OrbitLabel::new(2, 1),
            OrbitLabel::new(3, 1),
            OrbitLabel::new(1, 2),
        ] {
            let path = ellipsoid_linearized_path(&e3, label).unwrap();
            assert_eq!(
                cz_nondegenerate(&path).unwrap(),
                crate::spectrum::cz_index(&e3, label).unwrap(),
                "label {label:?}"
            );
        }
    }

    #[test]
    fn csv_roundtrip() {
        let theta = PI;
        let mut csv = String::from("t,m11,m12,m21,m22\n");
        let n = 400;
        for i in 0..=n {
            let t = i as f64 / n as f64;
            let s = theta * t;
            csv.push_str(&format!(
                "{t},{},{},{},{}\n",
                s.cos(),
                -s.sin(),
                s.sin(),
                s.cos()
            ));
        }
        let path = SymplecticPath::from_csv_str(&csv).unwrap();
        assert_eq!(path.dim(), 2);
        assert_eq!(rs_num(&path).halves(), 2);
    }

    #[test]
    fn rejects_non_symplectic() {
        let bad = SymplecticPath::from_fn(2, 1.0, |t| {
            DMatrix::from_row_slice(2, 2, &[1.0 + t, 0.0, 0.0, 1.0])
        });
        assert!(matches!(bad, Err(IndexError::NonSymplectic { .. })));
    }
}
