//! Floating-point Reeb dynamics: exact ellipsoid flows, torus-invariant
//! perturbations with closed-form perturbed Reeb fields, adaptive
//! Runge-Kutta integration with conservation monitoring, period detection,
//! rational-dependence closing searches, and the prequantization base
//! Hamiltonian with its calibrated circle flow.
//!
//! Conventions: the ellipsoid is `sum_j pi |z_j|^2 / a_j = 1`, the unperturbed
//! Reeb flow rotates factor `j` at angular rate `2 pi / a_j`, and moment
//! coordinates are `mu_j = pi |z_j|^2 / a_j` (summing to 1 on the boundary).
//! A perturbation `f = g(mu)` with scale `eps` rescales the contact form by
//! `e^{eps f}`; its Reeb field stays tangent to every torus `mu = const` and
//! rotates factor `j` at the rate
//! `omega_j = e^{-eps g} (2 pi / a_j) (1 - eps (dg_j - <dg, mu>))`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::spectrum::{rational_period, Ellipsoid, SpectrumError};

const TAU: f64 = std::f64::consts::TAU;

#[derive(Debug, Clone, thiserror::Error)]
pub enum FlowError {
    #[error("point is off the ellipsoid surface (constraint defect {defect:.3e})")]
    OffSurface { defect: f64 },
    #[error("tolerance {0} outside the supported range [1e-12, 1e-4]")]
    InvalidTolerance(f64),
    #[error("integrator step collapsed at t = {t:.6} (h = {h:.3e})")]
    StepFailure { t: f64, h: f64 },
    #[error("calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("bad perturbation profile: {0}")]
    BadPerturbation(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

/// A point on the ellipsoid boundary, in complex coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidPoint {
    pub z: Vec<Complex64>,
}

const SURFACE_TOL: f64 = 1e-9;

impl EllipsoidPoint {
    /// Validate the surface constraint `sum pi |z_j|^2 / a_j = 1`.
    pub fn on_surface(e: &Ellipsoid, z: Vec<Complex64>) -> Result<Self, FlowError> {
        let axes = e.axes_f64();
        if z.len() != axes.len() {
            return Err(FlowError::Unsupported("dimension mismatch".into()));
        }
        let defect = (constraint_value(&axes, &z) - 1.0).abs();
        if defect > SURFACE_TOL {
            return Err(FlowError::OffSurface { defect });
        }
        Ok(EllipsoidPoint { z })
    }

    /// Point on the invariant torus `mu` with the given phases (radians).
    pub fn on_torus(e: &Ellipsoid, mu: &[f64], phases: &[f64]) -> Result<Self, FlowError> {
        let axes = e.axes_f64();
        validate_simplex(mu, axes.len())?;
        let z = mu
            .iter()
            .zip(&axes)
            .zip(phases)
            .map(|((&m, &a), &phi)| {
                Complex64::from_polar((a * m / std::f64::consts::PI).sqrt(), phi)
            })
            .collect();
        EllipsoidPoint::on_surface(e, z)
    }

    pub fn moments(&self, e: &Ellipsoid) -> Vec<f64> {
        let axes = e.axes_f64();
        moment_coordinates(&axes, &self.z)
    }

    pub fn distance(&self, other: &EllipsoidPoint) -> f64 {
        self.z
            .iter()
            .zip(&other.z)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn constraint_value(axes: &[f64], z: &[Complex64]) -> f64 {
    z.iter()
        .zip(axes)
        .map(|(zj, &a)| std::f64::consts::PI * zj.norm_sqr() / a)
        .sum()
}

fn moment_coordinates(axes: &[f64], z: &[Complex64]) -> Vec<f64> {
    z.iter()
        .zip(axes)
        .map(|(zj, &a)| std::f64::consts::PI * zj.norm_sqr() / a)
        .collect()
}

fn validate_simplex(mu: &[f64], n: usize) -> Result<(), FlowError> {
    if mu.len() != n {
        return Err(FlowError::Unsupported("moment dimension mismatch".into()));
    }
    if mu.iter().any(|&m| m < -1e-12) {
        return Err(FlowError::BadPerturbation("negative moment coordinate".into()));
    }
    let s: f64 = mu.iter().sum();
    if (s - 1.0).abs() > 1e-8 {
        return Err(FlowError::BadPerturbation(format!(
            "moment coordinates sum to {s}, not 1"
        )));
    }
    Ok(())
}

/// Scalar profile `g` of the moment coordinates, with analytic gradient.
/// Profiles are nonnegative on the simplex.
#[derive(Clone)]
pub enum Profile {
    Constant(f64),
    /// `g(mu) = sum w_j mu_j` with nonnegative weights.
    Linear { weights: Vec<f64> },
    Custom {
        value: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
        gradient: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
        label: String,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Constant(c) => write!(f, "constant:{c}"),
            Profile::Linear { weights } => write!(f, "linear:{weights:?}"),
            Profile::Custom { label, .. } => write!(f, "custom:{label}"),
        }
    }
}

impl Profile {
    pub fn value(&self, mu: &[f64]) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Linear { weights } => weights
                .iter()
                .zip(mu)
                .map(|(w, m)| w * m)
                .sum(),
            Profile::Custom { value, .. } => value(mu),
        }
    }

    pub fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        match self {
            Profile::Constant(_) => vec![0.0; mu.len()],
            Profile::Linear { weights } => {
                let mut g = vec![0.0; mu.len()];
                for (out, w) in g.iter_mut().zip(weights) {
                    *out = *w;
                }
                g
            }
            Profile::Custom { gradient, .. } => gradient(mu),
        }
    }

    pub fn supports(&self, mu: &[f64]) -> bool {
        self.value(mu) > 0.0
    }

    /// Parse `constant:C`, `linear:W` (weight on the first moment) or
    /// `linear:w1,w2,...`.
    pub fn parse(s: &str) -> Result<Profile, FlowError> {
        let (kind, args) = s
            .split_once(':')
            .ok_or_else(|| FlowError::BadPerturbation(format!("profile {s:?}: expected kind:args")))?;
        let nums: Vec<f64> = args
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FlowError::BadPerturbation(format!("profile {s:?}: {e}")))?;
        match kind {
            "constant" => {
                if nums.len() != 1 || nums[0] < 0.0 {
                    return Err(FlowError::BadPerturbation(
                        "constant profile needs one nonnegative value".into(),
                    ));
                }
                Ok(Profile::Constant(nums[0]))
            }
            "linear" => {
                if nums.is_empty() || nums.iter().any(|&w| w < 0.0) {
                    return Err(FlowError::BadPerturbation(
                        "linear profile needs nonnegative weights".into(),
                    ));
                }
                Ok(Profile::Linear { weights: nums })
            }
            _ => Err(FlowError::BadPerturbation(format!("unknown profile kind {kind:?}"))),
        }
    }
}

/// A torus-invariant perturbation `e^{eps g(mu)}` of the contact form.
#[derive(Debug, Clone)]
pub struct InvariantPerturbation {
    pub profile: Profile,
    pub epsilon: f64,
}

impl InvariantPerturbation {
    pub fn new(profile: Profile, epsilon: f64) -> Result<Self, FlowError> {
        if epsilon < 0.0 {
            return Err(FlowError::BadPerturbation("negative scale".into()));
        }
        Ok(InvariantPerturbation { profile, epsilon })
    }

    pub fn unperturbed() -> Self {
        InvariantPerturbation {
            profile: Profile::Constant(0.0),
            epsilon: 0.0,
        }
    }
}

/// Exact time-t flow of the unperturbed Reeb field:
/// `z_j -> e^{2 pi i t / a_j} z_j`.
pub fn exact_flow(
    e: &Ellipsoid,
    z: &EllipsoidPoint,
    t: f64,
) -> Result<EllipsoidPoint, FlowError> {
    let axes = e.axes_f64();
    let defect = (constraint_value(&axes, &z.z) - 1.0).abs();
    if defect > SURFACE_TOL {
        return Err(FlowError::OffSurface { defect });
    }
    let z_new = z
        .z
        .iter()
        .zip(&axes)
        .map(|(zj, &a)| zj * Complex64::from_polar(1.0, TAU * t / a))
        .collect();
    Ok(EllipsoidPoint { z: z_new })
}

/// Angular frequencies `omega_j(mu)` of the perturbed flow on the torus
/// `mu`: the perturbed Reeb field is linear on each invariant torus with
/// these rates.
pub fn frequencies(
    e: &Ellipsoid,
    f: &InvariantPerturbation,
    mu: &[f64],
) -> Result<Vec<f64>, FlowError> {
    let axes = e.axes_f64();
    validate_simplex(mu, axes.len())?;
    let g = f.profile.value(mu);
    let grad = f.profile.gradient(mu);
    let pairing: f64 = grad.iter().zip(mu).map(|(d, m)| d * m).sum();
    let scale = (-f.epsilon * g).exp();
    Ok(axes
        .iter()
        .enumerate()
        .map(|(j, &a)| scale * (TAU / a) * (1.0 - f.epsilon * (grad[j] - pairing)))
        .collect())
}

/// Perturbed Reeb field `R_f = e^{-eps f} (R - eps X_f)` evaluated at a
/// surface point; `X_f` is the closed-form angular combination dual to `df`
/// through `d alpha`.
pub fn perturbed_reeb_field(
    e: &Ellipsoid,
    f: &InvariantPerturbation,
    z: &EllipsoidPoint,
) -> Result<Vec<Complex64>, FlowError> {
    let axes = e.axes_f64();
    let defect = (constraint_value(&axes, &z.z) - 1.0).abs();
    if defect > SURFACE_TOL {
        return Err(FlowError::OffSurface { defect });
    }
    let mu = moment_coordinates(&axes, &z.z);
    let omega = frequencies(e, f, &mu)?;
    Ok(z
        .z
        .iter()
        .zip(&omega)
        .map(|(zj, &w)| Complex64::new(0.0, w) * zj)
        .collect())
}

/// Integration statistics and conservation monitors.
#[derive(Debug, Clone, Default)]
pub struct IntegratorStats {
    pub steps: u64,
    pub rejected: u64,
    pub max_constraint_drift: f64,
    pub max_mu_drift: f64,
}

/// A sampled trajectory with its field tag and conservation monitors;
/// `failed` is set instead of silently returning a truncated sample.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<EllipsoidPoint>,
    pub field_tag: String,
    pub stats: IntegratorStats,
    pub failed: bool,
}

impl Trajectory {
    pub fn to_csv(&self, e: &Ellipsoid) -> String {
        let axes = e.axes_f64();
        let mut out = String::from("t");
        for j in 1..=axes.len() {
            out.push_str(&format!(",re_z{j},im_z{j}"));
        }
        out.push_str(",constraint_drift\n");
        for (t, p) in self.times.iter().zip(&self.points) {
            out.push_str(&format!("{t:.12e}"));
            for zj in &p.z {
                out.push_str(&format!(",{:.12e},{:.12e}", zj.re, zj.im));
            }
            let drift = (constraint_value(&axes, &p.z) - 1.0).abs();
            out.push_str(&format!(",{drift:.3e}\n"));
        }
        out
    }
}

/// Dormand-Prince 5(4) adaptive step on a plain state vector.
fn rk45_step(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    y: &[f64],
    h: f64,
) -> (Vec<f64>, f64) {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let dim = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    k.push(field(y));
    for s in 0..6 {
        let mut stage = y.to_vec();
        for (i, ks) in k.iter().enumerate() {
            let a = A[s][i];
            if a != 0.0 {
                for d in 0..dim {
                    stage[d] += h * a * ks[d];
                }
            }
        }
        k.push(field(&stage));
    }
    let mut y5 = y.to_vec();
    let mut err = vec![0.0f64; dim];
    for (i, ks) in k.iter().enumerate() {
        for d in 0..dim {
            y5[d] += h * B5[i] * ks[d];
            err[d] += h * (B5[i] - B4[i]) * ks[d];
        }
    }
    let err_norm = err.iter().map(|e| e * e).sum::<f64>().sqrt();
    (y5, err_norm)
}

fn state_from_point(p: &EllipsoidPoint) -> Vec<f64> {
    p.z.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn point_from_state(y: &[f64]) -> EllipsoidPoint {
    EllipsoidPoint {
        z: y.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect(),
    }
}

/// Adaptive integration of the perturbed Reeb field. The surface constraint
/// and all moment coordinates are monitored; a collapsing step marks the
/// sample as failed rather than returning a silently truncated result.
pub fn integrate(
    e: &Ellipsoid,
    f: &InvariantPerturbation,
    z0: &EllipsoidPoint,
    t_end: f64,
    tol: f64,
) -> Result<Trajectory, FlowError> {
    if !(1e-12..=1e-4).contains(&tol) {
        return Err(FlowError::InvalidTolerance(tol));
    }
    let axes = e.axes_f64();
    let defect = (constraint_value(&axes, &z0.z) - 1.0).abs();
    if defect > SURFACE_TOL {
        return Err(FlowError::OffSurface { defect });
    }
    let mu0 = moment_coordinates(&axes, &z0.z);
    let eps = f.epsilon;
    let profile = f.profile.clone();
    let axes_f = axes.clone();
    let field = move |y: &[f64]| -> Vec<f64> {
        let z: Vec<Complex64> = y.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let mu = moment_coordinates(&axes_f, &z);
        let g = profile.value(&mu);
        let grad = profile.gradient(&mu);
        let pairing: f64 = grad.iter().zip(&mu).map(|(d, m)| d * m).sum();
        let scale = (-eps * g).exp();
        let mut out = Vec::with_capacity(y.len());
        for (j, zj) in z.iter().enumerate() {
            let w = scale * (TAU / axes_f[j]) * (1.0 - eps * (grad[j] - pairing));
            let v = Complex64::new(0.0, w) * zj;
            out.push(v.re);
            out.push(v.im);
        }
        out
    };

    let mut y = state_from_point(z0);
    let mut t = 0.0f64;
    let mut h = (t_end / 100.0).min(0.1).max(1e-6);
    let mut stats = IntegratorStats::default();
    let mut times = vec![0.0];
    let mut points = vec![z0.clone()];
    let mut failed = false;
    let h_min = 1e-13 * t_end.max(1.0);
    while t < t_end {
        if h > t_end - t {
            h = t_end - t;
        }
        let (y_new, err) = rk45_step(&field, &y, h);
        let scale_norm = tol * (1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt());
        if err <= scale_norm * h.max(1e-3) {
            t += h;
            y = y_new;
            stats.steps += 1;
            let p = point_from_state(&y);
            let drift = (constraint_value(&axes, &p.z) - 1.0).abs();
            stats.max_constraint_drift = stats.max_constraint_drift.max(drift);
            let mu = moment_coordinates(&axes, &p.z);
            let mu_drift = mu
                .iter()
                .zip(&mu0)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            stats.max_mu_drift = stats.max_mu_drift.max(mu_drift);
            times.push(t);
            points.push(p);
            h *= (0.9 * (scale_norm * h.max(1e-3) / err.max(1e-300)).powf(0.2)).clamp(0.2, 5.0);
        } else {
            stats.rejected += 1;
            h *= 0.5;
        }
        if h < h_min {
            failed = true;
            break;
        }
    }
    Ok(Trajectory {
        times,
        points,
        field_tag: format!("reeb(eps={}, {:?})", f.epsilon, f.profile),
        stats,
        failed,
    })
}

/// Least-squares linear phase fit per factor; NaN where the factor radius
/// vanishes.
pub fn fit_frequencies(traj: &Trajectory) -> Vec<f64> {
    if traj.points.is_empty() {
        return Vec::new();
    }
    let n = traj.points[0].z.len();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if traj.points[0].z[j].norm() < 1e-8 {
            out.push(f64::NAN);
            continue;
        }
        // Unwrapped phases.
        let mut phases = Vec::with_capacity(traj.points.len());
        let mut prev = traj.points[0].z[j].arg();
        let mut acc = prev;
        phases.push(acc);
        for p in &traj.points[1..] {
            let raw = p.z[j].arg();
            let mut d = raw - prev;
            while d > std::f64::consts::PI {
                d -= TAU;
            }
            while d < -std::f64::consts::PI {
                d += TAU;
            }
            acc += d;
            prev = raw;
            phases.push(acc);
        }
        let m = traj.times.len() as f64;
        let t_mean = traj.times.iter().sum::<f64>() / m;
        let p_mean = phases.iter().sum::<f64>() / m;
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, p) in traj.times.iter().zip(&phases) {
            num += (t - t_mean) * (p - p_mean);
            den += (t - t_mean) * (t - t_mean);
        }
        out.push(num / den);
    }
    out
}

/// Outcome of a closing search.
#[derive(Debug, Clone)]
pub enum ClosingOutcome {
    Found(ClosingReport),
    NotFound { nearest: NearMiss },
}

#[derive(Debug, Clone)]
pub struct ClosingReport {
    pub t_star: f64,
    pub period: f64,
    pub ratio: (i64, i64),
    pub residual: f64,
    pub orbit: Trajectory,
}

/// The closest approach to a rational dependence that the scan saw.
#[derive(Debug, Clone)]
pub struct NearMiss {
    pub t: f64,
    pub ratio: (i64, i64),
    pub distance: f64,
}

pub fn closing_report_json(outcome: &ClosingOutcome) -> serde_json::Value {
    match outcome {
        ClosingOutcome::Found(r) => serde_json::json!({
            "found": true,
            "t_star": r.t_star,
            "period": r.period,
            "ratio": [r.ratio.0, r.ratio.1],
            "residual": r.residual,
        }),
        ClosingOutcome::NotFound { nearest } => serde_json::json!({
            "found": false,
            "nearest": {
                "t": nearest.t,
                "ratio": [nearest.ratio.0, nearest.ratio.1],
                "distance": nearest.distance,
            },
        }),
    }
}

fn gcd64(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a.abs()
}

/// Frequencies of the `(1 + t g)`-perturbed Reeb flow on the torus `mu`.
fn scaled_family_frequencies(
    axes: &[f64],
    profile: &Profile,
    t: f64,
    mu: &[f64],
) -> Vec<f64> {
    let g = profile.value(mu);
    let grad = profile.gradient(mu);
    let pairing: f64 = grad.iter().zip(mu).map(|(d, m)| d * m).sum();
    let denom = 1.0 + t * g;
    axes.iter()
        .enumerate()
        .map(|(j, &a)| (TAU / a) * (denom - t * (grad[j] - pairing)) / (denom * denom))
        .collect()
}

/// Search for `t* in [t_lo, t_hi]` at which the two frequencies of the
/// `(1 + t g)`-perturbed flow on the torus `mu_star` become rationally
/// dependent with a closed-orbit period below `bound`. The frequency ratio
/// is scanned, candidate rationals are bracketed, and the crossing is
/// bisected to full precision; the returned orbit is sampled from the
/// closed-form angular flow and its return residual reported.
pub fn find_closing_t(
    e: &Ellipsoid,
    profile: &Profile,
    t_range: (f64, f64),
    mu_star: &[f64],
    bound: f64,
) -> Result<ClosingOutcome, FlowError> {
    if e.n() != 2 {
        return Err(FlowError::Unsupported(
            "closing search is implemented for two-frequency flows (n = 2)".into(),
        ));
    }
    let axes = e.axes_f64();
    validate_simplex(mu_star, 2)?;
    if !profile.supports(mu_star) {
        return Err(FlowError::BadPerturbation(
            "the torus mu* is outside the support of the profile".into(),
        ));
    }
    // Rationally dependent axes are already closed at t = 0.
    if let Ok(t_period) = rational_period(e) {
        let period = crate::certified::rational_to_f64(&t_period);
        let z0 = EllipsoidPoint::on_torus(e, mu_star, &[0.0, 0.0])?;
        let orbit = sample_closed_form(&axes, profile, 0.0, &z0, period);
        return Ok(ClosingOutcome::Found(ClosingReport {
            t_star: 0.0,
            period,
            ratio: (1, 1),
            residual: 0.0,
            orbit,
        }));
    }
    let (t_lo, t_hi) = t_range;
    if !(t_hi > t_lo) {
        return Err(FlowError::Unsupported("empty t range".into()));
    }
    let grid = 1024usize;
    let rho = |t: f64| {
        let w = scaled_family_frequencies(&axes, profile, t, mu_star);
        w[0] / w[1]
    };
    let ts: Vec<f64> = (0..=grid)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / grid as f64)
        .collect();
    let rhos: Vec<f64> = ts.iter().map(|&t| rho(t)).collect();
    let rho_min = rhos.iter().cloned().fold(f64::INFINITY, f64::min);
    let rho_max = rhos.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let omega2_max = ts
        .iter()
        .map(|&t| scaled_family_frequencies(&axes, profile, t, mu_star)[1].abs())
        .fold(0.0f64, f64::max);
    let q_max = ((bound * omega2_max / TAU).floor() as i64).max(0);

    let mut best: Option<ClosingReport> = None;
    let mut nearest = NearMiss {
        t: t_lo,
        ratio: (0, 1),
        distance: f64::INFINITY,
    };
    for q in 1..=q_max {
        let p_lo = (q as f64 * rho_min).ceil() as i64;
        let p_hi = (q as f64 * rho_max).floor() as i64;
        for p in p_lo..=p_hi.max(p_lo - 1) {
            if p <= 0 || gcd64(p, q) != 1 {
                continue;
            }
            let target = p as f64 / q as f64;
            // Bracket a sign change of rho(t) - target.
            let mut bracket = None;
            for i in 0..grid {
                let d0 = rhos[i] - target;
                let d1 = rhos[i + 1] - target;
                if d0 == 0.0 {
                    bracket = Some((ts[i], ts[i]));
                    break;
                }
                if d0 * d1 < 0.0 {
                    bracket = Some((ts[i], ts[i + 1]));
                    break;
                }
            }
            let Some((mut lo, mut hi)) = bracket else {
                continue;
            };
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if (rho(lo) - target) * (rho(mid) - target) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let t_star = 0.5 * (lo + hi);
            let w = scaled_family_frequencies(&axes, profile, t_star, mu_star);
            let period = TAU * p as f64 / w[0];
            if period > bound * (1.0 + 1e-9) {
                continue;
            }
            let z0 = EllipsoidPoint::on_torus(e, mu_star, &[0.0, 0.0])?;
            let residual = {
                let dz: f64 = z0
                    .z
                    .iter()
                    .zip(&w)
                    .map(|(zj, &wj)| {
                        (Complex64::from_polar(1.0, wj * period) - 1.0).norm_sqr() * zj.norm_sqr()
                    })
                    .sum();
                dz.sqrt()
            };
            if best.as_ref().map(|b| t_star < b.t_star).unwrap_or(true) {
                let orbit = sample_closed_form(&axes, profile, t_star, &z0, period);
                best = Some(ClosingReport {
                    t_star,
                    period,
                    ratio: (p, q),
                    residual,
                    orbit,
                });
            }
        }
        // Track the nearest miss for the report.
        for (i, &r) in rhos.iter().enumerate() {
            let p_near = (q as f64 * r).round() as i64;
            if p_near <= 0 {
                continue;
            }
            let d = (r - p_near as f64 / q as f64).abs();
            if d < nearest.distance {
                nearest = NearMiss {
                    t: ts[i],
                    ratio: (p_near, q),
                    distance: d,
                };
            }
        }
    }
    match best {
        Some(report) => Ok(ClosingOutcome::Found(report)),
        None => Ok(ClosingOutcome::NotFound { nearest }),
    }
}

/// Sample the angular closed-form flow of the `(1 + t g)`-perturbation.
fn sample_closed_form(
    axes: &[f64],
    profile: &Profile,
    t_param: f64,
    z0: &EllipsoidPoint,
    duration: f64,
) -> Trajectory {
    let mu = moment_coordinates(axes, &z0.z);
    let w = scaled_family_frequencies(axes, profile, t_param, &mu);
    let samples = 256usize;
    let mut times = Vec::with_capacity(samples + 1);
    let mut points = Vec::with_capacity(samples + 1);
    for i in 0..=samples {
        let t = duration * i as f64 / samples as f64;
        let z = z0
            .z
            .iter()
            .zip(&w)
            .map(|(zj, &wj)| zj * Complex64::from_polar(1.0, wj * t))
            .collect();
        times.push(t);
        points.push(EllipsoidPoint { z });
    }
    Trajectory {
        times,
        points,
        field_tag: format!("closing(t={t_param:.6}, {profile:?})"),
        stats: IntegratorStats::default(),
        failed: false,
    }
}

/// An abstract two-torus Reeb flow `R_a = a_1 R_1 + a_2 R_2` spanned by two
/// commuting generators of period 1.
#[derive(Debug, Clone)]
pub struct TorusFlowSpec {
    pub a: (crate::certified::CertifiedReal, crate::certified::CertifiedReal),
    pub generators: (String, String),
}

impl TorusFlowSpec {
    pub fn new(
        a1: crate::certified::CertifiedReal,
        a2: crate::certified::CertifiedReal,
    ) -> Self {
        TorusFlowSpec {
            a: (a1, a2),
            generators: (
                "prequantization circle (period 1)".into(),
                "lifted Hamiltonian circle (period 1)".into(),
            ),
        }
    }

    /// Predicted period `lcm(1/a_1, 1/a_2)` when representable and finite.
    pub fn predicted_period(&self) -> Option<crate::certified::CertifiedReal> {
        let inv1 = self.a.0.reciprocal()?;
        let inv2 = self.a.1.reciprocal()?;
        inv1.generalized_lcm(&inv2, crate::certified::Budget::default())
            .ok()
            .flatten()
    }
}

/// Smallest full-state return time of the torus flow within `t_max`, or
/// `None`. Candidates are the exact returns of the first factor; the second
/// factor decides within the state-distance tolerance.
pub fn detect_period_torus(spec: &TorusFlowSpec, t_max: f64, tol: f64) -> Option<f64> {
    let a1 = spec.a.0.to_f64();
    let a2 = spec.a.1.to_f64();
    let m_max = (a1 * t_max).floor() as i64;
    for m in 1..=m_max {
        let t = m as f64 / a1;
        let d2 = (Complex64::from_polar(1.0, TAU * a2 * t) - 1.0).norm();
        if d2 <= tol {
            return Some(t);
        }
    }
    None
}

/// Smallest full-state return time along a sampled trajectory.
pub fn detect_period_trajectory(traj: &Trajectory, t_min: f64, tol: f64) -> Option<f64> {
    let start = traj.points.first()?;
    for (t, p) in traj.times.iter().zip(&traj.points) {
        if *t < t_min.max(1e-12) {
            continue;
        }
        if p.distance(start) <= tol {
            return Some(*t);
        }
    }
    None
}

/// Extended-complex value of the base Hamiltonian
/// `H(x, y) = (pi/2) (|x|^2/(1+|x|^2) + |y|^2/(1+|y|^2)) + 1`;
/// non-finite coordinates are the point at infinity of the factor.
pub fn base_hamiltonian(x: Complex64, y: Complex64) -> f64 {
    let term = |z: Complex64| {
        if !z.re.is_finite() || !z.im.is_finite() {
            1.0
        } else {
            let r2 = z.norm_sqr();
            r2 / (1.0 + r2)
        }
    };
    std::f64::consts::PI / 2.0 * (term(x) + term(y)) + 1.0
}

/// The four critical points of the base Hamiltonian with their values.
pub fn base_critical_values() -> Vec<((&'static str, &'static str), f64)> {
    let inf = Complex64::new(f64::INFINITY, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    vec![
        (("0", "0"), base_hamiltonian(zero, zero)),
        (("0", "inf"), base_hamiltonian(zero, inf)),
        (("inf", "0"), base_hamiltonian(inf, zero)),
        (("inf", "inf"), base_hamiltonian(inf, inf)),
    ]
}

/// Result of calibrating the factor flow of the base Hamiltonian.
#[derive(Debug, Clone)]
pub struct BaseCalibration {
    /// Scale `c` on the round product form making the flow 1-periodic.
    pub scale: f64,
    /// Measured period at unit scale.
    pub period_at_unit_scale: f64,
    /// Return distance after time 1 under the calibrated flow.
    pub return_residual: f64,
    /// Maximal drift of H along the calibrated trajectory.
    pub h_drift: f64,
}

/// One-factor Hamiltonian vector field of `h = (pi/2) r^2/(1+r^2)` with
/// respect to `c` times the round chart form `2 dx dy / (1+r^2)^2`.
fn base_factor_field(c: f64) -> impl Fn(&[f64]) -> Vec<f64> {
    move |y: &[f64]| {
        let (x, yy) = (y[0], y[1]);
        let r2 = x * x + yy * yy;
        let d = (1.0 + r2) * (1.0 + r2);
        // dh = pi (x dx + y dy) / (1+r^2)^2; omega = c * 2/(1+r^2)^2 dx^dy.
        let hx = std::f64::consts::PI * x / d;
        let hy = std::f64::consts::PI * yy / d;
        let w = 2.0 * c / d;
        vec![hy / w, -hx / w]
    }
}

fn integrate_plain(
    field: &dyn Fn(&[f64]) -> Vec<f64>,
    y0: &[f64],
    t_end: f64,
    tol: f64,
) -> Result<Vec<(f64, Vec<f64>)>, FlowError> {
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut h = t_end / 256.0;
    let mut out = vec![(0.0, y.clone())];
    let h_min = 1e-13 * t_end.max(1.0);
    while t < t_end {
        if h > t_end - t {
            h = t_end - t;
        }
        let (y_new, err) = rk45_step(field, &y, h);
        let scale = tol * (1.0 + y.iter().map(|v| v * v).sum::<f64>().sqrt());
        if err <= scale * h.max(1e-3) {
            t += h;
            y = y_new;
            out.push((t, y.clone()));
            h *= (0.9 * (scale * h.max(1e-3) / err.max(1e-300)).powf(0.2)).clamp(0.2, 5.0);
        } else {
            h *= 0.5;
        }
        if h < h_min {
            return Err(FlowError::StepFailure { t, h });
        }
    }
    Ok(out)
}

/// Numerically determine the normalization constant `c` on the round product
/// form making the base Hamiltonian flow 1-periodic on each factor, then
/// verify 1-periodicity, fixed poles and conservation of H under the
/// calibrated flow.
pub fn base_flow_calibrate() -> Result<BaseCalibration, FlowError> {
    // Measure the return time at unit scale from |z| = 1.
    let field1 = base_factor_field(1.0);
    let samples = integrate_plain(&field1, &[1.0, 0.0], 10.0, 1e-11)?;
    let mut period = None;
    let mut prev_angle = 0.0f64;
    let mut total = 0.0f64;
    for (t, y) in &samples[1..] {
        let ang = y[1].atan2(y[0]);
        let mut d = ang - prev_angle;
        while d > std::f64::consts::PI {
            d -= TAU;
        }
        while d < -std::f64::consts::PI {
            d += TAU;
        }
        total += d;
        prev_angle = ang;
        if total.abs() >= TAU {
            period = Some(*t);
            break;
        }
    }
    let rough = period.ok_or_else(|| {
        FlowError::CalibrationFailure("no full turn within the scan horizon".into())
    })?;
    // Polish by bisecting on the accumulated angle reaching a full turn.
    let mut lo = rough * 0.9;
    let mut hi = rough * 1.1;
    let angle_at = |t: f64| -> Result<f64, FlowError> {
        let path = integrate_plain(&field1, &[1.0, 0.0], t, 1e-11)?;
        let mut prev = 0.0f64;
        let mut total = 0.0f64;
        for (_, y) in &path[1..] {
            let ang = y[1].atan2(y[0]);
            let mut d = ang - prev;
            while d > std::f64::consts::PI {
                d -= TAU;
            }
            while d < -std::f64::consts::PI {
                d += TAU;
            }
            total += d;
            prev = ang;
        }
        Ok(total)
    };
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let a = angle_at(mid)?;
        if a.abs() < TAU {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let period_unit = 0.5 * (lo + hi);
    // The period scales linearly with c; want period 1.
    let scale = 1.0 / period_unit;
    // Verification under the calibrated flow.
    let field_c = base_factor_field(scale);
    let path = integrate_plain(&field_c, &[1.0, 0.0], 1.0, 1e-11)?;
    let end = &path.last().unwrap().1;
    let return_residual = ((end[0] - 1.0).powi(2) + end[1].powi(2)).sqrt();
    let h_of = |y: &[f64]| {
        let r2 = y[0] * y[0] + y[1] * y[1];
        std::f64::consts::PI / 2.0 * r2 / (1.0 + r2)
    };
    let h0 = h_of(&path[0].1);
    let h_drift = path
        .iter()
        .map(|(_, y)| (h_of(y) - h0).abs())
        .fold(0.0f64, f64::max);
    // Poles are fixed points: the field vanishes at the origin.
    let at_zero = field_c(&[0.0, 0.0]);
    if at_zero.iter().any(|v| v.abs() > 1e-14) {
        return Err(FlowError::CalibrationFailure("pole is not fixed".into()));
    }
    if return_residual > 1e-6 {
        return Err(FlowError::CalibrationFailure(format!(
            "calibrated flow returns with residual {return_residual:.3e}"
        )));
    }
    Ok(BaseCalibration {
        scale,
        period_at_unit_scale: period_unit,
        return_residual,
        h_drift,
    })
}
