//! Generalized least common multiples and constructive simultaneous
//! Dirichlet approximation. The approximation operations emit
//! [`RationalApproximant`] certificates whose defining inequalities are
//! re-verified by interval comparison before they are returned.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::certified::{
    rational_json, Budget, CertifiedError, CertifiedReal, RatInterval, Rationality,
};
use crate::spectrum::Ellipsoid;

/// Exhaustive-scan ceiling; requests beyond it fail with the required size.
pub const SCAN_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, thiserror::Error)]
pub enum DiophantineError {
    #[error(transparent)]
    Certified(#[from] CertifiedError),
    #[error("rationality of the ratio is not decidable from the inputs")]
    UnknownRationality,
    #[error("exhaustive scan needs N = {required} > cap {cap}")]
    SearchExhausted { required: u128, cap: u64 },
    #[error("no certified solution found up to N = {0}")]
    NoSolution(u64),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Generalized lcm of a pair; `None` encodes the infinite case (irrational
/// ratio). The result is exact rational whenever both inputs are.
pub fn lcm_pair(
    s1: &CertifiedReal,
    s2: &CertifiedReal,
    budget: Budget,
) -> Result<Option<CertifiedReal>, DiophantineError> {
    match s1.ratio_to(s2, budget) {
        Ok(Rationality::Irrational) => Ok(None),
        Ok(Rationality::Rational(_)) => {
            s1.generalized_lcm(s2, budget).map_err(DiophantineError::from)
        }
        Err(CertifiedError::UnknownRationality { .. }) => {
            Err(DiophantineError::UnknownRationality)
        }
        Err(e) => Err(e.into()),
    }
}

/// lcm of two positive rationals `p1/q1`, `p2/q2` in lowest terms:
/// `lcm(p1, p2) / gcd(q1, q2)`.
pub fn lcm_pair_rational(a: &BigRational, b: &BigRational) -> BigRational {
    let pn = a.numer().lcm(b.numer());
    let qd = a.denom().gcd(b.denom());
    BigRational::new(pn, qd)
}

/// Least positive `L` with `L / v` integer for every `v`.
pub fn lcm_tuple(values: &[BigRational]) -> Result<BigRational, DiophantineError> {
    if values.is_empty() {
        return Err(DiophantineError::Precondition("empty tuple".into()));
    }
    for v in values {
        if !v.is_positive() {
            return Err(DiophantineError::Precondition(format!(
                "lcm of non-positive value {v}"
            )));
        }
    }
    let mut acc = values[0].clone();
    for v in &values[1..] {
        acc = lcm_pair_rational(&acc, v);
    }
    Ok(acc)
}

/// Rational enclosure of `n_val^(1/root)` with width `2^-bits`.
fn nth_root_interval(n_val: u64, root: u32, bits: u32) -> RatInterval {
    let scaled = BigInt::from(n_val) << (root * bits);
    let s = scaled.nth_root(root);
    let den = BigInt::one() << bits;
    RatInterval {
        lo: BigRational::new(s.clone(), den.clone()),
        hi: BigRational::new(s + BigInt::one(), den),
    }
}

/// Output of the simultaneous Dirichlet scan: `|a_i q_i - T'| <= bounds[i]`,
/// certified, with `bounds[i]` a rational upper enclosure of `a_i / N^(1/n)`.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub t_prime: u64,
    pub q: Vec<u64>,
    pub bounds: Vec<BigRational>,
}

impl DirichletSolution {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "t_prime": self.t_prime,
            "q": self.q.clone(),
            "bounds": self.bounds.iter().map(rational_json).collect::<Vec<_>>(),
        })
    }
}

/// Interval-certified check of `|a*q - t| <= a / root_iv`, refining up to the
/// budget. Returns false when the inequality cannot be certified.
fn certify_dirichlet_bound(
    a: &CertifiedReal,
    q: u64,
    t: u64,
    root_iv: &RatInterval,
    budget: Budget,
) -> bool {
    let err = a
        .scale_int(q as i64)
        .sub(&CertifiedReal::from_integer(t as i64));
    let mut bits = 64u32;
    loop {
        let e_iv = err.interval(bits);
        let a_iv = a.interval(bits);
        let abs_hi = e_iv.hi.abs().max(e_iv.lo.abs());
        let bound_lo = &a_iv.lo / &root_iv.hi;
        if abs_hi <= bound_lo {
            return true;
        }
        // Reject when even the most optimistic reading fails.
        let abs_lo = if e_iv.lo.is_negative() && e_iv.hi.is_positive() {
            BigRational::zero()
        } else {
            e_iv.lo.abs().min(e_iv.hi.abs())
        };
        let bound_hi = &a_iv.hi / &root_iv.lo;
        if abs_lo > bound_hi {
            return false;
        }
        if bits >= budget.bits {
            return false;
        }
        bits = (bits * 2).min(budget.bits);
    }
}

/// Simultaneous Dirichlet approximation: the smallest `T' <= N` admitting
/// integers `q_i >= 1` with `|a_i q_i - T'| <= a_i / N^(1/n)`, every
/// inequality interval-certified. A fast float prefilter discards clearly
/// failing candidates before any exact arithmetic runs.
pub fn dirichlet_simultaneous(
    a: &[CertifiedReal],
    n_limit: u64,
    budget: Budget,
) -> Result<DirichletSolution, DiophantineError> {
    if n_limit < 2 {
        return Err(DiophantineError::Precondition("N must be >= 2".into()));
    }
    if a.is_empty() {
        return Err(DiophantineError::Precondition("empty input".into()));
    }
    if n_limit > SCAN_CAP {
        return Err(DiophantineError::SearchExhausted {
            required: n_limit as u128,
            cap: SCAN_CAP,
        });
    }
    for v in a {
        if !v.is_positive_certified(budget)? {
            return Err(DiophantineError::Precondition(format!(
                "input {v} not certified positive"
            )));
        }
    }
    let n = a.len() as u32;
    let root_iv = nth_root_interval(n_limit, n, 96);
    let a_f64: Vec<f64> = a.iter().map(|v| v.to_f64()).collect();
    let root_f64 = (n_limit as f64).powf(1.0 / n as f64);
    let bound_f64: Vec<f64> = a_f64.iter().map(|v| v / root_f64).collect();

    'scan: for t in 1..=n_limit {
        let mut qs = Vec::with_capacity(a.len());
        for (i, &af) in a_f64.iter().enumerate() {
            let raw = (t as f64 / af).round();
            let q = if raw < 1.0 { 1 } else { raw as u64 };
            // The float error must be within the bound up to slack; the
            // certified check below is the authority.
            let err = (af * q as f64 - t as f64).abs();
            if err > bound_f64[i] * (1.0 + 1e-9) + 1e-12 {
                continue 'scan;
            }
            qs.push(q);
        }
        let certified = a
            .iter()
            .zip(&qs)
            .all(|(v, &q)| certify_dirichlet_bound(v, q, t, &root_iv, budget));
        if certified {
            let bounds = a
                .iter()
                .map(|v| v.upper(96) / &root_iv.lo)
                .collect();
            return Ok(DirichletSolution {
                t_prime: t,
                q: qs,
                bounds,
            });
        }
    }
    Err(DiophantineError::NoSolution(n_limit))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `r_i <= a_i <= (1 + eps/T) r_i`, with `T = lcm(r)`.
    InnerOuter,
    /// `r_i / (1 + eps/T) <= a_i <= r_i`, with `T = lcm(1/r_1, 1/r_2)`.
    OuterOnly,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::InnerOuter => "inner_outer",
            Direction::OuterOnly => "outer_only",
        }
    }
}

/// A rationally-dependent approximant of a tuple of certified reals, with
/// the quality parameter and the recomputed period of the approximant.
#[derive(Debug, Clone)]
pub struct RationalApproximant {
    pub r: Vec<BigRational>,
    pub t: BigRational,
    pub epsilon: BigRational,
    pub direction: Direction,
}

impl RationalApproximant {
    /// Re-verify the defining inequalities against the target by independent
    /// interval comparison, and the period by recomputation.
    pub fn verify(
        &self,
        target: &[CertifiedReal],
        budget: Budget,
    ) -> Result<(), DiophantineError> {
        if target.len() != self.r.len() {
            return Err(DiophantineError::Precondition("length mismatch".into()));
        }
        let t_expected = match self.direction {
            Direction::InnerOuter => lcm_tuple(&self.r)?,
            Direction::OuterOnly => {
                let inv: Vec<BigRational> = self.r.iter().map(|x| x.recip()).collect();
                lcm_tuple(&inv)?
            }
        };
        if t_expected != self.t {
            return Err(DiophantineError::Precondition(format!(
                "stored period {} != recomputed {}",
                self.t, t_expected
            )));
        }
        let factor = BigRational::one() + &self.epsilon / &self.t;
        for (ri, ai) in self.r.iter().zip(target) {
            let r = CertifiedReal::from_rational(ri.clone());
            let stretched = CertifiedReal::from_rational(ri * &factor);
            let (lo, hi) = match self.direction {
                Direction::InnerOuter => (r, stretched),
                Direction::OuterOnly => (
                    CertifiedReal::from_rational(ri / &factor),
                    CertifiedReal::from_rational(ri.clone()),
                ),
            };
            if !lo.le(ai, budget)? || !ai.le(&hi, budget)? {
                return Err(DiophantineError::Precondition(format!(
                    "certificate inequality failed at r = {ri}"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "r": self.r.iter().map(rational_json).collect::<Vec<_>>(),
            "T": rational_json(&self.t),
            "epsilon": rational_json(&self.epsilon),
            "direction": self.direction.as_str(),
            "certificate": { "checked": true },
        })
    }
}

fn ceil_to_u128(r: &BigRational) -> u128 {
    r.ceil().to_integer().to_u128().unwrap_or(u128::MAX)
}

/// Scan size for the inner-outer construction: `ceil((2 max a_i / eps)^n)`.
fn required_scan(e: &Ellipsoid, eps: &BigRational) -> u128 {
    let max_upper = e.axis(e.n()).upper(64);
    let base = BigRational::from_integer(BigInt::from(2)) * max_upper / eps;
    let mut pow = BigRational::one();
    for _ in 0..e.n() {
        pow *= &base;
    }
    ceil_to_u128(&pow)
}

/// Rationally-dependent inner-outer approximant: `r_i <= a_i <= (1+eps/T) r_i`
/// with `T = lcm(r)`, built from the Dirichlet scan with
/// `N > (2 max a_i / eps)^n` and `r_i = (T' - eps/2) / q_i`.
pub fn approx_ellipsoid(
    e: &Ellipsoid,
    eps: &BigRational,
) -> Result<RationalApproximant, DiophantineError> {
    let budget = e.budget();
    if !eps.is_positive() {
        return Err(DiophantineError::Precondition("epsilon must be positive".into()));
    }
    let eps_cert = CertifiedReal::from_rational(eps.clone());
    if !eps_cert
        .compare(e.axis(1), budget)?
        .is_lt()
    {
        return Err(DiophantineError::Precondition(format!(
            "epsilon {eps} must be smaller than the least axis {}",
            e.axis(1)
        )));
    }
    // Exact rational axes short-circuit with the identity approximant.
    if e.is_rational() {
        let r: Vec<BigRational> = e
            .axes()
            .iter()
            .map(|a| a.as_rational().unwrap().clone())
            .collect();
        let t = lcm_tuple(&r)?;
        let out = RationalApproximant {
            r,
            t,
            epsilon: eps.clone(),
            direction: Direction::InnerOuter,
        };
        out.verify(e.axes(), budget)?;
        return Ok(out);
    }
    let required = required_scan(e, eps);
    if required > SCAN_CAP as u128 {
        return Err(DiophantineError::SearchExhausted {
            required,
            cap: SCAN_CAP,
        });
    }
    let n_limit = (required as u64).max(2);
    let sol = dirichlet_simultaneous(e.axes(), n_limit, budget)?;
    let half_eps = eps / BigRational::from_integer(BigInt::from(2));
    let t_shifted = BigRational::from_integer(BigInt::from(sol.t_prime)) - &half_eps;
    if !t_shifted.is_positive() {
        return Err(DiophantineError::NoSolution(n_limit));
    }
    let r: Vec<BigRational> = sol
        .q
        .iter()
        .map(|&q| &t_shifted / BigRational::from_integer(BigInt::from(q)))
        .collect();
    let t = lcm_tuple(&r)?;
    let out = RationalApproximant {
        r,
        t,
        epsilon: eps.clone(),
        direction: Direction::InnerOuter,
    };
    out.verify(e.axes(), budget)?;
    Ok(out)
}

/// Outer approximant of a pair: `r_i / (1 + delta/T) <= a_i <= r_i` with
/// `T = lcm(1/r_1, 1/r_2)` finite, via the Dirichlet scan on `(a_1, a_2)`
/// and `r_i = q_i / (p - delta/2)`.
pub fn approx_pair_upper(
    a: (&CertifiedReal, &CertifiedReal),
    delta: &BigRational,
) -> Result<RationalApproximant, DiophantineError> {
    let budget = Budget::default();
    if !delta.is_positive() || delta >= &BigRational::one() {
        return Err(DiophantineError::Precondition(
            "delta must lie in (0, 1)".into(),
        ));
    }
    let targets = [a.0.clone(), a.1.clone()];
    for v in &targets {
        if !v.is_positive_certified(budget)? {
            return Err(DiophantineError::Precondition(format!(
                "input {v} not certified positive"
            )));
        }
    }
    if a.0.is_exact() && a.1.is_exact() {
        let r = vec![
            a.0.as_rational().unwrap().clone(),
            a.1.as_rational().unwrap().clone(),
        ];
        let inv: Vec<BigRational> = r.iter().map(|x| x.recip()).collect();
        let t = lcm_tuple(&inv)?;
        let out = RationalApproximant {
            r,
            t,
            epsilon: delta.clone(),
            direction: Direction::OuterOnly,
        };
        out.verify(&targets, budget)?;
        return Ok(out);
    }
    // N > (2 / (delta * min a_i))^2 so that 1/sqrt(N) < (delta/2) a_i.
    let min_lower = {
        let l0 = a.0.lower(64);
        let l1 = a.1.lower(64);
        if l0 < l1 {
            l0
        } else {
            l1
        }
    };
    let base = BigRational::from_integer(BigInt::from(2)) / (delta * &min_lower);
    let required = ceil_to_u128(&(&base * &base)) + 1;
    if required > SCAN_CAP as u128 {
        return Err(DiophantineError::SearchExhausted {
            required,
            cap: SCAN_CAP,
        });
    }
    let n_limit = (required as u64).max(2);
    let root_iv = nth_root_interval(n_limit, 2, 96);
    let a_f64 = [a.0.to_f64(), a.1.to_f64()];
    let inv_root = 1.0 / (n_limit as f64).sqrt();

    'scan: for p in 1..=n_limit {
        let mut qs = [0u64; 2];
        for i in 0..2 {
            let raw = (p as f64 * a_f64[i]).round();
            let q = if raw < 1.0 { 1 } else { raw as u64 };
            if (p as f64 * a_f64[i] - q as f64).abs() > inv_root * (1.0 + 1e-9) + 1e-12 {
                continue 'scan;
            }
            qs[i] = q;
        }
        // Certified |p a_i - q_i| <= 1/sqrt(N).
        let ok = (0..2).all(|i| {
            let err = targets[i]
                .scale_int(p as i64)
                .sub(&CertifiedReal::from_integer(qs[i] as i64));
            let e_iv = err.interval(budget.bits.min(128));
            let abs_hi = e_iv.hi.abs().max(e_iv.lo.abs());
            abs_hi <= root_iv.lo.recip()
        });
        if !ok {
            continue;
        }
        let denom = BigRational::from_integer(BigInt::from(p))
            - delta / BigRational::from_integer(BigInt::from(2));
        if !denom.is_positive() {
            continue;
        }
        let r: Vec<BigRational> = qs
            .iter()
            .map(|&q| BigRational::from_integer(BigInt::from(q)) / &denom)
            .collect();
        let inv: Vec<BigRational> = r.iter().map(|x| x.recip()).collect();
        let t = lcm_tuple(&inv)?;
        let out = RationalApproximant {
            r,
            t,
            epsilon: delta.clone(),
            direction: Direction::OuterOnly,
        };
        if out.verify(&targets, budget).is_ok() {
            return Ok(out);
        }
    }
    Err(DiophantineError::NoSolution(n_limit))
}
