//! Exact rationals extended by a small set of declared irrational constants
//! (`sqrt(k)` for square-free `k`, `pi`, `e`), with interval enclosures that
//! can be refined on demand. A [`CertifiedReal`] is a rational linear
//! combination of `1` and these constants, so equality is structural and
//! every comparison is either decided exactly or certified by disjoint
//! enclosures at some precision.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use once_cell::sync::Lazy;

/// Refinement budget for interval comparisons, in bits of enclosure width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub bits: u32,
}

impl Budget {
    pub const fn new(bits: u32) -> Self {
        Budget { bits }
    }
}

impl Default for Budget {
    fn default() -> Self {
        Budget { bits: 256 }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum CertifiedError {
    #[error("cannot separate {lhs} and {rhs} within {bits} bits and they are not provably equal")]
    UnresolvableOrder { lhs: String, rhs: String, bits: u32 },
    #[error("rationality of the ratio {lhs} : {rhs} is not decidable from the declared constants")]
    UnknownRationality { lhs: String, rhs: String },
    #[error("invalid value: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A declared irrational constant. `Sqrt(k)` keeps `k` square-free and >= 2,
/// so distinct constants are linearly independent over the rationals together
/// with 1 (within each of the classes sqrt / pi / e).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SymbolicConstant {
    Sqrt(u64),
    Pi,
    E,
}

impl fmt::Display for SymbolicConstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymbolicConstant::Sqrt(k) => write!(f, "sqrt({k})"),
            SymbolicConstant::Pi => write!(f, "pi"),
            SymbolicConstant::E => write!(f, "e"),
        }
    }
}

/// Closed rational interval.
#[derive(Debug, Clone, PartialEq)]
pub struct RatInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl RatInterval {
    pub fn point(v: BigRational) -> Self {
        RatInterval { lo: v.clone(), hi: v }
    }

    fn add(&self, other: &RatInterval) -> RatInterval {
        RatInterval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    fn scale(&self, c: &BigRational) -> RatInterval {
        if c.is_negative() {
            RatInterval {
                lo: &self.hi * c,
                hi: &self.lo * c,
            }
        } else {
            RatInterval {
                lo: &self.lo * c,
                hi: &self.hi * c,
            }
        }
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn midpoint_f64(&self) -> f64 {
        let mid = (&self.lo + &self.hi) / BigRational::from_integer(BigInt::from(2));
        mid.to_f64().unwrap_or(f64::NAN)
    }
}

static ENCLOSURE_CACHE: Lazy<RwLock<HashMap<SymbolicConstant, (u32, RatInterval)>>> =
    Lazy::new(|| RwLock::new(HashMap::new()));

fn pow2(bits: u32) -> BigInt {
    BigInt::one() << bits
}

/// Enclosure of `sqrt(k)` with width at most `2^-bits`.
fn sqrt_enclosure(k: u64, bits: u32) -> RatInterval {
    // isqrt(k * 4^bits) / 2^bits brackets sqrt(k) from below.
    let scaled = BigInt::from(k) << (2 * bits);
    let s = scaled.sqrt();
    let den = pow2(bits);
    RatInterval {
        lo: BigRational::new(s.clone(), den.clone()),
        hi: BigRational::new(s + BigInt::one(), den),
    }
}

/// Enclosure of `arctan(1/m)` by the alternating Taylor series, with the
/// first omitted term as a rigorous error bound.
fn arctan_inv_enclosure(m: u64, bits: u32) -> RatInterval {
    let x = BigRational::new(BigInt::one(), BigInt::from(m));
    let x2 = &x * &x;
    let mut term = x.clone();
    let mut sum = BigRational::zero();
    let mut k: u64 = 0;
    let threshold = BigRational::new(BigInt::one(), pow2(bits + 4));
    loop {
        let contrib = &term / BigRational::from_integer(BigInt::from(2 * k + 1));
        if k % 2 == 0 {
            sum += &contrib;
        } else {
            sum -= &contrib;
        }
        term *= &x2;
        k += 1;
        let next = &term / BigRational::from_integer(BigInt::from(2 * k + 1));
        if next < threshold {
            // Alternating series: the true value is within `next` of `sum`.
            return RatInterval {
                lo: &sum - &next,
                hi: &sum + &next,
            };
        }
    }
}

/// Machin's formula: pi = 16 arctan(1/5) - 4 arctan(1/239).
fn pi_enclosure(bits: u32) -> RatInterval {
    let a = arctan_inv_enclosure(5, bits + 6);
    let b = arctan_inv_enclosure(239, bits + 6);
    let sixteen = BigRational::from_integer(BigInt::from(16));
    let four = BigRational::from_integer(BigInt::from(4));
    let a = a.scale(&sixteen);
    let b = b.scale(&-four);
    a.add(&b)
}

/// e = sum 1/k!, with tail bound 2/(K+1)!.
fn e_enclosure(bits: u32) -> RatInterval {
    let mut sum = BigRational::one();
    let mut term = BigRational::one();
    let threshold = BigRational::new(BigInt::one(), pow2(bits + 2));
    let mut k: u64 = 1;
    loop {
        term /= BigRational::from_integer(BigInt::from(k));
        sum += &term;
        k += 1;
        let tail = &term * BigRational::new(BigInt::from(2), BigInt::from(k));
        if tail < threshold {
            return RatInterval {
                lo: sum.clone(),
                hi: &sum + &tail,
            };
        }
    }
}

fn constant_enclosure(c: SymbolicConstant, bits: u32) -> RatInterval {
    if let Some((cached_bits, iv)) = ENCLOSURE_CACHE.read().unwrap().get(&c) {
        if *cached_bits >= bits {
            return iv.clone();
        }
    }
    let iv = match c {
        SymbolicConstant::Sqrt(k) => sqrt_enclosure(k, bits),
        SymbolicConstant::Pi => pi_enclosure(bits),
        SymbolicConstant::E => e_enclosure(bits),
    };
    ENCLOSURE_CACHE
        .write()
        .unwrap()
        .insert(c, (bits, iv.clone()));
    iv
}

/// A certified real number: `rational + sum coeff_i * constant_i` with exact
/// rational coefficients. The representation is canonical (no zero
/// coefficients), so structural equality decides provable equality.
#[derive(Debug, Clone, PartialEq)]
pub struct CertifiedReal {
    rational: BigRational,
    terms: BTreeMap<SymbolicConstant, BigRational>,
}

impl CertifiedReal {
    pub fn from_rational(r: BigRational) -> Self {
        CertifiedReal {
            rational: r,
            terms: BTreeMap::new(),
        }
    }

    pub fn from_integer(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Self::from_integer(0)
    }

    /// `sqrt(k)` for integer `k >= 1`, normalized: the square part is pulled
    /// out, so `sqrt(8)` becomes `2*sqrt(2)` and `sqrt(9)` becomes `3`.
    pub fn sqrt_of(k: u64) -> Result<Self, CertifiedError> {
        if k == 0 {
            return Err(CertifiedError::Invalid("sqrt(0) is not a positive axis".into()));
        }
        let (square, free) = split_square_free(k);
        let coeff = BigRational::from_integer(BigInt::from(square));
        if free == 1 {
            return Ok(Self::from_rational(coeff));
        }
        let mut terms = BTreeMap::new();
        terms.insert(SymbolicConstant::Sqrt(free), coeff);
        Ok(CertifiedReal {
            rational: BigRational::zero(),
            terms,
        })
    }

    pub fn pi() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(SymbolicConstant::Pi, BigRational::one());
        CertifiedReal {
            rational: BigRational::zero(),
            terms,
        }
    }

    pub fn euler() -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(SymbolicConstant::E, BigRational::one());
        CertifiedReal {
            rational: BigRational::zero(),
            terms,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        if self.is_exact() {
            Some(&self.rational)
        } else {
            None
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.rational.is_zero()
    }

    fn normalized(mut self) -> Self {
        self.terms.retain(|_, c| !c.is_zero());
        self
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.rational += &other.rational;
        for (c, coeff) in &other.terms {
            *out.terms.entry(*c).or_insert_with(BigRational::zero) += coeff;
        }
        out.normalized()
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        CertifiedReal {
            rational: -self.rational.clone(),
            terms: self.terms.iter().map(|(c, v)| (*c, -v.clone())).collect(),
        }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        CertifiedReal {
            rational: &self.rational * c,
            terms: self.terms.iter().map(|(k, v)| (*k, v * c)).collect(),
        }
    }

    pub fn scale_int(&self, n: i64) -> Self {
        self.scale(&BigRational::from_integer(BigInt::from(n)))
    }

    /// Reciprocal, when it stays inside the representation: exact rationals,
    /// and pure multiples of `sqrt(k)` (since `1/sqrt(k) = sqrt(k)/k`).
    pub fn reciprocal(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        if self.is_exact() {
            return Some(Self::from_rational(self.rational.recip()));
        }
        if self.rational.is_zero() && self.terms.len() == 1 {
            let (c, coeff) = self.terms.iter().next().unwrap();
            if let SymbolicConstant::Sqrt(k) = c {
                let new_coeff = (coeff * BigRational::from_integer(BigInt::from(*k))).recip();
                let mut terms = BTreeMap::new();
                terms.insert(*c, new_coeff);
                return Some(CertifiedReal {
                    rational: BigRational::zero(),
                    terms,
                });
            }
        }
        None
    }

    /// Rational enclosure of width roughly `2^-bits` per constant.
    pub fn interval(&self, bits: u32) -> RatInterval {
        let mut iv = RatInterval::point(self.rational.clone());
        for (c, coeff) in &self.terms {
            let enc = constant_enclosure(*c, bits);
            iv = iv.add(&enc.scale(coeff));
        }
        iv
    }

    pub fn lower(&self, bits: u32) -> BigRational {
        self.interval(bits).lo
    }

    pub fn upper(&self, bits: u32) -> BigRational {
        self.interval(bits).hi
    }

    pub fn to_f64(&self) -> f64 {
        self.interval(64).midpoint_f64()
    }

    /// Certified three-way comparison. Structural equality decides `Equal`;
    /// otherwise enclosures are refined until they separate or the budget is
    /// exhausted.
    pub fn compare(&self, other: &Self, budget: Budget) -> Result<Ordering, CertifiedError> {
        if self == other {
            return Ok(Ordering::Equal);
        }
        let diff = self.sub(other);
        if diff.is_exact() {
            // Rational difference, nonzero since self != other.
            return Ok(if diff.rational.is_positive() {
                Ordering::Greater
            } else {
                Ordering::Less
            });
        }
        let mut bits = 64u32;
        loop {
            let iv = diff.interval(bits);
            if iv.lo.is_positive() {
                return Ok(Ordering::Greater);
            }
            if iv.hi.is_negative() {
                return Ok(Ordering::Less);
            }
            if bits >= budget.bits {
                return Err(CertifiedError::UnresolvableOrder {
                    lhs: self.to_string(),
                    rhs: other.to_string(),
                    bits: budget.bits,
                });
            }
            bits = (bits * 2).min(budget.bits);
        }
    }

    pub fn is_positive_certified(&self, budget: Budget) -> Result<bool, CertifiedError> {
        Ok(self.compare(&Self::zero(), budget)? == Ordering::Greater)
    }

    pub fn le(&self, other: &Self, budget: Budget) -> Result<bool, CertifiedError> {
        Ok(self.compare(other, budget)? != Ordering::Greater)
    }

    /// Decide whether `self / base` is rational, and if so return it exactly.
    ///
    /// Proportional coefficient vectors always decide `Rational`. A
    /// non-proportional pair is provably irrational only when the constants
    /// involved admit a linear-independence theorem over the rationals:
    /// any set of `sqrt` constants, or a single `pi` / single `e`. Mixed
    /// classes return `UnknownRationality`.
    pub fn ratio_to(&self, base: &Self, _budget: Budget) -> Result<Rationality, CertifiedError> {
        if base.is_zero() {
            return Err(CertifiedError::Invalid("ratio to zero".into()));
        }
        if self.is_zero() {
            return Ok(Rationality::Rational(BigRational::zero()));
        }
        // Candidate scalar from the first nonzero coordinate of `base`.
        let candidate = if !base.rational.is_zero() {
            if self.rational.is_zero() {
                None
            } else {
                Some(&self.rational / &base.rational)
            }
        } else {
            let (c, coeff) = base.terms.iter().next().unwrap();
            self.terms.get(c).map(|sc| sc / coeff)
        };
        if let Some(c) = candidate {
            if self == &base.scale(&c) {
                return Ok(Rationality::Rational(c));
            }
        }
        // Not proportional. Provably irrational only within one class.
        let mut constants: Vec<SymbolicConstant> = self.terms.keys().copied().collect();
        constants.extend(base.terms.keys().copied());
        constants.sort();
        constants.dedup();
        let all_sqrt = constants
            .iter()
            .all(|c| matches!(c, SymbolicConstant::Sqrt(_)));
        if all_sqrt || constants.len() == 1 {
            Ok(Rationality::Irrational)
        } else {
            Err(CertifiedError::UnknownRationality {
                lhs: self.to_string(),
                rhs: base.to_string(),
            })
        }
    }

    /// Largest `j >= 0` with `j * step <= limit`, together with whether the
    /// bound is attained exactly. `step` must be certified positive.
    pub fn count_multiples_leq(
        step: &Self,
        limit: &Self,
        budget: Budget,
    ) -> Result<(u64, bool), CertifiedError> {
        match limit.ratio_to(step, budget) {
            Ok(Rationality::Rational(r)) => {
                if r.is_negative() {
                    return Ok((0, false));
                }
                let floor = r.floor().to_integer();
                let exact = r.is_integer();
                let count = floor.to_u64().ok_or_else(|| {
                    CertifiedError::Invalid("multiple count overflows u64".into())
                })?;
                Ok((count, exact))
            }
            Ok(Rationality::Irrational) | Err(CertifiedError::UnknownRationality { .. }) => {
                // The ratio is not provably rational: bracket it by interval
                // division and refine until the bracket contains no integer.
                let mut bits = 64u32;
                loop {
                    let s = step.interval(bits);
                    let l = limit.interval(bits);
                    if !s.lo.is_positive() {
                        if bits >= budget.bits {
                            return Err(CertifiedError::Invalid(
                                "step not certified positive".into(),
                            ));
                        }
                        bits = (bits * 2).min(budget.bits);
                        continue;
                    }
                    let lo = &l.lo / &s.hi;
                    let hi = &l.hi / &s.lo;
                    let flo = lo.floor().to_integer();
                    let fhi = hi.floor().to_integer();
                    if flo == fhi {
                        let count = flo.to_u64().unwrap_or(0);
                        return Ok((count, false));
                    }
                    if bits >= budget.bits {
                        return Err(CertifiedError::UnresolvableOrder {
                            lhs: limit.to_string(),
                            rhs: format!("integer multiple of {step}"),
                            bits: budget.bits,
                        });
                    }
                    bits = (bits * 2).min(budget.bits);
                }
            }
            Err(e) => Err(e),
        }
    }

    /// Generalized least common multiple: the least `L > 0` expressible as
    /// `L = c*q1*q2` with `self = c*q1`, `other = c*q2`, integer `q_i`.
    /// Finite exactly when the ratio is rational, in which case
    /// `L = self * p` where `other/self = p/q` in lowest terms.
    pub fn generalized_lcm(
        &self,
        other: &Self,
        budget: Budget,
    ) -> Result<Option<Self>, CertifiedError> {
        match other.ratio_to(self, budget)? {
            Rationality::Irrational => Ok(None),
            Rationality::Rational(r) => {
                if !r.is_positive() {
                    return Err(CertifiedError::Invalid(
                        "generalized lcm needs positive values".into(),
                    ));
                }
                let p = BigRational::from_integer(r.numer().clone());
                Ok(Some(self.scale(&p)))
            }
        }
    }

    /// Parse `p/q`, an integer, `pi`, `e`, `sqrt(k)` or `coef*constant`.
    /// Decimal literals are rejected: ordering certificates need exact input.
    pub fn parse(s: &str) -> Result<Self, CertifiedError> {
        let s = s.trim();
        if s.is_empty() {
            return Err(CertifiedError::Parse("empty value".into()));
        }
        if let Some((coef, sym)) = s.split_once('*') {
            let c = parse_rational(coef)?;
            let base = Self::parse_symbol(sym.trim())?;
            return Ok(base.scale(&c).normalized());
        }
        if s.contains('.') {
            return Err(CertifiedError::Parse(format!(
                "decimal literal {s:?} rejected; write an exact rational p/q"
            )));
        }
        if let Ok(sym) = Self::parse_symbol(s) {
            return Ok(sym);
        }
        Ok(Self::from_rational(parse_rational(s)?))
    }

    fn parse_symbol(s: &str) -> Result<Self, CertifiedError> {
        match s {
            "pi" => Ok(Self::pi()),
            "e" => Ok(Self::euler()),
            _ => {
                if let Some(inner) = s.strip_prefix("sqrt(").and_then(|r| r.strip_suffix(')')) {
                    let k: u64 = inner.trim().parse().map_err(|_| {
                        CertifiedError::Parse(format!("bad sqrt argument {inner:?}"))
                    })?;
                    let (square, free) = split_square_free(k);
                    if square != 1 {
                        return Err(CertifiedError::Parse(format!(
                            "sqrt({k}) is not square-free; write {square}*sqrt({free})"
                        )));
                    }
                    Self::sqrt_of(k)
                } else {
                    Err(CertifiedError::Parse(format!("unknown constant {s:?}")))
                }
            }
        }
    }

    /// JSON form: exact values carry `num`/`den`, irrational values carry the
    /// symbolic expression plus a 64-bit enclosure.
    pub fn to_json(&self) -> serde_json::Value {
        let iv = self.interval(64);
        serde_json::json!({
            "expr": self.to_string(),
            "exact": self.is_exact(),
            "lower": rational_json(&iv.lo),
            "upper": rational_json(&iv.hi),
        })
    }
}

/// Outcome of a rationality decision for a ratio of certified reals.
#[derive(Debug, Clone, PartialEq)]
pub enum Rationality {
    Rational(BigRational),
    Irrational,
}

impl fmt::Display for CertifiedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_exact() {
            return write!(f, "{}", self.rational);
        }
        let mut first = true;
        if !self.rational.is_zero() {
            write!(f, "{}", self.rational)?;
            first = false;
        }
        for (c, coeff) in &self.terms {
            if first {
                if coeff.is_one() {
                    write!(f, "{c}")?;
                } else {
                    write!(f, "{coeff}*{c}")?;
                }
                first = false;
            } else if coeff.is_negative() {
                write!(f, " - {}*{c}", -coeff.clone())?;
            } else {
                write!(f, " + {coeff}*{c}")?;
            }
        }
        Ok(())
    }
}

/// Writes `k = square^2 * free` with `free` square-free.
fn split_square_free(k: u64) -> (u64, u64) {
    let mut square = 1u64;
    let mut free = 1u64;
    let mut rest = k;
    let mut p = 2u64;
    while p * p <= rest {
        if rest % p == 0 {
            let mut exp = 0u32;
            while rest % p == 0 {
                rest /= p;
                exp += 1;
            }
            square *= p.pow(exp / 2);
            if exp % 2 == 1 {
                free *= p;
            }
        }
        p += 1;
    }
    free *= rest;
    (square, free)
}

pub fn parse_rational(s: &str) -> Result<BigRational, CertifiedError> {
    let s = s.trim();
    let mk_err = || CertifiedError::Parse(format!("bad rational {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let num: BigInt = n.trim().parse().map_err(|_| mk_err())?;
        let den: BigInt = d.trim().parse().map_err(|_| mk_err())?;
        if den.is_zero() {
            return Err(mk_err());
        }
        Ok(BigRational::new(num, den))
    } else {
        let num: BigInt = s.parse().map_err(|_| mk_err())?;
        Ok(BigRational::from_integer(num))
    }
}

pub fn rational_json(r: &BigRational) -> serde_json::Value {
    serde_json::json!({
        "num": r.numer().to_string(),
        "den": r.denom().to_string(),
    })
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}
