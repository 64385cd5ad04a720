//! Combinatorial model of the contact homology algebra of an ellipsoid
//! boundary: a free graded-symmetric algebra on generators `x_k` of even
//! grading `2(n - 2 + k)` and action `M_k`, with degree-dropping derivations
//! playing the role of U-maps, and spectral-gap witness certificates.
//!
//! All generators sit in even degree, so the algebra is plainly commutative,
//! the differential vanishes, and every element is its own minimal
//! representative: the spectral invariant of an element is the maximal
//! action among its monomials. Derivation coefficients are formal exact
//! rationals; the canonical table is the single entry
//! `x_{k_T + n - 1} -> x_{k_T}` of a periodic ellipsoid.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::certified::{rational_json, CertifiedError, CertifiedReal};
use crate::diophantine::{approx_ellipsoid, DiophantineError, RationalApproximant};
use crate::spectrum::{action_spectrum, k_t_index, ActionSpectrum, Ellipsoid, SpectrumError};

#[derive(Debug, Clone, thiserror::Error)]
pub enum ChError {
    #[error("zero element has no spectral invariant")]
    ZeroElement,
    #[error("derivation image of x_{rank} has wrong grading: expected {expected}, got {got}")]
    WrongDegree { rank: u64, expected: i64, got: i64 },
    #[error("derivation image of x_{rank} increases the action")]
    ActionIncrease { rank: u64 },
    #[error("rank {0} exceeds the cached spectrum length {1}")]
    RankOutOfRange(u64, usize),
    #[error("witnesses target different ellipsoids")]
    MixedTargets,
    #[error("operation requires exact rational axes")]
    NotRational,
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Diophantine(#[from] DiophantineError),
    #[error(transparent)]
    Certified(#[from] CertifiedError),
}

/// The generator `x_k` with its grading and action.
#[derive(Debug, Clone)]
pub struct Generator {
    pub rank: u64,
    pub grading: i64,
    pub action: CertifiedReal,
}

/// Exponent vector over generator ranks. The empty monomial is the unit.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Monomial {
    factors: BTreeMap<u64, u32>,
}

impl Monomial {
    pub fn unit() -> Self {
        Monomial::default()
    }

    pub fn generator(rank: u64) -> Self {
        Monomial::from_ranks(&[rank])
    }

    pub fn from_ranks(ranks: &[u64]) -> Self {
        let mut factors = BTreeMap::new();
        for &r in ranks {
            *factors.entry(r).or_insert(0) += 1;
        }
        Monomial { factors }
    }

    pub fn is_unit(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn word_length(&self) -> u32 {
        self.factors.values().sum()
    }

    pub fn exponents(&self) -> impl Iterator<Item = (u64, u32)> + '_ {
        self.factors.iter().map(|(&r, &e)| (r, e))
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut factors = self.factors.clone();
        for (&r, &e) in &other.factors {
            *factors.entry(r).or_insert(0) += e;
        }
        Monomial { factors }
    }

    fn without_one(&self, rank: u64) -> Monomial {
        let mut factors = self.factors.clone();
        match factors.get_mut(&rank) {
            Some(e) if *e > 1 => *e -= 1,
            Some(_) => {
                factors.remove(&rank);
            }
            None => {}
        }
        Monomial { factors }
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_unit() {
            return write!(f, "1");
        }
        let mut first = true;
        for (r, e) in self.exponents() {
            if !first {
                write!(f, "*")?;
            }
            if e == 1 {
                write!(f, "x{r}")?;
            } else {
                write!(f, "x{r}^{e}")?;
            }
            first = false;
        }
        Ok(())
    }
}

/// Finite rational combination of monomials; no zero coefficients stored.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlgebraElement {
    terms: BTreeMap<Monomial, BigRational>,
}

impl AlgebraElement {
    pub fn zero() -> Self {
        AlgebraElement::default()
    }

    pub fn unit() -> Self {
        AlgebraElement::from_monomial(Monomial::unit(), BigRational::one())
    }

    pub fn generator(rank: u64) -> Self {
        AlgebraElement::from_monomial(Monomial::generator(rank), BigRational::one())
    }

    pub fn from_monomial(m: Monomial, coeff: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !coeff.is_zero() {
            terms.insert(m, coeff);
        }
        AlgebraElement { terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, m: &Monomial) -> BigRational {
        self.terms.get(m).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add(&self, other: &AlgebraElement) -> AlgebraElement {
        let mut terms = self.terms.clone();
        for (m, c) in &other.terms {
            let entry = terms.entry(m.clone()).or_insert_with(BigRational::zero);
            *entry += c;
            if entry.is_zero() {
                terms.remove(m);
            }
        }
        AlgebraElement { terms }
    }

    pub fn scale(&self, c: &BigRational) -> AlgebraElement {
        if c.is_zero() {
            return AlgebraElement::zero();
        }
        AlgebraElement {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn mul(&self, other: &AlgebraElement) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        for (m1, c1) in &self.terms {
            for (m2, c2) in &other.terms {
                out = out.add(&AlgebraElement::from_monomial(m1.mul(m2), c1 * c2));
            }
        }
        out
    }

    /// Coefficient reduction mod 2: odd numerators survive with coefficient
    /// one, even numerators vanish.
    pub fn reduce_mod2(&self) -> AlgebraElement {
        let mut out = AlgebraElement::zero();
        for (m, c) in &self.terms {
            if c.numer().bit(0) {
                out = out.add(&AlgebraElement::from_monomial(m.clone(), BigRational::one()));
            }
        }
        out
    }
}

impl fmt::Display for AlgebraElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (m, c) in &self.terms {
            if first {
                write!(f, "{c}*{m}")?;
                first = false;
            } else if c.is_negative() {
                write!(f, " - {}*{m}", -c.clone())?;
            } else {
                write!(f, " + {c}*{m}")?;
            }
        }
        Ok(())
    }
}

/// The algebra bound to an ellipsoid, spectrum cached up to a maximal rank.
#[derive(Debug, Clone)]
pub struct ChAlgebra {
    ellipsoid: Ellipsoid,
    spectrum: ActionSpectrum,
}

impl ChAlgebra {
    pub fn new(e: &Ellipsoid, max_rank: u64) -> Result<Self, ChError> {
        let spectrum = action_spectrum(e, max_rank)?;
        Ok(ChAlgebra {
            ellipsoid: e.clone(),
            spectrum,
        })
    }

    pub fn ellipsoid(&self) -> &Ellipsoid {
        &self.ellipsoid
    }

    pub fn max_rank(&self) -> u64 {
        self.spectrum.len() as u64
    }

    pub fn degree_drop(&self) -> i64 {
        2 * self.ellipsoid.n() as i64 - 2
    }

    pub fn generator(&self, rank: u64) -> Result<Generator, ChError> {
        if rank == 0 || rank > self.max_rank() {
            return Err(ChError::RankOutOfRange(rank, self.spectrum.len()));
        }
        Ok(Generator {
            rank,
            grading: 2 * (self.ellipsoid.n() as i64 - 2 + rank as i64),
            action: self.spectrum.value(rank).clone(),
        })
    }

    pub fn monomial_grading(&self, m: &Monomial) -> Result<i64, ChError> {
        let mut g = 0i64;
        for (rank, exp) in m.exponents() {
            g += self.generator(rank)?.grading * exp as i64;
        }
        Ok(g)
    }

    pub fn monomial_action(&self, m: &Monomial) -> Result<CertifiedReal, ChError> {
        let mut a = CertifiedReal::zero();
        for (rank, exp) in m.exponents() {
            a = a.add(&self.generator(rank)?.action.scale_int(exp as i64));
        }
        Ok(a)
    }

    /// Spectral invariant of a nonzero element: the maximal monomial action.
    /// The ellipsoid differential vanishes, so every element is its own
    /// minimal representative and the action filtration level is exact.
    pub fn spectral_invariant(&self, x: &AlgebraElement) -> Result<CertifiedReal, ChError> {
        if x.is_zero() {
            return Err(ChError::ZeroElement);
        }
        let budget = self.ellipsoid.budget();
        let mut best: Option<CertifiedReal> = None;
        for (m, _) in x.terms() {
            let a = self.monomial_action(m)?;
            best = Some(match best {
                None => a,
                Some(b) => {
                    if b.le(&a, budget)? {
                        a
                    } else {
                        b
                    }
                }
            });
        }
        Ok(best.unwrap())
    }
}

/// Images of generators under a degree-dropping, action-non-increasing
/// derivation. Construction validates every entry against the grading and
/// action bookkeeping of the bound algebra and rejects violations.
#[derive(Debug, Clone)]
pub struct DerivationTable {
    images: BTreeMap<u64, AlgebraElement>,
    degree_drop: i64,
    /// Set for tables licensed only conjecturally (higher period multiples).
    pub unverified: bool,
}

impl DerivationTable {
    pub fn new(alg: &ChAlgebra, images: BTreeMap<u64, AlgebraElement>) -> Result<Self, ChError> {
        Self::with_mode(alg, images, false)
    }

    pub fn with_mode(
        alg: &ChAlgebra,
        images: BTreeMap<u64, AlgebraElement>,
        unverified: bool,
    ) -> Result<Self, ChError> {
        let drop = alg.degree_drop();
        let budget = alg.ellipsoid().budget();
        for (&rank, image) in &images {
            let generator = alg.generator(rank)?;
            for (m, _) in image.terms() {
                let got = alg.monomial_grading(m)?;
                if got != generator.grading - drop {
                    return Err(ChError::WrongDegree {
                        rank,
                        expected: generator.grading - drop,
                        got,
                    });
                }
                let action = alg.monomial_action(m)?;
                if !action.le(&generator.action, budget)? {
                    return Err(ChError::ActionIncrease { rank });
                }
            }
        }
        Ok(DerivationTable {
            images,
            degree_drop: drop,
            unverified,
        })
    }

    pub fn degree_drop(&self) -> i64 {
        self.degree_drop
    }

    pub fn image_of(&self, rank: u64) -> AlgebraElement {
        self.images.get(&rank).cloned().unwrap_or_default()
    }

    /// The canonical single-entry table `x_{k_T + n - 1} -> x_{k_T}` of a
    /// periodic ellipsoid.
    pub fn canonical(alg: &ChAlgebra) -> Result<Self, ChError> {
        let (k_t, _) = k_t_index(alg.ellipsoid())?;
        let sigma = k_t + alg.ellipsoid().n() as u64 - 1;
        let mut images = BTreeMap::new();
        images.insert(sigma, AlgebraElement::generator(k_t));
        Self::new(alg, images)
    }

    /// Table for the q-th period multiple, marked unverified for q > 1: only
    /// the fundamental multiple is backed by the moduli count.
    pub fn canonical_multiple(alg: &ChAlgebra, q: u64) -> Result<Self, ChError> {
        if q == 0 {
            return Err(ChError::Precondition("multiple must be >= 1".into()));
        }
        let e = alg.ellipsoid();
        let (_, t) = k_t_index(e)?;
        let budget = e.budget();
        let target_action = t.scale_int(q as i64);
        let mut below = 0u64;
        for i in 1..=e.n() {
            // count includes the exact hit at q*T itself.
            let (count, _) =
                CertifiedReal::count_multiples_leq(e.axis(i), &target_action, budget)?;
            below += count - 1;
        }
        let k_q = below + 1;
        let sigma = k_q + e.n() as u64 - 1;
        let mut images = BTreeMap::new();
        images.insert(sigma, AlgebraElement::generator(k_q));
        Self::with_mode(alg, images, q > 1)
    }
}

/// Unique derivation extension of a table: Leibniz over products, linear
/// over sums. All generators have even degree, so no signs appear.
pub fn apply_derivation(table: &DerivationTable, x: &AlgebraElement) -> AlgebraElement {
    let mut out = AlgebraElement::zero();
    for (m, c) in x.terms() {
        for (rank, exp) in m.exponents() {
            let image = table.image_of(rank);
            if image.is_zero() {
                continue;
            }
            let rest = AlgebraElement::from_monomial(
                m.without_one(rank),
                c * BigRational::from_integer(BigInt::from(exp)),
            );
            out = out.add(&rest.mul(&image));
        }
    }
    out
}

/// A spectral-gap witness: ranks of the class and its U-map target, the
/// certified action difference, the supporting approximant when the input
/// was irrational, and the source ellipsoid.
#[derive(Debug, Clone)]
pub struct GapWitness {
    pub sigma_rank: u64,
    pub target_rank: u64,
    pub action_difference: CertifiedReal,
    pub approximant: Option<RationalApproximant>,
    pub normalization_note: String,
    pub ellipsoid: Ellipsoid,
    pub approximant_period: Option<BigRational>,
}

const NORMALIZATION_NOTE: &str =
    "action difference only; the normalizing ball capacity stays symbolic (a positive constant)";

impl GapWitness {
    /// Recompute the action difference from the spectrum and re-verify the
    /// supporting approximant; failed re-checks are internal errors.
    pub fn verify(&self) -> Result<(), ChError> {
        let s = action_spectrum(&self.ellipsoid, self.sigma_rank)?;
        let diff = s.value(self.sigma_rank).sub(s.value(self.target_rank));
        if diff != self.action_difference {
            return Err(ChError::Precondition(
                "stored action difference disagrees with the spectrum".into(),
            ));
        }
        let budget = self.ellipsoid.budget();
        if !CertifiedReal::zero().le(&self.action_difference, budget)? {
            return Err(ChError::Precondition("negative action difference".into()));
        }
        if let Some(approximant) = &self.approximant {
            approximant.verify(self.ellipsoid.axes(), budget)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma_rank": self.sigma_rank,
            "target_rank": self.target_rank,
            "action_difference": self.action_difference.to_json(),
            "approximant": self.approximant.as_ref().map(|a| a.to_json()),
            "approximant_period": self.approximant_period.as_ref().map(rational_json),
            "normalization_note": self.normalization_note,
            "ellipsoid": self.ellipsoid.to_json(),
        })
    }
}

/// Gap certificate of a periodic (rationally dependent) ellipsoid: the
/// classes of rank `k_T + n - 1` and `k_T` share the action `T`, so the
/// difference is exactly zero. Non-integer rational axes reduce to the
/// integer case by scaling, which changes no rank bookkeeping.
pub fn gap_certificate_rational(e: &Ellipsoid) -> Result<GapWitness, ChError> {
    let (k_t, t) = k_t_index(e)?;
    let n = e.n() as u64;
    let sigma_rank = k_t + n - 1;
    let spectrum = action_spectrum(e, sigma_rank)?;
    let diff = spectrum.value(sigma_rank).sub(spectrum.value(k_t));
    if !diff.is_zero() {
        return Err(ChError::Precondition(
            "period multiplicity violated: certificate difference is nonzero".into(),
        ));
    }
    let witness = GapWitness {
        sigma_rank,
        target_rank: k_t,
        action_difference: diff,
        approximant: None,
        normalization_note: NORMALIZATION_NOTE.into(),
        ellipsoid: e.clone(),
        approximant_period: t.as_rational().cloned(),
    };
    witness.verify()?;
    Ok(witness)
}

/// Gap witness of an arbitrary ellipsoid at quality `eps`: approximate by a
/// rationally dependent ellipsoid, take `k = k_T` of the approximant, and
/// certify `M_{k+n-1} - M_k <= eps` on the original axes.
pub fn gap_witness_irrational(e: &Ellipsoid, eps: &BigRational) -> Result<GapWitness, ChError> {
    if e.is_rational() {
        return gap_certificate_rational(e);
    }
    let budget = e.budget();
    let approximant = approx_ellipsoid(e, eps)?;
    let r_axes: Vec<CertifiedReal> = approximant
        .r
        .iter()
        .map(|x| CertifiedReal::from_rational(x.clone()))
        .collect();
    let r_ellipsoid = Ellipsoid::with_budget(r_axes, budget)?;
    let (k_t, _) = k_t_index(&r_ellipsoid)?;
    let n = e.n() as u64;
    let sigma_rank = k_t + n - 1;
    let spectrum = action_spectrum(e, sigma_rank)?;
    let diff = spectrum.value(sigma_rank).sub(spectrum.value(k_t));
    let eps_cert = CertifiedReal::from_rational(eps.clone());
    if !diff.le(&eps_cert, budget)? {
        return Err(ChError::Precondition(format!(
            "witness difference not certified below eps = {eps}"
        )));
    }
    let witness = GapWitness {
        sigma_rank,
        target_rank: k_t,
        action_difference: diff,
        approximant: Some(approximant.clone()),
        normalization_note: NORMALIZATION_NOTE.into(),
        ellipsoid: e.clone(),
        approximant_period: Some(approximant.t.clone()),
    };
    witness.verify()?;
    Ok(witness)
}

/// One row of a limit report: quality, approximant period, certified upper
/// bound for the action difference, and the running infimum of the bounds.
#[derive(Debug, Clone)]
pub struct LimitGapEntry {
    pub epsilon: BigRational,
    pub period: Option<BigRational>,
    pub eps_times_period: Option<BigRational>,
    pub diff_upper: BigRational,
    pub running_infimum: BigRational,
}

#[derive(Debug, Clone)]
pub struct LimitGapReport {
    pub entries: Vec<LimitGapEntry>,
}

impl LimitGapReport {
    pub fn non_increasing(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].running_infimum <= w[0].running_infimum)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "entries": self.entries.iter().map(|e| serde_json::json!({
                "epsilon": rational_json(&e.epsilon),
                "period": e.period.as_ref().map(rational_json),
                "eps_times_period": e.eps_times_period.as_ref().map(rational_json),
                "diff_upper": rational_json(&e.diff_upper),
                "running_infimum": rational_json(&e.running_infimum),
            })).collect::<Vec<_>>(),
            "non_increasing": self.non_increasing(),
        })
    }
}

/// Verify a family of witnesses over one ellipsoid and emit the running
/// infimum of certified action-difference bounds as the upper-bound trend
/// for the total gap, together with the `eps * T` values of the supporting
/// approximants.
pub fn limit_gap_report(
    witnesses: &[(GapWitness, BigRational)],
) -> Result<LimitGapReport, ChError> {
    if witnesses.is_empty() {
        return Err(ChError::Precondition("no witnesses".into()));
    }
    let first_axes = witnesses[0].0.ellipsoid.axes();
    for (w, _) in witnesses {
        if w.ellipsoid.axes() != first_axes {
            return Err(ChError::MixedTargets);
        }
        w.verify()?;
    }
    let mut entries = Vec::with_capacity(witnesses.len());
    let mut running: Option<BigRational> = None;
    for (w, eps) in witnesses {
        let diff_upper = w.action_difference.upper(96);
        running = Some(match running {
            None => diff_upper.clone(),
            Some(r) => {
                if diff_upper < r {
                    diff_upper.clone()
                } else {
                    r
                }
            }
        });
        let period = w.approximant_period.clone();
        entries.push(LimitGapEntry {
            epsilon: eps.clone(),
            eps_times_period: period.as_ref().map(|t| eps * t),
            period,
            diff_upper,
            running_infimum: running.clone().unwrap(),
        });
    }
    Ok(LimitGapReport { entries })
}

/// Result of the randomized axiom suite.
#[derive(Debug, Clone)]
pub struct AxiomsReport {
    pub samples: u64,
    pub checks: u64,
    pub violations: Vec<String>,
}

impl AxiomsReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "samples": self.samples,
            "checks": self.checks,
            "passed": self.passed(),
            "violations": self.violations.clone(),
        })
    }
}

fn random_rational(rng: &mut ChaCha8Rng, max_num: i64, max_den: i64) -> BigRational {
    let n = rng.random_range(1..=max_num);
    let d = rng.random_range(1..=max_den);
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Randomized checks of the spectral axioms on a rational ellipsoid:
/// conformality of the spectrum under rational scaling, monotonicity under
/// axis increase, and action decrease of the canonical derivation on random
/// elements. All comparisons are exact.
pub fn axioms_suite(e: &Ellipsoid, samples: u64, seed: u64) -> Result<AxiomsReport, ChError> {
    if !e.is_rational() {
        return Err(ChError::NotRational);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    let mut checks = 0u64;
    let k_max = 24u64;
    let base = action_spectrum(e, k_max)?;
    let alg = ChAlgebra::new(e, k_max + e.n() as u64)?;
    let table = DerivationTable::canonical(&alg)?;
    for i in 0..samples {
        // Conformality: M_k(c a) = c M_k(a).
        let c = random_rational(&mut rng, 12, 12);
        let scaled = action_spectrum(&e.scale(&c)?, k_max)?;
        for k in 1..=k_max {
            checks += 1;
            let lhs = scaled.value(k).as_rational().unwrap().clone();
            let rhs = base.value(k).as_rational().unwrap() * &c;
            if lhs != rhs {
                violations.push(format!("sample {i}: conformality fails at rank {k}"));
            }
        }
        // Monotonicity under componentwise axis increase.
        let bumped: Vec<CertifiedReal> = e
            .axes()
            .iter()
            .map(|a| {
                let bump = random_rational(&mut rng, 5, 3);
                CertifiedReal::from_rational(a.as_rational().unwrap() + bump)
            })
            .collect();
        let bigger = action_spectrum(&Ellipsoid::with_budget(bumped, e.budget())?, k_max)?;
        for k in 1..=k_max {
            checks += 1;
            if base.value(k).as_rational().unwrap() > bigger.value(k).as_rational().unwrap() {
                violations.push(format!("sample {i}: monotonicity fails at rank {k}"));
            }
        }
        // U-map action decrease on a random element.
        let mut x = AlgebraElement::unit();
        for _ in 0..3 {
            let ranks = [
                rng.random_range(1..=k_max),
                rng.random_range(1..=k_max),
            ];
            let coeff = random_rational(&mut rng, 6, 4);
            x = x.add(&AlgebraElement::from_monomial(
                Monomial::from_ranks(&ranks),
                coeff,
            ));
        }
        let ux = apply_derivation(&table, &x);
        if !ux.is_zero() {
            checks += 1;
            let budget = e.budget();
            let before = alg.spectral_invariant(&x)?;
            let after = alg.spectral_invariant(&ux)?;
            if !after.le(&before, budget)? {
                violations.push(format!("sample {i}: U-map increased the spectral invariant"));
            }
        }
    }
    Ok(AxiomsReport {
        samples,
        checks,
        violations,
    })
}
