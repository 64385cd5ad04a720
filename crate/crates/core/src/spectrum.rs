//! Reeb orbits of an ellipsoid boundary: the merged action sequence `M_k`,
//! Conley-Zehnder indices of nondegenerate orbits, SFT gradings, the common
//! period and the rank `k_T` at which it first appears.
//!
//! Orbit actions are `j * a_i` for axis `i` and iterate `j`; the spectrum is
//! their non-decreasing merge, ties broken by axis index then iterate, ranks
//! 1-indexed.

use std::cmp::Ordering;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::Signed;

use crate::certified::{rational_json, Budget, CertifiedError, CertifiedReal};

#[derive(Debug, Clone, thiserror::Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Order(#[from] CertifiedError),
    #[error("orbit (axis {axis}, iterate {iterate}) is degenerate: action value has multiplicity {multiplicity}")]
    DegenerateOrbit {
        axis: usize,
        iterate: u64,
        multiplicity: usize,
    },
    #[error("the Reeb flow is aperiodic (infinite period)")]
    AperiodicFlow,
    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// An orbit label: `axis` is 1-indexed, `iterate >= 1` is the covering
/// multiplicity. The labeled orbit has action `iterate * a_axis` and is
/// simple exactly when `iterate == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OrbitLabel {
    pub axis: usize,
    pub iterate: u64,
}

impl OrbitLabel {
    pub fn new(axis: usize, iterate: u64) -> Self {
        OrbitLabel { axis, iterate }
    }

    pub fn is_simple(&self) -> bool {
        self.iterate == 1
    }
}

/// The standard ellipsoid `E(a_1, ..., a_n)`, axes certified positive and
/// stored sorted non-decreasing. `input_positions[i]` records where the i-th
/// input axis landed after sorting.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    axes: Vec<CertifiedReal>,
    input_positions: Vec<usize>,
    budget: Budget,
}

impl Ellipsoid {
    pub fn new(axes: Vec<CertifiedReal>) -> Result<Self, SpectrumError> {
        Self::with_budget(axes, Budget::default())
    }

    pub fn with_budget(axes: Vec<CertifiedReal>, budget: Budget) -> Result<Self, SpectrumError> {
        if axes.is_empty() {
            return Err(SpectrumError::InvalidEllipsoid("no axes".into()));
        }
        for a in &axes {
            if !a.is_positive_certified(budget)? {
                return Err(SpectrumError::InvalidEllipsoid(format!(
                    "axis {a} is not certified positive"
                )));
            }
        }
        let mut order: Vec<usize> = (0..axes.len()).collect();
        // Insertion sort with certified comparisons; stable, so equal axes
        // keep their input order.
        for i in 1..order.len() {
            let mut j = i;
            while j > 0 {
                let cmp = axes[order[j - 1]].compare(&axes[order[j]], budget)?;
                if cmp == Ordering::Greater {
                    order.swap(j - 1, j);
                    j -= 1;
                } else {
                    break;
                }
            }
        }
        let sorted: Vec<CertifiedReal> = order.iter().map(|&i| axes[i].clone()).collect();
        let mut input_positions = vec![0usize; axes.len()];
        for (pos, &orig) in order.iter().enumerate() {
            input_positions[orig] = pos;
        }
        Ok(Ellipsoid {
            axes: sorted,
            input_positions,
            budget,
        })
    }

    pub fn from_strs(specs: &[&str]) -> Result<Self, SpectrumError> {
        let axes = specs
            .iter()
            .map(|s| CertifiedReal::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(axes)
    }

    pub fn n(&self) -> usize {
        self.axes.len()
    }

    /// Axis by 1-based index, in the sorted order.
    pub fn axis(&self, i: usize) -> &CertifiedReal {
        &self.axes[i - 1]
    }

    pub fn axes(&self) -> &[CertifiedReal] {
        &self.axes
    }

    pub fn axes_f64(&self) -> Vec<f64> {
        self.axes.iter().map(|a| a.to_f64()).collect()
    }

    pub fn input_positions(&self) -> &[usize] {
        &self.input_positions
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn is_rational(&self) -> bool {
        self.axes.iter().all(|a| a.is_exact())
    }

    pub fn scale(&self, c: &BigRational) -> Result<Self, SpectrumError> {
        if !c.is_positive() {
            return Err(SpectrumError::InvalidArgument("scale must be positive".into()));
        }
        Self::with_budget(self.axes.iter().map(|a| a.scale(c)).collect(), self.budget)
    }

    pub fn action(&self, label: OrbitLabel) -> Result<CertifiedReal, SpectrumError> {
        if label.axis == 0 || label.axis > self.n() || label.iterate == 0 {
            return Err(SpectrumError::InvalidArgument(format!(
                "orbit label ({}, {}) out of range",
                label.axis, label.iterate
            )));
        }
        Ok(self.axis(label.axis).scale_int(label.iterate as i64))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "axes": self.axes.iter().map(|a| a.to_json()).collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumEntry {
    pub rank: u64,
    pub value: CertifiedReal,
    pub label: OrbitLabel,
}

/// The first `count` entries of the merged action sequence, with orbit
/// labels and the source ellipsoid.
#[derive(Debug, Clone)]
pub struct ActionSpectrum {
    pub entries: Vec<SpectrumEntry>,
    pub source: Ellipsoid,
}

impl ActionSpectrum {
    pub fn value(&self, rank: u64) -> &CertifiedReal {
        &self.entries[(rank - 1) as usize].value
    }

    pub fn label(&self, rank: u64) -> OrbitLabel {
        self.entries[(rank - 1) as usize].label
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV columns: k, value_lower, value_upper, axis, iterate. Bounds are
    /// exact rationals in `p/q` form (equal for exact values).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,value_lower,value_upper,axis,iterate\n");
        for e in &self.entries {
            let iv = e.value.interval(64);
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.rank, iv.lo, iv.hi, e.label.axis, e.label.iterate
            );
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "ellipsoid": self.source.to_json(),
            "entries": self.entries.iter().map(|e| {
                let iv = e.value.interval(64);
                serde_json::json!({
                    "k": e.rank,
                    "value": e.value.to_json(),
                    "value_lower": rational_json(&iv.lo),
                    "value_upper": rational_json(&iv.hi),
                    "axis": e.label.axis,
                    "iterate": e.label.iterate,
                })
            }).collect::<Vec<_>>(),
        })
    }
}

/// First `count` entries of `M_k`: the non-decreasing merge of
/// `{j * a_i : j >= 1}` with ties broken by axis index, then iterate.
pub fn action_spectrum(e: &Ellipsoid, count: u64) -> Result<ActionSpectrum, SpectrumError> {
    if count == 0 {
        return Err(SpectrumError::InvalidArgument("count must be >= 1".into()));
    }
    let n = e.n();
    let budget = e.budget();
    let mut next_iter: Vec<u64> = vec![1; n];
    let mut candidate: Vec<CertifiedReal> = e.axes().to_vec();
    let mut entries = Vec::with_capacity(count as usize);
    for rank in 1..=count {
        let mut best = 0usize;
        for i in 1..n {
            if candidate[i].compare(&candidate[best], budget)? == Ordering::Less {
                best = i;
            }
        }
        entries.push(SpectrumEntry {
            rank,
            value: candidate[best].clone(),
            label: OrbitLabel::new(best + 1, next_iter[best]),
        });
        next_iter[best] += 1;
        candidate[best] = e.axis(best + 1).scale_int(next_iter[best] as i64);
    }
    Ok(ActionSpectrum {
        entries,
        source: e.clone(),
    })
}

/// Conley-Zehnder index of a nondegenerate orbit:
/// `n - 1 + 2 * #{orbits with action <= action(label)}`.
///
/// Errors with `DegenerateOrbit` when the action value is hit by more than
/// one orbit; Morse-Bott corrections live in the `index` module.
pub fn cz_index(e: &Ellipsoid, label: OrbitLabel) -> Result<i64, SpectrumError> {
    let budget = e.budget();
    let action = e.action(label)?;
    let mut rank: u64 = 0;
    let mut hits = 0usize;
    for i in 1..=e.n() {
        let (count, exact) = CertifiedReal::count_multiples_leq(e.axis(i), &action, budget)?;
        rank += count;
        if exact {
            hits += 1;
        }
    }
    if hits > 1 {
        return Err(SpectrumError::DegenerateOrbit {
            axis: label.axis,
            iterate: label.iterate,
            multiplicity: hits,
        });
    }
    Ok(e.n() as i64 - 1 + 2 * rank as i64)
}

/// SFT grading of the rank-k generator: `2(n - 2 + k)`, always even.
/// The rank must be resolvable, i.e. the merge up to `rank` must order.
pub fn sft_grading(e: &Ellipsoid, rank: u64) -> Result<i64, SpectrumError> {
    if rank == 0 {
        return Err(SpectrumError::InvalidArgument("rank must be >= 1".into()));
    }
    action_spectrum(e, rank)?;
    Ok(2 * (e.n() as i64 - 2 + rank as i64))
}

/// The common period of the Reeb flow, or `Infinite` when some axis ratio is
/// irrational.
#[derive(Debug, Clone, PartialEq)]
pub enum Period {
    Finite(CertifiedReal),
    Infinite,
}

impl Period {
    pub fn finite(&self) -> Option<&CertifiedReal> {
        match self {
            Period::Finite(t) => Some(t),
            Period::Infinite => None,
        }
    }
}

/// Generalized lcm of the axes; for all-rational axes `p_i/q_i` this is
/// `lcm(p_1,...,p_n) / gcd(q_1,...,q_n)`.
pub fn period(e: &Ellipsoid) -> Result<Period, SpectrumError> {
    let budget = e.budget();
    let mut t = e.axis(1).clone();
    for i in 2..=e.n() {
        match t.generalized_lcm(e.axis(i), budget)? {
            Some(l) => t = l,
            None => return Ok(Period::Infinite),
        }
    }
    Ok(Period::Finite(t))
}

/// The first rank at which the period `T` appears in the spectrum, together
/// with `T`. `T` appears exactly `n` times: `M_{k_T} = ... = M_{k_T+n-1}`.
pub fn k_t_index(e: &Ellipsoid) -> Result<(u64, CertifiedReal), SpectrumError> {
    let t = match period(e)? {
        Period::Finite(t) => t,
        Period::Infinite => return Err(SpectrumError::AperiodicFlow),
    };
    let budget = e.budget();
    // T / a_i is a positive integer for every axis, so k_T - 1 counts the
    // strictly smaller entries: sum over axes of (T/a_i - 1).
    let mut below: u64 = 0;
    for i in 1..=e.n() {
        let (count, exact) = CertifiedReal::count_multiples_leq(e.axis(i), &t, budget)?;
        debug_assert!(exact, "period must be an exact multiple of every axis");
        if !exact {
            return Err(SpectrumError::InvalidEllipsoid(
                "period is not an exact multiple of an axis".into(),
            ));
        }
        below += count - 1;
    }
    Ok((below + 1, t))
}

/// Rational period as a plain rational, for rational ellipsoids.
pub fn rational_period(e: &Ellipsoid) -> Result<BigRational, SpectrumError> {
    match period(e)? {
        Period::Finite(t) => t.as_rational().cloned().ok_or_else(|| {
            SpectrumError::InvalidArgument("period is finite but not rational".into())
        }),
        Period::Infinite => Err(SpectrumError::AperiodicFlow),
    }
}
