//! Python bindings: the main types and operations of the core crate.
//! Exact rationals cross the boundary as strings in `p/q` form (parseable
//! by `fractions.Fraction`); JSON-shaped reports become plain dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList, PyNone};

use reebgap_core::certified::{parse_rational, Budget, CertifiedReal};
use reebgap_core::chmodel;
use reebgap_core::diophantine;
use reebgap_core::flow;
use reebgap_core::index;
use reebgap_core::spectrum::{self, OrbitLabel, Period};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        serde_json::Value::Null => PyNone::get(py).to_owned().into_any(),
        serde_json::Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => s.into_pyobject(py)?.into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn rational_str(r: &num_rational::BigRational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// The standard ellipsoid E(a_1, ..., a_n). Axes are given as strings:
/// exact rationals `p/q`, or `sqrt(k)`, `pi`, `e`, optionally with a
/// rational coefficient (`3/2*sqrt(2)`).
#[pyclass]
struct Ellipsoid {
    inner: spectrum::Ellipsoid,
}

#[pymethods]
impl Ellipsoid {
    #[new]
    #[pyo3(signature = (axes, precision_bits = 256))]
    fn new(axes: Vec<String>, precision_bits: u32) -> PyResult<Self> {
        let parsed = axes
            .iter()
            .map(|s| CertifiedReal::parse(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let inner =
            spectrum::Ellipsoid::with_budget(parsed, Budget::new(precision_bits)).map_err(err)?;
        Ok(Ellipsoid { inner })
    }

    fn n(&self) -> usize {
        self.inner.n()
    }

    fn axes(&self) -> Vec<String> {
        self.inner.axes().iter().map(|a| a.to_string()).collect()
    }

    fn is_rational(&self) -> bool {
        self.inner.is_rational()
    }

    /// Common period as a rational string, or None for aperiodic flows.
    fn period(&self) -> PyResult<Option<String>> {
        match spectrum::period(&self.inner).map_err(err)? {
            Period::Finite(t) => Ok(Some(t.to_string())),
            Period::Infinite => Ok(None),
        }
    }

    /// First rank at which the period appears, with the period.
    fn k_t_index(&self) -> PyResult<(u64, String)> {
        let (k, t) = spectrum::k_t_index(&self.inner).map_err(err)?;
        Ok((k, t.to_string()))
    }

    /// First `count` entries of the action sequence, as dicts with exact
    /// expressions, float approximations and orbit labels.
    fn action_spectrum<'py>(
        &self,
        py: Python<'py>,
        count: u64,
    ) -> PyResult<Vec<Bound<'py, PyAny>>> {
        let s = spectrum::action_spectrum(&self.inner, count).map_err(err)?;
        s.entries
            .iter()
            .map(|e| {
                let v = serde_json::json!({
                    "k": e.rank,
                    "value": e.value.to_string(),
                    "value_float": e.value.to_f64(),
                    "axis": e.label.axis,
                    "iterate": e.label.iterate,
                });
                json_to_py(py, &v)
            })
            .collect()
    }

    /// Conley-Zehnder index of the nondegenerate orbit (axis, iterate).
    fn cz_index(&self, axis: usize, iterate: u64) -> PyResult<i64> {
        spectrum::cz_index(&self.inner, OrbitLabel::new(axis, iterate)).map_err(err)
    }

    /// SFT grading 2(n - 2 + rank) of the rank-k generator.
    fn sft_grading(&self, rank: u64) -> PyResult<i64> {
        spectrum::sft_grading(&self.inner, rank).map_err(err)
    }

    /// Gap witness: the zero-difference certificate for periodic axes, the
    /// approximation pipeline (at quality `epsilon`) otherwise.
    #[pyo3(signature = (epsilon = None))]
    fn gap_witness<'py>(
        &self,
        py: Python<'py>,
        epsilon: Option<String>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let witness = match epsilon {
            None => chmodel::gap_certificate_rational(&self.inner).map_err(err)?,
            Some(eps) => {
                let eps = parse_rational(&eps).map_err(err)?;
                chmodel::gap_witness_irrational(&self.inner, &eps).map_err(err)?
            }
        };
        witness.verify().map_err(err)?;
        json_to_py(py, &witness.to_json())
    }

    /// Certified inner-outer rational approximant at quality `epsilon`.
    fn approximate<'py>(&self, py: Python<'py>, epsilon: String) -> PyResult<Bound<'py, PyAny>> {
        let eps = parse_rational(&epsilon).map_err(err)?;
        let approximant = diophantine::approx_ellipsoid(&self.inner, &eps).map_err(err)?;
        approximant
            .verify(self.inner.axes(), self.inner.budget())
            .map_err(err)?;
        json_to_py(py, &approximant.to_json())
    }

    /// CZ index of the orbit recomputed from the sampled linearized-flow
    /// path through the numeric RS engine.
    fn cz_from_linearized_path(&self, axis: usize, iterate: u64) -> PyResult<i64> {
        let path = index::ellipsoid_linearized_path(&self.inner, OrbitLabel::new(axis, iterate))
            .map_err(err)?;
        index::cz_nondegenerate(&path).map_err(err)
    }

    /// Exact flow of a torus point for time t: returns the new coordinates
    /// as (re, im) pairs.
    fn exact_flow(
        &self,
        mu: Vec<f64>,
        phases: Vec<f64>,
        t: f64,
    ) -> PyResult<Vec<(f64, f64)>> {
        let z = flow::EllipsoidPoint::on_torus(&self.inner, &mu, &phases).map_err(err)?;
        let moved = flow::exact_flow(&self.inner, &z, t).map_err(err)?;
        Ok(moved.z.iter().map(|c| (c.re, c.im)).collect())
    }

    /// Frequencies of the perturbed flow on the torus `mu` for the linear
    /// profile with the given weights and scale.
    fn frequencies(&self, weights: Vec<f64>, eps: f64, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        let f = flow::InvariantPerturbation::new(flow::Profile::Linear { weights }, eps)
            .map_err(err)?;
        flow::frequencies(&self.inner, &f, &mu).map_err(err)
    }

    /// Closing search for two-axis ellipsoids under a linear profile.
    fn find_closing_t<'py>(
        &self,
        py: Python<'py>,
        weight: f64,
        bound: f64,
        mu: Vec<f64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let out = flow::find_closing_t(
            &self.inner,
            &flow::Profile::Linear {
                weights: vec![weight],
            },
            (0.0, 1.0),
            &mu,
            bound,
        )
        .map_err(err)?;
        json_to_py(py, &flow::closing_report_json(&out))
    }

    fn __repr__(&self) -> String {
        let axes: Vec<String> = self.inner.axes().iter().map(|a| a.to_string()).collect();
        format!("Ellipsoid({})", axes.join(", "))
    }
}

/// Generalized lcm of two values; None encodes the infinite case.
#[pyfunction]
fn lcm_pair(s1: String, s2: String) -> PyResult<Option<String>> {
    let a = CertifiedReal::parse(&s1).map_err(err)?;
    let b = CertifiedReal::parse(&s2).map_err(err)?;
    Ok(diophantine::lcm_pair(&a, &b, Budget::default())
        .map_err(err)?
        .map(|l| l.to_string()))
}

/// lcm of a tuple of exact rationals, as a rational string.
#[pyfunction]
fn lcm_tuple(values: Vec<String>) -> PyResult<String> {
    let rats = values
        .iter()
        .map(|s| parse_rational(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    Ok(rational_str(&diophantine::lcm_tuple(&rats).map_err(err)?))
}

/// Simultaneous Dirichlet approximation of an axis tuple.
#[pyfunction]
fn dirichlet<'py>(py: Python<'py>, axes: Vec<String>, n_limit: u64) -> PyResult<Bound<'py, PyAny>> {
    let parsed = axes
        .iter()
        .map(|s| CertifiedReal::parse(s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(err)?;
    let sol = diophantine::dirichlet_simultaneous(&parsed, n_limit, Budget::default())
        .map_err(err)?;
    json_to_py(py, &sol.to_json())
}

/// Closed-form RS index of a rotation block, as (numerator, 2).
#[pyfunction]
fn rs_rotation_block(theta: f64, duration: f64) -> PyResult<(i64, i64)> {
    let rs = index::rs_rotation_block(theta, duration).map_err(err)?;
    Ok((rs.halves(), 2))
}

/// Numeric RS index of a direct sum of rotation blocks, as (numerator, 2).
#[pyfunction]
fn rs_rotations(blocks: Vec<(f64, f64)>) -> PyResult<(i64, i64)> {
    let mut path: Option<index::SymplecticPath> = None;
    for (theta, duration) in blocks {
        let block = index::SymplecticPath::rotation(theta, duration).map_err(err)?;
        path = Some(match path {
            None => block,
            Some(p) => p.direct_sum(&block).map_err(err)?,
        });
    }
    let path = path.ok_or_else(|| err("no blocks"))?;
    let rs = index::rs_index(&path).map_err(err)?;
    Ok((rs.halves(), 2))
}

/// Morse-Bott CZ index: rs (as halves) + dim/2 - morse index, as halves.
#[pyfunction]
fn cz_morse_bott(rs_halves: i64, dim_family: u32, morse_index: u32) -> PyResult<(i64, i64)> {
    let d = index::MorseBottOrbit::new(
        index::HalfInt::from_halves(rs_halves),
        dim_family,
        morse_index,
    )
    .map_err(err)?;
    Ok((index::cz_morse_bott(&d).halves(), 2))
}

/// Smallest full-state return time of the two-generator torus flow.
#[pyfunction]
fn detect_period_torus(a1: String, a2: String, t_max: f64, tol: f64) -> PyResult<Option<f64>> {
    let spec = flow::TorusFlowSpec::new(
        CertifiedReal::parse(&a1).map_err(err)?,
        CertifiedReal::parse(&a2).map_err(err)?,
    );
    Ok(flow::detect_period_torus(&spec, t_max, tol))
}

/// Critical values of the base Hamiltonian, as (label, value) pairs.
#[pyfunction]
fn base_critical_values() -> Vec<(String, f64)> {
    flow::base_critical_values()
        .iter()
        .map(|((x, y), v)| (format!("({x}, {y})"), *v))
        .collect()
}

/// Calibrate the base Hamiltonian circle flow; returns a dict with the
/// scale constant and verification residuals.
#[pyfunction]
fn base_flow_calibrate(py: Python<'_>) -> PyResult<Bound<'_, PyAny>> {
    let cal = flow::base_flow_calibrate().map_err(err)?;
    json_to_py(
        py,
        &serde_json::json!({
            "scale": cal.scale,
            "period_at_unit_scale": cal.period_at_unit_scale,
            "return_residual": cal.return_residual,
            "h_drift": cal.h_drift,
        }),
    )
}

#[pymodule]
fn reebgap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Ellipsoid>()?;
    m.add_function(wrap_pyfunction!(lcm_pair, m)?)?;
    m.add_function(wrap_pyfunction!(lcm_tuple, m)?)?;
    m.add_function(wrap_pyfunction!(dirichlet, m)?)?;
    m.add_function(wrap_pyfunction!(rs_rotation_block, m)?)?;
    m.add_function(wrap_pyfunction!(rs_rotations, m)?)?;
    m.add_function(wrap_pyfunction!(cz_morse_bott, m)?)?;
    m.add_function(wrap_pyfunction!(detect_period_torus, m)?)?;
    m.add_function(wrap_pyfunction!(base_critical_values, m)?)?;
    m.add_function(wrap_pyfunction!(base_flow_calibrate, m)?)?;
    Ok(())
}
