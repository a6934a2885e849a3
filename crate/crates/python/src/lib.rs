//! Python bindings for `vieta-core`.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vieta_core::boundary;
use vieta_core::geometry::{self, pi_map};
use vieta_core::infinity::{self, GridSpec};
use vieta_core::orbits::{self, OrbitResult};
use vieta_core::symplectic;
use vieta_core::vieta::{apply_word, area_form, reduce};
use vieta_core::walk::{self, StepDistribution};
use vieta_core::{NumericPolicy, SurfaceParams, SurfacePoint, TraceParams, Word};

create_exception!(vieta, VietaError, PyException);

type Point = (f64, f64, f64);

fn err(e: vieta_core::Error) -> PyErr {
    VietaError::new_err(e.to_string())
}

fn point(p: Point) -> SurfacePoint {
    SurfacePoint::new(p.0, p.1, p.2)
}

fn tuple(p: &SurfacePoint) -> Point {
    (p.x, p.y, p.z)
}

fn word(s: &str) -> PyResult<Word> {
    s.parse().map_err(err)
}

fn mu(weights: Option<(f64, f64, f64)>) -> PyResult<StepDistribution> {
    match weights {
        Some((a, b, c)) => StepDistribution::new(a, b, c).map_err(err),
        None => Ok(StepDistribution::uniform()),
    }
}

/// The surface `x² + y² + z² + xyz = Ax + By + Cz + D`.
#[pyclass(name = "Surface", module = "vieta", frozen)]
struct PySurface {
    params: SurfaceParams,
    policy: NumericPolicy,
}

#[pymethods]
impl PySurface {
    #[new]
    fn new(a: f64, b: f64, c: f64, d: f64) -> PyResult<Self> {
        Ok(PySurface { params: SurfaceParams::new(a, b, c, d), policy: NumericPolicy::from_env().map_err(err)? })
    }

    /// The surface whose parameters are the image of the traces `(a, b, c, d)`.
    #[staticmethod]
    fn from_traces(a: f64, b: f64, c: f64, d: f64) -> PyResult<Self> {
        let p = pi_map(&TraceParams::new(a, b, c, d));
        Self::new(p.a, p.b, p.c, p.d)
    }

    #[getter]
    fn params(&self) -> (f64, f64, f64, f64) {
        (self.params.a, self.params.b, self.params.c, self.params.d)
    }

    fn __repr__(&self) -> String {
        format!("Surface({}, {}, {}, {})", self.params.a, self.params.b, self.params.c, self.params.d)
    }

    fn residual(&self, p: Point) -> f64 {
        geometry::residual(&self.params, &point(p))
    }

    fn solve_fiber_z(&self, x: f64, y: f64) -> Vec<f64> {
        geometry::solve_fiber_z(&self.params, x, y)
    }

    /// Applies the letters of `word` left to right.
    fn apply_word(&self, word_str: &str, p: Point) -> PyResult<Point> {
        Ok(tuple(&apply_word(&word(word_str)?, &self.params, &point(p))))
    }

    fn area_form(&self, p: Point, v: [f64; 3], w: [f64; 3]) -> PyResult<f64> {
        area_form(&self.params, &point(p), &v, &w, &self.policy).map_err(err)
    }

    /// Draws `n` points from the normalised area measure on the compact
    /// component; returns `(points, total_area, standard_error)`.
    #[pyo3(signature = (n, seed = 0))]
    fn sample_symplectic(&self, py: Python<'_>, n: usize, seed: u64) -> PyResult<(Vec<Point>, f64, f64)> {
        let s = py.detach(|| symplectic::sample_symplectic(&self.params, n, seed, &self.policy)).map_err(err)?;
        Ok((s.points.iter().map(tuple).collect(), s.total_area.value, s.total_area.se))
    }

    /// Runs one random walk and returns a dict with the visited samples,
    /// escape data and the moment vector of the visits.
    #[pyo3(signature = (start, n, seed = 0, mu = None, thin = 1))]
    fn walk<'py>(
        &self,
        py: Python<'py>,
        start: Point,
        n: usize,
        seed: u64,
        mu: Option<(f64, f64, f64)>,
        thin: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        let mu = self::mu(mu)?;
        let t = py
            .detach(|| walk::run_trajectory(&self.params, &point(start), &mu, n, seed, thin, &self.policy))
            .map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("samples", t.samples.iter().map(|(i, p)| (*i, tuple(p))).collect::<Vec<_>>())?;
        d.set_item("escaped", t.escaped)?;
        d.set_item("escape_step", t.escape_step)?;
        d.set_item("end", tuple(&t.end))?;
        d.set_item("letters_digest", &t.letters_digest)?;
        if t.accumulator.visits > 0 {
            let s = walk::empirical_summary(&t).map_err(err)?;
            d.set_item("moments", s.moments.values.to_vec())?;
            d.set_item("box_fraction", s.box_fraction)?;
        }
        Ok(d)
    }

    /// `(lambda_plus, lambda_minus, se_plus, se_minus)` along one walk.
    #[pyo3(signature = (start, n, seed = 0, mu = None, cadence = None))]
    fn lyapunov(
        &self,
        py: Python<'_>,
        start: Point,
        n: usize,
        seed: u64,
        mu: Option<(f64, f64, f64)>,
        cadence: Option<usize>,
    ) -> PyResult<(f64, f64, f64, f64)> {
        let mu = self::mu(mu)?;
        let cadence = cadence.unwrap_or(self.policy.lyapunov_cadence);
        let e = py
            .detach(|| walk::estimate_lyapunov(&self.params, &point(start), &mu, n, seed, cadence, &self.policy))
            .map_err(err)?;
        Ok((e.lambda_plus, e.lambda_minus, e.se_plus, e.se_minus))
    }

    /// The orbit of `start` as a list of points, or `None` past `cap` points.
    #[pyo3(signature = (start, cap = 10_000, tol = 1e-8))]
    fn orbit(&self, start: Point, cap: usize, tol: f64) -> PyResult<Option<Vec<Point>>> {
        Ok(match orbits::orbit_closure(&self.params, &point(start), cap, tol).map_err(err)? {
            OrbitResult::Finite { points, .. } => Some(points.iter().map(tuple).collect()),
            OrbitResult::ExceedsCap { .. } => None,
        })
    }

    #[pyo3(signature = (samples = 1000, seed = 0))]
    fn calibrate_shadow<'py>(&self, py: Python<'py>, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
        let c = infinity::calibrate_shadow(&self.params, samples, seed, &self.policy).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("c_cal", c.c_cal)?;
        d.set_item("c_l1", c.c_l1)?;
        d.set_item("r_cal", c.r_cal)?;
        d.set_item("r0", c.r0)?;
        Ok(d)
    }

    /// Number of certified escapes among `seeds` walks of `n` steps from `start`.
    #[pyo3(signature = (start, n, seeds, calibration_samples = 1000))]
    fn certified_escapes(&self, py: Python<'_>, start: Point, n: usize, seeds: Vec<u64>, calibration_samples: usize) -> PyResult<(usize, usize)> {
        py.detach(|| {
            let cal = infinity::calibrate_shadow(&self.params, calibration_samples, 0, &self.policy)?;
            let runs = walk::run_farm(&self.params, &point(start), &StepDistribution::uniform(), n, &seeds, 1, &self.policy)?;
            let escaped: Vec<_> = runs.iter().filter(|r| r.escaped).collect();
            let ok = escaped.iter().filter(|r| infinity::certify_escape(r, &cal, &self.policy).is_ok()).count();
            Ok((escaped.len(), ok))
        })
        .map_err(err)
    }
}

/// Free reduction of a word over `x`, `y`, `z`.
#[pyfunction(name = "reduce")]
fn reduce_word(word_str: &str) -> PyResult<String> {
    Ok(reduce(&word(word_str)?).into_word().to_string())
}

/// `(params, points, traces)` of the seven-point orbit.
#[pyfunction]
fn boalch_klein() -> ((f64, f64, f64, f64), Vec<Point>, (f64, f64, f64, f64)) {
    let bk = orbits::boalch_klein();
    let [a, b, c, d] = bk.params.to_array();
    let [ta, tb, tc, td] = bk.witness.to_array();
    ((a, b, c, d), bk.points.iter().map(tuple).collect(), (ta, tb, tc, td))
}

#[pyfunction]
fn origin_differentials() -> Vec<[[i64; 2]; 2]> {
    orbits::origin_differentials().to_vec()
}

/// `(angle, defect, log_norm)` of the normalised product of the first `n` letters.
#[pyfunction]
fn furstenberg_direction(letters: &str, n: usize) -> PyResult<(f64, f64, f64)> {
    let w = word(letters)?;
    let d = boundary::furstenberg_direction(w.letters(), n).map_err(err)?;
    Ok((d.angle, d.defect, d.log_norm))
}

#[pyfunction]
fn reflection_matrix(letter: char) -> PyResult<[[i128; 2]; 2]> {
    let l = vieta_core::Letter::from_char(letter).ok_or_else(|| VietaError::new_err(format!("not a letter: {letter}")))?;
    Ok(boundary::reflection_matrix(l).0)
}

#[pyfunction]
fn subdivision_cycle(m: u32) -> PyResult<Vec<u32>> {
    Ok(boundary::subdivision_cycle(m).map_err(err)?.depths)
}

/// Letters drawn from the seeded stream with weights `mu`, as a string.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, mu = None))]
fn sample_letters(n: usize, seed: u64, mu: Option<(f64, f64, f64)>) -> PyResult<String> {
    Ok(walk::sample_letters(&self::mu(mu)?, seed, n).map_err(err)?.to_string())
}

/// Total violation count of the growth-lemma harness.
#[pyfunction]
#[pyo3(signature = (max_len, c, r, trials = 1000, seed = 0))]
fn verify_growth_lemmas(py: Python<'_>, max_len: usize, c: f64, r: f64, trials: usize, seed: u64) -> PyResult<u64> {
    let rep = py.detach(|| infinity::verify_growth_lemmas(max_len, &GridSpec::default(), c, r, trials, seed)).map_err(err)?;
    Ok(rep.violations())
}

#[pymodule]
fn vieta(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VietaError", m.py().get_type::<VietaError>())?;
    m.add_class::<PySurface>()?;
    m.add_function(wrap_pyfunction!(reduce_word, m)?)?;
    m.add_function(wrap_pyfunction!(boalch_klein, m)?)?;
    m.add_function(wrap_pyfunction!(origin_differentials, m)?)?;
    m.add_function(wrap_pyfunction!(furstenberg_direction, m)?)?;
    m.add_function(wrap_pyfunction!(reflection_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(subdivision_cycle, m)?)?;
    m.add_function(wrap_pyfunction!(sample_letters, m)?)?;
    m.add_function(wrap_pyfunction!(verify_growth_lemmas, m)?)?;
    Ok(())
}
