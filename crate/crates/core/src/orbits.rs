//! Finite orbits: breadth-first closure, the catalogued examples, and the
//! local data at the origin of `x² + y² + z² + xyz = x + y + z`.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use num::{BigRational, Zero};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{pi_map, residual, SurfaceParams, SurfacePoint, TraceParams};
use crate::linalg::{self, Mat2};
use crate::scalar::{JsonScalar, Ring};
use crate::vieta::{apply_letter, word_jacobian, Letter, Word};

pub const MAX_CAP: usize = 1_000_000;

/// Edge `from --letter--> to` of the visit graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OrbitEdge {
    pub from: usize,
    pub letter: Letter,
    pub to: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OrbitResult<T = f64> {
    Finite { points: Vec<SurfacePoint<T>>, edges: Vec<OrbitEdge> },
    ExceedsCap { cap: usize, frontier: usize },
}

impl<T> OrbitResult<T> {
    pub fn len(&self) -> Option<usize> {
        match self {
            OrbitResult::Finite { points, .. } => Some(points.len()),
            OrbitResult::ExceedsCap { .. } => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, OrbitResult::Finite { .. })
    }

    pub fn points(&self) -> Option<&[SurfacePoint<T>]> {
        match self {
            OrbitResult::Finite { points, .. } => Some(points),
            OrbitResult::ExceedsCap { .. } => None,
        }
    }
}

impl<T: Clone + JsonScalar> OrbitResult<T> {
    pub fn to_json(&self, params: &SurfaceParams<T>) -> Value {
        let params = json!(params.to_array().iter().map(JsonScalar::to_json).collect::<Vec<_>>());
        match self {
            OrbitResult::Finite { points, edges } => json!({
                "params": params,
                "status": "finite",
                "points": points.iter().map(|p| p.to_array().iter().map(JsonScalar::to_json).collect::<Vec<_>>()).collect::<Vec<_>>(),
                "edges": edges,
            }),
            OrbitResult::ExceedsCap { cap, frontier } => json!({
                "params": params,
                "status": "exceeds_cap",
                "cap": cap,
                "frontier": frontier,
            }),
        }
    }
}

fn check_cap(cap: usize) -> Result<()> {
    if cap == 0 || cap > MAX_CAP {
        return Err(Error::InvalidInput(format!("orbit cap must be in 1..={MAX_CAP}, got {cap}")));
    }
    Ok(())
}

/// Breadth-first search shared by both arithmetic modes. `find` returns the
/// index of a stored point matching the candidate, if any.
fn bfs<T: Clone>(
    q: SurfacePoint<T>,
    cap: usize,
    image: impl Fn(Letter, &SurfacePoint<T>) -> SurfacePoint<T>,
    mut find_or_insert: impl FnMut(&SurfacePoint<T>, usize) -> Result<Option<usize>>,
) -> Result<OrbitResult<T>> {
    check_cap(cap)?;
    let mut points = vec![q.clone()];
    find_or_insert(&q, 0)?;
    let mut edges = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        for l in Letter::ALL {
            let p = image(l, &points[i]);
            let j = match find_or_insert(&p, points.len())? {
                Some(j) => j,
                None => {
                    if points.len() == cap {
                        return Ok(OrbitResult::ExceedsCap { cap, frontier: queue.len() + 1 });
                    }
                    points.push(p);
                    queue.push_back(points.len() - 1);
                    points.len() - 1
                }
            };
            edges.push(OrbitEdge { from: i, letter: l, to: j });
        }
    }
    Ok(OrbitResult::Finite { points, edges })
}

/// Floating-point closure; points within `tol` in max-norm are identified.
pub fn orbit_closure(params: &SurfaceParams<f64>, q: &SurfacePoint<f64>, cap: usize, tol: f64) -> Result<OrbitResult<f64>> {
    if !(tol > 0.0) || !q.is_finite() || !params.is_finite() {
        return Err(Error::InvalidInput("orbit closure needs finite input and tol > 0".into()));
    }
    // Beyond this size rounding alone exceeds the matching tolerance.
    let overflow = tol / (10.0 * f64::EPSILON);
    let cell = 10.0 * tol;
    let key = |v: f64| (v / cell).floor() as i64;
    let mut grid: HashMap<[i64; 3], Vec<(usize, SurfacePoint<f64>)>> = HashMap::new();
    bfs(
        *q,
        cap,
        |l, p| apply_letter(l, params, p),
        |p, next| {
            let m = p.max_modulus();
            if !(m <= overflow) {
                return Err(Error::OrbitOverflow { max_modulus: m });
            }
            let k = [key(p.x), key(p.y), key(p.z)];
            let mut found = None;
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let Some(bucket) = grid.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else { continue };
                        for (i, r) in bucket {
                            let d = r.dist_max(p);
                            if d <= tol {
                                found = Some(*i);
                            } else if d <= cell {
                                return Err(Error::ToleranceCollision { distance: d });
                            }
                        }
                    }
                }
            }
            if found.is_none() {
                grid.entry(k).or_default().push((next, *p));
            }
            Ok(found)
        },
    )
}

/// Exact closure over the rationals.
pub fn orbit_closure_exact(params: &SurfaceParams<BigRational>, q: &SurfacePoint<BigRational>, cap: usize) -> Result<OrbitResult<BigRational>> {
    let mut index: HashMap<SurfacePoint<BigRational>, usize> = HashMap::new();
    bfs(
        q.clone(),
        cap,
        |l, p| apply_letter(l, params, p),
        |p, next| match index.get(p) {
            Some(&i) => Ok(Some(i)),
            None => {
                index.insert(p.clone(), next);
                Ok(None)
            }
        },
    )
}

/// Checks that every image of every point is again a point of the set.
pub fn verify_closed(params: &SurfaceParams<f64>, points: &[SurfacePoint<f64>], tol: f64) -> bool {
    points.iter().all(|p| {
        Letter::ALL.iter().all(|&l| {
            let q = apply_letter(l, params, p);
            points.iter().any(|r| r.dist_max(&q) <= tol)
        })
    })
}

pub fn verify_closed_exact<T: Ring>(params: &SurfaceParams<T>, points: &[SurfacePoint<T>]) -> bool {
    points.iter().all(|p| Letter::ALL.iter().all(|&l| points.contains(&apply_letter(l, params, p))))
}

fn int(v: i64) -> BigRational {
    BigRational::from_i64(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoalchKlein {
    pub params: SurfaceParams<f64>,
    pub points: Vec<SurfacePoint<f64>>,
    pub witness: TraceParams<f64>,
}

const BOALCH_KLEIN_POINTS: [[i64; 3]; 7] =
    [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 0], [1, 0, 1], [0, 1, 1]];

/// The seven-point orbit of the origin on `S_(1,1,1,0)` and its traces.
pub fn boalch_klein() -> BoalchKlein {
    let exact = SurfaceParams::new(int(1), int(1), int(1), int(0));
    let pts: Vec<SurfacePoint<BigRational>> =
        BOALCH_KLEIN_POINTS.iter().map(|&[x, y, z]| SurfacePoint::new(int(x), int(y), int(z))).collect();
    assert!(pts.iter().all(|p| residual(&exact, p).is_zero()));
    assert!(verify_closed_exact(&exact, &pts));

    let a = 2.0 * (2.0 * PI / 7.0).cos();
    let witness = TraceParams::new(a, a, a, 2.0 * (4.0 * PI / 7.0).cos());
    let params = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
    let image = pi_map(&witness);
    assert!(image.to_array().iter().zip(params.to_array()).all(|(u, v)| (u - v).abs() <= 1e-12));

    let points = BOALCH_KLEIN_POINTS.iter().map(|&[x, y, z]| SurfacePoint::new(x as f64, y as f64, z as f64)).collect();
    BoalchKlein { params, points, witness }
}

/// `(−2cos 2πp/q, −2cos 2πp′/q′, −2cos 2π(p/q + p′/q′))` on the Cayley cubic.
pub fn cayley_rational_point(p: i64, q: i64, p2: i64, q2: i64) -> Result<SurfacePoint<f64>> {
    if q == 0 || q2 == 0 {
        return Err(Error::InvalidInput("zero denominator".into()));
    }
    // Reduce the angles mod 1 first so large numerators keep full precision.
    let s = (p.rem_euclid(q) as f64) / q as f64;
    let t = (p2.rem_euclid(q2) as f64) / q2 as f64;
    let f = |r: f64| -2.0 * (2.0 * PI * r).cos();
    Ok(SurfacePoint::new(f(s), f(t), f((s + t).fract())))
}

/// Parameters `(x + x′, 0, 0, −x x′)` with the orbit `{(x,0,0), (x′,0,0)}`.
pub fn short_orbit_length2<T: Ring>(x: T, x2: T) -> Result<(SurfaceParams<T>, [SurfacePoint<T>; 2])> {
    if x == x2 {
        return Err(Error::InvalidInput("the two abscissae must differ".into()));
    }
    let params = SurfaceParams::new(x.clone() + x2.clone(), T::zero(), T::zero(), -(x.clone() * x2.clone()));
    let p = SurfacePoint::new(x, T::zero(), T::zero());
    let q = SurfacePoint::new(x2, T::zero(), T::zero());
    assert!(residual(&params, &p).is_zero() && residual(&params, &q).is_zero());
    assert!(apply_letter(Letter::X, &params, &p) == q && apply_letter(Letter::X, &params, &q) == p);
    for l in [Letter::Y, Letter::Z] {
        assert!(apply_letter(l, &params, &p) == p && apply_letter(l, &params, &q) == q);
    }
    Ok((params, [p, q]))
}

pub type IntMat2 = [[i64; 2]; 2];

/// Differentials at the origin of `f = (s_y∘s_x)²`, `g = (s_x∘s_z)²` and
/// `h = (s_z∘s_y)²`, in the basis `(1,0,−1), (0,1,−1)` of the tangent plane.
pub const ORIGIN_DIFFERENTIALS: [IntMat2; 3] = [[[2, 1], [-1, 0]], [[1, 1], [0, 1]], [[1, 0], [-1, 1]]];

/// Recomputes [`ORIGIN_DIFFERENTIALS`] from ambient Jacobians in exact arithmetic.
pub fn origin_differentials_exact() -> [[[BigRational; 2]; 2]; 3] {
    let params = SurfaceParams::new(int(1), int(1), int(1), int(0));
    let o = SurfacePoint::new(int(0), int(0), int(0));
    let basis = [[int(1), int(0), int(-1)], [int(0), int(1), int(-1)]];
    ["xyxy", "zxzx", "yzyz"].map(|w| {
        let w: Word = w.parse().expect("static word");
        let (jac, image) = word_jacobian(&w, &params, &o);
        assert!(image == o, "{w} does not fix the origin");
        let cols = basis.clone().map(|b| {
            let v = jac.apply(&b);
            // v = u·(1,0,−1) + v·(0,1,−1) requires the coordinates to sum to zero.
            assert!((v[0].clone() + v[1].clone() + v[2].clone()).is_zero());
            [v[0].clone(), v[1].clone()]
        });
        [[cols[0][0].clone(), cols[1][0].clone()], [cols[0][1].clone(), cols[1][1].clone()]]
    })
}

pub fn origin_differentials() -> [IntMat2; 3] {
    let exact = origin_differentials_exact();
    for (m, e) in ORIGIN_DIFFERENTIALS.iter().zip(&exact) {
        for i in 0..2 {
            for j in 0..2 {
                assert!(int(m[i][j]) == e[i][j], "origin differential mismatch");
            }
        }
    }
    ORIGIN_DIFFERENTIALS
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FiberRotation {
    pub x0: f64,
    pub matrix: Mat2,
    pub trace: f64,
    pub det: f64,
    pub theta: f64,
}

/// Linear part of `s_z∘s_y` on the fiber `{x = x0}` in coordinates `(y, z)`.
pub fn fiber_rotation_matrix(params: &SurfaceParams<f64>, x0: f64) -> Result<FiberRotation> {
    if !(x0.abs() < 2.0) {
        return Err(Error::ParabolicBoundary { x0, trace: x0 * x0 - 2.0 });
    }
    let map = |y: f64, z: f64| {
        let p = apply_letter(Letter::Z, params, &apply_letter(Letter::Y, params, &SurfacePoint::new(x0, y, z)));
        [p.y, p.z]
    };
    let o = map(0.0, 0.0);
    let (e1, e2) = (map(1.0, 0.0), map(0.0, 1.0));
    let matrix = [[e1[0] - o[0], e2[0] - o[0]], [e1[1] - o[1], e2[1] - o[1]]];
    let trace = linalg::trace(&matrix);
    if trace >= 2.0 - 1e-9 {
        return Err(Error::ParabolicBoundary { x0, trace });
    }
    Ok(FiberRotation { x0, matrix, trace, det: linalg::det(&matrix), theta: (trace / 2.0).clamp(-1.0, 1.0).acos() })
}
