//! The surface family `x² + y² + z² + xyz = Ax + By + Cz + D`.
//!
//! Holds the coefficient and trace records, the surface polynomial and its
//! gradient, the trace map `(a, b, c, d) -> (A, B, C, D)`, singularity and
//! real-topology analysis, fiber solving and tangent frames.

use num::complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::policy::NumericPolicy;
use crate::scalar::{bdot, hdot, norm3, JsonScalar, Ring, Scalar};

/// Coefficients `(A, B, C, D)` of the surface equation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurfaceParams<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

/// Boundary traces `(a, b, c, d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams<T = f64> {
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

/// A point `(x, y, z)` of affine space, tested against a surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SurfacePoint<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T> SurfaceParams<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }
}

impl<T> TraceParams<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self { a, b, c, d }
    }
}

impl<T> SurfacePoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }
}

impl<T: Clone> SurfaceParams<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone()]
    }
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SurfaceParams<U> {
        SurfaceParams::new(f(&self.a), f(&self.b), f(&self.c), f(&self.d))
    }
}

impl<T: Clone> TraceParams<T> {
    pub fn to_array(&self) -> [T; 4] {
        [self.a.clone(), self.b.clone(), self.c.clone(), self.d.clone()]
    }
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> TraceParams<U> {
        TraceParams::new(f(&self.a), f(&self.b), f(&self.c), f(&self.d))
    }
}

impl<T: Clone> SurfacePoint<T> {
    pub fn to_array(&self) -> [T; 3] {
        [self.x.clone(), self.y.clone(), self.z.clone()]
    }
    pub fn from_array([x, y, z]: [T; 3]) -> Self {
        Self { x, y, z }
    }
    pub fn map<U>(&self, f: impl Fn(&T) -> U) -> SurfacePoint<U> {
        SurfacePoint::new(f(&self.x), f(&self.y), f(&self.z))
    }
}

impl<T: Scalar> SurfaceParams<T> {
    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
    /// True iff every imaginary part is exactly zero.
    pub fn is_real(&self) -> bool {
        self.to_array().iter().all(|v| v.im() == 0.0)
    }
    pub fn to_real(&self) -> Result<SurfaceParams<f64>> {
        if !self.is_real() {
            return Err(Error::NonReal(format!("surface parameters {self:?}")));
        }
        Ok(self.map(|v| v.re()))
    }
    pub fn to_complex(&self) -> SurfaceParams<Complex64> {
        self.map(|v| v.to_complex())
    }
}

impl<T: Scalar> TraceParams<T> {
    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
    pub fn is_real(&self) -> bool {
        self.to_array().iter().all(|v| v.im() == 0.0)
    }
    pub fn to_real(&self) -> Result<TraceParams<f64>> {
        if !self.is_real() {
            return Err(Error::NonReal(format!("traces {self:?}")));
        }
        Ok(self.map(|v| v.re()))
    }
}

impl<T: Scalar> SurfacePoint<T> {
    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
    pub fn is_real(&self) -> bool {
        self.to_array().iter().all(|v| v.im() == 0.0)
    }
    pub fn to_real(&self) -> Result<SurfacePoint<f64>> {
        if !self.is_real() {
            return Err(Error::NonReal(format!("point {self:?}")));
        }
        Ok(self.map(|v| v.re()))
    }
    pub fn max_modulus(&self) -> f64 {
        self.x.modulus().max(self.y.modulus()).max(self.z.modulus())
    }
    pub fn norm(&self) -> f64 {
        norm3(&self.to_array())
    }
    pub fn dist_max(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .modulus()
            .max((self.y - other.y).modulus())
            .max((self.z - other.z).modulus())
    }
}

fn json_record<T: JsonScalar>(keys: [&str; 4], vals: [&T; 4]) -> Value {
    let mut map = Map::new();
    for (k, v) in keys.iter().zip(vals) {
        map.insert((*k).to_string(), v.to_json());
    }
    Value::Object(map)
}

fn json_fields<T: JsonScalar, const N: usize>(v: &Value, keys: [&str; N]) -> Result<[T; N], String> {
    let map = v.as_object().ok_or("expected a JSON object")?;
    if let Some(extra) = map.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(format!("unknown key {extra:?}"));
    }
    let mut out = Vec::with_capacity(N);
    for k in keys {
        let item = map.get(k).ok_or_else(|| format!("missing key {k:?}"))?;
        out.push(T::from_json(item).map_err(|e| format!("{k}: {e}"))?);
    }
    out.try_into().map_err(|_| "field count".to_string())
}

impl<T: JsonScalar> Serialize for SurfaceParams<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        json_record(["A", "B", "C", "D"], [&self.a, &self.b, &self.c, &self.d]).serialize(s)
    }
}

impl<'de, T: JsonScalar> Deserialize<'de> for SurfaceParams<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        let [a, b, c, dd] = json_fields(&v, ["A", "B", "C", "D"]).map_err(D::Error::custom)?;
        Ok(Self::new(a, b, c, dd))
    }
}

impl<T: JsonScalar> Serialize for TraceParams<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        json_record(["a", "b", "c", "d"], [&self.a, &self.b, &self.c, &self.d]).serialize(s)
    }
}

impl<'de, T: JsonScalar> Deserialize<'de> for TraceParams<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        let [a, b, c, dd] = json_fields(&v, ["a", "b", "c", "d"]).map_err(D::Error::custom)?;
        Ok(Self::new(a, b, c, dd))
    }
}

impl<T: JsonScalar> Serialize for SurfacePoint<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = Map::new();
        map.insert("x".into(), self.x.to_json());
        map.insert("y".into(), self.y.to_json());
        map.insert("z".into(), self.z.to_json());
        Value::Object(map).serialize(s)
    }
}

impl<'de, T: JsonScalar> Deserialize<'de> for SurfacePoint<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        let [x, y, z] = json_fields(&v, ["x", "y", "z"]).map_err(D::Error::custom)?;
        Ok(Self::new(x, y, z))
    }
}

/// `F(p) = x² + y² + z² + xyz − Ax − By − Cz − D`.
pub fn residual<T: Ring>(params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> T {
    let (x, y, z) = (&p.x, &p.y, &p.z);
    x.clone() * x.clone() + y.clone() * y.clone() + z.clone() * z.clone()
        + x.clone() * y.clone() * z.clone()
        - params.a.clone() * x.clone()
        - params.b.clone() * y.clone()
        - params.c.clone() * z.clone()
        - params.d.clone()
}

/// `∇F = (2x + yz − A, 2y + zx − B, 2z + xy − C)`, the denominators of the area form.
pub fn gradient<T: Ring>(params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> [T; 3] {
    let two = T::from_i64(2);
    let (x, y, z) = (&p.x, &p.y, &p.z);
    [
        two.clone() * x.clone() + y.clone() * z.clone() - params.a.clone(),
        two.clone() * y.clone() + z.clone() * x.clone() - params.b.clone(),
        two * z.clone() + x.clone() * y.clone() - params.c.clone(),
    ]
}

/// The trace map `(a, b, c, d) -> (ab + cd, bc + ad, ac + bd, 4 − Σa² − abcd)`.
pub fn pi_map<T: Ring>(t: &TraceParams<T>) -> SurfaceParams<T> {
    let (a, b, c, d) = (t.a.clone(), t.b.clone(), t.c.clone(), t.d.clone());
    SurfaceParams {
        a: a.clone() * b.clone() + c.clone() * d.clone(),
        b: b.clone() * c.clone() + a.clone() * d.clone(),
        c: a.clone() * c.clone() + b.clone() * d.clone(),
        d: T::from_i64(4)
            - (a.clone() * a.clone() + b.clone() * b.clone() + c.clone() * c.clone() + d.clone() * d.clone())
            - a * b * c * d,
    }
}

/// `Δ = (2Σa² − abcd − 16)² − Π(4 − a²)`.
pub fn discriminant<T: Ring>(t: &TraceParams<T>) -> T {
    let sq = |v: &T| v.clone() * v.clone();
    let (a2, b2, c2, d2) = (sq(&t.a), sq(&t.b), sq(&t.c), sq(&t.d));
    let abcd = t.a.clone() * t.b.clone() * t.c.clone() * t.d.clone();
    let two = T::from_i64(2);
    let four = T::from_i64(4);
    let first = two * (a2.clone() + b2.clone() + c2.clone() + d2.clone()) - abcd - T::from_i64(16);
    first.clone() * first
        - (four.clone() - a2) * (four.clone() - b2) * (four.clone() - c2) * (four - d2)
}

/// Singular iff a trace is `±2` or the discriminant vanishes.
pub fn is_singular_surface<T: Scalar>(t: &TraceParams<T>, policy: &NumericPolicy) -> bool {
    let two = T::from_f64(2.0);
    let near_pm2 = t.to_array().iter().any(|&v| {
        (v - two).modulus() <= policy.trace_pm2_tol || (v + two).modulus() <= policy.trace_pm2_tol
    });
    if near_pm2 {
        return true;
    }
    // Scale: magnitude of the two terms whose difference is Δ.
    let sq = |v: T| v * v;
    let [a, b, c, d] = t.to_array();
    let first = T::from_f64(2.0) * (sq(a) + sq(b) + sq(c) + sq(d)) - a * b * c * d - T::from_f64(16.0);
    let four = T::from_f64(4.0);
    let second = (four - sq(a)) * (four - sq(b)) * (four - sq(c)) * (four - sq(d));
    let scale = sq(first).modulus().max(second.modulus()).max(1.0);
    discriminant(t).modulus() <= policy.discriminant_rel_tol * scale
}

/// The six real topological types of a smooth real surface, by the number
/// `n` of traces in `(−2, 2)` and the sign of `abcd`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TopologyCase {
    /// (1) `n = 0`, `abcd < 0`.
    QuadruplyPuncturedSphere = 1,
    /// (2) `n = 0`, `abcd > 0`.
    TriplyPuncturedTorusAndDisk = 2,
    /// (3) `n = 1`.
    TriplyPuncturedSphereAndDisk = 3,
    /// (4) `n = 2`.
    AnnulusAndTwoDisks = 4,
    /// (5) `n = 3`.
    FourDisks = 5,
    /// (6) `n = 4`.
    FourDisksAndSphere = 6,
}

impl TopologyCase {
    pub fn number(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyClass {
    pub case: TopologyCase,
    /// Number of traces in the open interval `(−2, 2)`.
    pub traces_inside: u8,
    pub singular: bool,
    pub has_compact_component: bool,
}

impl TopologyClass {
    /// Euler characteristic `2n − 2` of the smooth real surface.
    pub fn euler_characteristic(&self) -> i32 {
        2 * self.traces_inside as i32 - 2
    }
}

pub fn classify_real_topology(t: &TraceParams<f64>, policy: &NumericPolicy) -> Result<TopologyClass> {
    if !t.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite traces {t:?}")));
    }
    let traces = t.to_array();
    let n = traces.iter().filter(|v| v.abs() < 2.0).count() as u8;
    let case = match n {
        0 => {
            if traces.iter().product::<f64>() < 0.0 {
                TopologyCase::QuadruplyPuncturedSphere
            } else {
                TopologyCase::TriplyPuncturedTorusAndDisk
            }
        }
        1 => TopologyCase::TriplyPuncturedSphereAndDisk,
        2 => TopologyCase::AnnulusAndTwoDisks,
        3 => TopologyCase::FourDisks,
        _ => TopologyCase::FourDisksAndSphere,
    };
    Ok(TopologyClass {
        case,
        traces_inside: n,
        singular: is_singular_surface(t, policy),
        has_compact_component: case == TopologyCase::FourDisksAndSphere,
    })
}

/// Outcome of the multi-start search for singular points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SingularPointSearch {
    pub points: Vec<SurfacePoint<f64>>,
    pub starts: usize,
    /// Starts whose Newton iteration converged to a critical point of `F`.
    pub converged: usize,
    /// Converged critical points that failed the on-surface re-verification.
    pub off_surface: usize,
    pub diverged: usize,
}

/// Real solutions of `∇F = 0 ∧ F = 0` by Newton on `∇F` from a cubic grid of starts.
pub fn singular_points(params: &SurfaceParams<f64>, policy: &NumericPolicy) -> SingularPointSearch {
    let k = policy.singular_grid_points.max(2);
    let r = policy.singular_grid_radius;
    let coord = |i: usize| -r + 2.0 * r * i as f64 / (k - 1) as f64;
    let mut out = SingularPointSearch {
        points: Vec::new(),
        starts: k * k * k,
        converged: 0,
        off_surface: 0,
        diverged: 0,
    };
    for i in 0..k {
        for j in 0..k {
            for l in 0..k {
                let start = [coord(i), coord(j), coord(l)];
                let Some(p) = newton_critical(params, start, policy) else {
                    out.diverged += 1;
                    continue;
                };
                out.converged += 1;
                let g = gradient(params, &p);
                let ok = residual(params, &p).abs() <= policy.singular_verify
                    && norm3(&g) <= policy.singular_verify;
                if !ok {
                    out.off_surface += 1;
                    continue;
                }
                if out.points.iter().all(|q| q.dist_max(&p) > policy.singular_dedup) {
                    out.points.push(p);
                }
            }
        }
    }
    out.points.sort_by(|p, q| {
        p.to_array()
            .partial_cmp(&q.to_array())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out
}

fn newton_critical(params: &SurfaceParams<f64>, start: [f64; 3], policy: &NumericPolicy) -> Option<SurfacePoint<f64>> {
    let mut p = SurfacePoint::from_array(start);
    for _ in 0..policy.newton_max_iter {
        let g = gradient(params, &p);
        let (x, y, z) = (p.x, p.y, p.z);
        let h = [[2.0, z, y], [z, 2.0, x], [y, x, 2.0]];
        let step = solve3(h, g)?;
        p = SurfacePoint::new(x - step[0], y - step[1], z - step[2]);
        if !p.is_finite() {
            return None;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) <= policy.newton_tol * (1.0 + p.max_modulus()) {
            return Some(p);
        }
    }
    let g = gradient(params, &p);
    (norm3(&g) <= policy.newton_tol.sqrt()).then_some(p)
}

/// Cramer's rule for a 3×3 system; `None` when (nearly) singular.
fn solve3(m: [[f64; 3]; 3], rhs: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&m);
    let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if d.abs() < 1e-14 * scale * scale * scale {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut mc = m;
        for row in 0..3 {
            mc[row][col] = rhs[row];
        }
        *slot = det(&mc) / d;
    }
    Some(out)
}

/// Real roots in `z` of `F(x, y, z) = 0`: empty for a negative
/// discriminant, a single value for a double root.
pub fn solve_fiber_z(params: &SurfaceParams<f64>, x: f64, y: f64) -> Vec<f64> {
    let b = x * y - params.c;
    let c = x * x + y * y - params.a * x - params.b * y - params.d;
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Vec::new();
    }
    if disc == 0.0 {
        return vec![-b / 2.0];
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    let q = if b == 0.0 { -0.5 * disc.sqrt() } else { q };
    let (r1, r2) = (q, c / q);
    if r1 <= r2 {
        vec![r1, r2]
    } else {
        vec![r2, r1]
    }
}

/// Both complex roots in `z` of `F(x, y, z) = 0` (with multiplicity).
pub fn solve_fiber_z_complex<T: Scalar>(params: &SurfaceParams<T>, x: T, y: T) -> [Complex64; 2] {
    let b = (x * y - params.c).to_complex();
    let c = (x * x + y * y - params.a * x - params.b * y - params.d).to_complex();
    let s = (b * b - 4.0 * c).sqrt();
    let (plus, minus) = (b + s, b - s);
    let big = if plus.norm() >= minus.norm() { plus } else { minus };
    if big.norm() == 0.0 {
        return [Complex64::new(0.0, 0.0); 2];
    }
    let q = -0.5 * big;
    [q, c / q]
}

/// Compact-component membership: on-surface and inside the `[−2, 2]³` box.
pub fn in_compact_component(params: &SurfaceParams<f64>, p: &SurfacePoint<f64>, policy: &NumericPolicy) -> bool {
    residual(params, p).abs() <= policy.on_surface_tol && in_box(p, policy.box_tol)
}

pub fn in_box(p: &SurfacePoint<f64>, tol: f64) -> bool {
    p.max_modulus() <= 2.0 + tol
}

/// An orthonormal basis `(e1, e2)` of the kernel of `v ↦ ∇F · v` at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentFrame<T = f64> {
    pub base: SurfacePoint<T>,
    pub e1: [T; 3],
    pub e2: [T; 3],
    pub gradient: [T; 3],
}

impl<T: Scalar> TangentFrame<T> {
    /// Coordinates of a tangent vector in this frame.
    pub fn coords(&self, v: &[T; 3]) -> [T; 2] {
        [hdot(&self.e1, v), hdot(&self.e2, v)]
    }

    pub fn vector(&self, c: [T; 2]) -> [T; 3] {
        std::array::from_fn(|i| self.e1[i] * c[0] + self.e2[i] * c[1])
    }
}

pub fn tangent_frame<T: Scalar>(
    params: &SurfaceParams<T>,
    p: &SurfacePoint<T>,
    policy: &NumericPolicy,
) -> Result<TangentFrame<T>> {
    let g = gradient(params, p);
    let gn = norm3(&g);
    if !(gn >= policy.frame_min_grad) {
        return Err(Error::SingularPoint { grad_norm: gn });
    }
    // The kernel of the bilinear pairing with g is the Hermitian complement of conj(g).
    let n: [T; 3] = std::array::from_fn(|i| g[i].conj().scale(1.0 / gn));
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&i, &j| {
        n[i].modulus()
            .partial_cmp(&n[j].modulus())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let unit = |k: usize| -> [T; 3] { std::array::from_fn(|i| T::from_f64(if i == k { 1.0 } else { 0.0 })) };
    let project_out = |v: [T; 3], u: &[T; 3]| -> [T; 3] {
        let c = hdot(u, &v);
        std::array::from_fn(|i| v[i] - u[i] * c)
    };
    let normalize = |v: [T; 3]| -> [T; 3] {
        let len = norm3(&v);
        std::array::from_fn(|i| v[i].scale(1.0 / len))
    };
    let e1 = normalize(project_out(unit(axes[0]), &n));
    let e2 = normalize(project_out(project_out(unit(axes[1]), &n), &e1));
    Ok(TangentFrame {
        base: p.clone(),
        e1,
        e2,
        gradient: g,
    })
}

/// `|∇F · v|` relative to `|∇F| |v|`, for tangency checks.
pub fn tangency_defect<T: Scalar>(g: &[T; 3], v: &[T; 3]) -> f64 {
    let scale = norm3(g) * norm3(v);
    if scale == 0.0 {
        return 0.0;
    }
    bdot(g, v).modulus() / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn policy() -> NumericPolicy {
        NumericPolicy::default()
    }

    #[test]
    fn residual_examples() {
        let bk = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
        assert_eq!(residual(&bk, &SurfacePoint::new(0.0, 0.0, 0.0)), 0.0);
        assert_eq!(residual(&cayley, &SurfacePoint::new(1.0, 0.0, 0.0)), -3.0);
        assert_eq!(residual(&cayley, &SurfacePoint::new(2.0, 2.0, -2.0)), 0.0);
    }

    #[test]
    fn gradient_examples() {
        let bk = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
        assert_eq!(gradient(&bk, &SurfacePoint::new(0.0, 0.0, 0.0)), [-1.0, -1.0, -1.0]);
        assert_eq!(gradient(&cayley, &SurfacePoint::new(2.0, 2.0, -2.0)), [0.0, 0.0, 0.0]);
        assert_eq!(gradient(&cayley, &SurfacePoint::new(2.0, 0.0, 0.0)), [4.0, 0.0, 0.0]);
    }

    #[test]
    fn pi_map_examples() {
        assert_eq!(
            pi_map(&TraceParams::new(0.0, 0.0, 0.0, 0.0)),
            SurfaceParams::new(0.0, 0.0, 0.0, 4.0)
        );
        assert_eq!(
            pi_map(&TraceParams::new(2.0, 2.0, 2.0, 2.0)),
            SurfaceParams::new(8.0, 8.0, 8.0, -28.0)
        );
        let c1 = 2.0 * (2.0 * PI / 7.0).cos();
        let c2 = 2.0 * (4.0 * PI / 7.0).cos();
        let p = pi_map(&TraceParams::new(c1, c1, c1, c2));
        for (got, want) in p.to_array().iter().zip([1.0, 1.0, 1.0, 0.0]) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn discriminant_examples() {
        assert_eq!(discriminant(&TraceParams::new(0.0, 0.0, 0.0, 0.0)), 0.0);
        assert_eq!(discriminant(&TraceParams::new(0.0, 0.0, 0.0, 1.0)), 4.0);
        assert_eq!(discriminant(&TraceParams::new(2.0, 0.0, 0.0, 0.0)), 64.0);
    }

    #[test]
    fn singular_surface_examples() {
        let p = policy();
        assert!(is_singular_surface(&TraceParams::new(0.0, 0.0, 0.0, 0.0), &p));
        assert!(is_singular_surface(&TraceParams::new(2.0, 1.0, 1.0, 1.0), &p));
        assert!(!is_singular_surface(&TraceParams::new(0.0, 0.0, 0.0, 1.0), &p));
        assert!(is_singular_surface(&TraceParams::new(1.0, -2.0, 0.5, 0.0), &p));
    }

    #[test]
    fn topology_examples() {
        let p = policy();
        let t = classify_real_topology(&TraceParams::new(0.0, 0.0, 0.0, 1.0), &p).unwrap();
        assert_eq!(t.case, TopologyCase::FourDisksAndSphere);
        assert_eq!(t.traces_inside, 4);
        assert!(t.has_compact_component);
        assert!(!t.singular);
        assert_eq!(t.euler_characteristic(), 6);

        let t = classify_real_topology(&TraceParams::new(3.0, 0.0, 0.0, 0.0), &p).unwrap();
        assert_eq!(t.case, TopologyCase::FourDisks);
        assert_eq!(t.traces_inside, 3);
        assert!(!t.has_compact_component);

        let t = classify_real_topology(&TraceParams::new(3.0, 3.0, 3.0, -3.0), &p).unwrap();
        assert_eq!(t.case, TopologyCase::QuadruplyPuncturedSphere);
        assert_eq!(t.traces_inside, 0);

        let t = classify_real_topology(&TraceParams::new(3.0, 3.0, 3.0, 3.0), &p).unwrap();
        assert_eq!(t.case, TopologyCase::TriplyPuncturedTorusAndDisk);
    }

    #[test]
    fn topology_rejects_complex_traces() {
        let t = TraceParams::new(
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        );
        assert!(matches!(t.to_real(), Err(Error::NonReal(_))));
        let real = TraceParams::new(
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        );
        assert!(real.is_real());
        assert!(classify_real_topology(&real.to_real().unwrap(), &policy()).is_ok());
    }

    #[test]
    fn cayley_singular_points() {
        let search = singular_points(&SurfaceParams::new(0.0, 0.0, 0.0, 4.0), &policy());
        let mut want = vec![
            [-2.0, -2.0, -2.0],
            [-2.0, 2.0, 2.0],
            [2.0, -2.0, 2.0],
            [2.0, 2.0, -2.0],
        ];
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(search.points.len(), 4, "{search:?}");
        for (p, w) in search.points.iter().zip(&want) {
            assert!(p.dist_max(&SurfacePoint::from_array(*w)) < 1e-8);
        }
        assert_eq!(search.starts, 11 * 11 * 11);
    }

    #[test]
    fn smooth_surfaces_have_no_singular_points() {
        let p = policy();
        assert!(singular_points(&pi_map(&TraceParams::new(0.0, 0.0, 0.0, 1.0)), &p).points.is_empty());
        assert!(singular_points(&SurfaceParams::new(1.0, 1.0, 1.0, 0.0), &p).points.is_empty());
    }

    #[test]
    fn fiber_examples() {
        let bk = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        assert_eq!(solve_fiber_z(&bk, 0.0, 0.0), vec![0.0, 1.0]);
        let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
        assert_eq!(solve_fiber_z(&cayley, 2.0, 0.0), vec![0.0]);
        // z² + 24z + 40 = 0
        let roots = solve_fiber_z(&bk, 5.0, 5.0);
        let exact = [-12.0 - 104f64.sqrt(), -12.0 + 104f64.sqrt()];
        assert_eq!(roots.len(), 2);
        for (r, e) in roots.iter().zip(exact) {
            assert!((r - e).abs() < 1e-12);
        }
        assert!((roots[0] + 22.198).abs() < 1e-3);
        assert!((roots[1] + 1.802).abs() < 1e-3);
        // negative discriminant: z² + 1 = 0 at x = y = 0 for D = -1
        assert!(solve_fiber_z(&SurfaceParams::new(0.0, 0.0, 0.0, -1.0), 0.0, 0.0).is_empty());
        let c = solve_fiber_z_complex(&SurfaceParams::new(0.0, 0.0, 0.0, -1.0), 0.0, 0.0);
        let mut ims = [c[0].im, c[1].im];
        ims.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ims[0] + 1.0).abs() < 1e-15 && (ims[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn compact_component_examples() {
        let p = policy();
        let bk = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        assert!(in_compact_component(&bk, &SurfacePoint::new(0.0, 0.0, 0.0), &p));
        let z = solve_fiber_z(&bk, 5.0, 5.0)[0];
        assert!(!in_compact_component(&bk, &SurfacePoint::new(5.0, 5.0, z), &p));
        let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
        assert!(in_compact_component(&cayley, &SurfacePoint::new(1.0, 1.0, 1.0), &p));
    }

    #[test]
    fn frame_examples() {
        let p = policy();
        let bk = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        let f = tangent_frame(&bk, &SurfacePoint::new(0.0, 0.0, 0.0), &p).unwrap();
        for e in [&f.e1, &f.e2] {
            assert!(bdot(&[-1.0, -1.0, -1.0], e).abs() <= 1e-12);
        }
        let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
        assert!(matches!(
            tangent_frame(&cayley, &SurfacePoint::new(2.0, 2.0, -2.0), &p),
            Err(Error::SingularPoint { .. })
        ));
    }

    #[test]
    fn complex_frame_is_hermitian_orthonormal() {
        let params = SurfaceParams::new(1.0, 1.0, 1.0, 0.0).to_complex();
        let x = Complex64::new(0.3, 0.7);
        let y = Complex64::new(-1.1, 0.2);
        let z = solve_fiber_z_complex(&params, x, y)[0];
        let pt = SurfacePoint::new(x, y, z);
        assert!(residual(&params, &pt).norm() < 1e-12);
        let f = tangent_frame(&params, &pt, &policy()).unwrap();
        assert!((hdot(&f.e1, &f.e1).re - 1.0).abs() < 1e-12);
        assert!((hdot(&f.e2, &f.e2).re - 1.0).abs() < 1e-12);
        assert!(hdot(&f.e1, &f.e2).norm() < 1e-12);
        assert!(tangency_defect(&f.gradient, &f.e1) < 1e-12);
        assert!(tangency_defect(&f.gradient, &f.e2) < 1e-12);
    }

    #[test]
    fn params_json_roundtrip() {
        let p = SurfaceParams::new(1.0, 1.0, 1.0, 0.0);
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"A":1.0,"B":1.0,"C":1.0,"D":0.0}"#);
        let back: SurfaceParams = serde_json::from_str(r#"{"A":1,"B":[1,0],"C":1,"D":0}"#).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<SurfaceParams>(r#"{"A":1,"B":[1,2],"C":1,"D":0}"#).is_err());
        assert!(serde_json::from_str::<SurfaceParams>(r#"{"A":1,"B":1,"C":1,"D":0,"E":2}"#).is_err());
        let c: SurfacePoint<Complex64> = serde_json::from_str(r#"{"x":[1,2],"y":0,"z":[0,-1]}"#).unwrap();
        assert_eq!(c.x, Complex64::new(1.0, 2.0));
        assert_eq!(
            serde_json::to_string(&c).unwrap(),
            r#"{"x":[1.0,2.0],"y":[0.0,0.0],"z":[0.0,-1.0]}"#
        );
    }
}
