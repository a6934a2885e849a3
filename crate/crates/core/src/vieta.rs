//! The group `Z/2 * Z/2 * Z/2` acting by Vieta involutions.
//!
//! Each involution swaps the two roots of the surface equation seen as a
//! quadratic in one coordinate. Words act left to right: the first letter
//! acts first on the point.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{gradient, SurfaceParams, SurfacePoint, TangentFrame};
use crate::policy::NumericPolicy;
use crate::scalar::{hdot, norm3, Ring, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Letter {
    X,
    Y,
    Z,
}

impl Letter {
    pub const ALL: [Letter; 3] = [Letter::X, Letter::Y, Letter::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Letter {
        Self::ALL[i % 3]
    }

    pub fn as_char(self) -> char {
        match self {
            Letter::X => 'x',
            Letter::Y => 'y',
            Letter::Z => 'z',
        }
    }

    pub fn from_char(c: char) -> Option<Letter> {
        match c.to_ascii_lowercase() {
            'x' => Some(Letter::X),
            'y' => Some(Letter::Y),
            'z' => Some(Letter::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl Serialize for Letter {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_char(self.as_char())
    }
}

impl<'de> Deserialize<'de> for Letter {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let c = char::deserialize(d)?;
        Letter::from_char(c).ok_or_else(|| serde::de::Error::custom(format!("bad letter {c:?}")))
    }
}

/// A finite letter sequence; adjacent repeats allowed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Word(pub Vec<Letter>);

/// A word with no two equal adjacent letters: the normal form in the free product.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReducedWord(Vec<Letter>);

impl Word {
    pub fn new(letters: Vec<Letter>) -> Self {
        Word(letters)
    }
    pub fn letters(&self) -> &[Letter] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl ReducedWord {
    /// Validates the no-adjacent-repeat invariant.
    pub fn try_new(letters: Vec<Letter>) -> Option<Self> {
        letters.windows(2).all(|w| w[0] != w[1]).then_some(ReducedWord(letters))
    }
    pub fn letters(&self) -> &[Letter] {
        &self.0
    }
    pub fn len(&self) -> usize {
        self.0.len()
    }
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
    pub fn into_word(self) -> Word {
        Word(self.0)
    }
    pub fn first(&self) -> Option<Letter> {
        self.0.first().copied()
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|l| write!(f, "{l}"))
    }
}

impl fmt::Display for ReducedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|l| write!(f, "{l}"))
    }
}

impl FromStr for Word {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| Letter::from_char(c).ok_or_else(|| Error::InvalidInput(format!("bad letter {c:?} in word {s:?}"))))
            .collect::<Result<Vec<_>>>()
            .map(Word)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Serialize for ReducedWord {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Image of `p` under the named involution; the other two coordinates are untouched.
pub fn apply_letter<T: Ring>(l: Letter, params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> SurfacePoint<T> {
    let (x, y, z) = (p.x.clone(), p.y.clone(), p.z.clone());
    match l {
        Letter::X => SurfacePoint::new(-x - y.clone() * z.clone() + params.a.clone(), y, z),
        Letter::Y => SurfacePoint::new(x.clone(), -y - z.clone() * x + params.b.clone(), z),
        Letter::Z => SurfacePoint::new(x.clone(), y.clone(), -z - x * y + params.c.clone()),
    }
}

pub fn apply_word<T: Ring>(w: &Word, params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> SurfacePoint<T> {
    w.0.iter().fold(p.clone(), |q, &l| apply_letter(l, params, &q))
}

/// Free-product normal form by cancelling adjacent equal pairs (stack algorithm).
pub fn reduce(w: &Word) -> ReducedWord {
    let mut stack: Vec<Letter> = Vec::with_capacity(w.len());
    for &l in &w.0 {
        if stack.last() == Some(&l) {
            stack.pop();
        } else {
            stack.push(l);
        }
    }
    ReducedWord(stack)
}

/// Derivative of a Vieta involution as a map of affine 3-space.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientJacobian<T = f64>(pub [[T; 3]; 3]);

impl<T: Ring> AmbientJacobian<T> {
    pub fn determinant(&self) -> T {
        let m = &self.0;
        m[0][0].clone() * (m[1][1].clone() * m[2][2].clone() - m[1][2].clone() * m[2][1].clone())
            - m[0][1].clone() * (m[1][0].clone() * m[2][2].clone() - m[1][2].clone() * m[2][0].clone())
            + m[0][2].clone() * (m[1][0].clone() * m[2][1].clone() - m[1][1].clone() * m[2][0].clone())
    }

    pub fn apply(&self, v: &[T; 3]) -> [T; 3] {
        std::array::from_fn(|i| {
            self.0[i][0].clone() * v[0].clone() + self.0[i][1].clone() * v[1].clone() + self.0[i][2].clone() * v[2].clone()
        })
    }

    /// Matrix product `self · rhs`.
    pub fn compose(&self, rhs: &AmbientJacobian<T>) -> AmbientJacobian<T> {
        AmbientJacobian(std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                (0..3).fold(T::zero(), |acc, k| acc + self.0[i][k].clone() * rhs.0[k][j].clone())
            })
        }))
    }
}

pub fn ambient_jacobian<T: Ring>(l: Letter, _params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> AmbientJacobian<T> {
    let (o, z) = (T::one(), T::zero());
    let (x, y, w) = (p.x.clone(), p.y.clone(), p.z.clone());
    AmbientJacobian(match l {
        Letter::X => [[-o.clone(), -w, -y], [z.clone(), o.clone(), z.clone()], [z.clone(), z, o]],
        Letter::Y => [[o.clone(), z.clone(), z.clone()], [-w, -o.clone(), -x], [z.clone(), z, o]],
        Letter::Z => [[o.clone(), z.clone(), z.clone()], [z.clone(), o.clone(), z], [-y, -x, -o]],
    })
}

/// Chain-rule Jacobian of a whole word at `p`, and the image point.
pub fn word_jacobian<T: Ring>(w: &Word, params: &SurfaceParams<T>, p: &SurfacePoint<T>) -> (AmbientJacobian<T>, SurfacePoint<T>) {
    let (o, z) = (T::one(), T::zero());
    let id = AmbientJacobian([
        [o.clone(), z.clone(), z.clone()],
        [z.clone(), o.clone(), z.clone()],
        [z.clone(), z, o],
    ]);
    w.0.iter().fold((id, p.clone()), |(acc, q), &l| {
        let j = ambient_jacobian(l, params, &q);
        (j.compose(&acc), apply_letter(l, params, &q))
    })
}

/// The 2×2 matrix of `D s_l` restricted to `T_p S`, from `frame_p` to `frame_image`.
///
/// Column `j` holds the coordinates of `J e_j` in the image frame.
pub fn restricted_differential<T: Scalar>(
    l: Letter,
    params: &SurfaceParams<T>,
    p: &SurfacePoint<T>,
    frame_p: &TangentFrame<T>,
    frame_image: &TangentFrame<T>,
    policy: &NumericPolicy,
) -> Result<[[T; 2]; 2]> {
    let jac = ambient_jacobian(l, params, p);
    let mut m = [[T::zero(); 2]; 2];
    for (j, e) in [&frame_p.e1, &frame_p.e2].into_iter().enumerate() {
        let v = jac.apply(e);
        let c = frame_image.coords(&v);
        let back = frame_image.vector(c);
        let r: [T; 3] = std::array::from_fn(|i| v[i] - back[i]);
        let residual = norm3(&r);
        if !(residual <= policy.frame_solve_tol * (1.0 + norm3(&v))) {
            return Err(Error::FrameMismatch { residual });
        }
        m[0][j] = c[0];
        m[1][j] = c[1];
    }
    Ok(m)
}

/// The invariant 2-form `dx∧dy/(2z+xy−C) = dy∧dz/(2x+yz−A) = dz∧dx/(2y+zx−B)`
/// evaluated on tangent vectors `v, w`, in the chart of largest denominator.
pub fn area_form<T: Scalar>(
    params: &SurfaceParams<T>,
    p: &SurfacePoint<T>,
    v: &[T; 3],
    w: &[T; 3],
    policy: &NumericPolicy,
) -> Result<T> {
    let g = gradient(params, p);
    // Chart order z, x, y; ties go to the earlier chart.
    let charts = [
        (g[2], v[0] * w[1] - v[1] * w[0]),
        (g[0], v[1] * w[2] - v[2] * w[1]),
        (g[1], v[2] * w[0] - v[0] * w[2]),
    ];
    let mut best = 0;
    for i in 1..3 {
        if charts[i].0.modulus() > charts[best].0.modulus() {
            best = i;
        }
    }
    let gmax = charts[best].0.modulus();
    if gmax == 0.0 {
        return Err(Error::SingularPoint { grad_norm: 0.0 });
    }
    let value = charts[best].1 / charts[best].0;
    let scale = norm3(v) * norm3(w) / norm3(&g);
    for (i, &(den, num)) in charts.iter().enumerate() {
        if i == best || den.modulus() < 0.1 * gmax {
            continue;
        }
        let other = num / den;
        if (other - value).modulus() > policy.area_agreement_tol * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::ChartDisagreement {
                first: value.modulus(),
                second: other.modulus(),
            });
        }
    }
    Ok(value)
}

/// `ω(e1, e2)` for a frame, the normalisation relating 2×2 determinants to area.
pub fn frame_area<T: Scalar>(params: &SurfaceParams<T>, frame: &TangentFrame<T>, policy: &NumericPolicy) -> Result<T> {
    area_form(params, &frame.base, &frame.e1, &frame.e2, policy)
}

pub fn det2<T: Scalar>(m: &[[T; 2]; 2]) -> T {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Hermitian inner product helper re-exported for frame checks.
pub fn frame_gram<T: Scalar>(frame: &TangentFrame<T>) -> [[T; 2]; 2] {
    [
        [hdot(&frame.e1, &frame.e1), hdot(&frame.e1, &frame.e2)],
        [hdot(&frame.e2, &frame.e1), hdot(&frame.e2, &frame.e2)],
    ]
}
