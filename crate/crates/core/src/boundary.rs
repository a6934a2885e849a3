//! Reduced words, the reflection-group model in `PGL₂(R)`, and rank-one
//! limits of normalised matrix products.

use std::io::Write;

use num::{BigInt, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};
use crate::vieta::{Letter, ReducedWord, Word};

/// Integer 2×2 matrix; entries of products are exact while they fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IsometryMatrix(pub [[i128; 2]; 2]);

impl IsometryMatrix {
    pub const IDENTITY: IsometryMatrix = IsometryMatrix([[1, 0], [0, 1]]);

    pub fn checked_mul(&self, rhs: &IsometryMatrix) -> Option<IsometryMatrix> {
        let (a, b) = (&self.0, &rhs.0);
        let entry = |i: usize, j: usize| a[i][0].checked_mul(b[0][j])?.checked_add(a[i][1].checked_mul(b[1][j])?);
        Some(IsometryMatrix([[entry(0, 0)?, entry(0, 1)?], [entry(1, 0)?, entry(1, 1)?]]))
    }

    pub fn det(&self) -> i128 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn to_f64(&self) -> Mat2 {
        self.0.map(|r| r.map(|v| v as f64))
    }

    pub fn neg(&self) -> IsometryMatrix {
        IsometryMatrix(self.0.map(|r| r.map(|v| -v)))
    }

    pub fn max_abs(&self) -> i128 {
        self.0.iter().flatten().map(|v| v.abs()).max().unwrap_or(0)
    }

    /// Action on the upper half plane, `z ↦ (a z̄ + b) / (c z̄ + d)` for
    /// determinant −1 and `(a z + b) / (c z + d)` for determinant 1.
    pub fn act(&self, z: num::complex::Complex64) -> num::complex::Complex64 {
        let m = self.to_f64();
        let w = if self.det() < 0 { z.conj() } else { z };
        (w * m[0][0] + m[0][1]) / (w * m[1][0] + m[1][1])
    }
}

pub fn reflection_matrix(l: Letter) -> IsometryMatrix {
    IsometryMatrix(match l {
        Letter::X => [[-1, 2], [0, 1]],
        Letter::Y => [[1, 0], [2, -1]],
        Letter::Z => [[1, 0], [0, -1]],
    })
}

/// Exact product `σ̂_{i1} ⋯ σ̂_{in}`, or `None` once an entry overflows.
pub fn exact_product(w: &Word) -> Option<IsometryMatrix> {
    w.letters().iter().try_fold(IsometryMatrix::IDENTITY, |acc, &l| acc.checked_mul(&reflection_matrix(l)))
}

/// A product divided by its operator norm, with the accumulated log of the norm.
///
/// The raw product is kept exactly in big integers while its entries stay
/// below [`EXACT_BITS`] bits; after that it continues in floating point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedProduct {
    pub matrix: Mat2,
    pub log_norm: f64,
    pub len: usize,
    /// `log |det|` of the raw product.
    pub log_abs_det: f64,
    #[serde(skip)]
    exact: Option<[[BigInt; 2]; 2]>,
}

pub const EXACT_BITS: u64 = 1 << 12;

/// `x · 2^-shift` as a float.
fn scaled(x: &BigInt, shift: u64) -> f64 {
    (x >> shift as usize).to_f64().unwrap_or(0.0)
}

fn log_abs(x: &BigInt) -> f64 {
    let shift = x.bits().saturating_sub(64);
    scaled(x, shift).abs().ln() + shift as f64 * std::f64::consts::LN_2
}

impl NormalizedProduct {
    pub fn identity() -> Self {
        let one = || BigInt::from(1);
        let zero = || BigInt::from(0);
        NormalizedProduct {
            matrix: linalg::IDENTITY,
            log_norm: 0.0,
            len: 0,
            log_abs_det: 0.0,
            exact: Some([[one(), zero()], [zero(), one()]]),
        }
    }

    fn sync_from_exact(&mut self) {
        let Some(m) = &self.exact else { return };
        let bits = m.iter().flatten().map(|v| v.bits()).max().unwrap_or(0);
        let shift = bits.saturating_sub(60);
        let f = m.clone().map(|r| r.map(|v| scaled(&v, shift)));
        let (s1, _) = linalg::singular_values(&f);
        self.matrix = linalg::scale(&f, 1.0 / s1);
        self.log_norm = s1.ln() + shift as f64 * std::f64::consts::LN_2;
        self.log_abs_det = log_abs(&(&m[0][0] * &m[1][1] - &m[0][1] * &m[1][0]));
    }

    /// Right-multiplies by one more generator and renormalises.
    pub fn push(&mut self, l: Letter) {
        let g = reflection_matrix(l);
        self.len += 1;
        if let Some(m) = &self.exact {
            let gi = g.0.map(|r| r.map(BigInt::from));
            let next: [[BigInt; 2]; 2] =
                std::array::from_fn(|i| std::array::from_fn(|j| &m[i][0] * &gi[0][j] + &m[i][1] * &gi[1][j]));
            if next.iter().flatten().all(|v| v.bits() <= EXACT_BITS) {
                self.exact = Some(next);
                self.sync_from_exact();
                return;
            }
            self.exact = None;
        }
        let next = linalg::mul(&self.matrix, &g.to_f64());
        let (s1, _) = linalg::singular_values(&next);
        self.matrix = linalg::scale(&next, 1.0 / s1);
        self.log_norm += s1.ln();
        self.log_abs_det += (g.det().abs() as f64).ln();
    }

    /// Whether the raw product is still held exactly.
    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// `log(σ2/σ1)` of the raw product, exact in the log domain.
    pub fn log_defect(&self) -> f64 {
        self.log_abs_det - 2.0 * self.log_norm
    }

    pub fn defect(&self) -> f64 {
        self.log_defect().exp().min(1.0)
    }
}

pub fn normalized_product(w: &Word) -> NormalizedProduct {
    let mut p = NormalizedProduct::identity();
    for &l in w.letters() {
        p.push(l);
    }
    p
}

/// `σ2/σ1` in `[0, 1]`.
pub fn rank_one_defect(m: &Mat2) -> Result<f64> {
    let (s1, s2) = linalg::singular_values(m);
    if s1 == 0.0 {
        return Err(Error::InvalidInput("rank-one defect of the zero matrix".into()));
    }
    Ok((s2 / s1).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FurstenbergDirection {
    pub n: usize,
    /// Angle in `[0, π)` of the image line of the normalised product.
    pub angle: f64,
    pub defect: f64,
    pub log_norm: f64,
    /// False unless all three letters occur, e.g. for a constant stream.
    pub generic: bool,
}

fn direction_of(p: &NormalizedProduct, generic: bool) -> FurstenbergDirection {
    let v = linalg::top_left_singular_vector(&p.matrix);
    let mut angle = v[1].atan2(v[0]).rem_euclid(std::f64::consts::PI);
    if angle >= std::f64::consts::PI {
        angle = 0.0;
    }
    let defect = p.defect();
    FurstenbergDirection { n: p.len, angle, defect, log_norm: p.log_norm, generic }
}

pub fn furstenberg_direction(stream: &[Letter], n: usize) -> Result<FurstenbergDirection> {
    if n == 0 || n > stream.len() {
        return Err(Error::InvalidInput(format!("need 1 <= n <= {} letters, got {n}", stream.len())));
    }
    let prefix = &stream[..n];
    Ok(direction_of(&normalized_product(&Word(prefix.to_vec())), uses_all_letters(prefix)))
}

fn uses_all_letters(s: &[Letter]) -> bool {
    Letter::ALL.iter().all(|l| s.contains(l))
}

/// Distance between two directions on the projective line.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// Angular resolution of a renormalised product in double precision; gaps
/// below it are rounding, whatever the defect.
pub const ANGLE_RESOLUTION: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyCheck {
    pub n: usize,
    pub defect: f64,
    /// Angle between the directions after `n` and `2n` letters.
    pub gap: f64,
    pub bound: f64,
}

impl CauchyCheck {
    pub fn holds(&self) -> bool {
        self.gap <= self.bound
    }
}

/// Compares the directions of `a[..n]` with those of `b[..2n]`; pass the
/// same stream twice for the Cauchy property, or two streams sharing their
/// first `n` letters for tail independence.
pub fn cauchy_check(a: &[Letter], b: &[Letter], n: usize) -> Result<CauchyCheck> {
    if a[..n.min(a.len())] != b[..n.min(b.len())] {
        return Err(Error::InvalidInput("streams differ before position n".into()));
    }
    let first = furstenberg_direction(a, n)?;
    let second = furstenberg_direction(b, 2 * n)?;
    let gap = angle_distance(first.angle, second.angle);
    Ok(CauchyCheck { n, defect: first.defect, gap, bound: 10.0 * first.defect + ANGLE_RESOLUTION })
}

/// Direction, defect and log-norm after every `every` letters.
pub fn direction_series(stream: &[Letter], every: usize) -> Vec<FurstenbergDirection> {
    let every = every.max(1);
    let mut p = NormalizedProduct::identity();
    let mut out = Vec::new();
    let mut seen = [false; 3];
    for (i, &l) in stream.iter().enumerate() {
        p.push(l);
        seen[l.index()] = true;
        if (i + 1) % every == 0 {
            out.push(direction_of(&p, seen.iter().all(|&b| b)));
        }
    }
    out
}

pub fn write_direction_csv<W: Write>(rows: &[FurstenbergDirection], mut w: W) -> Result<()> {
    writeln!(w, "n,angle,defect,lognorm")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n, r.angle, r.defect, r.log_norm)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialLetter {
    pub letter: Letter,
    /// Last step (1-based) at which the first letter of the reduced word changed.
    pub stabilized_at: usize,
    /// Smallest reduced length seen since then.
    pub min_depth_since: usize,
    pub reduced_len: usize,
}

/// First letter of the reduced form of the first `n` letters.
pub fn initial_letter(stream: &[Letter], n: usize) -> Result<InitialLetter> {
    let n = n.min(stream.len());
    let mut stack: Vec<Letter> = Vec::new();
    let mut bottom = None;
    let mut changed = 0;
    let mut min_depth = usize::MAX;
    for (i, &l) in stream[..n].iter().enumerate() {
        if stack.last() == Some(&l) {
            stack.pop();
        } else {
            stack.push(l);
        }
        let b = stack.first().copied();
        if b != bottom {
            bottom = b;
            changed = i + 1;
            min_depth = stack.len();
        }
        min_depth = min_depth.min(stack.len());
    }
    match bottom {
        Some(letter) => Ok(InitialLetter { letter, stabilized_at: changed, min_depth_since: min_depth, reduced_len: stack.len() }),
        None => Err(Error::EmptyReduction { step: n }),
    }
}

/// Concatenation followed by reduction.
pub fn reduce_concat(a: &ReducedWord, b: &ReducedWord) -> ReducedWord {
    let mut letters = a.letters().to_vec();
    letters.extend_from_slice(b.letters());
    crate::vieta::reduce(&Word(letters))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubdivisionCycle {
    pub m: u32,
    /// Depth label of each vertex, in cyclic order.
    pub depths: Vec<u32>,
}

impl SubdivisionCycle {
    pub fn len(&self) -> usize {
        self.depths.len()
    }
    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.m as usize + 1];
        for &d in &self.depths {
            h[d as usize] += 1;
        }
        h
    }
}

/// The cycle obtained from the triangle by `m` rounds of inserting a
/// vertex between every pair of neighbours.
pub fn subdivision_cycle(m: u32) -> Result<SubdivisionCycle> {
    if m > 20 {
        return Err(Error::InvalidInput(format!("subdivision depth {m} exceeds 20")));
    }
    let mut depths = vec![0u32; 3];
    for k in 1..=m {
        let mut next = Vec::with_capacity(depths.len() * 2);
        for &d in &depths {
            next.push(d);
            next.push(k);
        }
        depths = next;
    }
    Ok(SubdivisionCycle { m, depths })
}
