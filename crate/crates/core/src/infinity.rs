//! Dynamics near the triangle at infinity.
//!
//! The closure of the surface in `P³` meets the plane `w = 0` in the triangle
//! `xyz = 0`. Near its vertices `P1 = [1:0:0:0]`, `P2 = [0:1:0:0]`,
//! `P3 = [0:0:1:0]` the surface is a graph `w = φ(u, v)` over the two small
//! coordinate ratios, and each involution acts on `(−log|u|, −log|v|)` as one
//! of the integer matrices `A`, `B` up to exponentially small errors.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{SurfaceParams, SurfacePoint};
use crate::policy::NumericPolicy;
use crate::scalar::{Ring, Scalar};
use crate::stats::{stream_rng, uniform};
use crate::vieta::{apply_letter, Letter};
use crate::walk::{LetterStream, TrajectoryRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChartId {
    P1,
    P2,
    P3,
}

impl ChartId {
    pub fn name(self) -> &'static str {
        match self {
            ChartId::P1 => "P1",
            ChartId::P2 => "P2",
            ChartId::P3 => "P3",
        }
    }

    /// The vertex where `l` is not defined, which is also where it sends
    /// every other vertex.
    pub fn indeterminacy(l: Letter) -> ChartId {
        match l {
            Letter::X => ChartId::P1,
            Letter::Y => ChartId::P2,
            Letter::Z => ChartId::P3,
        }
    }
}

impl fmt::Display for ChartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords<T = f64> {
    pub chart: ChartId,
    pub u: T,
    pub v: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCoords {
    pub alpha: f64,
    pub beta: f64,
}

impl LogCoords {
    pub fn new(alpha: f64, beta: f64) -> Self {
        LogCoords { alpha, beta }
    }
    pub fn l1(&self) -> f64 {
        self.alpha.abs() + self.beta.abs()
    }
    pub fn min(&self) -> f64 {
        self.alpha.min(self.beta)
    }
    pub fn dist_l1(&self, other: &LogCoords) -> f64 {
        (self.alpha - other.alpha).abs() + (self.beta - other.beta).abs()
    }
}

impl<T: Scalar> ChartCoords<T> {
    pub fn log_coords(&self) -> LogCoords {
        LogCoords { alpha: -self.u.modulus().ln(), beta: -self.v.modulus().ln() }
    }
}

/// Ratios of the two smaller coordinates to the dominant one. The dominant
/// coordinate is chosen in the order `z`, `x`, `y` on ties.
pub fn to_chart<T: Scalar>(p: &SurfacePoint<T>, policy: &NumericPolicy) -> Result<ChartCoords<T>> {
    let (mx, my, mz) = (p.x.modulus(), p.y.modulus(), p.z.modulus());
    let max = mx.max(my).max(mz);
    if !(max >= policy.chart_threshold) {
        return Err(Error::NotNearInfinity { max_modulus: max });
    }
    Ok(if mz >= mx && mz >= my {
        ChartCoords { chart: ChartId::P3, u: p.x / p.z, v: p.y / p.z }
    } else if mx >= my {
        ChartCoords { chart: ChartId::P1, u: p.y / p.x, v: p.z / p.x }
    } else {
        ChartCoords { chart: ChartId::P2, u: p.z / p.y, v: p.x / p.y }
    })
}

/// Coefficient of `w²` in the chart's graph cubic.
fn linear_coefficient<T: Ring>(chart: ChartId, params: &SurfaceParams<T>, u: &T, v: &T) -> T {
    let (a, b, c) = (params.a.clone(), params.b.clone(), params.c.clone());
    match chart {
        ChartId::P3 => a * u.clone() + b * v.clone() + c,
        ChartId::P1 => b * u.clone() + c * v.clone() + a,
        ChartId::P2 => c * u.clone() + a * v.clone() + b,
    }
}

/// The root near 0 of `(1+u²+v²) w + uv = L w² + D w³`, where `L` is the
/// chart's linear form in `(u, v)`.
pub fn graph_height<T: Scalar>(
    chart: ChartId,
    params: &SurfaceParams<T>,
    u: T,
    v: T,
    policy: &NumericPolicy,
) -> Result<T> {
    let q = T::one() + u * u + v * v;
    let l = linear_coefficient(chart, params, &u, &v);
    let uv = u * v;
    let d = params.d;
    let mut w = -uv / q;
    let mut iterates = vec![w.modulus()];
    for _ in 0..policy.graph_newton_iter {
        let f = q * w + uv - l * w * w - d * w * w * w;
        let df = q - T::from_f64(2.0) * l * w - T::from_f64(3.0) * d * w * w;
        let step = f / df;
        w = w - step;
        iterates.push(w.modulus());
        if !w.is_finite() {
            return Err(Error::NewtonDivergence { iterates });
        }
        if step.modulus() <= policy.graph_newton_tol * w.modulus().max(f64::MIN_POSITIVE) || step.modulus() == 0.0 {
            return Ok(w);
        }
    }
    Err(Error::NewtonDivergence { iterates })
}

/// Degree-six truncation of the graph function at `P3`.
pub fn phi3_taylor<T: Ring>(params: &SurfaceParams<T>, u: &T, v: &T) -> T {
    let k = |n: i64| T::from_i64(n);
    let (a, b, c, d) = (params.a.clone(), params.b.clone(), params.c.clone(), params.d.clone());
    let (u2, v2, uv) = (u.clone() * u.clone(), v.clone() * v.clone(), u.clone() * v.clone());
    let quad = u2.clone() + c.clone() * uv.clone() + v2.clone();
    let cubic = (a * u.clone() + b * v.clone()) * uv.clone();
    let quartic = u2.clone() * u2.clone()
        + k(3) * c.clone() * u2.clone() * uv.clone()
        + (k(2) - d + k(2) * c.clone() * c.clone()) * uv.clone() * uv.clone()
        + k(3) * c * uv.clone() * v2.clone()
        + v2.clone() * v2;
    -uv * (k(1) - quad - cubic + quartic)
}

/// Homogeneous coordinates `[x : y : z : w]` of the graph point over `c`.
pub fn lift<T: Scalar>(c: &ChartCoords<T>, params: &SurfaceParams<T>, policy: &NumericPolicy) -> Result<[T; 4]> {
    let w = graph_height(c.chart, params, c.u, c.v, policy)?;
    let one = T::one();
    Ok(match c.chart {
        ChartId::P3 => [c.u, c.v, one, w],
        ChartId::P1 => [one, c.u, c.v, w],
        ChartId::P2 => [c.v, one, c.u, w],
    })
}

/// Affine point of a chart point; fails on the triangle at infinity itself.
pub fn from_chart<T: Scalar>(c: &ChartCoords<T>, params: &SurfaceParams<T>, policy: &NumericPolicy) -> Result<SurfacePoint<T>> {
    let h = lift(c, params, policy)?;
    if h[3].modulus() == 0.0 {
        return Err(Error::InvalidInput("chart point lies on the triangle at infinity".into()));
    }
    Ok(SurfacePoint::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]))
}

/// The involutions as maps of `P³`.
pub fn projective_letter<T: Scalar>(l: Letter, params: &SurfaceParams<T>, h: &[T; 4]) -> [T; 4] {
    let [x, y, z, w] = *h;
    match l {
        Letter::X => [-x * w - y * z + params.a * w * w, y * w, z * w, w * w],
        Letter::Y => [x * w, -y * w - z * x + params.b * w * w, z * w, w * w],
        Letter::Z => [x * w, y * w, -z * w - x * y + params.c * w * w, w * w],
    }
}

fn read_chart<T: Scalar>(h: &[T; 4]) -> ChartCoords<T> {
    let (mx, my, mz) = (h[0].modulus(), h[1].modulus(), h[2].modulus());
    if mz >= mx && mz >= my {
        ChartCoords { chart: ChartId::P3, u: h[0] / h[2], v: h[1] / h[2] }
    } else if mx >= my {
        ChartCoords { chart: ChartId::P1, u: h[1] / h[0], v: h[2] / h[0] }
    } else {
        ChartCoords { chart: ChartId::P2, u: h[2] / h[1], v: h[0] / h[1] }
    }
}

pub fn chart_transition<T: Scalar>(
    l: Letter,
    params: &SurfaceParams<T>,
    c: &ChartCoords<T>,
    policy: &NumericPolicy,
) -> Result<ChartCoords<T>> {
    if ChartId::indeterminacy(l) == c.chart {
        return Err(Error::Indeterminacy { letter: l.as_char(), chart: c.chart.name() });
    }
    let h = lift(c, params, policy)?;
    let image = read_chart(&projective_letter(l, params, &h));
    let m = image.u.modulus().max(image.v.modulus());
    if !(m <= policy.chart_region) {
        return Err(Error::NotNearInfinity { max_modulus: 1.0 / m });
    }
    Ok(image)
}

/// Generator of the monomial semigroup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MonLetter {
    A,
    B,
}

impl MonLetter {
    pub fn matrix(self) -> MonMatrix {
        match self {
            MonLetter::A => MonMatrix::A,
            MonLetter::B => MonMatrix::B,
        }
    }
    pub fn as_char(self) -> char {
        match self {
            MonLetter::A => 'A',
            MonLetter::B => 'B',
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonMatrix(pub [[u64; 2]; 2]);

impl MonMatrix {
    pub const IDENTITY: MonMatrix = MonMatrix([[1, 0], [0, 1]]);
    pub const A: MonMatrix = MonMatrix([[0, 1], [1, 1]]);
    pub const B: MonMatrix = MonMatrix([[1, 1], [1, 0]]);

    pub fn mul(&self, rhs: &MonMatrix) -> MonMatrix {
        let (a, b) = (&self.0, &rhs.0);
        MonMatrix(std::array::from_fn(|i| std::array::from_fn(|j| a[i][0] * b[0][j] + a[i][1] * b[1][j])))
    }

    pub fn apply(&self, lc: &LogCoords) -> LogCoords {
        let m = &self.0;
        LogCoords {
            alpha: m[0][0] as f64 * lc.alpha + m[0][1] as f64 * lc.beta,
            beta: m[1][0] as f64 * lc.alpha + m[1][1] as f64 * lc.beta,
        }
    }

    /// Monomial action `(u, v)^M = (u^{m00} v^{m01}, u^{m10} v^{m11})`.
    pub fn monomial<T: Scalar>(&self, u: T, v: T) -> (T, T) {
        let pow = |x: T, k: u64| (0..k).fold(T::one(), |acc, _| acc * x);
        let m = &self.0;
        (pow(u, m[0][0]) * pow(v, m[0][1]), pow(u, m[1][0]) * pow(v, m[1][1]))
    }
}

/// A word in `A, B` written as a matrix product: the rightmost letter acts first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct MonWord(pub Vec<MonLetter>);

impl MonWord {
    pub fn matrix(&self) -> MonMatrix {
        self.0.iter().fold(MonMatrix::IDENTITY, |acc, l| acc.mul(&l.matrix()))
    }
    /// Letters in the order they act.
    pub fn action_order(&self) -> impl Iterator<Item = MonLetter> + '_ {
        self.0.iter().rev().copied()
    }
}

impl fmt::Display for MonWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|l| write!(f, "{}", l.as_char()))
    }
}

impl FromStr for MonWord {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                'A' | 'a' => Ok(MonLetter::A),
                'B' | 'b' => Ok(MonLetter::B),
                _ => Err(Error::InvalidInput(format!("bad semigroup letter {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(MonWord)
    }
}

pub fn monomial_shadow(l: Letter, source: ChartId) -> Result<(MonMatrix, ChartId)> {
    use ChartId::*;
    let m = match (l, source) {
        (Letter::X, P2) | (Letter::Y, P3) | (Letter::Z, P1) => MonMatrix::A,
        (Letter::X, P3) | (Letter::Y, P1) | (Letter::Z, P2) => MonMatrix::B,
        _ => return Err(Error::Indeterminacy { letter: l.as_char(), chart: source.name() }),
    };
    Ok((m, ChartId::indeterminacy(l)))
}

pub fn semigroup_apply(word: &MonWord, lc: &LogCoords) -> LogCoords {
    word.action_order().fold(*lc, |acc, l| l.matrix().apply(&acc))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { lo: 0.0, hi: 5.0, step: 0.25 }
    }
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LemmaWitness {
    pub check: String,
    pub word: String,
    pub alpha: f64,
    pub beta: f64,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub max_len: usize,
    pub grid_points: usize,
    pub words: usize,
    pub single_step_checks: u64,
    pub single_step_violations: u64,
    pub trichotomy_checks: u64,
    pub trichotomy_violations: u64,
    pub min_growth_checks: u64,
    pub min_growth_violations: u64,
    pub perturbed_trials: u64,
    pub perturbed_violations: u64,
    /// Smallest `‖w_n(p)‖₁ − ‖p‖₁ − nR/2` seen in the perturbed trials.
    pub worst_perturbed_slack: f64,
    pub c: f64,
    pub r: f64,
    pub witnesses: Vec<LemmaWitness>,
    /// Per word of maximal length: the worst perturbed slack.
    #[serde(skip)]
    pub word_slacks: Vec<(String, f64)>,
}

impl GrowthReport {
    pub fn violations(&self) -> u64 {
        self.single_step_violations + self.trichotomy_violations + self.min_growth_violations + self.perturbed_violations
    }

    fn merge(mut self, other: GrowthReport) -> GrowthReport {
        self.single_step_checks += other.single_step_checks;
        self.single_step_violations += other.single_step_violations;
        self.trichotomy_checks += other.trichotomy_checks;
        self.trichotomy_violations += other.trichotomy_violations;
        self.min_growth_checks += other.min_growth_checks;
        self.min_growth_violations += other.min_growth_violations;
        self.perturbed_trials += other.perturbed_trials;
        self.perturbed_violations += other.perturbed_violations;
        self.worst_perturbed_slack = self.worst_perturbed_slack.min(other.worst_perturbed_slack);
        self.witnesses.extend(other.witnesses);
        self.witnesses.truncate(MAX_WITNESSES);
        self.word_slacks.extend(other.word_slacks);
        self
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "word,worst_slack")?;
        for (word, s) in &self.word_slacks {
            writeln!(w, "{word},{s}")?;
        }
        Ok(())
    }
}

const MAX_WITNESSES: usize = 20;

fn empty_report() -> GrowthReport {
    GrowthReport { worst_perturbed_slack: f64::INFINITY, ..Default::default() }
}

fn witness(r: &mut GrowthReport, check: &str, word: &[MonLetter], p: LogCoords, detail: String) {
    if r.witnesses.len() < MAX_WITNESSES {
        r.witnesses.push(LemmaWitness {
            check: check.into(),
            // Stored in product notation, rightmost acting first.
            word: word.iter().rev().map(|l| l.as_char()).collect(),
            alpha: p.alpha,
            beta: p.beta,
            detail,
        });
    }
}

/// Is `letters` (in action order) the alternating pattern along which a
/// boundary start never leaves the boundary?
fn stays_on_boundary(p: LogCoords, letters: &[MonLetter]) -> bool {
    let alternating_from = |first: MonLetter| {
        letters.iter().enumerate().all(|(i, l)| (*l == first) == (i % 2 == 0))
    };
    (p.alpha == 0.0 && p.beta == 0.0)
        || (p.alpha == 0.0 && alternating_from(MonLetter::B))
        || (p.beta == 0.0 && alternating_from(MonLetter::A))
}

fn check_grid_point(p: LogCoords, max_len: usize) -> GrowthReport {
    let mut r = empty_report();
    let mut letters = Vec::with_capacity(max_len);
    // Depth-first over all words, carrying the orbit along the current path.
    fn dfs(
        p0: LogCoords,
        cur: LogCoords,
        prev_constant_min: Option<MonLetter>,
        letters: &mut Vec<MonLetter>,
        max_len: usize,
        r: &mut GrowthReport,
    ) {
        if letters.len() == max_len {
            return;
        }
        for l in [MonLetter::A, MonLetter::B] {
            let next = l.matrix().apply(&cur);
            letters.push(l);
            let tol = 1e-12 * (1.0 + cur.l1());

            r.single_step_checks += 1;
            // Exact gains: β for A, α for B; both are at least min(α, β).
            let gain = next.l1() - cur.l1();
            let exact = match l {
                MonLetter::A => cur.beta,
                MonLetter::B => cur.alpha,
            };
            if (gain - exact).abs() > tol || gain < cur.min() - tol || next.alpha < 0.0 || next.beta < 0.0 {
                r.single_step_violations += 1;
                witness(r, "single_step", letters, p0, format!("gain {gain} vs min {}", cur.min()));
            }

            r.trichotomy_checks += 1;
            let bounded = (next.l1() - p0.l1()).abs() <= tol;
            if bounded != stays_on_boundary(p0, letters) {
                r.trichotomy_violations += 1;
                witness(r, "trichotomy", letters, p0, format!("norm {} from {}", next.l1(), p0.l1()));
            }

            let mut constant = None;
            if p0.alpha > 0.0 && p0.beta > 0.0 {
                r.min_growth_checks += 1;
                let (m0, m1) = (cur.min(), next.min());
                let same = (m1 - m0).abs() <= tol;
                if m1 < m0 - tol || (same && prev_constant_min == Some(l)) {
                    r.min_growth_violations += 1;
                    witness(r, "min_growth", letters, p0, format!("min {m0} -> {m1}"));
                }
                constant = same.then_some(l);
            }
            dfs(p0, next, constant, letters, max_len, r);
            letters.pop();
        }
    }
    dfs(p, p, None, &mut letters, max_len, &mut r);
    r
}

/// Brute-force check of the growth lemmas for the `A, B` semigroup.
///
/// Every word of length at most `max_len` is run from every grid point;
/// then every word of length `max_len` is run `trials` times from random
/// points with `α, β ≥ r` under adversarial perturbations of size
/// `c · exp(−2‖·‖₁)`, requiring `‖w_n(p)‖₁ ≥ ‖p‖₁ + n r / 2`.
pub fn verify_growth_lemmas(max_len: usize, grid: &GridSpec, c: f64, r: f64, trials: usize, seed: u64) -> Result<GrowthReport> {
    if max_len > 20 {
        return Err(Error::InvalidInput(format!("max_len {max_len} exceeds 20")));
    }
    if !(r >= 2.0 * c * (-2.0 * r).exp()) || c < 0.0 {
        return Err(Error::InvalidInput(format!("R = {r} does not satisfy R >= 2C exp(-2R) for C = {c}")));
    }
    let values = grid.values();
    let points: Vec<LogCoords> = values.iter().flat_map(|&a| values.iter().map(move |&b| LogCoords::new(a, b))).collect();
    let exhaustive = points
        .par_iter()
        .map(|&p| check_grid_point(p, max_len))
        .reduce(empty_report, GrowthReport::merge);

    let words = 1usize << max_len;
    let perturbed = (0..words)
        .into_par_iter()
        .map(|code| {
            let letters: Vec<MonLetter> =
                (0..max_len).map(|i| if code >> i & 1 == 0 { MonLetter::A } else { MonLetter::B }).collect();
            let mut rep = empty_report();
            let mut rng = stream_rng(seed, code as u64);
            let mut worst = f64::INFINITY;
            for _ in 0..trials {
                let pick = |rng: &mut _| r + values[((uniform(rng) * values.len() as f64) as usize).min(values.len() - 1)];
                let p0 = LogCoords::new(pick(&mut rng), pick(&mut rng));
                let mut cur = p0;
                rep.perturbed_trials += 1;
                let mut failed = false;
                for (n, l) in letters.iter().enumerate() {
                    let base = l.matrix().apply(&cur);
                    // Push both coordinates down, splitting the budget at random.
                    let size = c * (-2.0 * cur.l1()).exp() * (0.9 + 0.1 * uniform(&mut rng));
                    let t = uniform(&mut rng);
                    cur = LogCoords::new(base.alpha - size * t, base.beta - size * (1.0 - t));
                    let slack = cur.l1() - p0.l1() - (n + 1) as f64 * r / 2.0;
                    worst = worst.min(slack);
                    if slack < 0.0 && !failed {
                        failed = true;
                        rep.perturbed_violations += 1;
                        witness(&mut rep, "perturbed", &letters[..=n], p0, format!("slack {slack}"));
                    }
                }
            }
            rep.worst_perturbed_slack = worst;
            rep.word_slacks.push((letters.iter().rev().map(|l| l.as_char()).collect(), worst));
            rep
        })
        .reduce(empty_report, GrowthReport::merge);

    let mut report = exhaustive.merge(perturbed);
    report.max_len = max_len;
    report.grid_points = points.len();
    report.words = (1usize << (max_len + 1)) - 2;
    report.c = c;
    report.r = r;
    report.word_slacks.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(report)
}

/// Constants of the monomial approximation for one surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowCalibration {
    pub samples: usize,
    /// Lower edge of the sampled band, `−log(chart_region)`.
    pub r0: f64,
    pub band: f64,
    /// Sup of shadow error × `exp(2 min(α, β))`.
    pub c_cal: f64,
    /// Sup of shadow error × `exp(2 ‖(α, β)‖₁)`.
    pub c_l1: f64,
    /// Smallest `R >= r0` with `R >= 2 c_cal exp(−2R)`.
    pub r_cal: f64,
    /// Sampled points whose destination chart disagreed with the table.
    pub table_mismatches: usize,
    /// Sampled points whose image left every chart neighbourhood.
    pub out_of_region: usize,
}

/// Smallest `R >= floor` with `R >= 2C exp(−2R)`, by bisection.
pub fn threshold_radius(c: f64, floor: f64) -> f64 {
    let f = |r: f64| r - 2.0 * c * (-2.0 * r).exp();
    if f(floor) >= 0.0 {
        return floor;
    }
    let (mut lo, mut hi) = (floor, floor.max(1.0));
    while f(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Samples chart points with `α, β` in `[r0, r0 + band]`, pushes each
/// through an admissible letter and compares with the monomial shadow.
pub fn calibrate_shadow(params: &SurfaceParams, samples: usize, seed: u64, policy: &NumericPolicy) -> Result<ShadowCalibration> {
    let r0 = -policy.chart_region.ln();
    let band = policy.shadow_band;
    let mut rng = stream_rng(seed, 0x5ad0);
    let (mut c_cal, mut c_l1) = (0.0f64, 0.0f64);
    let (mut mismatches, mut out_of_region) = (0, 0);
    for _ in 0..samples {
        let chart = [ChartId::P1, ChartId::P2, ChartId::P3][((3.0 * uniform(&mut rng)) as usize).min(2)];
        let allowed: Vec<Letter> = Letter::ALL.into_iter().filter(|&l| ChartId::indeterminacy(l) != chart).collect();
        let l = allowed[(uniform(&mut rng) < 0.5) as usize];
        let alpha = r0 + band * uniform(&mut rng);
        let beta = r0 + band * uniform(&mut rng);
        let su = if uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 };
        let sv = if uniform(&mut rng) < 0.5 { -1.0 } else { 1.0 };
        let c = ChartCoords { chart, u: su * (-alpha).exp(), v: sv * (-beta).exp() };
        let image = match chart_transition(l, params, &c, policy) {
            Ok(image) => image,
            Err(Error::NotNearInfinity { .. }) => {
                out_of_region += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let (m, dest) = monomial_shadow(l, chart)?;
        if dest != image.chart {
            mismatches += 1;
            continue;
        }
        let lc = c.log_coords();
        let err = image.log_coords().dist_l1(&m.apply(&lc));
        c_cal = c_cal.max(err * (2.0 * lc.min()).exp());
        c_l1 = c_l1.max(err * (2.0 * lc.l1()).exp());
    }
    Ok(ShadowCalibration {
        samples,
        r0,
        band,
        c_cal,
        c_l1,
        r_cal: threshold_radius(c_cal, r0),
        table_mismatches: mismatches,
        out_of_region,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// The letter moves to a new vertex; the shadow applies.
    Push,
    /// The letter's indeterminacy vertex is the current chart: it undoes
    /// the previous push.
    Pop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateStep {
    pub step: usize,
    pub letter: Letter,
    pub kind: StepKind,
    pub chart_from: ChartId,
    pub chart_to: ChartId,
    pub from: LogCoords,
    pub to: LogCoords,
    /// Push: shadow error and its bound. Pop: relative distance to the stacked point.
    pub error: f64,
    pub bound: f64,
    /// Push only: `‖to‖₁ − ‖from‖₁ − R/2`.
    pub growth_slack: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscapeCertificate {
    pub seed: u64,
    pub entry_step: usize,
    pub last_step: usize,
    pub r_cal: f64,
    pub c_cal: f64,
    pub push_steps: usize,
    pub pop_steps: usize,
    /// Smallest per-push growth of `‖(α, β)‖₁`.
    pub min_growth: f64,
    pub itinerary: Vec<ChartId>,
    pub steps: Vec<CertificateStep>,
}

/// Certifies an escaped trajectory by replaying it from its seed.
pub fn certify_escape(traj: &TrajectoryRecord, calib: &ShadowCalibration, policy: &NumericPolicy) -> Result<EscapeCertificate> {
    let Some(escape) = traj.escape_step else {
        return Err(Error::InvalidInput("trajectory did not escape; nothing to certify".into()));
    };
    let mut stream = LetterStream::new(traj.mu, traj.seed);
    let mut points = vec![traj.start];
    let mut letters = Vec::with_capacity(escape);
    for _ in 0..escape {
        let l = stream.next_letter();
        let p = *points.last().expect("non-empty");
        points.push(apply_letter(l, &traj.params, &p));
        letters.push(l);
    }
    let mut cert = certify_itinerary(&points, &letters, calib, policy)?;
    cert.seed = traj.seed;
    Ok(cert)
}

/// Certifies the path `points[k+1] = letters[k](points[k])`.
///
/// The entry step is the first point with `min(α, β) >= R_cal` from which the
/// reduced itinerary never backtracks below its starting vertex. Each push
/// must track the shadow within `C_cal exp(−2 min(α, β))` and grow
/// `‖(α, β)‖₁` by at least `R_cal / 2`; each pop must return to the point on
/// top of the stack.
pub fn certify_itinerary(
    points: &[SurfacePoint],
    letters: &[Letter],
    calib: &ShadowCalibration,
    policy: &NumericPolicy,
) -> Result<EscapeCertificate> {
    if points.len() != letters.len() + 1 {
        return Err(Error::InvalidInput("itinerary needs one more point than letters".into()));
    }
    let charts: Vec<Option<ChartCoords>> = points.iter().map(|p| to_chart(p, policy).ok()).collect();
    let in_regime = |k: usize| charts[k].is_some_and(|c| c.log_coords().min() >= calib.r_cal);

    let mut last_failure = CertificateFailureInfo { step: 0, reason: "no point enters the asymptotic regime".into() };
    let mut k0 = 0;
    while k0 < letters.len() {
        if !in_regime(k0) {
            k0 += 1;
            continue;
        }
        match replay(points, letters, &charts, k0, calib, policy) {
            Ok(cert) => return Ok(cert),
            Err(Replay::Emptied(at)) => {
                last_failure = CertificateFailureInfo { step: at, reason: "walk backtracked past the entry point".into() };
                k0 = at + 1;
            }
            Err(Replay::Fatal(step, reason)) => return Err(Error::CertificateFailure { step, reason }),
        }
    }
    Err(Error::CertificateFailure { step: last_failure.step, reason: last_failure.reason })
}

struct CertificateFailureInfo {
    step: usize,
    reason: String,
}

enum Replay {
    Emptied(usize),
    Fatal(usize, String),
}

fn replay(
    points: &[SurfacePoint],
    letters: &[Letter],
    charts: &[Option<ChartCoords>],
    k0: usize,
    calib: &ShadowCalibration,
    policy: &NumericPolicy,
) -> std::result::Result<EscapeCertificate, Replay> {
    let mut stack: Vec<usize> = vec![k0];
    let mut steps = Vec::new();
    let mut min_growth = f64::INFINITY;
    let (mut pushes, mut pops) = (0, 0);
    for j in k0..letters.len() {
        let l = letters[j];
        let from = charts[j].ok_or_else(|| Replay::Fatal(j, "point left the chart neighbourhoods".into()))?;
        if ChartId::indeterminacy(l) == from.chart {
            stack.pop();
            let Some(&top) = stack.last() else {
                return Err(Replay::Emptied(j));
            };
            let to = charts[top].expect("stacked points have charts");
            let (lf, lt) = (from.log_coords(), to.log_coords());
            let (a, b) = (&points[j + 1], &points[top]);
            let rel = a.dist_max(b) / b.max_modulus().max(1.0);
            if rel > policy.backtrack_rel_tol {
                return Err(Replay::Fatal(j, format!("backtrack missed the stacked point by {rel:e}")));
            }
            pops += 1;
            steps.push(CertificateStep {
                step: j,
                letter: l,
                kind: StepKind::Pop,
                chart_from: from.chart,
                chart_to: to.chart,
                from: lf,
                to: lt,
                error: rel,
                bound: policy.backtrack_rel_tol,
                growth_slack: 0.0,
            });
            continue;
        }
        let to = charts[j + 1].ok_or_else(|| Replay::Fatal(j + 1, "point left the chart neighbourhoods".into()))?;
        let (lf, lt) = (from.log_coords(), to.log_coords());
        let (m, dest) = monomial_shadow(l, from.chart).map_err(|e| Replay::Fatal(j, e.to_string()))?;
        if dest != to.chart {
            return Err(Replay::Fatal(j, format!("landed in {} instead of {dest}", to.chart)));
        }
        let error = lt.dist_l1(&m.apply(&lf));
        let bound = calib.c_cal * (-2.0 * lf.min()).exp();
        if error > bound {
            return Err(Replay::Fatal(j, format!("shadow error {error:e} exceeds {bound:e}")));
        }
        let growth = lt.l1() - lf.l1();
        let slack = growth - calib.r_cal / 2.0;
        if slack < 0.0 {
            return Err(Replay::Fatal(j, format!("growth {growth} below R/2 = {}", calib.r_cal / 2.0)));
        }
        min_growth = min_growth.min(growth);
        pushes += 1;
        stack.push(j + 1);
        steps.push(CertificateStep {
            step: j,
            letter: l,
            kind: StepKind::Push,
            chart_from: from.chart,
            chart_to: to.chart,
            from: lf,
            to: lt,
            error,
            bound,
            growth_slack: slack,
        });
    }
    if pushes == 0 {
        return Err(Replay::Fatal(k0, "no push step after the entry point".into()));
    }
    Ok(EscapeCertificate {
        seed: 0,
        entry_step: k0,
        last_step: letters.len(),
        r_cal: calib.r_cal,
        c_cal: calib.c_cal,
        push_steps: pushes,
        pop_steps: pops,
        min_growth,
        itinerary: stack.iter().filter_map(|&k| charts[k].map(|c| c.chart)).collect(),
        steps,
    })
}

/// Phase-randomised complex chart point with prescribed log coordinates.
pub fn complex_chart_point(chart: ChartId, lc: LogCoords, phase_u: f64, phase_v: f64) -> ChartCoords<num::complex::Complex64> {
    use num::complex::Complex64;
    ChartCoords {
        chart,
        u: Complex64::from_polar((-lc.alpha).exp(), 2.0 * PI * phase_u),
        v: Complex64::from_polar((-lc.beta).exp(), 2.0 * PI * phase_v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{residual, solve_fiber_z};
    use crate::walk::{run_trajectory, StepDistribution};

    fn bk() -> SurfaceParams {
        SurfaceParams::new(1.0, 1.0, 1.0, 0.0)
    }

    #[test]
    fn to_chart_examples() {
        let p = NumericPolicy::default();
        let c = to_chart(&SurfacePoint::new(5.0, 5.0, -22.2), &p).unwrap();
        assert_eq!(c.chart, ChartId::P3);
        assert!((c.u - 5.0 / -22.2).abs() < 1e-15 && (c.v - 5.0 / -22.2).abs() < 1e-15);
        let c = to_chart(&SurfacePoint::new(1e6, 1.0, 1.0), &p).unwrap();
        assert_eq!((c.chart, c.u, c.v), (ChartId::P1, 1e-6, 1e-6));
        assert!(matches!(to_chart(&SurfacePoint::new(1.0, 1.0, 1.0), &p), Err(Error::NotNearInfinity { .. })));
    }

    #[test]
    fn graph_height_examples() {
        let p = NumericPolicy::default();
        for chart in [ChartId::P1, ChartId::P2, ChartId::P3] {
            assert_eq!(graph_height(chart, &bk(), 0.0, 0.2, &p).unwrap(), 0.0);
        }
        let zero = SurfaceParams::new(0.0, 0.0, 0.0, 0.0);
        let w = graph_height(ChartId::P3, &zero, 0.1, 0.1, &p).unwrap();
        // (1.02) w + 0.01 = 0 exactly.
        assert!((w + 0.01 / 1.02).abs() < 1e-16);
        assert!((w - phi3_taylor(&zero, &0.1, &0.1)).abs() < 1e-6);
        assert!((phi3_taylor(&zero, &0.1, &0.1) + 0.01 * 0.9804).abs() < 1e-15);
    }

    #[test]
    fn graph_point_is_on_surface() {
        let p = NumericPolicy::default();
        for chart in [ChartId::P1, ChartId::P2, ChartId::P3] {
            let c = ChartCoords { chart, u: 0.05, v: -0.03 };
            let q = from_chart(&c, &bk(), &p).unwrap();
            assert!(residual(&bk(), &q).abs() / q.max_modulus().powi(3) < 1e-14);
            let back = to_chart(&q, &p).unwrap();
            assert_eq!(back.chart, chart);
            assert!((back.u - c.u).abs() < 1e-15 && (back.v - c.v).abs() < 1e-15);
        }
    }

    #[test]
    fn taylor_remainder_order() {
        // Slope of log|φ − T| against log r should be at least 5.7 (order r⁶).
        let params = bk();
        let policy = NumericPolicy::default();
        let err = |r: f64| {
            let (u, v) = (r * 0.6, r * 0.8);
            let w = graph_height(ChartId::P3, &params, u, v, &policy).unwrap();
            (w - phi3_taylor(&params, &u, &v)).abs()
        };
        let slope = (err(1e-2).ln() - err(1e-3).ln()) / (10f64).ln();
        assert!(slope >= 5.7, "slope {slope}");
    }

    #[test]
    fn taylor_coefficient_extraction() {
        // The even-even part of φ/(−uv) is 1 − u² − v² + u⁴ + v⁴ + K u²v²; a
        // mixed difference on the points {h, 2h}² isolates K.
        let mut rng = stream_rng(1, 0);
        for _ in 0..20 {
            let mut r = || -2.0 + 4.0 * uniform(&mut rng);
            let params = SurfaceParams::new(r(), r(), r(), r());
            let g = |u: f64, v: f64| phi3_taylor(&params, &u, &v) / (-u * v);
            let even = |u: f64, v: f64| (g(u, v) + g(-u, v) + g(u, -v) + g(-u, -v)) / 4.0;
            let h = 0.5;
            let k = (even(h, h) - even(h, 2.0 * h) - even(2.0 * h, h) + even(2.0 * h, 2.0 * h)) / (9.0 * h.powi(4));
            let want = 2.0 - params.d + 2.0 * params.c * params.c;
            assert!((k - want).abs() < 1e-8, "{k} vs {want}");
        }
    }

    #[test]
    fn transition_examples() {
        let p = NumericPolicy::default();
        let (u, v) = (0.01, 0.02);
        let img = chart_transition(Letter::X, &bk(), &ChartCoords { chart: ChartId::P3, u, v }, &p).unwrap();
        assert_eq!(img.chart, ChartId::P1);
        assert!((img.u / (u * v) - 1.0).abs() < 1e-3 && (img.v / u - 1.0).abs() < 1e-3);
        let img = chart_transition(Letter::X, &bk(), &ChartCoords { chart: ChartId::P2, u, v }, &p).unwrap();
        assert_eq!(img.chart, ChartId::P1);
        assert!((img.u / v - 1.0).abs() < 1e-3 && (img.v / (u * v) - 1.0).abs() < 1e-3);
        let r = chart_transition(Letter::X, &bk(), &ChartCoords { chart: ChartId::P1, u, v }, &p);
        assert!(matches!(r, Err(Error::Indeterminacy { letter: 'x', chart: "P1" })));
    }

    #[test]
    fn shadow_table_matches_transitions() {
        let p = NumericPolicy::default();
        assert_eq!(monomial_shadow(Letter::X, ChartId::P2).unwrap(), (MonMatrix::A, ChartId::P1));
        assert_eq!(monomial_shadow(Letter::X, ChartId::P3).unwrap(), (MonMatrix::B, ChartId::P1));
        assert_eq!(monomial_shadow(Letter::Z, ChartId::P1).unwrap(), (MonMatrix::A, ChartId::P3));
        assert!(monomial_shadow(Letter::Y, ChartId::P2).is_err());
        for chart in [ChartId::P1, ChartId::P2, ChartId::P3] {
            for l in Letter::ALL {
                let Ok((m, dest)) = monomial_shadow(l, chart) else { continue };
                let c = ChartCoords { chart, u: 1e-3, v: 2e-3 };
                let img = chart_transition(l, &bk(), &c, &p).unwrap();
                assert_eq!(img.chart, dest);
                let err = img.log_coords().dist_l1(&m.apply(&c.log_coords()));
                assert!(err < 10.0 * (c.u * c.u + c.v * c.v), "{l} {chart}: {err}");
            }
        }
    }

    #[test]
    fn complex_transition_tracks_monomial_map() {
        let p = NumericPolicy::default();
        let params = bk().to_complex();
        let c = complex_chart_point(ChartId::P3, LogCoords::new(4.0, 5.0), 0.3, 0.7);
        let img = chart_transition(Letter::X, &params, &c, &p).unwrap();
        let (mu, mv) = MonMatrix::B.monomial(c.u, c.v);
        assert!((img.u / mu - 1.0).norm() < 1e-3 && (img.v / mv - 1.0).norm() < 1e-3);
    }

    #[test]
    fn transition_inverts_through_affine_involution() {
        let p = NumericPolicy::default();
        let params = bk();
        for (u, v) in [(0.01, 0.02), (-0.05, 0.003), (0.2, -0.1)] {
            let c = ChartCoords { chart: ChartId::P3, u, v };
            let img = chart_transition(Letter::X, &params, &c, &p).unwrap();
            let q = from_chart(&img, &params, &p).unwrap();
            // s_x via the product of the two x-roots, which avoids cancellation.
            let x = (q.y * q.y + q.z * q.z - params.b * q.y - params.c * q.z - params.d) / q.x;
            let back = to_chart(&SurfacePoint::new(x, q.y, q.z), &p).unwrap();
            assert_eq!(back.chart, ChartId::P3);
            assert!((back.u - u).abs() <= 1e-9 * u.abs() && (back.v - v).abs() <= 1e-9 * v.abs());
        }
    }

    #[test]
    fn semigroup_examples() {
        let w = |s: &str| s.parse::<MonWord>().unwrap();
        assert_eq!(semigroup_apply(&w("A"), &LogCoords::new(1.0, 1.0)), LogCoords::new(1.0, 2.0));
        assert_eq!(semigroup_apply(&w("B"), &LogCoords::new(0.0, 1.0)), LogCoords::new(1.0, 0.0));
        // B first, then alternating: the boundary start stays on the boundary.
        let out = semigroup_apply(&w("ABABAB"), &LogCoords::new(0.0, 3.0));
        assert_eq!(out.l1(), 3.0);
        assert_eq!(w("AB").matrix(), MonMatrix::A.mul(&MonMatrix::B));
    }

    #[test]
    fn growth_lemmas_small() {
        let rep = verify_growth_lemmas(6, &GridSpec::default(), 1.0, 1.0, 50, 1).unwrap();
        assert_eq!(rep.violations(), 0, "{:?}", rep.witnesses);
        assert!(rep.worst_perturbed_slack >= 0.0);
        assert!(verify_growth_lemmas(4, &GridSpec::default(), 1.0, 0.1, 10, 1).is_err());
        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 64);
    }

    #[test]
    fn calibration_and_certificate() {
        let policy = NumericPolicy::default();
        let cal = calibrate_shadow(&bk(), 500, 1, &policy).unwrap();
        assert_eq!(cal.table_mismatches, 0);
        assert!(cal.c_cal.is_finite() && cal.c_cal > 0.0);
        assert!(cal.r_cal >= cal.r0);
        let z = solve_fiber_z(&bk(), 5.0, 5.0)[0];
        let q = SurfacePoint::new(5.0, 5.0, z);
        let mut certified = 0;
        for seed in 0..20 {
            let t = run_trajectory(&bk(), &q, &StepDistribution::uniform(), 200, seed, 1, &policy).unwrap();
            if let Ok(cert) = certify_escape(&t, &cal, &policy) {
                assert!(cert.min_growth >= cal.r_cal / 2.0);
                certified += 1;
            }
        }
        assert!(certified >= 18, "{certified}");
        let bounded = run_trajectory(&bk(), &SurfacePoint::new(0.0, 0.0, 0.0), &StepDistribution::uniform(), 50, 0, 1, &policy).unwrap();
        assert!(matches!(certify_escape(&bounded, &cal, &policy), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn backtracking_itinerary_is_recorded_as_pops() {
        let policy = NumericPolicy::default();
        let params = bk();
        let cal = calibrate_shadow(&params, 200, 2, &policy).unwrap();
        let z = solve_fiber_z(&params, 5.0, 5.0)[0];
        let mut points = vec![SurfacePoint::new(5.0, 5.0, z)];
        let letters = [Letter::X, Letter::Y, Letter::Y, Letter::Z, Letter::X];
        for l in letters {
            let p = *points.last().unwrap();
            points.push(apply_letter(l, &params, &p));
        }
        let cert = certify_itinerary(&points, &letters, &cal, &policy).unwrap();
        assert_eq!(cert.steps[2].kind, StepKind::Pop);
        assert_eq!(cert.pop_steps, 1);
        assert_eq!(cert.push_steps, 4);
    }
}
