//! Sampling the normalised area measure on the compact real component.
//!
//! The default sampler disintegrates the area along the slices `x = x0`.
//! For `|x0| < 2` a slice is an ellipse in `(y, z)`, the Hamiltonian flow of
//! `x` runs around it at constant speed in Cholesky coordinates, and its
//! period `π / sqrt(1 − x0²/4)` does not depend on the ellipse size. So
//! `x = 2 cos φ` with `φ` uniform, an ellipse angle uniform, and rejection of
//! empty slices and slices leaving the box give exact i.i.d. draws.
//!
//! [`SamplerKind::ChartRejection`] is the three-chart rejection sampler with
//! a grid-calibrated envelope. It needs a positive lower bound on `|∇F|`
//! and therefore fails on nodal surfaces.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{gradient, in_box, residual, solve_fiber_z, SurfaceParams, SurfacePoint};
use crate::policy::NumericPolicy;
use crate::stats::{jackknife_se, stream_rng, uniform};

/// Work is split into this many seeded streams, so results depend on the
/// seed only and not on the size of the thread pool.
pub const CHUNKS: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    #[default]
    Slice,
    ChartRejection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub value: f64,
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SymplecticSample {
    pub params: SurfaceParams,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub points: Vec<SurfacePoint>,
    pub proposals: u64,
    pub accepted: u64,
    pub total_area: AreaEstimate,
    pub warnings: Vec<String>,
}

impl SymplecticSample {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }

    /// JSON-lines export: a header object, then one point per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = json!({
            "params": self.params,
            "seed": self.seed,
            "n": self.points.len(),
            "sampler": self.sampler,
            "acceptance_rate": self.acceptance_rate(),
            "total_area": self.total_area.value,
            "total_area_se": self.total_area.se,
        });
        writeln!(w, "{header}")?;
        for p in &self.points {
            writeln!(w, "{}", serde_json::to_string(p)?)?;
        }
        Ok(())
    }
}

/// `(x, y, z, x², y², z², xy, yz, zx)`.
pub fn monomials(p: &SurfacePoint) -> [f64; 9] {
    [p.x, p.y, p.z, p.x * p.x, p.y * p.y, p.z * p.z, p.x * p.y, p.y * p.z, p.z * p.x]
}

pub const MOMENT_NAMES: [&str; 9] = ["x", "y", "z", "xx", "yy", "zz", "xy", "yz", "zx"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub values: [f64; 9],
    pub se: [f64; 9],
}

impl Moments {
    /// Largest `|a − b| / sqrt(se_a² + se_b²)` over the nine entries.
    pub fn max_z_score(&self, other: &Moments) -> f64 {
        (0..9)
            .map(|i| {
                let s = self.se[i].hypot(other.se[i]);
                let d = (self.values[i] - other.values[i]).abs();
                if s > 0.0 {
                    d / s
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Means of the monomials with delete-block jackknife errors.
pub fn moments_of(points: &[SurfacePoint], blocks: usize) -> Result<Moments> {
    if points.is_empty() {
        return Err(Error::InvalidInput("moments of an empty sample".into()));
    }
    let mut values = [0.0; 9];
    let mut se = [0.0; 9];
    for k in 0..9 {
        let col: Vec<f64> = points.iter().map(|p| monomials(p)[k]).collect();
        values[k] = col.iter().sum::<f64>() / col.len() as f64;
        se[k] = jackknife_se(&col, blocks);
    }
    Ok(Moments { values, se })
}

pub fn symplectic_moments(sample: &SymplecticSample) -> Result<Moments> {
    moments_of(&sample.points, 100)
}

/// Index of the chart evaluating the area form at `p`: 0 for `z`, 1 for `x`,
/// 2 for `y`, by largest gradient component with ties to the earlier chart.
pub fn chart_index(params: &SurfaceParams, p: &SurfacePoint) -> usize {
    let g = gradient(params, p);
    let mags = [g[2].abs(), g[0].abs(), g[1].abs()];
    let mut best = 0;
    for i in 1..3 {
        if mags[i] > mags[best] {
            best = i;
        }
    }
    best
}

pub fn sample_symplectic(params: &SurfaceParams, n: usize, seed: u64, policy: &NumericPolicy) -> Result<SymplecticSample> {
    sample_symplectic_with(params, n, seed, SamplerKind::Slice, policy)
}

pub fn sample_symplectic_with(
    params: &SurfaceParams,
    n: usize,
    seed: u64,
    kind: SamplerKind,
    policy: &NumericPolicy,
) -> Result<SymplecticSample> {
    if !params.is_finite() {
        return Err(Error::InvalidInput("non-finite surface parameters".into()));
    }
    match kind {
        SamplerKind::Slice => run_chunks(params, n, seed, kind, policy, |rng| slice_proposal(params, policy, rng)),
        SamplerKind::ChartRejection => {
            let delta = envelope_bound(params, policy)?;
            run_chunks(params, n, seed, kind, policy, |rng| chart_proposal(params, policy, delta, rng))
        }
    }
}

/// Monte Carlo area of the compact component with its standard error.
pub fn total_area(params: &SurfaceParams, n: usize, seed: u64, policy: &NumericPolicy) -> Result<AreaEstimate> {
    sample_symplectic(params, n, seed, policy).map(|s| s.total_area)
}

/// Outcome of a single proposal.
struct Proposal {
    point: Option<SurfacePoint>,
    /// Unbiased single-proposal estimate of the total area.
    area_weight: f64,
}

struct ChunkResult {
    points: Vec<SurfacePoint>,
    proposals: u64,
    sum_w: f64,
    sum_w2: f64,
}

fn run_chunks<F>(
    params: &SurfaceParams,
    n: usize,
    seed: u64,
    kind: SamplerKind,
    policy: &NumericPolicy,
    propose: F,
) -> Result<SymplecticSample>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> Result<Proposal> + Sync,
{
    let chunks: Vec<ChunkResult> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let target = n * (c + 1) / CHUNKS - n * c / CHUNKS;
            let mut rng = stream_rng(seed, c as u64);
            let mut out = ChunkResult { points: Vec::with_capacity(target), proposals: 0, sum_w: 0.0, sum_w2: 0.0 };
            // Every chunk makes at least this many proposals so the area
            // estimate is usable even for tiny n.
            let min_proposals = 256u64;
            let cap = 10_000 + 10_000 * target as u64;
            while out.points.len() < target || out.proposals < min_proposals {
                if out.proposals >= cap {
                    break;
                }
                let prop = propose(&mut rng)?;
                out.proposals += 1;
                out.sum_w += prop.area_weight;
                out.sum_w2 += prop.area_weight * prop.area_weight;
                if let Some(p) = prop.point {
                    if out.points.len() < target {
                        out.points.push(p);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let proposals: u64 = chunks.iter().map(|c| c.proposals).sum();
    let sum_w: f64 = chunks.iter().map(|c| c.sum_w).sum();
    let sum_w2: f64 = chunks.iter().map(|c| c.sum_w2).sum();
    let points: Vec<SurfacePoint> = chunks.into_iter().flat_map(|c| c.points).collect();
    let m = proposals as f64;
    let value = sum_w / m;
    let se = ((sum_w2 / m - value * value).max(0.0) / (m - 1.0).max(1.0)).sqrt();

    if value < policy.singleton_area {
        return Err(Error::NoCompactComponent(format!(
            "area estimate {value:e} below {:e} after {proposals} proposals: the compact component is empty or a single point",
            policy.singleton_area
        )));
    }
    if points.len() < n {
        return Err(Error::NoCompactComponent(format!(
            "only {} of {n} points accepted after {proposals} proposals",
            points.len()
        )));
    }
    for p in &points {
        if residual(params, p).abs() > policy.on_surface_tol || !in_box(p, policy.box_tol) {
            return Err(Error::InvalidInput(format!("sampler produced an invalid point {p:?}")));
        }
    }
    let mut warnings = Vec::new();
    if value < 100.0 * policy.singleton_area {
        warnings.push(format!("total area {value:e} is close to the singleton threshold"));
    }
    Ok(SymplecticSample {
        params: *params,
        seed,
        sampler: kind,
        accepted: points.len() as u64,
        points,
        proposals,
        total_area: AreaEstimate { value, se },
        warnings,
    })
}

fn slice_proposal(params: &SurfaceParams, policy: &NumericPolicy, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Proposal> {
    let reject = Proposal { point: None, area_weight: 0.0 };
    let x0 = 2.0 * (PI * uniform(rng)).cos();
    let psi = 2.0 * PI * uniform(rng);
    let h = x0 / 2.0;
    let s2 = 1.0 - h * h;
    if s2 <= 0.0 {
        return Ok(reject);
    }
    let (a, b, c, d) = (params.a, params.b, params.c, params.d);
    let k = 4.0 - x0 * x0;
    let (yc, zc) = ((2.0 * b - x0 * c) / k, (2.0 * c - x0 * b) / k);
    let r2 = (b * yc + c * zc) / 2.0 - x0 * x0 + a * x0 + d;
    if r2 <= 0.0 {
        return Ok(reject);
    }
    let r = r2.sqrt();
    let ext = r / s2.sqrt();
    let lim = 2.0 + policy.box_tol;
    if yc.abs() + ext > lim || zc.abs() + ext > lim {
        return Ok(reject);
    }
    let zz = r * psi.sin() / s2.sqrt();
    let yy = r * psi.cos() - h * zz;
    let p = SurfacePoint::new(x0, yc + yy, zc + zz);
    Ok(Proposal { point: Some(p), area_weight: 2.0 * PI * PI })
}

/// Grid prepass: `envelope_safety` times the smallest maximal gradient
/// component over box points of the surface, chart by chart.
pub fn envelope_bound(params: &SurfaceParams, policy: &NumericPolicy) -> Result<f64> {
    let m = policy.envelope_grid.max(2);
    let mut best = f64::INFINITY;
    let mut found = false;
    for chart in 0..3 {
        for i in 0..m {
            for j in 0..m {
                let u = -2.0 + 4.0 * (i as f64 + 0.5) / m as f64;
                let v = -2.0 + 4.0 * (j as f64 + 0.5) / m as f64;
                for p in chart_roots(params, chart, u, v) {
                    if !in_box(&p, policy.box_tol) || chart_index(params, &p) != chart {
                        continue;
                    }
                    found = true;
                    let g = gradient(params, &p);
                    best = best.min(g[[2, 0, 1][chart]].abs());
                }
            }
        }
    }
    if !found {
        return Err(Error::NoCompactComponent("grid prepass found no surface points in the box".into()));
    }
    Ok(policy.envelope_safety * best)
}

/// Points over `(u, v)` in the chart's free coordinates: `(x, y)` for the
/// `z` chart, `(y, z)` for `x`, `(z, x)` for `y`.
fn chart_roots(params: &SurfaceParams, chart: usize, u: f64, v: f64) -> Vec<SurfacePoint> {
    // Cyclic relabelling keeps the equation's form.
    let (a, b, c, d) = (params.a, params.b, params.c, params.d);
    match chart {
        0 => solve_fiber_z(params, u, v).into_iter().map(|w| SurfacePoint::new(u, v, w)).collect(),
        1 => solve_fiber_z(&SurfaceParams::new(b, c, a, d), u, v)
            .into_iter()
            .map(|w| SurfacePoint::new(w, u, v))
            .collect(),
        _ => solve_fiber_z(&SurfaceParams::new(c, a, b, d), u, v)
            .into_iter()
            .map(|w| SurfacePoint::new(v, w, u))
            .collect(),
    }
}

fn chart_proposal(
    params: &SurfaceParams,
    policy: &NumericPolicy,
    delta: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Proposal> {
    let reject = Proposal { point: None, area_weight: 0.0 };
    let chart = ((3.0 * uniform(rng)) as usize).min(2);
    let u = -2.0 + 4.0 * uniform(rng);
    let v = -2.0 + 4.0 * uniform(rng);
    let root = (uniform(rng) < 0.5) as usize;
    let accept_u = uniform(rng);
    let roots = chart_roots(params, chart, u, v);
    let Some(p) = roots.get(root).copied() else {
        return Ok(reject);
    };
    if !in_box(&p, policy.box_tol) || chart_index(params, &p) != chart {
        return Ok(reject);
    }
    let g = gradient(params, &p)[[2, 0, 1][chart]].abs();
    if g < delta {
        return Err(Error::EnvelopeViolation { x: p.x, y: p.y, z: p.z, density: 1.0 / g, bound: 1.0 / delta });
    }
    // Proposal density is 1 / (3 · 16 · 2) per unit area in each chart.
    let weight = 96.0 / g;
    let point = (accept_u < delta / g).then_some(p);
    Ok(Proposal { point, area_weight: weight })
}
