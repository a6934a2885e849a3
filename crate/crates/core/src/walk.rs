//! Random walks `f_{n−1} ∘ … ∘ f_0` with i.i.d. letters, their empirical
//! measures, and Lyapunov exponents of the tangent cocycle.

use std::io::Write;

use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{in_box, tangent_frame, SurfaceParams, SurfacePoint};
use crate::linalg::{self, Mat2};
use crate::policy::NumericPolicy;
use crate::stats::{batch_means_se, bootstrap_se};
use crate::symplectic::{monomials, Moments};
use crate::vieta::{apply_letter, restricted_differential, Letter, Word};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDistribution {
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl StepDistribution {
    pub fn new(p_x: f64, p_y: f64, p_z: f64) -> Result<Self> {
        let mu = StepDistribution { p_x, p_y, p_z };
        mu.validate()?;
        Ok(mu)
    }

    pub fn uniform() -> Self {
        StepDistribution { p_x: 1.0 / 3.0, p_y: 1.0 / 3.0, p_z: 1.0 / 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ps = [self.p_x, self.p_y, self.p_z];
        if ps.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidDistribution(format!("probabilities must be positive, got {ps:?}")));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDistribution(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn weight(&self, l: Letter) -> f64 {
        match l {
            Letter::X => self.p_x,
            Letter::Y => self.p_y,
            Letter::Z => self.p_z,
        }
    }

    fn pick(&self, u: f64) -> Letter {
        if u < self.p_x {
            Letter::X
        } else if u < self.p_x + self.p_y {
            Letter::Y
        } else {
            Letter::Z
        }
    }
}

fn to_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based letter stream: letter `i` depends only on `(seed, i)`.
pub struct LetterStream {
    mu: StepDistribution,
    rng: ChaCha8Rng,
}

impl LetterStream {
    pub fn new(mu: StepDistribution, seed: u64) -> Self {
        LetterStream { mu, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Positions the stream so that the next letter is letter `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(2 * index as u128);
    }

    pub fn next_letter(&mut self) -> Letter {
        self.mu.pick(to_unit(self.rng.next_u64()))
    }
}

pub fn letter_at(mu: &StepDistribution, seed: u64, index: u64) -> Letter {
    let mut s = LetterStream::new(*mu, seed);
    s.seek(index);
    s.next_letter()
}

pub fn sample_letters(mu: &StepDistribution, seed: u64, n: usize) -> Result<Word> {
    mu.validate()?;
    let mut s = LetterStream::new(*mu, seed);
    Ok(Word((0..n).map(|_| s.next_letter()).collect()))
}

/// Radii of the balls whose occupation fractions are reported.
pub const BALL_RADII: [f64; 3] = [4.0, 16.0, 256.0];

/// Running sums over visited points, split into contiguous batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitAccumulator {
    pub visits: usize,
    pub batch_len: usize,
    /// Per-batch sums of the nine monomials and the visit count.
    pub batches: Vec<([f64; 9], usize)>,
    pub in_box: usize,
    pub in_ball: [usize; 3],
}

impl VisitAccumulator {
    fn new(horizon: usize, batches: usize) -> Self {
        let batch_len = horizon.div_ceil(batches.max(1)).max(1);
        VisitAccumulator { visits: 0, batch_len, batches: Vec::new(), in_box: 0, in_ball: [0; 3] }
    }

    fn record(&mut self, p: &SurfacePoint, box_tol: f64) {
        let b = self.visits / self.batch_len;
        if self.batches.len() <= b {
            self.batches.push(([0.0; 9], 0));
        }
        let m = monomials(p);
        let slot = &mut self.batches[b];
        for (s, v) in slot.0.iter_mut().zip(m) {
            *s += v;
        }
        slot.1 += 1;
        self.visits += 1;
        if in_box(p, box_tol) {
            self.in_box += 1;
        }
        let r = p.norm();
        for (k, rad) in BALL_RADII.iter().enumerate() {
            if r <= *rad {
                self.in_ball[k] += 1;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub params: SurfaceParams,
    pub start: SurfacePoint,
    pub mu: StepDistribution,
    pub seed: u64,
    pub steps: usize,
    pub thin: usize,
    /// `(step, point)` for every `thin`-th visited point.
    pub samples: Vec<(usize, SurfacePoint)>,
    /// SHA-256 of the letters actually applied, as lowercase hex.
    pub letters_digest: String,
    pub escaped: bool,
    pub escape_step: Option<usize>,
    pub max_log_norm: f64,
    pub end: SurfacePoint,
    pub accumulator: VisitAccumulator,
}

impl TrajectoryRecord {
    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Visits `q, f_0(q), …, f_{N−2}…f_0(q)` and stops once a coordinate
/// exceeds the escape radius.
pub fn run_trajectory(
    params: &SurfaceParams,
    q: &SurfacePoint,
    mu: &StepDistribution,
    n: usize,
    seed: u64,
    thin: usize,
    policy: &NumericPolicy,
) -> Result<TrajectoryRecord> {
    mu.validate()?;
    let thin = thin.max(1);
    let mut stream = LetterStream::new(*mu, seed);
    let mut hasher = Sha256::new();
    let mut acc = VisitAccumulator::new(n, policy.moment_batches);
    let mut samples = Vec::new();
    let mut p = *q;
    let mut max_log_norm = f64::NEG_INFINITY;
    let mut escape_step = None;
    for j in 0..n {
        let m = p.max_modulus();
        max_log_norm = max_log_norm.max(p.norm().ln());
        if !(m <= policy.escape_radius) {
            escape_step = Some(j);
            break;
        }
        acc.record(&p, policy.box_tol);
        if j % thin == 0 {
            samples.push((j, p));
        }
        if j + 1 < n {
            let l = stream.next_letter();
            hasher.update([l.as_char() as u8]);
            p = apply_letter(l, params, &p);
        }
    }
    Ok(TrajectoryRecord {
        params: *params,
        start: *q,
        mu: *mu,
        seed,
        steps: n,
        thin,
        samples,
        letters_digest: hasher.finalize().iter().map(|b| format!("{b:02x}")).collect(),
        escaped: escape_step.is_some(),
        escape_step,
        max_log_norm,
        end: p,
        accumulator: acc,
    })
}

/// Runs one trajectory per seed in parallel; output order follows `seeds`.
pub fn run_farm(
    params: &SurfaceParams,
    q: &SurfacePoint,
    mu: &StepDistribution,
    n: usize,
    seeds: &[u64],
    thin: usize,
    policy: &NumericPolicy,
) -> Result<Vec<TrajectoryRecord>> {
    seeds.par_iter().map(|&s| run_trajectory(params, q, mu, n, s, thin, policy)).collect()
}

pub fn write_jsonl<W: Write>(records: &[TrajectoryRecord], mut w: W) -> Result<()> {
    for r in records {
        writeln!(w, "{}", r.to_json_line()?)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub visits: usize,
    pub horizon: usize,
    pub moments: Moments,
    /// Fractions of the horizon spent in the box and in each ball of
    /// [`BALL_RADII`]; time after an escape counts as outside.
    pub box_fraction: f64,
    pub ball_fractions: [f64; 3],
}

pub fn empirical_summary(traj: &TrajectoryRecord) -> Result<EmpiricalSummary> {
    let acc = &traj.accumulator;
    if acc.visits == 0 {
        return Err(Error::InvalidInput("trajectory has no visited points".into()));
    }
    let mut values = [0.0; 9];
    let mut se = [0.0; 9];
    for k in 0..9 {
        let total: f64 = acc.batches.iter().map(|b| b.0[k]).sum();
        values[k] = total / acc.visits as f64;
        // Batch means over full batches only, so every batch has equal weight.
        let means: Vec<f64> = acc
            .batches
            .iter()
            .filter(|b| b.1 == acc.batch_len)
            .map(|b| b.0[k] / b.1 as f64)
            .collect();
        se[k] = if means.len() >= 2 {
            crate::stats::std_dev(&means) / (means.len() as f64).sqrt()
        } else {
            0.0
        };
    }
    let horizon = traj.steps.max(1) as f64;
    Ok(EmpiricalSummary {
        visits: acc.visits,
        horizon: traj.steps,
        moments: Moments { values, se },
        box_fraction: acc.in_box as f64 / horizon,
        ball_fractions: std::array::from_fn(|k| acc.in_ball[k] as f64 / horizon),
    })
}

/// Batch-means standard error of an arbitrary per-visit observable, for callers
/// holding a full series.
pub fn series_se(series: &[f64], batches: usize) -> f64 {
    batch_means_se(series, batches)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub steps: usize,
    pub cadence: usize,
    pub se_plus: f64,
    pub se_minus: f64,
    /// Bootstrap error of `λ⁺ + λ⁻` over the same blocks.
    pub se_sum: f64,
}

/// Exponents of the restricted-differential cocycle along one walk, using a
/// QR step every `cadence` letters and fresh orthonormal frames at every point.
pub fn estimate_lyapunov(
    params: &SurfaceParams,
    q: &SurfacePoint,
    mu: &StepDistribution,
    n: usize,
    seed: u64,
    cadence: usize,
    policy: &NumericPolicy,
) -> Result<LyapunovEstimate> {
    mu.validate()?;
    if n == 0 {
        return Err(Error::InvalidInput("Lyapunov run needs at least one step".into()));
    }
    if !in_box(q, policy.box_tol) {
        return Err(Error::Escape { step: 0 });
    }
    let cadence = cadence.max(1);
    let blocks = policy.lyapunov_blocks.clamp(1, n);
    let mut stream = LetterStream::new(*mu, seed);
    let mut p = *q;
    let mut frame = tangent_frame(params, &p, policy)?;
    let mut m: Mat2 = linalg::IDENTITY;
    let mut block_logs = vec![[0.0f64; 2]; blocks];
    let mut block_steps = vec![0usize; blocks];
    let mut pending = 0usize;

    let flush = |m: &mut Mat2, logs: &mut [f64; 2]| {
        let (qm, r) = linalg::qr(m);
        logs[0] += r[0][0].ln();
        logs[1] += r[1][1].ln();
        *m = qm;
    };

    for step in 0..n {
        let l = stream.next_letter();
        let image = apply_letter(l, params, &p);
        if !in_box(&image, policy.box_tol) {
            return Err(Error::Escape { step: step + 1 });
        }
        let next_frame = tangent_frame(params, &image, policy)?;
        let d = restricted_differential(l, params, &p, &frame, &next_frame, policy)?;
        m = linalg::mul(&d, &m);
        pending += 1;
        let b = step * blocks / n;
        block_steps[b] += 1;
        let block_ends = step + 1 == n || (step + 1) * blocks / n != b;
        if pending == cadence || block_ends || linalg::frobenius(&m) > policy.cocycle_norm_cap {
            flush(&mut m, &mut block_logs[b]);
            pending = 0;
        }
        p = image;
        frame = next_frame;
    }

    let total = |k: usize| block_logs.iter().map(|b| b[k]).sum::<f64>() / n as f64;
    let rates = |f: &dyn Fn(&[f64; 2]) -> f64| -> Vec<f64> {
        block_logs.iter().zip(&block_steps).map(|(b, &s)| f(b) / s.max(1) as f64).collect()
    };
    let reps = 2000;
    let se_plus = bootstrap_se(&rates(&|b| b[0]), reps, seed);
    let se_minus = bootstrap_se(&rates(&|b| b[1]), reps, seed);
    let se_sum = bootstrap_se(&rates(&|b| b[0] + b[1]), reps, seed);
    let (lp, lm) = (total(0), total(1));
    if !(lp.is_finite() && lm.is_finite()) {
        return Err(Error::InvalidInput("non-finite Lyapunov accumulator".into()));
    }
    Ok(LyapunovEstimate {
        lambda_plus: lp.max(lm),
        lambda_minus: lp.min(lm),
        steps: n,
        cadence,
        se_plus,
        se_minus,
        se_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::solve_fiber_z;

    fn bk() -> SurfaceParams {
        SurfaceParams::new(1.0, 1.0, 1.0, 0.0)
    }

    #[test]
    fn distribution_validation() {
        assert!(StepDistribution::new(1.0, 0.0, 0.0).is_err());
        assert!(StepDistribution::new(0.5, 0.3, 0.3).is_err());
        assert!(StepDistribution::new(0.5, 0.3, 0.2).is_ok());
        assert!(StepDistribution::uniform().validate().is_ok());
    }

    #[test]
    fn counter_access_matches_sequential_stream() {
        let mu = StepDistribution::uniform();
        let w = sample_letters(&mu, 42, 50).unwrap();
        for (i, l) in w.letters().iter().enumerate() {
            assert_eq!(*l, letter_at(&mu, 42, i as u64));
        }
        assert_eq!(sample_letters(&mu, 42, 10).unwrap().to_string(), w.to_string()[..10]);
    }

    #[test]
    fn letter_frequencies() {
        let mu = StepDistribution::uniform();
        let n = 300_000;
        let w = sample_letters(&mu, 1, n).unwrap();
        let sigma = (n as f64 / 3.0 * (2.0 / 3.0)).sqrt();
        for l in Letter::ALL {
            let c = w.letters().iter().filter(|&&x| x == l).count() as f64;
            assert!((c - n as f64 / 3.0).abs() < 3.0 * sigma, "{l}: {c}");
        }
    }

    #[test]
    fn boalch_klein_walk_stays_on_seven_points() {
        let policy = NumericPolicy::default();
        let orbit = [
            (0.0, 0.0, 0.0),
            (1.0, 0.0, 0.0),
            (0.0, 1.0, 0.0),
            (0.0, 0.0, 1.0),
            (1.0, 1.0, 0.0),
            (0.0, 1.0, 1.0),
            (1.0, 0.0, 1.0),
        ];
        let q = SurfacePoint::new(0.0, 0.0, 0.0);
        for seed in 0..5 {
            let t = run_trajectory(&bk(), &q, &StepDistribution::uniform(), 2000, seed, 1, &policy).unwrap();
            assert!(!t.escaped);
            for (_, p) in &t.samples {
                assert!(orbit.iter().any(|o| SurfacePoint::new(o.0, o.1, o.2) == *p), "{p:?}");
            }
        }
    }

    #[test]
    fn escape_from_far_point() {
        let policy = NumericPolicy::default();
        let z = solve_fiber_z(&bk(), 5.0, 5.0)[0];
        let q = SurfacePoint::new(5.0, 5.0, z);
        let t = run_trajectory(&bk(), &q, &StepDistribution::uniform(), 200, 3, 10, &policy).unwrap();
        assert!(t.escaped);
        let s = empirical_summary(&t).unwrap();
        assert!(s.box_fraction < 0.05);
    }

    #[test]
    fn trajectories_are_deterministic() {
        let policy = NumericPolicy::default();
        let q = SurfacePoint::new(0.0, 0.0, 0.0);
        let mu = StepDistribution::new(0.5, 0.3, 0.2).unwrap();
        let a = run_trajectory(&bk(), &q, &mu, 500, 11, 7, &policy).unwrap();
        let b = run_trajectory(&bk(), &q, &mu, 500, 11, 7, &policy).unwrap();
        assert_eq!(a.to_json_line().unwrap(), b.to_json_line().unwrap());
    }

    #[test]
    fn lyapunov_refuses_noncompact_start() {
        let q = SurfacePoint::new(5.0, 5.0, solve_fiber_z(&bk(), 5.0, 5.0)[0]);
        let r = estimate_lyapunov(&bk(), &q, &StepDistribution::uniform(), 100, 1, 8, &NumericPolicy::default());
        assert!(matches!(r, Err(Error::Escape { .. })));
    }

    #[test]
    fn finite_orbit_exponents_sum_to_zero() {
        let q = SurfacePoint::new(0.0, 0.0, 0.0);
        let e = estimate_lyapunov(&bk(), &q, &StepDistribution::uniform(), 20_000, 5, 8, &NumericPolicy::default()).unwrap();
        assert!(e.lambda_plus >= e.lambda_minus);
        // Frames only change by bounded factors along a finite orbit.
        assert!((e.lambda_plus + e.lambda_minus).abs() < 1e-3, "{e:?}");
        assert!(e.lambda_plus > 0.01);
    }
}
