//! End-to-end acceptance checks; prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::PI;
use std::time::Instant;

use num::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vieta_core::boundary::{cauchy_check, furstenberg_direction};
use vieta_core::geometry::{gradient, pi_map, residual, solve_fiber_z, tangent_frame};
use vieta_core::infinity::{calibrate_shadow, certify_escape, verify_growth_lemmas, GridSpec};
use vieta_core::orbits::{boalch_klein, orbit_closure, orbit_closure_exact, origin_differentials, OrbitResult};
use vieta_core::scalar::Ring;
use vieta_core::symplectic::{sample_symplectic, symplectic_moments};
use vieta_core::vieta::{ambient_jacobian, apply_letter, area_form};
use vieta_core::walk::{empirical_summary, estimate_lyapunov, run_farm, run_trajectory, sample_letters, LetterStream, StepDistribution};
use vieta_core::{Letter, NumericPolicy, SurfaceParams, SurfacePoint, TraceParams};

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn rat(rng: &mut ChaCha8Rng) -> BigRational {
    BigRational::new(rng.random_range(-50i64..=50).into(), rng.random_range(1i64..=12).into())
}

fn bk_params() -> SurfaceParams {
    SurfaceParams::new(1.0, 1.0, 1.0, 0.0)
}

/// Start on the sphere component of `S_(1,1,1,0)` away from the finite orbit.
fn compact_start() -> SurfacePoint {
    SurfacePoint::new(0.5, 0.5, solve_fiber_z(&bk_params(), 0.5, 0.5)[1])
}

fn criterion_1() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = Vec::new();
    for _ in 0..500 {
        let params = SurfaceParams::new(rat(&mut rng), rat(&mut rng), rat(&mut rng), rat(&mut rng));
        let p = SurfacePoint::new(rat(&mut rng), rat(&mut rng), rat(&mut rng));
        for l in Letter::ALL {
            let q = apply_letter(l, &params, &p);
            if apply_letter(l, &params, &q) != p {
                failures.push("involution");
            }
            if residual(&params, &q) != residual(&params, &p) {
                failures.push("surface preservation");
            }
        }
        let t = [rat(&mut rng), rat(&mut rng), rat(&mut rng), rat(&mut rng)];
        let base = pi_map(&TraceParams::new(t[0].clone(), t[1].clone(), t[2].clone(), t[3].clone()));
        let [a, b, c, d] = t;
        let images = [
            TraceParams::new(-a.clone(), -b.clone(), -c.clone(), -d.clone()),
            TraceParams::new(b.clone(), a.clone(), d.clone(), c.clone()),
            TraceParams::new(c.clone(), d.clone(), a.clone(), b.clone()),
            TraceParams::new(d, c, b, a),
        ];
        if images.iter().any(|t| pi_map(t) != base) {
            failures.push("Q-invariance");
        }
    }
    let bk = boalch_klein();
    let seven = orbit_closure(&bk.params, &SurfacePoint::new(0.0, 0.0, 0.0), 1000, 1e-12).map(|r| r.len());
    if seven != Ok(Some(7)) {
        failures.push("Boalch-Klein orbit");
    }
    let witness = pi_map(&bk.witness);
    if witness.to_array().iter().zip(bk.params.to_array()).any(|(u, v)| (u - v).abs() > 1e-12) {
        failures.push("Boalch-Klein traces");
    }
    let int = |v: i64| BigRational::from_i64(v);
    let cayley = SurfaceParams::new(int(0), int(0), int(0), int(4));
    let four = orbit_closure_exact(&cayley, &SurfacePoint::new(int(1), int(1), int(1)), 100).map(|r| r.len());
    if four != Ok(Some(4)) {
        failures.push("Cayley orbit");
    }
    if origin_differentials() != [[[2, 1], [-1, 0]], [[1, 1], [0, 1]], [[1, 0], [-1, 1]]] {
        failures.push("origin differentials");
    }
    failures.dedup();
    verdict(failures.is_empty(), format!("algebraic identities, failures: {failures:?}"))
}

/// Chart-free value of the area form: `det(v, w, ∇F) / |∇F|²`.
fn area_oracle(g: &[f64; 3], v: &[f64; 3], w: &[f64; 3]) -> f64 {
    let cross = [v[1] * w[2] - v[2] * w[1], v[2] * w[0] - v[0] * w[2], v[0] * w[1] - v[1] * w[0]];
    (cross[0] * g[0] + cross[1] * g[1] + cross[2] * g[2]) / (g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
}

fn criterion_2() -> Verdict {
    let policy = NumericPolicy::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut done, mut worst, mut worst_oracle) = (0, 0.0f64, 0.0f64);
    while done < 10_000 {
        let params = SurfaceParams::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        );
        let (x, y) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let roots = solve_fiber_z(&params, x, y);
        if roots.is_empty() {
            continue;
        }
        let p = SurfacePoint::new(x, y, roots[rng.random_range(0..roots.len())]);
        let l = Letter::ALL[rng.random_range(0..3)];
        let q = apply_letter(l, &params, &p);
        let (Ok(frame), true) = (tangent_frame(&params, &p, &policy), tangent_frame(&params, &q, &policy).is_ok()) else { continue };
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let v = frame.vector([c[0], c[1]]);
        let w = frame.vector([c[2], c[3]]);
        let jac = ambient_jacobian(l, &params, &p);
        let (jv, jw) = (jac.apply(&v), jac.apply(&w));
        let (Ok(before), Ok(after)) = (area_form(&params, &p, &v, &w, &policy), area_form(&params, &q, &jv, &jw, &policy)) else {
            return verdict(false, "area form refused a smooth point");
        };
        let scale = before.abs().max(1e-300);
        worst = worst.max((after + before).abs() / scale);
        let (ob, oa) = (area_oracle(&gradient(&params, &p), &v, &w), area_oracle(&gradient(&params, &q), &jv, &jw));
        worst_oracle = worst_oracle.max((ob - before).abs() / scale).max((oa + ob).abs() / ob.abs().max(1e-300));
        done += 1;
    }
    verdict(
        worst <= 1e-8 && worst_oracle <= 1e-8,
        format!("area anti-invariance over {done} points: worst relative error {worst:.2e}, oracle {worst_oracle:.2e}"),
    )
}

fn criterion_3() -> Verdict {
    let policy = NumericPolicy::default();
    let cayley = SurfaceParams::new(0.0, 0.0, 0.0, 4.0);
    let s = match sample_symplectic(&cayley, 1_000_000, 3, &policy) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("sampler failed: {e}")),
    };
    let m = symplectic_moments(&s).expect("moments");
    let target = 2.0 * PI * PI;
    let area_ok = (s.total_area.value - target).abs() <= 0.01 * target;
    let xx_ok = (m.values[3] - 2.0).abs() <= 0.01;
    let z = m.values[0].abs() / m.se[0];
    verdict(
        area_ok && xx_ok && z <= 3.0,
        format!("Cayley sampler: area {:.5} (2pi^2 = {target:.5}), E[x^2] {:.5}, |E[x]|/se {z:.2}", s.total_area.value, m.values[3]),
    )
}

fn criterion_4() -> Verdict {
    let policy = NumericPolicy::default();
    let params = bk_params();
    let reference = symplectic_moments(&sample_symplectic(&params, 1_000_000, 4, &policy).expect("sample")).expect("moments");
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, mu) in [("uniform", StepDistribution::uniform()), ("biased", StepDistribution::new(0.5, 0.3, 0.2).unwrap())] {
        let t = run_trajectory(&params, &compact_start(), &mu, 1_000_000, 4, 1, &policy).expect("walk");
        let s = empirical_summary(&t).expect("summary");
        let z = s.moments.max_z_score(&reference);
        ok &= !t.escaped && z <= 4.0;
        lines.push(format!("{name} max z {z:.2}"));
    }
    verdict(ok, format!("walk moments against the area measure: {}", lines.join(", ")))
}

/// Integer tangent basis at an integer point, from the integer gradient.
fn integer_basis(g: [i64; 3]) -> [[i64; 3]; 2] {
    let cands = [[g[1], -g[0], 0], [0, g[2], -g[1]], [-g[2], 0, g[0]]];
    for i in 0..3 {
        for j in i + 1..3 {
            let (a, b) = (cands[i], cands[j]);
            let cross = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
            if cross != [0, 0, 0] {
                return [a, b];
            }
        }
    }
    panic!("singular point");
}

/// Coordinates of `v` in the basis `(b1, b2)`, using a non-degenerate 2×2 minor.
fn coords(b: &[[i64; 3]; 2], v: [f64; 3]) -> [f64; 2] {
    for (r, s) in [(0, 1), (1, 2), (0, 2)] {
        let det = (b[0][r] * b[1][s] - b[1][r] * b[0][s]) as f64;
        if det != 0.0 {
            let c1 = (v[r] * b[1][s] as f64 - b[1][r] as f64 * v[s]) / det;
            let c2 = (b[0][r] as f64 * v[s] - v[r] * b[0][s] as f64) / det;
            return [c1, c2];
        }
    }
    panic!("degenerate basis");
}

/// Lyapunov exponents of the differential cocycle on the seven-point orbit,
/// with per-point integer bases and plain 2×2 products.
fn finite_orbit_oracle(mu: &StepDistribution, seed: u64, n: usize) -> (f64, f64) {
    let step = |l: Letter, p: [i64; 3]| -> [i64; 3] {
        let [x, y, z] = p;
        match l {
            Letter::X => [-x - y * z + 1, y, z],
            Letter::Y => [x, -y - x * z + 1, z],
            Letter::Z => [x, y, -z - x * y + 1],
        }
    };
    let grad = |p: [i64; 3]| {
        let [x, y, z] = p;
        [2 * x + y * z - 1, 2 * y + x * z - 1, 2 * z + x * y - 1]
    };
    let jac = |l: Letter, p: [i64; 3]| -> [[i64; 3]; 3] {
        let [x, y, z] = p;
        match l {
            Letter::X => [[-1, -z, -y], [0, 1, 0], [0, 0, 1]],
            Letter::Y => [[1, 0, 0], [-z, -1, -x], [0, 0, 1]],
            Letter::Z => [[1, 0, 0], [0, 1, 0], [-y, -x, -1]],
        }
    };
    let mut stream = LetterStream::new(*mu, seed);
    let mut p = [0i64, 0, 0];
    // Columns of the running product, re-orthonormalised by Gram-Schmidt.
    let (mut q1, mut q2) = ([1.0, 0.0], [0.0, 1.0]);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n.saturating_sub(1) {
        let l = stream.next_letter();
        let image = step(l, p);
        let (b, bi) = (integer_basis(grad(p)), integer_basis(grad(image)));
        let j = jac(l, p);
        let m: Vec<[f64; 2]> = (0..2)
            .map(|k| {
                let v: [f64; 3] = std::array::from_fn(|r| (0..3).map(|c| (j[r][c] * b[k][c]) as f64).sum());
                coords(&bi, v)
            })
            .collect();
        // m[k] is the image of basis vector k.
        let apply = |u: [f64; 2]| [m[0][0] * u[0] + m[1][0] * u[1], m[0][1] * u[0] + m[1][1] * u[1]];
        let (a1, a2) = (apply(q1), apply(q2));
        let r11 = a1[0].hypot(a1[1]);
        let e1 = [a1[0] / r11, a1[1] / r11];
        let r12 = e1[0] * a2[0] + e1[1] * a2[1];
        let w = [a2[0] - r12 * e1[0], a2[1] - r12 * e1[1]];
        let r22 = w[0].hypot(w[1]);
        s1 += r11.ln();
        s2 += r22.ln();
        q1 = e1;
        q2 = [w[0] / r22, w[1] / r22];
        p = image;
    }
    (s1 / n as f64, s2 / n as f64)
}

fn criterion_5() -> Verdict {
    let policy = NumericPolicy::default();
    let params = bk_params();
    let mu = StepDistribution::uniform();
    let e = match estimate_lyapunov(&params, &compact_start(), &mu, 1_000_000, 4, policy.lyapunov_cadence, &policy) {
        Ok(e) => e,
        Err(err) => return verdict(false, format!("Lyapunov run failed: {err}")),
    };
    let sum = e.lambda_plus + e.lambda_minus;
    let generic_ok = sum.abs() <= 2e-3 && e.lambda_plus > 0.01;
    let n = 1_000_000;
    let f = estimate_lyapunov(&params, &SurfacePoint::new(0.0, 0.0, 0.0), &mu, n, 5, policy.lyapunov_cadence, &policy).expect("orbit run");
    let (o1, o2) = finite_orbit_oracle(&mu, 5, n);
    let orbit_ok = (f.lambda_plus - o1).abs() <= 1e-2 && (f.lambda_minus - o2).abs() <= 1e-2;
    verdict(
        generic_ok && orbit_ok,
        format!(
            "exponents: lambda+ {:.5}, lambda+ + lambda- {sum:.2e}; seven-point orbit ({:.4}, {:.4}) vs matrix oracle ({o1:.4}, {o2:.4})",
            e.lambda_plus, f.lambda_plus, f.lambda_minus
        ),
    )
}

fn criterion_6() -> Verdict {
    let policy = NumericPolicy::default();
    let params = bk_params();
    let start = SurfacePoint::new(5.0, 5.0, solve_fiber_z(&params, 5.0, 5.0)[0]);
    let seeds: Vec<u64> = (0..100).collect();
    let runs = run_farm(&params, &start, &StepDistribution::uniform(), 200, &seeds, 1, &policy).expect("walks");
    let cal = calibrate_shadow(&params, policy.shadow_calibration_samples, 0, &policy).expect("calibration");
    let escaped = runs.iter().filter(|r| r.escaped).count();
    let certified = runs
        .iter()
        .filter(|r| r.escaped)
        .filter(|r| certify_escape(r, &cal, &policy).is_ok_and(|c| c.min_growth >= cal.r_cal / 2.0))
        .count();
    verdict(
        escaped >= 99 && certified >= 95,
        format!("escape from ({}, {}, {:.6}): {escaped}/100 escaped, {certified} certified (R_cal {:.4})", start.x, start.y, start.z, cal.r_cal),
    )
}

fn criterion_7() -> Verdict {
    let policy = NumericPolicy::default();
    let cal = calibrate_shadow(&bk_params(), policy.shadow_calibration_samples, 0, &policy).expect("calibration");
    match verify_growth_lemmas(12, &GridSpec::default(), cal.c_cal, cal.r_cal, 1000, 7) {
        Ok(rep) => verdict(
            rep.violations() == 0,
            format!("growth lemmas, {} words, {} perturbed trials: {} violations", rep.words, rep.perturbed_trials, rep.violations()),
        ),
        Err(e) => verdict(false, format!("harness refused: {e}")),
    }
}

fn criterion_8() -> Verdict {
    let policy = NumericPolicy::default();
    let n = policy.shadow_calibration_samples;
    let a = calibrate_shadow(&bk_params(), n, 8, &policy).expect("calibration");
    let b = calibrate_shadow(&bk_params(), 2 * n, 8, &policy).expect("calibration");
    let ratio = b.c_l1 / a.c_l1;
    verdict(
        a.c_l1.is_finite() && b.c_l1.is_finite() && ratio < 2.0 && ratio > 0.5,
        format!("shadow error constant: {:.4e} at {n} samples, {:.4e} at {} (ratio {ratio:.3})", a.c_l1, b.c_l1, 2 * n),
    )
}

fn criterion_9() -> Verdict {
    let mu = StepDistribution::uniform();
    let n = 1000;
    let (mut worst_defect, mut bad) = (0.0f64, Vec::new());
    for seed in 0..100 {
        let a = sample_letters(&mu, seed, 2 * n).expect("letters");
        let other = sample_letters(&mu, seed + 1000, 2 * n).expect("letters");
        let mut b = a.letters()[..n].to_vec();
        b.extend_from_slice(&other.letters()[n..]);
        let d = furstenberg_direction(a.letters(), n).expect("direction");
        worst_defect = worst_defect.max(d.defect);
        let same = cauchy_check(a.letters(), a.letters(), n).expect("cauchy");
        let tail = cauchy_check(a.letters(), &b, n).expect("tail");
        if !(d.defect <= 1e-6 && same.holds() && tail.holds()) {
            bad.push(seed);
        }
    }
    verdict(bad.is_empty(), format!("100 streams at n = {n}: worst defect {worst_defect:.2e}, failing seeds {bad:?}"))
}

fn criterion_10() -> Verdict {
    // Finite-orbit tables and stationary-measure counts are out of scope;
    // what is checked is that random starts on S_(1,1,1,0) with rational
    // (x, y) only ever close up on the seven-point orbit.
    let params = bk_params();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut finite, mut other_finite, mut starts) = (0, 0, 0);
    while starts < 10_000 {
        let x = rng.random_range(-16i64..=16) as f64 / rng.random_range(1i64..=8) as f64;
        let y = rng.random_range(-16i64..=16) as f64 / rng.random_range(1i64..=8) as f64;
        let roots = solve_fiber_z(&params, x, y);
        if roots.is_empty() {
            continue;
        }
        starts += 1;
        let z = roots[rng.random_range(0..roots.len())];
        if let Ok(OrbitResult::Finite { points, .. }) = orbit_closure(&params, &SurfacePoint::new(x, y, z), 500, 1e-8) {
            finite += 1;
            let seven = boalch_klein().points;
            if points.len() != 7 || !points.iter().all(|p| seven.iter().any(|q| q.dist_max(p) <= 1e-8)) {
                other_finite += 1;
            }
        }
    }
    verdict(
        other_finite == 0,
        format!("excluded items covered by the orbit scan: {starts} starts, {finite} finite (all the seven-point orbit: {})", other_finite == 0),
    )
}

fn main() {
    let criteria: [(usize, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, f) in criteria {
        if !only.is_empty() && !only.contains(&k) {
            continue;
        }
        let t = Instant::now();
        let v = f();
        println!("criterion {k:>2}: {} {} [{:.1}s]", if v.passed { "PASS" } else { "FAIL" }, v.detail, t.elapsed().as_secs_f64());
        failed += usize::from(!v.passed);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
