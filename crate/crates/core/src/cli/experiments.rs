use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use num::BigRational;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::{Experiment, ExperimentConfig};
use crate::boundary::{cauchy_check, direction_series, initial_letter, subdivision_cycle, write_direction_csv};
use crate::error::{Error, Result};
use crate::geometry::{residual, solve_fiber_z, SurfacePoint};
use crate::infinity::{calibrate_shadow, certify_escape, verify_growth_lemmas, GridSpec};
use crate::orbits::{self, orbit_closure, orbit_closure_exact, verify_closed, OrbitResult};
use crate::symplectic::{sample_symplectic_with, symplectic_moments, MOMENT_NAMES};
use crate::walk::{empirical_summary, estimate_lyapunov, run_farm, sample_letters, write_jsonl};

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: String,
}

fn check(name: &str, passed: bool, witness: impl Into<String>) -> Check {
    Check { name: name.into(), passed, witness: witness.into() }
}

/// What an experiment produced: summary lines, assertions, and data files
/// relative to the output directory.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub checks: Vec<Check>,
    pub files: Vec<String>,
}

impl Outcome {
    fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }
}

fn create(out: &Path, name: &str, outcome: &mut Outcome) -> Result<BufWriter<File>> {
    outcome.files.push(name.to_string());
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn start_point(cfg: &ExperimentConfig) -> Result<SurfacePoint<f64>> {
    let s: Vec<f64> = cfg.start.iter().map(|n| n.value).collect();
    if s.len() == 3 {
        return Ok(SurfacePoint::new(s[0], s[1], s[2]));
    }
    let roots = solve_fiber_z(&cfg.params(), s[0], s[1]);
    let z = roots.get(cfg.root.min(roots.len().saturating_sub(1))).copied();
    z.map(|z| SurfacePoint::new(s[0], s[1], z))
        .ok_or_else(|| Error::Config(format!("`start`: no real point above ({}, {})", s[0], s[1])))
}

fn start_exact(cfg: &ExperimentConfig) -> Result<SurfacePoint<BigRational>> {
    if cfg.start.len() != 3 {
        return Err(Error::Config("`start`: exact mode needs all three coordinates".into()));
    }
    Ok(SurfacePoint::new(cfg.start[0].exact.clone(), cfg.start[1].exact.clone(), cfg.start[2].exact.clone()))
}

fn fmt_moments(values: &[f64; 9]) -> String {
    MOMENT_NAMES.iter().zip(values).map(|(n, v)| format!("E[{n}]={v:.5}")).collect::<Vec<_>>().join(" ")
}

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    match cfg.experiment {
        Experiment::Walk => walk(cfg, out),
        Experiment::Lyapunov => lyapunov(cfg, out),
        Experiment::Symplectic => symplectic(cfg, out),
        Experiment::Orbit => orbit(cfg, out),
        Experiment::InfinityVerify => infinity_verify(cfg, out),
        Experiment::Boundary => boundary(cfg, out),
        Experiment::CatalogCheck => catalog_check(cfg, out),
    }
}

fn walk(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let params = cfg.params();
    let q = start_point(cfg)?;
    let runs = run_farm(&params, &q, &cfg.mu, cfg.n, &cfg.seeds, cfg.thin, &cfg.policy)?;
    write_jsonl(&runs, create(out, "trajectories.jsonl", &mut o)?)?;

    let mut distinct = BTreeSet::new();
    let scale = 1.0 / cfg.policy.orbit_tol;
    for r in &runs {
        for (_, p) in &r.samples {
            distinct.insert(p.to_array().map(|v| (v * scale).round() as i64));
        }
    }
    let escaped: Vec<_> = runs.iter().filter(|r| r.escaped).collect();
    o.line(format!("start ({}, {}, {}), {} walk(s) of {} steps", q.x, q.y, q.z, runs.len(), cfg.n));
    o.line(format!("distinct visited points: {}", distinct.len()));
    o.line(format!("escaped: {}/{}", escaped.len(), runs.len()));
    let first = &runs[0];
    if !first.escaped && first.accumulator.visits > 0 {
        let s = empirical_summary(first)?;
        o.line(format!("seed {}: {}", first.seed, fmt_moments(&s.moments.values)));
        o.line(format!("seed {}: box fraction {:.6}", first.seed, s.box_fraction));
    }

    let worst = runs
        .iter()
        .filter(|r| !r.escaped)
        .map(|r| residual(&params, &r.end).abs() / (1.0 + r.end.max_modulus()).powi(3))
        .fold(0.0, f64::max);
    o.checks.push(check("on-surface drift", worst <= cfg.policy.on_surface_tol, format!("worst scaled residual {worst:.3e}")));

    if cfg.certify && !escaped.is_empty() {
        let calib = calibrate_shadow(&params, cfg.calibration_samples, cfg.seeds[0], &cfg.policy)?;
        let certs: Vec<_> = escaped.par_iter().map(|r| (r.seed, certify_escape(r, &calib, &cfg.policy))).collect();
        let mut w = create(out, "certificates.jsonl", &mut o)?;
        let mut ok = 0;
        for (seed, c) in &certs {
            let line = match c {
                Ok(c) => {
                    ok += 1;
                    json!({ "seed": seed, "certificate": c })
                }
                Err(e) => json!({ "seed": seed, "error": e.to_string() }),
            };
            writeln!(w, "{line}")?;
        }
        w.flush()?;
        o.line(format!("shadow calibration: c_cal {:.4} r_cal {:.4} c_l1 {:.4e}", calib.c_cal, calib.r_cal, calib.c_l1));
        o.line(format!("certified escapes: {ok}/{}", escaped.len()));
        let needed = (0.95 * escaped.len() as f64).ceil() as usize;
        o.checks.push(check("escape certificates", ok >= needed, format!("{ok} of {} escaped walks certified", escaped.len())));
    }
    Ok(o)
}

fn lyapunov(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let params = cfg.params();
    let q = start_point(cfg)?;
    let estimates = cfg
        .seeds
        .par_iter()
        .map(|&s| estimate_lyapunov(&params, &q, &cfg.mu, cfg.n, s, cfg.cadence, &cfg.policy).map(|e| (s, e)))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(out, "lyapunov.csv", &mut o)?;
    writeln!(w, "seed,lambda_plus,lambda_minus,se_plus,se_minus,se_sum")?;
    for (s, e) in &estimates {
        writeln!(w, "{s},{},{},{},{},{}", e.lambda_plus, e.lambda_minus, e.se_plus, e.se_minus, e.se_sum)?;
        o.line(format!(
            "seed {s}: lambda+ {:.5} ± {:.5}, lambda- {:.5} ± {:.5}, sum {:.2e}",
            e.lambda_plus, e.se_plus, e.lambda_minus, e.se_minus, e.lambda_plus + e.lambda_minus
        ));
        let sum = e.lambda_plus + e.lambda_minus;
        o.checks.push(check(&format!("seed {s}: exponents cancel"), sum.abs() <= cfg.sum_tol, format!("lambda+ + lambda- = {sum:.3e}")));
    }
    w.flush()?;
    Ok(o)
}

fn symplectic(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let params = cfg.params();
    let seed = cfg.seeds[0];
    let sample = sample_symplectic_with(&params, cfg.n, seed, cfg.sampler, &cfg.policy)?;
    sample.write_jsonl(create(out, "samples.jsonl", &mut o)?)?;
    let m = symplectic_moments(&sample)?;
    let a = sample.total_area;
    o.line(format!("total_area {:.6} ± {:.6} ({} proposals, acceptance {:.4})", a.value, a.se, sample.proposals, sample.acceptance_rate()));
    o.line(fmt_moments(&m.values));
    for w in &sample.warnings {
        o.line(format!("warning: {w}"));
    }
    if let Some(expected) = cfg.expected_area {
        let rel = (a.value - expected).abs() / expected.abs();
        o.checks.push(check("total area", rel <= 0.01, format!("relative error {rel:.3e} against {expected}")));
    }
    Ok(o)
}

fn orbit(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let (doc, size, closed) = if cfg.exact {
        let params = cfg.params_exact();
        let r = orbit_closure_exact(&params, &start_exact(cfg)?, cfg.n)?;
        let closed = r.points().map(|p| orbits::verify_closed_exact(&params, p));
        (r.to_json(&params), r.len(), closed)
    } else {
        let params = cfg.params();
        let r = orbit_closure(&params, &start_point(cfg)?, cfg.n, cfg.tol)?;
        let closed = r.points().map(|p| verify_closed(&params, p, cfg.tol));
        if let OrbitResult::ExceedsCap { frontier, .. } = &r {
            o.line(format!("frontier at cap: {frontier}"));
        }
        (r.to_json(&params), r.len(), closed)
    };
    std::fs::write(out.join("orbit.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    o.files.push("orbit.json".into());
    match size {
        Some(k) => o.line(format!("finite orbit with {k} points")),
        None => o.line(format!("orbit exceeds the cap of {} points", cfg.n)),
    }
    if let Some(closed) = closed {
        o.checks.push(check("closure", closed, "every image of every point is in the orbit"));
    }
    if let Some(expect) = cfg.expect_size {
        o.checks.push(check("orbit size", size == Some(expect), format!("expected {expect}, found {size:?}")));
    }
    Ok(o)
}

fn infinity_verify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let seed = cfg.seeds[0];
    let calib = calibrate_shadow(&cfg.params(), cfg.calibration_samples, seed, &cfg.policy)?;
    let grid = GridSpec { lo: cfg.grid[0], hi: cfg.grid[1], step: cfg.grid[2] };
    let report = verify_growth_lemmas(cfg.max_len, &grid, calib.c_cal, calib.r_cal, cfg.trials, seed)?;
    std::fs::write(out.join("calibration.json"), serde_json::to_string_pretty(&calib)? + "\n")?;
    o.files.push("calibration.json".into());
    std::fs::write(out.join("growth.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    o.files.push("growth.json".into());
    report.write_csv(create(out, "word_slacks.csv", &mut o)?)?;
    o.line(format!("calibration: c_cal {:.4}, r_cal {:.4}, c_l1 {:.4e}", calib.c_cal, calib.r_cal, calib.c_l1));
    o.line(format!(
        "{} grid points, {} words, {} perturbed trials, worst slack {:.4}",
        report.grid_points, report.words, report.perturbed_trials, report.worst_perturbed_slack
    ));
    o.line(format!("{} violations", report.violations()));
    let witness = report.witnesses.first().map(|w| format!("{w:?}")).unwrap_or_else(|| "none".into());
    o.checks.push(check("growth lemmas", report.violations() == 0, witness));
    Ok(o)
}

fn boundary(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let n = cfg.n;
    if n == 0 {
        return Err(Error::Config("`n` must be positive".into()));
    }
    let results = cfg
        .seeds
        .par_iter()
        .map(|&s| {
            let stream = sample_letters(&cfg.mu, s, 2 * n)?;
            let letters = stream.letters();
            let mut csv = Vec::new();
            write_direction_csv(&direction_series(&letters[..n], cfg.every), &mut csv)?;
            let cauchy = cauchy_check(letters, letters, n)?;
            let first = initial_letter(letters, n);
            Ok((s, csv, cauchy, first))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut worst_defect: f64 = 0.0;
    let mut unstable = Vec::new();
    for (s, csv, cauchy, first) in &results {
        let name = format!("boundary_seed{s}.csv");
        std::fs::write(out.join(&name), csv)?;
        o.files.push(name);
        worst_defect = worst_defect.max(cauchy.defect);
        if !cauchy.holds() {
            unstable.push(*s);
        }
        let first = match first {
            Ok(f) => format!("{} (stable since step {})", f.letter, f.stabilized_at),
            Err(e) => e.to_string(),
        };
        o.line(format!("seed {s}: defect {:.3e}, angle gap {:.3e}, initial letter {first}", cauchy.defect, cauchy.gap));
    }
    let cycle = subdivision_cycle(cfg.subdivision_depth)?;
    o.line(format!("subdivision depth {}: {} vertices, histogram {:?}", cycle.m, cycle.len(), cycle.histogram()));
    o.checks.push(check("rank-one defect", worst_defect <= cfg.defect_max, format!("worst defect {worst_defect:.3e} at n = {n}")));
    o.checks.push(check("Cauchy stability", unstable.is_empty(), format!("unstable seeds {unstable:?}")));
    Ok(o)
}

fn catalog_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut o = Outcome::default();
    let bk = orbits::boalch_klein();
    let r = orbit_closure(&bk.params, &bk.points[0], 1000, cfg.tol)?;
    o.checks.push(check("Boalch-Klein orbit", r.len() == Some(7), format!("{:?} points", r.len())));

    let cayley = crate::geometry::SurfaceParams::new(0, 0, 0, 4).map(|&v| BigRational::from_integer(v.into()));
    let one = BigRational::from_integer(1.into());
    let c = orbit_closure_exact(&cayley, &SurfacePoint::new(one.clone(), one.clone(), one), 100)?;
    o.checks.push(check("Cayley orbit of (1,1,1)", c.len() == Some(4), format!("{:?} points", c.len())));

    let cayley_f = cayley.map(crate::scalar::rational_to_f64);
    let p = orbits::cayley_rational_point(1, 5, 1, 5)?;
    let r5 = orbit_closure(&cayley_f, &p, 1000, cfg.tol)?;
    o.checks.push(check("Cayley orbit of (1/5, 1/5)", r5.len().is_some_and(|k| k <= 100), format!("{:?} points", r5.len())));

    let d = orbits::origin_differentials();
    o.checks.push(check("origin differentials", true, format!("{d:?}")));

    let (params, pts) = orbits::short_orbit_length2(2.0, 3.0)?;
    o.checks.push(check("length-2 orbit", params.d == -6.0, format!("params {:?}, points {:?}", params.to_array(), pts.map(|p| p.x))));

    let rot = orbits::fiber_rotation_matrix(&bk.params, 2.0 * (PI / 5.0).cos())?;
    o.checks.push(check("fiber rotation", (rot.theta - 2.0 * PI / 5.0).abs() < 1e-10, format!("theta {}", rot.theta)));

    let cycle = subdivision_cycle(5)?;
    o.checks.push(check("subdivision histogram", cycle.histogram() == [3, 3, 6, 12, 24, 48], format!("{:?}", cycle.histogram())));

    let doc = json!({
        "boalch_klein": { "params": bk.params.to_array(), "points": bk.points.iter().map(|p| p.to_array()).collect::<Vec<_>>(), "traces": bk.witness.to_array() },
        "cayley_orbit": c.to_json(&cayley),
        "origin_differentials": d,
        "fiber_rotation": rot,
    });
    std::fs::write(out.join("catalog.json"), serde_json::to_string_pretty(&doc)? + "\n")?;
    o.files.push("catalog.json".into());
    o.line(format!("{} catalog entries checked", o.checks.len()));
    Ok(o)
}
