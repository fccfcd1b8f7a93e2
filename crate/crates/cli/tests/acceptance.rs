//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary under `cargo test`. Failing criteria are printed
//! and, with `ACCEPTANCE_STRICT=1`, turn the exit status non-zero.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod support;

use std::fs;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use common::*;
use wtpgmr::dataio::{gen_pickplace, gen_reaching, TargetLayout, TraySpec};
use wtpgmr::evalx::{
    critical_point_errors, fit_constraint_boxes, grid_eval, loo_cross_validate, CriticalPointSpec,
    CriticalReference, GridSpec, LooConfig, OrientationRule, Trained,
};
use wtpgmr::gaussian::{det_power, log_det, product};
use wtpgmr::optimize::golden_section;
use wtpgmr::relevance::{fit_step_gaussians, frame_weights, smooth, StepGaussians};
use wtpgmr::tpmodel::fit_em;
use wtpgmr::{EmConfig, Gaussian, Method, TaskFrame};

const SEEDS: u64 = 10;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        if a == 0.0 { 0.0 } else { f64::INFINITY }
    } else {
        a / b
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn loo_rmse(datasets: &[wtpgmr::Dataset]) -> Outcome {
    let start = Instant::now();
    let cfg = LooConfig::default();
    let mut wins = 0;
    let (mut tp, mut wtp) = (Vec::new(), Vec::new());
    for (seed, ds) in datasets.iter().enumerate() {
        let a = loo_cross_validate(ds, Method::Tpgmr, 3, &cfg).unwrap();
        let b = loo_cross_validate(ds, Method::Wtpgmr, 3, &cfg).unwrap();
        println!(
            "  seed {seed}: tpgmr {:.4} ± {:.4}  wtpgmr {:.4} ± {:.4}",
            a.rmse_mean, a.rmse_std, b.rmse_mean, b.rmse_std
        );
        if b.rmse_mean < a.rmse_mean {
            wins += 1;
        }
        tp.push(a.rmse_mean);
        wtp.push(b.rmse_mean);
    }
    Outcome {
        name: "loo-rmse",
        pass: wins >= 9,
        detail: format!(
            "wtpgmr lower in {wins}/{SEEDS} seeds (need >= 9); seed-mean rmse tpgmr {:.4}, wtpgmr {:.4}; {:.1}s",
            mean(&tp),
            mean(&wtp),
            start.elapsed().as_secs_f64()
        ),
    }
}

struct GridStats {
    constraint: f64,
    task: f64,
    end_std: f64,
}

fn grid_sweeps(datasets: &[wtpgmr::Dataset]) -> (Outcome, Outcome) {
    let cfg = LooConfig::default();
    let mut tp = Vec::new();
    let mut wtp = Vec::new();
    let mut slowest: f64 = 0.0;
    for (seed, ds) in datasets.iter().enumerate() {
        let boxes = fit_constraint_boxes(ds, 10, 0.05, 0, 1).unwrap();
        let starts: Vec<TaskFrame> = ds.demos().iter().map(|d| d.frames[0].clone()).collect();
        let grid = GridSpec::centered(10.0, 21, OrientationRule::DemoMean, ds.demos()[0].frames[1].clone());
        let mut line = format!("  seed {seed}:");
        for method in [Method::Tpgmr, Method::Wtpgmr] {
            let t0 = Instant::now();
            let trained = Trained::fit(ds, method, 3, &cfg).unwrap();
            let rep = grid_eval(&trained, &starts, &grid, &boxes).unwrap();
            slowest = slowest.max(t0.elapsed().as_secs_f64());
            let s = &rep.summary;
            assert_eq!(s.cells, 441);
            line += &format!(
                "  {} constraint {:.3} task {:.4} end {:.4} ± {:.4} failed {}",
                method.name(),
                s.constraint_error.mean,
                s.task_error.mean,
                s.end_error.mean,
                s.end_error.std,
                s.failures
            );
            let stats = GridStats {
                constraint: s.constraint_error.mean,
                task: s.task_error.mean,
                end_std: s.end_error.std,
            };
            match method {
                Method::Tpgmr => tp.push(stats),
                Method::Wtpgmr => wtp.push(stats),
            }
        }
        println!("{line}");
    }
    let avg = |v: &[GridStats], f: fn(&GridStats) -> f64| mean(&v.iter().map(f).collect::<Vec<_>>());
    let cr = ratio(avg(&wtp, |s| s.constraint), avg(&tp, |s| s.constraint));
    let tr = ratio(avg(&wtp, |s| s.task), avg(&tp, |s| s.task));
    let fr = ratio(avg(&wtp, |s| s.end_std), avg(&tp, |s| s.end_std));
    let ratios = Outcome {
        name: "grid-ratios",
        pass: cr <= 0.2 && tr <= 0.2 && slowest < 300.0,
        detail: format!(
            "seed-mean constraint error {:.3} vs {:.3} (ratio {cr:.3}, need <= 0.2); task error {:.4} vs {:.4} (ratio {tr:.3}, need <= 0.2); slowest fit+sweep {slowest:.1}s (need < 300s)",
            avg(&wtp, |s| s.constraint),
            avg(&tp, |s| s.constraint),
            avg(&wtp, |s| s.task),
            avg(&tp, |s| s.task),
        ),
    };
    let flat = Outcome {
        name: "grid-flatness",
        pass: fr <= 0.1,
        detail: format!(
            "seed-mean end-error std wtpgmr {:.4} vs tpgmr {:.4} (ratio {fr:.3}, need <= 0.1)",
            avg(&wtp, |s| s.end_std),
            avg(&tp, |s| s.end_std)
        ),
    };
    (ratios, flat)
}

fn weight_behaviour() -> Outcome {
    let ds = gen_reaching(4, 200, 7, 0.001).unwrap();
    let sg = fit_step_gaussians(&ds).unwrap();
    let zero = frame_weights(&sg, 0.0).unwrap();
    let uniform = zero.weights().iter().all(|&w| w == 0.5) && smooth(&zero, 11).unwrap().weights().iter().all(|&w| w == 0.5);
    let mut monotone = true;
    let mut top = 0.0f64;
    for sign in [-1.0, 1.0] {
        let gaps: Vec<f64> = (0..20)
            .map(|k| frame_weights(&sg, sign * 8.0 * k as f64 / 19.0).unwrap().max_gap())
            .collect();
        monotone &= gaps.windows(2).all(|w| w[1] >= w[0]);
        top = top.max(gaps[19]);
    }
    Outcome {
        name: "weight-behaviour",
        pass: uniform && monotone,
        detail: format!("alpha=0 exactly uniform: {uniform}; max gap non-decreasing in |alpha| (20 points per sign): {monotone}; gap at |alpha|=8: {top:.4}"),
    }
}

fn pickplace_grasp() -> Outcome {
    let tray = TraySpec {
        layout: TargetLayout::Clustered,
        ..TraySpec::default()
    };
    let ds = gen_pickplace(3, 200, 0, &tray).unwrap();
    let reference = CriticalReference::from_dataset(&ds, CriticalPointSpec::default()).unwrap();
    let mut medians = Vec::new();
    for method in [Method::Tpgmr, Method::Wtpgmr] {
        let trained = Trained::fit(&ds, method, 5, &LooConfig::default()).unwrap();
        let mut errs: Vec<f64> = tray
            .cells()
            .iter()
            .map(|&c| {
                let frames = tray.frames_for(c);
                let traj = trained.generate(&frames).unwrap();
                critical_point_errors(&traj, &frames, &reference).grasp.unwrap_or(f64::INFINITY)
            })
            .collect();
        errs.sort_by(f64::total_cmp);
        medians.push(0.5 * (errs[49] + errs[50]));
    }
    let reduction = 100.0 * (1.0 - medians[1] / medians[0]);
    Outcome {
        name: "pickplace-grasp",
        pass: medians[1] < medians[0],
        detail: format!(
            "median grasp error over 100 targets: tpgmr {:.5}, wtpgmr {:.5}; reduction {reduction:.1}% (reported, not asserted)",
            medians[0], medians[1]
        ),
    }
}

fn oracle_suites() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    let mut r = rng(101);

    // product against a Gauss-Jordan information-form oracle
    let mut ok = true;
    for _ in 0..20 {
        let gs: Vec<Gaussian> = (0..3).map(|_| random_gaussian(&mut r, 4)).collect();
        let fused = product(&gs).unwrap();
        let precisions: Vec<DMatrix<f64>> = gs.iter().map(|g| gauss_jordan_inverse(g.cov())).collect();
        let lam = precisions.iter().fold(DMatrix::zeros(4, 4), |a, p| a + p);
        let eta = gs.iter().zip(&precisions).fold(DVector::zeros(4), |a, (g, p)| a + p * g.mean());
        let cov = gauss_jordan_inverse(&lam);
        let m = &cov * eta;
        ok &= (fused.cov() - &cov).amax() < 1e-9 * cov.amax() && (fused.mean() - &m).amax() < 1e-9 * (1.0 + m.amax());
    }
    check("product closed form", ok);

    // product mean by importance sampling
    let mut ok = true;
    for _ in 0..5 {
        let g1 = random_gaussian(&mut r, 2);
        let g2 = Gaussian::new(g1.mean() + DVector::from_vec(vec![0.3, -0.2]), random_spd(&mut r, 2, 0.5)).unwrap();
        let fused = product(&[g1.clone(), g2.clone()]).unwrap();
        let xs = sample(&g1, 100_000, &mut r);
        let w: Vec<f64> = xs.iter().map(|x| g2.log_pdf(x).unwrap().exp()).collect();
        let sw: f64 = w.iter().sum();
        let ess = sw * sw / w.iter().map(|v| v * v).sum::<f64>();
        let m = xs.iter().zip(&w).fold(DVector::zeros(2), |a, (x, wi)| a + x * *wi) / sw;
        ok &= (0..2).all(|i| (m[i] - fused.mean()[i]).abs() < 3.0 * (fused.cov()[(i, i)] / ess).sqrt());
    }
    check("product Monte-Carlo", ok);

    // conditioning against slab acceptance
    let g = random_gaussian(&mut r, 3);
    let v = g.mean()[0] + 0.3;
    let c = g.condition(&[0], &[1, 2], &DVector::from_vec(vec![v])).unwrap();
    let h = 0.02 * g.cov()[(0, 0)].sqrt();
    let kept: Vec<DVector<f64>> = sample(&g, 1_000_000, &mut r)
        .into_iter()
        .filter(|x| (x[0] - v).abs() < h)
        .map(|x| DVector::from_vec(vec![x[1], x[2]]))
        .collect();
    let m = mean_of(&kept);
    let n = kept.len() as f64;
    check(
        "condition Monte-Carlo",
        kept.len() > 1000 && (0..2).all(|i| (m[i] - c.mean()[i]).abs() < 3.0 * (c.cov()[(i, i)] / n).sqrt()),
    );

    // det_power against eigenvalues
    let mut ok = true;
    for d in 1..=6 {
        for _ in 0..10 {
            let s = random_spd(&mut r, d, 0.05);
            let eig = s.clone().symmetric_eigen().eigenvalues;
            let alpha: f64 = r.random_range(-3.0..3.0);
            let oracle: f64 = eig.iter().map(|l| l.powf(alpha)).product();
            let ld: f64 = eig.iter().map(|l| l.ln()).sum();
            ok &= ((det_power(&s, alpha).unwrap() - oracle) / oracle).abs() < 1e-8;
            ok &= (log_det(&s).unwrap() - ld).abs() < 1e-8 * (1.0 + ld.abs());
        }
    }
    check("det_power", ok);

    // EM objective monotone on 25 random datasets
    let mut ok = true;
    for _ in 0..25 {
        let m = r.random_range(2..6);
        let steps = r.random_range(30..80);
        let k = r.random_range(1..5);
        let ds = random_planar_dataset(&mut r, m, steps);
        let fit = fit_em(&ds, k, &EmConfig::default()).unwrap();
        ok &= fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
    }
    check("EM monotone", ok);

    // golden section on 50 unimodal quadratics
    let mut ok = true;
    for _ in 0..50 {
        let lo: f64 = r.random_range(-10.0..0.0);
        let hi: f64 = lo + r.random_range(0.5..20.0);
        let x0: f64 = r.random_range(lo..hi);
        let a: f64 = r.random_range(0.1..10.0);
        let res = golden_section(|x| a * (x - x0).powi(2), lo, hi, 1e-6, 200).unwrap();
        ok &= (res.x - x0).abs() <= 1e-6;
    }
    check("golden section", ok);

    // alpha = -1 weights equal the normalised precision determinants
    let mut ok = true;
    for _ in 0..20 {
        let vars: Vec<[f64; 2]> = (0..2).map(|_| [r.random_range(0.01..5.0), r.random_range(0.01..5.0)]).collect();
        let gs: Vec<Gaussian> = vars
            .iter()
            .map(|v| Gaussian::new(DVector::zeros(2), DMatrix::from_diagonal(&DVector::from_row_slice(v))).unwrap())
            .collect();
        let sg = StepGaussians::new(vec![gs], 1e-9).unwrap();
        let w = frame_weights(&sg, -1.0).unwrap();
        let prec: Vec<f64> = vars.iter().map(|v| 1.0 / (v[0] * v[1])).collect();
        let total: f64 = prec.iter().sum();
        ok &= (0..2).all(|j| (w.weights()[(0, j)] - prec[j] / total).abs() <= 1e-15 * (prec[j] / total).max(1e-3));
    }
    check("alpha=-1 precision ratio", ok);

    // rows sum to one over random step statistics
    let mut ok = true;
    for _ in 0..200 {
        let p = r.random_range(1..5);
        let t = r.random_range(1..15);
        let d = r.random_range(1..4);
        let steps = (0..t)
            .map(|_| {
                (0..p)
                    .map(|_| {
                        let scale = 10f64.powf(r.random_range(-3.0..3.0));
                        Gaussian::new(DVector::zeros(d), random_spd(&mut r, d, 0.01) * scale).unwrap()
                    })
                    .collect()
            })
            .collect();
        let sg = StepGaussians::new(steps, 1e-9).unwrap();
        let alpha: f64 = 8.0 * Distribution::<f64>::sample(&StandardNormal, &mut r).clamp(-1.0, 1.0);
        let w = frame_weights(&sg, alpha).unwrap();
        let window = if t % 2 == 1 { t } else { t - 1 };
        let s = smooth(&w, window).unwrap();
        for prof in [&w, &s] {
            ok &= prof.weights().row_iter().all(|row| (row.sum() - 1.0).abs() < 1e-12 && row.iter().all(|&v| v > 0.0));
        }
    }
    check("weight rows sum to one", ok);

    Outcome {
        name: "oracle-suites",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "product, condition, det_power, EM, golden section, precision ratio and row sums all agree".into()
        } else {
            format!("disagreements: {}", failures.join(", "))
        },
    }
}

fn cli_determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let names = support::full_pipeline(a.path());
    support::full_pipeline(b.path());
    let mut differing: Vec<String> = names
        .iter()
        .filter(|n| fs::read(a.path().join(n)).unwrap() != fs::read(b.path().join(n)).unwrap())
        .map(|n| n.to_string())
        .collect();
    let out = support::run_env(
        b.path(),
        &["grid-eval", "--model", "m2.json", "--grid-extent", "10", "--cells", "7", "--report", "grid.json"],
        &[("TPR_THREADS", "1")],
    );
    if !out.status.success() || fs::read(a.path().join("grid.json")).unwrap() != fs::read(b.path().join("grid.json")).unwrap() {
        differing.push("grid.json with TPR_THREADS=1".into());
    }
    Outcome {
        name: "cli-determinism",
        pass: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} outputs of all seven subcommands byte-identical across runs and thread counts", names.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    }
}

fn main() {
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let t0 = Instant::now();
    let datasets: Vec<_> = (0..SEEDS).map(|s| gen_reaching(4, 200, s, 0.001).unwrap()).collect();

    let mut outcomes = Vec::new();
    println!("leave-one-out, reaching M=4 T=200 K=3, seeds 0..{SEEDS}");
    outcomes.push(loo_rmse(&datasets));
    println!("21x21 grid over [-5, 5]^2, seeds 0..{SEEDS}");
    let (ratios, flat) = grid_sweeps(&datasets);
    outcomes.push(ratios);
    outcomes.push(flat);
    outcomes.push(weight_behaviour());
    outcomes.push(pickplace_grasp());
    outcomes.push(oracle_suites());
    outcomes.push(cli_determinism());

    println!();
    for o in &outcomes {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("acceptance: {}/{} criteria pass in {:.1}s", outcomes.len() - failed, outcomes.len(), t0.elapsed().as_secs_f64());
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
