//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always reach stdout.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use slogse::analysis::{
    calibrate_envelope, cauchy_sweep, inequality_scan, mild_strong_crosscheck, nonlinearity_convergence,
    relative_spread, LemmaId,
};
use slogse::grid::{l2_norm, Field, Grid};
use slogse::marcus::{phi_closed, Mark};
use slogse::noise::{sample_path, Atom, LevyMeasureSpec, NoisePath};
use slogse::nonlinearity::{luxembourg_norm, EpsilonParam, NoiseChannelSet, SaturatedNonlinearity};
use slogse::solver::{entropy_fk_integral, run, uniform_samples, InitialProfile, SolverConfig};

type Outcome = (bool, String);

fn photorefractive() -> NoiseChannelSet {
    NoiseChannelSet::new(vec![SaturatedNonlinearity::Photorefractive { rho: 1.0 }]).unwrap()
}

fn config(grid: &Grid, lambda: f64, eps: f64, dt: f64, horizon: f64, spec: LevyMeasureSpec, samples: usize) -> SolverConfig {
    SolverConfig {
        eps: EpsilonParam::new(eps).unwrap(),
        lambda,
        dt,
        horizon,
        grid: grid.clone(),
        channels: photorefractive(),
        spec,
        seed: 0,
        sample_times: uniform_samples(horizon, samples),
        dispersion: true,
        entropy_k: 10,
    }
}

fn two_atoms() -> LevyMeasureSpec {
    LevyMeasureSpec::atomic(vec![Atom { z: vec![0.5], weight: 3.0 }, Atom { z: vec![-0.8], weight: 2.0 }], 0.0).unwrap()
}

fn gaussian(grid: &Grid, amplitude: f64) -> Field {
    InitialProfile::Gaussian { amplitude, width: 1.0 }.sample(grid).unwrap()
}

/// Slope of `log y` against `log x`, written out independently of the library fit.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}

fn mass_conservation() -> Outcome {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let spec = two_atoms();
    let u0 = gaussian(&grid, 1.0);
    let mut worst = 0.0f64;
    let mut jumps = 0;
    for (lambda, seed) in [(1.0, 11), (-1.0, 12)] {
        let cfg = config(&grid, lambda, 1e-3, 1e-3, 1.0, spec.clone(), 1000);
        let path = sample_path(&spec, 1.0, seed).unwrap();
        jumps += path.events.len();
        let traj = run(&cfg, &path, &u0).unwrap();
        let m0 = l2_norm(&u0);
        for u in &traj.states {
            worst = worst.max((l2_norm(u) - m0).abs() / m0);
        }
    }
    (worst < 1e-10 && jumps > 0, format!("max relative mass drift {worst:.3e} over {jumps} jumps (< 1e-10)"))
}

/// `g̃` for the two channels used below, straight from the family formulas.
fn gt_oracle(theta: f64) -> [f64; 2] {
    [theta / (1.0 + theta), 1.0 - 1.0 / (1.0 + theta).sqrt()]
}

fn rk4_oracle(s: f64, z: &[f64], y: Complex64, steps: usize) -> Complex64 {
    let f = |p: Complex64| {
        let g = gt_oracle(p.norm_sqr());
        -Complex64::i() * (z[0] * g[0] + z[1] * g[1]) * p
    };
    let h = s / steps as f64;
    let mut p = y;
    for _ in 0..steps {
        let k1 = f(p);
        let k2 = f(p + k1 * (h / 2.0));
        let k3 = f(p + k2 * (h / 2.0));
        let k4 = f(p + k3 * h);
        p += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    p
}

fn marcus_map() -> Outcome {
    let channels =
        NoiseChannelSet::new(vec![SaturatedNonlinearity::Photorefractive { rho: 1.0 }, SaturatedNonlinearity::SqrtGap])
            .unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let (mut err, mut modulus) = (0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let z = loop {
            let z = [2.0 * rng.random::<f64>() - 1.0, 2.0 * rng.random::<f64>() - 1.0];
            let r = z[0].hypot(z[1]);
            if r > 0.0 && r <= 1.0 {
                break z;
            }
        };
        let s = rng.random::<f64>();
        let y = Complex64::from_polar((rng.random::<f64>() * (1e3f64 / 1e-6).ln()).exp() * 1e-6, rng.random::<f64>() * 6.3);
        let mark = Mark::new(z.to_vec()).unwrap();
        err = err.max((phi_closed(s, &mark, y, &channels).unwrap() - rk4_oracle(s, &z, y, 1024)).norm());
        let full = phi_closed(1.0, &mark, y, &channels).unwrap();
        modulus = modulus.max((full.norm() - y.norm()).abs() / y.norm());
    }
    (err < 1e-9 && modulus <= 1e-15, format!("max |closed - RK4| {err:.3e} (< 1e-9), max modulus defect {modulus:.3e} (<= 1e-15)"))
}

fn lemma_scans() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for lemma in [
        LemmaId::BoundedLog,
        LemmaId::Lipschitz,
        LemmaId::QuasiMonotone,
        LemmaId::QuasiMonotoneDiagonal,
        LemmaId::QuasiMonotoneCross,
        LemmaId::Envelope,
    ] {
        let r = inequality_scan(lemma, 1_000_000, 314).unwrap();
        ok &= r.violations == 0;
        parts.push(format!("{}:{}/{}", lemma, r.violations, r.samples));
    }
    (ok, format!("violations per scan {}", parts.join(" ")))
}

fn sweep_setup() -> (SolverConfig, Vec<NoisePath>, Field, Vec<f64>) {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let spec = two_atoms();
    let cfg = config(&grid, 1.0, 0.5, 1e-3, 1.0, spec.clone(), 20);
    let paths = (0..8).map(|i| sample_path(&spec, 1.0, 100 + i).unwrap()).collect();
    let eps = (1..=7).map(|i| 0.5f64.powi(i)).collect();
    (cfg, paths, gaussian(&grid, 2.0), eps)
}

fn cauchy_and_bounds() -> (Outcome, Outcome) {
    let (cfg, paths, u0, eps) = sweep_setup();
    let r = cauchy_sweep(&cfg, &eps, 5.0, &paths, &u0).unwrap();
    let d = &r.distances;
    let monotone = d.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let shrink = d[d.len() - 1] < d[0] / 3.0;
    let c4 = (
        monotone && shrink,
        format!("D = [{}], non-increasing within 10%: {monotone}, last < first/3: {shrink}", fmt_list(d)),
    );

    // no growth: no step towards smaller ε raises the bound by more than the 10% band
    let growth = |v: &[f64]| v.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let (sh, se) = (relative_spread(&r.max_h1), relative_spread(&r.max_entropy));
    let ok = sh < 0.2 && se < 0.2 && growth(&r.max_h1) && growth(&r.max_entropy);
    let c6 = (ok, format!("H1 spread {sh:.3} [{}], entropy spread {se:.3} [{}] (< 0.2)", fmt_list(&r.max_h1), fmt_list(&r.max_entropy)));
    (c4, c6)
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn nonlinearity() -> Outcome {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let u = gaussian(&grid, 1.0);
    let eps: Vec<f64> = (1..=12).map(|i| 0.5f64.powi(i)).collect();
    let c = calibrate_envelope(0.5, 200_000, 9);
    let r = nonlinearity_convergence(&u, &eps, 0.5, c).unwrap();
    let order = slope(&eps, &r.errors);
    let ok = r.strictly_decreasing() && order >= 0.5 && r.envelope_violations == 0;
    (
        ok,
        format!(
            "strictly decreasing: {}, order {order:.3} (>= 0.5), envelope violations {}",
            r.strictly_decreasing(),
            r.envelope_violations
        ),
    )
}

fn entropy_balance() -> Outcome {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let spec = two_atoms();
    let path = sample_path(&spec, 1.0, 21).unwrap();
    let u0 = gaussian(&grid, 2.0);
    let f0 = entropy_fk_integral(&u0, 10).abs();
    let mut res = Vec::new();
    for dt in [2e-3, 1e-3] {
        let cfg = config(&grid, 1.0, 1e-3, dt, 1.0, spec.clone(), (1.0 / dt).round() as usize);
        let traj = run(&cfg, &path, &u0).unwrap();
        res.push(traj.diagnostics.entropy_balance.iter().map(|v| v.abs()).fold(0.0, f64::max) / f0);
    }
    (
        res[0] < 1e-2 && res[1] < 1e-2 && res[1] < res[0],
        format!("relative residual {:.3e} at dt=2e-3, {:.3e} at dt=1e-3 over {} jumps", res[0], res[1], path.events.len()),
    )
}

fn mild_strong() -> Outcome {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let u0 = InitialProfile::Modulated { amplitude: 1.0, width: 1.0, k0: 1.0 }.sample(&grid).unwrap();
    let cfg = config(&grid, 1.0, 1e-3, 1e-4, 0.5, LevyMeasureSpec::none(1), 5);
    let path = NoisePath::empty(1, 0.5);
    let refine = [1usize, 2, 4, 8];
    let errs: Vec<f64> = refine.iter().map(|&r| mild_strong_crosscheck(&cfg, &path, &u0, r).unwrap()).collect();
    let inv: Vec<f64> = refine.iter().map(|&r| 1.0 / r as f64).collect();
    let order = slope(&inv, &errs);
    (
        errs[3] < 1e-4 && (0.8..=1.2).contains(&order),
        format!("sup-t L2 gap {:.3e} at refine 8 (< 1e-4), decay order {order:.3} in refinement", errs[3]),
    )
}

fn orlicz_n(s: f64) -> f64 {
    let e3 = (-3.0f64).exp();
    if s == 0.0 {
        0.0
    } else if s <= e3 {
        -s * s * (s * s).ln()
    } else {
        3.0 * s * s + 4.0 * e3 * s - e3 * e3
    }
}

fn orlicz_sandwich() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(9);
    let grids = [Grid::new(1, 64, 10.0).unwrap(), Grid::new(2, 16, 4.0).unwrap()];
    let mut violations = 0;
    for i in 0..1000 {
        let grid = &grids[i % 2];
        let scale = (rng.random::<f64>() * 16.0 - 8.0).exp2() * 10f64.powf(rng.random::<f64>() * 6.0 - 3.0);
        let values: Vec<Complex64> = (0..grid.len())
            .map(|_| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(re, im) * scale
            })
            .collect();
        let u = Field::new(grid.clone(), values).unwrap();
        let k = luxembourg_norm(&u);
        let modular: f64 = u.values().iter().map(|v| orlicz_n(v.norm())).sum::<f64>() * grid.cell_volume();
        let (lo, hi) = (k.min(k * k), k.max(k * k));
        if lo > modular * (1.0 + 1e-8) || modular > hi * (1.0 + 1e-8) {
            violations += 1;
        }
    }
    (violations == 0, format!("{violations} violations over 1000 random fields (slack 1e-8)"))
}

fn strang_order() -> Outcome {
    let grid = Grid::new(1, 256, 40.0).unwrap();
    let u0 = InitialProfile::Modulated { amplitude: 1.0, width: 1.0, k0: 1.0 }.sample(&grid).unwrap();
    let path = NoisePath::empty(1, 1.0);
    let reference = run(&config(&grid, 1.0, 1e-3, 1e-5, 1.0, LevyMeasureSpec::none(1), 1), &path, &u0).unwrap();
    let dts = [0.02, 0.01, 0.005, 0.0025];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| {
            let traj = run(&config(&grid, 1.0, 1e-3, dt, 1.0, LevyMeasureSpec::none(1), 1), &path, &u0).unwrap();
            l2_norm(&traj.final_state().sub(reference.final_state()).unwrap())
        })
        .collect();
    let order = slope(&dts, &errs);
    ((1.8..=2.2).contains(&order), format!("global error slope {order:.4} in [1.8, 2.2], errors [{}]", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")))
}

fn timed(f: impl FnOnce() -> Vec<Outcome>) -> (Vec<Outcome>, f64) {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| vec![(false, "panicked".to_owned())]);
    (out, start.elapsed().as_secs_f64())
}

fn main() {
    let mut failed = 0;
    let mut report = |ids: &[(u32, &str)], f: &dyn Fn() -> Vec<Outcome>| {
        let (outcomes, secs) = timed(f);
        for (i, &(id, name)) in ids.iter().enumerate() {
            let (ok, detail) = outcomes.get(i).cloned().unwrap_or((false, "panicked".to_owned()));
            failed += usize::from(!ok);
            println!("{} criterion {id} {name}: {detail} [{secs:.1}s]", if ok { "PASS" } else { "FAIL" });
        }
    };
    report(&[(1, "mass conservation")], &|| vec![mass_conservation()]);
    report(&[(2, "Marcus map")], &|| vec![marcus_map()]);
    report(&[(3, "regularized-log inequalities")], &|| vec![lemma_scans()]);
    report(&[(4, "epsilon-Cauchy sweep"), (6, "uniform H1/entropy bounds")], &|| {
        let (a, b) = cauchy_and_bounds();
        vec![a, b]
    });
    report(&[(5, "nonlinearity convergence")], &|| vec![nonlinearity()]);
    report(&[(7, "entropy balance")], &|| vec![entropy_balance()]);
    report(&[(8, "mild/strong cross-check")], &|| vec![mild_strong()]);
    report(&[(9, "Orlicz sandwich")], &|| vec![orlicz_sandwich()]);
    report(&[(10, "Strang order")], &|| vec![strang_order()]);
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
