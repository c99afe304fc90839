//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use parsec_core::estimation::{self, EdgeStructure};
use parsec_core::experiments::{self, CalibrationEntry, SampleDist, SweepSetting};
use parsec_core::inference::{self, ErrorControlSpec};
use parsec_core::io::DataMatrix;
use parsec_core::parallel;
use parsec_core::parsec::{self, SymmetrizeMode};
use parsec_core::screen::{self, Method, ScreenConfig};
use parsec_core::simgen::{self, StructureSpec};
use parsec_core::uscore;
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = parallel::rng(seed);
    DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal)), None).unwrap()
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn equivalence() -> Outcome {
    let mut rng = parallel::rng(1);
    let (worst, elapsed) = timed(|| {
        let mut worst: f64 = 0.0;
        for i in 0..50 {
            let n = rng.random_range(4..=15);
            let p = rng.random_range(n..=200);
            let u = uscore::uscores(&gaussian_data(n, p, 1000 + i)).unwrap();
            let base = parsec::parsec_base(&u).unwrap();
            let fast = parsec::parsec_scalable(&u).unwrap();
            worst = worst.max(max_diff(base.values(), fast.values()));
        }
        worst
    });
    outcome(
        worst < 1e-8 && elapsed < Duration::from_secs(30),
        format!("max |base - scalable| = {worst:.2e}, {:.1}s", elapsed.as_secs_f64()),
    )
}

/// Kolmogorov–Smirnov distance of a sample from Uniform(0, 1).
fn ks_uniform(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let m = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| ((i as f64 + 1.0) / m - v).max(v - i as f64 / m))
        .fold(0.0, f64::max)
}

fn null_pvalue_law() -> Outcome {
    let (n, p, reps) = (10, 40, 200);
    let (pvals, elapsed) = timed(|| {
        let mut pvals = Vec::new();
        for r in 0..reps {
            let u = uscore::uscores(&gaussian_data(n, p, parallel::derive_seed(2, r))).unwrap();
            let h = parsec::symmetrize(&parsec::parsec_scalable(&u).unwrap(), SymmetrizeMode::UpperTriangle);
            for j in 0..p {
                for k in j + 1..p {
                    pvals.push(inference::pvalue(h.get(j, k).abs(), n).unwrap());
                }
            }
        }
        pvals
    });
    let m = pvals.len() as f64;
    let d = ks_uniform(pvals);
    // Asymptotic 1% critical value.
    let critical = 1.6276 / m.sqrt();
    outcome(
        d < critical && elapsed < Duration::from_secs(60),
        format!("KS D = {d:.5} vs 1% critical {critical:.5} over {m} p-values, {:.1}s", elapsed.as_secs_f64()),
    )
}

fn calibration() -> Vec<(&'static str, Outcome)> {
    let (n, p, reps, alpha) = (30, 1000, 200, 0.05);
    let k = experiments::kfwer_k(p, 0.05);
    let entries = [
        CalibrationEntry { method: Method::ParsecScalable, control: ErrorControlSpec::Fwer { alpha } },
        CalibrationEntry { method: Method::ParsecScalable, control: ErrorControlSpec::KFwer { alpha, k } },
        CalibrationEntry { method: Method::ParsecScalable, control: ErrorControlSpec::FdrBh { alpha } },
    ];
    let (report, elapsed) =
        timed(|| parallel::with_threads(1, || experiments::null_calibration(n, p, reps, &entries, 3).unwrap()));
    let in_time = elapsed < Duration::from_secs(600);
    let fwer = report.summary[&format!("{}.fraction_exceeding_k", entries[0].label())];
    let kfwer = report.summary[&format!("{}.fraction_exceeding_k", entries[1].label())];
    let fdr = report.summary[&format!("{}.mean_fdp", entries[2].label())];
    let secs = elapsed.as_secs_f64();

    // Brute-force step-up BH over every pair on random instances.
    let mut rng = parallel::rng(5);
    let mut mismatches = 0;
    for i in 0..100 {
        let p = rng.random_range(10..=60);
        let n = rng.random_range(6..=p.min(25));
        let a = rng.random_range(2..=p.min(20));
        let phi1 = rng.random_range(0.3..0.9);
        let alpha = rng.random_range(0.05..0.3);
        let model = simgen::build_structure(&StructureSpec::ArBlock { p, a, d: 1, phi1 }).unwrap();
        let data = simgen::sample_gaussian(&model, n, 7000 + i).unwrap();
        let u = uscore::uscores(&data).unwrap();
        let h = parsec::symmetrize(&parsec::parsec_scalable(&u).unwrap(), SymmetrizeMode::UpperTriangle);
        let got: BTreeSet<(usize, usize)> = inference::fdr_screen(&h, &ErrorControlSpec::FdrBh { alpha }, n)
            .unwrap()
            .edges
            .pairs()
            .collect();
        let mut tests: Vec<(f64, (usize, usize))> = Vec::new();
        for j in 0..p {
            for k in j + 1..p {
                tests.push((inference::pvalue(h.get(j, k).abs(), n).unwrap(), (j, k)));
            }
        }
        tests.sort_by(|x, y| x.0.total_cmp(&y.0));
        let m = tests.len() as f64;
        let cut = tests
            .iter()
            .enumerate()
            .filter(|(r, t)| t.0 <= (*r as f64 + 1.0) / m * alpha)
            .map(|(r, _)| r + 1)
            .max()
            .unwrap_or(0);
        let want: BTreeSet<(usize, usize)> = tests[..cut].iter().map(|t| t.1).collect();
        if got != want {
            mismatches += 1;
        }
    }

    vec![
        (
            "3 FWER calibration",
            outcome(
                (0.02..=0.10).contains(&fwer) && in_time,
                format!("fraction with >= 1 discovery = {fwer:.3} (target [0.02, 0.10]), run {secs:.1}s single-threaded"),
            ),
        ),
        (
            "4 k-FWER calibration",
            outcome(
                (0.02..=0.11).contains(&kfwer) && in_time,
                format!("k = {k}, fraction with > k discoveries = {kfwer:.3} (target [0.02, 0.11])"),
            ),
        ),
        (
            "5 FDR-BH calibration",
            outcome(
                (0.02..=0.10).contains(&fdr) && mismatches == 0 && in_time,
                format!("mean FDP = {fdr:.3} (target [0.02, 0.10]), {mismatches}/100 step-up mismatches"),
            ),
        ),
    ]
}

fn phase_transition() -> Outcome {
    let grid = experiments::uniform_grid(50);
    let (gaps, elapsed) = timed(|| {
        [50, 100, 500]
            .iter()
            .map(|&p| {
                let r = experiments::phase_transition_curve(10, p, 200, &grid, 6).unwrap();
                (p, r.summary["max_abs_gap"])
            })
            .collect::<Vec<_>>()
    });
    let worst = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let listing: Vec<String> = gaps.iter().map(|(p, g)| format!("p={p}: {g:.4}")).collect();
    outcome(
        worst < 0.05 && elapsed < Duration::from_secs(300),
        format!("max gap {} (< 0.05), {:.1}s", listing.join(", "), elapsed.as_secs_f64()),
    )
}

fn median_auc(report: &experiments::ExperimentReport, method: Method) -> f64 {
    let suffix = format!("|{method}.median_auc");
    let hits: Vec<f64> = report.summary.iter().filter(|(k, _)| k.ends_with(&suffix)).map(|(_, v)| *v).collect();
    assert_eq!(hits.len(), 1, "expected a single {suffix} entry");
    hits[0]
}

fn power() -> Vec<(&'static str, Outcome)> {
    let methods = [Method::ParsecScalable, Method::PcsHub];
    let ar = SweepSetting {
        structure: StructureSpec::ArBlock { p: 1000, a: 50, d: 1, phi1: 0.7 },
        n: 20,
        dist: SampleDist::Gaussian,
    };
    let block = SweepSetting {
        structure: StructureSpec::Block { p: 1000, a: 50, rho: 0.7 },
        n: 100,
        dist: SampleDist::Gaussian,
    };
    let heavy = SweepSetting { dist: SampleDist::StudentT { nu: 3.0 }, ..ar };

    let ((ar_r, block_r), elapsed) = timed(|| {
        (
            experiments::auc_sweep(&[ar], 50, &methods, 7).unwrap(),
            experiments::auc_sweep(&[block], 50, &methods, 7).unwrap(),
        )
    });
    let ar_auc = median_auc(&ar_r, Method::ParsecScalable);
    let block_parsec = median_auc(&block_r, Method::ParsecScalable);
    let block_hub = median_auc(&block_r, Method::PcsHub);
    let heavy_r = experiments::auc_sweep(&[heavy], 50, &[Method::ParsecScalable], 8).unwrap();
    let heavy_auc = median_auc(&heavy_r, Method::ParsecScalable);
    vec![
        (
            "7 power ordering",
            outcome(
                ar_auc >= 0.98 && block_parsec - block_hub >= 0.2 && elapsed < Duration::from_secs(900),
                format!(
                    "AR(1) PARSEC AUC {ar_auc:.4} (>= 0.98); block PARSEC {block_parsec:.4} vs PCS-Hub {block_hub:.4} (gap >= 0.2), {:.1}s",
                    elapsed.as_secs_f64()
                ),
            ),
        ),
        (
            "8 heavy-tail robustness",
            outcome(heavy_auc >= 0.98, format!("t(3) AR(1) PARSEC AUC {heavy_auc:.4} (>= 0.98)")),
        ),
    ]
}

fn best_time(reps: usize, mut f: impl FnMut()) -> f64 {
    (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn complexity() -> Outcome {
    let u1 = uscore::uscores(&gaussian_data(30, 1000, 9)).unwrap();
    let u2 = uscore::uscores(&gaussian_data(30, 2000, 9)).unwrap();
    let (t1, t2) = parallel::with_threads(1, || {
        (
            best_time(5, || drop(parsec::parsec_scalable(&u1).unwrap())),
            best_time(3, || drop(parsec::parsec_scalable(&u2).unwrap())),
        )
    });
    let ratio = t2 / t1;
    let ratio_ok = (2.5..=6.0).contains(&ratio);

    let cores = std::thread::available_parallelism().map(|c| c.get()).unwrap_or(1);
    let u4 = uscore::uscores(&gaussian_data(30, 4000, 9)).unwrap();
    let single = parallel::with_threads(1, || best_time(2, || drop(parsec::parsec_scalable(&u4).unwrap())));
    let multi = parallel::with_threads(4, || best_time(2, || drop(parsec::parsec_scalable(&u4).unwrap())));
    let speedup = single / multi;
    let speed_ok = speedup >= 2.0;
    outcome(
        ratio_ok && speed_ok,
        format!(
            "time ratio p=2000/p=1000 = {ratio:.2} (target [2.5, 6]); 4-thread speedup at p=4000 = {speedup:.2} (target >= 2) on {cores} available core(s)"
        ),
    )
}

fn spherical_cap() -> Outcome {
    let cap4 = inference::SphericalCapParams::new(4).unwrap();
    let worst4 = (0..1000)
        .map(|i| {
            let rho = i as f64 / 999.0;
            (cap4.p0(rho) - (1.0 - rho)).abs()
        })
        .fold(0.0, f64::max);
    let mut endpoint_bad = 0;
    for n in 3..=50 {
        let cap = inference::SphericalCapParams::new(n).unwrap();
        if cap.p0(0.0) != 1.0 || cap.p0(1.0) != 0.0 {
            endpoint_bad += 1;
        }
    }
    outcome(
        worst4 < 1e-12 && endpoint_bad == 0,
        format!("max |P0(rho,4) - (1-rho)| = {worst4:.2e}; {endpoint_bad} endpoint failures for n in 3..=50"),
    )
}

fn random_covariance(p: usize, n: usize, rng: &mut parallel::SimRng) -> DMatrix<f64> {
    let x = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    DataMatrix::new(x, None).unwrap().sample_covariance()
}

fn estimation_fixed_points() -> Outcome {
    let mut rng = parallel::rng(11);
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for _ in 0..20 {
        let p = rng.random_range(2..=10);
        let s = random_covariance(p, p + 10, &mut rng);
        let mut pairs = Vec::new();
        for i in 0..p {
            for j in i + 1..p {
                if rng.random_bool(0.4) {
                    pairs.push((i, j));
                }
            }
        }
        let sparse = EdgeStructure::from_pairs(p, pairs).unwrap();
        let full = EdgeStructure::full(p);

        let c = estimation::concord_estimate(&s, &sparse, 1e-12, 100_000).unwrap();
        worst = worst.max(estimation::concord_residual(&s, &sparse, &c.omega_hat));

        // Full structure: the Gaussian estimate is the plain inverse.
        let g = estimation::gaussian_estimate(&s, &full, 1e-12, 100_000).unwrap();
        let direct = s.clone().try_inverse().unwrap();
        worst = worst.max(max_diff(&g.omega_hat, &direct));

        // Sparse structure: Sigma matches S on the pattern, Omega vanishes off it.
        let g = estimation::gaussian_estimate(&s, &sparse, 1e-12, 100_000).unwrap();
        for i in 0..p {
            for j in 0..p {
                if i == j || sparse.is_active(i, j) {
                    worst = worst.max((g.sigma_hat[(i, j)] - s[(i, j)]).abs());
                } else {
                    worst = worst.max(g.omega_hat[(i, j)].abs());
                }
            }
        }
        unconverged += [c.converged, g.converged].iter().filter(|ok| !**ok).count();
    }

    let omega = random_covariance(6, 20, &mut rng).try_inverse().unwrap();
    let w = estimation::mvp_weights(&omega).unwrap();
    let sum_err = (w.iter().sum::<f64>() - 1.0).abs();
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 2.0, 1.0, 4.0]));
    let wd = estimation::mvp_weights(&diag).unwrap();
    let diag_err = wd
        .iter()
        .zip([0.5, 2.0, 1.0, 4.0])
        .map(|(w, d)| (w - d / 7.5).abs())
        .fold(0.0, f64::max);
    outcome(
        worst < 1e-6 && unconverged == 0 && sum_err < 1e-12 && diag_err < 1e-12,
        format!(
            "max oracle residual {worst:.2e}, {unconverged} unconverged fits; mvp sum error {sum_err:.1e}, diagonal error {diag_err:.1e}"
        ),
    )
}

fn low_memory_smoke() -> Outcome {
    let (n, p) = (30, 20_000);
    let (result, elapsed) = timed(|| {
        let u = uscore::uscores(&gaussian_data(n, p, 12)).unwrap();
        let mut cfg = ScreenConfig::new(Method::ParsecScalable, ErrorControlSpec::Fwer { alpha: 0.05 });
        cfg.low_memory = true;
        screen::screen_low_memory(&u, &cfg).unwrap()
    });
    outcome(
        elapsed < Duration::from_secs(600),
        format!(
            "n={n}, p={p}: level {:.4}, {} discoveries in {:.1}s (< 600s)",
            result.level,
            result.edges.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(&'static str, Outcome)> = Vec::new();
    let mut emit = |name: &'static str, o: Outcome| {
        let mut out = std::io::stdout().lock();
        writeln!(out, "ACCEPTANCE {} {}: {}", if o.pass { "PASS" } else { "FAIL" }, name, o.detail).unwrap();
        out.flush().unwrap();
        results.push((name, o));
    };
    emit("1 algorithm equivalence", equivalence());
    emit("2 null p-value law", null_pvalue_law());
    for (name, o) in calibration() {
        emit(name, o);
    }
    emit("6 phase transition", phase_transition());
    for (name, o) in power() {
        emit(name, o);
    }
    emit("9 complexity", complexity());
    emit("10 spherical cap", spherical_cap());
    emit("11 estimation fixed points", estimation_fixed_points());
    emit("12 low-memory smoke", low_memory_smoke());

    let failed: Vec<&str> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!("acceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join("; "));
        std::process::exit(1);
    }
}
