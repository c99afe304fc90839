use nalgebra::DMatrix;
use parsec_core::experiments::{self, SampleDist};
use parsec_core::inference::ErrorControlSpec;
use parsec_core::io::{self, DataMatrix, Edge, EdgeSet};
use parsec_core::parallel;
use parsec_core::parsec::{parsec_base, parsec_scalable, SymmetrizeMode};
use parsec_core::pcs_hub::pcs_hub_matrix;
use parsec_core::screen::{self, Method, ScreenConfig};
use parsec_core::simgen::{self, StructureSpec};
use parsec_core::uscore::{self, OrthonormalBasis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_data(n: usize, p: usize, seed: u64) -> DataMatrix {
    let mut rng = parallel::rng(seed);
    let values = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    DataMatrix::new(values, None).unwrap()
}

fn max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn edge_files_round_trip(raw in prop::collection::btree_map((0usize..500, 0usize..500), (-1.0f64..1.0, 0.0f64..1.0), 1..100)) {
        let edges: Vec<Edge> = raw
            .into_iter()
            .filter(|((a, b), _)| a != b)
            .map(|((a, b), (s, pv))| Edge::new(a, b, s, pv))
            .collect();
        prop_assume!(!edges.is_empty());
        let set = match EdgeSet::new(edges) {
            Ok(s) => s,
            // Both orientations of one pair drawn: duplicates are rejected.
            Err(_) => return Ok(()),
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        io::write_edges(&set, f.path()).unwrap();
        let back = io::read_edges(f.path()).unwrap();
        prop_assert_eq!(back, set);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leave_one_out_and_rank_one_agree(n in 4usize..12, extra in 0usize..40, seed in any::<u64>()) {
        let u = uscore::uscores(&gaussian_data(n, n + extra, seed)).unwrap();
        let base = parsec_base(&u).unwrap();
        let fast = parsec_scalable(&u).unwrap();
        prop_assert!(max_diff(base.values(), fast.values()) < 1e-8);
    }
}

#[test]
fn uscore_inner_products_are_sample_correlations() {
    let data = gaussian_data(9, 6, 17);
    let u = uscore::uscores(&data).unwrap();
    let x = data.values();
    for j in 0..6 {
        for k in 0..6 {
            let (mj, mk) = (x.column(j).mean(), x.column(k).mean());
            let cjk: f64 = (0..9).map(|r| (x[(r, j)] - mj) * (x[(r, k)] - mk)).sum();
            let cjj: f64 = (0..9).map(|r| (x[(r, j)] - mj).powi(2)).sum();
            let ckk: f64 = (0..9).map(|r| (x[(r, k)] - mk).powi(2)).sum();
            let dot: f64 = u.column(j).iter().zip(u.column(k)).map(|(a, b)| a * b).sum();
            assert!((dot - cjk / (cjj * ckk).sqrt()).abs() < 1e-12);
        }
    }
}

#[test]
fn estimates_do_not_depend_on_the_basis() {
    let n = 8;
    let data = gaussian_data(n, 20, 5);
    // Random orthonormal basis of the complement of the ones vector via QR.
    let mut rng = parallel::rng(99);
    let mut m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    m.column_mut(0).fill(1.0);
    let q = m.qr().q();
    let basis = OrthonormalBasis::from_matrix(q.columns(1, n - 1).into_owned()).unwrap();
    let z = uscore::standardize(&data).unwrap();
    let rotated = uscore::compute_uscores(&z, &basis).unwrap();
    let helmert = uscore::uscores(&data).unwrap();
    let a = parsec_scalable(&rotated).unwrap();
    let b = parsec_scalable(&helmert).unwrap();
    assert!(max_diff(a.values(), b.values()) < 1e-9);
    let a = pcs_hub_matrix(&rotated).unwrap();
    let b = pcs_hub_matrix(&helmert).unwrap();
    assert!(max_diff(a.values(), b.values()) < 1e-9);
}

#[test]
fn low_memory_screening_matches_the_dense_path() {
    let model = simgen::build_structure(&StructureSpec::ArBlock { p: 150, a: 30, d: 1, phi1: 0.7 }).unwrap();
    let data = simgen::sample_gaussian(&model, 25, 4).unwrap();
    let u = uscore::uscores(&data).unwrap();
    let dense = screen::estimate_matrix(&u, Method::ParsecScalable, SymmetrizeMode::UpperTriangle).unwrap();
    for control in [
        ErrorControlSpec::Fwer { alpha: 0.05 },
        ErrorControlSpec::KFwer { alpha: 0.05, k: 20 },
        ErrorControlSpec::FdrBh { alpha: 0.1 },
        ErrorControlSpec::FdrBy { alpha: 0.1 },
        ErrorControlSpec::PFdr { alpha: 0.1 },
        ErrorControlSpec::RawLevel { rho: 0.45 },
    ] {
        let cfg = ScreenConfig::new(Method::ParsecScalable, control);
        let a = screen::screen_estimate(&dense, 25, &cfg).unwrap();
        let b = screen::screen_low_memory(&u, &cfg).unwrap();
        assert_eq!(a.level, b.level, "{}", control.label());
        assert_eq!(a.edges, b.edges, "{}", control.label());
        assert_eq!(a.diagnostics, b.diagnostics, "{}", control.label());
    }
}

#[test]
fn sample_covariance_converges_to_the_model() {
    for spec in [
        StructureSpec::ArBlock { p: 30, a: 12, d: 2, phi1: 0.5 },
        StructureSpec::Block { p: 30, a: 10, rho: 0.6 },
        StructureSpec::StarDisconnected { p: 30, k_stars: 3, e: 3, c: -0.35 },
    ] {
        let model = simgen::build_structure(&spec).unwrap();
        let data = simgen::sample_gaussian(&model, 100_000, 21).unwrap();
        let gap = max_diff(&data.sample_covariance(), &model.sigma());
        assert!(gap < 0.03, "{}: {gap}", spec.label());
    }
}

fn column_moments(data: &DataMatrix, j: usize) -> (f64, f64) {
    let col = data.values().column(j);
    let mean = col.mean();
    let m2 = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
    let m4 = col.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / col.len() as f64;
    (m2, m4 / (m2 * m2))
}

#[test]
fn student_t_limits() {
    let model = simgen::build_structure(&StructureSpec::Diagonal { p: 4 }).unwrap();
    let near_normal = simgen::sample_mvt(&model, 1e6, 200_000, 8).unwrap();
    let var = (0..4).map(|j| column_moments(&near_normal, j).0).sum::<f64>() / 4.0;
    assert!((var - 1.0).abs() < 0.01, "variance {var}");

    let heavy = simgen::sample_mvt(&model, 3.0, 100_000, 8).unwrap();
    let kurt = column_moments(&heavy, 0).1;
    assert!(kurt > 9.0, "kurtosis {kurt}");
}

#[test]
fn parsec_separates_edges_more_than_the_hub_baseline_on_a_long_ar_block() {
    let spec = StructureSpec::ArBlock { p: 100, a: 20, d: 10, phi1: 0.8 };
    let report = experiments::coef_distribution(
        &spec,
        10,
        SampleDist::Gaussian,
        50,
        &[Method::ParsecScalable, Method::PcsHub],
        2024,
    )
    .unwrap();
    let parsec = report.summary["parsec-scalable.median_abs_gap"];
    let hub = report.summary["pcs-hub.median_abs_gap"];
    assert!(parsec > hub, "parsec gap {parsec} vs hub gap {hub}");
}
