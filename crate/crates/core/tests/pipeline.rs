use std::f64::consts::PI;
use std::io::Write;

use gmcluster::mixture::VARIANCE_FLOOR;
use gmcluster::select::select_k;
use gmcluster::synth::MixtureSpec;
use gmcluster::{
    ami, build_m, cem_fit, gen_mixture, gmcluster, gram, read_csv_path, standardize_columns, update_m_delta,
    AmiNormalization, ClusterAssignment, ClusterConfig, CovarianceModel, CsvOptions, Error, GramMatrix, MMatrix,
    Preprocess,
};
use ndarray::Array2;

/// Standardized two-cluster sample with its Gram matrix, `M` and truth.
fn separated(seed: u64, n: usize, shift: f64) -> (GramMatrix, MMatrix, ClusterAssignment) {
    let spec = MixtureSpec::symmetric_pair(500, shift, 1.0, seed);
    let sample = gen_mixture(&spec, n).unwrap();
    let x = standardize_columns(&sample.data).unwrap().matrix;
    let g = gram(&x).unwrap();
    let m = build_m(&g);
    (g, m, sample.truth)
}

/// Single diagonal Gaussian fitted by maximum likelihood, scored directly.
fn single_gaussian_loglik(rows: &Array2<f64>) -> f64 {
    let n = rows.nrows() as f64;
    rows.columns()
        .into_iter()
        .map(|col| {
            let mean = col.sum() / n;
            let var = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(VARIANCE_FLOOR);
            col.iter()
                .map(|x| -0.5 * ((2.0 * PI).ln() + var.ln() + (x - mean).powi(2) / var))
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn one_component_fit_is_a_single_gaussian() {
    let (g, m, _) = separated(1, 20, 2.0);
    let fit = cem_fit(
        &g,
        &m,
        1,
        &ClusterAssignment::single(20),
        100,
        CovarianceModel::Diagonal,
    )
    .unwrap();
    assert!(fit.converged);
    assert_eq!(fit.iterations, 1);
    let m_delta = update_m_delta(&g, &fit.labels).unwrap();
    let want = single_gaussian_loglik(m_delta.values());
    assert!(
        (fit.loglik - want).abs() < 1e-9 * want.abs(),
        "{} vs {want}",
        fit.loglik
    );
}

#[test]
fn truth_initialization_is_stable() {
    let (g, m, truth) = separated(2, 30, 2.0);
    let fit = cem_fit(&g, &m, 2, &truth, 100, CovarianceModel::Diagonal).unwrap();
    assert!(fit.converged);
    assert_eq!(fit.iterations, 1);
    assert_eq!(fit.labels, truth);
}

#[test]
fn mislabelled_object_flips_back() {
    // An object's own slot in M holds the all-object mean, so its true
    // cluster looks tight in that column once it is removed. The flip back
    // needs within-cluster noise comparable to that offset; at much larger
    // separation the mislabel is locked in.
    let (g, m, truth) = separated(3, 60, 1.0);
    for victim in [0, 17, 59] {
        let mut labels = truth.labels().to_vec();
        labels[victim] = 3 - labels[victim];
        let init = ClusterAssignment::from_labels(&labels).unwrap();
        assert_ne!(init, truth);
        let fit = cem_fit(&g, &m, 2, &init, 100, CovarianceModel::Diagonal).unwrap();
        assert_eq!(fit.labels, truth, "object {victim}");
        assert!(fit.converged);
        // one sweep to flip the object, one to confirm nothing moves
        assert_eq!(fit.iterations, 2);
    }
}

#[test]
fn pair_clusters_are_degenerate() {
    // two objects far from the rest stay a cluster of their own, and a pair
    // always collapses in the final M-step
    let p = 200;
    let raw = Array2::from_shape_fn((12, p), |(i, j)| {
        let base = if i < 2 { 4.0 } else { -1.0 };
        base + ((i * 7919 + j * 104729) % 1000) as f64 / 1000.0
    });
    let x = standardize_columns(&gmcluster::FeatureMatrix::new(raw).unwrap())
        .unwrap()
        .matrix;
    let g = gram(&x).unwrap();
    let m = build_m(&g);
    let labels: Vec<usize> = (0..12).map(|i| if i < 2 { 1 } else { 2 }).collect();
    let init = ClusterAssignment::from_labels(&labels).unwrap();
    let fit = cem_fit(&g, &m, 2, &init, 100, CovarianceModel::Diagonal).unwrap();
    assert_eq!(fit.labels, init);
    assert!(fit.degenerate);
    assert!(fit.params.is_none());
    assert_eq!(fit.bic, f64::NEG_INFINITY);
}

#[test]
fn recovers_well_separated_pair() {
    for seed in 0..10 {
        let spec = MixtureSpec::symmetric_pair(2000, 5.0, 1.0, seed);
        let sample = gen_mixture(&spec, 40).unwrap();
        let out = gmcluster(&sample.data, &ClusterConfig::default()).unwrap();
        assert_eq!(out.k_hat, 2, "seed {seed}");
        assert_eq!(ami(&out.labels, &sample.truth, AmiNormalization::Mean).unwrap(), 1.0);
    }
}

#[test]
fn single_cluster_data_selects_one_cluster() {
    // regression baseline: K̂ = 1 for all 100 seeds
    let hits = (0..100)
        .filter(|&seed| {
            let spec = MixtureSpec::symmetric_pair(2000, 0.0, 1.0, seed);
            let sample = gen_mixture(&spec, 40).unwrap();
            gmcluster(&sample.data, &ClusterConfig::default()).unwrap().k_hat == 1
        })
        .count();
    assert_eq!(hits, 100);
}

#[test]
fn kmax_one_always_selects_one() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(300, 5.0, 1.0, 8), 20).unwrap();
    let config = ClusterConfig {
        kmax: 1,
        ..ClusterConfig::default()
    };
    let out = gmcluster(&sample.data, &config).unwrap();
    assert_eq!(out.k_hat, 1);
    assert_eq!(out.labels, ClusterAssignment::single(20));
    assert_eq!(out.bic_trace.len(), 1);
}

#[test]
fn bic_trace_covers_every_k_and_picks_the_maximum() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(400, 1.5, 1.0, 5), 25).unwrap();
    let out = gmcluster(&sample.data, &ClusterConfig::default()).unwrap();
    assert_eq!(out.kmax, 20);
    let ks: Vec<usize> = out.bic_trace.iter().map(|e| e.k).collect();
    assert_eq!(ks, (1..=20).collect::<Vec<_>>());
    let best = out
        .bic_trace
        .iter()
        .filter_map(|e| e.bic)
        .fold(f64::NEG_INFINITY, f64::max);
    let first_best = out.bic_trace.iter().find(|e| e.bic == Some(best)).unwrap().k;
    assert_eq!(out.k_hat, first_best);
    assert_eq!(select_k(&out.bic_trace), Some(out.k_hat));
    assert_eq!(out.labels.k(), out.k_hat);
    assert_eq!(out.timings.per_k_fit.len(), 20);
}

#[test]
fn kmax_is_clamped_to_n() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(50, 1.0, 1.0, 6), 5).unwrap();
    let config = ClusterConfig {
        kmax: 50,
        ..ClusterConfig::default()
    };
    let out = gmcluster(&sample.data, &config).unwrap();
    assert_eq!(out.kmax, 5);
    assert_eq!(out.bic_trace.len(), 5);
}

#[test]
fn thread_count_does_not_change_results() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(800, 1.0, 1.0, 12), 30).unwrap();
    let run = |threads| {
        let config = ClusterConfig {
            threads,
            ..ClusterConfig::default()
        };
        gmcluster(&sample.data, &config).unwrap()
    };
    let (a, b) = (run(Some(1)), run(Some(4)));
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.bic_trace, b.bic_trace);
}

#[test]
fn unstandardized_input_rejected_without_preprocessing() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(30, 1.0, 1.0, 2), 10).unwrap();
    let config = ClusterConfig {
        preprocess: Preprocess::None,
        ..ClusterConfig::default()
    };
    assert!(matches!(gmcluster(&sample.data, &config), Err(Error::NotStandardized)));
    let x = standardize_columns(&sample.data).unwrap().matrix;
    assert!(gmcluster(&x, &config).is_ok());
}

#[test]
fn csv_file_round_trip() {
    let sample = gen_mixture(&MixtureSpec::symmetric_pair(60, 4.0, 1.0, 21), 16).unwrap();
    let mut file = tempfile::NamedTempFile::new().unwrap();
    let header: Vec<String> = (1..=60).map(|j| format!("g{j}")).collect();
    writeln!(file, "id,label,{}", header.join(",")).unwrap();
    for (i, row) in sample.data.values().rows().into_iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(file, "s{i},{},{}", sample.truth.labels()[i], cells.join(",")).unwrap();
    }
    file.flush().unwrap();
    let ds = read_csv_path(file.path(), CsvOptions::default()).unwrap();
    assert_eq!(ds.ids[3], "s3");
    assert_eq!(ds.matrix.values(), sample.data.values());
    let truth = ClusterAssignment::from_keys(&ds.labels.unwrap()).unwrap();
    assert_eq!(truth, sample.truth);
    let out = gmcluster(&ds.matrix, &ClusterConfig::default()).unwrap();
    assert_eq!(ami(&out.labels, &truth, AmiNormalization::Mean).unwrap(), 1.0);
}
