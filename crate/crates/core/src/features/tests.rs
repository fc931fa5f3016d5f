use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{generate_synthetic, RegimeSpec};

fn panel(n: usize, days: usize, seed: u64) -> MergedPanel {
    generate_synthetic(n, days, seed, &RegimeSpec::default())
        .unwrap()
        .to_dataset()
        .unwrap()
        .panel
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j].powi(2)).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, d) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1) as f64)
                .collect()
        })
        .collect()
}

#[test]
fn feature_set_sizes() {
    assert_eq!(feature_set("v1").unwrap(), vec!["close", "volume", "log_return"]);
    let sizes: Vec<usize> = ["v1", "v2", "v3", "v4", "v5"].iter().map(|v| feature_set(v).unwrap().len()).collect();
    assert_eq!(sizes, vec![3, 8, 10, 10, 12]);
    assert_eq!(Version::V5.input_dim(), 6);
    assert!(matches!(feature_set("v6"), Err(FeatureError::UnknownVersion(_))));
    assert_eq!("V3".parse::<Version>().unwrap().to_string(), "v3");
    assert_eq!(Version::V4.graph_kind(), GraphKind::Dynamic);
}

#[test]
fn warmup_is_max_lag_plus_lookback() {
    assert_eq!(Version::V1.warmup(LOOKBACK), 31);
    assert_eq!(Version::V2.warmup(LOOKBACK), 51);
    let p = panel(3, 120, 1);
    for (v, w) in [(Version::V1, 31), (Version::V3, 51)] {
        let pipe = FeaturePipeline::fit(&p, v, 0..80).unwrap();
        let inputs = pipe.transform(&p).unwrap();
        let names = pipe.output_names();
        assert!(matches!(build_window(&inputs, &names, w - 1, LOOKBACK), Err(FeatureError::Warmup { .. })));
        let win = build_window(&inputs, &names, w, LOOKBACK).unwrap();
        assert_eq!(win.values.shape(), &[3, 30, v.features().len()]);
        assert!(win.values.is_finite());
    }
}

#[test]
fn ema_streaming_matches_recursive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..1000).map(|_| rng.random_range(50.0..150.0)).collect();
    let streamed = ema(&p, 21);
    let alpha = 2.0 / 22.0;
    fn rec(p: &[f64], t: usize, alpha: f64) -> f64 {
        // iterative unrolling of the recursion from scratch for each t
        let mut e = p[0];
        for x in &p[1..=t] {
            e = alpha * x + (1.0 - alpha) * e;
        }
        e
    }
    for t in (0..1000).step_by(37) {
        assert!((streamed[t] - rec(&p, t, alpha)).abs() < 1e-12);
    }
}

#[test]
fn pca_matches_explicit_eigendecomposition() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // correlated 20 x 12 fixture
    let basis: Vec<Vec<f64>> = (0..12).map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let z: Vec<f64> = (0..12).map(|k| rng.random_range(-1.0..1.0) * (12 - k) as f64).collect();
            (0..12).map(|j| (0..12).map(|k| z[k] * basis[k][j]).sum()).collect()
        })
        .collect();
    let names: Vec<String> = (0..12).map(|i| format!("f{i}")).collect();
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    let pca = PcaTransform::fit(&flat, &names, 6).unwrap();
    let oracle = jacobi_eigenvalues(covariance(&rows));
    for (a, b) in pca.eigenvalues.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
    }
    // orthonormal components
    for c1 in 0..6 {
        for c2 in 0..6 {
            let dot: f64 = (0..12).map(|i| pca.components[i * 6 + c1] * pca.components[i * 6 + c2]).sum();
            assert!((dot - if c1 == c2 { 1.0 } else { 0.0 }).abs() < 1e-8);
        }
    }
    // projected covariance is diagonal with the top eigenvalues
    let projected: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let mut z = vec![0.0; 6];
            pca.project(r, &mut z);
            z
        })
        .collect();
    let pc = covariance(&projected);
    for i in 0..6 {
        for j in 0..6 {
            let expected = if i == j { oracle[i] } else { 0.0 };
            assert!((pc[i][j] - expected).abs() < 1e-8 * (1.0 + oracle[0]), "{i},{j}");
        }
    }
}

#[test]
fn v5_pipeline_projects_to_six_components() {
    let p = panel(4, 150, 2);
    let pipe = FeaturePipeline::fit(&p, Version::V5, 0..100).unwrap();
    let inputs = pipe.transform(&p).unwrap();
    assert_eq!(inputs.dim, 6);
    assert_eq!(pipe.output_names().len(), 6);
    let w = build_window(&inputs, &pipe.output_names(), 149, LOOKBACK).unwrap();
    assert_eq!(w.values.shape(), &[4, 30, 6]);
}

#[test]
fn shifting_the_panel_shifts_the_window() {
    let p = panel(3, 120, 5);
    let pipe = FeaturePipeline::fit(&p, Version::V1, 0..90).unwrap();
    let names = pipe.output_names();
    let full = pipe.transform(&p).unwrap();
    let mut shifted = p.clone();
    shifted.calendar.remove(0);
    shifted.bars.iter_mut().for_each(|b| {
        b.remove(0);
    });
    shifted.sentiments.iter_mut().for_each(|s| {
        s.remove(0);
    });
    let moved = pipe.transform(&shifted).unwrap();
    for t in 40..119 {
        let a = build_window(&full, &names, t + 1, LOOKBACK).unwrap();
        let b = build_window(&moved, &names, t, LOOKBACK).unwrap();
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn feature_dump_has_header_and_rows() {
    let p = panel(2, 100, 4);
    let frame = FeatureFrame::compute(&p, &Version::V2.features()).unwrap();
    let mut buf = Vec::new();
    frame.write_csv(&p, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("date,ticker,close,volume,log_return,ann_ret_1w"));
    assert_eq!(text.lines().count(), 1 + 2 * 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn features_are_causal(seed in 0u64..1000, cut in 60usize..140) {
        let p = panel(3, 140, seed);
        for v in [Version::V3, Version::V5] {
            let pipe = FeaturePipeline::fit(&p, v, 0..55).unwrap();
            let full = pipe.transform(&p).unwrap();
            let trunc = pipe.transform(&p.truncated(cut)).unwrap();
            let w = full.n_assets * full.dim;
            prop_assert_eq!(&full.data[..cut * w].iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            &trunc.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn windows_are_finite(seed in 0u64..1000) {
        let p = panel(3, 110, seed);
        let pipe = FeaturePipeline::fit(&p, Version::V4, 0..70).unwrap();
        let inputs = pipe.transform(&p).unwrap();
        for t in 51..110 {
            prop_assert!(build_window(&inputs, &pipe.output_names(), t, LOOKBACK).unwrap().values.is_finite());
        }
    }
}
