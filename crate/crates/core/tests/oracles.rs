mod common;

use common::*;
use h2e::envs::{AugmentTier, Environment, SamplerKind};
use h2e::nn::{balanced_softmax_loss, cross_entropy, Matrix, Network};
use h2e::rng;
use h2e::synthdata::{build_bundle, longtail_counts, BundleParams, ForgeParams, NoiseKind};
use h2e::warmup::{class_density, initial_weights};
use rand::Rng as _;

#[test]
fn forward_matches_nested_loop_oracle() {
    let mut r = rng::stream(3, "forward-oracle");
    for _ in 0..50 {
        let d = r.random_range(1..=10);
        let c = r.random_range(2..=6);
        let hidden: Vec<usize> = (0..r.random_range(0..=3)).map(|_| r.random_range(1..=8)).collect();
        let net = Network::mlp(d, &hidden, c, &mut r).unwrap();
        let x = random_matrix(&mut r, 7, d, 3.0);
        let got = net.forward(&x).unwrap();
        let (want, _) = oracle_forward(&net, &x);
        for (b, row) in want.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                assert!((got.get(b, k) - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn density_matches_pairwise_cosine_oracle() {
    let mut r = rng::stream(4, "density-oracle");
    for _ in 0..50 {
        let n = r.random_range(1..=12);
        let d = r.random_range(1..=6);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect())
            .collect();
        let (m, dens) = class_density(&Matrix::from_rows(&rows));
        let oracle = brute_cosine(&rows);
        for i in 0..n {
            for (j, want) in oracle[i].iter().enumerate() {
                assert!((m.get(i, j) - want).abs() <= 1e-9);
            }
            let want: f64 = oracle[i].iter().sum::<f64>() / n as f64;
            assert!((dens[i] - want).abs() <= 1e-9);
        }
        let w = initial_weights(&dens, 0.2);
        for i in 0..n {
            for j in 0..n {
                if dens[i] < dens[j] {
                    assert!(w[i] <= w[j]);
                }
            }
        }
    }
}

#[test]
fn density_is_scale_invariant() {
    let mut r = rng::stream(5, "density-scale");
    let rows: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let (a, _) = class_density(&Matrix::from_rows(&rows));
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|v| v * (0.1 + i as f64 * 3.0)).collect())
        .collect();
    let (b, _) = class_density(&Matrix::from_rows(&scaled));
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn balanced_softmax_equals_ce_under_uniform_prior() {
    let mut r = rng::stream(6, "bs-uniform");
    for _ in 0..20 {
        let c = r.random_range(2..=6);
        let z = random_matrix(&mut r, 5, c, 4.0);
        let y: Vec<usize> = (0..5).map(|_| r.random_range(0..c)).collect();
        let w: Vec<f64> = (0..5).map(|_| r.random_range(0.1..1.0)).collect();
        let prior = vec![1.0 / c as f64; c];
        let (a, ga) = balanced_softmax_loss(&z, &y, &prior, &w).unwrap();
        let (b, gb) = cross_entropy(&z, &y, &w).unwrap();
        assert!((a - b).abs() <= 1e-12);
        for (p, q) in ga.as_slice().iter().zip(gb.as_slice()) {
            assert!((p - q).abs() <= 1e-12);
        }
    }
}

#[test]
fn forge_counts_follow_decay_formula() {
    let mut r = rng::stream(7, "forge-configs");
    for _ in 0..20 {
        let classes = r.random_range(2..=8);
        let n_max = r.random_range(20..=300);
        let imbalance = r.random_range(1.0..(n_max as f64).min(50.0));
        let noise_rate = r.random_range(0.0..0.6);
        let params = BundleParams {
            n_max,
            imbalance,
            noise_rate,
            blue_fraction: 1.0,
            test_per_class: 5,
            seed: r.random(),
        };
        let forge = ForgeParams {
            classes,
            contexts: 3,
            dim: classes + 4,
            ..ForgeParams::default()
        };
        let (_, bundle) = build_bundle(&forge, &params).unwrap();
        let want: Vec<usize> = (0..classes)
            .map(|c| {
                let e = -(c as f64) / (classes - 1) as f64;
                (n_max as f64 * imbalance.powf(e)).round() as usize
            })
            .collect();
        assert_eq!(longtail_counts(classes, n_max, imbalance).unwrap(), want);
        let mut drawn = vec![0usize; classes];
        for rec in &bundle.train {
            drawn[rec.clean_label.unwrap()] += 1;
        }
        assert_eq!(drawn, want);
        let blue = bundle.injected_by_class(NoiseKind::Blue);
        for c in 0..classes {
            assert_eq!(blue[c], (noise_rate * want[c] as f64).floor() as usize);
        }
    }
}

#[test]
fn sampler_weights_for_skewed_counts() {
    let pools = vec![(0..90).collect(), (90..99).collect(), vec![99]];
    let weights = |kind| {
        Environment::new(kind, AugmentTier::off(), pools.clone())
            .unwrap()
            .class_weights()
            .to_vec()
    };
    let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-5);
    assert!(close(&weights(SamplerKind::InstanceBalanced), &[0.9, 0.09, 0.01]));
    assert!(close(&weights(SamplerKind::ClassBalanced), &[1.0 / 3.0; 3]));
    assert!(close(&weights(SamplerKind::ClassReversed), &[0.0099, 0.09901, 0.89109]));
}
