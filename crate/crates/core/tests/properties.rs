use h2e::envs::AugmentTier;
use h2e::identifier::{adjusted_logits, irm_penalty, ConfidenceTable, Identifier, WMode};
use h2e::nn::{argmax, softmax, Matrix, Network};
use h2e::pipeline::{mix_pair, theta_weights};
use h2e::rng;
use h2e::synthdata::longtail_counts;
use h2e::warmup::initial_weights;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-20.0f64..20.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

fn logits_and_labels() -> impl Strategy<Value = (Matrix, Vec<usize>)> {
    (1usize..6, 2usize..6).prop_flat_map(|(b, c)| (matrix(b, c), prop::collection::vec(0..c, b)))
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(z in (1usize..5, 1usize..7).prop_flat_map(|(b, c)| matrix(b, c))) {
        let p = softmax(&z);
        for row in p.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(z in matrix(3, 4), shift in -50.0f64..50.0) {
        let mut s = z.clone();
        s.as_mut_slice().iter_mut().for_each(|v| *v += shift);
        let (a, b) = (softmax(&z), softmax(&s));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_permutation_equivariant(seed in any::<u64>(), perm_seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut r = rng::stream(seed, "perm");
        let net = Network::mlp(4, &[5, 3], 3, &mut r).unwrap();
        let x = Matrix::from_vec(6, 4, (0..24).map(|i| ((i * 7919 + seed as usize) % 97) as f64 / 10.0 - 4.0).collect());
        let mut order: Vec<usize> = (0..6).collect();
        order.shuffle(&mut rng::stream(perm_seed, "order"));
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x.select_rows(&order)).unwrap();
        for (i, &src) in order.iter().enumerate() {
            prop_assert_eq!(b.row(i), a.row(src));
        }
    }

    #[test]
    fn uniform_prior_scalar_w_keeps_argmax((z, _) in logits_and_labels(), w in -5.0f64..5.0) {
        let c = z.cols();
        let prior = vec![1.0 / c as f64; c];
        let adj = adjusted_logits(&z, &[w], &prior).unwrap();
        for r in 0..z.rows() {
            prop_assert_eq!(argmax(adj.row(r)), argmax(z.row(r)));
        }
    }

    #[test]
    fn zero_w_leaves_logits_unchanged((z, _) in logits_and_labels()) {
        let c = z.cols();
        let prior: Vec<f64> = (1..=c).map(|k| k as f64 / (c * (c + 1) / 2) as f64).collect();
        prop_assert_eq!(adjusted_logits(&z, &vec![0.0; c], &prior).unwrap(), z);
    }

    #[test]
    fn penalty_ignores_batch_order((z, y) in logits_and_labels(), rot in 0usize..6) {
        let b = y.len();
        let order: Vec<usize> = (0..b).map(|i| (i + rot) % b).collect();
        let ys: Vec<usize> = order.iter().map(|&i| y[i]).collect();
        let (p, _) = irm_penalty(&z, &y).unwrap();
        let (q, _) = irm_penalty(&z.select_rows(&order), &ys).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * p.max(1.0));
    }

    #[test]
    fn confidences_ignore_row_shifts((z, y) in logits_and_labels(), shift in -30.0f64..30.0) {
        let c = z.cols();
        let prior = vec![1.0 / c as f64; c];
        let id = Identifier::new(prior, WMode::Vector, 1.0).unwrap();
        let mut s = z.clone();
        s.as_mut_slice().iter_mut().for_each(|v| *v += shift);
        let (a, b) = (id.probabilities(&z).unwrap(), id.probabilities(&s).unwrap());
        for (r, &label) in y.iter().enumerate() {
            prop_assert!((a.get(r, label) - b.get(r, label)).abs() < 1e-9);
        }
    }

    #[test]
    fn mixup_stays_on_segment(
        xi in prop::collection::vec(-5.0f64..5.0, 4),
        xj in prop::collection::vec(-5.0f64..5.0, 4),
        ci in 0.0f64..1.0,
        cj in 0.0f64..1.0,
        yi in 0usize..3,
        yj in 0usize..3,
    ) {
        let p = mix_pair(0, 1, &xi, &xj, yi, yj, ci, cj, 3);
        prop_assert!(p.delta > 0.0 && p.delta < 1.0);
        for k in 0..4 {
            prop_assert_eq!(p.features[k], p.delta * xi[k] + (1.0 - p.delta) * xj[k]);
        }
        prop_assert!((p.soft_label.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.soft_label.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn theta_lies_in_open_unit_interval((z, y) in logits_and_labels(), floor in 0.01f64..0.5) {
        let theta = theta_weights(&softmax(&z), &y, floor);
        prop_assert!(theta.iter().all(|t| *t > 0.0 && *t <= 1.0));
    }

    #[test]
    fn weights_are_monotone_in_density(d in prop::collection::vec(-1.0f64..1.0, 1..20), w_min in 0.0f64..1.0) {
        let w = initial_weights(&d, w_min);
        for i in 0..d.len() {
            prop_assert!(w[i] >= w_min - 1e-12 && w[i] <= 1.0 + 1e-12);
            for j in 0..d.len() {
                if d[i] < d[j] {
                    prop_assert!(w[i] <= w[j]);
                }
            }
        }
    }

    #[test]
    fn longtail_counts_decrease_from_n_max(classes in 2usize..30, n_max in 50usize..2000, eta in 1.0f64..40.0) {
        let counts = longtail_counts(classes, n_max, eta).unwrap();
        prop_assert_eq!(counts[0], n_max);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
        let exact_min = n_max as f64 / eta;
        prop_assert!((counts[classes - 1] as f64 - exact_min).abs() <= 0.5 + 1e-9);
    }

    #[test]
    fn flags_follow_confidence_order(conf in prop::collection::vec(0.0f64..1.0, 1..30), budget_frac in 0.0f64..1.0) {
        let ids: Vec<usize> = (0..conf.len()).collect();
        let budget = (budget_frac * conf.len() as f64) as usize;
        let flags = ConfidenceTable::from_confidences(&ids, &conf).rank_noise(budget).unwrap().flags();
        prop_assert_eq!(flags.iter().filter(|f| **f).count(), budget);
        for i in 0..conf.len() {
            for j in 0..conf.len() {
                if flags[i] && !flags[j] {
                    prop_assert!(conf[i] <= conf[j]);
                }
            }
        }
    }

    #[test]
    fn off_augmentation_is_identity(x in prop::collection::vec(-10.0f64..10.0, 1..10), seed in any::<u64>()) {
        let out = AugmentTier::off().augment(&x, &mut rng::stream(seed, "aug"));
        prop_assert_eq!(out, x);
    }
}
