use std::collections::BTreeSet;

use graphdeepar_core::batching::{random_batches, synchronized_batches};
use graphdeepar_core::dataset::{
    flag_cold_starts, make_windows, split_time, PanelDataset, SplitSpec, Timeline, TimelineKind, Window,
};
use graphdeepar_core::metrics::{compute_metrics, financial_loss};
use proptest::prelude::*;

fn panel(n: usize, t: usize, mask: Vec<bool>, seed: u64) -> PanelDataset {
    PanelDataset::new(
        (0..n).map(|i| format!("a{i}")).collect(),
        Timeline::regular(TimelineKind::Index, 1, t),
        (0..n * t).map(|k| ((k as u64 * 2654435761 + seed) % 97) as f64).collect(),
        mask,
        vec![1.0; n],
        1,
        0,
    )
    .unwrap()
}

fn masked_panel() -> impl Strategy<Value = PanelDataset> {
    (1usize..6, 1usize..30, any::<u64>()).prop_flat_map(|(n, t, seed)| {
        proptest::collection::vec(proptest::bool::weighted(0.85), n * t).prop_map(move |m| panel(n, t, m, seed))
    })
}

proptest! {
    #[test]
    fn window_count_matches_a_full_scan(data in masked_panel(), p in 1usize..6, k in 1usize..5) {
        let ws = make_windows(&data, p, k).unwrap();
        let mut expected = BTreeSet::new();
        for article in 0..data.n_articles() {
            for anchor in 0..data.n_weeks() {
                let ok = anchor + 1 >= p
                    && anchor + k < data.n_weeks()
                    && (anchor + 1 - p..=anchor + k).all(|w| data.observed(article, w));
                if ok {
                    expected.insert((article, anchor));
                }
            }
        }
        let got: BTreeSet<(usize, usize)> = ws.entries.iter().map(|w| (w.article, w.anchor)).collect();
        prop_assert_eq!(got.len(), ws.len());
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn cold_start_flags_only_clear_over_time(data in masked_panel(), min_history in 0usize..10) {
        let mut prev = flag_cold_starts(&data, 0, min_history).unwrap();
        for at in 1..=data.n_weeks() {
            let cur = flag_cold_starts(&data, at, min_history).unwrap();
            for (a, b) in prev.iter().zip(&cur) {
                prop_assert!(!( !*a && *b ), "article became cold again at week {}", at);
            }
            prev = cur;
        }
    }

    #[test]
    fn split_then_concat_restores_the_panel(n in 1usize..5, t in 5usize..40, test in 1usize..10, val in 1usize..10, seed in any::<u64>()) {
        let data = panel(n, t, vec![true; n * t], seed);
        let spec = SplitSpec { test_weeks: test, val_weeks: val };
        match split_time(&data, &spec) {
            Ok(s) => {
                let back = PanelDataset::concat_time(&[&s.train, &s.val, &s.test]).unwrap();
                prop_assert_eq!(back, data);
            }
            Err(_) => prop_assert!(t <= test + val),
        }
    }

    #[test]
    fn samplers_partition_the_windows(anchors in 1usize..12, articles in 1usize..12, batch in 1usize..20, seed in any::<u64>()) {
        let data = panel(articles, anchors + 2, vec![true; articles * (anchors + 2)], 0);
        let ws = make_windows(&data, 1, 2).unwrap();
        prop_assert_eq!(ws.len(), anchors * articles);
        let all: BTreeSet<Window> = ws.entries.iter().copied().collect();
        for batches in [synchronized_batches(&ws, batch, seed), random_batches(&ws, batch, seed)] {
            let flat: Vec<Window> = batches.iter().flatten().copied().collect();
            prop_assert_eq!(flat.len(), ws.len());
            prop_assert_eq!(flat.iter().copied().collect::<BTreeSet<_>>(), all.clone());
            prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        }
        for b in synchronized_batches(&ws, batch, seed) {
            prop_assert!(b.iter().all(|w| w.anchor == b[0].anchor));
        }
    }

    #[test]
    fn metrics_match_direct_sums(pairs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..60)) {
        let (y, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&y, &f).unwrap();
        let n = y.len() as f64;
        let mut sq = 0.0;
        let mut ab = 0.0;
        for i in 0..y.len() {
            sq += (y[i] - f[i]).powi(2);
            ab += (y[i] - f[i]).abs();
        }
        prop_assert!((m.rmse - (sq / n).sqrt()).abs() <= 1e-9);
        prop_assert!((m.mae - ab / n).abs() <= 1e-9);
        let total: f64 = y.iter().sum();
        if total > 0.0 {
            prop_assert!((m.wmape.unwrap() - ab / total).abs() <= 1e-9);
        }
        prop_assert!(m.rmse + 1e-12 >= m.mae);
    }

    #[test]
    fn wmape_ignores_a_common_scale(pairs in proptest::collection::vec((0.1f64..100.0, 0.0f64..100.0), 1..40), c in 0.01f64..100.0) {
        let (y, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let a = compute_metrics(&y, &f).unwrap().wmape.unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let fs: Vec<f64> = f.iter().map(|v| v * c).collect();
        let b = compute_metrics(&ys, &fs).unwrap().wmape.unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn financial_loss_charges_each_side(pairs in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..40), cu in 0.1f64..5.0, co in 0.1f64..5.0) {
        let (y, f): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut want = 0.0;
        for i in 0..y.len() {
            if y[i] > f[i] {
                want += cu * (y[i] - f[i]);
            } else {
                want += co * (f[i] - y[i]);
            }
        }
        prop_assert!((financial_loss(&y, &f, cu, co).unwrap() - want).abs() <= 1e-9 * want.max(1.0));
    }
}
