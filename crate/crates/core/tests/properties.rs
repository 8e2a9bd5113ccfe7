use film_core::data::{split, Scaler, SplitSpec, TimeSeriesTable};
use film_core::eval::{ks_statistic, ks_threshold};
use film_core::legendre::Lpu;
use film_core::model::{revin_denormalize, revin_normalize, RevinAffine};
use film_core::spectral::{bin_count, irfft_time, param_count, rfft_time, SpectralWeights};
use ndarray::Array2;
use proptest::prelude::*;

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ks_is_symmetric_and_bounded(a in sample(), b in sample()) {
        let d = ks_statistic(&a, &b).unwrap();
        prop_assert_eq!(d, ks_statistic(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(ks_statistic(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn ks_ignores_monotone_maps(a in sample(), b in sample(), k in 0.1f64..10.0, c in -5.0f64..5.0) {
        let f = |v: &f64| (k * v + c).tanh() + k * v;
        let fa: Vec<f64> = a.iter().map(f).collect();
        let fb: Vec<f64> = b.iter().map(f).collect();
        prop_assert!((ks_statistic(&a, &b).unwrap() - ks_statistic(&fa, &fb).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ks_threshold_shrinks_with_samples(n in 1usize..500, m in 1usize..500) {
        let t = ks_threshold(0.05, n, m).unwrap();
        prop_assert!(ks_threshold(0.05, n + 1, m).unwrap() < t);
        prop_assert!(ks_threshold(0.01, n, m).unwrap() > t);
    }

    #[test]
    fn rfft_round_trip(len in 1usize..70, cols in 1usize..3, seed in 0u64..1000) {
        let x = Array2::from_shape_fn((len, cols), |(i, j)| ((i * 31 + j * 7) as f64 + seed as f64).sin());
        let f = rfft_time(x.view()).unwrap();
        prop_assert_eq!(f.bins().nrows(), bin_count(len));
        let back = irfft_time(&f, len).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn scaler_inverse_undoes_transform(vals in prop::collection::vec(-1e4f64..1e4, 4..40)) {
        let x = Array2::from_shape_vec((vals.len() / 2, 2), vals[..vals.len() / 2 * 2].to_vec()).unwrap();
        let s = Scaler::fit(x.view()).unwrap();
        let back = s.inverse(s.transform(x.view()).view());
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        prop_assert_eq!(Scaler::from_text(&s.to_text()).unwrap(), s);
    }

    #[test]
    fn revin_round_trip(vals in prop::collection::vec(-50f64..50.0, 8..40), g in 0.2f64..3.0, b in -2f64..2.0) {
        let x = Array2::from_shape_vec((vals.len(), 1), vals).unwrap();
        let mut affine = RevinAffine::identity(1);
        affine.gamma.fill(g);
        affine.beta.fill(b);
        let (z, stats) = revin_normalize(x.view(), &affine, 1e-5).unwrap();
        let back = revin_denormalize(z.view(), &stats, &affine).unwrap();
        for (a, c) in back.iter().zip(x.iter()) {
            prop_assert!((a - c).abs() < 1e-9 * (1.0 + c.abs()));
        }
    }

    #[test]
    fn split_partitions_in_order(len in 10usize..3000) {
        let t = TimeSeriesTable::from_series("v", &(0..len).map(|i| i as f64).collect::<Vec<_>>()).unwrap();
        let (a, b, c) = split(&t, &SplitSpec::default()).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), len);
        prop_assert!(a.len() > 0 && b.len() > 0 && c.len() > 0);
        prop_assert_eq!(b.values[[0, 0]], a.len() as f64);
        prop_assert_eq!(c.values[[0, 0]], (a.len() + b.len()) as f64);
    }

    #[test]
    fn low_rank_count_formula(n in 1usize..64, k in 1usize..8, m in 1usize..16) {
        let w = SpectralWeights::zeros(m, n, Some(k));
        let (count, ratio) = param_count(&w);
        prop_assert_eq!(count, 2 * n * k + k * k * m);
        prop_assert!((ratio - count as f64 / (m * n * n) as f64).abs() < 1e-15);
    }
}

#[test]
fn reconstruction_error_falls_with_order() {
    let signal: Vec<f64> = (0..512).map(|i| (i as f64 / 40.0).sin() + 0.3 * (i as f64 / 9.0).cos()).collect();
    let errs: Vec<f64> = [8, 32, 128]
        .iter()
        .map(|&n| {
            let back = Lpu::new(n, signal.len()).unwrap().round_trip(&signal).unwrap();
            film_core::legendre::relative_l2(&back.to_vec(), &signal)
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}
