use diffqec::analysis::metrics::Z95;
use diffqec::analysis::{integrated_gradients, map_attributions_to_qubits, postselect, top_k, wilson_interval};
use diffqec::dataset::simulate_shots;
use diffqec::nn::{DenoiserConfig, DenoiserParams};
use diffqec::rng::stream_rng;
use diffqec::{BitVector, NoiseModel, ObservableMode, SurfaceCode};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn attributions_are_complete_at_fine_resolution() {
    let code = SurfaceCode::rotated(3).unwrap();
    let config = DenoiserConfig {
        d: 3,
        label_len: 1,
        steps: 8,
        hidden: 16,
        layers: 2,
        conv_channels: [4, 8],
        time_dim: 8,
    };
    let mut p = DenoiserParams::init(config, &mut stream_rng(1, 0)).unwrap();
    let mut rng = stream_rng(1, 1);
    for t in &mut p.tensors {
        for v in &mut t.data {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    p.assume_fitted();
    let shots = simulate_shots(&code, &NoiseModel::phenomenological(0.1, 0.05), 2, ObservableMode::Single, 2, 0..20).unwrap();
    for s in &shots {
        let a = integrated_gradients(&p, &code, &s.history, 256).unwrap();
        assert_eq!(a.detectors.len(), 2 * 8);
        assert!(a.complete, "residual {} for delta {}", a.residual, a.f_input - a.f_baseline);
        // silent detectors receive no credit
        for (v, bit) in a.detectors.iter().zip(s.history.detector_events(&code).iter()) {
            if !bit {
                assert_eq!(*v, 0.0);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn postselection_keeps_the_most_confident_shots(
        rows in prop::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..1.0), 1..200),
        rho in 0.0f64..0.99,
    ) {
        let preds: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bools([r.0])).collect();
        let labels: Vec<BitVector> = rows.iter().map(|r| BitVector::from_bools([r.1])).collect();
        let conf: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let n = rows.len();
        let drop = (rho * n as f64).floor() as usize;
        match postselect("x", &preds, &labels, &conf, rho) {
            Ok(rep) => {
                prop_assert_eq!(rep.report.n_shots, n - drop);
                prop_assert!((rep.retained_fraction - (n - drop) as f64 / n as f64).abs() < 1e-12);
                prop_assert!(rep.report.ci_low <= rep.report.ler && rep.report.ler <= rep.report.ci_high);
            }
            Err(_) => prop_assert_eq!(drop, n),
        }
    }

    #[test]
    fn qubit_scores_are_normalized(attr in prop::collection::vec(-5.0f64..5.0, 8..=8), rounds in 1usize..4) {
        let code = SurfaceCode::rotated(3).unwrap();
        let all: Vec<f64> = (0..rounds).flat_map(|k| attr.iter().map(move |a| a * (k + 1) as f64)).collect();
        let scores = map_attributions_to_qubits(&all, &code).unwrap();
        prop_assert_eq!(scores.len(), 9);
        prop_assert!(scores.iter().all(|s| (0.0..=1.0).contains(s)));
        if attr.iter().any(|a| *a != 0.0) {
            prop_assert!(scores.iter().any(|s| (*s - 1.0).abs() < 1e-12));
        }
        let top = top_k(&scores, 2);
        prop_assert!(top.iter().all(|&i| scores[i] >= scores.iter().copied().fold(f64::INFINITY, f64::min)));
    }

    #[test]
    fn wilson_interval_brackets_the_estimate(k in 0usize..500, extra in 0usize..500) {
        let n = k + extra.max(1);
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
    }
}
