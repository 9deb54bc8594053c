use ndarray::Array2;
use proptest::prelude::*;

use primsep::bootstrap::{filter_by_confidence, SourceEstimate};
use primsep::confidence::{confidence_report, ConfidenceReport};
use primsep::ensemble::{embed, hard_assign, primitive_cluster};
use primsep::eval::{correlation_report, sd_sdr, si_sdr};
use primsep::primitives::{Primitive, PrimitiveConfig};
use primsep::tfr::{decode_msk1, encode_msk1, istft_samples, stft_with, Geometry, MagnitudeSpectrogram, SoftMask};

fn raster(t: usize, f: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, t * f).prop_map(move |v| Array2::from_shape_vec((t, f), v).unwrap())
}

fn small_cfg() -> PrimitiveConfig {
    PrimitiveConfig {
        twodft_patch_t: 16,
        twodft_patch_f: 16,
        ..PrimitiveConfig::default()
    }
}

fn embedding(t: usize, f: usize) -> impl Strategy<Value = Array2<f64>> {
    raster(t, f * 4, 0.0, 1.0)
}

fn to_masks(flat: &Array2<f64>, f: usize) -> Vec<SoftMask> {
    (0..4)
        .map(|d| SoftMask::new(flat.slice(ndarray::s![.., d * f..(d + 1) * f]).to_owned()).unwrap())
        .collect()
}

fn estimate(i: usize, confidence: f64) -> SourceEstimate {
    SourceEstimate {
        id: format!("o{}#{i:03}", i % 3),
        origin: format!("o{}", i % 3),
        offset_s: 0.0,
        vocals_path: "v.wav".into(),
        accompaniment_path: "a.wav".into(),
        confidence,
        report: ConfidenceReport {
            silhouette_mean: confidence,
            posterior_strength_mean: 1.0,
            confidence,
            n_sampled: 2,
            seed: 0,
            degenerate: false,
        },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn primitive_masks_are_bounded_and_deterministic(values in raster(32, 48, 0.0, 10.0)) {
        let mag = MagnitudeSpectrogram::from_raster(values).unwrap();
        let cfg = small_cfg();
        for p in Primitive::ALL {
            let a = p.run(&mag, &cfg).unwrap();
            let b = p.run(&mag, &cfg).unwrap();
            prop_assert_eq!(a.values(), b.values());
            prop_assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)), "{}", p.name());
        }
    }

    #[test]
    fn hpss_ignores_overall_level(values in raster(24, 40, 0.01, 10.0), scale in 1e-3f64..1e3) {
        let cfg = small_cfg();
        let a = Primitive::Hpss.run(&MagnitudeSpectrogram::from_raster(values.clone()).unwrap(), &cfg).unwrap();
        let b = Primitive::Hpss.run(&MagnitudeSpectrogram::from_raster(values * scale).unwrap(), &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn cluster_masks_are_complementary(flat in embedding(6, 10), beta in 0.01f64..100.0) {
        let emb = embed(&to_masks(&flat, 10), None).unwrap();
        let c = primitive_cluster(&emb, beta).unwrap();
        for (v, a) in c.vocals.values().iter().zip(c.accompaniment.values()) {
            prop_assert!((0.0..=1.0).contains(v));
            prop_assert!((v + a - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_limits(flat in embedding(6, 10)) {
        let emb = embed(&to_masks(&flat, 10), None).unwrap();
        let hard = hard_assign(&emb);
        let sharp = primitive_cluster(&emb, 1e6).unwrap();
        let flat_c = primitive_cluster(&emb, 1e-9).unwrap();
        for t in 0..6 {
            for f in 0..10 {
                let x = emb.point(t, f);
                let d0 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let d1 = x.iter().map(|v| (1.0 - v) * (1.0 - v)).sum::<f64>().sqrt();
                if (d0 - d1).abs() > 1e-4 {
                    prop_assert!((sharp.vocals.values()[[t, f]] - f64::from(hard[[t, f]])).abs() < 1e-9);
                }
                prop_assert!((flat_c.vocals.values()[[t, f]] - 0.5).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn confidence_is_a_unit_score(flat in embedding(20, 50), values in raster(20, 50, 0.0, 5.0), seed in any::<u64>()) {
        let emb = embed(&to_masks(&flat, 50), None).unwrap();
        let c = primitive_cluster(&emb, 5.0).unwrap();
        let mag = MagnitudeSpectrogram::from_raster(values).unwrap();
        let r = confidence_report(&emb, &c.assignment, &mag, 1000, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.confidence));
        prop_assert!((0.0..=1.0).contains(&r.posterior_strength_mean));
        prop_assert!((-1.0..=1.0).contains(&r.silhouette_mean));
    }

    #[test]
    fn filter_keeps_most_confident_suffix(conf in prop::collection::vec(0.0f64..1.0, 1..40), drop in 0.0f64..0.99) {
        let pool: Vec<SourceEstimate> = conf.iter().enumerate().map(|(i, &c)| estimate(i, c)).collect();
        let kept = filter_by_confidence(&pool, drop).unwrap();
        prop_assert_eq!(kept.len(), pool.len() - (drop * pool.len() as f64).floor() as usize);
        let mut sorted = conf.clone();
        sorted.sort_by(f64::total_cmp);
        let tail = &sorted[sorted.len() - kept.len()..];
        let got: Vec<f64> = kept.iter().map(|e| e.confidence).collect();
        prop_assert_eq!(got.as_slice(), tail);
    }

    #[test]
    fn sdr_relations(
        r in prop::collection::vec(-1.0f64..1.0, 64),
        noise in prop::collection::vec(-1.0f64..1.0, 64),
        gain in 0.1f64..10.0,
        scale in 1e-3f64..1e3,
    ) {
        prop_assume!(r.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let e: Vec<f64> = r.iter().zip(&noise).map(|(s, n)| gain * s + 0.3 * n).collect();
        let sd = sd_sdr(&r, &e).unwrap().0;
        let si = si_sdr(&r, &e).unwrap().0;
        prop_assert!(si >= sd - 1e-9);
        let scaled: Vec<f64> = e.iter().map(|v| v * scale).collect();
        prop_assert!((si_sdr(&r, &scaled).unwrap().0 - si).abs() < 1e-8);
        let neg_e: Vec<f64> = e.iter().map(|v| -v).collect();
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        prop_assert!((si_sdr(&r, &neg_e).unwrap().0 - si).abs() < 1e-8);
        prop_assert!((sd_sdr(&neg_r, &neg_e).unwrap().0 - sd).abs() < 1e-8);
    }

    #[test]
    fn msk1_round_trip(values in raster(7, 13, 0.0, 1.0)) {
        let mut buf = Vec::new();
        encode_msk1(&values, &mut buf).unwrap();
        let back = decode_msk1(buf.as_slice()).unwrap();
        prop_assert_eq!(back.dim(), values.dim());
        for (a, b) in values.iter().zip(back.iter()) {
            prop_assert_eq!(*a as f32, *b);
        }
    }

    #[test]
    fn stft_round_trip(samples in prop::collection::vec(-1.0f64..1.0, 2048..6000)) {
        let spec = stft_with(&samples, Geometry::canonical()).unwrap();
        let back = istft_samples(&spec, samples.len()).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn regression_matches_least_squares(points in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..50)) {
        let n = points.len() as f64;
        let (sx, sy) = points.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
        let syy: f64 = points.iter().map(|p| p.1 * p.1).sum();
        let vx = n * sxx - sx * sx;
        let vy = n * syy - sy * sy;
        prop_assume!(vx > 1e-6 * n * n && vy > 1e-6 * n * n);
        let slope = (n * sxy - sx * sy) / vx;
        let intercept = (sy - slope * sx) / n;
        let r = (n * sxy - sx * sy) / (vx * vy).sqrt();
        let fit = correlation_report(&points).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-6 * (1.0 + slope.abs()));
        prop_assert!((fit.intercept - intercept).abs() < 1e-6 * (1.0 + intercept.abs()));
        prop_assert!((fit.r_value - r).abs() < 1e-6);
        prop_assert!((0.0..=1.0).contains(&fit.p_value));
        prop_assert_eq!(fit.n, points.len());
    }
}
