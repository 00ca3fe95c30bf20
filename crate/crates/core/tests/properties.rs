use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rlt_core::rlt::{compute_run_lengths, compute_static_mask, random_drop_count, DifferenceGrid, StaticMask};
use rlt_core::tensor::normalize;
use rlt_core::testkit::{gen_video, oracle_mask, oracle_run_lengths, random_spec, SyntheticKind, SyntheticSpec};
use rlt_core::{
    extract_patches, random_mask, tokenize, tokenize_with, DiffMetric, GridDims, NormalizationParams, Threshold,
    TokenSequence, TokenizerSettings, TubeletConfig, VideoDims,
};

fn config_strategy() -> impl Strategy<Value = TubeletConfig> {
    (prop::sample::select(vec![2usize, 4, 8]), 1usize..=3).prop_map(|(p, t)| TubeletConfig::square(p, t))
}

fn spec_strategy() -> impl Strategy<Value = (SyntheticSpec, TubeletConfig)> {
    (config_strategy(), any::<u64>()).prop_map(|(cfg, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = VideoDims::new(3, 8, 32, 32);
        (random_spec(&mut rng, cfg, max), cfg)
    })
}

fn metric_strategy() -> impl Strategy<Value = DiffMetric> {
    prop_oneof![Just(DiffMetric::MeanAbs), Just(DiffMetric::SumAbs)]
}

fn norm_for(channels: usize) -> NormalizationParams {
    if channels == 3 {
        NormalizationParams::imagenet()
    } else {
        NormalizationParams::identity(channels)
    }
}

/// Random mask with the first temporal slot retained.
fn mask_strategy() -> impl Strategy<Value = StaticMask> {
    (1usize..5, 1usize..5, 1usize..10)
        .prop_flat_map(|(gx, gy, gt)| {
            let g = GridDims {
                grid_x: gx,
                grid_y: gy,
                grid_t: gt,
            };
            (Just(g), prop::collection::vec(any::<bool>(), g.num_slots()))
        })
        .prop_map(|(g, mut bits)| {
            for b in bits.iter_mut().take(g.spatial()) {
                *b = true;
            }
            StaticMask::from_bits(g, bits).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn token_count_between_first_slot_and_full(
        (spec, cfg) in spec_strategy(),
        tau in 0.0f64..1.0,
        metric in metric_strategy(),
    ) {
        let v = gen_video(&spec);
        let seq = tokenize(&v, cfg, &norm_for(v.dims().channels), Threshold::new(tau).unwrap(), metric).unwrap();
        let g = seq.grid();
        prop_assert!(g.spatial() <= seq.len());
        prop_assert!(seq.len() <= g.num_slots());
        prop_assert_eq!(seq.full_count(), g.num_slots());
    }

    #[test]
    fn retained_count_is_monotone_in_tau(
        (spec, cfg) in spec_strategy(),
        mut taus in prop::collection::vec(0.0f64..2.0, 2..8),
        metric in metric_strategy(),
    ) {
        taus.sort_by(f64::total_cmp);
        let v = gen_video(&spec);
        let norm = norm_for(v.dims().channels);
        let counts: Vec<usize> = taus
            .iter()
            .map(|&t| tokenize(&v, cfg, &norm, Threshold::new(t).unwrap(), metric).unwrap().len())
            .collect();
        for w in counts.windows(2) {
            prop_assert!(w[0] >= w[1], "counts {:?} over taus {:?}", counts, taus);
        }
    }

    #[test]
    fn run_lengths_cover_each_column(
        (spec, cfg) in spec_strategy(),
        tau in 0.0f64..1.0,
    ) {
        let v = gen_video(&spec);
        let seq = tokenize(&v, cfg, &norm_for(v.dims().channels), Threshold::new(tau).unwrap(), DiffMetric::MeanAbs)
            .unwrap();
        let gt = seq.grid().grid_t as u64;
        for s in seq.column_length_sums() {
            prop_assert_eq!(s, gt);
        }
    }

    #[test]
    fn mask_matches_oracle(
        (spec, cfg) in spec_strategy(),
        tau in prop::sample::select(vec![0.0, 0.05, 0.1, 0.5]),
        metric in metric_strategy(),
    ) {
        let v = gen_video(&spec);
        let grid = extract_patches(&v, cfg).unwrap();
        let fast = compute_static_mask(&grid, Threshold::new(tau).unwrap(), metric);
        let slow = oracle_mask(&grid, tau, metric);
        prop_assert_eq!(fast.bits(), slow.bits());
    }

    #[test]
    fn direct_path_matches_tubelet_grid_path(
        (spec, cfg) in spec_strategy(),
        tau in prop::sample::select(vec![0.0, 0.05, 0.1, 0.5]),
        metric in metric_strategy(),
    ) {
        let v = gen_video(&spec);
        let settings = TokenizerSettings {
            config: cfg,
            norm: norm_for(v.dims().channels),
            tau: Threshold::new(tau).unwrap(),
            metric,
            ..TokenizerSettings::default()
        };
        let grid = extract_patches(&normalize(&v, &settings.norm).unwrap(), cfg).unwrap();
        let via_grid = DifferenceGrid::compute(&grid, metric);
        let direct = DifferenceGrid::from_video(&v, &settings).unwrap();
        prop_assert_eq!(direct.values(), via_grid.values());
        let lengths = compute_run_lengths(&via_grid.mask(settings.tau)).unwrap();
        let expected = TokenSequence::gather(&grid, &lengths, settings.clone());
        prop_assert_eq!(tokenize_with(&v, settings).unwrap(), expected);
    }

    #[test]
    fn run_lengths_match_oracle(mask in mask_strategy()) {
        let fast = compute_run_lengths(&mask).unwrap();
        let slow = oracle_run_lengths(&mask);
        let fast: Vec<Option<u32>> = fast.as_slice().iter().map(|&l| (l > 0).then_some(l)).collect();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn patches_reassemble_to_source((spec, cfg) in spec_strategy()) {
        let v = gen_video(&spec);
        let grid = extract_patches(&v, cfg).unwrap();
        prop_assert_eq!(grid.reassemble(), v);
    }

    #[test]
    fn random_mask_keeps_order_and_count(
        (spec, cfg) in spec_strategy(),
        ratio in 0.0f64..0.95,
        seed in any::<u64>(),
    ) {
        let v = gen_video(&spec);
        let seq = tokenize(&v, cfg, &norm_for(v.dims().channels), Threshold::new(0.0).unwrap(), DiffMetric::MeanAbs)
            .unwrap();
        let masked = random_mask(&seq, ratio, seed).unwrap();
        prop_assert_eq!(masked.len(), seq.len() - random_drop_count(seq.len(), ratio).unwrap());
        let mut j = 0;
        for (i, tok) in masked.tokens().iter().enumerate() {
            while seq.tokens()[j] != *tok {
                j += 1;
            }
            prop_assert_eq!(masked.patch(i), seq.patch(j));
        }
        prop_assert_eq!(random_mask(&seq, ratio, seed).unwrap(), masked);
    }

    #[test]
    fn difference_grid_thresholds_agree_with_mask(
        (spec, cfg) in spec_strategy(),
        tau in 0.0f64..1.0,
    ) {
        let v = gen_video(&spec);
        let grid = extract_patches(&v, cfg).unwrap();
        let diffs = DifferenceGrid::compute(&grid, DiffMetric::MeanAbs);
        let t = Threshold::new(tau).unwrap();
        prop_assert_eq!(diffs.retained_count(t), compute_static_mask(&grid, t, DiffMetric::MeanAbs).retained_count());
    }
}

#[test]
fn static_clip_keeps_only_first_slot() {
    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::Static,
        VideoDims::new(3, 8, 16, 16),
        4,
    ));
    let seq = tokenize(
        &v,
        TubeletConfig::square(4, 2),
        &NormalizationParams::imagenet(),
        Threshold::default(),
        DiffMetric::MeanAbs,
    )
    .unwrap();
    assert_eq!(seq.len(), 16);
    assert!(seq.tokens().iter().all(|t| t.t == 0 && t.run_length == 4));
}

#[test]
fn zero_threshold_keeps_everything_on_noise() {
    let v = gen_video(&SyntheticSpec::new(SyntheticKind::Noise, VideoDims::new(1, 4, 8, 8), 5));
    let seq = tokenize(
        &v,
        TubeletConfig::square(4, 1),
        &NormalizationParams::identity(1),
        Threshold::new(0.0).unwrap(),
        DiffMetric::SumAbs,
    )
    .unwrap();
    assert_eq!(seq.len(), seq.full_count());
    assert!(seq.tokens().iter().all(|t| t.run_length == 1));
}

#[test]
fn brightness_ramp_straddles_threshold() {
    // One frame per tubelet, so each comparison spans exactly one step.
    let cfg = TubeletConfig::square(4, 1);
    let tau = 0.1;
    let run = |delta: f32| {
        let v = gen_video(&SyntheticSpec::new(
            SyntheticKind::BrightnessRamp { base: 0.0, delta },
            VideoDims::new(1, 6, 8, 8),
            0,
        ));
        tokenize(
            &v,
            cfg,
            &NormalizationParams::identity(1),
            Threshold::new(tau).unwrap(),
            DiffMetric::MeanAbs,
        )
        .unwrap()
        .len()
    };
    assert_eq!(run(0.125), 4 * 6);
    assert_eq!(run(0.0625), 4);
}

#[test]
fn brightness_ramp_spans_two_tubelet_lengths_minus_one() {
    // With D_t = 2 the compared crops are three frames apart.
    let cfg = TubeletConfig::square(4, 2);
    let run = |tau: f64| {
        let v = gen_video(&SyntheticSpec::new(
            SyntheticKind::BrightnessRamp {
                base: 0.0,
                delta: 0.125,
            },
            VideoDims::new(1, 8, 8, 8),
            0,
        ));
        tokenize(
            &v,
            cfg,
            &NormalizationParams::identity(1),
            Threshold::new(tau).unwrap(),
            DiffMetric::MeanAbs,
        )
        .unwrap()
        .len()
    };
    assert_eq!(run(0.375), 16);
    assert_eq!(run(0.25), 16);
    assert_eq!(run(0.5), 4);
}

#[test]
fn exact_threshold_is_not_static() {
    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::BrightnessRamp { base: 0.0, delta: 0.25 },
        VideoDims::new(1, 2, 4, 4),
        0,
    ));
    let seq = tokenize(
        &v,
        TubeletConfig::square(4, 1),
        &NormalizationParams::identity(1),
        Threshold::new(0.25).unwrap(),
        DiffMetric::MeanAbs,
    )
    .unwrap();
    assert_eq!(seq.len(), 2);
}

#[test]
fn non_divisible_geometry_names_the_axis() {
    let v = gen_video(&SyntheticSpec::new(SyntheticKind::Noise, VideoDims::new(1, 5, 8, 8), 0));
    let err = tokenize(
        &v,
        TubeletConfig::square(4, 2),
        &NormalizationParams::identity(1),
        Threshold::default(),
        DiffMetric::MeanAbs,
    )
    .unwrap_err();
    assert!(matches!(err, rlt_core::RltError::Config { axis: "t", .. }), "{err}");
}
