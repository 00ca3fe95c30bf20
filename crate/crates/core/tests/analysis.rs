use std::sync::Arc;

use rlt_core::io::{write_raw, RawDtype};
use rlt_core::stats::{analyze, sweep_tau, FileClip, MemoryClip, DEFAULT_TAU_GRID};
use rlt_core::strategy::{RunLengthTokenizer, Tokenizer};
use rlt_core::testkit::{gen_video, SyntheticKind, SyntheticSpec};
use rlt_core::viz::{render_overlay, save_overlay, OverlayStyle};
use rlt_core::{
    tokenize_with, NormalizationParams, RltError, Threshold, TokenizerRegistry, TokenizerSettings, TubeletConfig,
    VideoDims,
};

fn settings() -> TokenizerSettings {
    TokenizerSettings {
        config: TubeletConfig::square(8, 2),
        ..TokenizerSettings::default()
    }
}

fn corpus() -> Vec<MemoryClip> {
    let dims = VideoDims::new(3, 8, 32, 32);
    let kinds = [
        SyntheticKind::Static,
        SyntheticKind::Noise,
        SyntheticKind::TwoSegmentStatic,
        SyntheticKind::PatchJitter {
            block: 8,
            amplitude: 0.1,
        },
        SyntheticKind::PatchJitter {
            block: 4,
            amplitude: 0.05,
        },
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| MemoryClip {
            id: format!("clip{i}"),
            video: gen_video(&SyntheticSpec::new(kind, dims, i as u64)),
        })
        .collect()
}

#[test]
fn report_matches_tokenizer_and_is_worker_independent() {
    let clips = corpus();
    let serial = analyze(&clips, &settings(), 1).unwrap();
    let parallel = analyze(&clips, &settings(), 4).unwrap();
    assert_eq!(serial, parallel);
    for (clip, rec) in clips.iter().zip(&serial.records) {
        let seq = tokenize_with(&clip.video, settings()).unwrap();
        assert_eq!(rec.id, clip.id);
        assert_eq!(rec.tokens_full, seq.full_count());
        assert_eq!(rec.tokens_retained, seq.len());
    }
    assert_eq!(serial.records[0].reduction, 0.75);
    assert_eq!(serial.records[1].reduction, 0.0);
    let agg = serial.aggregates.as_ref().unwrap();
    assert_eq!(agg.videos, 5);
    assert_eq!(agg.histogram.iter().map(|b| b.count).sum::<usize>(), 5);
    let lines: Vec<serde_json::Value> = serial
        .to_json_lines()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 6);
    assert_eq!(lines[5]["type"], "aggregate");
    assert_eq!(lines[0]["record"]["tokens_full"], 64);
}

#[test]
fn unreadable_clips_are_skipped_not_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.rltv1");
    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::Static,
        VideoDims::new(3, 8, 16, 16),
        0,
    ));
    write_raw(&good, &v, RawDtype::F32).unwrap();
    let bad = dir.path().join("bad.rltv1");
    std::fs::write(&bad, b"RLTV1\x00").unwrap();
    let clips = [good, bad].map(|path| FileClip {
        path,
        pattern: "*.png".into(),
    });
    let report = analyze(&clips, &settings(), 2).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.skipped.len(), 1);
    assert!(report.skipped[0].id.ends_with("bad.rltv1"));
}

#[test]
fn sweep_is_monotone_and_spans_zero_to_first_slot() {
    let clips = corpus();
    let mut taus: Vec<Threshold> = DEFAULT_TAU_GRID.iter().map(|&t| Threshold::new(t).unwrap()).collect();
    taus.push(Threshold::infinite());
    let report = sweep_tau(&clips, &settings(), &taus, 3).unwrap();
    for w in report.points.windows(2) {
        assert!(w[0].mean_tokens >= w[1].mean_tokens);
    }
    for clip in &report.clips {
        assert!(clip.retained.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(clip.retained[0], clip.tokens_full);
        assert_eq!(*clip.retained.last().unwrap(), 16);
    }
    assert_eq!(report.points.last().unwrap().mean_reduction, 0.75);
    let last: serde_json::Value = serde_json::from_str(report.to_json_lines().lines().last().unwrap()).unwrap();
    assert_eq!(last["tau"], "inf");
    assert_eq!(sweep_tau(&clips, &settings(), &taus, 1).unwrap(), report);

    let unsorted = [Threshold::new(0.5).unwrap(), Threshold::new(0.1).unwrap()];
    assert!(matches!(
        sweep_tau(&clips, &settings(), &unsorted, 1),
        Err(RltError::Usage(_))
    ));
}

#[test]
fn moving_content_has_a_knee_between_static_and_noise() {
    // jitter clips: some regions exactly static, some nudged slightly, some redrawn
    let clips: Vec<MemoryClip> = (0..3)
        .map(|i| MemoryClip {
            id: i.to_string(),
            video: gen_video(&SyntheticSpec::new(
                SyntheticKind::PatchJitter {
                    block: 8,
                    amplitude: 0.02,
                },
                VideoDims::new(3, 8, 32, 32),
                100 + i,
            )),
        })
        .collect();
    let taus: Vec<Threshold> = DEFAULT_TAU_GRID.iter().map(|&t| Threshold::new(t).unwrap()).collect();
    let report = sweep_tau(&clips, &settings(), &taus, 2).unwrap();
    let r: Vec<f64> = report.points.iter().map(|p| p.mean_reduction).collect();
    assert_eq!(r[0], 0.0);
    // exact-static regions go as soon as tau > 0, nudged ones a bit later
    assert!(r[1] > 0.0 && r[1] < *r.last().unwrap());
}

#[test]
fn overlay_grays_exactly_the_pruned_area() {
    let dims = VideoDims::new(3, 8, 32, 32);
    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::PatchJitter {
            block: 8,
            amplitude: 0.1,
        },
        dims,
        7,
    ));
    let seq = tokenize_with(&v, settings()).unwrap();
    let style = OverlayStyle::default();
    let frames = render_overlay(&v, &seq, style).unwrap();
    assert_eq!(frames.len(), 8);
    let grayed: usize = frames.iter().map(|f| f.grayed_count()).sum();
    let pruned = seq.full_count() - seq.len();
    assert_eq!(grayed, pruned * 8 * 8 * 2);
    for f in &frames {
        for (i, &g) in f.grayed.iter().enumerate() {
            if g {
                assert_eq!(f.data[i], style.gray);
            }
        }
    }
    let dir = tempfile::tempdir().unwrap();
    let paths = save_overlay(&frames, dir.path()).unwrap();
    assert_eq!(paths.len(), 8);
    assert!(paths[7].ends_with("frame_0007.png"));
    let other = gen_video(&SyntheticSpec::new(
        SyntheticKind::Noise,
        VideoDims::new(3, 8, 16, 16),
        1,
    ));
    assert!(matches!(render_overlay(&other, &seq, style), Err(RltError::Usage(_))));
}

#[test]
fn registry_lists_and_selects_strategies() {
    let mut registry = TokenizerRegistry::with_builtins();
    assert_eq!(registry.names(), vec!["random", "rlt", "rlt+random", "standard"]);
    assert!(matches!(registry.get("nope"), Err(RltError::Usage(_))));
    assert!(registry.register(Arc::new(RunLengthTokenizer)).is_err());

    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::Static,
        VideoDims::new(3, 8, 32, 32),
        3,
    ));
    let count = |strategy: &str, ratio: f64| {
        let s = TokenizerSettings {
            strategy: strategy.into(),
            mask_ratio: ratio,
            ..settings()
        };
        let seq = registry.tokenize(&v, &s).unwrap();
        assert_eq!(seq.settings().strategy, strategy);
        seq.len()
    };
    assert_eq!(count("rlt", 0.0), 16);
    assert_eq!(count("standard", 0.0), 64);
    assert_eq!(count("random", 0.75), 16);
    assert_eq!(count("rlt+random", 0.5), 8);

    struct Everything;
    impl Tokenizer for Everything {
        fn name(&self) -> &'static str {
            "everything"
        }
        fn description(&self) -> &'static str {
            "standard under another name"
        }
        fn tokenize(
            &self,
            video: &rlt_core::VideoTensor,
            s: &TokenizerSettings,
        ) -> rlt_core::Result<rlt_core::TokenSequence> {
            registry_standard().tokenize(video, s)
        }
    }
    fn registry_standard() -> Arc<dyn Tokenizer> {
        TokenizerRegistry::with_builtins().get("standard").unwrap()
    }
    registry.register(Arc::new(Everything)).unwrap();
    assert!(registry.names().contains(&"everything"));
}

#[test]
fn identity_normalization_needs_matching_channels() {
    let v = gen_video(&SyntheticSpec::new(
        SyntheticKind::Noise,
        VideoDims::new(1, 8, 16, 16),
        0,
    ));
    let err = tokenize_with(&v, settings()).unwrap_err();
    assert!(err.is_config(), "{err}");
    let ok = TokenizerSettings {
        norm: NormalizationParams::identity(1),
        ..settings()
    };
    assert!(tokenize_with(&v, ok).is_ok());
}
