use proptest::prelude::*;
use unic_core::labeling::*;
use unic_core::par::Workers;
use unic_core::rng::Rng;
use unic_core::toy_world::*;

const S: usize = FRAME_SIZE;

fn scene(kind: ObjectKind, cx: f64, cy: f64, r: f64, c: f64) -> Frame {
    render(&SceneSpec::new(kind, cx, cy, r, c).unwrap()).unwrap()
}

fn blob(cx: f64, cy: f64, sigma: f64) -> Frame {
    Frame::from_fn(|x, y| {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        (-d2 / (2.0 * sigma * sigma)).exp()
    })
}

fn texture(shift: f64) -> Frame {
    Frame::from_fn(|x, y| {
        let (x, y) = (x as f64 - shift, y as f64);
        0.5 + 0.25 * (0.6 * x + 0.2 * y).sin() + 0.25 * (0.25 * x - 0.7 * y).sin()
    })
}

fn corpus(n_prompts: usize, seed: u64) -> Corpus {
    let cfg = CorpusConfig {
        n_prompts,
        ..CorpusConfig::default()
    };
    generate_corpus(&cfg, &Rng::new(seed), &Workers::sequential())
}

fn frames(c: &Corpus) -> Vec<Frame> {
    c.records.iter().map(|r| r.frame.clone()).collect()
}

#[test]
fn dedup_drops_repeats_and_keeps_orthogonal_sets() {
    assert_eq!(CorpusConfig::default().dedup_threshold, 0.8);
    let v = vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]];
    assert_eq!(dedup_prompts(&v, 0.8).unwrap(), vec![0]);
    let basis: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..5).map(|j| (i == j) as u8 as f64).collect())
        .collect();
    assert_eq!(dedup_prompts(&basis, 0.8).unwrap(), vec![0, 1, 2, 3, 4]);
    assert_eq!(
        dedup_prompts(&[vec![1.0, 0.0], vec![0.0, 0.0]], 0.8),
        Err(DedupError::ZeroVector(1))
    );
    assert!(dedup_prompts(&basis, 1.0).is_err());
    assert!(dedup_prompts(&basis, 0.0).is_err());
}

#[test]
fn dedup_similarity_is_strict() {
    // cos = 0.8 exactly is a duplicate.
    let v = vec![vec![1.0, 0.0], vec![0.8, 0.6]];
    assert_eq!(dedup_prompts(&v, 0.8).unwrap(), vec![0]);
}

proptest! {
    #[test]
    fn dedup_output_is_pairwise_dissimilar(
        raw in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..40),
        threshold in 0.2f64..0.95,
    ) {
        let vs: Vec<Vec<f64>> = raw
            .into_iter()
            .filter(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
            .collect();
        prop_assume!(!vs.is_empty());
        let kept = dedup_prompts(&vs, threshold).unwrap();
        prop_assert_eq!(kept[0], 0);
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                prop_assert!(cosine(&vs[i], &vs[j]) < threshold);
            }
        }
        // Every dropped vector has a kept twin that came before it.
        for i in (0..vs.len()).filter(|i| !kept.contains(i)) {
            prop_assert!(kept.iter().any(|&k| k < i && cosine(&vs[k], &vs[i]) >= threshold));
        }
    }
}

#[test]
fn static_video_has_zero_flow() {
    let f = scene(ObjectKind::Disc, 0.5, 0.5, 0.2, 1.0);
    let video = Video::new(vec![f; 4]);
    for field in optical_flow(&video, &FlowConfig::default()) {
        assert!(field.u.iter().chain(&field.v).all(|x| x.abs() < 1e-9));
    }
}

#[test]
fn translated_blob_flow_matches_the_shift() {
    let video = Video::new((0..4).map(|k| blob(12.0 + k as f64, 15.5, 3.0)).collect());
    let fields = optical_flow(&video, &FlowConfig::default());
    assert_eq!(fields.len(), 3);
    let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
    for (k, f) in fields.iter().enumerate() {
        let frame = &video.frames()[k];
        for i in 0..S * S {
            if f.valid[i] && frame.pixels()[i] > 0.2 {
                su += f.u[i];
                sv += f.v[i];
                n += 1.0;
            }
        }
    }
    assert!(n > 50.0);
    let (mu, mv) = (su / n, sv / n);
    assert!((mu - 1.0).abs() < 0.2, "mean u {mu}");
    assert!(mv.abs() < 0.2, "mean v {mv}");
}

#[test]
fn global_pan_reads_as_uniform_flow() {
    let field = flow_between(
        texture(0.0).pixels(),
        texture(1.0).pixels(),
        S,
        S,
        &FlowConfig::default(),
    )
    .unwrap();
    let mut mags = Vec::new();
    let (mut su, mut sv) = (0.0, 0.0);
    for y in 4..S - 4 {
        for x in 4..S - 4 {
            let i = y * S + x;
            if field.valid[i] {
                su += field.u[i];
                sv += field.v[i];
                mags.push(field.u[i].hypot(field.v[i]));
            }
        }
    }
    let n = mags.len() as f64;
    assert!(n > 400.0, "{n} valid interior pixels");
    let mean = mags.iter().sum::<f64>() / n;
    let var = mags.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
    assert!((su / n - 1.0).abs() < 0.15, "mean u {}", su / n);
    assert!((sv / n).abs() < 0.15, "mean v {}", sv / n);
    assert!(var < 0.05, "var_mag {var}");
}

#[test]
fn mismatched_frames_are_rejected() {
    assert!(flow_between(&[0.0; 16], &[0.0; 15], 4, 4, &FlowConfig::default()).is_err());
}

#[test]
fn flow_stats_respect_their_invariants() {
    let mut rng = Rng::new(5);
    let cfg = LabelConfig::default();
    for r in corpus(20, 3).records {
        let video = cfg.video_for(&r.frame, Variant::A, rng.next_u64());
        let fields = optical_flow(&video, &cfg.flow);
        assert_eq!(fields.len(), video.len() - 1);
        let st = FlowStats::from_fields(&fields);
        assert!(st.var_u >= 0.0 && st.var_v >= 0.0 && st.var_mag >= 0.0);
        assert!(st.mean_mag >= 0.0);
        let second = st.var_u + st.mean_u.powi(2) + st.var_v + st.mean_v.powi(2);
        assert!(st.mean_mag.powi(2) <= second + 1e-12);
    }
}

#[test]
fn filter_rule_examples() {
    let rule = FlowRule::default();
    let weak = FlowStats {
        mean_mag: 0.1,
        var_mag: 0.5,
        mean_u: 3.0,
        ..Default::default()
    };
    assert_eq!(flow_filter(&weak, &rule), FilterDecision::Negative);
    let strong = FlowStats {
        mean_u: 1.0,
        var_u: 0.1,
        mean_v: 0.0,
        var_v: 0.5,
        mean_mag: 1.0,
        var_mag: 0.2,
        valid_fraction: 1.0,
    };
    assert_eq!(flow_filter(&strong, &rule), FilterDecision::Pass);
    // A negative mean counts by its size.
    let left = FlowStats {
        mean_u: -1.0,
        ..strong
    };
    assert_eq!(flow_filter(&left, &rule), FilterDecision::Pass);
    let off = FlowRule {
        magnitude_clause: false,
        ..rule
    };
    assert_eq!(flow_filter(&weak, &off), FilterDecision::Pass);
}

fn restated_rule(mean_u: f64, var_u: f64, mean_v: f64, var_v: f64, mean_mag: f64, var_mag: f64) -> bool {
    // true = negative
    if mean_mag < var_mag {
        return true;
    }
    let horizontal_weak = mean_u.abs() < 5.0 * var_u;
    let vertical_weak = mean_v.abs() < 5.0 * var_v;
    horizontal_weak && vertical_weak
}

#[test]
fn filter_matches_an_independent_restatement() {
    let mut rng = Rng::new(17);
    let rule = FlowRule::default();
    let mut negatives = 0;
    for _ in 0..1000 {
        let st = FlowStats {
            mean_u: rng.range(-2.0, 2.0),
            var_u: rng.range(0.0, 0.6),
            mean_v: rng.range(-2.0, 2.0),
            var_v: rng.range(0.0, 0.6),
            mean_mag: rng.range(0.0, 2.0),
            var_mag: rng.range(0.0, 1.5),
            valid_fraction: 1.0,
        };
        let expected = restated_rule(st.mean_u, st.var_u, st.mean_v, st.var_v, st.mean_mag, st.var_mag);
        assert_eq!(flow_filter(&st, &rule) == FilterDecision::Negative, expected, "{st:?}");
        negatives += expected as usize;
    }
    assert!((200..800).contains(&negatives), "{negatives}");
}

#[test]
fn frame_sampling_indices() {
    assert_eq!(JudgeConfig::default().min_area_fraction, 0.10);
    assert_eq!(LabelConfig::default().judge_frames, 4);
    assert_eq!(sample_indices(4, 4).unwrap(), vec![0, 1, 2, 3]);
    assert_eq!(sample_indices(8, 4).unwrap(), vec![0, 2, 5, 7]);
    assert!(sample_indices(8, 1).is_err());
    assert!(sample_indices(3, 4).is_err());
    for len in 2..30 {
        for k in 2..=len {
            let idx = sample_indices(len, k).unwrap();
            assert_eq!(idx[0], 0);
            assert_eq!(*idx.last().unwrap(), len - 1);
            assert!(idx.windows(2).all(|w| w[0] < w[1]));
        }
    }
    let video = Video::new((0..8).map(|k| blob(10.0 + k as f64, 16.0, 3.0)).collect());
    let picked = sample_frames(&video, 4).unwrap();
    assert_eq!(picked[1], video.frames()[2]);
    assert_eq!(picked[2], video.frames()[5]);
}

#[test]
fn small_object_fails_visibility() {
    // Area fraction π·r² ≈ 5% at r = 0.126.
    let f = scene(ObjectKind::Disc, 0.5, 0.5, 0.126, 1.0);
    let area = perceive(&f).unwrap().area_fraction();
    assert!((0.04..0.06).contains(&area), "{area}");
    let video = Dynamics::default().animate(&f, 8, Variant::A, &mut Rng::new(1));
    let c = judge_criteria(&sample_frames(&video, 4).unwrap(), &JudgeConfig::default(), &FlowConfig::default());
    assert!(!c.visibility);
    assert!(!c.all());
}

#[test]
fn camera_pan_fails_the_residual_rule() {
    let frames: Vec<Frame> = (0..4).map(|k| texture(k as f64)).collect();
    let c = judge_criteria(&frames, &JudgeConfig::default(), &FlowConfig::default());
    assert!(!c.not_camera_only, "{c:?}");
}

#[test]
fn moving_full_disc_passes_every_criterion() {
    let f = scene(ObjectKind::Disc, 0.5, 0.5, 0.25, 1.0);
    for variant in [Variant::A, Variant::B] {
        for seed in 0..10 {
            let video = Dynamics::default().animate(&f, 8, variant, &mut Rng::new(seed));
            let c = RuleJudge::default().judge(&sample_frames(&video, 4).unwrap());
            assert!(c.all(), "{variant} seed {seed}: {c:?}");
            let pair = label_one(0, &f, variant, seed, &LabelConfig::default(), &RuleJudge::default());
            assert!(pair.label, "{pair:?}");
            assert_eq!(pair.stage, Stage::Passed);
        }
    }
}

#[test]
fn border_scenes_are_all_rejected_by_the_flow_filter() {
    let mut rng = Rng::new(2);
    let frames: Vec<Frame> = (0..200)
        .map(|_| {
            let kind = if rng.bernoulli(0.5) {
                ObjectKind::Disc
            } else {
                ObjectKind::Bar
            };
            let r = rng.range(0.2, 0.3);
            let (edge, along) = (rng.below(4), rng.range(0.3, 0.7));
            let off = rng.range(0.6, 0.9) * r;
            let (cx, cy) = match edge {
                0 => (off, along),
                1 => (1.0 - off, along),
                2 => (along, off * kind.aspect()),
                _ => (along, 1.0 - off * kind.aspect()),
            };
            scene(kind, cx, cy, r, 1.0)
        })
        .collect();
    for f in &frames {
        assert!(perceive(f).unwrap().border_contact);
    }
    let labels = label_corpus(&frames, Variant::A, &LabelConfig::default(), &Rng::new(4), &Workers::sequential());
    for l in &labels {
        assert!(!l.label);
        assert_eq!(l.stage, Stage::FlowFilter, "{l:?}");
    }
}

#[test]
fn positive_rate_is_stable_across_seeds() {
    let c = corpus(400, 9);
    let f = frames(&c);
    assert_eq!(f.len(), 2000);
    let rate = |seed| {
        let l = label_corpus(&f, Variant::A, &LabelConfig::default(), &Rng::new(seed), &Workers::new(0));
        l.iter().filter(|p| p.label).count() as f64 / l.len() as f64
    };
    let (a, b) = (rate(1), rate(2));
    assert!((a - b).abs() <= 0.03, "{a} vs {b}");
    assert!(a > 0.2 && a < 0.8, "{a}");
}

#[test]
fn labels_are_sound_and_reproducible() {
    let c = corpus(60, 4);
    let f = frames(&c);
    let cfg = LabelConfig::default();
    let seq = label_corpus(&f, Variant::B, &cfg, &Rng::new(7), &Workers::sequential());
    let par = label_corpus(&f, Variant::B, &cfg, &Rng::new(7), &Workers::new(4));
    assert_eq!(seq, par);
    let judge = RuleJudge::default();
    for p in &seq {
        assert_eq!(p.label, p.stage == Stage::Passed);
        if p.stage == Stage::FlowFilter {
            assert!(p.criteria.is_none());
        }
        let video = cfg.video_for(&f[p.index], Variant::B, p.video_seed.unwrap());
        if p.label {
            assert!(video.mean_displacement() > 0.1, "{p:?}");
            assert!(judge.judge(&sample_frames(&video, 4).unwrap()).all());
            assert!(p.criteria.unwrap().all());
        }
        let again = label_one(p.index, &f[p.index], Variant::B, p.video_seed.unwrap(), &cfg, &judge);
        assert_eq!(&again, p);
    }
}

#[test]
fn image_prior_labels() {
    let cfg = LabelConfig::default();
    let half = scene(ObjectKind::Disc, 0.5, 0.5, 0.25, 0.5);
    let cornered = scene(ObjectKind::Disc, 0.23, 0.5, 0.2, 1.0);
    let p = perceive(&cornered).unwrap();
    assert!(!p.border_contact && p.margin_px < 3);
    let labels = label_image_priors(&[half, cornered.clone(), Frame::blank()], &cfg);
    assert!(!labels[0].label);
    assert!(!labels[0].image_checks.unwrap().complete);
    assert!(labels[1].label, "image priors cannot see low mobility");
    assert!(!labels[2].label);
    assert!(labels.iter().all(|l| l.flow_stats.is_none() && l.video_seed.is_none()));
    // The video prior catches what the image prior misses.
    let video = label_one(0, &cornered, Variant::A, 3, &cfg, &RuleJudge::default());
    assert!(!video.label);
}

#[test]
fn image_visible_failures_are_negative_under_both_labelers() {
    let c = corpus(150, 12);
    let f = frames(&c);
    let cfg = LabelConfig::default();
    let image = label_image_priors(&f, &cfg);
    let video = label_corpus(&f, Variant::A, &cfg, &Rng::new(1), &Workers::new(0));
    let mut checked = 0;
    for (i, v) in image.iter().zip(&video) {
        if !i.label {
            assert!(!v.label, "image-negative {} is video-positive", i.index);
            checked += 1;
        }
    }
    assert!(checked > 50);
    let more = image.iter().filter(|l| l.label).count();
    let fewer = video.iter().filter(|l| l.label).count();
    assert!(more > fewer);
}

struct Refuse;

impl Judge for Refuse {
    fn judge(&self, _frames: &[Frame]) -> Criteria {
        Criteria {
            visibility: true,
            no_distortion: true,
            consistency: true,
            motion: true,
            not_camera_only: false,
        }
    }
}

#[test]
fn judges_are_swappable() {
    let c = corpus(30, 1);
    let labels = label_corpus_with(&frames(&c), Variant::A, &LabelConfig::default(), &Refuse, &Rng::new(0), &Workers::sequential());
    assert!(labels.iter().all(|l| !l.label));
    assert!(labels.iter().any(|l| l.stage == Stage::Criteria));
}
