use unic_core::labeling::*;
use unic_core::par::Workers;
use unic_core::rng::Rng;
use unic_core::toy_world::*;

fn main() {
    let s = SceneSpec::new(ObjectKind::Disc, 0.5, 0.5, 0.25, 1.0).unwrap();
    let a: f64 = coverage(&s).iter().sum::<f64>() / 1024.0;
    println!("area {a} vs {}", std::f64::consts::PI * 0.0625);
    for c in [0.4, 0.5, 0.6, 0.7, 0.8, 1.0] {
        for kind in [ObjectKind::Disc, ObjectKind::Bar] {
            let s = SceneSpec::new(kind, 0.5, 0.5, 0.22, c).unwrap();
            let p = perceive(&render(&s).unwrap()).unwrap();
            println!("{kind:?} c={c} completeness est {:.3} elong {:.2} r {:.3}", p.completeness, p.elongation, p.radius);
        }
    }
    // known motion
    let cfg = FlowConfig::default();
    let blob = |dx: f64| Frame::from_fn(|x, y| {
        let (xf, yf) = (x as f64 - 15.5 - dx, y as f64 - 15.5);
        (-(xf * xf + yf * yf) / (2.0 * 16.0)).exp()
    });
    let v = Video::new((0..4).map(|k| blob(k as f64)).collect());
    let st = FlowStats::from_fields(&optical_flow(&v, &cfg));
    println!("blob {st:?}");
    let pat = |dx: f64| Frame::from_fn(|x, y| {
        0.5 + 0.25 * ((x as f64 - dx) * 0.9).sin() + 0.25 * (y as f64 * 0.8).sin()
    });
    let v = Video::new((0..4).map(|k| pat(k as f64)).collect());
    let jc = JudgeConfig::default(); println!("pan judge {:?}", judge_criteria(v.frames(), &jc, &cfg));
    let f = optical_flow(&v, &cfg);
    println!("pan {:?} mr {:?}", FlowStats::from_fields(&f), f[0].magnitude_and_residual());

    let n: usize = std::env::args().nth(1).map(|a| a.parse().unwrap()).unwrap_or(410);
    let w = Workers::sequential();
    let corpus = generate_corpus(&CorpusConfig { n_prompts: n, ..Default::default() }, &Rng::new(5), &w);
    let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
    let lc = LabelConfig::default();
    for variant in [Variant::A, Variant::B] {
        let labels = label_corpus(&frames, variant, &lc, &Rng::new(9), &w);
        let pos = labels.iter().filter(|l| l.label).count();
        let dd = labels.iter().filter(|l| l.flow_stats.unwrap().mean_mag > 0.25).count();
        println!("{variant}: n={} pos={:.3} dd={:.3}", labels.len(), pos as f64 / labels.len() as f64, dd as f64 / labels.len() as f64);
        // by failure kind
        for fk in [None, Some(FailureKind::BorderTouching), Some(FailureKind::LowMobility), Some(FailureKind::Incomplete)] {
            let idx: Vec<usize> = (0..frames.len()).filter(|&i| corpus.records[i].failure == fk).collect();
            let pos = idx.iter().filter(|&&i| labels[i].label).count();
            let dd = idx.iter().filter(|&&i| labels[i].flow_stats.unwrap().mean_mag > 0.25).count();
            let ff = idx.iter().filter(|&&i| labels[i].stage == Stage::FlowFilter).count();
            let mut crit = [0usize; 5];
            for &i in &idx { if let Some(c) = labels[i].criteria { for (k, b) in [c.visibility, c.no_distortion, c.consistency, c.motion, c.not_camera_only].iter().enumerate() { if !b { crit[k] += 1; } } } }
            println!("  {fk:?}: n={} pos={} dd={} ff_neg={} crit_fail={crit:?}", idx.len(), pos, dd, ff);
        }
    }
    let ip = label_image_priors(&frames, &lc);
    for fk in [None, Some(FailureKind::BorderTouching), Some(FailureKind::LowMobility), Some(FailureKind::Incomplete)] {
        let idx: Vec<usize> = (0..frames.len()).filter(|&i| corpus.records[i].failure == fk).collect();
        println!("  IP {fk:?}: n={} pos={}", idx.len(), idx.iter().filter(|&&i| ip[i].label).count());
    }
}
