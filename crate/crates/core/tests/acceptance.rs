//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always reach the console.

use ndarray::{Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;
use zsseld::config::RunConfig;
use zsseld::decoder::{DecoderConfig, Detection};
use zsseld::embedding::{build_support_few, build_support_zero, AudioClip, StubProvider, StubProviderConfig, SupportSet};
use zsseld::metrics::{
    evaluate_records, match_class_segment, segment_counts, seld_error, LabeledFrameSet, MetricsConfig, MetricsReport, SegmentCounts,
};
use zsseld::nn::{Adam, ConvBlockConfig, EmbedAccdoaNet, NetworkConfig, ScheduleConfig, Tape};
use zsseld::pipeline::{decode_scene, detection_records, run_network, synthetic_shots, train, Dataset, Frontend, SceneOutputs};
use zsseld::pit::{accdoa_term, embed_term, pit_loss, pit_loss_grad, LossConfig, TrackFrames};
use zsseld::records::{annotation_records, AnnotationRecord};
use zsseld::scene::{oracle_targets, rotate_foa, spatialize, EventSource, EventSpec, FoaRotation, SceneAnnotation, SceneGenerator};
use zsseld::spatial::{angular_distance, decode_accdoa, encode_accdoa, CartesianDoa, SphericalDirection};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> CartesianDoa<f64> {
    loop {
        let v: [f64; 3] = [StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return CartesianDoa::new(v[0] / n, v[1] / n, v[2] / n);
        }
    }
}

// ---------------------------------------------------------------- 1

/// (ER, F, LE, LR, E_SELD) rows, each rounded to three digits.
const REFERENCE_ROWS: [(f64, f64, f64, f64, f64); 7] = [
    (0.860, 0.112, 38.4, 0.408, 0.638),
    (0.837, 0.143, 36.2, 0.465, 0.607),
    (0.835, 0.158, 55.2, 0.299, 0.671),
    (0.777, 0.193, 27.0, 0.341, 0.598),
    (0.773, 0.187, 51.9, 0.361, 0.628),
    (0.756, 0.192, 35.0, 0.402, 0.589),
    (1.008, 0.258, 26.2, 0.469, 0.607),
];

fn criterion_1() -> Outcome {
    let worst = REFERENCE_ROWS
        .iter()
        .map(|&(er, f, le, lr, e)| (seld_error(er, f, le, lr) - e).abs())
        .fold(0.0, f64::max);
    check(worst <= 0.001, format!("7 reference rows, max |E_SELD - row| = {worst:.5} (tol 0.001)"))
}

// ---------------------------------------------------------------- 2

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let a: f64 = rng.random_range(1e-3..=1.0);
        let d = random_unit(&mut rng);
        let v = encode_accdoa(a, &d).map_err(|e| e.to_string())?;
        let (a2, d2) = decode_accdoa(&v);
        let d2 = d2.ok_or("active vector decoded as inactive")?;
        worst = worst.max((a - a2).abs()).max((d.x - d2.x).abs()).max((d.y - d2.y).abs()).max((d.z - d2.z).abs());
    }
    let (a0, d0) = decode_accdoa(&encode_accdoa(0.0, &CartesianDoa::new(1.0, 0.0, 0.0)).unwrap());
    check(
        worst < 1e-6 && a0 == 0.0 && d0.is_none(),
        format!("1e5 round trips, max error {worst:.2e} (tol 1e-6); zero activity decodes inactive"),
    )
}

// ---------------------------------------------------------------- 3

fn random_frames(rng: &mut ChaCha8Rng, d: usize, n: usize, t: usize, sparse: bool) -> TrackFrames<f64> {
    let mut f = TrackFrames::<f64>::zeros(d, n, t);
    for tt in 0..t {
        for k in 0..n {
            if sparse && rng.random_bool(0.3) {
                continue;
            }
            for i in 0..d {
                f.embeddings[[i, k, tt]] = rng.random_range(-1.0..1.0);
            }
            for c in 0..3 {
                f.accdoa[[c, k, tt]] = rng.random_range(-1.0..1.0);
            }
        }
    }
    f
}

/// Frame cost of matching prediction track `n` to oracle track `perm[n]`.
fn perm_cost(o: &TrackFrames<f64>, p: &TrackFrames<f64>, t: usize, perm: [usize; 3], cfg: &LossConfig) -> f64 {
    let oe = o.embeddings.index_axis(Axis(2), t);
    let pe = p.embeddings.index_axis(Axis(2), t);
    let acc = |f: &TrackFrames<f64>, k: usize| [f.accdoa[[0, k, t]], f.accdoa[[1, k, t]], f.accdoa[[2, k, t]]];
    let s: f64 = (0..3)
        .map(|n| {
            let m = perm[n];
            cfg.beta_embed * embed_term(oe.column(m), pe.column(n)) + cfg.beta_accdoa * accdoa_term(acc(o, m), acc(p, n))
        })
        .sum();
    s * (1.0 / 3.0)
}

fn all_perms3() -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                if a != b && b != c && a != c {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let cfg = LossConfig::default();
    let perms = all_perms3();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut mismatches, mut min_violations, mut term_err) = (0, 0, 0.0f64);
    for _ in 0..1000 {
        let t = 4;
        let o = random_frames(&mut rng, 6, 3, t, true);
        let p = random_frames(&mut rng, 6, 3, t, false);
        let lib = pit_loss(&o, &p, &cfg).map_err(|e| e.to_string())?.0;
        let mut oracle = 0.0;
        for tt in 0..t {
            oracle += perms.iter().map(|&pm| perm_cost(&o, &p, tt, pm, &cfg)).fold(f64::INFINITY, f64::min);
        }
        oracle /= t as f64;
        if lib != oracle {
            mismatches += 1;
        }
        for &pm in &perms {
            let fixed: f64 = (0..t).map(|tt| perm_cost(&o, &p, tt, pm, &cfg)).sum::<f64>() / t as f64;
            if lib > fixed {
                min_violations += 1;
            }
        }
        // the per-pair terms against their closed forms
        for tt in 0..t {
            for m in 0..3 {
                for n in 0..3 {
                    let a = o.embeddings.index_axis(Axis(2), tt).column(m).to_owned();
                    let b = p.embeddings.index_axis(Axis(2), tt).column(n).to_owned();
                    let na = a.dot(&a).sqrt();
                    let want = if na == 0.0 { 0.0 } else { 1.0 - a.dot(&b) / (na * b.dot(&b).sqrt()) };
                    term_err = term_err.max((embed_term(a.view(), b.view()) - want).abs());
                    let (x, y) = ([o.accdoa[[0, m, tt]], o.accdoa[[1, m, tt]], o.accdoa[[2, m, tt]]], [p.accdoa[[0, n, tt]], p.accdoa[[1, n, tt]], p.accdoa[[2, n, tt]]]);
                    let want = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2) + (x[2] - y[2]).powi(2)) / 3.0;
                    term_err = term_err.max((accdoa_term(x, y) - want).abs());
                }
            }
        }
    }
    check(
        mismatches == 0 && min_violations == 0 && term_err < 1e-12,
        format!("1000 N=3 instances: {mismatches} differ from exhaustive search, {min_violations} exceed a fixed permutation; pair terms within {term_err:.1e}"),
    )
}

// ---------------------------------------------------------------- 4

fn criterion_4() -> Outcome {
    let cfg = NetworkConfig {
        in_channels: 3,
        n_bins: 8,
        input_freq_pool: 2,
        conv_blocks: vec![
            ConvBlockConfig {
                channels: 3,
                freq_pool: 2,
                time_pool: 2,
            },
            ConvBlockConfig {
                channels: 2,
                freq_pool: 1,
                time_pool: 2,
            },
        ],
        hidden: 4,
        attention_blocks: 1,
        attention_heads: 2,
        n_tracks: 3,
        embed_dim: 4,
        cross_stitch: true,
    };
    let loss_cfg = LossConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut net = EmbedAccdoaNet::<f64>::new(cfg.clone(), 4).map_err(|e| e.to_string())?;
    for v in net.params_mut().values_mut() {
        v.mapv_inplace(|x| x + rng.random_range(-0.3..0.3));
    }
    let frames = 8;
    let x = zsseld::features::FeatureTensor {
        values: Array3::from_shape_fn((cfg.in_channels, cfg.n_bins, frames), |_| rng.random_range(-1.0..1.0)),
    };
    let t_out = cfg.out_frames(frames).map_err(|e| e.to_string())?;
    let target = random_frames(&mut rng, cfg.embed_dim, cfg.n_tracks, t_out, true);

    let mut tape = Tape::new();
    let out = net.forward_cached(&x, &mut tape).map_err(|e| e.to_string())?;
    let (_, perms, g_out) = pit_loss_grad(&target, &out, &loss_cfg).map_err(|e| e.to_string())?;
    let mut grads = net.params().zeros_like();
    net.backward(&mut tape, &g_out, &mut grads).map_err(|e| e.to_string())?;

    let h = 1e-3;
    let (mut checked, mut ties, mut worst, mut worst_plain) = (0usize, 0usize, 0.0f64, 0.0f64);
    let mut worst_at = String::new();
    let mut layers = std::collections::BTreeSet::new();
    let rel_err = |fd: f64, an: f64| {
        let scale = fd.abs().max(an.abs());
        if scale < 1e-9 {
            0.0
        } else {
            (fd - an).abs() / scale
        }
    };
    for pi in 0..net.params().len() {
        for j in 0..net.params().values()[pi].len() {
            let base = net.params().values()[pi].as_slice().unwrap()[j];
            let eval = |delta: f64| {
                let mut n2 = net.clone();
                n2.params_mut().values_mut()[pi].as_slice_mut().unwrap()[j] = base + delta;
                pit_loss(&target, &n2.forward(&x).unwrap(), &loss_cfg).unwrap()
            };
            let stencil = [eval(h), eval(-h), eval(h / 2.0), eval(-h / 2.0)];
            // the winning assignment must not change inside the stencil
            if stencil.iter().any(|(_, p)| *p != perms) {
                ties += 1;
                continue;
            }
            let central = (stencil[0].0 - stencil[1].0) / (2.0 * h);
            let half = (stencil[2].0 - stencil[3].0) / h;
            // one Richardson step cancels the h^2 truncation term
            let fd = (4.0 * half - central) / 3.0;
            let an = grads.values()[pi].as_slice().unwrap()[j];
            let rel = rel_err(fd, an);
            worst_plain = worst_plain.max(rel_err(central, an));
            if rel > worst {
                worst = rel;
                worst_at = format!("{}[{j}]", net.params().names()[pi]);
            }
            checked += 1;
            layers.insert(net.params().names()[pi].split('.').next().unwrap_or("").to_string());
        }
    }
    check(
        worst < 1e-4 && checked > 0,
        format!(
            "{checked} parameters over {} tensors ({} layer groups), h = 1e-3 with h/2 extrapolation: max relative error {worst:.2e} at {worst_at} (tol 1e-4; plain central difference {worst_plain:.1e}); {ties} tie points excluded",
            net.params().len(),
            layers.len()
        ),
    )
}

// ---------------------------------------------------------------- 5

/// Smallest total distance over all maximum matchings, by enumeration.
fn brute_force_cost(cost: &[Vec<f64>], nr: usize, np: usize) -> (f64, usize) {
    fn rec(i: usize, used: &mut Vec<bool>, cost: &[Vec<f64>], nr: usize, np: usize, acc: f64, pairs: usize, best: &mut (f64, usize)) {
        if i == nr {
            if pairs > best.1 || (pairs == best.1 && acc < best.0) {
                *best = (acc, pairs);
            }
            return;
        }
        // leave row i unmatched only if it can still reach a maximum matching
        rec(i + 1, used, cost, nr, np, acc, pairs, best);
        for j in 0..np {
            if !used[j] {
                used[j] = true;
                rec(i + 1, used, cost, nr, np, acc + cost[i][j], pairs + 1, best);
                used[j] = false;
            }
        }
    }
    let mut best = (f64::INFINITY, 0);
    rec(0, &mut vec![false; np], cost, nr, np, 0.0, 0, &mut best);
    if best.0.is_infinite() {
        best.0 = 0.0;
    }
    best
}

fn rec(frame: usize, class_id: usize, az: f64) -> AnnotationRecord {
    AnnotationRecord {
        frame,
        class_id,
        source_id: 0,
        azimuth: az,
        elevation: 0.0,
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = 0;
    let mut n = 0;
    for nr in 0..=4 {
        for np in 0..=4 {
            for _ in 0..200 {
                let refs: Vec<_> = (0..nr).map(|_| random_unit(&mut rng)).collect();
                let preds: Vec<_> = (0..np).map(|_| random_unit(&mut rng)).collect();
                let m = match_class_segment(&refs, &preds);
                let cost: Vec<Vec<f64>> = refs.iter().map(|r| preds.iter().map(|p| angular_distance(r, p).unwrap()).collect()).collect();
                let (want, pairs) = brute_force_cost(&cost, nr, np);
                let got: f64 = m.pairs.iter().map(|p| p.2).sum();
                if m.pairs.len() != pairs || (got - want).abs() > 1e-9 {
                    bad += 1;
                }
                n += 1;
            }
        }
    }
    let cfg = MetricsConfig::default();
    let score = |p: &[AnnotationRecord]| {
        let r = evaluate_records(&[rec(0, 0, 0.0)], p, &cfg);
        (r.er20, r.f20, r.le_cd, r.lr_cd)
    };
    let perfect = score(&[rec(0, 0, 0.0)]);
    let deletion = score(&[]);
    let off30 = score(&[rec(0, 0, 30.0)]);
    let scenarios_ok = perfect == (0.0, 1.0, 0.0, 1.0) && deletion == (1.0, 0.0, 180.0, 0.0) && (off30.0, off30.1, off30.3) == (1.0, 0.0, 1.0) && (off30.2 - 30.0).abs() < 1e-9;
    check(
        bad == 0 && scenarios_ok,
        format!(
            "{n} random instances up to 4x4, {bad} differ from enumeration; perfect {perfect:?}, deletion {deletion:?}, 30 deg off {off30:?}"
        ),
    )
}

// ---------------------------------------------------------------- 6

fn criterion_6() -> Outcome {
    let sr = 8_000;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let onset = rng.random_range(0..5) as f64 * 0.02;
        let event = EventSpec {
            class_id: 0,
            onset,
            offset: onset + 0.1,
            direction: SphericalDirection::new(rng.random_range(-180.0..180.0), rng.random_range(-90.0..=90.0)),
            source: if i % 2 == 0 {
                EventSource::Tone {
                    freq_hz: rng.random_range(100.0..3000.0),
                }
            } else {
                EventSource::BandNoise {
                    low_hz: 200.0,
                    high_hz: 2000.0,
                    seed: i,
                }
            },
            gain: rng.random_range(0.2..1.0),
        };
        let wave = spatialize::<f64>(&event, 0.25, sr).map_err(|e| e.to_string())?;
        let ann = SceneAnnotation::from_events(vec![event.clone()], 0.25);
        for rot in FoaRotation::all() {
            let (rotated, _) = rotate_foa(&wave, &ann, rot).map_err(|e| e.to_string())?;
            let moved = EventSpec {
                direction: rot.apply_direction(&event.direction),
                ..event.clone()
            };
            let direct = spatialize::<f64>(&moved, 0.25, sr).map_err(|e| e.to_string())?;
            worst = worst.max((&rotated.samples - &direct.samples).iter().fold(0.0, |m: f64, v| m.max(v.abs())));
        }
    }

    // scores of imperfect predictions survive rotating audio, references and predictions together
    let mut run = RunConfig::default();
    run.catalog.n_classes = 4;
    run.scene.duration_s = 20.0;
    let gen = SceneGenerator::new(run.scene.clone(), run.catalog.build().unwrap(), 24_000).map_err(|e| e.to_string())?;
    let scene = gen.generate::<f64>(66).map_err(|e| e.to_string())?;
    let refs = annotation_records(&scene.annotation);
    let mut preds = Vec::new();
    for (k, r) in refs.iter().enumerate() {
        if k % 7 == 3 {
            continue;
        }
        let mut p = *r;
        p.source_id = 0;
        if k % 3 == 0 {
            p.azimuth = zsseld::spatial::wrap_azimuth(p.azimuth + 25.0);
        }
        preds.push(p);
        if k % 11 == 0 {
            preds.push(AnnotationRecord {
                class_id: (r.class_id + 1) % 4,
                elevation: -r.elevation,
                ..p
            });
        }
    }
    let base = evaluate_records(&refs, &preds, &run.metrics);
    let (mut count_changes, mut le_dev) = (0usize, 0.0f64);
    for rot in FoaRotation::all() {
        let (_, ann) = rotate_foa(&scene.wave, &scene.annotation, rot).map_err(|e| e.to_string())?;
        let rrefs = annotation_records(&ann);
        let rpreds: Vec<_> = preds
            .iter()
            .map(|p| {
                let d = rot.apply_direction(&SphericalDirection::new(p.azimuth, p.elevation));
                AnnotationRecord {
                    azimuth: zsseld::spatial::wrap_azimuth(d.azimuth),
                    elevation: d.elevation,
                    ..*p
                }
            })
            .collect();
        let r = evaluate_records(&rrefs, &rpreds, &run.metrics);
        // ER, F and LR are ratios of counts; LE goes through acos of rotated vectors
        if (r.er20, r.f20, r.lr_cd) != (base.er20, base.f20, base.lr_cd) {
            count_changes += 1;
        }
        le_dev = le_dev.max((r.le_cd - base.le_cd).abs());
    }
    check(
        worst < 1e-6 && count_changes == 0 && le_dev < 1e-6,
        format!(
            "16 rotations x 100 events, max sample deviation {worst:.1e} (tol 1e-6); scores under joint rotation: ER/F/LR changed in {count_changes} rotations, LE within {le_dev:.1e} deg (E_SELD {:.3})",
            base.e_seld
        ),
    )
}

// ---------------------------------------------------------------- 7-9

const N_TRAIN: u64 = 64;
const N_HELDOUT: u64 = 16;
const ITERATIONS: u64 = 1200;

struct HeldOut {
    refs: Vec<AnnotationRecord>,
    /// Network outputs, with clip embeddings for the override.
    outputs: SceneOutputs<f32>,
}

struct Trained {
    run: RunConfig,
    zero: SupportSet<f32>,
    few: SupportSet<f32>,
    heldout: Vec<HeldOut>,
    final_loss: f64,
    seconds: f64,
}

fn desk_config() -> RunConfig {
    let mut run = RunConfig::default();
    run.seed = 2024;
    run.catalog.n_classes = 4;
    run.provider.stub = StubProviderConfig {
        orthogonalize: true,
        ..StubProviderConfig::default()
    };
    run.training.iterations = ITERATIONS;
    run.training.batch_size = 8;
    run.training.val_interval = 100;
    run.optimizer.schedule = ScheduleConfig {
        peak_lr: 3e-3,
        warmup_iters: 100,
        decay_factor: 0.5,
        decay_interval: 400,
    };
    run.validate().expect("desk config is valid");
    run
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let t0 = Instant::now();
        let run = desk_config();
        let catalog = run.catalog.build().unwrap();
        let stub = StubProvider::new(catalog.clone(), run.provider.stub.clone()).unwrap();
        let gen = SceneGenerator::new(run.scene.clone(), catalog.clone(), run.features.sample_rate).unwrap();
        let frontend = Frontend::new(&run);
        let mut data = Dataset::<f32>::new(frontend.clone());
        for i in 0..N_TRAIN {
            let scene = gen.generate::<f32>(run.stream_seed("scene", i)).unwrap();
            let targets = oracle_targets(&scene.annotation, &stub, run.network.n_tracks, gen.sample_rate).unwrap();
            data.push(&scene.wave, targets).unwrap();
        }
        let mut net = EmbedAccdoaNet::<f32>::new(run.network.clone(), run.stream_seed("init", 0)).unwrap();
        let mut opt = Adam::new(run.optimizer, net.params());
        let rows = train(&mut net, &mut opt, &data, &[], &run.training, &run.loss, run.stream_seed("batch", 0), |r, _, _| {
            eprintln!("  training: iteration {} loss {:.5}", r.iteration, r.train_loss);
            Ok(())
        })
        .unwrap();
        drop(data);

        let names = catalog.names();
        let zero = build_support_zero::<f32>(&names, &stub, &run.provider.template).unwrap();
        let shots = synthetic_shots::<f32>(&run, &names, 5).unwrap();
        let clips: Vec<Vec<AudioClip<'_, f32>>> = shots
            .class_shots
            .iter()
            .map(|v| v.iter().map(|s| AudioClip::new(s, shots.sample_rate)).collect())
            .collect();
        let bg: Vec<_> = shots.background.iter().map(|s| AudioClip::new(s, shots.sample_rate)).collect();
        let few = build_support_few(&names, &clips, &bg, &stub).unwrap();

        let heldout = (0..N_HELDOUT)
            .map(|i| {
                let scene = gen.generate::<f32>(run.stream_seed("heldout", i)).unwrap();
                HeldOut {
                    refs: annotation_records(&scene.annotation),
                    outputs: run_network(&net, &frontend, &scene.wave, Some(&stub)).unwrap(),
                }
            })
            .collect();
        Trained {
            run,
            zero,
            few,
            heldout,
            final_loss: rows.last().map_or(f64::NAN, |r| r.train_loss),
            seconds: t0.elapsed().as_secs_f64(),
        }
    })
}

fn decode_all(t: &Trained, support: &SupportSet<f32>, cfg: &DecoderConfig) -> Vec<(Vec<Vec<Detection<f32>>>, Vec<AnnotationRecord>)> {
    t.heldout
        .iter()
        .map(|h| {
            let frames = decode_scene(&h.outputs, support, cfg).unwrap();
            let records = detection_records(&frames);
            (frames, records)
        })
        .collect()
}

fn score(t: &Trained, decoded: &[(Vec<Vec<Detection<f32>>>, Vec<AnnotationRecord>)]) -> MetricsReport {
    let counts: SegmentCounts = t
        .heldout
        .iter()
        .zip(decoded)
        .flat_map(|(h, (_, p))| segment_counts(&LabeledFrameSet::from_records(&h.refs), &LabeledFrameSet::from_records(p), &t.run.metrics))
        .sum();
    MetricsReport::from_counts(counts)
}

fn criterion_7() -> Outcome {
    let t = trained();
    let zero = score(t, &decode_all(t, &t.zero, &t.run.decoder));
    let few = score(t, &decode_all(t, &t.few, &t.run.decoder));
    check(
        zero.f20 >= 0.5 && zero.le_cd <= 15.0 && few.e_seld <= zero.e_seld + 0.05,
        format!(
            "{N_TRAIN} scenes, {ITERATIONS} iterations, final loss {:.4}, {:.0} s; held-out zero-shot F {:.3} (>= 0.5), LE {:.1} deg (<= 15), E_SELD {:.3}; few-shot K=5 E_SELD {:.3} (<= {:.3}), F {:.3}, LE {:.1} deg",
            t.final_loss,
            t.seconds,
            zero.f20,
            zero.le_cd,
            zero.e_seld,
            few.e_seld,
            zero.e_seld + 0.05,
            few.f20,
            few.le_cd
        ),
    )
}

/// False positives in 1 s segments whose references overlap somewhere.
fn overlap_false_positives(t: &Trained, decoded: &[(Vec<Vec<Detection<f32>>>, Vec<AnnotationRecord>)]) -> u64 {
    let fps = t.run.metrics.frames_per_segment;
    t.heldout
        .iter()
        .zip(decoded)
        .map(|(h, (_, p))| {
            let refs = LabeledFrameSet::from_records(&h.refs);
            let counts = segment_counts(&refs, &LabeledFrameSet::from_records(p), &t.run.metrics);
            counts
                .iter()
                .enumerate()
                .filter(|(s, _)| (s * fps..(s + 1) * fps).any(|f| refs.polyphony(f) >= 2))
                .map(|(_, c)| c.fp)
                .sum::<u64>()
        })
        .sum()
}

fn criterion_8() -> Outcome {
    let t = trained();
    let base = t.run.decoder;
    let mut counts = Vec::new();
    for k in 0..=6 {
        let sigma_b = 0.8 - 0.1 * k as f64;
        let cfg = DecoderConfig {
            sigma_b: sigma_b.max(base.sigma_a),
            ..base
        };
        counts.push(decode_all(t, &t.zero, &cfg).iter().map(|(_, r)| r.len()).sum::<usize>());
    }
    let monotone = counts.windows(2).all(|w| w[0] <= w[1]);
    let dual = overlap_false_positives(t, &decode_all(t, &t.zero, &base));
    let single = overlap_false_positives(t, &decode_all(t, &t.zero, &DecoderConfig { sigma_b: base.sigma_a, ..base }));
    check(
        monotone && dual < single,
        format!("detections for sigma_b 0.8..0.2: {counts:?}; overlap-segment false positives {dual} at 0.2/0.8 vs {single} at 0.2/0.2"),
    )
}

fn criterion_9() -> Outcome {
    let t = trained();
    let plain = decode_all(t, &t.zero, &t.run.decoder);
    let over = decode_all(
        t,
        &t.zero,
        &DecoderConfig {
            use_clap_combination: true,
            ..t.run.decoder
        },
    );
    let key = |d: &Detection<f32>| (d.label_frame, d.track, d.doa.x.to_bits(), d.doa.y.to_bits(), d.doa.z.to_bits(), d.activity.to_bits());
    let (mut frames, mut relabelled, mut violations) = (0usize, 0usize, 0usize);
    let mut doas_a = Vec::new();
    let mut doas_b = Vec::new();
    for ((fa, _), (fb, _)) in plain.iter().zip(&over) {
        for (a, b) in fa.iter().zip(fb) {
            frames += 1;
            doas_a.extend(a.iter().map(key));
            doas_b.extend(b.iter().map(key));
            let changed = a.iter().zip(b).filter(|(x, y)| x.class_id != y.class_id).count();
            relabelled += changed;
            if a.len() != b.len() || (changed > 0 && a.len() != 1) {
                violations += 1;
            }
        }
    }
    doas_a.sort_unstable();
    doas_b.sort_unstable();
    check(
        doas_a == doas_b && violations == 0,
        format!(
            "{frames} held-out frames, {} detections: DOA/activity multisets identical = {}; {relabelled} single-source labels changed; {violations} frames violating the contract",
            doas_a.len(),
            doas_a == doas_b
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        (1, "E_SELD reproduces the reference rows", criterion_1),
        (2, "ACCDOA encode/decode round trip", criterion_2),
        (3, "PIT loss equals the exhaustive oracle", criterion_3),
        (4, "gradient check of network and composed loss", criterion_4),
        (5, "metric matcher and hand-evaluated scenarios", criterion_5),
        (6, "FOA rotation equivariance", criterion_6),
        (7, "desk-scale zero- and few-shot SELD", criterion_7),
        (8, "dual-threshold behaviour", criterion_8),
        (9, "clip-embedding override contract", criterion_9),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  criterion {id}: {name} -- {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {id}: {name} -- {d} [{secs:.1} s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
