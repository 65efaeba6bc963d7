use crate::error::CliError;
use crate::manifest::{file_sha256, Manifest, SceneEntry, Split};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use zsseld::audio::write_wav;
use zsseld::config::RunConfig;
use zsseld::embedding::{write_embedding_table, EmbeddingTable};
use zsseld::pipeline::build_provider;
use zsseld::records::{annotation_records, save_records};
use zsseld::scene::{event_key, mix_scene, oracle_targets, EventSource, EventSpec, Scene, SceneGenerator};
use zsseld::spatial::SphericalDirection;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptedEvent {
    scene: usize,
    class: usize,
    onset: f64,
    offset: f64,
    azimuth: f64,
    elevation: f64,
    gain: f64,
}

fn read_script(path: &Path) -> Result<BTreeMap<usize, Vec<ScriptedEvent>>, CliError> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut out: BTreeMap<usize, Vec<ScriptedEvent>> = BTreeMap::new();
    for row in rd.deserialize::<ScriptedEvent>() {
        let ev = row.map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        out.entry(ev.scene).or_default().push(ev);
    }
    Ok(out)
}

fn scripted_scene(
    run: &RunConfig,
    gen: &SceneGenerator,
    index: usize,
    seed: u64,
    script: &[ScriptedEvent],
) -> Result<Scene<f64>, CliError> {
    let mut events = Vec::with_capacity(script.len());
    for (k, ev) in script.iter().enumerate() {
        let band = gen
            .catalog
            .get(ev.class)
            .ok_or_else(|| CliError::Validation(format!("scripted event {k}: unknown class {}", ev.class)))?;
        events.push(EventSpec {
            class_id: ev.class,
            onset: ev.onset,
            offset: ev.offset,
            direction: SphericalDirection::new(ev.azimuth, ev.elevation),
            source: EventSource::BandNoise {
                low_hz: band.low_hz,
                high_hz: band.high_hz,
                seed: zsseld::config::stream_seed(seed, "event", k as u64),
            },
            gain: ev.gain,
        });
    }
    events.sort_by(|a, b| a.onset.total_cmp(&b.onset).then(a.class_id.cmp(&b.class_id)));
    let (wave, annotation) = mix_scene(
        events,
        run.scene.duration_s,
        gen.sample_rate,
        run.scene.noise_level,
        zsseld::config::stream_seed(seed, "noise", 0),
        run.scene.max_polyphony,
    )
    .map_err(|e| CliError::from(e).context(format!("scene {index}")))?;
    Ok(Scene { wave, annotation })
}

pub fn run(run: &RunConfig, out: &Path, events: Option<&Path>) -> Result<(), CliError> {
    let script = match events {
        Some(p) => read_script(p)?,
        None => BTreeMap::new(),
    };
    let n = run.simulate.n_scenes;
    if let Some(&bad) = script.keys().find(|&&s| s >= n) {
        return Err(CliError::Validation(format!("scripted scene {bad} but only {n} scenes")));
    }
    let catalog = run.catalog.build().map_err(|e| CliError::Validation(e.to_string()))?;
    let gen = SceneGenerator::new(run.scene.clone(), catalog.clone(), run.features.sample_rate)?;
    let provider = build_provider::<f64>(run)?;
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(format!("{}: {e}", out.display())))?;
    let mut scenes = Vec::with_capacity(n);
    for i in 0..n {
        let seed = run.stream_seed("scene", i as u64);
        let scene = match script.get(&i) {
            Some(s) => scripted_scene(run, &gen, i, seed, s)?,
            None => gen
                .generate::<f64>(seed)
                .map_err(|e| CliError::from(e).context(format!("scene {i}")))?,
        };
        let targets = oracle_targets(&scene.annotation, provider.as_ref(), run.network.n_tracks, gen.sample_rate)
            .map_err(|e| CliError::from(e).context(format!("scene {i}")))?;
        let mut table = EmbeddingTable::<f64>::new(provider.dim());
        for (j, e) in targets.event_embeddings().iter().enumerate() {
            table.insert(&event_key(j), e.clone())?;
        }
        let stem = format!("scene_{i:04}");
        let (wav, csv, emb) = (format!("{stem}.wav"), format!("{stem}.csv"), format!("{stem}.emb.tsv"));
        write_wav(&out.join(&wav), &scene.wave)?;
        save_records(&out.join(&csv), &annotation_records(&scene.annotation))?;
        write_embedding_table(&out.join(&emb), &table)?;
        let mut sha256 = BTreeMap::new();
        for name in [&wav, &csv, &emb] {
            sha256.insert(name.clone(), file_sha256(&out.join(name))?);
        }
        scenes.push(SceneEntry {
            index: i,
            seed,
            split: if i + run.simulate.n_val_scenes >= n { Split::Val } else { Split::Train },
            wav,
            annotation: csv,
            embeddings: emb,
            sha256,
        });
        eprintln!("scene {i}: {} events", scene.annotation.events.len());
    }
    Manifest {
        version: Manifest::VERSION,
        root_seed: run.seed,
        sample_rate: gen.sample_rate,
        duration_s: run.scene.duration_s,
        n_classes: catalog.len(),
        embed_dim: provider.dim(),
        scenes,
    }
    .save(out)
}
