use crate::error::CliError;
use crate::SupportMode;
use serde::Deserialize;
use std::path::Path;
use zsseld::audio::read_wav;
use zsseld::config::{ProviderKind, RunConfig};
use zsseld::embedding::{build_support_few, build_support_zero, AudioClip, SupportFile, SupportProvenance};
use zsseld::pipeline::{build_provider, synthetic_shots};

/// Class label of noise-only clips in a clip list.
pub const BACKGROUND: &str = "_background";

#[derive(Debug, Deserialize)]
struct ClipRow {
    class: String,
    path: String,
}

struct Clip {
    key: String,
    samples: Vec<f32>,
    sample_rate: u32,
}

/// Reads the first channel of every clip, grouped by class and background.
fn clips_from_list(list: &Path, classes: &[String], cap: Option<usize>) -> Result<(Vec<Vec<Clip>>, Vec<Clip>), CliError> {
    let base = list.parent().unwrap_or(Path::new("."));
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(list)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", list.display())))?;
    let mut shots: Vec<Vec<Clip>> = classes.iter().map(|_| Vec::new()).collect();
    let mut background = Vec::new();
    for row in rd.deserialize::<ClipRow>() {
        let row = row.map_err(|e| CliError::Validation(format!("{}: {e}", list.display())))?;
        let slot = if row.class == BACKGROUND {
            &mut background
        } else {
            let c = classes
                .iter()
                .position(|n| *n == row.class)
                .ok_or_else(|| CliError::Validation(format!("clip list names unknown class {:?}", row.class)))?;
            &mut shots[c]
        };
        if cap.is_some_and(|k| slot.len() >= k) {
            continue;
        }
        let wave = read_wav::<f32>(&base.join(&row.path))?;
        slot.push(Clip {
            key: row.path,
            samples: wave.channel(0).to_vec(),
            sample_rate: wave.sample_rate,
        });
    }
    Ok((shots, background))
}

fn synthesized_clips(run: &RunConfig, classes: &[String], k: usize) -> Result<(Vec<Vec<Clip>>, Vec<Clip>), CliError> {
    let shots = synthetic_shots::<f32>(run, classes, k).map_err(|e| CliError::Validation(e.to_string()))?;
    let sr = shots.sample_rate;
    let clip = |key: String, samples: Vec<f32>| Clip {
        key,
        samples,
        sample_rate: sr,
    };
    let class_clips = classes
        .iter()
        .zip(shots.class_shots)
        .map(|(name, v)| v.into_iter().enumerate().map(|(i, s)| clip(format!("{name}_{i}"), s)).collect())
        .collect();
    let background = shots
        .background
        .into_iter()
        .enumerate()
        .map(|(i, s)| clip(format!("{BACKGROUND}_{i}"), s))
        .collect();
    Ok((class_clips, background))
}

fn as_clips(v: &[Clip]) -> Vec<AudioClip<'_, f32>> {
    v.iter()
        .map(|c| AudioClip::keyed(&c.key, &c.samples, c.sample_rate))
        .collect()
}

pub fn run(
    run: &RunConfig,
    mode: SupportMode,
    classes: Option<Vec<String>>,
    clips: Option<&Path>,
    shots: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let classes = match classes {
        Some(c) => c,
        None => run.catalog.build().map_err(|e| CliError::Validation(e.to_string()))?.names(),
    };
    let provider = build_provider::<f32>(run)?;
    let provider_name = match run.provider.kind {
        ProviderKind::Stub => "stub",
        ProviderKind::File => "file",
    };
    let (support, provenance) = match mode {
        SupportMode::Zero => {
            let s = build_support_zero(&classes, provider.as_ref(), &run.provider.template)?;
            let p = SupportProvenance {
                mode: "zero".into(),
                shots: 0,
                seed: run.seed,
                provider: provider_name.into(),
                template: Some(run.provider.template.0.clone()),
            };
            (s, p)
        }
        SupportMode::Few => {
            let (shot_clips, background) = match clips {
                Some(list) => clips_from_list(list, &classes, shots)?,
                None if run.provider.kind == ProviderKind::Stub => synthesized_clips(run, &classes, shots.unwrap_or(5))?,
                None => return Err(CliError::Validation("few-shot support with a file provider needs --clips".into())),
            };
            let class_clips: Vec<_> = shot_clips.iter().map(|v| as_clips(v)).collect();
            let s = build_support_few(&classes, &class_clips, &as_clips(&background), provider.as_ref())?;
            let p = SupportProvenance {
                mode: "few".into(),
                shots: shot_clips.iter().map(Vec::len).min().unwrap_or(0),
                seed: run.seed,
                provider: provider_name.into(),
                template: None,
            };
            (s, p)
        }
    };
    SupportFile::from_support(&support, provenance).save(out)?;
    eprintln!("{} classes + noise, {}-d", support.n_classes(), support.dim());
    Ok(())
}
