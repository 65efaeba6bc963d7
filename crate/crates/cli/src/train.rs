use crate::error::CliError;
use crate::manifest::{Manifest, Split};
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use zsseld::audio::read_wav;
use zsseld::config::RunConfig;
use zsseld::embedding::{read_embedding_table, EmbeddingError};
use zsseld::nn::{load_checkpoint, save_checkpoint, Adam, EmbedAccdoaNet, NetError};
use zsseld::pipeline::{check_network, train, Dataset, Frontend, PipelineError, TrainLogRow};
use zsseld::records::{annotation_from_records, load_records};
use zsseld::scene::{event_key, FoaRotation, OracleTargets};

fn load_split(run: &RunConfig, dir: &Path, manifest: &Manifest, split: Split) -> Result<Dataset<f32>, CliError> {
    let mut data = Dataset::new(Frontend::new(run));
    for entry in manifest.scenes.iter().filter(|s| s.split == split) {
        let ctx = |e: CliError| e.context(format!("scene {}", entry.index));
        entry.verify(dir).map_err(ctx)?;
        let wave = read_wav::<f32>(&dir.join(&entry.wav))?;
        let records = load_records(&dir.join(&entry.annotation)).map_err(|e| ctx(e.into()))?;
        let (annotation, sources) = annotation_from_records(&records, manifest.duration_s);
        let table = read_embedding_table::<f32>(&dir.join(&entry.embeddings)).map_err(|e| ctx(e.into()))?;
        let embeddings = sources
            .iter()
            .map(|&s| {
                let key = event_key(s);
                table.get(&key).cloned().ok_or(EmbeddingError::UnknownKey(key))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ctx(e.into()))?;
        let targets = OracleTargets::from_event_embeddings(&annotation, embeddings, run.network.n_tracks, run.network.embed_dim)
            .map_err(|e| ctx(e.into()))?;
        if split == Split::Train {
            for r in 0..run.training.rotated_copies {
                // distinct non-identity rotations, offset per scene
                let id = ((entry.index + r) % (FoaRotation::COUNT as usize - 1) + 1) as u8;
                data.push_rotated(&wave, &annotation, &targets, FoaRotation::from_id(id)?)?;
            }
        }
        data.push(&wave, targets)?;
    }
    Ok(data)
}

fn log_path(out: &Path, log: Option<&Path>) -> PathBuf {
    log.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut s = out.as_os_str().to_owned();
        s.push(".log.csv");
        PathBuf::from(s)
    })
}

/// Writes to a sibling file first so that an interrupted write never
/// replaces the previous checkpoint.
fn save_atomic(out: &Path, net: &EmbedAccdoaNet<f32>, opt: &Adam<f32>) -> Result<(), PipelineError> {
    let mut tmp = out.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    save_checkpoint(&tmp, net, Some(opt))?;
    std::fs::rename(&tmp, out).map_err(NetError::from)?;
    Ok(())
}

pub fn run(run: &RunConfig, data_dir: &Path, out: &Path, resume: Option<&Path>, log: Option<&Path>) -> Result<(), CliError> {
    let manifest = Manifest::load(data_dir)?;
    if manifest.sample_rate != run.features.sample_rate || manifest.embed_dim != run.network.embed_dim {
        return Err(CliError::Validation(format!(
            "data is {} Hz with {}-d embeddings, config expects {} Hz and {}-d",
            manifest.sample_rate, manifest.embed_dim, run.features.sample_rate, run.network.embed_dim
        )));
    }
    let data = load_split(run, data_dir, &manifest, Split::Train)?;
    let val = load_split(run, data_dir, &manifest, Split::Val)?.regular_examples(run.training.val_segments);
    eprintln!("{} training scenes, {} validation segments", data.len(), val.len());

    let (mut net, mut opt) = match resume {
        Some(p) => {
            let ck = load_checkpoint::<f32>(p).map_err(|e| CliError::from(e).context(p.display()))?;
            if ck.net.config() != &run.network {
                return Err(CliError::Validation(format!("{}: network differs from the config", p.display())));
            }
            let opt = ck
                .optimizer
                .ok_or_else(|| CliError::Validation(format!("{}: no optimizer state to resume", p.display())))?;
            (ck.net, opt)
        }
        None => {
            let net = EmbedAccdoaNet::<f32>::new(run.network.clone(), run.stream_seed("init", 0))?;
            let opt = Adam::new(run.optimizer, net.params());
            (net, opt)
        }
    };
    check_network(run, net.config())?;

    let log = log_path(out, log);
    let append = resume.is_some() && log.exists();
    let mut log_file = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(&log)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", log.display())))?;
    if !append {
        writeln!(log_file, "iteration,train_loss,val_loss")?;
    }
    let on_row = |row: &TrainLogRow, net: &EmbedAccdoaNet<f32>, opt: &Adam<f32>| {
        save_atomic(out, net, opt)?;
        let val = row.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(log_file, "{},{:.6},{val}", row.iteration, row.train_loss)
            .and_then(|_| log_file.flush())
            .map_err(NetError::from)?;
        eprintln!("iteration {}: train {:.5} val {val} lr {:.2e}", row.iteration, row.train_loss, row.lr);
        Ok(())
    };
    let batch_seed = run.stream_seed("batch", 0);
    train(&mut net, &mut opt, &data, &val, &run.training, &run.loss, batch_seed, on_row).map_err(|e| match e {
        PipelineError::Net(NetError::Divergence { .. }) => {
            let kept = if out.exists() { format!("last checkpoint kept at {}", out.display()) } else { "no checkpoint written".into() };
            CliError::Runtime(format!("{e}; {kept}"))
        }
        e => e.into(),
    })?;
    Ok(())
}
