use crate::error::CliError;
use std::path::Path;
use zsseld::audio::read_wav;
use zsseld::config::RunConfig;
use zsseld::embedding::SupportFile;
use zsseld::nn::load_checkpoint;
use zsseld::pipeline::{build_provider, check_network, infer_records, Frontend};
use zsseld::records::save_records;

pub fn run(
    run: &RunConfig,
    checkpoint: &Path,
    support: &Path,
    audio: &Path,
    clap_override: bool,
    out: &Path,
) -> Result<(), CliError> {
    let net = load_checkpoint::<f32>(checkpoint)
        .map_err(|e| CliError::from(e).context(checkpoint.display()))?
        .net;
    check_network(run, net.config())?;
    let support = SupportFile::load(support)
        .and_then(|f| f.to_support::<f32>())
        .map_err(|e| CliError::from(e).context(support.display()))?;
    eprintln!(
        "support: {} classes, {}-d; network: {}-d",
        support.n_classes(),
        support.dim(),
        net.config().embed_dim
    );
    if support.dim() != net.config().embed_dim {
        return Err(CliError::Validation(format!(
            "incompatible inputs: checkpoint embeddings are {}-d, support set is {}-d",
            net.config().embed_dim,
            support.dim()
        )));
    }
    let wave = read_wav::<f32>(audio)?;
    if wave.sample_rate != run.features.sample_rate || wave.n_channels() != 4 {
        return Err(CliError::Validation(format!(
            "{}: {} channels at {} Hz, expected 4 FOA channels at {} Hz",
            audio.display(),
            wave.n_channels(),
            wave.sample_rate,
            run.features.sample_rate
        )));
    }
    let mut cfg = run.decoder;
    cfg.use_clap_combination |= clap_override;
    let provider = if cfg.use_clap_combination { Some(build_provider::<f32>(run)?) } else { None };
    let records = infer_records(&net, &Frontend::new(run), &wave, &support, &cfg, provider.as_deref())?;
    save_records(out, &records)?;
    eprintln!("{} detections", records.len());
    Ok(())
}
