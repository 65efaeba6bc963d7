use crate::error::CliError;
use std::path::Path;
use zsseld::config::RunConfig;
use zsseld::metrics::evaluate_records;
use zsseld::records::load_records;

pub fn run(run: &RunConfig, pred: &Path, reference: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let preds = load_records(pred).map_err(|e| CliError::from(e).context(pred.display()))?;
    let refs = load_records(reference).map_err(|e| CliError::from(e).context(reference.display()))?;
    let report = evaluate_records(&refs, &preds, &run.metrics);
    print!("{}", report.to_text());
    if let Some(p) = out {
        std::fs::write(p, report.to_key_values())?;
    }
    Ok(())
}
