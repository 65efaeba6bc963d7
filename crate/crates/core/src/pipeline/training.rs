use super::{Dataset, PipelineError};
use crate::config::{stream_seed, TrainingConfig};
use crate::nn::{train_step, Adam, EmbedAccdoaNet, NetError, TrainExample};
use crate::pit::{pit_loss, LossConfig};
use crate::scalar::Scalar;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRow {
    pub iteration: u64,
    /// Mean batch loss since the previous row.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

/// Mean PIT loss over `examples`.
pub fn validation_loss<T: Scalar>(
    net: &EmbedAccdoaNet<T>,
    examples: &[TrainExample<T>],
    loss_cfg: &LossConfig,
) -> Result<f64, NetError> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for ex in examples {
        let out = net.forward(&ex.features)?;
        total += pit_loss(&ex.targets, &out, loss_cfg)?.0.as_f64();
    }
    Ok(total / examples.len() as f64)
}

/// Trains from the optimizer's current step up to `cfg.iterations`.
/// Batches for iteration `i` come from a stream seeded by
/// `(batch_seed, i)`, so a resumed run sees the same batches. Every
/// `val_interval` iterations (and at the end) a log row is produced and
/// handed to `on_row` together with the current state.
#[allow(clippy::too_many_arguments)]
pub fn train<T: Scalar>(
    net: &mut EmbedAccdoaNet<T>,
    opt: &mut Adam<T>,
    data: &Dataset<T>,
    val: &[TrainExample<T>],
    cfg: &TrainingConfig,
    loss_cfg: &LossConfig,
    batch_seed: u64,
    mut on_row: impl FnMut(&TrainLogRow, &EmbedAccdoaNet<T>, &Adam<T>) -> Result<(), PipelineError>,
) -> Result<Vec<TrainLogRow>, PipelineError> {
    if data.is_empty() {
        return Err(PipelineError::Other("no training scenes".into()));
    }
    let mut rows = Vec::new();
    let (mut acc, mut n_acc) = (0.0, 0u64);
    while opt.step < cfg.iterations {
        let it = opt.step + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(batch_seed, "batch", it));
        let batch: Vec<_> = (0..cfg.batch_size).map(|_| data.sample(&mut rng)).collect();
        let lr = opt.next_lr();
        acc += train_step(net, opt, &batch, loss_cfg)?.as_f64();
        n_acc += 1;
        if it % cfg.val_interval == 0 || it == cfg.iterations {
            let val_loss = if val.is_empty() { None } else { Some(validation_loss(net, val, loss_cfg)?) };
            let row = TrainLogRow {
                iteration: it,
                train_loss: acc / n_acc as f64,
                val_loss,
                lr,
            };
            on_row(&row, net, opt)?;
            rows.push(row);
            (acc, n_acc) = (0.0, 0);
        }
    }
    Ok(rows)
}
