use super::{Adam, EmbedAccdoaNet, NetError, Tape};
use crate::features::FeatureTensor;
use crate::pit::{pit_loss_grad, LossConfig, TrackFrames};
use crate::scalar::Scalar;

/// One training segment with its targets at model-frame resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample<T> {
    pub features: FeatureTensor<T>,
    pub targets: TrackFrames<T>,
}

/// Forward, PIT loss, backward and one Adam update over `batch`. Returns the
/// batch-mean loss measured before the update.
pub fn train_step<T: Scalar>(
    net: &mut EmbedAccdoaNet<T>,
    opt: &mut Adam<T>,
    batch: &[TrainExample<T>],
    loss_cfg: &LossConfig,
) -> Result<T, NetError> {
    if batch.is_empty() {
        return Err(NetError::Shape("empty training batch".into()));
    }
    let mut grads = net.params().zeros_like();
    let mut total = T::zero();
    let inv_b = T::one() / T::of(batch.len() as f64);
    let mut tape = Tape::new();
    for (i, ex) in batch.iter().enumerate() {
        let out = net.forward_cached(&ex.features, &mut tape)?;
        let (loss, _, mut g) = pit_loss_grad(&ex.targets, &out, loss_cfg)?;
        if !loss.is_finite() || !out.is_finite() {
            return Err(NetError::Divergence {
                iteration: opt.step + 1,
                loss: loss.as_f64(),
                detail: format!(
                    "batch item {i}; parameter norm {:.3e}; lr {:.3e}",
                    net.params().l2_norm().as_f64(),
                    opt.next_lr()
                ),
            });
        }
        total += loss * inv_b;
        g.scale(inv_b);
        net.backward(&mut tape, &g, &mut grads)?;
    }
    if !grads.is_finite() {
        return Err(NetError::Divergence {
            iteration: opt.step + 1,
            loss: total.as_f64(),
            detail: "non-finite gradient".into(),
        });
    }
    opt.update(net.params_mut(), &grads)?;
    Ok(total)
}
