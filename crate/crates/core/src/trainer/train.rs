use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, EpochRecord};
use super::config::{lr_at_epoch, TrainConfig};
use super::network::{Architecture, FeatureNorm, Model};
use crate::datastore::{Dataset, Split};
use crate::diffcore::ParamSet;
use crate::error::{Error, Result};
use crate::mas::{derive_seed, expand_group, Sample, GROUP_SIZE};
use crate::metrics::{average_of, evaluate};
use crate::scores::BigFiveScores;

/// Mean of `|pred − label|` over samples and traits.
pub fn mae_loss(pred: &[BigFiveScores], label: &[BigFiveScores]) -> Result<f64> {
    if pred.len() != label.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", pred.len(), label.len())));
    }
    if pred.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let total: f64 = pred
        .iter()
        .zip(label)
        .flat_map(|(p, l)| p.values().iter().zip(l.values()).map(|(a, b)| (a - b).abs()))
        .sum();
    Ok(total / (5 * pred.len()) as f64)
}

/// Shuffle stream index, distinct from every per-sample stream.
const SHUFFLE_STREAM: u64 = u64::MAX;

/// Shuffled `(base sample, form)` pairs for one epoch.
pub fn epoch_plan(n_base: usize, epoch: usize, config: &TrainConfig) -> Vec<(usize, usize)> {
    let forms = if config.use_mas { GROUP_SIZE } else { 1 };
    let mut plan: Vec<(usize, usize)> = (0..n_base).flat_map(|b| (0..forms).map(move |f| (b, f))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, SHUFFLE_STREAM, epoch as u64));
    plan.shuffle(&mut rng);
    plan
}

/// Form `form` of base sample `base` for `epoch`, drawn from that sample's own stream.
pub fn training_form(samples: &[Sample], base: usize, form: usize, epoch: usize, config: &TrainConfig) -> Sample {
    if !config.use_mas {
        return samples[base].clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, base as u64, epoch as u64));
    expand_group(&samples[base], &mut rng, &config.mas()).into_forms().swap_remove(form)
}

/// Mean loss and summed gradients (name order) for a batch.
fn batch_gradients(
    arch: &Architecture,
    params: &ParamSet,
    norm: &FeatureNorm,
    batch: &[Sample],
) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut grads: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
    let mut loss_sum = 0.0;
    for sample in batch {
        let (mut tape, bindings, out) = arch.record(params, &norm.apply(sample)?)?;
        let loss = tape.mean_abs_error(out, sample.label.values())?;
        loss_sum += tape.value(loss).values()[0];
        tape.backward(loss)?;
        for (acc, (_, var)) in grads.iter_mut().zip(bindings.iter()) {
            if let Some(g) = tape.grad(var) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
    }
    Ok((loss_sum, grads))
}

/// Trains on the manifest's train split and selects on its val split.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<Checkpoint> {
    train_on(
        &dataset.samples(Split::Train),
        &dataset.samples(Split::Val),
        config,
        &mut |_| {},
    )
}

/// Plain SGD on the mean absolute error.
///
/// Standardization statistics are fitted on the raw `train` features and
/// become part of the model; augmentation acts on raw features. Each epoch visits
/// every base sample (all six augmented forms when `use_mas`) in a seeded
/// order. The returned checkpoint holds the parameters with the best
/// validation average accuracy, or the final ones when `val` is empty.
pub fn train_on(
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<Checkpoint> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let norm = FeatureNorm::fit(train)?;
    let arch = Architecture::new(config.branch())?;
    let mut params = arch.init(config.seed)?;
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ParamSet)> = None;

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(epoch, config)?;
        let plan = epoch_plan(train.len(), epoch, config);
        let mut epoch_loss = 0.0;
        for (bi, chunk) in plan.chunks(config.batch_size).enumerate() {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&(b, f)| training_form(&train, b, f, epoch, config))
                .collect();
            let (loss_sum, grads) = batch_gradients(&arch, &params, &norm, &batch)?;
            let n = batch.len() as f64;
            let finite = loss_sum.is_finite() && grads.iter().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(Error::Divergence {
                    epoch,
                    batch: bi,
                    loss: loss_sum / n,
                });
            }
            epoch_loss += loss_sum;
            for ((_, t), g) in params.iter_mut().zip(&grads) {
                for (p, g) in t.values_mut().iter_mut().zip(g) {
                    *p = (*p - lr * g / n) as f32 as f64;
                }
            }
        }
        let val_accuracy = if val.is_empty() {
            None
        } else {
            let model = Model::new(arch.clone(), params.clone(), norm.clone())?;
            Some(average_of(&evaluate(&model, &val)?))
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss: epoch_loss / plan.len() as f64,
            val_accuracy,
            samples_seen: plan.len(),
        };
        observer(&record);
        history.push(record);
        match (val_accuracy, &best) {
            (Some(acc), Some((b, _, _))) if acc <= *b => {}
            (Some(acc), _) => best = Some((acc, epoch, params.clone())),
            (None, _) => {}
        }
    }

    let (epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (config.epochs - 1, params),
    };
    Ok(Checkpoint {
        config: config.clone(),
        model: Model::new(arch, params, norm)?,
        epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        let a = BigFiveScores::uniform(0.5).unwrap();
        assert_eq!(mae_loss(&[a], &[a]).unwrap(), 0.0);
        let p = BigFiveScores::new([0.6, 0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!((mae_loss(&[p], &[a]).unwrap() - 0.1 / 5.0).abs() < 1e-15);
        assert!(mae_loss(&[p], &[]).is_err());
    }

    #[test]
    fn plan_sizes() {
        let mut c = TrainConfig::default();
        assert_eq!(epoch_plan(10, 0, &c).len(), 60);
        c.use_mas = false;
        let p = epoch_plan(10, 0, &c);
        assert_eq!(p.len(), 10);
        let mut bases: Vec<usize> = p.iter().map(|x| x.0).collect();
        bases.sort();
        assert_eq!(bases, (0..10).collect::<Vec<_>>());
        assert_ne!(epoch_plan(10, 0, &c), epoch_plan(10, 1, &c));
    }
}
