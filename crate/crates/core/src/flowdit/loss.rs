use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{Injection, ModelConfig};
use super::model::Dit;
use super::path::{interpolate, target_velocity};
use super::train::Example;
use super::{FlowError, LatentSeq};
use crate::conditioning::{condition_dropout, ConditioningBundle, FeatureSeq, FrameFeatures, SourceFlags};
use crate::diffsub::{gradcheck_sampled, DiffError, GradcheckReport, ParamStore, Tape, Tensor, Var};

/// Randomness of one loss evaluation, drawn per item in order: time, dropout, noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LossDraws {
    pub t: Vec<f64>,
    pub noise: Vec<LatentSeq>,
    /// Bundles after conditioning dropout.
    pub bundles: Vec<ConditioningBundle>,
    pub dropped: Vec<bool>,
}

impl LossDraws {
    pub fn draw<R: Rng + ?Sized>(batch: &[Example], drop_prob: f64, rng: &mut R) -> Result<Self, FlowError> {
        if batch.is_empty() {
            return Err(FlowError::EmptyBatch);
        }
        let mut d = Self {
            t: Vec::with_capacity(batch.len()),
            noise: Vec::with_capacity(batch.len()),
            bundles: Vec::with_capacity(batch.len()),
            dropped: Vec::with_capacity(batch.len()),
        };
        for ex in batch {
            d.t.push(rng.random::<f64>());
            let (bundle, dropped) = condition_dropout(&ex.bundle, drop_prob, rng)?;
            d.bundles.push(bundle);
            d.dropped.push(dropped);
            let (frames, dim) = ex.x0.shape();
            let noise = Array2::from_shape_simple_fn((frames, dim), || StandardNormal.sample(&mut *rng));
            d.noise.push(LatentSeq::new(noise)?);
        }
        Ok(d)
    }
}

/// Mean squared error between `predict(x_t, t, bundles)` and the path velocity `x1 - x0`,
/// with `x_t` on the straight path between data `x0` and noise `x1` at the drawn times.
pub fn rf_loss_with<'t, F>(
    tape: &'t Tape,
    batch: &[Example],
    draws: &LossDraws,
    predict: F,
) -> Result<Var<'t>, FlowError>
where
    F: FnOnce(Var<'t>, &[f64], &[&ConditioningBundle]) -> Result<Var<'t>, FlowError>,
{
    let first = batch.first().ok_or(FlowError::EmptyBatch)?;
    let (frames, dim) = first.x0.shape();
    let mut xt = Vec::with_capacity(batch.len() * frames * dim);
    let mut target = Vec::with_capacity(xt.capacity());
    for (i, ex) in batch.iter().enumerate() {
        if ex.x0.shape() != (frames, dim) {
            return Err(FlowError::Shape {
                op: "rf_loss",
                lhs: (frames, dim),
                rhs: ex.x0.shape(),
            });
        }
        xt.extend(interpolate(&ex.x0, &draws.noise[i], draws.t[i])?.values().iter());
        target.extend(target_velocity(&ex.x0, &draws.noise[i])?.values().iter());
    }
    let shape = vec![batch.len(), frames, dim];
    let xt = tape.constant(Tensor::new(shape.clone(), xt)?);
    let target = tape.constant(Tensor::new(shape, target)?);
    let bundles: Vec<&ConditioningBundle> = draws.bundles.iter().collect();
    let pred = predict(xt, &draws.t, &bundles)?;
    Ok(pred.sub(target)?.square()?.mean()?)
}

/// Rectified-flow loss of `dit` on a batch, drawing times, noise and dropout from `rng`.
pub fn rf_loss<'t, R: Rng + ?Sized>(
    dit: &Dit,
    p: &[Var<'t>],
    batch: &[Example],
    drop_prob: f64,
    rng: &mut R,
) -> Result<Var<'t>, FlowError> {
    let draws = LossDraws::draw(batch, drop_prob, rng)?;
    let tape = p.first().map(|v| v.tape()).ok_or(FlowError::EmptyBatch)?;
    rf_loss_with(tape, batch, &draws, |x, t, b| dit.forward(p, x, t, b))
}

/// Pass mark for [`loss_gradcheck`].
pub const LOSS_GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Finite-difference check of the full loss through a small Hybrid model with every
/// source present, after moving all parameters off their initial values. Returns the name
/// of the worst parameter with the report.
pub fn loss_gradcheck(seed: u64) -> Result<(String, GradcheckReport), FlowError> {
    let cfg = ModelConfig {
        latent_dim: 2,
        mm_dim: 3,
        trans_dim: 4,
        sync_dim: 1,
        mel_dim: 2,
        context_dim: 4,
        depth: 2,
        width: 8,
        heads: 2,
        mlp_ratio: 2,
        time_features: 4,
        time_slot: 2,
        encoder_blocks: 1,
        injection: Injection::Hybrid,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let dit = Dit::new(&mut store, cfg, &mut rng)?;
    store.jitter(0.2, &mut rng);
    let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
    let bundle = ConditioningBundle {
        mm: FeatureSeq::from_tokens(Array2::from_shape_simple_fn((2, 3), &mut n))?,
        transcript: "ab".into(),
        low: FrameFeatures::from_frames(Array2::from_shape_simple_fn((3, 3), &mut n))?,
        flags: SourceFlags {
            mm: true,
            transcript: true,
            sync: true,
            mel: true,
        },
    };
    let batch = vec![
        Example {
            x0: LatentSeq::new(Array2::from_shape_simple_fn((3, 2), &mut n))?,
            bundle: bundle.clone(),
        },
        Example {
            x0: LatentSeq::new(Array2::from_shape_simple_fn((3, 2), &mut n))?,
            bundle: bundle.to_null(),
        },
    ];
    let draws = LossDraws::draw(&batch, 0.0, &mut rng)?;
    let report = gradcheck_sampled(
        |tape, vars| {
            rf_loss_with(tape, &batch, &draws, |x, t, b| dit.forward(vars, x, t, b))
                .map_err(|e| DiffError::InvalidConfig(e.to_string()))
        },
        &store.tensors(),
        1e-6,
        4,
        seed,
    )?;
    let name = store.iter().nth(report.worst.0).map(|p| p.name.clone()).unwrap_or_default();
    Ok((name, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::ConditioningBundle;
    use rand::SeedableRng;

    fn example(x0: Array2<f64>) -> Example {
        let frames = x0.nrows();
        Example {
            x0: LatentSeq::new(x0).unwrap(),
            bundle: ConditioningBundle::null(2, frames, 3),
        }
    }

    #[test]
    fn oracle_and_zero_models() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let batch: Vec<Example> = (0..8)
            .map(|i| example(Array2::from_shape_fn((3, 2), |(a, b)| (i + a * 2 + b) as f64 * 0.1)))
            .collect();
        let draws = LossDraws::draw(&batch, 0.1, &mut rng).unwrap();
        let tape = Tape::new();
        let loss = rf_loss_with(&tape, &batch, &draws, |_, _, _| {
            let data: Vec<f64> = batch
                .iter()
                .zip(&draws.noise)
                .flat_map(|(e, n)| (n.values() - e.x0.values()).into_iter())
                .collect();
            Ok(tape.constant(Tensor::new(vec![8, 3, 2], data)?))
        })
        .unwrap();
        assert_eq!(loss.item().unwrap(), 0.0);

        let zero: Vec<Example> = (0..10_000).map(|_| example(Array2::zeros((1, 1)))).collect();
        let draws = LossDraws::draw(&zero, 0.0, &mut rng).unwrap();
        let loss = rf_loss_with(&tape, &zero, &draws, |x, _, _| Ok(x.mul_scalar(0.0)?))
            .unwrap()
            .item()
            .unwrap();
        assert!((loss - 1.0).abs() < 0.05, "{loss}");
        assert!(loss >= 0.0);
    }

    #[test]
    fn full_loss_gradcheck() {
        let (name, report) = loss_gradcheck(11).unwrap();
        assert!(report.max_rel_err < LOSS_GRADCHECK_TOLERANCE, "{report:?} {name}");
        assert!(report.coordinates > 100);
    }
}
