use ndarray::{Array2, Zip};
use rand_distr::{Distribution, StandardNormal};

use super::config::{SamplerConfig, Solver};
use super::model::VelocityModel;
use super::path::cfg_velocity;
use super::{FlowError, LatentSeq};
use crate::conditioning::ConditioningBundle;
use crate::rng::named_rng;

/// Guided velocity for a batch. Scale 1 costs one network call, any other scale two:
/// conditional and null-bundle.
fn guided<M: VelocityModel + ?Sized>(
    model: &M,
    x: &[LatentSeq],
    t: f64,
    cond: &[&ConditioningBundle],
    null: &[&ConditioningBundle],
    scale: f64,
) -> Result<Vec<LatentSeq>, FlowError> {
    let ts = vec![t; x.len()];
    let vc = model.velocity(x, &ts, cond)?;
    if scale == 1.0 {
        return Ok(vc);
    }
    let vu = model.velocity(x, &ts, null)?;
    vc.iter().zip(&vu).map(|(c, u)| cfg_velocity(c, u, scale)).collect()
}

fn step(x: &[LatentSeq], v: &[LatentSeq], h: f64) -> Result<Vec<LatentSeq>, FlowError> {
    x.iter()
        .zip(v)
        .map(|(xi, vi)| {
            if xi.shape() != vi.shape() {
                return Err(FlowError::Shape {
                    op: "sample",
                    lhs: xi.shape(),
                    rhs: vi.shape(),
                });
            }
            LatentSeq::new(Zip::from(xi.values()).and(vi.values()).map_collect(|&a, &b| a - h * b))
        })
        .collect()
}

/// Integrates the guided ODE from the given noise at `t = 1` down to `t = 0` over
/// `cfg.steps` uniform intervals.
pub fn sample_with_noise<M: VelocityModel + ?Sized>(
    model: &M,
    bundles: &[ConditioningBundle],
    noise: Vec<LatentSeq>,
    cfg: &SamplerConfig,
) -> Result<Vec<LatentSeq>, FlowError> {
    cfg.validate()?;
    if noise.is_empty() || noise.len() != bundles.len() {
        return Err(FlowError::InvalidConfig(format!(
            "{} noise latents for {} bundles",
            noise.len(),
            bundles.len()
        )));
    }
    let cond: Vec<&ConditioningBundle> = bundles.iter().collect();
    let nulls: Vec<ConditioningBundle> = bundles.iter().map(ConditioningBundle::to_null).collect();
    let null: Vec<&ConditioningBundle> = nulls.iter().collect();
    let n = cfg.steps;
    let dt = 1.0 / n as f64;
    let s = cfg.guidance_scale;
    let mut x = noise;
    for k in 0..n {
        let t = (n - k) as f64 / n as f64;
        x = match cfg.solver {
            Solver::Euler => {
                let v = guided(model, &x, t, &cond, &null, s)?;
                step(&x, &v, dt)?
            }
            Solver::Midpoint => {
                let v1 = guided(model, &x, t, &cond, &null, s)?;
                let mid = step(&x, &v1, 0.5 * dt)?;
                let v2 = guided(model, &mid, t - 0.5 * dt, &cond, &null, s)?;
                step(&x, &v2, dt)?
            }
        };
    }
    Ok(x)
}

/// Samples one latent of `frames` frames per bundle. Starting noise comes from
/// `cfg.seed`, drawn item by item in bundle order.
pub fn sample_batch<M: VelocityModel + ?Sized>(
    model: &M,
    bundles: &[ConditioningBundle],
    frames: usize,
    cfg: &SamplerConfig,
) -> Result<Vec<LatentSeq>, FlowError> {
    let mut rng = named_rng(cfg.seed, "sampler-noise");
    let d = model.latent_dim();
    let noise = bundles
        .iter()
        .map(|_| LatentSeq::new(Array2::from_shape_simple_fn((frames, d), || StandardNormal.sample(&mut rng))))
        .collect::<Result<Vec<_>, _>>()?;
    sample_with_noise(model, bundles, noise, cfg)
}

pub fn sample<M: VelocityModel + ?Sized>(
    model: &M,
    bundle: &ConditioningBundle,
    frames: usize,
    cfg: &SamplerConfig,
) -> Result<LatentSeq, FlowError> {
    Ok(sample_batch(model, std::slice::from_ref(bundle), frames, cfg)?.remove(0))
}
