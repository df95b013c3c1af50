//! Central-difference validation of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::DiffError;

/// Outcome of a gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    /// max over checked coordinates of `|a - n| / max(|a|, |n|, 1e-8)`.
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

fn evaluate<F>(f: &F, inputs: &[Tensor]) -> Result<f64, DiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, DiffError>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&tape, &vars)?.item()?;
    if !out.is_finite() {
        return Err(DiffError::NonFinite("gradcheck objective".into()));
    }
    Ok(out)
}

/// Checks every coordinate of every input.
pub fn gradcheck<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradcheckReport, DiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, DiffError>,
{
    gradcheck_sampled(f, inputs, eps, usize::MAX, 0)
}

/// Checks at most `per_input` randomly chosen coordinates of each input.
pub fn gradcheck_sampled<F>(
    f: F,
    inputs: &[Tensor],
    eps: f64,
    per_input: usize,
    seed: u64,
) -> Result<GradcheckReport, DiffError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, DiffError>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars)?;
        let mut grads = tape.backward(out)?;
        vars.iter().map(|&v| grads.take_or_zeros(v)).collect()
    };
    for g in &analytic {
        if !g.all_finite() {
            return Err(DiffError::NonFinite("analytic gradient".into()));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut report = GradcheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    for (which, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = if input.len() <= per_input {
            (0..input.len()).collect()
        } else {
            let mut c = sample(&mut rng, input.len(), per_input).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = input.data()[i];
            work[which].data_mut()[i] = orig + eps;
            let plus = evaluate(&f, &work)?;
            work[which].data_mut()[i] = orig - eps;
            let minus = evaluate(&f, &work)?;
            work[which].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[which].data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = (which, i);
            }
        }
    }
    Ok(report)
}
