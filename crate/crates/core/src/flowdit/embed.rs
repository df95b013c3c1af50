use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffsub::nn::Linear;
use crate::diffsub::{DiffError, ParamStore, Tensor, Var};

pub const TIME_MAX_FREQUENCY: f64 = 1e4;

/// `[sin(t·ω_i) ; cos(t·ω_i)]` for `dim / 2` frequencies spaced geometrically from 1 to
/// [`TIME_MAX_FREQUENCY`]. `dim` must be even.
pub fn sinusoidal_features(t: f64, dim: usize) -> Vec<f64> {
    assert!(dim % 2 == 0, "time feature width must be even");
    let half = dim / 2;
    let omega = |i: usize| {
        if half <= 1 {
            1.0
        } else {
            TIME_MAX_FREQUENCY.powf(i as f64 / (half - 1) as f64)
        }
    };
    let mut out = Vec::with_capacity(dim);
    out.extend((0..half).map(|i| (t * omega(i)).sin()));
    out.extend((0..half).map(|i| (t * omega(i)).cos()));
    out
}

/// Sinusoidal features followed by `Linear → SiLU → Linear`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeEmbedding {
    pub features: usize,
    pub hidden: Linear,
    pub out: Linear,
}

impl TimeEmbedding {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        features: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        Ok(Self {
            features,
            hidden: Linear::new(store, &format!("{name}.hidden"), features, hidden, rng)?,
            out: Linear::new(store, &format!("{name}.out"), hidden, out_dim, rng)?,
        })
    }

    /// `[B, out_dim]` for a batch of times.
    pub fn forward<'t>(&self, p: &[Var<'t>], t: &[f64]) -> Result<Var<'t>, DiffError> {
        let tape = p.first().map(|v| v.tape()).ok_or(DiffError::Empty("time embedding"))?;
        let data: Vec<f64> = t
            .iter()
            .flat_map(|&ti| sinusoidal_features(ti, self.features))
            .collect();
        let x = tape.constant(Tensor::new(vec![t.len(), self.features], data)?);
        let h = self.hidden.forward(p, x)?.silu()?;
        self.out.forward(p, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffsub::{gradcheck, Tape};
    use rand::SeedableRng;

    #[test]
    fn zero_time() {
        let f = sinusoidal_features(0.0, 8);
        assert_eq!(&f[..4], &[0.0; 4]);
        assert_eq!(&f[4..], &[1.0; 4]);
    }

    #[test]
    fn distinct_times() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let te = TimeEmbedding::new(&mut store, "time", 16, 32, 8, &mut rng).unwrap();
        let ts: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let e = te.forward(&p, &ts).unwrap().value();
        let rows: Vec<&[f64]> = e.data().chunks(8).collect();
        let mut min = f64::INFINITY;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let d: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b).powi(2)).sum();
                min = min.min(d.sqrt());
            }
        }
        assert!(min > 0.0);
    }

    #[test]
    fn gradcheck_mlp() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let te = TimeEmbedding::new(&mut store, "time", 6, 5, 3, &mut rng).unwrap();
        let report = gradcheck(
            |_, vars| te.forward(vars, &[0.1, 0.55, 0.9])?.square()?.sum(),
            &store.tensors(),
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }
}
