//! Parameterized layers over a [`ParamStore`]. Layers hold parameter ids; `forward` takes
//! the bound leaves from [`ParamStore::bind`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DiffError, ParamId, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    /// Weight `~ N(0, 1/d_in)`, bias `~ N(0, 0.02²)`.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let weight = store.insert_normal(
            &format!("{name}.weight"),
            &[d_in, d_out],
            1.0 / (d_in.max(1) as f64).sqrt(),
            rng,
        )?;
        let bias = store.insert_normal(&format!("{name}.bias"), &[d_out], 0.02, rng)?;
        Ok(Self {
            weight,
            bias: Some(bias),
            d_in,
            d_out,
        })
    }

    /// `x · W` only.
    pub fn without_bias<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let weight = store.insert_normal(
            &format!("{name}.weight"),
            &[d_in, d_out],
            1.0 / (d_in.max(1) as f64).sqrt(),
            rng,
        )?;
        Ok(Self {
            weight,
            bias: None,
            d_in,
            d_out,
        })
    }

    /// `x · W + b` over the last axis of `x`.
    pub fn forward<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, DiffError> {
        let y = x.matmul(p[self.weight.0])?;
        match self.bias {
            Some(b) => y.add(p[b.0]),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    /// Gain starts at one plus small noise, bias at small noise.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        let g: Vec<f32> = (0..dim)
            .map(|_| 1.0 + 0.02 * (rng.random::<f32>() - 0.5))
            .collect();
        let gain = store.insert(&format!("{name}.gain"), &[dim], g)?;
        let bias = store.insert_normal(&format!("{name}.bias"), &[dim], 0.02, rng)?;
        Ok(Self { gain, bias })
    }

    pub fn forward<'t>(&self, p: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>, DiffError> {
        x.layer_norm(p[self.gain.0], p[self.bias.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffsub::{Tape, Tensor};
    use rand::SeedableRng;

    #[test]
    fn linear_shapes_and_names() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let l = Linear::new(&mut store, "proj", 3, 5, &mut rng).unwrap();
        assert!(store.by_name("proj.weight").is_some());
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::zeros(&[2, 4, 3]));
        let y = l.forward(&p, x).unwrap();
        assert_eq!(y.shape(), vec![2, 4, 5]);
        // zero input leaves only the bias
        let b = store.get(l.bias.unwrap()).value.clone();
        for (i, v) in y.value().data().iter().enumerate() {
            assert_eq!(*v, f64::from(b[i % 5]));
        }
        assert!(Linear::new(&mut store, "proj", 3, 5, &mut rng).is_err());
        let nb = Linear::without_bias(&mut store, "key", 3, 2, &mut rng).unwrap();
        assert!(nb.bias.is_none() && store.by_name("key.bias").is_none());
        let p = store.bind(&tape);
        let y = nb.forward(&p, tape.constant(Tensor::zeros(&[4, 3]))).unwrap();
        assert!(y.value().data().iter().all(|&v| v == 0.0));
    }
}
