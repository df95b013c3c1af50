use ndarray::Zip;

use super::{FlowError, LatentSeq};

fn same_shape(op: &'static str, a: &LatentSeq, b: &LatentSeq) -> Result<(), FlowError> {
    if a.shape() != b.shape() {
        return Err(FlowError::Shape {
            op,
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    Ok(())
}

/// Straight path `(1 - t)·x0 + t·x1`.
pub fn interpolate(x0: &LatentSeq, x1: &LatentSeq, t: f64) -> Result<LatentSeq, FlowError> {
    same_shape("interpolate", x0, x1)?;
    if !(0.0..=1.0).contains(&t) {
        return Err(FlowError::Time(t));
    }
    let out = Zip::from(x0.values())
        .and(x1.values())
        .map_collect(|&a, &b| (1.0 - t) * a + t * b);
    LatentSeq::new(out)
}

/// `x1 - x0`, the velocity of the straight path.
pub fn target_velocity(x0: &LatentSeq, x1: &LatentSeq) -> Result<LatentSeq, FlowError> {
    same_shape("target_velocity", x0, x1)?;
    LatentSeq::new(x1.values() - x0.values())
}

/// Guided velocity `v_uncond + scale·(v_cond - v_uncond)`.
///
/// `u + 1·(c - u)` need not round back to `c`, so scale 1 returns `v_cond` directly.
pub fn cfg_velocity(v_cond: &LatentSeq, v_uncond: &LatentSeq, scale: f64) -> Result<LatentSeq, FlowError> {
    same_shape("cfg_velocity", v_cond, v_uncond)?;
    if scale == 1.0 {
        return Ok(v_cond.clone());
    }
    let out = Zip::from(v_cond.values())
        .and(v_uncond.values())
        .map_collect(|&c, &u| u + scale * (c - u));
    LatentSeq::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn random(rng: &mut rand_chacha::ChaCha8Rng, t: usize, d: usize) -> LatentSeq {
        LatentSeq::new(Array2::from_shape_simple_fn((t, d), || StandardNormal.sample(rng))).unwrap()
    }

    #[test]
    fn boundaries_and_midpoint() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let (a, b) = (random(&mut rng, 5, 3), random(&mut rng, 5, 3));
        assert_eq!(interpolate(&a, &b, 0.0).unwrap(), a);
        assert_eq!(interpolate(&a, &b, 1.0).unwrap(), b);
        let z = LatentSeq::zeros(4, 2).unwrap();
        let o = LatentSeq::new(Array2::ones((4, 2))).unwrap();
        assert!(interpolate(&z, &o, 0.5).unwrap().values().iter().all(|&v| v == 0.5));
        assert!(interpolate(&a, &b, 1.5).is_err());
        assert!(interpolate(&a, &z, 0.5).is_err());
    }

    #[test]
    fn velocity_cases_and_path_identity() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let z = LatentSeq::zeros(3, 2).unwrap();
        let o = LatentSeq::new(Array2::ones((3, 2))).unwrap();
        assert_eq!(target_velocity(&z, &o).unwrap(), o);
        assert!(target_velocity(&o, &o).unwrap().values().iter().all(|&v| v == 0.0));
        for _ in 0..50 {
            let (x0, x1) = (random(&mut rng, 6, 4), random(&mut rng, 6, 4));
            let t: f64 = rand::Rng::random(&mut rng);
            let xt = interpolate(&x0, &x1, t).unwrap();
            let v = target_velocity(&x0, &x1).unwrap();
            let back = xt.values() + &((1.0 - t) * v.values());
            for (r, e) in back.iter().zip(x1.values()) {
                assert!((r - e).abs() <= 4.0 * f64::EPSILON * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn guidance_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (c, u) = (random(&mut rng, 4, 3), random(&mut rng, 4, 3));
        assert_eq!(cfg_velocity(&c, &u, 1.0).unwrap(), c);
        assert_eq!(cfg_velocity(&c, &u, 0.0).unwrap(), u);
        for s in [0.0, 0.5, 1.0, 6.0, 17.3] {
            assert_eq!(cfg_velocity(&c, &c, s).unwrap(), c);
        }
        let g = cfg_velocity(&c, &u, 6.0).unwrap();
        let expect = u.values() + &(6.0 * (c.values() - u.values()));
        assert_eq!(g.values(), &expect);
    }
}
