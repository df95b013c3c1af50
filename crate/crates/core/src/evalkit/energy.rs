use super::EvalError;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean pairwise distance over all `(i, j)` pairs, diagonal included. Rows are summed
/// in parallel and reduced in row order.
fn mean_pairwise<V: AsRef<[f64]> + Sync>(a: &[V], b: &[V]) -> f64 {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(a.len()).max(1);
    let rows: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = a
            .chunks(a.len().div_ceil(workers))
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|x| b.iter().map(|y| dist(x.as_ref(), y.as_ref())).sum::<f64>())
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("energy worker panicked")).collect()
    });
    rows.iter().sum::<f64>() / (a.len() * b.len()) as f64
}

/// `2 E‖A − B‖ − E‖A − A′‖ − E‖B − B′‖` with all-pairs means (a V-statistic, so it is
/// non-negative and zero on identical multisets).
pub fn energy_distance<V: AsRef<[f64]> + Sync>(a: &[V], b: &[V]) -> Result<f64, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::TooFew { need: 1, got: 0 });
    }
    let d = a[0].as_ref().len();
    if let Some(bad) = a.iter().chain(b).find(|v| v.as_ref().len() != d) {
        return Err(EvalError::Dim {
            expected: d,
            got: bad.as_ref().len(),
        });
    }
    if a.iter().chain(b).any(|v| v.as_ref().iter().any(|x| !x.is_finite())) {
        return Err(EvalError::NonFinite);
    }
    let e = 2.0 * mean_pairwise(a, b) - mean_pairwise(a, a) - mean_pairwise(b, b);
    Ok(e.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn point_masses_and_identity() {
        assert_eq!(energy_distance(&[vec![0.0, 0.0]], &[vec![3.0, 4.0]]).unwrap(), 10.0);
        let set = vec![vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.0, 0.0]];
        let mut shuffled = set.clone();
        shuffled.reverse();
        assert_eq!(energy_distance(&set, &shuffled).unwrap(), 0.0);
        assert!(energy_distance::<Vec<f64>>(&[], &set).is_err());
        assert!(energy_distance(&set, &[vec![1.0]]).is_err());
    }

    #[test]
    fn brute_force_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut draw = |n: usize, shift: f64| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..3).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); z + shift }).collect::<Vec<f64>>())
                .collect()
        };
        let a = draw(37, 0.0);
        let b = draw(23, 0.5);
        let mut ab = 0.0;
        for x in &a {
            for y in &b {
                ab += dist(x, y);
            }
        }
        let mut aa = 0.0;
        for x in &a {
            for y in &a {
                aa += dist(x, y);
            }
        }
        let mut bb = 0.0;
        for x in &b {
            for y in &b {
                bb += dist(x, y);
            }
        }
        let expect = 2.0 * ab / (37.0 * 23.0) - aa / (37.0 * 37.0) - bb / (23.0 * 23.0);
        assert!((energy_distance(&a, &b).unwrap() - expect).abs() < 1e-12);
        assert!(energy_distance(&a, &b).unwrap() > 0.0);
    }
}
