//! Finite-difference checks of every tape op, one objective per op.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{gradcheck, GradcheckReport};
use super::tape::{concat, scaled_dot_product_attention, Tape, Var};
use super::tensor::Tensor;
use super::DiffError;

/// Pass mark for each entry of [`op_suite`].
pub const OP_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct OpCheck {
    pub name: &'static str,
    pub report: GradcheckReport,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.report.max_rel_err < OP_TOLERANCE
    }
}

type Objective = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, DiffError>;

/// `Σ y_i w_i` with fixed, unequal weights so every output coordinate matters.
fn weighted<'t>(tape: &'t Tape, y: Var<'t>) -> Result<Var<'t>, DiffError> {
    let shape = y.shape();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| (1.3 * i as f64 + 0.7).sin()).collect())?;
    y.mul(tape.constant(w))?.sum()
}

fn cases() -> Vec<(&'static str, Vec<Vec<usize>>, Objective)> {
    vec![
        ("add", vec![vec![3, 4], vec![4]], |t, v| weighted(t, v[0].add(v[1])?)),
        ("sub", vec![vec![3, 4], vec![3, 4]], |t, v| weighted(t, v[0].sub(v[1])?)),
        ("mul", vec![vec![2, 3, 4], vec![4]], |t, v| weighted(t, v[0].mul(v[1])?)),
        ("add_scalar", vec![vec![5]], |t, v| weighted(t, v[0].add_scalar(0.3)?)),
        ("mul_scalar", vec![vec![5]], |t, v| weighted(t, v[0].mul_scalar(-1.7)?)),
        ("square", vec![vec![2, 3]], |t, v| weighted(t, v[0].square()?)),
        ("matmul", vec![vec![2, 3, 4], vec![4, 5]], |t, v| weighted(t, v[0].matmul(v[1])?)),
        ("matmul_batched", vec![vec![2, 3, 4], vec![2, 4, 2]], |t, v| weighted(t, v[0].matmul(v[1])?)),
        ("reshape", vec![vec![2, 6]], |t, v| weighted(t, v[0].reshape(&[3, 4])?.square()?)),
        ("permute", vec![vec![2, 3, 4]], |t, v| weighted(t, v[0].permute(&[2, 0, 1])?)),
        ("transpose", vec![vec![2, 3, 4]], |t, v| weighted(t, v[0].transpose()?)),
        ("softmax", vec![vec![3, 5]], |t, v| weighted(t, v[0].softmax()?)),
        ("layer_norm", vec![vec![3, 6], vec![6], vec![6]], |t, v| {
            weighted(t, v[0].layer_norm(v[1], v[2])?)
        }),
        ("gelu", vec![vec![9]], |t, v| weighted(t, v[0].gelu()?)),
        ("silu", vec![vec![9]], |t, v| weighted(t, v[0].silu()?)),
        ("embedding", vec![vec![7, 3]], |t, v| weighted(t, v[0].embedding(&[0, 3, 3, 6])?)),
        ("depthwise_conv1d", vec![vec![2, 6, 3], vec![3, 3], vec![3]], |t, v| {
            weighted(t, v[0].depthwise_conv1d(v[1], v[2])?)
        }),
        ("narrow", vec![vec![3, 5]], |t, v| weighted(t, v[0].narrow(-1, 1, 3)?)),
        ("sum", vec![vec![2, 3]], |_, v| v[0].square()?.sum()),
        ("mean", vec![vec![2, 3]], |_, v| v[0].square()?.mean()),
        ("sum_axis", vec![vec![2, 3, 4]], |t, v| weighted(t, v[0].sum_axis(1)?)),
        ("mean_axis", vec![vec![2, 3, 4]], |t, v| weighted(t, v[0].mean_axis(-1)?)),
        ("concat", vec![vec![2, 3], vec![2, 1], vec![2, 2]], |t, v| weighted(t, concat(v, -1)?)),
        ("attention", vec![vec![2, 3, 4], vec![2, 5, 4], vec![2, 5, 3], vec![3, 5]], |t, v| {
            weighted(t, scaled_dot_product_attention(v[0], v[1], v[2], Some(v[3]))?)
        }),
    ]
}

/// Gradchecks every op on standard-normal inputs drawn from `seed`.
pub fn op_suite(seed: u64) -> Result<Vec<OpCheck>, DiffError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cases()
        .into_iter()
        .map(|(name, shapes, f)| {
            let inputs: Vec<Tensor> = shapes.iter().map(|s| Tensor::randn(s, &mut rng)).collect();
            Ok(OpCheck {
                name,
                report: gradcheck(f, &inputs, 1e-6)?,
            })
        })
        .collect()
}
