use rand::Rng;

use super::{ConditioningBundle, ConditioningError};

pub const DEFAULT_DROP_PROB: f64 = 0.1;

/// With probability `p`, replaces the bundle by its null counterpart (empty context,
/// zeroed low stream with cleared validity). Returns whether it dropped.
pub fn condition_dropout<R: Rng + ?Sized>(
    bundle: &ConditioningBundle,
    p: f64,
    rng: &mut R,
) -> Result<(ConditioningBundle, bool), ConditioningError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(ConditioningError::InvalidParameter(format!("drop probability {p}")));
    }
    // one draw per call regardless of p
    let u: f64 = rng.random();
    if u < p {
        Ok((bundle.to_null(), true))
    } else {
        Ok((bundle.clone(), false))
    }
}
