use omniflow::diffsub::{op_suite, OP_TOLERANCE};
use omniflow::flowdit::{loss_gradcheck, LOSS_GRADCHECK_TOLERANCE};
use serde_json::{json, Value};

use crate::{CliError, RunConfig};

/// Both gradient suites. The report is returned even when a check fails; the caller turns
/// `passed: false` into a numerical failure after printing it.
pub fn run(cfg: &RunConfig) -> Result<Value, CliError> {
    let ops = op_suite(cfg.seed)?;
    let (worst_param, loss) = loss_gradcheck(cfg.seed)?;
    let ops_passed = ops.iter().all(|c| c.passed());
    let loss_passed = loss.max_rel_err < LOSS_GRADCHECK_TOLERANCE;
    Ok(json!({
        "command": "gradcheck",
        "passed": ops_passed && loss_passed,
        "ops": ops.iter().map(|c| json!({
            "name": c.name,
            "max_rel_err": c.report.max_rel_err,
            "coordinates": c.report.coordinates,
            "passed": c.passed(),
        })).collect::<Vec<_>>(),
        "op_tolerance": OP_TOLERANCE,
        "loss": {
            "max_rel_err": loss.max_rel_err,
            "coordinates": loss.coordinates,
            "worst_parameter": worst_param,
            "tolerance": LOSS_GRADCHECK_TOLERANCE,
            "passed": loss_passed,
        },
        "config": cfg.to_json(),
    }))
}
