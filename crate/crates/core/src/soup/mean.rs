use accurate::sum::i_fast_sum_in_place;

use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Arithmetic mean rounded from the exact sum, so the result depends only on the
/// multiset of inputs (never their order) and `k` copies of `x` average to `x`.
fn exact_mean(xs: &[f64], scratch: &mut Vec<f64>) -> f64 {
    let k = xs.len() as f64;
    scratch.clear();
    scratch.extend_from_slice(xs);
    let q0 = i_fast_sum_in_place(scratch) / k;
    // k * q0 == p + e exactly
    let p = k * q0;
    let e = k.mul_add(q0, -p);
    scratch.clear();
    scratch.extend_from_slice(xs);
    scratch.push(-p);
    scratch.push(-e);
    let residual = i_fast_sum_in_place(scratch);
    q0 + residual / k
}

/// Element-wise mean of parameter vectors that share an architecture.
pub fn uniform_soup(members: &[&ParamVector]) -> Result<ParamVector> {
    let first = *members.first().ok_or(Error::EmptySoup)?;
    for m in &members[1..] {
        first.check_compatible(m)?;
    }
    if members.len() == 1 {
        return Ok(first.clone());
    }
    let mut column = Vec::with_capacity(members.len());
    let mut scratch = Vec::with_capacity(members.len() + 2);
    let values: Vec<f64> = (0..first.len())
        .map(|j| {
            column.clear();
            column.extend(members.iter().map(|m| m.values[j]));
            exact_mean(&column, &mut scratch)
        })
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("soup parameters".into()));
    }
    Ok(ParamVector {
        values,
        arch_signature: first.arch_signature,
    })
}
