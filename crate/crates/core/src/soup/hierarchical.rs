//! Two-level merging: a soup per group (a base model and the checkpoints spawned from
//! it), then a greedy soup over the group soups.

use rayon::prelude::*;

use super::greedy::{
    check_common_root, greedy_soup, soup_id, uniform_soup_result, Candidate, Evaluator, LocalSoup,
    LowerMethod, SoupMethod, SoupResult,
};
use crate::error::{Error, Result};
use crate::pipeline::Checkpoint;

fn lower_soup(pool: &[Candidate<'_>], lower: LowerMethod, evaluator: &dyn Evaluator) -> Result<SoupResult> {
    match lower {
        LowerMethod::Uniform => uniform_soup_result(pool, evaluator),
        LowerMethod::Greedy => greedy_soup(pool, evaluator),
    }
}

/// Merge a base model with the checkpoints spawned from it.
///
/// With `Uniform` this is `(sum of fissions + theta_t) / (m + 1)`; with `Greedy` the
/// base competes as an ordinary candidate. No fissions returns `theta_t` itself.
pub fn local_soup(
    theta_t: &Checkpoint,
    fissions: &[Checkpoint],
    lower: LowerMethod,
    evaluator: &dyn Evaluator,
) -> Result<SoupResult> {
    for f in fissions {
        if f.lineage.base_id.as_deref() != Some(theta_t.id.as_str()) {
            return Err(Error::LineageMismatch(format!(
                "{} was spawned from {:?}, not {}",
                f.id, f.lineage.base_id, theta_t.id
            )));
        }
    }
    let pool: Vec<Candidate<'_>> = std::iter::once(theta_t)
        .chain(fissions)
        .map(Candidate::from)
        .collect();
    lower_soup(&pool, lower, evaluator)
}

/// Lower-level soup inside each named group, then greedy over the group soups.
/// The top-level soup refers to each group by its id.
pub fn grouped_soup(
    groups: &[(String, Vec<Candidate<'_>>)],
    method: SoupMethod,
    evaluator: &dyn Evaluator,
) -> Result<SoupResult> {
    let lower = method.lower().ok_or_else(|| {
        Error::InvalidArgument(format!("{method} is not a hierarchical method"))
    })?;
    if groups.is_empty() {
        return Err(Error::EmptySoup);
    }
    let locals: Vec<LocalSoup> = groups
        .par_iter()
        .map(|(group_id, pool)| {
            lower_soup(pool, lower, evaluator).map(|soup| LocalSoup {
                group_id: group_id.clone(),
                soup,
            })
        })
        .collect::<Result<_>>()?;
    finish(locals, method, evaluator)
}

fn finish(locals: Vec<LocalSoup>, method: SoupMethod, evaluator: &dyn Evaluator) -> Result<SoupResult> {
    let top_candidates: Vec<Candidate<'_>> = locals
        .iter()
        .map(|l| Candidate {
            id: &l.group_id,
            params: &l.soup.params,
        })
        .collect();
    let top = greedy_soup(&top_candidates, evaluator)?;
    let leaves: Vec<String> = locals.iter().flat_map(|l| l.soup.members.clone()).collect();
    Ok(SoupResult {
        id: soup_id(method.as_str(), &top.members, &leaves),
        params: top.params,
        method,
        members: top.members,
        val_score: top.val_score,
        audit: top.audit,
        groups: locals,
    })
}

/// Hierarchical soup over `(theta_t, fissions of theta_t)` groups: `Gou` averages each
/// group uniformly, `Gog` greedily; both finish with a greedy soup over the groups.
pub fn hierarchical_soup(
    groups: &[(Checkpoint, Vec<Checkpoint>)],
    method: SoupMethod,
    evaluator: &dyn Evaluator,
) -> Result<SoupResult> {
    let lower = method.lower().ok_or_else(|| {
        Error::InvalidArgument(format!("{method} is not a hierarchical method"))
    })?;
    if groups.is_empty() {
        return Err(Error::EmptySoup);
    }
    check_common_root(groups.iter().flat_map(|(t, f)| std::iter::once(t).chain(f)))?;
    let locals: Vec<LocalSoup> = groups
        .par_iter()
        .map(|(theta_t, fissions)| {
            local_soup(theta_t, fissions, lower, evaluator).map(|soup| LocalSoup {
                group_id: theta_t.id.clone(),
                soup,
            })
        })
        .collect::<Result<_>>()?;
    finish(locals, method, evaluator)
}
