use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mean::uniform_soup;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{evaluate, ArchSpec, MetricKind, ParamVector};
use crate::pipeline::{derive_id, Checkpoint, Stage};

/// Scores a parameter vector on held-out data; higher is better.
pub trait Evaluator: Sync {
    fn score(&self, params: &ParamVector) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&ParamVector) -> Result<f64> + Sync,
{
    fn score(&self, params: &ParamVector) -> Result<f64> {
        self(params)
    }
}

/// Live evaluation of a metric on a validation set.
pub struct DatasetEvaluator<'a> {
    pub arch: &'a ArchSpec,
    pub dataset: &'a LabeledDataset,
    pub metric: MetricKind,
}

impl Evaluator for DatasetEvaluator<'_> {
    fn score(&self, params: &ParamVector) -> Result<f64> {
        evaluate(params, self.arch, self.dataset, self.metric)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoupMethod {
    Uniform,
    Greedy,
    /// Greedy at the top level over uniform local soups.
    Gou,
    /// Greedy at every level.
    Gog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowerMethod {
    Uniform,
    Greedy,
}

impl SoupMethod {
    pub fn lower(self) -> Option<LowerMethod> {
        match self {
            SoupMethod::Gou => Some(LowerMethod::Uniform),
            SoupMethod::Gog => Some(LowerMethod::Greedy),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SoupMethod::Uniform => "uniform",
            SoupMethod::Greedy => "greedy",
            SoupMethod::Gou => "gou",
            SoupMethod::Gog => "gog",
        }
    }
}

impl fmt::Display for SoupMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SoupMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SoupMethod::Uniform),
            "greedy" => Ok(SoupMethod::Greedy),
            "gou" => Ok(SoupMethod::Gou),
            "gog" => Ok(SoupMethod::Gog),
            _ => Err(Error::InvalidArgument(format!(
                "unknown soup method {s:?} (expected uniform, greedy, gou or gog)"
            ))),
        }
    }
}

/// A named parameter vector offered to a soup.
#[derive(Clone, Copy, Debug)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub params: &'a ParamVector,
}

impl<'a> From<&'a Checkpoint> for Candidate<'a> {
    fn from(c: &'a Checkpoint) -> Self {
        Candidate {
            id: &c.id,
            params: &c.params,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub id: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyDecision {
    pub candidate_id: String,
    /// Score of the soup with this candidate averaged in.
    pub trial_score: f64,
    pub accepted: bool,
}

/// Everything needed to replay a greedy soup: the initial ranking and each decision.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyAudit {
    pub ranking: Vec<RankedCandidate>,
    pub decisions: Vec<GreedyDecision>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoupResult {
    pub id: String,
    #[serde(skip_serializing)]
    pub params: ParamVector,
    pub method: SoupMethod,
    /// Contributing ids in the order they joined. For hierarchical soups these are the
    /// group ids (the base checkpoint of each group); `groups` holds the lower level.
    pub members: Vec<String>,
    pub val_score: f64,
    pub audit: GreedyAudit,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<LocalSoup>,
}

/// One lower-level soup of a hierarchical merge.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalSoup {
    pub group_id: String,
    pub soup: SoupResult,
}

impl SoupResult {
    /// Every leaf checkpoint id that contributes weight to this soup.
    pub fn leaf_members(&self) -> Vec<String> {
        if self.groups.is_empty() {
            return self.members.clone();
        }
        self.members
            .iter()
            .filter_map(|m| self.groups.iter().find(|g| &g.group_id == m))
            .flat_map(|g| g.soup.members.clone())
            .collect()
    }

    /// Wrap as a checkpoint with `stage = soup`.
    pub fn to_checkpoint(&self, arch: &ArchSpec, root_id: Option<String>) -> Checkpoint {
        let mut lineage = crate::pipeline::Lineage::new(Stage::Soup);
        lineage.root_id = root_id;
        Checkpoint {
            id: self.id.clone(),
            arch: arch.clone(),
            params: self.params.clone(),
            config: None,
            lineage,
            val_metrics: Default::default(),
            epochs_consumed: 0.0,
        }
    }
}

pub(crate) fn soup_id(method: &str, members: &[String], extra: &[String]) -> String {
    let mut parts: Vec<&str> = vec![method];
    parts.extend(members.iter().map(String::as_str));
    parts.push("|");
    parts.extend(extra.iter().map(String::as_str));
    derive_id(Stage::Soup, &parts)
}

fn check_signatures(candidates: &[Candidate<'_>]) -> Result<()> {
    let first = candidates.first().ok_or(Error::EmptySoup)?;
    for c in &candidates[1..] {
        first.params.check_compatible(c.params)?;
    }
    Ok(())
}

/// Score every candidate and order by score descending, ties by id ascending.
pub(crate) fn rank<'a>(
    candidates: &[Candidate<'a>],
    evaluator: &dyn Evaluator,
) -> Result<Vec<(Candidate<'a>, f64)>> {
    let scores: Vec<f64> = candidates
        .par_iter()
        .map(|c| evaluator.score(c.params))
        .collect::<Result<_>>()?;
    let mut ranked: Vec<(Candidate<'a>, f64)> = candidates.iter().copied().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(b.0.id)));
    Ok(ranked)
}

/// Greedy soup: start from the best candidate, then try each remaining candidate in
/// rank order and keep it if the averaged soup scores at least as well.
pub fn greedy_soup(candidates: &[Candidate<'_>], evaluator: &dyn Evaluator) -> Result<SoupResult> {
    check_signatures(candidates)?;
    let ranked = rank(candidates, evaluator)?;
    let (best, best_score) = ranked[0];

    let mut members = vec![best];
    let mut params = best.params.clone();
    let mut score = best_score;
    let mut decisions = vec![GreedyDecision {
        candidate_id: best.id.to_string(),
        trial_score: best_score,
        accepted: true,
    }];
    for &(cand, _) in &ranked[1..] {
        let trial_members: Vec<&ParamVector> =
            members.iter().map(|m| m.params).chain([cand.params]).collect();
        let trial = uniform_soup(&trial_members)?;
        let trial_score = evaluator.score(&trial)?;
        let accepted = trial_score >= score;
        decisions.push(GreedyDecision {
            candidate_id: cand.id.to_string(),
            trial_score,
            accepted,
        });
        if accepted {
            members.push(cand);
            params = trial;
            score = trial_score;
        }
    }

    let member_ids: Vec<String> = members.iter().map(|m| m.id.to_string()).collect();
    Ok(SoupResult {
        id: soup_id("greedy", &member_ids, &[]),
        params,
        method: SoupMethod::Greedy,
        members: member_ids,
        val_score: score,
        audit: GreedyAudit {
            ranking: ranked
                .iter()
                .map(|(c, s)| RankedCandidate {
                    id: c.id.to_string(),
                    score: *s,
                })
                .collect(),
            decisions,
        },
        groups: Vec::new(),
    })
}

/// Uniform soup over all candidates, scored once.
pub fn uniform_soup_result(
    candidates: &[Candidate<'_>],
    evaluator: &dyn Evaluator,
) -> Result<SoupResult> {
    check_signatures(candidates)?;
    let params = uniform_soup(&candidates.iter().map(|c| c.params).collect::<Vec<_>>())?;
    let val_score = evaluator.score(&params)?;
    let members: Vec<String> = candidates.iter().map(|c| c.id.to_string()).collect();
    Ok(SoupResult {
        id: soup_id("uniform", &members, &[]),
        params,
        method: SoupMethod::Uniform,
        members,
        val_score,
        audit: GreedyAudit::default(),
        groups: Vec::new(),
    })
}

/// Turn checkpoints into soup candidates, rejecting members from different warm starts.
pub fn candidates_from(checkpoints: &[Checkpoint]) -> Result<Vec<Candidate<'_>>> {
    check_common_root(checkpoints.iter())?;
    Ok(checkpoints.iter().map(Candidate::from).collect())
}

pub(crate) fn check_common_root<'a>(checkpoints: impl Iterator<Item = &'a Checkpoint>) -> Result<Option<String>> {
    let mut root: Option<&str> = None;
    for c in checkpoints {
        let this = c.lineage.root_id.as_deref().unwrap_or(&c.id);
        match root {
            None => root = Some(this),
            Some(r) if r != this => {
                return Err(Error::LineageMismatch(format!(
                    "{} descends from {this}, other members from {r}",
                    c.id
                )))
            }
            _ => {}
        }
    }
    Ok(root.map(str::to_string))
}
