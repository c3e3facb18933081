//! Weight-space merging: uniform, greedy, and hierarchical (GoU / GoG) soups.

mod greedy;
mod hierarchical;
mod mean;

pub use greedy::{
    candidates_from, greedy_soup, uniform_soup_result, Candidate, DatasetEvaluator, Evaluator,
    GreedyAudit, GreedyDecision, LocalSoup, LowerMethod, RankedCandidate, SoupMethod, SoupResult,
};
pub use hierarchical::{grouped_soup, hierarchical_soup, local_soup};
pub use mean::uniform_soup;
