//! Ground-truth baselines: exhaustive subset search and grid reachability.

mod exhaustive;
mod reach;

pub use exhaustive::{exhaustive_select, rank_key, ExhaustiveOutcome, RankKey, MAX_EXHAUSTIVE_SOFT};
pub use reach::{
    compute_reach, reach_select, GridDecodeError, ReachError, ReachGrid, ReachParams,
    ReachSelection,
};
