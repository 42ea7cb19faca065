//! Row-skeleton interpolative fits, CUR factorizations and pivot sampling.

mod mid;
mod pivots;

pub use mid::{cur_decompose, mid_fit, CurResult, MidResult};
pub use pivots::{
    sample_pivots_local, sample_pivots_uniform, weighted_sample_without_replacement, Axis, PivotSet,
};
