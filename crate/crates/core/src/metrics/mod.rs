//! Verification and retrieval metrics.

mod pca;
mod retrieval;
mod verification;

pub use pca::{pca2, Pca2, POWER_MAX_ITER, POWER_TOL};
pub use retrieval::{gap, map_at_100, map_at_k, Prediction, QueryRanking, RankedRetrieval};
pub use verification::{
    auc, cosine_distance, cosine_similarity, eer, far_frr_sweep, histogram, histogram_csv, sweep_csv, Eer, RatePoint,
    ScoredPairs,
};
