//! Candidate-label disambiguation: neighbour graph, Jaccard gate, pseudo-clean
//! labels and the transition-corrected moving-average update.

mod graph;
mod labels;

pub use graph::{jaccard, jaccard_matrix, knn_adjacency, Adjacency, JaccardMatrix};
pub use labels::{
    apply_inverse_transition, candidate_mask, estimate_transition, init_pseudo_clean, init_pseudo_clean_sparse,
    normalize_masked, uniform_over_candidates, update_pseudo_clean, LabelState, DEFAULT_INVERSE_REG,
};
