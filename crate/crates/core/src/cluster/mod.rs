//! Clinical states: k-means over patient vectors, knee selection of K,
//! state sequences and state characterization.

mod kmeans;
mod kneedle;
mod states;

pub use kmeans::{
    adjusted_rand_index, kmeans_fit, kmeans_pp_init, lloyd, nearest, sq_dist, sweep_k, Clustering, KMeansOptions, Sweep,
};
pub use kneedle::kneedle;
pub use states::{
    assign_states, characterize_states, pca_2d, prevalence_band, read_states_csv, write_states_csv, PrevalenceTable, StateProfile,
};
