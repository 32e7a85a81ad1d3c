//! Coarsen large weighted interaction graphs, train hierarchical pooled
//! spectral GNNs on per-node features, and explain the trained models.
//!
//! The pipeline has four stages:
//!
//! 1. [`graph`] — edge-list ingestion, component filtering, and the scaled
//!    normalized Laplacian used by the spectral convolutions.
//! 2. [`coarsen`] — multilevel heavy-edge matching producing assignment maps,
//!    coarse graphs, and dendrogram expansion back to original nodes.
//! 3. [`gnn`] + [`train`] — a hierarchical model (Chebyshev convolutions,
//!    weighted pooling, MLP head) built on the [`autodiff`] tape engine,
//!    with Adam training and classification metrics.
//! 4. [`interpret`] — gradient saliency at gene and supernode level, and
//!    local over-representation analysis of supernode gene clusters.
//!
//! [`dataio`] handles expression-matrix ingestion, preprocessing, graph
//! alignment, and a synthetic planted-module generator used as ground truth
//! in end-to-end tests.

pub mod autodiff;
pub mod coarsen;
pub mod dataio;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod interpret;
pub mod seeds;
pub mod train;

pub use error::{Error, Result};
