//! Grid graph, hourly panel data model, CSV ingestion, splits, features and
//! the synthetic panel generator.

pub mod classify;
pub mod features;
pub mod graph;
pub mod io;
pub mod panel;
pub mod synthetic;

pub use classify::{classify_nodes, CarbonClass, CarbonClasses};
pub use features::{feature_matrix, feature_width, FeatureScope, FeatureSet, NormStats, Target};
pub use graph::GridGraph;
pub use io::{load_graph, load_panel, load_panel_for, write_graph, write_panel};
pub use panel::{chronological_split, HourlyPanel, NodeSeries, PanelView, SplitRanges, SplitSpec};
pub use synthetic::{european_subgraph, generate_synthetic, planted_impacts, SyntheticSpec};
