//! # crystalnet
//!
//! Crystal-graph machine learning for atomistic structures:
//!
//! - [`structures`]: XYZ / extended-XYZ parsing and periodic distances
//! - [`atomgraph`]: weighted neighbor graphs and the normalized Laplacian
//! - [`elementdata`]: the bundled per-element property table
//! - [`featurization`]: element descriptors, invertible one-hot codecs and
//!   featurized graph bundles
//! - [`model`]: a Laplacian graph-convolution network with hand-derived
//!   gradients, training and checkpoints
//!
//! ```
//! use crystalnet::{build_graph, featurize, parse_xyz, GraphNodeFeaturization, GraphOptions};
//! use crystalnet::elementdata::default_table;
//!
//! let h2 = parse_xyz("2\nH2\nH 0 0 0\nH 0 0 0.74").unwrap();
//! let graph = build_graph(&h2, &GraphOptions::with_cutoff(1.0)).unwrap();
//! let scheme = GraphNodeFeaturization::with_defaults(&["block", "mass"], default_table()).unwrap();
//! let fa = featurize(&graph, &scheme, default_table()).unwrap();
//! assert_eq!(fa.matrix().shape(), (14, 2));
//! ```

pub mod atomgraph;
pub mod elementdata;
pub mod featurization;
pub mod model;
pub mod numeric;
pub mod structures;

pub use atomgraph::{
    build_graph, build_graph_with, build_graphs, edge_weight, export_graph, neighbor_list, normalized_laplacian,
    AtomGraph, GraphError, GraphFormat, GraphOptions, GraphWarning, Neighbor, WeightScheme,
};
pub use elementdata::{load_table, Block, ElementError, ElementRecord, ElementTable, FeatureValue};
pub use featurization::{
    decode_features, featurize, featurize_many, make_codec, BinInterval, Decoded, ElementFeatureDescriptor,
    FeatureError, FeatureKind, FeaturizationConfig, FeaturizedAtoms, GraphNodeFeaturization, OneHotOneCold, Scale,
};
pub use model::{
    conv_forward, load_model, loss_and_gradients, model_forward, mse, pool_forward, save_model, train, Activation,
    ConvLayer, DenseLayer, Gradients, Model, ModelError, ModelShape, Optimizer, Pooling, TrainConfig,
};
pub use structures::{
    parse_extxyz, parse_structure, parse_xyz, read_structure, serialize_xyz, AtomicStructure, StructureError,
};
