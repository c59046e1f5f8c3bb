//! Few-shot inference heads: FPS multi-prototypes with label propagation,
//! the ProtoNet baseline, and the differentiable head used in training.

pub mod propagation;
pub mod protonet;
pub mod prototypes;
pub mod train_head;

pub use propagation::{
    build_knn_graph, label_propagate, label_propagate_iterative, predict_rows, PropagationConfig,
};
pub use protonet::protonet_predict;
pub use prototypes::{
    global_prototype, multi_prototype_generation, multi_prototypes, ClassPoints, Prototype,
};
pub use train_head::PrototypeHead;
