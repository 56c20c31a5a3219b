//! The multi-task model: attribute catalog, shared trunk with category
//! heads, heterogeneous losses, the joint objective and the single-task
//! baseline.

mod catalog;
mod loss;
mod model;
mod stl;

pub use catalog::{
    AttributeCatalog, AttributeDef, AttributeKind, CategoryKind, CategorySpec, Scope,
    CELEBA_ATTRIBUTES,
};
pub use loss::{
    category_loss, complexity, head_gradient_closed_form, loss_nominal, loss_ordinal, softmax,
    ModelGradients, Objective, ObjectiveWeights,
};
pub use model::{
    decode, AttributeOutput, CategoryTargets, Decoded, DmtlModel, LabelValue, ModelPass,
    Prediction, Targets,
};
pub use stl::{match_budget, objective_stl, stl_gradients, StlBundle};
