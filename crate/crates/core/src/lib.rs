//! Context-specific staged tree models (CStrees) for discrete data:
//! representation, context-specific independence reasoning, context
//! graphs, equivalence, estimation, structure learning, interventions and
//! enumeration.

pub mod cli;
pub mod csi;
pub mod dag;
pub mod enumeration;
pub mod error;
pub mod estimation;
pub mod interventions;
pub mod io;
pub mod learning;
pub mod model;

pub use csi::{context_graphs, cstree_equivalent, minimal_contexts, ContextGraphSet, CsiRelation, CsiSet};
pub use dag::{Dag, IDag};
pub use error::{Error, Result, Violation};
pub use estimation::{bic, mle, ContingencyTable, ParameterMap, Score};
pub use interventions::{InterventionTarget, InterventionalCStree, TargetSet};
pub use learning::{bhc_cs, bhc_cs_perm, bhc_s, LearnConfig};
pub use model::{CStree, Context, GeneralStagedTree, Ordering, Stage, StagedModel, VariableSpec};
