//! Relevance expressions and the path sets they generate.

pub mod eval;
pub mod expr;
pub mod graph;

pub use eval::{
    evaluate, evaluate_all, evaluate_with, project, select_relevant, select_relevant_with, Binding,
    EvalError, EvalOptions, PathSet, RelevantData, DEFAULT_PATH_CAP,
};
pub use expr::{Comparator, Direct, ExprError, PathExpr, Ref, USER_VAR};
pub use graph::{Path, TypedGraph};
