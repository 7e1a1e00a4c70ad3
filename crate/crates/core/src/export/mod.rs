//! Serialization of formulations: a canonical JSON document that reads back
//! into an equal [`Formulation`], and sparse SDPA text for the conic models.

mod json;
mod sdpa;

use thiserror::Error;

use crate::ir::IrError;

pub use json::{export_json, export_point, import_json, import_point, JSON_SCHEMA_VERSION};
pub use sdpa::export_sdpa;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExportError {
    #[error("constraint {0} cannot be written in this format")]
    UnsupportedConstraint(String),
    #[error("malformed model document: {0}")]
    Schema(String),
    #[error(transparent)]
    Ir(#[from] IrError),
}
