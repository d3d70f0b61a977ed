//! Diagnostics for user-labeled text datasets: does a label column behave
//! like an objective attribute, or like one users are motivated to
//! misreport?
//!
//! Three signals are computed per target class: held-out macro-F1 of a
//! TF-IDF linear SVM ([`classify`]), the balance of chi-square indicative
//! features across labels ([`indicative`]), and how well labels separate in
//! a t-SNE map of paragraph vectors ([`embed`], [`project`]). [`report`]
//! runs the whole pipeline and turns the three into a verdict.

pub mod classify;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod groundtruth;
pub mod indicative;
pub mod plot;
pub mod project;
pub mod report;
pub mod vectorize;

pub use config::AuditConfig;
pub use error::{Error, Result};
pub use report::{emit, run_audit, SubjectivityReport, VerdictKind};
