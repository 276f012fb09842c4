//! Membership-inference signals over generated text and logits, ROC
//! metrics, and an explore/exploit search loop over candidate signals.

pub mod datamodel;
pub mod evaluation;
pub mod hashing;
pub mod logit_signals;
pub mod search;
pub mod signals;
pub mod text_signals;
