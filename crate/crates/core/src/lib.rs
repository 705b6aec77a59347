//! Federated learning with a consensus-elected poisoning judge.
//!
//! Clients train local classifiers, each builds an isolation-forest judge
//! from gradient statistics, the federation elects one judge through
//! homomorphically tallied ElGamal ballots, every update is screened by the
//! elected judge, and only majority-accepted updates are averaged. Every
//! step is recorded on a signed, hash-linked ledger.
//!
//! Module map:
//!
//! | module | contents |
//! |--------|----------|
//! | [`nn`] | small MLP classifier, backprop, Adam, gradient traces |
//! | [`gradfeat`] | nine per-batch statistics and the 45-dim summary |
//! | [`iforest`] | isolation forest used as the judge |
//! | [`judge`] | judge training, evaluation and update screening |
//! | [`crypto`] | exponential ElGamal over prime-order groups |
//! | [`ledger`] | signed append-only chain |
//! | [`protocol`] | round orchestration, voting, FedAvg |
//! | [`sim`] | synthetic data, attacks, metrics, experiment driver |

pub mod crypto;
pub mod error;
pub mod gradfeat;
pub mod iforest;
pub mod judge;
pub mod ledger;
pub mod nn;
pub mod protocol;
pub mod sim;

pub(crate) mod util;

pub use error::{Error, Result};
