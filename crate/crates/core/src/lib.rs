//! Gray-failure localization from end-to-end path measurements.
//!
//! A network is modelled as hosts plus router interfaces. Hosts measure the
//! fraction of failed transfers on every ordered host pair; a single faulty
//! component raises the failure rate of every path that crosses it. Some
//! measurements go missing, get imputed from the others, and a regressor maps
//! the completed path rates back to per-component failure probabilities.

pub mod error;
pub mod faultsim;
pub mod impute;
pub mod io;
pub mod localize;
pub mod missing;
pub mod pipeline;
pub mod regress;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
pub use ndarray;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/topology.md")]
    mod topology {}
    #[doc = include_str!("../../../book/src/faults.md")]
    mod faults {}
    #[doc = include_str!("../../../book/src/missing.md")]
    mod missing {}
    #[doc = include_str!("../../../book/src/localization.md")]
    mod localization {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
