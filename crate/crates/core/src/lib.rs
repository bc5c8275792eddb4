// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod experiments;
pub mod geodesic;
pub mod io;
pub mod linalg;
pub mod plot;
pub mod rotation;
pub mod solver;
pub mod spd;
pub mod tpca;
pub mod univariate;
