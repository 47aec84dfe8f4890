//! Numerical laboratory for reflected backward equations with quadratic growth.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod bounds;
pub mod grid;
pub mod harness;
pub mod rbode;
pub mod rbsde;
