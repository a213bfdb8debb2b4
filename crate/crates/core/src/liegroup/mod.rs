//! SO(3) kernels and the SE_K(3) group used as the filter state container.

pub mod sek3;
pub mod so3;

pub use sek3::{TangentK, SEK3};
pub use so3::{hat, vee, Rot3};
