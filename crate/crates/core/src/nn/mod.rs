//! Minimal neural-network toolkit: an autodiff tape over `f64` matrices,
//! named parameter storage and Adam.

mod params;
mod tape;

pub use params::{
    uniform_fan_in, uniform_row_vectors, Adam, Bindings, ParamStore, SerializableMat,
    SerializableParams,
};
pub use tape::{Graph, Mat, Var};

pub(crate) use tape::softmax_mat;
