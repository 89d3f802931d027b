//! Multi-order interaction layers and their exact tensor oracle.

mod gmlp;
mod layer;
mod tensor;

pub use gmlp::{gmlp_block, gmlp_rows, GmlpParams, GmlpVars, SPATIAL_INIT_SCALE};
pub use layer::{
    hadamard_interaction, moi_forward, moi_forward_rows, moi_rows, Activation, MoiLayerParams,
    MoiSpec, MoiVars, NormKind, NormLocation, LAYER_SCALE_INIT,
};
pub use tensor::{
    materialize_parafac, oracle_interaction, DenseTensor, FullInteractionTensor,
    MAX_TENSOR_ELEMENTS,
};
