//! The segmentation network: a shared pretreatment stem feeding a detail
//! branch (cross transpose attention) and a wide backbone of chained
//! capturing units, fused by the Fourier convolution controller.

mod context;
mod cta;
mod fcc;
mod layers;
mod net;
mod wcc;

pub use context::{Ctx, Mode};
pub use cta::{cta_block, cta_forward, CtaBlockOutput, CtaMode, CtaParams, CtaStack};
pub use fcc::{branch_g2, fcc_forward, seg_head, FccParams, SegHead, VariableBranch};
pub use layers::{BatchNorm, Conv};
pub use net::{Fbwc, FbwcOutput, ModelConfig};
pub use wcc::{cu_forward, pretreat, wcc_forward, CuOutput, CuParams, Pretreat, WccOutputs};
