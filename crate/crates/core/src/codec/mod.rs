//! Toy quad-tree encoder standing in for a real HEVC encoder.
//!
//! Cost model: DC prediction (block mean) with SSE distortion and a
//! logarithmic rate proxy, `J = D + λ·R`. Inter coding uses the same model
//! on the motion-free residual against the co-located previous frame.

mod cost;
mod frame;
mod guided;
mod rdo;

pub use cost::{cu_cost, CodingMode, CostModel, CuRect, RdCost};
pub use frame::{precode_residue, read_cphy, write_cphy, Frame, SignalPlane, CPHY_MAGIC};
pub use guided::{encode_ctu_with_prediction, encode_with_prediction, CtuEncode, EncodeStats};
pub use rdo::{oracle_frame, oracle_rdo, tree_cost, CuCostTable, OracleResult, CU_COUNT};
