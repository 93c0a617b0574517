//! Early-terminated hierarchical LSTM over per-frame CNN features of
//! residue CTUs, with QP and GOP-order side inputs.

mod cell;
mod depth;
mod flops;
mod params;
mod sequence;
mod train;

pub use cell::{lstm_cell_update, FrameInput, FrameSideInfo, LevelState, LstmState};
pub use depth::{depth_correlation, frame_depth_map, oracle_depth_maps, DepthCorrPoint, DepthMap};
pub use flops::{lstm_flop_report, LstmArch};
pub use params::{
    EthLstmParams, LevelParams, GATE_C, GATE_F, GATE_I, GATE_O, GOP_SIZE, LSTM_PARAM_COUNT, SIDE_LEN,
};
pub use sequence::{forward_blocks, gop_order, group_sequences, predict_records, sequence_samples, CtuSequence};
pub use train::{train_lstm, window_starts, LstmTrainConfig, LstmTrainReport, SequenceSample, Targets};
