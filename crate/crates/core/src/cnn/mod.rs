//! Early-terminated hierarchical CNN: three mean-removed branches, a shared
//! non-overlapping conv trunk and one fully connected head per HCPM level.

mod flops;
mod model;
mod params;
mod preprocess;
mod train;

pub use flops::{flop_report, head_flops, measure_early_term_savings, CnnArch};
pub use model::{CnnFeatures, CnnOutput, LEVEL_OFFSET};
pub use params::{
    EthCnnParams, BRANCH_INPUT, CNN_PARAM_COUNT, CONCAT_LEN, CONV_SPECS, DROPOUT_RATES, HEAD_OUT, HIDDEN1, HIDDEN2,
};
pub use preprocess::{preprocess, BranchInputs};
pub use train::{evaluate_loss, train_cnn, CnnTrainConfig, EpochShuffler, TrainReport};

pub(crate) use model::{mask_beneath_not_split, qp_feature};
