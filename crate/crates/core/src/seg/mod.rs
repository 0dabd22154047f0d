//! Downstream segmentation: a tiny conv segmenter, overlap metrics and the
//! leave-one-out domain generalization protocol.

pub mod metrics;
pub mod model;
pub mod train;

pub use metrics::{dice, iou};
pub use model::{predict_mask, SegArch, SegModel, DICE_SMOOTH};
pub use train::{
    evaluate, leave_one_out_eval, mean_dice_by_method, per_sample_csv, results_csv, train_segmenter, EvalResult,
    LooConfig, Method, SegTrainConfig, RESULTS_CSV_HEADER,
};
