pub mod enhance;
pub mod eval_cmd;
pub mod gradcheck_cmd;
pub mod prepare;
pub mod synth;
pub mod train_cmd;
