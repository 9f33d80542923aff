pub mod audio_io;
pub mod cli;
pub mod codec_pipeline;
pub mod dsp;
pub mod eval_metrics;
pub mod loss;
pub mod model;
pub mod optim_train;
pub mod synth;
pub mod tensor;
pub mod tool;
