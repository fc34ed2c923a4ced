//! Config-driven builders for the compared architectures: frame-wise linear
//! and LSTM stacks, a convolutional U-Net, the gated convolutional recurrent
//! network with per-component domain toggles, and the complex convolution
//! recurrent network.

mod exec;
mod model;
mod presets;
mod spec;

pub use exec::LayerCost;
pub use model::{apply_head, Model};
pub use presets::{preset, preset_names, suite, suite_names, training_pair, TRAINING_PAIRS};
pub use spec::{Arch, DccrnSpec, Dims2, GcrnSpec, LinearStackSpec, LstmStackSpec, ModelSpec, OutputMode, UNetSpec};

#[cfg(test)]
mod tests;
