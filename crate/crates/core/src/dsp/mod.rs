//! Short-time Fourier analysis, SNR mixing, SI-SDR and training losses, and
//! the synthetic noisy-speech corpus.

mod metrics;
mod stft;
mod synth;
mod wav;

pub use metrics::{loss_l1_spec, loss_mse_spec, loss_sisdr, mix_at_snr, si_sdr, MixtureExample, LOSS_MAG_EPS, SI_SDR_CAP};
pub use stft::{istft, istft_graph, spectral_energy, stft, windowed_energy, Framing, Spectrogram};
pub use synth::{synth_dataset, synth_fixed_snr, synth_noise, synth_speech, CorpusSpec};
pub use wav::{read_wav, write_wav};

#[cfg(test)]
mod tests;
