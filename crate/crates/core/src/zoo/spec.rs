use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complex::ActivationKind;
use crate::config::KvConfig;
use crate::dsp::Framing;
use crate::error::{Error, Result};
use crate::nn::{Domain, Gating, LstmBias, LstmVariant};

/// A (time, frequency) pair written `TxF` in configs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims2 {
    pub t: usize,
    pub f: usize,
}

impl Dims2 {
    pub const fn new(t: usize, f: usize) -> Self {
        Dims2 { t, f }
    }
}

impl fmt::Display for Dims2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.t, self.f)
    }
}

impl FromStr for Dims2 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('x')
            .ok_or_else(|| Error::Config(format!("expected `TxF`, got `{s}`")))?;
        let p = |v: &str| v.trim().parse::<usize>().map_err(|e| Error::Config(format!("`{s}`: {e}")));
        Ok(Dims2 { t: p(a)?, f: p(b)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutputMode {
    /// The network output is the clean spectrogram estimate.
    Mapping,
    /// The network output is a complex mask multiplied onto the input.
    Masking,
    /// Magnitude-bounded polar mask: `noisy ⊙ m/|m| · tanh|m|`.
    PolarMasking,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Mapping => "mapping",
            OutputMode::Masking => "masking",
            OutputMode::PolarMasking => "polar_masking",
        }
    }
}

impl FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mapping" => Ok(OutputMode::Mapping),
            "masking" => Ok(OutputMode::Masking),
            "polar_masking" => Ok(OutputMode::PolarMasking),
            other => Err(Error::Config(format!("unknown output mode `{other}`"))),
        }
    }
}

/// Frame-wise fully connected stack.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearStackSpec {
    pub domain: Domain,
    pub hidden: Vec<usize>,
    pub bias: bool,
}

/// Stacked LSTM with a linear output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmStackSpec {
    pub variant: LstmVariant,
    pub hidden: usize,
    pub layers: usize,
    pub bias: LstmBias,
}

/// Convolutional encoder-decoder with skip connections and no recurrent
/// bottleneck. Channels are in the domain's own units (complex channels for a
/// complex network).
#[derive(Clone, Debug, PartialEq)]
pub struct UNetSpec {
    pub domain: Domain,
    pub channels: Vec<usize>,
    pub kernels: Vec<Dims2>,
    pub strides: Vec<Dims2>,
    pub activation: ActivationKind,
}

/// Gated convolutional recurrent network. `channels` are real-channel
/// counts; a complex block with `c` real channels has `c / 2` complex ones.
#[derive(Clone, Debug, PartialEq)]
pub struct GcrnSpec {
    pub encoder: Domain,
    pub decoder: Domain,
    pub bottleneck: LstmVariant,
    pub gating: Gating,
    pub channels: Vec<usize>,
    pub kernel: Dims2,
    pub stride: Dims2,
    pub lstm_layers: usize,
    pub lstm_groups: usize,
    pub lstm_bias: LstmBias,
    pub output_linear: bool,
    pub activation: ActivationKind,
}

/// Deep complex convolution recurrent network. Encoder `channels` are in
/// domain units; the DC bin is dropped at the input and its mask is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DccrnSpec {
    pub domain: Domain,
    pub channels: Vec<usize>,
    pub kernel: Dims2,
    pub stride: Dims2,
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub lstm_bias: LstmBias,
    pub activation: ActivationKind,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Arch {
    LinearStack(LinearStackSpec),
    LstmStack(LstmStackSpec),
    UNet(UNetSpec),
    Gcrn(GcrnSpec),
    Dccrn(DccrnSpec),
}

impl Arch {
    pub fn family(&self) -> &'static str {
        match self {
            Arch::LinearStack(_) => "linear_stack",
            Arch::LstmStack(_) => "lstm_stack",
            Arch::UNet(_) => "unet",
            Arch::Gcrn(_) => "gcrn",
            Arch::Dccrn(_) => "dccrn",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub framing: Framing,
    pub output: OutputMode,
    pub arch: Arch,
}

const MODEL_KEYS: &[&str] = &[
    "model.name",
    "model.family",
    "model.output",
    "framing.sample_rate",
    "framing.window",
    "framing.hop",
];
const LINEAR_KEYS: &[&str] = &["linear_stack.domain", "linear_stack.hidden", "linear_stack.bias"];
const LSTM_KEYS: &[&str] = &["lstm_stack.variant", "lstm_stack.hidden", "lstm_stack.layers", "lstm_stack.bias"];
const UNET_KEYS: &[&str] = &["unet.domain", "unet.channels", "unet.kernels", "unet.strides", "unet.activation"];
const GCRN_KEYS: &[&str] = &[
    "gcrn.encoder",
    "gcrn.decoder",
    "gcrn.bottleneck",
    "gcrn.gating",
    "gcrn.channels",
    "gcrn.kernel",
    "gcrn.stride",
    "gcrn.lstm_layers",
    "gcrn.lstm_groups",
    "gcrn.lstm_bias",
    "gcrn.output_linear",
    "gcrn.activation",
];
const DCCRN_KEYS: &[&str] = &[
    "dccrn.domain",
    "dccrn.channels",
    "dccrn.kernel",
    "dccrn.stride",
    "dccrn.lstm_hidden",
    "dccrn.lstm_layers",
    "dccrn.lstm_bias",
    "dccrn.activation",
];

fn cfg_err(name: &str, msg: impl fmt::Display) -> Error {
    Error::Config(format!("model `{name}`: {msg}"))
}

impl ModelSpec {
    /// Checks structural consistency without building parameters.
    pub fn validate(&self) -> Result<()> {
        let n = &self.name;
        if n.is_empty() || n.contains(char::is_whitespace) || n.contains(',') {
            return Err(Error::Config(format!("model name `{n}` must be non-empty without spaces or commas")));
        }
        self.framing.validate()?;
        match &self.arch {
            Arch::LinearStack(s) => {
                if s.hidden.contains(&0) {
                    return Err(cfg_err(n, "hidden widths must be positive"));
                }
            }
            Arch::LstmStack(s) => {
                if s.hidden == 0 || s.layers == 0 {
                    return Err(cfg_err(n, "lstm hidden and layers must be positive"));
                }
            }
            Arch::UNet(s) => {
                if s.channels.is_empty() || s.channels.len() != s.kernels.len() || s.channels.len() != s.strides.len() {
                    return Err(cfg_err(n, "unet channels, kernels and strides must have the same non-zero length"));
                }
                if s.channels.contains(&0) {
                    return Err(cfg_err(n, "unet channels must be positive"));
                }
                if s.strides.iter().chain(&s.kernels).any(|d| d.t == 0 || d.f == 0) {
                    return Err(cfg_err(n, "unet kernels and strides must be positive"));
                }
            }
            Arch::Gcrn(s) => {
                if s.bottleneck == LstmVariant::FullComplex {
                    return Err(cfg_err(n, "gcrn bottleneck must be `real` or `quasi`"));
                }
                let any_complex = s.encoder == Domain::Complex || s.decoder == Domain::Complex;
                if s.gating == Gating::RealSigmoid && any_complex {
                    return Err(cfg_err(n, "complex gcrn blocks need `separate` or `magnitude` gating"));
                }
                if s.channels.is_empty() || s.channels.iter().any(|&c| c == 0 || c % 2 != 0) {
                    return Err(cfg_err(n, "gcrn channels must be positive and even"));
                }
                if s.lstm_layers == 0 || s.lstm_groups == 0 {
                    return Err(cfg_err(n, "gcrn lstm layers and groups must be positive"));
                }
                if s.lstm_groups > 1 && s.bottleneck != LstmVariant::Real {
                    return Err(cfg_err(n, "lstm groups apply only to a real bottleneck"));
                }
                if [s.kernel, s.stride].iter().any(|d| d.t == 0 || d.f == 0) {
                    return Err(cfg_err(n, "gcrn kernel and stride must be positive"));
                }
            }
            Arch::Dccrn(s) => {
                if s.channels.is_empty() || s.channels.contains(&0) {
                    return Err(cfg_err(n, "dccrn channels must be positive"));
                }
                if s.lstm_hidden == 0 || s.lstm_layers == 0 {
                    return Err(cfg_err(n, "dccrn lstm hidden and layers must be positive"));
                }
                if [s.kernel, s.stride].iter().any(|d| d.t == 0 || d.f == 0) {
                    return Err(cfg_err(n, "dccrn kernel and stride must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn to_config(&self) -> KvConfig {
        let mut c = KvConfig::new();
        c.set("model.name", &self.name);
        c.set("model.family", self.arch.family());
        c.set("model.output", self.output.as_str());
        c.set("framing.sample_rate", self.framing.sample_rate);
        c.set("framing.window", self.framing.window_len);
        c.set("framing.hop", self.framing.hop);
        match &self.arch {
            Arch::LinearStack(s) => {
                c.set("linear_stack.domain", s.domain.as_str());
                c.set_list("linear_stack.hidden", &s.hidden);
                c.set("linear_stack.bias", s.bias);
            }
            Arch::LstmStack(s) => {
                c.set("lstm_stack.variant", s.variant.as_str());
                c.set("lstm_stack.hidden", s.hidden);
                c.set("lstm_stack.layers", s.layers);
                c.set("lstm_stack.bias", s.bias.as_str());
            }
            Arch::UNet(s) => {
                c.set("unet.domain", s.domain.as_str());
                c.set_list("unet.channels", &s.channels);
                c.set_list("unet.kernels", &s.kernels);
                c.set_list("unet.strides", &s.strides);
                c.set("unet.activation", s.activation.as_str());
            }
            Arch::Gcrn(s) => {
                c.set("gcrn.encoder", s.encoder.as_str());
                c.set("gcrn.decoder", s.decoder.as_str());
                c.set("gcrn.bottleneck", s.bottleneck.as_str());
                c.set("gcrn.gating", s.gating.as_str());
                c.set_list("gcrn.channels", &s.channels);
                c.set("gcrn.kernel", s.kernel);
                c.set("gcrn.stride", s.stride);
                c.set("gcrn.lstm_layers", s.lstm_layers);
                c.set("gcrn.lstm_groups", s.lstm_groups);
                c.set("gcrn.lstm_bias", s.lstm_bias.as_str());
                c.set("gcrn.output_linear", s.output_linear);
                c.set("gcrn.activation", s.activation.as_str());
            }
            Arch::Dccrn(s) => {
                c.set("dccrn.domain", s.domain.as_str());
                c.set_list("dccrn.channels", &s.channels);
                c.set("dccrn.kernel", s.kernel);
                c.set("dccrn.stride", s.stride);
                c.set("dccrn.lstm_hidden", s.lstm_hidden);
                c.set("dccrn.lstm_layers", s.lstm_layers);
                c.set("dccrn.lstm_bias", s.lstm_bias.as_str());
                c.set("dccrn.activation", s.activation.as_str());
            }
        }
        c
    }

    /// Canonical text form; `from_text(to_text())` reproduces the spec.
    pub fn to_text(&self) -> String {
        let order: Vec<&str> = MODEL_KEYS
            .iter()
            .chain(LINEAR_KEYS)
            .chain(LSTM_KEYS)
            .chain(UNET_KEYS)
            .chain(GCRN_KEYS)
            .chain(DCCRN_KEYS)
            .copied()
            .collect();
        self.to_config().render(&order)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_config(&KvConfig::parse(text)?)
    }

    /// Reads the `model.*`, `framing.*` and family sections of `c`; other
    /// sections are ignored so a run config can embed a model.
    pub fn from_config(c: &KvConfig) -> Result<Self> {
        let family: String = c.get("model.family")?;
        let family_keys = match family.as_str() {
            "linear_stack" => LINEAR_KEYS,
            "lstm_stack" => LSTM_KEYS,
            "unet" => UNET_KEYS,
            "gcrn" => GCRN_KEYS,
            "dccrn" => DCCRN_KEYS,
            other => return Err(Error::Config(format!("unknown model family `{other}`"))),
        };
        let prefix = format!("{family}.");
        let model_sections = ["model.", "framing.", "linear_stack.", "lstm_stack.", "unet.", "gcrn.", "dccrn."];
        for k in c.keys() {
            let ours = model_sections.iter().any(|p| k.starts_with(p));
            let allowed = MODEL_KEYS.contains(&k) || (k.starts_with(&prefix) && family_keys.contains(&k));
            if ours && !allowed {
                return Err(Error::Config(format!("unknown or misplaced key `{k}` for family `{family}`")));
            }
        }
        let framing = Framing::new(
            c.get_or("framing.sample_rate", 16_000u32)?,
            c.get("framing.window")?,
            c.get("framing.hop")?,
        )?;
        let arch = match family.as_str() {
            "linear_stack" => Arch::LinearStack(LinearStackSpec {
                domain: c.get("linear_stack.domain")?,
                hidden: c.get_list("linear_stack.hidden")?,
                bias: c.get_or("linear_stack.bias", true)?,
            }),
            "lstm_stack" => Arch::LstmStack(LstmStackSpec {
                variant: c.get("lstm_stack.variant")?,
                hidden: c.get("lstm_stack.hidden")?,
                layers: c.get("lstm_stack.layers")?,
                bias: c.get_or("lstm_stack.bias", LstmBias::PerGate)?,
            }),
            "unet" => Arch::UNet(UNetSpec {
                domain: c.get("unet.domain")?,
                channels: c.get_list("unet.channels")?,
                kernels: c.get_list("unet.kernels")?,
                strides: c.get_list("unet.strides")?,
                activation: c.get_or("unet.activation", ActivationKind::Elu)?,
            }),
            "gcrn" => Arch::Gcrn(GcrnSpec {
                encoder: c.get("gcrn.encoder")?,
                decoder: c.get("gcrn.decoder")?,
                bottleneck: c.get("gcrn.bottleneck")?,
                gating: c.get("gcrn.gating")?,
                channels: c.get_list("gcrn.channels")?,
                kernel: c.get("gcrn.kernel")?,
                stride: c.get("gcrn.stride")?,
                lstm_layers: c.get("gcrn.lstm_layers")?,
                lstm_groups: c.get_or("gcrn.lstm_groups", 1)?,
                lstm_bias: c.get_or("gcrn.lstm_bias", LstmBias::PerGate)?,
                output_linear: c.get_or("gcrn.output_linear", true)?,
                activation: c.get_or("gcrn.activation", ActivationKind::Elu)?,
            }),
            _ => Arch::Dccrn(DccrnSpec {
                domain: c.get("dccrn.domain")?,
                channels: c.get_list("dccrn.channels")?,
                kernel: c.get("dccrn.kernel")?,
                stride: c.get("dccrn.stride")?,
                lstm_hidden: c.get("dccrn.lstm_hidden")?,
                lstm_layers: c.get("dccrn.lstm_layers")?,
                lstm_bias: c.get_or("dccrn.lstm_bias", LstmBias::PerGate)?,
                activation: c.get_or("dccrn.activation", ActivationKind::Elu)?,
            }),
        };
        let spec = ModelSpec {
            name: c.get("model.name")?,
            framing,
            output: c.get_or("model.output", OutputMode::Mapping)?,
            arch,
        };
        spec.validate()?;
        Ok(spec)
    }
}
