//! Shipped reference configurations. The linear and LSTM stacks are fully
//! determined by their published totals; the convolutional families use
//! channel plans tuned to land near the published sizes.

use crate::complex::ActivationKind;
use crate::dsp::Framing;
use crate::error::{Error, Result};
use crate::nn::{Domain, Gating, LstmBias, LstmVariant};

use super::spec::{Arch, DccrnSpec, Dims2, GcrnSpec, LinearStackSpec, LstmStackSpec, ModelSpec, OutputMode, UNetSpec};

const SUITES: &[(&str, &[&str])] = &[
    (
        "table1",
        &["c_lstm", "quasi_c_lstm", "lstm", "c_linear", "r_linear", "dcunet", "runet"],
    ),
    (
        "table2",
        &[
            "gcrn_2a", "gcrn_2b", "gcrn_2c", "gcrn_2d", "gcrn_2e", "gcrn_2f", "gcrn_2g", "gcrn_2h", "gcrn_2i", "gcrn_2j",
            "gcrn_2A", "gcrn_2J",
        ],
    ),
    ("table3", &["cgcrn_m", "gcrn_m", "cgcrn_s", "gcrn_s"]),
    ("table5", &["dccrn", "dccrn_real"]),
    ("tiny", &["gcrn_tiny", "cgcrn_tiny"]),
];

/// Real/complex presets meant to be trained against each other.
pub const TRAINING_PAIRS: &[(&str, &str)] = &[("gcrn_tiny", "cgcrn_tiny")];

/// The training pair a preset belongs to, as (real, complex).
pub fn training_pair(name: &str) -> Option<(&'static str, &'static str)> {
    TRAINING_PAIRS.iter().copied().find(|(r, c)| *r == name || *c == name)
}

pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|(n, _)| *n).collect()
}

pub fn preset_names() -> Vec<&'static str> {
    SUITES.iter().flat_map(|(_, m)| m.iter().copied()).collect()
}

/// Every model of a named suite, in table order.
pub fn suite(name: &str) -> Result<Vec<ModelSpec>> {
    let (_, members) = SUITES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::Config(format!("unknown preset suite `{name}` (known: {})", suite_names().join(", "))))?;
    members.iter().map(|m| preset(m)).collect()
}

fn lstm_stack(name: &str, variant: LstmVariant, hidden: usize, bias: LstmBias) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        framing: Framing::W512_H128,
        output: OutputMode::Masking,
        arch: Arch::LstmStack(LstmStackSpec {
            variant,
            hidden,
            layers: 3,
            bias,
        }),
    }
}

fn linear_stack(name: &str, domain: Domain, hidden: usize) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        framing: Framing::W320_H160,
        output: OutputMode::Masking,
        arch: Arch::LinearStack(LinearStackSpec {
            domain,
            hidden: vec![hidden, hidden],
            bias: true,
        }),
    }
}

fn unet(name: &str, domain: Domain, channels: Vec<usize>) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        framing: Framing::W512_H128,
        output: OutputMode::Masking,
        arch: Arch::UNet(UNetSpec {
            domain,
            kernels: vec![Dims2::new(7, 5), Dims2::new(7, 5), Dims2::new(5, 3), Dims2::new(5, 3), Dims2::new(5, 3)],
            strides: vec![Dims2::new(1, 2), Dims2::new(2, 2), Dims2::new(1, 2), Dims2::new(2, 2), Dims2::new(1, 2)],
            channels,
            activation: ActivationKind::ReLU,
        }),
    }
}

struct Toggles {
    quasi: bool,
    enc: bool,
    dec: bool,
    gating: Gating,
    output: OutputMode,
}

const REAL: Toggles = Toggles {
    quasi: false,
    enc: false,
    dec: false,
    gating: Gating::RealSigmoid,
    output: OutputMode::Mapping,
};

fn domain(complex: bool) -> Domain {
    if complex {
        Domain::Complex
    } else {
        Domain::Real
    }
}

fn gcrn(name: &str, framing: Framing, channels: Vec<usize>, kernel: Dims2, layers: usize, t: Toggles) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        framing,
        output: t.output,
        arch: Arch::Gcrn(GcrnSpec {
            encoder: domain(t.enc),
            decoder: domain(t.dec),
            bottleneck: if t.quasi { LstmVariant::QuasiComplex } else { LstmVariant::Real },
            gating: t.gating,
            channels,
            kernel,
            stride: Dims2::new(1, 2),
            lstm_layers: layers,
            lstm_groups: if t.quasi { 1 } else { 2 },
            lstm_bias: LstmBias::PerGate,
            output_linear: true,
            activation: ActivationKind::Elu,
        }),
    }
}

fn table2(name: &str, t: Toggles) -> ModelSpec {
    gcrn(name, Framing::W320_H160, vec![16, 32, 64, 128, 256], Dims2::new(1, 3), 2, t)
}

/// Desk-scale pair. The complex convolutions are widened to recover the
/// parameters they lose to weight sharing; the bottleneck width is common.
fn tiny(name: &str, channels: Vec<usize>, t: Toggles) -> ModelSpec {
    let mut spec = gcrn(name, Framing::W320_H160, channels, Dims2::new(1, 3), 1, t);
    if let Arch::Gcrn(g) = &mut spec.arch {
        g.output_linear = false;
    }
    spec
}

fn dccrn(name: &str, d: Domain, channels: Vec<usize>, hidden: usize) -> ModelSpec {
    ModelSpec {
        name: name.into(),
        framing: Framing::W512_H128,
        output: match d {
            Domain::Complex => OutputMode::PolarMasking,
            Domain::Real => OutputMode::Masking,
        },
        arch: Arch::Dccrn(DccrnSpec {
            domain: d,
            channels,
            kernel: Dims2::new(2, 5),
            stride: Dims2::new(1, 2),
            lstm_hidden: hidden,
            lstm_layers: 2,
            lstm_bias: LstmBias::PerGate,
            activation: ActivationKind::Elu,
        }),
    }
}

/// A named reference configuration.
pub fn preset(name: &str) -> Result<ModelSpec> {
    use Gating::{Magnitude as Mag, Separate as Sep};
    let t = |quasi, enc, dec, gating, output| Toggles {
        quasi,
        enc,
        dec,
        gating,
        output,
    };
    let map = OutputMode::Mapping;
    let spec = match name {
        "c_lstm" => lstm_stack(name, LstmVariant::FullComplex, 732, LstmBias::InputAndHidden),
        "quasi_c_lstm" => lstm_stack(name, LstmVariant::QuasiComplex, 732, LstmBias::InputAndHidden),
        "lstm" => lstm_stack(name, LstmVariant::Real, 1024, LstmBias::PerGate),
        "c_linear" => linear_stack(name, Domain::Complex, 406),
        "r_linear" => linear_stack(name, Domain::Real, 512),
        "dcunet" => unet(name, Domain::Complex, vec![47, 95, 95, 95, 95]),
        "runet" => unet(name, Domain::Real, vec![67, 134, 134, 134, 134]),
        "gcrn_2a" => table2(name, REAL),
        "gcrn_2b" => table2(name, t(true, false, false, Gating::RealSigmoid, map)),
        "gcrn_2c" => table2(name, t(false, true, false, Sep, map)),
        "gcrn_2d" => table2(name, t(false, true, false, Mag, map)),
        "gcrn_2e" => table2(name, t(true, true, false, Sep, map)),
        "gcrn_2f" => table2(name, t(true, true, false, Mag, map)),
        "gcrn_2g" => table2(name, t(false, true, true, Sep, map)),
        "gcrn_2h" => table2(name, t(false, true, true, Mag, map)),
        "gcrn_2i" => table2(name, t(true, true, true, Sep, map)),
        "gcrn_2j" => table2(name, t(true, true, true, Mag, map)),
        "gcrn_2A" => table2(name, t(false, false, false, Gating::RealSigmoid, OutputMode::Masking)),
        "gcrn_2J" => table2(name, t(true, true, true, Mag, OutputMode::Masking)),
        "gcrn_m" => gcrn(name, Framing::W320_H160, vec![16, 32, 64, 64, 128], Dims2::new(1, 3), 2, REAL),
        "cgcrn_m" => gcrn(name, Framing::W320_H160, vec![16, 32, 64, 64, 128], Dims2::new(1, 3), 2, t(true, true, true, Mag, map)),
        "gcrn_s" => gcrn(name, Framing::W320_H160, vec![16, 32, 32, 64, 60], Dims2::new(1, 3), 2, REAL),
        "cgcrn_s" => gcrn(name, Framing::W320_H160, vec![16, 32, 32, 64, 60], Dims2::new(1, 3), 2, t(true, true, true, Mag, map)),
        "dccrn" => dccrn(name, Domain::Complex, vec![16, 32, 64, 128, 128, 128], 128),
        "dccrn_real" => dccrn(name, Domain::Real, vec![32, 64, 64, 64, 128, 256], 256),
        "gcrn_tiny" => tiny(name, vec![8, 8, 8, 8], t(false, false, false, Gating::RealSigmoid, OutputMode::Masking)),
        "cgcrn_tiny" => tiny(name, vec![12, 12, 12, 8], t(true, true, true, Mag, OutputMode::Masking)),
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}` (known: {})",
                preset_names().join(", ")
            )))
        }
    };
    Ok(spec)
}
