use serde::{Deserialize, Serialize};

use crate::complex::{CNode, ComplexPair};
use crate::error::{invalid, shape_err, Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Tensor;

/// Bound on |SI-SDR| in dB; a perfect estimate reports `+SI_SDR_CAP`,
/// an estimate with no reference component `-SI_SDR_CAP`.
pub const SI_SDR_CAP: f64 = 140.0;

/// Magnitude regularizer used inside training losses.
pub const LOSS_MAG_EPS: f64 = 1e-12;

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to `±SI_SDR_CAP`.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(shape_err("si_sdr", &[estimate.len()], &[reference.len()]));
    }
    let rr = dot(reference, reference);
    if rr == 0.0 {
        return Err(invalid("si_sdr", "reference has zero energy"));
    }
    let alpha = dot(estimate, reference) / rr;
    let (mut target, mut resid) = (0.0, 0.0);
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        target += t * t;
        resid += (e - t) * (e - t);
    }
    let db = if target == 0.0 {
        -SI_SDR_CAP
    } else if resid == 0.0 {
        SI_SDR_CAP
    } else {
        10.0 * (target / resid).log10()
    };
    if db.is_nan() {
        return Err(Error::NonFinite("si_sdr".into()));
    }
    Ok(db.clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

/// One noisy training or evaluation example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureExample {
    pub clean: Vec<f64>,
    /// Noise after scaling to the requested SNR.
    pub noise: Vec<f64>,
    pub snr_db: f64,
    pub mixed: Vec<f64>,
    pub seed: u64,
}

impl MixtureExample {
    /// SNR of the stored components, in dB.
    pub fn realized_snr(&self) -> f64 {
        10.0 * (power(&self.clean) / power(&self.noise)).log10()
    }
}

/// Scales `noise` (looped or truncated to the clean length) so the mixture has
/// the requested SNR.
pub fn mix_at_snr(clean: &[f64], noise: &[f64], snr_db: f64, seed: u64) -> Result<MixtureExample> {
    if clean.is_empty() || noise.is_empty() {
        return Err(invalid("mix_at_snr", "empty input"));
    }
    if !snr_db.is_finite() {
        return Err(invalid("mix_at_snr", "snr must be finite"));
    }
    let noise: Vec<f64> = noise.iter().cycle().take(clean.len()).copied().collect();
    let (pc, pn) = (power(clean), power(&noise));
    if pc == 0.0 || pn == 0.0 {
        return Err(invalid("mix_at_snr", "zero-energy input"));
    }
    let k = (pc / (pn * 10f64.powf(snr_db / 10.0))).sqrt();
    let noise: Vec<f64> = noise.iter().map(|v| v * k).collect();
    let mixed = clean.iter().zip(&noise).map(|(c, n)| c + n).collect();
    Ok(MixtureExample {
        clean: clean.to_vec(),
        noise,
        snr_db,
        mixed,
        seed,
    })
}

/// Negative SI-SDR averaged over the rows of `est[b, n]`.
pub fn loss_sisdr(g: &mut Graph, est: NodeId, reference: &Tensor) -> Result<NodeId> {
    let shape = g.shape(est)?.to_vec();
    if shape != reference.shape() || shape.len() != 2 {
        return Err(shape_err("loss_sisdr", &shape, reference.shape()));
    }
    let b = shape[0];
    let rr: Vec<f64> = reference.data().chunks(shape[1]).map(|r| dot(r, r)).collect();
    if rr.contains(&0.0) {
        return Err(invalid("loss_sisdr", "reference row has zero energy"));
    }
    let r = g.constant(reference.clone());
    let inv_rr = g.constant(Tensor::new(&[b], rr.iter().map(|v| 1.0 / v).collect())?);
    let er = g.mul(est, r)?;
    let er = g.row_sum(er)?;
    let alpha = g.mul(er, inv_rr)?;
    let target = g.scale_rows(r, alpha)?;
    let resid = g.sub(est, target)?;
    let t2 = g.square(target)?;
    let tt = g.row_sum(t2)?;
    let n2 = g.square(resid)?;
    let nn = g.row_sum(n2)?;
    // A relative floor keeps the log finite at a perfect estimate; the cap
    // then bounds the value.
    let floor = rr.iter().sum::<f64>() / b as f64 * 1e-30;
    let tt = g.add_scalar(tt, floor)?;
    let nn = g.add_scalar(nn, floor)?;
    let ratio = g.div(tt, nn)?;
    let ln = g.ln(ratio)?;
    let db = g.scale(ln, 10.0 / std::f64::consts::LN_10)?;
    let db = g.clamp_max(db, SI_SDR_CAP)?;
    let m = g.mean(db)?;
    g.neg(m)
}

fn spectral_loss(g: &mut Graph, est: CNode, reference: &ComplexPair, what: &str, square: bool) -> Result<NodeId> {
    let shape = g.shape(est.re)?.to_vec();
    if shape != reference.shape() {
        return Err(shape_err(what, &shape, reference.shape()));
    }
    let r = g.c_constant(reference.clone());
    let rmag = g.c_magnitude(r, LOSS_MAG_EPS)?;
    let emag = g.c_magnitude(est, LOSS_MAG_EPS)?;
    let mut total: Option<NodeId> = None;
    for (a, b) in [(est.re, r.re), (est.im, r.im), (emag, rmag)] {
        let d = g.sub(a, b)?;
        let p = if square { g.square(d)? } else { g.abs(d)? };
        let m = g.mean(p)?;
        total = Some(match total {
            Some(t) => g.add(t, m)?,
            None => m,
        });
    }
    Ok(total.expect("three terms"))
}

/// `mean|ΔRe| + mean|ΔIm| + mean|Δ|X||`.
pub fn loss_l1_spec(g: &mut Graph, est: CNode, reference: &ComplexPair) -> Result<NodeId> {
    spectral_loss(g, est, reference, "loss_l1_spec", false)
}

/// `mean ΔRe² + mean ΔIm² + mean Δ|X|²`.
pub fn loss_mse_spec(g: &mut Graph, est: CNode, reference: &ComplexPair) -> Result<NodeId> {
    spectral_loss(g, est, reference, "loss_mse_spec", true)
}
