//! Wireless channel primitives: log-distance path loss with optional
//! Rayleigh fading, and the SNR used by the rate model.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

/// Log-distance path-loss model parameters.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PathLossParams {
    /// Loss at the reference distance, dB.
    pub pl0_db: f64,
    /// Path-loss exponent.
    pub exponent: f64,
    /// Reference distance, meters.
    pub ref_distance_m: f64,
    /// Multiply the deterministic gain by a unit-mean Rayleigh power fade.
    pub rayleigh_fading: bool,
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            pl0_db: 30.0,
            exponent: 2.0,
            ref_distance_m: 1.0,
            rayleigh_fading: true,
        }
    }
}

impl PathLossParams {
    /// Validates field ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.pl0_db.is_finite()) || !(self.exponent >= 0.0) || !(self.ref_distance_m > 0.0)
        {
            return Err(Error::Config("invalid path-loss parameters".into()));
        }
        Ok(())
    }
}

/// Linear power gain between two positions.
///
/// `gain = 10^(−PL(d)/10) · fade` with `PL(d) = PL0 + 10·n·log10(d/d0)`;
/// the distance is floored at 1 m. The fade is a unit-mean Rayleigh power
/// fade (exponential with mean 1) drawn from `rng`, or exactly 1 when
/// fading is disabled. Call with a stream seeded per (slot, pair) for
/// reproducible channels.
pub fn path_gain<R: Rng + ?Sized>(
    device_pos: [f64; 2],
    server_pos: [f64; 2],
    params: &PathLossParams,
    rng: &mut R,
) -> f64 {
    let dx = device_pos[0] - server_pos[0];
    let dy = device_pos[1] - server_pos[1];
    let d = (dx * dx + dy * dy).sqrt().max(1.0);
    let pl_db = params.pl0_db + 10.0 * params.exponent * (d / params.ref_distance_m).log10();
    let mut gain = 10f64.powf(-pl_db / 10.0);
    if params.rayleigh_fading {
        let fade = Exp::new(1.0).expect("unit rate is valid").sample(rng);
        gain *= fade;
    }
    gain
}

/// How the signal-to-noise ratio treats the noise term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrMode {
    /// Noise power = density × allocated band (physical default).
    FullBand,
    /// Noise density used directly, no bandwidth factor — the rate model's
    /// literal form.
    PsdLiteral,
}

/// Signal-to-noise ratio for one device/server pair.
///
/// The channel matrix stores linear power gains and the rate model squares
/// them, so this computes `gain²·P / noise` with
/// `noise = N0·band` ([`SnrMode::FullBand`]) or `noise = N0`
/// ([`SnrMode::PsdLiteral`]).
pub fn snr(
    gain: f64,
    tx_power_w: f64,
    noise_psd_w_per_hz: f64,
    band_hz: f64,
    mode: SnrMode,
) -> Result<f64> {
    if !(gain >= 0.0) || !(tx_power_w > 0.0) || !(noise_psd_w_per_hz > 0.0) {
        return Err(Error::Contract(
            "snr: gain must be ≥ 0 and powers positive".into(),
        ));
    }
    let noise = match mode {
        SnrMode::FullBand => {
            if !(band_hz > 0.0) {
                return Err(Error::Contract(
                    "snr: full-band mode requires a positive band".into(),
                ));
            }
            noise_psd_w_per_hz * band_hz
        }
        SnrMode::PsdLiteral => noise_psd_w_per_hz,
    };
    Ok(gain * gain * tx_power_w / noise)
}
