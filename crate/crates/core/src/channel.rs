//! Per-slot channel gains.
//!
//! The UAV→AP uplink follows a probabilistic air-to-ground model: the LoS
//! probability grows with the elevation angle, the free-space term follows
//! (4πdf/c)^α, and the LoS/NLoS excess losses are blended by expectation (a
//! per-link Bernoulli draw is available behind a config flag). The AP→user
//! downlink is a plain d^−α power law. Both links carry unit-mean exponential
//! (Rayleigh power) block fading redrawn every broadcast slot.
//!
//! All gains are linear power gains: the free-space/power-law terms are path
//! *losses*, so their reciprocals enter the gain product.

use crate::config::ChannelConfig;
use crate::deployment::{Deployment, Position};
use crate::rng::{sample_exp1, CfmbRng};
use rand::Rng;
use thiserror::Error;

/// Speed of light in m/s.
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// Errors from channel math on degenerate geometry.
#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("elevation angle {0} deg outside [0, 90]")]
    BadElevation(f64),
    #[error("coincident positions give no propagation geometry")]
    CoincidentNodes,
}

/// Channel parameters on linear scale, converted once from the dB/dBm config.
#[derive(Debug, Clone)]
pub struct ChannelParams {
    pub f_ul: f64,
    pub f_dl: f64,
    pub alpha_ul: f64,
    pub alpha_dl: f64,
    pub eta_los: f64,
    pub eta_nlos: f64,
    /// Noise power in watts.
    pub noise_w: f64,
    /// UAV transmit power in watts.
    pub p_uav_w: f64,
    /// AP transmit power in watts.
    pub p_ap_w: f64,
    pub b_ul: f64,
    pub b_dl: f64,
    pub min_distance: f64,
    pub bernoulli_los: bool,
}

/// dBm → watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl ChannelParams {
    pub fn from_config(cfg: &ChannelConfig) -> Self {
        Self {
            f_ul: cfg.f_ul_hz,
            f_dl: cfg.f_dl_hz,
            alpha_ul: cfg.alpha_ul,
            alpha_dl: cfg.alpha_dl,
            eta_los: cfg.eta_los,
            eta_nlos: cfg.eta_nlos,
            noise_w: dbm_to_watts(cfg.noise_dbm),
            p_uav_w: dbm_to_watts(cfg.uav_eirp_dbm),
            p_ap_w: dbm_to_watts(cfg.ap_eirp_dbm),
            b_ul: cfg.bandwidth_ul_hz,
            b_dl: cfg.bandwidth_dl_hz,
            min_distance: cfg.min_distance_m,
            bernoulli_los: cfg.bernoulli_los,
        }
    }
}

/// One slot's worth of channel gains: `uplink[u][b]` for UAV u → AP b and
/// `downlink[b][v]` for AP b → user v, all linear power gains.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub uplink: Vec<Vec<f64>>,
    pub downlink: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Link math
// ---------------------------------------------------------------------------

/// LoS probability at the given elevation angle (degrees):
/// 1 / (1 + 11.95·exp(−0.14·(θ − 11.95))). Strictly increasing on [0°, 90°].
pub fn los_probability(elevation_deg: f64) -> Result<f64, ChannelError> {
    if !(0.0..=90.0).contains(&elevation_deg) {
        return Err(ChannelError::BadElevation(elevation_deg));
    }
    Ok(1.0 / (1.0 + 11.95 * (-0.14 * (elevation_deg - 11.95)).exp()))
}

/// Elevation angle of the UAV as seen from the AP, in degrees:
/// arcsin(height difference / 3D distance), in (0, 90].
pub fn elevation_angle(uav: &Position, ap: &Position) -> Result<f64, ChannelError> {
    let d = uav.distance(ap);
    if d == 0.0 {
        return Err(ChannelError::CoincidentNodes);
    }
    let h = uav.z - ap.z;
    Ok((h / d).asin().to_degrees())
}

/// Free-space path loss (4πdf/c)^α as a linear loss factor.
fn free_space_loss(d: f64, f: f64, alpha: f64) -> f64 {
    (4.0 * std::f64::consts::PI * d * f / LIGHT_SPEED).powf(alpha)
}

/// Uplink power gain with the expected LoS/NLoS excess-loss mixture:
/// [P_LoS/η_LoS + (1−P_LoS)/η_NLoS] · (4πdf/c)^(−α_UL) · β.
pub fn uplink_gain(
    uav: &Position,
    ap: &Position,
    params: &ChannelParams,
    beta: f64,
) -> Result<f64, ChannelError> {
    let d = uav.distance(ap);
    if d == 0.0 {
        return Err(ChannelError::CoincidentNodes);
    }
    let theta = elevation_angle(uav, ap)?;
    let p_los = los_probability(theta)?;
    let mixture = p_los / params.eta_los + (1.0 - p_los) / params.eta_nlos;
    Ok(mixture / free_space_loss(d, params.f_ul, params.alpha_ul) * beta)
}

/// Uplink power gain with a resolved LoS/NLoS branch (Bernoulli mode).
pub fn uplink_gain_branch(
    uav: &Position,
    ap: &Position,
    params: &ChannelParams,
    beta: f64,
    los: bool,
) -> Result<f64, ChannelError> {
    let d = uav.distance(ap);
    if d == 0.0 {
        return Err(ChannelError::CoincidentNodes);
    }
    let eta = if los { params.eta_los } else { params.eta_nlos };
    Ok(1.0 / (eta * free_space_loss(d, params.f_ul, params.alpha_ul)) * beta)
}

/// Downlink power gain d^(−α_DL) · β, with the distance clamped to the
/// configured minimum so co-located nodes stay finite.
pub fn downlink_gain(ap: &Position, user: &Position, params: &ChannelParams, beta: f64) -> f64 {
    let d = ap.distance(user).max(params.min_distance);
    d.powf(-params.alpha_dl) * beta
}

/// Unit-mean exponential fading power (squared Rayleigh amplitude).
pub fn sample_fading(rng: &mut CfmbRng) -> f64 {
    sample_exp1(rng)
}

/// Draws fresh fading for every link and fills both gain matrices.
///
/// Draw order is fixed (uplink row-major over (u, b), then downlink row-major
/// over (b, v)) so a seeded stream reproduces the realization bit-exactly.
pub fn realize_channels(
    deployment: &Deployment,
    params: &ChannelParams,
    rng: &mut CfmbRng,
) -> ChannelRealization {
    let n_uavs = deployment.uavs.len();
    let n_aps = deployment.aps.len();
    let n_users = deployment.users.len();
    let mut uplink = vec![vec![0.0; n_aps]; n_uavs];
    for (u, uav) in deployment.uavs.iter().enumerate() {
        for (b, ap) in deployment.aps.iter().enumerate() {
            let beta = sample_fading(rng);
            uplink[u][b] = if params.bernoulli_los {
                let theta = elevation_angle(uav, ap).expect("UAV above ground");
                let p = los_probability(theta).expect("valid elevation");
                let los = rng.gen::<f64>() < p;
                uplink_gain_branch(uav, ap, params, beta, los).expect("valid geometry")
            } else {
                uplink_gain(uav, ap, params, beta).expect("valid geometry")
            };
        }
    }
    let mut downlink = vec![vec![0.0; n_users]; n_aps];
    for (b, ap) in deployment.aps.iter().enumerate() {
        for (v, user) in deployment.users.iter().enumerate() {
            let beta = sample_fading(rng);
            downlink[b][v] = downlink_gain(ap, &user.position, params, beta);
        }
    }
    ChannelRealization { uplink, downlink }
}
