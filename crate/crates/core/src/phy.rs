//! Link-level math: MRC uplink combining, downlink precoding, SINR, slot
//! capacity, and the decode-and-forward tile-success predicate.
//!
//! Conventions: the channel matrices hold linear *power* gains g = |h|², so
//! amplitudes are √g. The default uplink SINR sums per-branch powers
//! Σ|w_b·h_{u,b}|² in the numerator (as the reference model states it); the
//! textbook coherent form |Σ w_b·h_{u,b}|² sits behind `coherent`. The
//! downlink serves each virtual cell with unit-magnitude per-AP precoding
//! weights, receiving per-AP powers summed at the user and interference from
//! every AP outside the serving group.

use crate::channel::{ChannelParams, ChannelRealization};
use thiserror::Error;

/// Errors from link math on structurally bad groups.
#[derive(Debug, Error, PartialEq)]
pub enum PhyError {
    #[error("AP group is empty")]
    EmptyGroup,
    #[error("user group is empty")]
    EmptyUserGroup,
    #[error("AP {0} appears in more than one virtual cell")]
    OverlappingGroups(usize),
}

/// Per-link diagnostics for one (UAV group, tile) transmission in one slot.
#[derive(Debug, Clone)]
pub struct LinkBudget {
    /// Uplink SINR of the UAV into its AP group, linear.
    pub uplink_sinr: f64,
    /// Bits the uplink can deliver this slot.
    pub uplink_bits: f64,
    /// Worst-user downlink bits within the served group (broadcast rule).
    pub group_bits: f64,
}

// ---------------------------------------------------------------------------
// Combining and precoding
// ---------------------------------------------------------------------------

/// MRC weight magnitudes for an AP group: proportional to the per-link
/// amplitudes √g_b, normalized so Σ w² = 1.
pub fn mrc_weights(uplink_gains: &[f64]) -> Result<Vec<f64>, PhyError> {
    if uplink_gains.is_empty() {
        return Err(PhyError::EmptyGroup);
    }
    let total: f64 = uplink_gains.iter().sum();
    let norm = total.sqrt();
    Ok(uplink_gains.iter().map(|g| g.sqrt() / norm).collect())
}

/// The per-AP downlink precoding weight for a served user group.
///
/// The sum-maximum precoder points along Σ_v h*_{b,v}/‖h_{b,v}‖² and is then
/// normalized to ‖w‖² = 1. With one scalar (real, positive-amplitude) channel
/// per AP the normalization pins the magnitude to exactly 1, which is what
/// the downlink SINR consumes; the function exists to keep that normalization
/// explicit and testable.
pub fn precoding_weight(downlink_gains_of_group_users: &[f64]) -> Result<f64, PhyError> {
    if downlink_gains_of_group_users.is_empty() {
        return Err(PhyError::EmptyUserGroup);
    }
    // Direction Σ √g / g = Σ 1/√g is a positive scalar; normalizing a scalar
    // to unit Frobenius norm always yields magnitude 1.
    Ok(1.0)
}

// ---------------------------------------------------------------------------
// SINR
// ---------------------------------------------------------------------------

/// Uplink SINR of `target_uav` received by `ap_group` under MRC, with every
/// other active UAV interfering.
///
/// Default (non-coherent) form:
///   num = Σ_b p_u · w_b² · g_{u,b}
///   den = Σ_b Σ_{u'≠u} p_u' · w_b² · g_{u',b} + σ² · Σ_b w_b²
/// Coherent form replaces the numerator with p_u · (Σ_b w_b·√g_{u,b})².
pub fn uplink_sinr(
    target_uav: usize,
    ap_group: &[usize],
    active_uavs: &[usize],
    channels: &ChannelRealization,
    params: &ChannelParams,
    coherent: bool,
) -> Result<f64, PhyError> {
    if ap_group.is_empty() {
        return Err(PhyError::EmptyGroup);
    }
    let gains: Vec<f64> = ap_group.iter().map(|&b| channels.uplink[target_uav][b]).collect();
    let w = mrc_weights(&gains)?;
    let mut signal = 0.0;
    if coherent {
        let mut amp = 0.0;
        for (i, &b) in ap_group.iter().enumerate() {
            amp += w[i] * channels.uplink[target_uav][b].sqrt();
        }
        signal = params.p_uav_w * amp * amp;
    } else {
        for (i, &b) in ap_group.iter().enumerate() {
            signal += params.p_uav_w * w[i] * w[i] * channels.uplink[target_uav][b];
        }
    }
    let mut noise_plus_interf = 0.0;
    let mut w2_sum = 0.0;
    for (i, &b) in ap_group.iter().enumerate() {
        let w2 = w[i] * w[i];
        w2_sum += w2;
        for &u in active_uavs {
            if u != target_uav {
                noise_plus_interf += params.p_uav_w * w2 * channels.uplink[u][b];
            }
        }
    }
    noise_plus_interf += params.noise_w * w2_sum;
    Ok(signal / noise_plus_interf)
}

/// Downlink SINR of one user served by `serving_group`, with every AP outside
/// the group interfering. `all_groups` must partition the AP set.
pub fn downlink_sinr(
    serving_group: &[usize],
    user: usize,
    all_groups: &[Vec<usize>],
    channels: &ChannelRealization,
    params: &ChannelParams,
) -> Result<f64, PhyError> {
    if serving_group.is_empty() {
        return Err(PhyError::EmptyGroup);
    }
    // Partition check: every AP at most once across groups.
    let n_aps = channels.downlink.len();
    let mut seen = vec![false; n_aps];
    for group in all_groups {
        for &b in group {
            if seen[b] {
                return Err(PhyError::OverlappingGroups(b));
            }
            seen[b] = true;
        }
    }
    let mut in_group = vec![false; n_aps];
    for &b in serving_group {
        in_group[b] = true;
    }
    let mut signal = 0.0;
    for &b in serving_group {
        // |h_{b,v}·w_b|² with ‖w_b‖ = 1 is just the power gain.
        signal += params.p_ap_w * channels.downlink[b][user];
    }
    let mut interference = 0.0;
    for (b, flag) in in_group.iter().enumerate() {
        if !flag {
            interference += params.p_ap_w * channels.downlink[b][user];
        }
    }
    Ok(signal / (interference + params.noise_w))
}

// ---------------------------------------------------------------------------
// Capacity and tile success
// ---------------------------------------------------------------------------

/// Bits a slot can carry: T_b · B · log2(1 + SINR).
pub fn slot_capacity(sinr: f64, bandwidth: f64, slot_seconds: f64) -> f64 {
    slot_seconds * bandwidth * (1.0 + sinr).log2()
}

/// Broadcast-decodable bits for a served user group: the minimum per-user
/// downlink capacity (the worst user governs what everyone can decode).
/// Returns the group minimum and the per-user capacities.
pub fn group_broadcast_bits(
    serving_group: &[usize],
    user_group: &[usize],
    all_groups: &[Vec<usize>],
    channels: &ChannelRealization,
    params: &ChannelParams,
    slot_seconds: f64,
) -> Result<(f64, Vec<f64>), PhyError> {
    if user_group.is_empty() {
        return Err(PhyError::EmptyUserGroup);
    }
    let mut per_user = Vec::with_capacity(user_group.len());
    let mut min_bits = f64::INFINITY;
    for &v in user_group {
        let sinr = downlink_sinr(serving_group, v, all_groups, channels, params)?;
        let bits = slot_capacity(sinr, params.b_dl, slot_seconds);
        min_bits = min_bits.min(bits);
        per_user.push(bits);
    }
    Ok((min_bits, per_user))
}

/// Decode-and-forward success: the tile must fit through both legs.
pub fn tile_success(uplink_bits: f64, downlink_bits: f64, payload_bits: f64) -> bool {
    debug_assert!(payload_bits > 0.0);
    uplink_bits >= payload_bits && downlink_bits >= payload_bits
}
