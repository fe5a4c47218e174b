//! AP↔UAV association: every access point picks one UAV per broadcast slot,
//! and the APs that picked the same UAV form that UAV's virtual cell.
//! Implements the cell-based (CB) and cell-free (CF) baselines plus the
//! mixed-radix joint-action encoding used by the centralized agent.

use crate::deployment::Deployment;
use crate::video::DecodeState;
use thiserror::Error;

/// Errors from joint-action encoding.
#[derive(Debug, Error, PartialEq)]
pub enum AssocError {
    #[error("AP {ap} chose UAV {choice}, but only {n_uavs} UAVs exist")]
    ChoiceOutOfRange { ap: usize, choice: usize, n_uavs: usize },
    #[error("joint action {index} out of range for {n_uavs}^{n_aps} actions")]
    IndexOutOfRange { index: u64, n_aps: usize, n_uavs: usize },
    #[error("action space {n_uavs}^{n_aps} does not fit in 64 bits")]
    ActionSpaceTooLarge { n_aps: usize, n_uavs: usize },
}

/// One slot's association: per-AP UAV choices and the induced partition of
/// APs into per-UAV virtual cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VirtualCellMap {
    /// `choices[b]` = UAV served by AP b.
    pub choices: Vec<usize>,
    /// `groups[u]` = APs serving UAV u (ascending); groups partition the APs.
    pub groups: Vec<Vec<usize>>,
}

impl VirtualCellMap {
    pub fn group(&self, uav: usize) -> &[usize] {
        &self.groups[uav]
    }

    pub fn n_aps(&self) -> usize {
        self.choices.len()
    }
}

/// Group equal choices into virtual cells.
pub fn form_virtual_cells(choices: &[usize], n_uavs: usize) -> VirtualCellMap {
    let mut groups = vec![Vec::new(); n_uavs];
    for (ap, &u) in choices.iter().enumerate() {
        groups[u].push(ap);
    }
    VirtualCellMap { choices: choices.to_vec(), groups }
}

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

/// Cell-based decision for one AP: serve the UAV whose currently scheduled
/// tile is requested by the most users inside the AP's observation window.
/// Ties (including the empty window) resolve to the lowest UAV index.
///
/// `uav_tiles[u]` is the flat tile UAV u transmits this slot; `window_users`
/// are the user indices inside this AP's window.
pub fn cb_decide(
    window_users: &[usize],
    uav_tiles: &[usize],
    cluster_of: &[usize],
    states: &[DecodeState],
) -> usize {
    let mut best = 0usize;
    let mut best_count = 0usize;
    for (u, &tile) in uav_tiles.iter().enumerate() {
        let count = window_users
            .iter()
            .filter(|&&v| cluster_of[v] == u && states[v].requested(tile))
            .count();
        if count > best_count {
            best = u;
            best_count = count;
        }
    }
    best
}

/// Cell-based association for every AP of a deployment.
pub fn cb_associate(
    dep: &Deployment,
    uav_tiles: &[usize],
    cluster_of: &[usize],
    states: &[DecodeState],
) -> VirtualCellMap {
    let choices: Vec<usize> = (0..dep.aps.len())
        .map(|ap| cb_decide(&dep.window_users(ap), uav_tiles, cluster_of, states))
        .collect();
    form_virtual_cells(&choices, uav_tiles.len())
}

/// Cell-free decision: all APs form one virtual cell around the UAV whose
/// current tile carries the globally highest priority; ties resolve to the
/// lowest UAV index.
pub fn cf_decide(per_uav_priority: &[f64], n_aps: usize) -> VirtualCellMap {
    let mut best = 0usize;
    for (u, &p) in per_uav_priority.iter().enumerate() {
        if p > per_uav_priority[best] {
            best = u;
        }
    }
    form_virtual_cells(&vec![best; n_aps], per_uav_priority.len())
}

// ---------------------------------------------------------------------------
// Joint-action encoding
// ---------------------------------------------------------------------------

/// Encode per-AP choices as one index in the |U|^|B| joint space,
/// AP 0 least significant.
pub fn encode_joint_action(choices: &[usize], n_uavs: usize) -> Result<u64, AssocError> {
    action_space_size(choices.len(), n_uavs)?;
    let mut index: u64 = 0;
    let mut radix: u64 = 1;
    for (ap, &c) in choices.iter().enumerate() {
        if c >= n_uavs {
            return Err(AssocError::ChoiceOutOfRange { ap, choice: c, n_uavs });
        }
        index += c as u64 * radix;
        radix *= n_uavs as u64;
    }
    Ok(index)
}

/// Inverse of `encode_joint_action`.
pub fn decode_joint_action(
    index: u64,
    n_aps: usize,
    n_uavs: usize,
) -> Result<Vec<usize>, AssocError> {
    let size = action_space_size(n_aps, n_uavs)?;
    if index >= size {
        return Err(AssocError::IndexOutOfRange { index, n_aps, n_uavs });
    }
    let mut rest = index;
    let mut choices = Vec::with_capacity(n_aps);
    for _ in 0..n_aps {
        choices.push((rest % n_uavs as u64) as usize);
        rest /= n_uavs as u64;
    }
    Ok(choices)
}

/// |U|^|B|, guarded against overflow.
pub fn action_space_size(n_aps: usize, n_uavs: usize) -> Result<u64, AssocError> {
    let mut size: u64 = 1;
    for _ in 0..n_aps {
        size = size
            .checked_mul(n_uavs as u64)
            .ok_or(AssocError::ActionSpaceTooLarge { n_aps, n_uavs })?;
    }
    Ok(size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DeploymentConfig;
    use crate::rng::rng_for;
    use crate::video::TileId;
    use rand::Rng;

    fn user_requesting(flats: &[usize]) -> DecodeState {
        let tiles: Vec<TileId> = flats.iter().map(|&f| TileId::from_flat(0, f)).collect();
        DecodeState::new(&tiles)
    }

    #[test]
    fn virtual_cells_partition_the_aps() {
        let map = form_virtual_cells(&[0, 0, 0, 0], 2);
        assert_eq!(map.groups[0], vec![0, 1, 2, 3]);
        assert!(map.groups[1].is_empty());
        let map = form_virtual_cells(&[2, 0, 1], 3);
        for (u, group) in map.groups.iter().enumerate() {
            assert_eq!(group.len(), 1, "uav {u}");
        }
        // Partition property over random choices.
        let mut rng = rng_for(3, "cells", 0);
        for _ in 0..200 {
            let choices: Vec<usize> = (0..9).map(|_| rng.gen_range(0..4)).collect();
            let map = form_virtual_cells(&choices, 4);
            let total: usize = map.groups.iter().map(Vec::len).sum();
            assert_eq!(total, 9);
            let mut seen = vec![false; 9];
            for group in &map.groups {
                for &ap in group {
                    assert!(!seen[ap], "AP {ap} in two groups");
                    seen[ap] = true;
                }
            }
        }
    }

    #[test]
    fn cb_counts_requesters_of_the_scheduled_tile() {
        // UAV 0 transmits tile 7, UAV 1 transmits tile 8. Five window users
        // of UAV 1 request tile 8; three of UAV 0 request tile 7 → UAV 1.
        let mut states = Vec::new();
        let mut cluster = Vec::new();
        for _ in 0..5 {
            states.push(user_requesting(&[8]));
            cluster.push(1);
        }
        for _ in 0..3 {
            states.push(user_requesting(&[7]));
            cluster.push(0);
        }
        let window: Vec<usize> = (0..8).collect();
        assert_eq!(cb_decide(&window, &[7, 8], &cluster, &states), 1);
        // Swap the schedule so UAV 1's tile is nobody's request → UAV 0.
        assert_eq!(cb_decide(&window, &[7, 9], &cluster, &states), 0);
    }

    #[test]
    fn cb_defaults_to_uav_zero() {
        let states: Vec<DecodeState> = vec![];
        let cluster: Vec<usize> = vec![];
        assert_eq!(cb_decide(&[], &[3, 4], &cluster, &states), 0, "empty window");
        // Users in window but none requesting any scheduled tile.
        let states = vec![user_requesting(&[50])];
        let cluster = vec![1];
        assert_eq!(cb_decide(&[0], &[3, 4], &cluster, &states), 0);
    }

    #[test]
    fn cb_ties_break_to_the_lowest_uav() {
        let states = vec![user_requesting(&[7]), user_requesting(&[8])];
        let cluster = vec![1, 2];
        let window = vec![0, 1];
        // UAVs 1 and 2 both count one requester; UAV 0 none.
        assert_eq!(cb_decide(&window, &[0, 7, 8], &cluster, &states), 1);
    }

    #[test]
    fn cb_only_sees_its_window() {
        let cfg = DeploymentConfig::default();
        let mut rng = rng_for(3, "deploy", 7);
        let mut dep = Deployment::generate(&cfg, &mut rng).unwrap();
        let cluster: Vec<usize> = dep.users.iter().map(|u| u.cluster).collect();
        let states: Vec<DecodeState> =
            (0..dep.users.len()).map(|_| user_requesting(&[0, 1, 2, 3])).collect();
        let uav_tiles = vec![0, 1, 2, 3];
        let ap = 0; // corner AP at (10, 10); window x,y ∈ [-20, 40]
        let before = cb_decide(&dep.window_users(ap), &uav_tiles, &cluster, &states);
        // Teleport every user outside the window to the far corner; the
        // decision must not change.
        for user in &mut dep.users {
            let dx = (user.position.x - 10.0).abs();
            let dy = (user.position.y - 10.0).abs();
            if dx > 30.0 || dy > 30.0 {
                user.position.x = 79.0;
                user.position.y = 79.0;
            }
        }
        let after = cb_decide(&dep.window_users(ap), &uav_tiles, &cluster, &states);
        assert_eq!(before, after);
    }

    #[test]
    fn cf_sends_every_ap_to_the_top_priority_uav() {
        let map = cf_decide(&[0.4, 2.5, 1.1, 2.4], 9);
        assert_eq!(map.choices, vec![1; 9]);
        assert_eq!(map.groups[1].len(), 9);
        let nonempty = map.groups.iter().filter(|g| !g.is_empty()).count();
        assert_eq!(nonempty, 1);
        // Ties resolve to the lowest UAV index.
        let map = cf_decide(&[3.0, 3.0, 1.0], 4);
        assert_eq!(map.choices, vec![0; 4]);
    }

    #[test]
    fn joint_action_reference_points() {
        assert_eq!(encode_joint_action(&[0, 0, 0], 4).unwrap(), 0);
        assert_eq!(encode_joint_action(&[1, 0], 4).unwrap(), 1);
        assert_eq!(encode_joint_action(&[0, 1], 4).unwrap(), 4);
        assert_eq!(decode_joint_action(1, 2, 4).unwrap(), vec![1, 0]);
        assert_eq!(
            encode_joint_action(&[5, 0], 4),
            Err(AssocError::ChoiceOutOfRange { ap: 0, choice: 5, n_uavs: 4 })
        );
        assert_eq!(
            decode_joint_action(16, 2, 4),
            Err(AssocError::IndexOutOfRange { index: 16, n_aps: 2, n_uavs: 4 })
        );
    }

    #[test]
    fn joint_action_encoding_is_a_bijection() {
        let mut rng = rng_for(3, "action", 0);
        let (n_aps, n_uavs) = (9, 4);
        let size = action_space_size(n_aps, n_uavs).unwrap();
        assert_eq!(size, 262_144);
        for _ in 0..10_000 {
            let index = rng.gen_range(0..size);
            let choices = decode_joint_action(index, n_aps, n_uavs).unwrap();
            assert_eq!(choices.len(), n_aps);
            assert!(choices.iter().all(|&c| c < n_uavs));
            assert_eq!(encode_joint_action(&choices, n_uavs).unwrap(), index);
        }
    }

    #[test]
    fn oversized_action_spaces_are_rejected() {
        assert!(matches!(
            action_space_size(64, 4),
            Err(AssocError::ActionSpaceTooLarge { .. })
        ));
    }
}
