//! Grid observations for the learning controllers.
//!
//! All three observation kinds share one dense layout: `channels` maps of
//! `height`×`width` cells, flattened channel-major so they feed the conv
//! encoder directly.
//!
//! * Global (centralized association): per UAV, three maps over the whole
//!   area — UAV position, AP positions, scheduled-tile requester density.
//! * Local (distributed association): the same three maps per UAV, restricted
//!   to one AP's square observation window and centered on that AP.
//! * Scheduler: for every (AP, UAV) pair, the two-channel tile-popularity map
//!   of the AP's window users, on the tile grid.

use crate::config::DeploymentConfig;
use crate::deployment::{Deployment, Position};
use crate::scheduling::{popularity_map_of, Schedule};
use crate::video::{DecodeState, N_TILES, TILE_COLS, TILE_ROWS};

// ---------------------------------------------------------------------------
// Observation container
// ---------------------------------------------------------------------------

/// A stack of 2-D grid maps, flattened channel-major (`c`, then row, then
/// column) — exactly the conv-encoder input layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GridObservation {
    pub data: Vec<f64>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Whole-area observation for the centralized association agent.
pub type GlobalObservation = GridObservation;
/// Window observation for one distributed association agent.
pub type LocalObservation = GridObservation;
/// Tile-popularity observation for the scheduler meta-agent.
pub type SchedulerObservation = GridObservation;

impl GridObservation {
    fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { data: vec![0.0; channels * height * width], channels, height, width }
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    fn channel_mut(&mut self, channel: usize) -> &mut [f64] {
        let plane = self.height * self.width;
        &mut self.data[channel * plane..(channel + 1) * plane]
    }
}

// ---------------------------------------------------------------------------
// Grid geometry
// ---------------------------------------------------------------------------

/// Number of cells covering a span at the given resolution.
fn cells_for(span: f64, resolution: f64) -> usize {
    (span / resolution).ceil().max(1.0) as usize
}

/// Cell of a point on a grid anchored at `origin`, covering `side` meters.
/// The interval is closed: points on the far edge land in the last cell.
fn cell_of(
    x: f64,
    y: f64,
    origin_x: f64,
    origin_y: f64,
    side: f64,
    resolution: f64,
    n: usize,
) -> Option<(usize, usize)> {
    let dx = x - origin_x;
    let dy = y - origin_y;
    if dx < 0.0 || dy < 0.0 || dx > side || dy > side {
        return None;
    }
    let col = ((dx / resolution) as usize).min(n - 1);
    let row = ((dy / resolution) as usize).min(n - 1);
    Some((row, col))
}

fn normalize_channel(map: &mut [f64]) {
    let max = map.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in map.iter_mut() {
            *v /= max;
        }
    }
}

/// How many of `scheduled` tiles this user still needs.
fn pending_scheduled(state: &DecodeState, scheduled: &[usize]) -> usize {
    scheduled.iter().filter(|&&t| state.pending(t)).count()
}

// ---------------------------------------------------------------------------
// Shapes (for building networks before any episode exists)
// ---------------------------------------------------------------------------

/// (channels, height, width) of the global observation.
pub fn global_obs_shape(cfg: &DeploymentConfig) -> (usize, usize, usize) {
    let n = cells_for(cfg.area_side, cfg.grid_resolution);
    (3 * cfg.n_uavs, n, n)
}

/// (channels, height, width) of one AP's local observation.
pub fn local_obs_shape(cfg: &DeploymentConfig) -> (usize, usize, usize) {
    let n = cells_for(cfg.window_side, cfg.grid_resolution);
    (3 * cfg.n_uavs, n, n)
}

/// (channels, height, width) of the scheduler observation.
pub fn scheduler_obs_shape(cfg: &DeploymentConfig) -> (usize, usize, usize) {
    (cfg.ap_rows * cfg.ap_cols * cfg.n_uavs * 2, TILE_ROWS, TILE_COLS)
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

/// Build the whole-area observation: per UAV, the binary UAV-position map,
/// the binary AP map, and the requester-density map. A cell of the density
/// map counts, over users inside it, how many of that UAV's currently
/// scheduled tiles each user still needs; the map is normalized by its own
/// maximum (all-zero maps stay zero).
pub fn build_global_observation(
    dep: &Deployment,
    schedule: &Schedule,
    cluster_of: &[usize],
    states: &[DecodeState],
    grid_resolution: f64,
) -> GlobalObservation {
    let n = cells_for(dep.area_side, grid_resolution);
    let n_uavs = dep.uavs.len();
    let mut obs = GridObservation::zeros(3 * n_uavs, n, n);
    let cell = |p: &Position| cell_of(p.x, p.y, 0.0, 0.0, dep.area_side, grid_resolution, n);
    for u in 0..n_uavs {
        let base = 3 * u;
        if let Some((r, c)) = cell(&dep.uavs[u]) {
            obs.channel_mut(base)[r * n + c] = 1.0;
        }
        for ap in &dep.aps {
            if let Some((r, c)) = cell(ap) {
                obs.channel_mut(base + 1)[r * n + c] = 1.0;
            }
        }
        let density = obs.channel_mut(base + 2);
        for (v, st) in states.iter().enumerate() {
            if cluster_of[v] != u {
                continue;
            }
            let want = pending_scheduled(st, &schedule.tiles[u]);
            if want == 0 {
                continue;
            }
            if let Some((r, c)) = cell(&dep.users[v].position) {
                density[r * n + c] += want as f64;
            }
        }
        normalize_channel(density);
    }
    obs
}

/// Build one AP's window observation: the same three per-UAV maps as the
/// global observation, restricted to the AP-centered square window. Only
/// `window_users` (the engine's cached membership) contribute to the density
/// maps, so anything strictly outside the window cannot influence the result.
pub fn build_local_observation(
    dep: &Deployment,
    ap: usize,
    window_users: &[usize],
    schedule: &Schedule,
    cluster_of: &[usize],
    states: &[DecodeState],
    grid_resolution: f64,
) -> LocalObservation {
    let side = dep.window_side;
    let n = cells_for(side, grid_resolution);
    let n_uavs = dep.uavs.len();
    let origin_x = dep.aps[ap].x - side / 2.0;
    let origin_y = dep.aps[ap].y - side / 2.0;
    let cell = |p: &Position| cell_of(p.x, p.y, origin_x, origin_y, side, grid_resolution, n);
    let mut obs = GridObservation::zeros(3 * n_uavs, n, n);
    for u in 0..n_uavs {
        let base = 3 * u;
        if let Some((r, c)) = cell(&dep.uavs[u]) {
            obs.channel_mut(base)[r * n + c] = 1.0;
        }
        for p in &dep.aps {
            if let Some((r, c)) = cell(p) {
                obs.channel_mut(base + 1)[r * n + c] = 1.0;
            }
        }
        let density = obs.channel_mut(base + 2);
        for &v in window_users {
            if cluster_of[v] != u {
                continue;
            }
            let want = pending_scheduled(&states[v], &schedule.tiles[u]);
            if want == 0 {
                continue;
            }
            if let Some((r, c)) = cell(&dep.users[v].position) {
                density[r * n + c] += want as f64;
            }
        }
        normalize_channel(density);
    }
    obs
}

/// Build the scheduler observation: for every AP and every UAV, the
/// two-channel tile-popularity map of the AP's window users, stacked AP-major
/// then UAV-major on the 6×12 tile grid.
pub fn build_scheduler_observation(
    n_uavs: usize,
    window_users: &[Vec<usize>],
    cluster_of: &[usize],
    states: &[DecodeState],
) -> SchedulerObservation {
    let n_aps = window_users.len();
    let mut obs = GridObservation::zeros(n_aps * n_uavs * 2, TILE_ROWS, TILE_COLS);
    for (b, users) in window_users.iter().enumerate() {
        for u in 0..n_uavs {
            let pm = popularity_map_of(u, users, cluster_of, states);
            let base = 2 * (b * n_uavs + u);
            obs.channel_mut(base).copy_from_slice(&pm.first);
            obs.channel_mut(base + 1).copy_from_slice(&pm.retrans);
        }
    }
    debug_assert_eq!(obs.data.len(), n_aps * n_uavs * 2 * N_TILES);
    obs
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deployment::User;
    use crate::video::TileId;

    /// One-UAV deployment with hand-placed users for map oracles.
    fn toy_deployment(user_xy: &[(f64, f64)]) -> Deployment {
        Deployment {
            aps: vec![Position::new(10.0, 10.0, 0.0), Position::new(70.0, 70.0, 0.0)],
            uavs: vec![Position::new(35.0, 5.0, 30.0)],
            users: user_xy
                .iter()
                .map(|&(x, y)| User { position: Position::new(x, y, 0.0), cluster: 0 })
                .collect(),
            area_side: 80.0,
            ap_spacing: 60.0,
            cluster_radius: 20.0,
            window_side: 60.0,
        }
    }

    fn state_with_pending(flats: &[usize]) -> DecodeState {
        let tiles: Vec<TileId> = flats.iter().map(|&f| TileId::from_flat(0, f)).collect();
        DecodeState::new(&tiles)
    }

    #[test]
    fn requester_density_normalizes_to_the_cell_maximum() {
        // Two users in one cell needing 2 and 3 scheduled tiles, one user in
        // another cell needing all 8: 5/8 = 0.625 exactly.
        let dep = toy_deployment(&[(2.0, 2.0), (7.0, 3.0), (45.0, 45.0)]);
        let schedule = Schedule { tiles: vec![(0..8).collect()] };
        let states = vec![
            state_with_pending(&[0, 1]),
            state_with_pending(&[2, 3, 4]),
            state_with_pending(&[0, 1, 2, 3, 4, 5, 6, 7]),
        ];
        let cluster_of = vec![0, 0, 0];
        let obs = build_global_observation(&dep, &schedule, &cluster_of, &states, 10.0);
        assert_eq!((obs.channels, obs.height, obs.width), (3, 8, 8));
        // Density lives in channel 2 of the only UAV.
        assert_eq!(obs.at(2, 0, 0), 0.625);
        assert_eq!(obs.at(2, 4, 4), 1.0);
    }

    #[test]
    fn binary_maps_mark_exactly_the_node_cells() {
        let dep = toy_deployment(&[]);
        let schedule = Schedule { tiles: vec![vec![0]] };
        let obs = build_global_observation(&dep, &schedule, &[], &[], 10.0);
        let uav_ones: f64 = (0..64).map(|i| obs.data[i]).sum();
        assert_eq!(uav_ones, 1.0, "one UAV, one marked cell");
        assert_eq!(obs.at(0, 0, 3), 1.0, "UAV at (35, 5) lives in cell (0, 3)");
        let plane = 64;
        let ap_ones: f64 = obs.data[plane..2 * plane].iter().sum();
        assert_eq!(ap_ones, 2.0, "one marked cell per AP");
        assert_eq!(obs.at(1, 1, 1), 1.0);
        assert_eq!(obs.at(1, 7, 7), 1.0);
        // No users → density all zero.
        assert!(obs.data[2 * plane..3 * plane].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn local_observation_is_ap_centered() {
        let dep = toy_deployment(&[(10.0, 10.0)]);
        let schedule = Schedule { tiles: vec![vec![0, 1]] };
        let states = vec![state_with_pending(&[0, 1])];
        let obs = build_local_observation(&dep, 0, &[0], &schedule, &[0], &states, 10.0);
        assert_eq!((obs.channels, obs.height, obs.width), (3, 6, 6));
        // The AP sits at the exact center of its own window: cell (3, 3).
        assert_eq!(obs.at(1, 3, 3), 1.0);
        // The co-located user needs both scheduled tiles → normalized 1.
        assert_eq!(obs.at(2, 3, 3), 1.0);
        // The other AP at (70, 70) is 60 m away on each axis: outside.
        let ap_plane: f64 = (36..72).map(|i| obs.data[i]).sum();
        assert_eq!(ap_plane, 1.0);
    }

    #[test]
    fn local_observation_ignores_everything_outside_the_window() {
        // Two state sets differing only in a far-away user's decode progress
        // must produce bit-identical local observations.
        let dep = toy_deployment(&[(12.0, 8.0), (75.0, 75.0)]);
        let schedule = Schedule { tiles: vec![vec![0, 1, 2]] };
        let cluster_of = vec![0, 0];
        let near = state_with_pending(&[0, 1, 2]);
        let far_a = state_with_pending(&[0, 1, 2]);
        let mut far_b = state_with_pending(&[0, 1, 2]);
        far_b.update(0, true, 0).unwrap();
        far_b.update(1, true, 0).unwrap();
        let window = vec![0usize]; // only the near user is inside AP 0's window
        let obs_a = build_local_observation(
            &dep, 0, &window, &schedule, &cluster_of,
            &[near.clone(), far_a], 10.0,
        );
        let obs_b = build_local_observation(
            &dep, 0, &window, &schedule, &cluster_of,
            &[near, far_b], 10.0,
        );
        assert_eq!(obs_a, obs_b);
    }

    #[test]
    fn scheduler_observation_stacks_windowed_popularity_maps() {
        let cluster_of = vec![0, 0];
        let states = vec![state_with_pending(&[0, 13]), state_with_pending(&[13])];
        let windows = vec![vec![0usize], vec![1usize]];
        let obs = build_scheduler_observation(1, &windows, &cluster_of, &states);
        assert_eq!((obs.channels, obs.height, obs.width), (2 * 1 * 2, TILE_ROWS, TILE_COLS));
        // AP 0 sees user 0: tiles 0 and 13 pending, chain alive (I frame).
        assert_eq!(obs.at(0, 0, 0), 1.0);
        assert_eq!(obs.at(0, 1, 1), 1.0, "flat 13 = row 1, col 1");
        // AP 1 sees user 1: only tile 13.
        assert_eq!(obs.at(2, 1, 1), 1.0);
        assert_eq!(obs.at(2, 0, 0), 0.0);
        // Retransmission channels empty on an I frame with nothing broken.
        assert!(obs.data.iter().enumerate().all(|(i, &v)| {
            let ch = i / (TILE_ROWS * TILE_COLS);
            ch % 2 == 0 || v == 0.0
        }));
        assert!(obs.data.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn observation_shapes_match_the_config_helpers() {
        let cfg = DeploymentConfig::default();
        assert_eq!(global_obs_shape(&cfg), (12, 8, 8));
        assert_eq!(local_obs_shape(&cfg), (12, 6, 6));
        assert_eq!(scheduler_obs_shape(&cfg), (72, 6, 12));
    }
}
