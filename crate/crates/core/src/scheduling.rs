//! Tile scheduling: which tiles each UAV transmits during the next
//! re-scheduling slot. Provides the popularity-based proportional-fair
//! (P-PF) priority, top-k selection, and the 6×12×2 popularity maps the
//! learned policies observe.

use crate::video::{DecodeState, N_TILES, TILE_COLS};

/// One re-scheduling decision: for each UAV, the ordered tiles to broadcast
/// in its next `k` broadcast slots (one tile per slot, no duplicates).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    /// `tiles[uav][slot]` = flat tile index.
    pub tiles: Vec<Vec<usize>>,
}

impl Schedule {
    pub fn tile_for(&self, uav: usize, slot: usize) -> usize {
        self.tiles[uav][slot]
    }

    pub fn n_uavs(&self) -> usize {
        self.tiles.len()
    }
}

// ---------------------------------------------------------------------------
// P-PF priority
// ---------------------------------------------------------------------------

/// Per-(UAV, tile) service history for the proportional-fair denominator:
/// how many past re-scheduling slots of this GOP ended with the tile's
/// decode-dependency chain satisfied for at least one requesting user.
/// I-frame slots contribute nothing (an I tile has no dependency).
#[derive(Debug, Clone)]
pub struct PpfHistory {
    counts: Vec<[u32; N_TILES]>,
}

impl PpfHistory {
    pub fn new(n_uavs: usize) -> Self {
        Self { counts: vec![[0; N_TILES]; n_uavs] }
    }

    /// Clear at a GOP boundary.
    pub fn reset(&mut self) {
        for per_uav in &mut self.counts {
            per_uav.fill(0);
        }
    }

    pub fn count(&self, uav: usize, flat: usize) -> u32 {
        self.counts[uav][flat]
    }

    /// Record the end of one re-scheduling slot. `cluster_of[v]` is the UAV
    /// user v watches; `states[v]` is that user's decode state.
    pub fn record_slot_end(&mut self, cluster_of: &[usize], states: &[DecodeState]) {
        for (uav, per_uav) in self.counts.iter_mut().enumerate() {
            for flat in 0..N_TILES {
                let satisfied = states.iter().zip(cluster_of).any(|(st, &c)| {
                    c == uav && st.requested(flat) && st.frame() > 0 && st.chain_alive(flat)
                });
                if satisfied {
                    per_uav[flat] += 1;
                }
            }
        }
    }
}

/// P-PF priority of one tile of one UAV:
/// pending requesters / (1 + satisfied-slot history). The +1 is the
/// cold-start offset that keeps the GOP's first slot well defined.
pub fn ppf_priority(
    uav: usize,
    flat: usize,
    cluster_of: &[usize],
    states: &[DecodeState],
    history: &PpfHistory,
) -> f64 {
    let pending = states
        .iter()
        .zip(cluster_of)
        .filter(|(st, &c)| c == uav && st.pending(flat))
        .count();
    pending as f64 / (1.0 + history.count(uav, flat) as f64)
}

/// P-PF priorities for every tile of every UAV.
pub fn all_priorities(
    n_uavs: usize,
    cluster_of: &[usize],
    states: &[DecodeState],
    history: &PpfHistory,
) -> Vec<[f64; N_TILES]> {
    let mut out = vec![[0.0; N_TILES]; n_uavs];
    for (uav, per_uav) in out.iter_mut().enumerate() {
        for (flat, slot) in per_uav.iter_mut().enumerate() {
            *slot = ppf_priority(uav, flat, cluster_of, states, history);
        }
    }
    out
}

/// Pick each UAV's k highest-priority tiles, ties broken by (row, col)
/// lexicographic order — which is ascending flat index on a row-major grid.
/// Ranking the whole grid means zero-priority tiles pad the tail in the same
/// deterministic order when fewer than k tiles have positive priority.
pub fn select_top_tiles(priorities: &[[f64; N_TILES]], k: usize) -> Schedule {
    debug_assert!(k >= 1 && k <= N_TILES);
    let mut tiles = Vec::with_capacity(priorities.len());
    for per_uav in priorities {
        let mut order: Vec<usize> = (0..N_TILES).collect();
        order.sort_by(|&a, &b| {
            per_uav[b].partial_cmp(&per_uav[a]).expect("priorities are finite").then(a.cmp(&b))
        });
        order.truncate(k);
        tiles.push(order);
    }
    Schedule { tiles }
}

// ---------------------------------------------------------------------------
// Popularity maps
// ---------------------------------------------------------------------------

/// The 6×12×2 per-UAV tile-popularity observation. Channel `first` counts
/// pending requests whose dependency chain is intact (a transmission now can
/// decode); channel `retrans` counts pending requests whose chain broke.
/// Each channel is normalized to (0, 1] by its own maximum; all-zero
/// channels stay zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityMap {
    pub first: [f64; N_TILES],
    pub retrans: [f64; N_TILES],
}

impl PopularityMap {
    pub fn at(&self, channel: usize, row: usize, col: usize) -> f64 {
        let flat = row * TILE_COLS + col;
        match channel {
            0 => self.first[flat],
            _ => self.retrans[flat],
        }
    }
}

/// Build one UAV's popularity map from its users' request/decode state.
pub fn popularity_map(uav: usize, cluster_of: &[usize], states: &[DecodeState]) -> PopularityMap {
    let all: Vec<usize> = (0..states.len()).collect();
    popularity_map_of(uav, &all, cluster_of, states)
}

/// Popularity map restricted to a user subset (e.g. one AP's observation
/// window). Channels are normalized by their own maximum within the subset.
pub fn popularity_map_of(
    uav: usize,
    users: &[usize],
    cluster_of: &[usize],
    states: &[DecodeState],
) -> PopularityMap {
    let mut first = [0.0; N_TILES];
    let mut retrans = [0.0; N_TILES];
    for &v in users {
        if cluster_of[v] != uav {
            continue;
        }
        let st = &states[v];
        for flat in 0..N_TILES {
            if st.pending(flat) {
                if st.chain_alive(flat) {
                    first[flat] += 1.0;
                } else {
                    retrans[flat] += 1.0;
                }
            }
        }
    }
    normalize_by_max(&mut first);
    normalize_by_max(&mut retrans);
    PopularityMap { first, retrans }
}

fn normalize_by_max(map: &mut [f64; N_TILES]) {
    let max = map.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in map.iter_mut() {
            *v /= max;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::TileId;
    use crate::rng::rng_for;
    use crate::video::{fov_to_tiles, generate_viewpoint};

    /// A user requesting exactly the given flat tiles (arbitrary set sizes
    /// are fine for scheduling math; only V-PSNR assumes 35).
    fn user_requesting(flats: &[usize]) -> DecodeState {
        let tiles: Vec<TileId> = flats.iter().map(|&f| TileId::from_flat(0, f)).collect();
        DecodeState::new(&tiles)
    }

    #[test]
    fn cold_start_priority_is_the_pending_count() {
        let t = 17;
        let states: Vec<DecodeState> = (0..3).map(|_| user_requesting(&[t])).collect();
        let cluster = vec![0, 0, 0];
        let history = PpfHistory::new(1);
        assert_eq!(ppf_priority(0, t, &cluster, &states, &history), 3.0);
        // A tile nobody requests scores zero.
        assert_eq!(ppf_priority(0, t + 1, &cluster, &states, &history), 0.0);
    }

    #[test]
    fn history_divides_priority() {
        // Four users request tile t, all pending at frame 1 with intact
        // chains; four recorded slots give denominator 5.
        let t = 5;
        let mut states: Vec<DecodeState> = (0..4).map(|_| user_requesting(&[t])).collect();
        let cluster = vec![0, 0, 0, 0];
        for st in &mut states {
            st.update(t, true, 0).unwrap();
            st.advance_frame();
        }
        let mut history = PpfHistory::new(1);
        for _ in 0..4 {
            history.record_slot_end(&cluster, &states);
        }
        assert_eq!(history.count(0, t), 4);
        let p = ppf_priority(0, t, &cluster, &states, &history);
        assert!((p - 0.8).abs() < 1e-12, "{p}");
    }

    #[test]
    fn decoded_tiles_have_zero_priority() {
        let t = 30;
        let mut st = user_requesting(&[t]);
        st.update(t, true, 0).unwrap();
        let history = PpfHistory::new(1);
        assert_eq!(ppf_priority(0, t, &[0], &[st], &history), 0.0);
    }

    #[test]
    fn i_frame_slots_leave_history_untouched() {
        let t = 9;
        let states = vec![user_requesting(&[t])];
        let cluster = vec![0];
        let mut history = PpfHistory::new(1);
        for _ in 0..28 {
            history.record_slot_end(&cluster, &states);
        }
        assert_eq!(history.count(0, t), 0, "I frame has no dependency to satisfy");
    }

    #[test]
    fn history_needs_a_live_chain_and_resets() {
        let t = 9;
        let mut alive = user_requesting(&[t]);
        alive.update(t, true, 0).unwrap();
        alive.advance_frame();
        let mut broken = user_requesting(&[t]);
        broken.advance_frame();
        let cluster = vec![0, 1];
        let mut history = PpfHistory::new(2);
        let states = vec![alive, broken];
        history.record_slot_end(&cluster, &states);
        assert_eq!(history.count(0, t), 1, "satisfied chain counts");
        assert_eq!(history.count(1, t), 0, "broken chain does not");
        history.reset();
        assert_eq!(history.count(0, t), 0);
    }

    #[test]
    fn history_is_existential_over_the_group() {
        // Two users of the same UAV, both with live chains: one slot still
        // adds exactly one to the history (slots are counted, not users).
        let t = 40;
        let mut states: Vec<DecodeState> = (0..2).map(|_| user_requesting(&[t])).collect();
        for st in &mut states {
            st.update(t, true, 0).unwrap();
            st.advance_frame();
        }
        let cluster = vec![0, 0];
        let mut history = PpfHistory::new(1);
        history.record_slot_end(&cluster, &states);
        assert_eq!(history.count(0, t), 1);
    }

    #[test]
    fn top_k_selects_highest_and_breaks_ties_lexicographically() {
        let mut pri = [[0.0; N_TILES]; 1];
        pri[0][10] = 3.0;
        pri[0][4] = 5.0;
        pri[0][63] = 4.0;
        let s = select_top_tiles(&pri, 3);
        assert_eq!(s.tiles[0], vec![4, 63, 10]);
        // All equal → first k flat indices (row-major = (row, col) lex).
        let flat_pri = [[1.0; N_TILES]; 1];
        let s = select_top_tiles(&flat_pri, 5);
        assert_eq!(s.tiles[0], vec![0, 1, 2, 3, 4]);
        // k = tile count → everything, still no duplicates.
        let s = select_top_tiles(&flat_pri, N_TILES);
        let mut seen = s.tiles[0].clone();
        seen.sort_unstable();
        assert_eq!(seen, (0..N_TILES).collect::<Vec<_>>());
    }

    #[test]
    fn top_k_pads_deterministically_when_positive_priorities_run_out() {
        let mut pri = [[0.0; N_TILES]; 2];
        pri[0][50] = 1.0;
        let s = select_top_tiles(&pri, 4);
        assert_eq!(s.tiles[0], vec![50, 0, 1, 2], "zero-priority tiles pad in lex order");
        assert_eq!(s.tiles[1], vec![0, 1, 2, 3]);
        for per_uav in &s.tiles {
            assert_eq!(per_uav.len(), 4);
        }
    }

    #[test]
    fn scheduling_is_deterministic() {
        let mut rng = rng_for(11, "sched", 0);
        let vps: Vec<_> = (0..6).map(|_| generate_viewpoint(&mut rng, 45.0)).collect();
        let states: Vec<DecodeState> =
            vps.iter().map(|vp| DecodeState::new(&fov_to_tiles(vp, 0))).collect();
        let cluster = vec![0, 0, 0, 1, 1, 1];
        let history = PpfHistory::new(2);
        let p1 = all_priorities(2, &cluster, &states, &history);
        let p2 = all_priorities(2, &cluster, &states, &history);
        assert_eq!(p1, p2);
        assert_eq!(select_top_tiles(&p1, 10), select_top_tiles(&p2, 10));
    }

    #[test]
    fn empty_popularity_map_is_all_zero() {
        let states: Vec<DecodeState> = vec![];
        let cluster: Vec<usize> = vec![];
        let map = popularity_map(0, &cluster, &states);
        assert!(map.first.iter().all(|&v| v == 0.0));
        assert!(map.retrans.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unanimous_tile_normalizes_to_one() {
        let t = 25;
        let states: Vec<DecodeState> = (0..7).map(|_| user_requesting(&[t])).collect();
        let cluster = vec![0; 7];
        let map = popularity_map(0, &cluster, &states);
        assert_eq!(map.first[t], 1.0);
        assert_eq!(map.first.iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn per_channel_max_normalization_matches_reference_ratios() {
        // Cells with counts 8 (max), 3, and 2 → 1.0, 0.375, 0.25.
        let mut states = Vec::new();
        let mut cluster = Vec::new();
        for _ in 0..8 {
            states.push(user_requesting(&[0]));
            cluster.push(0);
        }
        for _ in 0..3 {
            states.push(user_requesting(&[1]));
            cluster.push(0);
        }
        for _ in 0..2 {
            states.push(user_requesting(&[2]));
            cluster.push(0);
        }
        let map = popularity_map(0, &cluster, &states);
        assert_eq!(map.first[0], 1.0);
        assert!((map.first[1] - 0.375).abs() < 1e-12);
        assert!((map.first[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn broken_chains_land_in_the_retransmission_channel() {
        let t = 33;
        // User decodes t at frame 0, misses frame 1; at frame 2 the chain is
        // broken and the pending request moves to channel 1.
        let mut st = user_requesting(&[t]);
        st.update(t, true, 0).unwrap();
        st.advance_frame();
        st.advance_frame(); // frame 1 missed entirely
        let map = popularity_map(0, &[0], &[st.clone()]);
        assert_eq!(map.first[t], 0.0);
        assert_eq!(map.retrans[t], 1.0);
        // At frame 0 everything pending is a first transmission.
        let fresh = user_requesting(&[t]);
        let map = popularity_map(0, &[0], &[fresh]);
        assert_eq!(map.first[t], 1.0);
        assert_eq!(map.retrans[t], 0.0);
    }

    #[test]
    fn popularity_ignores_other_uavs_users() {
        let t = 12;
        let states = vec![user_requesting(&[t]), user_requesting(&[t])];
        let cluster = vec![0, 1];
        let map0 = popularity_map(0, &cluster, &states);
        let map1 = popularity_map(1, &cluster, &states);
        assert_eq!(map0.first[t], 1.0);
        assert_eq!(map1.first[t], 1.0);
        // Each map saw exactly one user.
        let total0: f64 = map0.first.iter().sum();
        assert_eq!(total0, 1.0);
    }
}
