//! Static episode geometry: grid APs, uniformly placed UAVs, and
//! Poisson-cluster-process VR users gathered around the UAV ground tracks.
//!
//! Everything here is generated once per episode and immutable afterwards.
//! Cluster centers default to the UAV (x, y) positions because the users of
//! one cluster request video from the same UAV; the daughter distribution is
//! uniform in a disk of the cluster radius, clipped to the serving area.

use crate::config::DeploymentConfig;
use crate::rng::CfmbRng;
use rand::Rng;
use thiserror::Error;

/// Errors from deployment construction.
#[derive(Debug, Error, PartialEq)]
pub enum DeployError {
    #[error("AP grid ({rows}x{cols} at {spacing} m) does not fit the {area} m serving area")]
    GridTooLarge {
        rows: usize,
        cols: usize,
        spacing: f64,
        area: f64,
    },
    #[error("need at least one UAV")]
    NoUavs,
    #[error("need at least one cluster center")]
    NoClusters,
    #[error("cluster radius must be positive")]
    BadRadius,
}

/// A 3D point in meters. APs and users sit at z = 0; UAVs hover at the
/// configured altitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    /// Full 3D distance.
    pub fn distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    /// Ground-plane (x, y) distance.
    pub fn planar_distance(&self, other: &Position) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// One VR user: position plus the index of the UAV cluster it belongs to
/// (and therefore requests tiles from).
#[derive(Debug, Clone, Copy)]
pub struct User {
    pub position: Position,
    pub cluster: usize,
}

/// The full static geometry of one episode.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub aps: Vec<Position>,
    pub uavs: Vec<Position>,
    pub users: Vec<User>,
    pub area_side: f64,
    pub ap_spacing: f64,
    pub cluster_radius: f64,
    /// Side of the square observation window around each AP.
    pub window_side: f64,
}

// ---------------------------------------------------------------------------
// Placement primitives
// ---------------------------------------------------------------------------

/// Places `rows` × `cols` APs on a regular grid with exact `spacing`,
/// centered in the square area, at z = 0. Row-major order.
pub fn place_aps(
    rows: usize,
    cols: usize,
    spacing: f64,
    area_side: f64,
) -> Result<Vec<Position>, DeployError> {
    let width = (cols.saturating_sub(1)) as f64 * spacing;
    let height = (rows.saturating_sub(1)) as f64 * spacing;
    if width > area_side || height > area_side {
        return Err(DeployError::GridTooLarge {
            rows,
            cols,
            spacing,
            area: area_side,
        });
    }
    let x0 = (area_side - width) / 2.0;
    let y0 = (area_side - height) / 2.0;
    let mut aps = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            aps.push(Position::new(x0 + c as f64 * spacing, y0 + r as f64 * spacing, 0.0));
        }
    }
    Ok(aps)
}

/// Places `count` UAVs uniformly i.i.d. in the area at the given altitude.
pub fn place_uavs(
    count: usize,
    area_side: f64,
    height: f64,
    rng: &mut CfmbRng,
) -> Result<Vec<Position>, DeployError> {
    if count == 0 {
        return Err(DeployError::NoUavs);
    }
    let mut uavs = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.gen::<f64>() * area_side;
        let y = rng.gen::<f64>() * area_side;
        uavs.push(Position::new(x, y, height));
    }
    Ok(uavs)
}

/// Scatters `n_users` across clusters: each user picks a cluster uniformly at
/// random, then lands uniformly in the disk of `radius` around the center,
/// clipped to the serving area (clipping can only move a point closer to its
/// center, never farther).
pub fn place_users_pcp(
    cluster_centers: &[Position],
    radius: f64,
    n_users: usize,
    area_side: f64,
    rng: &mut CfmbRng,
) -> Result<Vec<User>, DeployError> {
    if cluster_centers.is_empty() {
        return Err(DeployError::NoClusters);
    }
    if radius <= 0.0 {
        return Err(DeployError::BadRadius);
    }
    let mut users = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let cluster = rng.gen_range(0..cluster_centers.len());
        let center = cluster_centers[cluster];
        // Uniform in disk: radius scales with sqrt(u).
        let r = radius * rng.gen::<f64>().sqrt();
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let x = (center.x + r * phi.cos()).clamp(0.0, area_side);
        let y = (center.y + r * phi.sin()).clamp(0.0, area_side);
        users.push(User {
            position: Position::new(x, y, 0.0),
            cluster,
        });
    }
    Ok(users)
}

impl Deployment {
    /// Generates a full deployment from the config and one random stream:
    /// grid APs, uniform UAVs, then PCP users around the UAV ground tracks
    /// (or the configured explicit centers).
    pub fn generate(cfg: &DeploymentConfig, rng: &mut CfmbRng) -> Result<Self, DeployError> {
        let aps = place_aps(cfg.ap_rows, cfg.ap_cols, cfg.ap_spacing, cfg.area_side)?;
        let uavs = place_uavs(cfg.n_uavs, cfg.area_side, cfg.uav_height, rng)?;
        let centers: Vec<Position> = match &cfg.cluster_centers {
            Some(list) => list.iter().map(|c| Position::new(c[0], c[1], 0.0)).collect(),
            None => uavs.iter().map(|u| Position::new(u.x, u.y, 0.0)).collect(),
        };
        let users = place_users_pcp(&centers, cfg.cluster_radius, cfg.n_users, cfg.area_side, rng)?;
        Ok(Self {
            aps,
            uavs,
            users,
            area_side: cfg.area_side,
            ap_spacing: cfg.ap_spacing,
            cluster_radius: cfg.cluster_radius,
            window_side: cfg.window_side,
        })
    }

    /// True when the user sits inside the square observation window centered
    /// on the given AP.
    pub fn user_in_window(&self, ap: usize, user: usize) -> bool {
        let half = self.window_side / 2.0;
        let a = self.aps[ap];
        let u = self.users[user].position;
        (u.x - a.x).abs() <= half && (u.y - a.y).abs() <= half
    }

    /// Indices of the users inside an AP's observation window.
    pub fn window_users(&self, ap: usize) -> Vec<usize> {
        (0..self.users.len())
            .filter(|&v| self.user_in_window(ap, v))
            .collect()
    }

    /// Human-readable record dump (one node per line: role, id, x, y, z,
    /// cluster) for replaying a layout offline.
    pub fn to_record_lines(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.aps.iter().enumerate() {
            out.push_str(&format!("ap {} {} {} {} -\n", i, p.x, p.y, p.z));
        }
        for (i, p) in self.uavs.iter().enumerate() {
            out.push_str(&format!("uav {} {} {} {} -\n", i, p.x, p.y, p.z));
        }
        for (i, u) in self.users.iter().enumerate() {
            let p = u.position;
            out.push_str(&format!("user {} {} {} {} {}\n", i, p.x, p.y, p.z, u.cluster));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn reference_grid_lands_on_expected_coordinates() {
        let aps = place_aps(3, 3, 30.0, 80.0).unwrap();
        assert_eq!(aps.len(), 9);
        let expect = [10.0, 40.0, 70.0];
        for r in 0..3 {
            for c in 0..3 {
                let p = aps[r * 3 + c];
                assert!((p.x - expect[c]).abs() < 1e-12);
                assert!((p.y - expect[r]).abs() < 1e-12);
                assert_eq!(p.z, 0.0);
            }
        }
    }

    #[test]
    fn single_ap_sits_at_area_center() {
        let aps = place_aps(1, 1, 123.0, 80.0).unwrap();
        assert_eq!(aps.len(), 1);
        assert!((aps[0].x - 40.0).abs() < 1e-12);
        assert!((aps[0].y - 40.0).abs() < 1e-12);
    }

    #[test]
    fn oversized_grid_is_rejected() {
        assert!(matches!(
            place_aps(2, 2, 100.0, 80.0),
            Err(DeployError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn grid_nearest_neighbor_distance_equals_spacing() {
        let aps = place_aps(3, 3, 30.0, 80.0).unwrap();
        for (i, a) in aps.iter().enumerate() {
            let nn = aps
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.distance(b))
                .fold(f64::INFINITY, f64::min);
            assert!((nn - 30.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uavs_hover_at_configured_height() {
        let mut rng = rng_for(1, "deploy", 0);
        let uavs = place_uavs(4, 80.0, 30.0, &mut rng).unwrap();
        assert_eq!(uavs.len(), 4);
        for u in &uavs {
            assert_eq!(u.z, 30.0);
            assert!((0.0..=80.0).contains(&u.x));
            assert!((0.0..=80.0).contains(&u.y));
        }
    }

    #[test]
    fn zero_uavs_is_an_error() {
        let mut rng = rng_for(1, "deploy", 0);
        assert_eq!(place_uavs(0, 80.0, 30.0, &mut rng), Err(DeployError::NoUavs));
    }

    #[test]
    fn users_stay_within_cluster_radius() {
        let mut rng = rng_for(2, "deploy", 0);
        let centers = place_uavs(4, 80.0, 30.0, &mut rng)
            .unwrap()
            .iter()
            .map(|u| Position::new(u.x, u.y, 0.0))
            .collect::<Vec<_>>();
        let users = place_users_pcp(&centers, 20.0, 120, 80.0, &mut rng).unwrap();
        assert_eq!(users.len(), 120);
        for u in &users {
            let d = u.position.planar_distance(&centers[u.cluster]);
            assert!(d <= 20.0 + 1e-9, "user {d} m from its center");
            assert!(u.cluster < 4);
            assert_eq!(u.position.z, 0.0);
        }
    }

    #[test]
    fn degenerate_radius_collapses_to_center() {
        let mut rng = rng_for(3, "deploy", 0);
        let centers = [Position::new(40.0, 40.0, 0.0)];
        let users = place_users_pcp(&centers, 1e-12, 50, 80.0, &mut rng).unwrap();
        for u in &users {
            assert!(u.position.planar_distance(&centers[0]) < 1e-9);
        }
    }

    #[test]
    fn same_seed_reproduces_layout_bit_exactly() {
        let cfg = DeploymentConfig::default();
        let d1 = Deployment::generate(&cfg, &mut rng_for(9, "deploy", 4)).unwrap();
        let d2 = Deployment::generate(&cfg, &mut rng_for(9, "deploy", 4)).unwrap();
        assert_eq!(d1.uavs.len(), d2.uavs.len());
        for (a, b) in d1.uavs.iter().zip(&d2.uavs) {
            assert_eq!(a.x.to_bits(), b.x.to_bits());
            assert_eq!(a.y.to_bits(), b.y.to_bits());
        }
        for (a, b) in d1.users.iter().zip(&d2.users) {
            assert_eq!(a.position.x.to_bits(), b.position.x.to_bits());
            assert_eq!(a.cluster, b.cluster);
        }
    }

    #[test]
    fn record_dump_lists_every_node() {
        let cfg = DeploymentConfig::default();
        let d = Deployment::generate(&cfg, &mut rng_for(5, "deploy", 0)).unwrap();
        let text = d.to_record_lines();
        assert_eq!(text.lines().count(), 9 + 4 + 120);
        assert!(text.lines().next().unwrap().starts_with("ap 0 "));
    }
}
