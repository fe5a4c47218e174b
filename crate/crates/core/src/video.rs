//! Tiled 360° video model: the 6×12 tile grid, field-of-view request
//! generation, GOP I/P decode-dependency tracking, payload sizing, and the
//! V-PSNR quality metric.
//!
//! Each UAV camera produces a 6×12 grid of 30°×30° tiles. A user's headset
//! shows a 150°(V) × 210°(H) field of view, which maps to a 5×7 tile window:
//! columns wrap modulo 12 around the equator, rows clamp-shift at the poles
//! so the request always covers exactly 35 tiles. Frames form IPPP... groups
//! of pictures; a P tile decodes only if the same tile decoded in the
//! previous frame, so one miss kills that tile's chain for the rest of the
//! GOP.

use crate::config::{
    ExperimentConfig, PayloadMode, TimeConfig, VideoConfig, REFERENCE_SLOT_SECONDS,
};
use rand::Rng;
use thiserror::Error;

/// Tile grid height (polar direction): 180° / 30°.
pub const TILE_ROWS: usize = 6;
/// Tile grid width (azimuthal direction): 360° / 30°.
pub const TILE_COLS: usize = 12;
/// Tiles per UAV camera.
pub const N_TILES: usize = TILE_ROWS * TILE_COLS;
/// Vertical extent of the field of view in tiles (150° / 30°).
pub const FOV_ROWS: usize = 5;
/// Horizontal extent of the field of view in tiles (210° / 30°).
pub const FOV_COLS: usize = 7;
/// Tiles in every request set.
pub const FOV_TILES: usize = FOV_ROWS * FOV_COLS;
/// Angular tile size in degrees (both axes).
pub const TILE_DEG: f64 = 30.0;

/// Errors from request/decode bookkeeping.
#[derive(Debug, Error, PartialEq)]
pub enum VideoError {
    #[error("tile {0} is not in the user's request set")]
    TileNotRequested(usize),
    #[error("expected {expected} per-frame values, got {got}")]
    WrongFrameCount { expected: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Tiles and viewpoints
// ---------------------------------------------------------------------------

/// One tile of one UAV's camera sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TileId {
    /// Index of the UAV producing this tile.
    pub uav: usize,
    /// Polar row, 0 (top) .. 5 (bottom).
    pub row: usize,
    /// Azimuthal column, 0 .. 11.
    pub col: usize,
}

impl TileId {
    pub fn new(uav: usize, row: usize, col: usize) -> Self {
        debug_assert!(row < TILE_ROWS && col < TILE_COLS);
        Self { uav, row, col }
    }

    /// Position within the per-UAV 72-tile grid, row-major.
    pub fn flat(&self) -> usize {
        self.row * TILE_COLS + self.col
    }

    /// Inverse of `flat` for a given UAV.
    pub fn from_flat(uav: usize, flat: usize) -> Self {
        debug_assert!(flat < N_TILES);
        Self { uav, row: flat / TILE_COLS, col: flat % TILE_COLS }
    }
}

/// A gaze direction on the viewing sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewpoint {
    /// Azimuth in degrees, [0, 360).
    pub yaw_deg: f64,
    /// Elevation in degrees, positive above the equator.
    pub pitch_deg: f64,
}

/// Draw a viewpoint: yaw uniform on [0, 360), pitch uniform on
/// [−pitch_band, +pitch_band]. Yaw is drawn first.
pub fn generate_viewpoint<R: Rng>(rng: &mut R, pitch_band_deg: f64) -> Viewpoint {
    let yaw_deg = rng.gen::<f64>() * 360.0;
    let pitch_deg = (rng.gen::<f64>() * 2.0 - 1.0) * pitch_band_deg;
    Viewpoint { yaw_deg, pitch_deg }
}

/// Map a viewpoint to its 35-tile request window on one UAV's grid.
///
/// The column window is the 7 columns {c−2, …, c+4} mod 12 where c is the
/// column containing the yaw; the row window is 5 consecutive rows whose
/// start is the gaze row shifted up by 2 and clamped so the window stays on
/// the grid. Tiles come out in row-major window order.
pub fn fov_to_tiles(vp: &Viewpoint, uav: usize) -> Vec<TileId> {
    let c = ((vp.yaw_deg / TILE_DEG).floor() as isize).rem_euclid(TILE_COLS as isize) as usize;
    let r_raw = ((90.0 - vp.pitch_deg) / TILE_DEG).floor() as isize;
    let r = r_raw.clamp(0, TILE_ROWS as isize - 1) as usize;
    let start = (r as isize - 2).clamp(0, (TILE_ROWS - FOV_ROWS) as isize) as usize;
    let mut tiles = Vec::with_capacity(FOV_TILES);
    for row in start..start + FOV_ROWS {
        for j in 0..FOV_COLS {
            let col = (c + TILE_COLS - 2 + j) % TILE_COLS;
            tiles.push(TileId::new(uav, row, col));
        }
    }
    tiles
}

/// The request window as a flat 72-entry mask (UAV-agnostic).
pub fn fov_mask(vp: &Viewpoint) -> [bool; N_TILES] {
    let mut mask = [false; N_TILES];
    for tile in fov_to_tiles(vp, 0) {
        mask[tile.flat()] = true;
    }
    mask
}

// ---------------------------------------------------------------------------
// Frames and payloads
// ---------------------------------------------------------------------------

/// Coding type of a frame inside a GOP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FrameKind {
    /// Intra-coded: decodable on its own.
    I,
    /// Predicted: needs the same tile decoded in the previous frame.
    P,
}

/// The GOP is I followed by P frames (IPPP…).
pub fn frame_kind(frame_in_gop: usize) -> FrameKind {
    if frame_in_gop == 0 {
        FrameKind::I
    } else {
        FrameKind::P
    }
}

/// Tile sizing parameters (the video-side half of the link budget).
#[derive(Debug, Clone)]
pub struct PayloadModel {
    pub pixels_per_degree: f64,
    pub bits_per_pixel: f64,
    pub compression_rate: f64,
    pub p_over_i_ratio: f64,
}

impl PayloadModel {
    pub fn from_config(cfg: &VideoConfig) -> Self {
        Self {
            pixels_per_degree: cfg.pixels_per_degree,
            bits_per_pixel: cfg.bits_per_pixel,
            compression_rate: cfg.compression_rate,
            p_over_i_ratio: cfg.p_over_i_ratio,
        }
    }
}

/// Coded size of one tile: raw bits (30·ppd)²·bpp divided by the compression
/// rate, scaled by the P/I ratio for P tiles.
pub fn tile_payload_bits(kind: FrameKind, model: &PayloadModel) -> f64 {
    let side_px = TILE_DEG * model.pixels_per_degree;
    let raw = side_px * side_px * model.bits_per_pixel;
    let i_bits = raw / model.compression_rate;
    match kind {
        FrameKind::I => i_bits,
        FrameKind::P => i_bits * model.p_over_i_ratio,
    }
}

/// Resolved I/P payload sizes in bits under the configured sizing mode.
#[derive(Debug, Clone, Copy)]
pub struct PayloadTable {
    pub i_bits: f64,
    pub p_bits: f64,
}

impl PayloadTable {
    /// Resolve payload sizes. `Real` uses the codec arithmetic; `Calibrated`
    /// sizes the I tile so it exactly fits one reference broadcast slot at
    /// the calibration SINR (keeping success/failure structure while the
    /// literal codec numbers overwhelm the link); `Fixed` is explicit.
    /// The P/I ratio applies in every mode.
    pub fn from_config(video: &VideoConfig, time: &TimeConfig, dl_bandwidth: f64) -> Self {
        let model = PayloadModel::from_config(video);
        let i_bits = match time.payload.mode {
            PayloadMode::Real => tile_payload_bits(FrameKind::I, &model),
            PayloadMode::Calibrated => {
                let snr = 10f64.powf(time.payload.calibration_snr_db / 10.0);
                REFERENCE_SLOT_SECONDS * dl_bandwidth * (1.0 + snr).log2()
            }
            PayloadMode::Fixed => time.payload.fixed_bits,
        };
        Self { i_bits, p_bits: i_bits * video.p_over_i_ratio }
    }

    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        Self::from_config(&cfg.video, &cfg.time, cfg.channel.bandwidth_dl_hz)
    }

    pub fn bits(&self, kind: FrameKind) -> f64 {
        match kind {
            FrameKind::I => self.i_bits,
            FrameKind::P => self.p_bits,
        }
    }
}

// ---------------------------------------------------------------------------
// Decode-dependency state
// ---------------------------------------------------------------------------

/// Per-user decode bookkeeping for one GOP.
///
/// `deliver` marks a tile decoded in the current frame when the dependency
/// rule allows it; `advance_frame` freezes the frame and moves on. V-PSNR is
/// always evaluated against the tiles decoded in the *current* frame.
#[derive(Debug, Clone)]
pub struct DecodeState {
    /// Request mask over the 72-tile grid (exactly 35 set).
    requested: [bool; N_TILES],
    /// Last frame index in which each tile decoded; -1 = never this GOP.
    last_decoded: [i32; N_TILES],
    /// Tiles decoded within the current frame.
    decoded_now: [bool; N_TILES],
    /// Requested tiles decoded within the current frame.
    decoded_count: usize,
    /// Current frame index within the GOP.
    frame: usize,
}

impl DecodeState {
    pub fn new(request: &[TileId]) -> Self {
        let mut requested = [false; N_TILES];
        for t in request {
            requested[t.flat()] = true;
        }
        Self {
            requested,
            last_decoded: [-1; N_TILES],
            decoded_now: [false; N_TILES],
            decoded_count: 0,
            frame: 0,
        }
    }

    pub fn frame(&self) -> usize {
        self.frame
    }

    pub fn requested(&self, flat: usize) -> bool {
        self.requested[flat]
    }

    pub fn decoded_now(&self, flat: usize) -> bool {
        self.decoded_now[flat]
    }

    /// Number of requested tiles decoded in the current frame.
    pub fn decoded_count(&self) -> usize {
        self.decoded_count
    }

    /// Whether the tile's dependency chain permits decoding in the current
    /// frame: I frames always do, P frames require a decode at frame−1.
    pub fn chain_alive(&self, flat: usize) -> bool {
        self.frame == 0 || self.last_decoded[flat] == self.frame as i32 - 1
    }

    /// A requested tile still missing from the current frame.
    pub fn pending(&self, flat: usize) -> bool {
        self.requested[flat] && !self.decoded_now[flat]
    }

    /// Record a transmission outcome for a tile in the current frame.
    /// Returns whether the tile is (now) decoded in this frame.
    pub fn update(&mut self, flat: usize, received: bool, frame_idx: usize) -> Result<bool, VideoError> {
        debug_assert_eq!(frame_idx, self.frame, "decode updates must follow the frame clock");
        if !self.requested[flat] {
            return Err(VideoError::TileNotRequested(flat));
        }
        if self.decoded_now[flat] {
            return Ok(true);
        }
        if received && self.chain_alive(flat) {
            self.decoded_now[flat] = true;
            self.decoded_count += 1;
            return Ok(true);
        }
        Ok(false)
    }

    /// Close the current frame: successful decodes become the dependency set
    /// for the next frame.
    pub fn advance_frame(&mut self) {
        let frame = self.frame as i32;
        for flat in 0..N_TILES {
            if self.decoded_now[flat] {
                self.last_decoded[flat] = frame;
            }
            self.decoded_now[flat] = false;
        }
        self.decoded_count = 0;
        self.frame += 1;
    }

    /// V-PSNR of the current frame so far.
    pub fn vpsnr_now(&self) -> f64 {
        vpsnr(FOV_TILES, self.decoded_count)
    }
}

// ---------------------------------------------------------------------------
// Quality metric
// ---------------------------------------------------------------------------

/// V-PSNR in dB for `decoded` of `requested` tiles:
/// 10·log10(n / max(n − d, 1/n)). The floor at 1/n caps the full-decode
/// value at 20·log10(n) instead of dividing by zero.
pub fn vpsnr(requested: usize, decoded: usize) -> f64 {
    debug_assert!(requested >= 1 && decoded <= requested);
    let n = requested as f64;
    let miss = (n - decoded as f64).max(1.0 / n);
    10.0 * (n / miss).log10()
}

/// The cap: V-PSNR with every requested tile decoded.
pub fn vpsnr_cap() -> f64 {
    20.0 * (FOV_TILES as f64).log10()
}

/// Per-slot V-PSNR improvement (the reward signal's building block).
pub fn vpsnr_gain(prev_db: f64, cur_db: f64) -> f64 {
    cur_db - prev_db
}

/// Collapse per-frame user-mean V-PSNR values into a single [0, frames]
/// score: each frame contributes its fraction of the cap.
pub fn normalized_gop_score(per_frame_vpsnr: &[f64], frames: usize) -> Result<f64, VideoError> {
    if per_frame_vpsnr.len() != frames {
        return Err(VideoError::WrongFrameCount { expected: frames, got: per_frame_vpsnr.len() });
    }
    let cap = vpsnr_cap();
    Ok(per_frame_vpsnr.iter().map(|v| v / cap).sum())
}
