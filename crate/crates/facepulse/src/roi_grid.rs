//! Face box derivation and its partition into a grid of sub-ROIs.
//!
//! The face box is derived from the landmarks of a single frame (by
//! convention frame 0; the box stays fixed for the whole session so that
//! sub-ROI identity is stable over time). The box is split into `n`
//! rectangular cells whose aspect ratio is as close to square as the
//! factorization of `n` allows; remainder pixels go to the leftmost
//! columns and topmost rows, so the tiling is exact.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{read_ppm_frame, FrameImage, FrameRecord, LandmarkTrack, Point, SessionTrace};

/// Axis-aligned pixel rectangle covering columns `[x0, x0 + w)` and rows
/// `[y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: u32,
    pub h: u32,
}

impl Rect {
    pub fn new(x0: i64, y0: i64, w: u32, h: u32) -> Self {
        Self { x0, y0, w, h }
    }

    /// Half-open containment test for a continuous point.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 as f64
            && p.x < (self.x0 + self.w as i64) as f64
            && p.y >= self.y0 as f64
            && p.y < (self.y0 + self.h as i64) as f64
    }

    /// Continuous center of the rectangle.
    pub fn center(&self) -> Point {
        Point::new(
            self.x0 as f64 + self.w as f64 / 2.0,
            self.y0 as f64 + self.h as f64 / 2.0,
        )
    }
}

/// Fraction of the landmark x-span added as margin on each side of the
/// face box when no explicit box is supplied.
pub const DEFAULT_ROI_MARGIN: f64 = 0.5;

/// Derives the face box from one frame's landmarks.
///
/// Horizontally the box spans the landmarks plus `margin` times the x-span
/// on each side. Its height is twice the landmark y-span, anchored so the
/// nose sits 40% of the way down (landmarks cover the lower face, so the
/// box must extend well above the nose to reach the forehead). Bounds are
/// snapped outward to whole pixels, which keeps every landmark strictly
/// inside the half-open box.
pub fn face_rect(frame: &FrameRecord, margin: f64) -> Result<Rect> {
    let mut xs = vec![frame.nose.x];
    let mut ys = vec![frame.nose.y];
    for lip in &frame.lips {
        xs.push(lip.x);
        ys.push(lip.y);
    }
    let (xmin, xmax) = (
        xs.iter().cloned().fold(f64::INFINITY, f64::min),
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let (ymin, ymax) = (
        ys.iter().cloned().fold(f64::INFINITY, f64::min),
        ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    let span_x = xmax - xmin;
    let span_y = ymax - ymin;
    if span_x <= 0.0 || span_y <= 0.0 {
        return Err(Error::DegenerateLandmarks);
    }
    let x0f = xmin - margin * span_x;
    let x1f = xmax + margin * span_x;
    let height = 2.0 * span_y;
    let y0f = frame.nose.y - 0.4 * height;
    let y1f = y0f + height;
    // Snap outward: floor the low edge, take the pixel after the high edge.
    let x0 = x0f.floor() as i64;
    let x1 = x1f.floor() as i64 + 1;
    let y0 = y0f.floor() as i64;
    let y1 = y1f.floor() as i64 + 1;
    Ok(Rect::new(x0, y0, (x1 - x0) as u32, (y1 - y0) as u32))
}

/// The face box split into `rows x cols` cells, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubRoiGrid {
    pub rect: Rect,
    pub rows: u32,
    pub cols: u32,
    /// `rows * cols` cell rectangles, row-major, tiling `rect` exactly.
    pub cells: Vec<Rect>,
}

/// Splits the lengths of `total` pixels into `parts` near-equal runs, the
/// leftmost/topmost runs taking the remainder pixel each.
fn split_lengths(total: u32, parts: u32) -> Vec<u32> {
    let base = total / parts;
    let rem = total % parts;
    (0..parts).map(|i| base + u32::from(i < rem)).collect()
}

/// Partitions `rect` into `n` cells.
///
/// Among the factor pairs `rows * cols = n` that fit (at least one pixel
/// per cell), the pair whose cell aspect ratio is closest to square wins;
/// on a tie the taller grid (more rows) is chosen. Cell edges tile the
/// rect exactly, with remainder pixels assigned to the leftmost columns
/// and topmost rows.
pub fn grid_divide(rect: Rect, n: usize) -> Result<SubRoiGrid> {
    if n == 0 {
        return Err(Error::Invariant("grid_divide needs n >= 1".to_string()));
    }
    let n32 = u32::try_from(n).map_err(|_| Error::Invariant(format!("grid of {n} cells")))?;
    let mut best: Option<(f64, u32, u32)> = None;
    let mut best_any: Option<(f64, u32, u32)> = None;
    for rows in 1..=n32 {
        if n32 % rows != 0 {
            continue;
        }
        let cols = n32 / rows;
        let aspect = (rect.w as f64 / cols as f64).ln() - (rect.h as f64 / rows as f64).ln();
        let score = aspect.abs();
        // `<=` so that on equal scores the later (taller) grid wins.
        if best_any.is_none_or(|(s, _, _)| score <= s) {
            best_any = Some((score, rows, cols));
        }
        if rect.w >= cols && rect.h >= rows && best.is_none_or(|(s, _, _)| score <= s) {
            best = Some((score, rows, cols));
        }
    }
    let (_, rows, cols) = best.ok_or_else(|| {
        let (_, rows, cols) = best_any.expect("n >= 1 always yields a factor pair");
        Error::RectTooSmall {
            w: rect.w,
            h: rect.h,
            rows,
            cols,
        }
    })?;
    let widths = split_lengths(rect.w, cols);
    let heights = split_lengths(rect.h, rows);
    let mut cells = Vec::with_capacity(n);
    let mut y = rect.y0;
    for &ch in &heights {
        let mut x = rect.x0;
        for &cw in &widths {
            cells.push(Rect::new(x, y, cw, ch));
            x += cw as i64;
        }
        y += ch as i64;
    }
    Ok(SubRoiGrid {
        rect,
        rows,
        cols,
        cells,
    })
}

/// Mean green intensity of every grid cell in `image`, row-major.
///
/// Sums are integer-exact before the final division, so results do not
/// depend on pixel visit order.
pub fn green_means(image: &FrameImage, grid: &SubRoiGrid) -> Result<Vec<f64>> {
    let r = grid.rect;
    if r.x0 < 0
        || r.y0 < 0
        || r.x0 + r.w as i64 > image.width as i64
        || r.y0 + r.h as i64 > image.height as i64
    {
        return Err(Error::GridOutOfBounds {
            x0: r.x0,
            y0: r.y0,
            w: r.w,
            h: r.h,
            width: image.width,
            height: image.height,
        });
    }
    let mut means = Vec::with_capacity(grid.cells.len());
    for cell in &grid.cells {
        let mut sum: u64 = 0;
        for y in cell.y0..cell.y0 + cell.h as i64 {
            for x in cell.x0..cell.x0 + cell.w as i64 {
                sum += u64::from(image.green(x as usize, y as usize));
            }
        }
        means.push(sum as f64 / (cell.w as u64 * cell.h as u64) as f64);
    }
    Ok(means)
}

/// For every sub-ROI, the index of the landmark whose motion it follows
/// (0 = nose, 1.. = lips), fixed at assignment time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LandmarkAssignment {
    pub owner: Vec<usize>,
}

/// Assigns each grid cell to a landmark of `frame`.
///
/// A cell containing a landmark belongs to it (lowest landmark index wins
/// when several fall in one cell); otherwise the cell goes to the landmark
/// nearest its center, again breaking ties toward the lowest index. The
/// assignment is computed once (frame 0) and reused for the whole session.
pub fn assign_landmarks(grid: &SubRoiGrid, frame: &FrameRecord) -> LandmarkAssignment {
    let landmarks: Vec<Point> = (0..frame.landmark_count())
        .map(|i| frame.landmark(i).unwrap())
        .collect();
    let owner = grid
        .cells
        .iter()
        .map(|cell| {
            if let Some(idx) = landmarks.iter().position(|&p| cell.contains(p)) {
                return idx;
            }
            let center = cell.center();
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (idx, &p) in landmarks.iter().enumerate() {
                let d = center.distance(p);
                if d < best_d {
                    best_d = d;
                    best = idx;
                }
            }
            best
        })
        .collect();
    LandmarkAssignment { owner }
}

/// Per-frame movement magnitude of sub-ROI `subroi`: the frame-to-frame
/// displacement of its owning landmark, 0 for the first frame.
pub fn movement_series(
    frames: &[FrameRecord],
    assignment: &LandmarkAssignment,
    subroi: usize,
) -> Vec<f64> {
    let lm = assignment.owner[subroi];
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        if t == 0 {
            out.push(0.0);
        } else {
            let prev = frames[t - 1].landmark(lm).unwrap();
            out.push(frame.landmark(lm).unwrap().distance(prev));
        }
    }
    out
}

/// Builds a session trace from a directory of `frame_%06d.ppm` images and
/// the matching landmark track: the face box and grid come from frame 0
/// (or `rect` when supplied), then every frame contributes one green mean
/// per sub-ROI. Frames are decoded in parallel.
pub fn extract_trace(
    frames_dir: impl AsRef<Path>,
    track: &LandmarkTrack,
    n_subrois: usize,
    rect: Option<Rect>,
    margin: f64,
) -> Result<SessionTrace> {
    let frames_dir = frames_dir.as_ref();
    if track.frames.is_empty() {
        return Err(Error::TraceTooShort {
            frames: 0,
            needed: 1,
        });
    }
    let rect = match rect {
        Some(rect) => rect,
        None => face_rect(&track.frames[0], margin)?,
    };
    let grid = grid_divide(rect, n_subrois)?;
    let frames: Vec<FrameRecord> = track
        .frames
        .par_iter()
        .map(|f| -> Result<FrameRecord> {
            let path = frames_dir.join(format!("frame_{:06}.ppm", f.frame_index));
            let image = read_ppm_frame(&path)?;
            let greens = green_means(&image, &grid)?;
            Ok(FrameRecord {
                greens,
                ..f.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SessionTrace {
        fps: track.fps,
        n_subrois,
        n_lips: track.n_lips,
        frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame_with(nose: Point, lips: Vec<Point>) -> FrameRecord {
        FrameRecord {
            frame_index: 0,
            t_sec: 0.0,
            nose,
            lips,
            greens: Vec::new(),
        }
    }

    #[test]
    fn single_cell_grid_is_the_rect() {
        let rect = Rect::new(3, 7, 11, 13);
        let grid = grid_divide(rect, 1).unwrap();
        assert_eq!((grid.rows, grid.cols), (1, 1));
        assert_eq!(grid.cells, vec![rect]);
    }

    #[test]
    fn forty_cells_on_100x160_are_20x20() {
        // 100x160 splits into 5 columns x 8 rows of exactly 20x20 cells.
        let grid = grid_divide(Rect::new(0, 0, 100, 160), 40).unwrap();
        assert_eq!((grid.rows, grid.cols), (8, 5));
        assert!(grid.cells.iter().all(|c| c.w == 20 && c.h == 20));
        assert_eq!(grid.cells.len(), 40);
    }

    #[test]
    fn remainder_pixels_go_to_leftmost_columns() {
        let grid = grid_divide(Rect::new(0, 0, 101, 160), 40).unwrap();
        assert_eq!((grid.rows, grid.cols), (8, 5));
        let first_row: Vec<u32> = grid.cells[..5].iter().map(|c| c.w).collect();
        assert_eq!(first_row, vec![21, 20, 20, 20, 20]);
    }

    #[test]
    fn too_small_rect_is_rejected() {
        match grid_divide(Rect::new(0, 0, 4, 4), 40) {
            Err(Error::RectTooSmall { w: 4, h: 4, .. }) => {}
            other => panic!("expected RectTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn infeasible_aspect_winner_falls_back_to_fitting_pair() {
        // 3x40 cannot host 8x5 (needs 5 columns of >= 1px in width 3), but
        // 40 rows x 1 column fits; the split must use a fitting pair.
        let grid = grid_divide(Rect::new(0, 0, 3, 40), 40).unwrap();
        assert!(grid.rect.w >= grid.cols && grid.rect.h >= grid.rows);
        assert_eq!(grid.cells.len(), 40);
    }

    /// Brute-force cover check: every pixel of the rect is claimed by
    /// exactly one cell.
    fn assert_exact_tiling(grid: &SubRoiGrid) {
        let r = grid.rect;
        let mut cover = vec![0u8; (r.w * r.h) as usize];
        for cell in &grid.cells {
            for y in cell.y0..cell.y0 + cell.h as i64 {
                for x in cell.x0..cell.x0 + cell.w as i64 {
                    let ix = ((y - r.y0) as u32 * r.w + (x - r.x0) as u32) as usize;
                    cover[ix] += 1;
                }
            }
        }
        assert!(
            cover.iter().all(|&c| c == 1),
            "cells must tile the rect exactly"
        );
    }

    #[test]
    fn grid_tiles_rect_exactly() {
        assert_exact_tiling(&grid_divide(Rect::new(-5, 2, 101, 163), 40).unwrap());
        assert_exact_tiling(&grid_divide(Rect::new(0, 0, 17, 9), 12).unwrap());
    }

    #[test]
    fn face_rect_matches_hand_derivation() {
        // Landmarks: nose (320,220), lips spanning x 290..350, y 220..300.
        // x-span 60, margin 0.5 each side -> continuous box x 260..380.
        // y-span 80, height 160, nose 40% down -> y 156..316.
        // Outward pixel snap adds one pixel at each high edge.
        let frame = frame_with(
            Point::new(320.0, 220.0),
            vec![
                Point::new(290.0, 280.0),
                Point::new(350.0, 280.0),
                Point::new(320.0, 260.0),
                Point::new(320.0, 300.0),
            ],
        );
        let rect = face_rect(&frame, 0.5).unwrap();
        assert_eq!(rect, Rect::new(260, 156, 121, 161));
    }

    #[test]
    fn coincident_landmarks_are_degenerate() {
        let p = Point::new(100.0, 100.0);
        let frame = frame_with(p, vec![p, p]);
        assert!(matches!(
            face_rect(&frame, 0.5),
            Err(Error::DegenerateLandmarks)
        ));
        // Collinear along x: no vertical span to build a box from.
        let flat = frame_with(
            Point::new(100.0, 50.0),
            vec![Point::new(90.0, 50.0), Point::new(110.0, 50.0)],
        );
        assert!(matches!(
            face_rect(&flat, 0.5),
            Err(Error::DegenerateLandmarks)
        ));
    }

    #[test]
    fn green_means_match_per_pixel_oracle() {
        // Deterministic pseudo-random image, then compare against a naive
        // per-pixel accumulation done with independent arithmetic.
        let (w, h) = (23usize, 17usize);
        let mut rgb = vec![0u8; 3 * w * h];
        let mut state = 0x243F_6A88u32;
        for b in rgb.iter_mut() {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            *b = (state >> 24) as u8;
        }
        let image = FrameImage::new(w, h, rgb).unwrap();
        let grid = grid_divide(Rect::new(2, 1, 20, 15), 12).unwrap();
        let means = green_means(&image, &grid).unwrap();
        for (cell, mean) in grid.cells.iter().zip(&means) {
            let mut acc = 0.0f64;
            let mut count = 0u32;
            for y in 0..image.height {
                for x in 0..image.width {
                    let inside = (x as i64) >= cell.x0
                        && (x as i64) < cell.x0 + cell.w as i64
                        && (y as i64) >= cell.y0
                        && (y as i64) < cell.y0 + cell.h as i64;
                    if inside {
                        acc += f64::from(image.green(x, y));
                        count += 1;
                    }
                }
            }
            assert_eq!(*mean, acc / f64::from(count));
        }
    }

    #[test]
    fn grid_outside_image_is_rejected() {
        let image = FrameImage::new(10, 10, vec![0; 300]).unwrap();
        let grid = grid_divide(Rect::new(5, 5, 8, 8), 4).unwrap();
        assert!(matches!(
            green_means(&image, &grid),
            Err(Error::GridOutOfBounds { .. })
        ));
        let neg = grid_divide(Rect::new(-1, 0, 5, 5), 1).unwrap();
        assert!(matches!(
            green_means(&image, &neg),
            Err(Error::GridOutOfBounds { .. })
        ));
    }

    #[test]
    fn assignment_prefers_containment_then_distance() {
        let grid = grid_divide(Rect::new(0, 0, 10, 10), 4).unwrap();
        assert_eq!((grid.rows, grid.cols), (2, 2));
        // Containment: nose (1,1) claims cell 0, lip2 (2,9) claims cell 2,
        // lip1 (9,9) claims cell 3. Cell 1 holds no landmark; its center
        // (7.5,2.5) is exactly sqrt(44.5) from both the nose and lip1, so
        // the distance tie resolves to the lower landmark index (nose).
        let frame = frame_with(
            Point::new(1.0, 1.0),
            vec![Point::new(9.0, 9.0), Point::new(2.0, 9.0)],
        );
        let assignment = assign_landmarks(&grid, &frame);
        assert_eq!(assignment.owner, vec![0, 0, 2, 1]);
    }

    #[test]
    fn containment_tie_takes_lowest_landmark_index() {
        let grid = grid_divide(Rect::new(0, 0, 10, 10), 1).unwrap();
        let frame = frame_with(Point::new(5.0, 5.0), vec![Point::new(5.0, 5.0)]);
        assert_eq!(assign_landmarks(&grid, &frame).owner, vec![0]);
    }

    #[test]
    fn movement_series_matches_hand_computation() {
        let mut frames = Vec::new();
        for t in 0..4 {
            let mut f = frame_with(
                Point::new(t as f64 * 3.0, t as f64 * 4.0), // nose moves 5 px/frame
                vec![Point::new(50.0, 50.0 + t as f64)],    // lip moves 1 px/frame
            );
            f.frame_index = t;
            f.t_sec = t as f64;
            frames.push(f);
        }
        let assignment = LandmarkAssignment { owner: vec![0, 1] };
        assert_eq!(
            movement_series(&frames, &assignment, 0),
            vec![0.0, 5.0, 5.0, 5.0]
        );
        assert_eq!(
            movement_series(&frames, &assignment, 1),
            vec![0.0, 1.0, 1.0, 1.0]
        );
    }

    proptest! {
        // Any feasible grid tiles its rect exactly.
        #[test]
        fn prop_grid_tiles_exactly(
            w in 1u32..60,
            h in 1u32..60,
            x0 in -20i64..20,
            y0 in -20i64..20,
            n in 1usize..30,
        ) {
            if let Ok(grid) = grid_divide(Rect::new(x0, y0, w, h), n) {
                prop_assert_eq!(grid.cells.len(), n);
                let area: u64 = grid.cells.iter().map(|c| u64::from(c.w) * u64::from(c.h)).sum();
                prop_assert_eq!(area, u64::from(w) * u64::from(h));
                assert_exact_tiling(&grid);
            }
        }

        // The derived face box contains every landmark. The box is anchored
        // with the nose 40% of the way down, so this holds for the geometry
        // the landmarks actually have: lip points below the nose.
        #[test]
        fn prop_face_rect_contains_landmarks(
            nx in -100.0f64..500.0,
            ny in -100.0f64..500.0,
            dx1 in 1.0f64..80.0,
            dy1 in 1.0f64..80.0,
            dx2 in -80.0f64..80.0,
            dy2 in 1.0f64..80.0,
            margin in 0.0f64..1.5,
        ) {
            let frame = frame_with(
                Point::new(nx, ny),
                vec![
                    Point::new(nx - dx1, ny + dy1),
                    Point::new(nx + dx2, ny + dy2),
                ],
            );
            let rect = face_rect(&frame, margin).unwrap();
            for i in 0..frame.landmark_count() {
                prop_assert!(rect.contains(frame.landmark(i).unwrap()));
            }
        }
    }

    #[test]
    fn extract_trace_reads_frame_files_and_averages_cells() {
        use crate::ingest::{write_ppm_frame, FrameImage, LandmarkTrack};

        // 8x8 frames, landmarks chosen so the face box is the full image:
        // nose (4,2), lips spanning y 4..6 -> espan 2, box height 4 wide
        // enough to cover; use an explicit rect to keep the oracle simple.
        let rect = Rect::new(0, 0, 8, 8);
        let dir = tempfile::tempdir().unwrap();
        let mut track_frames = Vec::new();
        for t in 0..3usize {
            // Green value = x + 8*y + t, exact in u8 for this size.
            let mut rgb = Vec::with_capacity(8 * 8 * 3);
            for y in 0..8u16 {
                for x in 0..8u16 {
                    rgb.extend_from_slice(&[0, (x + 8 * y) as u8 + t as u8, 0]);
                }
            }
            let image = FrameImage::new(8, 8, rgb).unwrap();
            write_ppm_frame(&image, dir.path().join(format!("frame_{t:06}.ppm"))).unwrap();
            track_frames.push(FrameRecord {
                frame_index: t,
                t_sec: t as f64 * 0.04,
                nose: Point::new(4.0, 2.0),
                lips: vec![Point::new(3.0, 5.0), Point::new(5.0, 5.0)],
                greens: Vec::new(),
            });
        }
        let track = LandmarkTrack {
            fps: 25.0,
            n_lips: 2,
            frames: track_frames,
        };
        let trace = extract_trace(dir.path(), &track, 4, Some(rect), 0.0).unwrap();
        assert_eq!(trace.n_subrois, 4);
        assert_eq!(trace.n_frames(), 3);
        // 2x2 grid of 4x4 cells; oracle means from the linear ramp.
        let grid = grid_divide(rect, 4).unwrap();
        for (t, frame) in trace.frames.iter().enumerate() {
            for (r, cell) in grid.cells.iter().enumerate() {
                let mut sum = 0.0;
                for y in cell.y0..cell.y0 + cell.h as i64 {
                    for x in cell.x0..cell.x0 + cell.w as i64 {
                        sum += (x + 8 * y + t as i64) as f64;
                    }
                }
                let want = sum / (cell.w * cell.h) as f64;
                assert_eq!(frame.greens[r], want, "frame {t} cell {r}");
            }
            assert_eq!(frame.lips.len(), 2, "landmarks carried over");
        }

        // A missing frame file surfaces as an I/O failure.
        std::fs::remove_file(dir.path().join("frame_000001.ppm")).unwrap();
        assert!(matches!(
            extract_trace(dir.path(), &track, 4, Some(rect), 0.0),
            Err(Error::IoFailure { .. })
        ));

        // An empty track cannot seed the face box.
        let empty = LandmarkTrack {
            fps: 25.0,
            n_lips: 2,
            frames: Vec::new(),
        };
        assert!(matches!(
            extract_trace(dir.path(), &empty, 4, None, 0.5),
            Err(Error::TraceTooShort {
                frames: 0,
                needed: 1
            })
        ));
    }
}
