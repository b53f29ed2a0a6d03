//! Grayscale rasterizer for synthetic double-pendulum videos.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ObservationError, ObservationSeries};
use crate::dynamics::Trajectory;

/// Frame geometry. World coordinates are scaled so that `world_half_extent`
/// spans half of the shorter image side; the pivot sits at `origin_px`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub width: usize,
    pub height: usize,
    pub world_half_extent: f64,
    /// Pivot position in pixel coordinates (x right, y down).
    pub origin_px: (f64, f64),
    pub rod_thickness_px: f64,
    pub bob_radius_px: f64,
}

impl Canvas {
    pub const WIDTH: usize = 217;
    pub const HEIGHT: usize = 171;

    /// 217×171 canvas sized for rods of total length `l1 + l2`.
    pub fn for_lengths(l1: f64, l2: f64) -> Self {
        Self::with_extent(1.1 * (l1 + l2))
    }

    pub fn with_extent(world_half_extent: f64) -> Self {
        Self {
            width: Self::WIDTH,
            height: Self::HEIGHT,
            world_half_extent,
            origin_px: (Self::WIDTH as f64 / 2.0, Self::HEIGHT as f64 / 2.0),
            rod_thickness_px: 2.0,
            bob_radius_px: 5.0,
        }
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    fn scale(&self) -> f64 {
        self.width.min(self.height) as f64 / 2.0 / self.world_half_extent
    }

    fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let s = self.scale();
        (self.origin_px.0 + s * x, self.origin_px.1 - s * y)
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        p.0 >= 0.0 && p.1 >= 0.0 && p.0 < self.width as f64 && p.1 < self.height as f64
    }
}

/// A rendered video plus out-of-frame bookkeeping.
#[derive(Debug, Clone)]
pub struct RenderedVideo {
    pub series: ObservationSeries,
    /// Indices of frames where a bob centre fell outside the canvas.
    pub clipped_frames: Vec<usize>,
}

impl RenderedVideo {
    pub fn clipped(&self) -> bool {
        !self.clipped_frames.is_empty()
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// Coverage ramp of width one pixel around a shape boundary at `radius`.
fn coverage(distance: f64, radius: f64) -> f64 {
    (radius + 0.5 - distance).clamp(0.0, 1.0)
}

fn render_frame(canvas: &Canvas, bobs: [f64; 4], frame: &mut [f64]) {
    let pivot = canvas.to_px(0.0, 0.0);
    let b1 = canvas.to_px(bobs[0], bobs[1]);
    let b2 = canvas.to_px(bobs[2], bobs[3]);
    let half = canvas.rod_thickness_px / 2.0;
    let r = canvas.bob_radius_px;
    let reach = half.max(r) + 1.0;
    let xs = [pivot.0, b1.0, b2.0];
    let ys = [pivot.1, b1.1, b2.1];
    let lo = |v: &[f64; 3]| v.iter().cloned().fold(f64::INFINITY, f64::min) - reach;
    let hi = |v: &[f64; 3]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + reach;
    let col0 = lo(&xs).floor().max(0.0) as usize;
    let col1 = (hi(&xs).ceil().max(0.0) as usize).min(canvas.width);
    let row0 = lo(&ys).floor().max(0.0) as usize;
    let row1 = (hi(&ys).ceil().max(0.0) as usize).min(canvas.height);
    for row in row0..row1 {
        for col in col0..col1 {
            let p = (col as f64 + 0.5, row as f64 + 0.5);
            let rods = coverage(segment_distance(p, pivot, b1), half)
                .max(coverage(segment_distance(p, b1, b2), half));
            let d1 = ((p.0 - b1.0).powi(2) + (p.1 - b1.1).powi(2)).sqrt();
            let d2 = ((p.0 - b2.0).powi(2) + (p.1 - b2.1).powi(2)).sqrt();
            let discs = coverage(d1, r).max(coverage(d2, r));
            frame[row * canvas.width + col] = rods.max(discs);
        }
    }
}

/// Rasterizes Cartesian bob positions `(x₁, y₁, x₂, y₂)` into row-major frames in `[0, 1]`.
pub fn render_pendulum_video(
    traj_cartesian: &Trajectory,
    canvas: &Canvas,
) -> Result<RenderedVideo, ObservationError> {
    if traj_cartesian.dim() != 4 {
        return Err(ObservationError::DimensionMismatch { expected: 4, got: traj_cartesian.dim() });
    }
    if !(canvas.world_half_extent > 0.0) || canvas.width == 0 || canvas.height == 0 {
        return Err(ObservationError::Invalid("degenerate canvas".into()));
    }
    let n = traj_cartesian.len();
    let mut samples = Array2::<f64>::zeros((n, canvas.pixels()));
    let clipped: Vec<bool> = samples
        .axis_iter_mut(ndarray::Axis(0))
        .into_par_iter()
        .zip(traj_cartesian.states.axis_iter(ndarray::Axis(0)).into_par_iter())
        .map(|(mut frame, state)| {
            let bobs = [state[0], state[1], state[2], state[3]];
            render_frame(canvas, bobs, frame.as_slice_mut().expect("row-major"));
            !(canvas.contains(canvas.to_px(bobs[0], bobs[1]))
                && canvas.contains(canvas.to_px(bobs[2], bobs[3])))
        })
        .collect();
    let clipped_frames = clipped
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    Ok(RenderedVideo {
        series: ObservationSeries::new(traj_cartesian.dt, samples)?,
        clipped_frames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::pendulum_cartesian;

    fn cartesian(angles: &[(f64, f64)], l1: f64, l2: f64) -> Trajectory {
        let mut states = Array2::zeros((angles.len(), 4));
        for (row, &(a, b)) in angles.iter().enumerate() {
            let c = pendulum_cartesian(a, b, l1, l2);
            for k in 0..4 {
                states[[row, k]] = c[k];
            }
        }
        Trajectory::new(0.0, 0.01, states).unwrap()
    }

    fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }

    #[test]
    fn frame_size_and_range() {
        let traj = cartesian(&[(0.3, -0.4), (1.0, 2.0)], 1.0, 1.0);
        let v = render_pendulum_video(&traj, &Canvas::for_lengths(1.0, 1.0)).unwrap();
        assert_eq!(v.series.dim(), 171 * 217);
        assert_eq!(v.series.dim(), 37_107);
        assert!(v.series.samples.iter().all(|&p| (0.0..=1.0).contains(&p)));
        assert!(!v.clipped());
    }

    #[test]
    fn rest_renders_a_vertical_rod() {
        let canvas = Canvas::for_lengths(1.0, 1.0);
        let traj = cartesian(&[(0.0, 0.0), (0.0, 0.0)], 1.0, 1.0);
        let v = render_pendulum_video(&traj, &canvas).unwrap();
        let frame = v.series.samples.row(0);
        let centre = canvas.origin_px.0;
        let mut lit = 0;
        for row in 0..canvas.height {
            for col in 0..canvas.width {
                let p = frame[row * canvas.width + col];
                if ((col as f64 + 0.5) - centre).abs() > canvas.bob_radius_px + 1.0 {
                    assert_eq!(p, 0.0, "pixel ({row},{col}) lit away from the rod");
                }
                if p > 0.0 {
                    lit += 1;
                }
            }
        }
        assert!(lit > 50);
        // Above the pivot is empty.
        assert_eq!(frame[10 * canvas.width + canvas.width / 2], 0.0);
    }

    #[test]
    fn integer_shift_preserves_distances() {
        let traj = cartesian(&[(0.2, 0.1), (-0.5, 0.9), (1.2, -0.3)], 1.0, 1.5);
        let base = Canvas::for_lengths(1.0, 1.5);
        let mut shifted = base;
        shifted.origin_px = (base.origin_px.0 + 3.0, base.origin_px.1 - 2.0);
        let a = render_pendulum_video(&traj, &base).unwrap().series;
        let b = render_pendulum_video(&traj, &shifted).unwrap().series;
        assert_ne!(a.samples, b.samples);
        for i in 0..3 {
            for j in 0..3 {
                let da = sq_dist(a.samples.row(i), a.samples.row(j));
                let db = sq_dist(b.samples.row(i), b.samples.row(j));
                assert!((da - db).abs() < 1e-9, "{da} vs {db}");
            }
        }
    }

    #[test]
    fn distinct_configurations_differ() {
        let traj = cartesian(&[(0.2, 0.1), (0.25, 0.1)], 1.0, 1.0);
        let v = render_pendulum_video(&traj, &Canvas::for_lengths(1.0, 1.0)).unwrap();
        assert!(sq_dist(v.series.samples.row(0), v.series.samples.row(1)) > 0.0);
    }

    #[test]
    fn out_of_frame_is_flagged() {
        let states = ndarray::array![[0.0, -0.5, 0.0, -1.0], [0.0, -0.5, 0.0, -5.0]];
        let traj = Trajectory::new(0.0, 0.01, states).unwrap();
        let v = render_pendulum_video(&traj, &Canvas::with_extent(1.2)).unwrap();
        assert!(v.clipped());
        assert_eq!(v.clipped_frames, vec![1]);
        assert!(v.series.samples.iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn rejects_non_cartesian_input() {
        let traj = Trajectory::new(0.0, 0.01, Array2::zeros((2, 3))).unwrap();
        assert!(render_pendulum_video(&traj, &Canvas::with_extent(1.0)).is_err());
    }
}
