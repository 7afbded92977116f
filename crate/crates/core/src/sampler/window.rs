use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Cells `[u0, u1) x [v0, v1)` of the feature grid and how many projected
/// points fall inside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub u0: usize,
    pub v0: usize,
    pub u1: usize,
    pub v1: usize,
    pub count: usize,
}

impl Window {
    pub fn contains(&self, (u, v): (usize, usize)) -> bool {
        u >= self.u0 && u < self.u1 && v >= self.v0 && v < self.v1
    }

    pub fn area(&self) -> usize {
        (self.u1 - self.u0) * (self.v1 - self.v0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.v0..self.v1).flat_map(move |v| (self.u0..self.u1).map(move |u| (u, v)))
    }
}

/// Non-overlapping `w x w` tiling of the feature grid, row-major. Edge
/// windows are clipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPartition {
    pub window: usize,
    /// `(H, W)` of the feature grid.
    pub feature_dims: (usize, usize),
    pub windows: Vec<Window>,
}

impl WindowPartition {
    /// Windows holding at least one projected point.
    pub fn kept(&self) -> impl Iterator<Item = &Window> {
        self.windows.iter().filter(|w| w.count > 0)
    }

    pub fn window_of(&self, (u, v): (usize, usize)) -> Option<usize> {
        let (h, w) = self.feature_dims;
        (u < w && v < h).then(|| (v / self.window) * w.div_ceil(self.window) + u / self.window)
    }
}

/// Tiles the `(H, W)` feature grid and counts the projected point cells
/// per window. Cells outside the grid are ignored.
pub fn partition_windows(
    feature_dims: (usize, usize),
    projected: &[(usize, usize)],
    w: usize,
) -> Result<WindowPartition> {
    if w == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let (h, wd) = feature_dims;
    let mut windows = Vec::new();
    for v0 in (0..h).step_by(w) {
        for u0 in (0..wd).step_by(w) {
            windows.push(Window {
                u0,
                v0,
                u1: (u0 + w).min(wd),
                v1: (v0 + w).min(h),
                count: 0,
            });
        }
    }
    let mut part = WindowPartition {
        window: w,
        feature_dims,
        windows,
    };
    for &p in projected {
        if let Some(i) = part.window_of(p) {
            part.windows[i].count += 1;
        }
    }
    Ok(part)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_window() {
        let p = partition_windows((64, 64), &[(3, 5)], 64).unwrap();
        assert_eq!(p.windows.len(), 1);
        assert_eq!(p.kept().count(), 1);
    }

    #[test]
    fn quadrant() {
        let pts = [(1, 1), (10, 60), (63, 63)];
        let p = partition_windows((128, 128), &pts, 64).unwrap();
        assert_eq!(p.windows.len(), 4);
        let kept: Vec<_> = p.kept().collect();
        assert_eq!(kept.len(), 1);
        assert_eq!((kept[0].u0, kept[0].v0, kept[0].count), (0, 0, 3));
    }

    #[test]
    fn zero_window_rejected() {
        assert!(partition_windows((8, 8), &[], 0).is_err());
    }

    proptest! {
        #[test]
        fn counts_match_binning(
            h in 1usize..40, wd in 1usize..40, w in 1usize..12,
            raw in prop::collection::vec((0usize..40, 0usize..40), 0..60),
        ) {
            let pts: Vec<_> = raw.into_iter().filter(|&(u, v)| u < wd && v < h).collect();
            let p = partition_windows((h, wd), &pts, w).unwrap();
            let covered: usize = p.windows.iter().map(Window::area).sum();
            prop_assert_eq!(covered, h * wd);
            for win in &p.windows {
                let brute = pts.iter().filter(|&&c| win.contains(c)).count();
                prop_assert_eq!(win.count, brute);
            }
        }
    }
}
