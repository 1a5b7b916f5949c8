//! Points and axis-aligned boxes in R^d for d in {2, 3}.
//!
//! Points always carry three coordinates; in two dimensions the third one is
//! zero, so Euclidean distances need no dimension branch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Point(pub [f64; MAX_DIM]);

impl Point {
    pub const ORIGIN: Point = Point([0.0; MAX_DIM]);

    pub fn new2(x: f64, y: f64) -> Self {
        Point([x, y, 0.0])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Point([x, y, z])
    }

    /// Builds a point from 2 or 3 coordinates.
    pub fn from_slice(c: &[f64]) -> Result<Self> {
        match c.len() {
            2 => Ok(Point::new2(c[0], c[1])),
            3 => Ok(Point::new3(c[0], c[1], c[2])),
            n => Err(Error::domain(format!("points need 2 or 3 coordinates, got {n}"))),
        }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.0[0] - other.0[0];
        let dy = self.0[1] - other.0[1];
        let dz = self.0[2] - other.0[2];
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn coords(&self, dim: usize) -> &[f64] {
        &self.0[..dim]
    }

    pub fn offset(&self, axis: usize, delta: f64) -> Point {
        let mut p = *self;
        p.0[axis] += delta;
        p
    }
}

/// Closed axis-aligned box `[lo, hi]` in R^d.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub dim: usize,
    pub lo: [f64; MAX_DIM],
    pub hi: [f64; MAX_DIM],
}

impl Window {
    pub fn new(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || !(2..=MAX_DIM).contains(&lo.len()) {
            return Err(Error::domain(format!(
                "window corners must both have 2 or 3 coordinates (got {} and {})",
                lo.len(),
                hi.len()
            )));
        }
        let dim = lo.len();
        let mut w = Window { dim, lo: [0.0; MAX_DIM], hi: [0.0; MAX_DIM] };
        for a in 0..dim {
            if !(hi[a] > lo[a]) || !lo[a].is_finite() || !hi[a].is_finite() {
                return Err(Error::domain(format!("window axis {a}: need lo < hi, got [{}, {}]", lo[a], hi[a])));
            }
            w.lo[a] = lo[a];
            w.hi[a] = hi[a];
        }
        Ok(w)
    }

    pub fn square(lo: f64, hi: f64) -> Self {
        Window { dim: 2, lo: [lo, lo, 0.0], hi: [hi, hi, 0.0] }
    }

    pub fn cube(lo: f64, hi: f64) -> Self {
        Window { dim: 3, lo: [lo; 3], hi: [hi; 3] }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent(a)).product()
    }

    pub fn center(&self) -> Point {
        let mut c = Point::ORIGIN;
        for a in 0..self.dim {
            c.0[a] = 0.5 * (self.lo[a] + self.hi[a]);
        }
        c
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|a| p.0[a] >= self.lo[a] && p.0[a] <= self.hi[a])
    }

    /// Half-open membership `lo <= x < hi`, used for Riemann sums over boxes.
    pub fn contains_half_open(&self, p: &Point, slack: f64) -> bool {
        (0..self.dim).all(|a| p.0[a] >= self.lo[a] - slack && p.0[a] < self.hi[a] - slack)
    }

    pub fn contains_window(&self, other: &Window) -> bool {
        self.dim == other.dim
            && (0..self.dim).all(|a| other.lo[a] >= self.lo[a] - 1e-12 && other.hi[a] <= self.hi[a] + 1e-12)
    }

    /// Enlarges the box by `pad` on every side.
    pub fn padded(&self, pad: f64) -> Window {
        let mut w = *self;
        for a in 0..self.dim {
            w.lo[a] -= pad;
            w.hi[a] += pad;
        }
        w
    }

    pub fn intersect(&self, other: &Window) -> Option<Window> {
        if self.dim != other.dim {
            return None;
        }
        let mut w = *self;
        for a in 0..self.dim {
            w.lo[a] = self.lo[a].max(other.lo[a]);
            w.hi[a] = self.hi[a].min(other.hi[a]);
            if w.hi[a] <= w.lo[a] {
                return None;
            }
        }
        Some(w)
    }

    /// Distance from `p` to the closest face of the box (0 outside).
    pub fn inner_distance(&self, p: &Point) -> f64 {
        (0..self.dim)
            .map(|a| (p.0[a] - self.lo[a]).min(self.hi[a] - p.0[a]))
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    }
}

/// Volume of the unit ball in R^d.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => unreachable!("dimension {dim} unsupported"),
    }
}

/// Surface area of the unit sphere S^{d-1}.
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

/// `|B(c, r) ∩ b|` for a disc and a rectangle (d = 2).
pub fn disc_box_area(c: &Point, r: f64, b: &Window) -> f64 {
    debug_assert_eq!(b.dim, 2);
    if r <= 0.0 {
        return 0.0;
    }
    let (x0, x1) = (b.lo[0] - c.0[0], b.hi[0] - c.0[0]);
    let (y0, y1) = (b.lo[1] - c.0[1], b.hi[1] - c.0[1]);
    let f = |a, b| disc_quadrant_area(a, b, r);
    (f(x1, y1) - f(x0, y1) - f(x1, y0) + f(x0, y0)).max(0.0)
}

/// Area of the centred disc of radius `r` inside `{x <= a, y <= b}`.
fn disc_quadrant_area(a: f64, b: f64, r: f64) -> f64 {
    let a = a.clamp(-r, r);
    if b <= -r || a <= -r {
        return 0.0;
    }
    // ∫ sqrt(r² - x²) dx
    let g = |x: f64| 0.5 * (x * (r * r - x * x).max(0.0).sqrt() + r * r * (x / r).clamp(-1.0, 1.0).asin());
    let chord = |lo: f64, hi: f64| if hi > lo { 2.0 * (g(hi) - g(lo)) } else { 0.0 };
    if b >= r {
        return chord(-r, a);
    }
    // Where the half chord exceeds |b| the column is cut at y = b.
    let c = (r * r - b * b).sqrt();
    let cut = |lo: f64, hi: f64| if hi > lo { b * (hi - lo) + g(hi) - g(lo) } else { 0.0 };
    if b >= 0.0 {
        chord(-r, a.min(-c)) + cut(-c, a.min(c)) + chord(c, a)
    } else {
        cut(-c, a.min(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disc_box_area_matches_counting() {
        let cases = [
            (Point::new2(0.0, 0.0), 1.0, Window::square(-2.0, 2.0)),
            (Point::new2(0.0, 0.0), 1.0, Window::square(0.0, 2.0)),
            (Point::new2(0.3, -0.2), 0.9, Window::new(&[-0.5, -0.4], &[0.7, 1.0]).unwrap()),
            (Point::new2(3.9, 0.1), 0.5, Window::square(0.0, 4.0)),
            (Point::new2(5.0, 5.0), 0.5, Window::square(0.0, 4.0)),
        ];
        let m = 2000;
        for (c, r, b) in cases {
            // Midpoint counting on a fine lattice over the disc's bounding box.
            let h = 2.0 * r / m as f64;
            let mut count = 0usize;
            for i in 0..m {
                for j in 0..m {
                    let p = Point::new2(c.0[0] - r + (i as f64 + 0.5) * h, c.0[1] - r + (j as f64 + 0.5) * h);
                    if p.dist(&c) <= r && b.contains(&p) {
                        count += 1;
                    }
                }
            }
            let want = count as f64 * h * h;
            let got = disc_box_area(&c, r, &b);
            assert!((got - want).abs() < 2e-3 * r * r, "{c:?} {r} {b:?}: {got} vs {want}");
        }
        assert!((disc_box_area(&Point::ORIGIN, 1.0, &Window::square(-1.0, 1.0)) - std::f64::consts::PI).abs() < 1e-14);
        assert!((disc_box_area(&Point::ORIGIN, 1.0, &Window::square(0.0, 1.0)) - std::f64::consts::FRAC_PI_4).abs() < 1e-14);
    }

    #[test]
    fn window_rejects_degenerate_axes() {
        assert!(Window::new(&[0.0, 0.0], &[1.0, 0.0]).is_err());
        assert!(Window::new(&[0.0], &[1.0]).is_err());
        assert!(Window::new(&[0.0, 0.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn padding_and_volume() {
        let w = Window::square(0.0, 4.0).padded(1.5);
        assert_eq!(w.volume(), 49.0);
        assert!(w.contains(&Point::new2(-1.5, 5.5)));
        assert_eq!(Window::cube(0.0, 2.0).volume(), 8.0);
    }

    #[test]
    fn two_dimensional_points_ignore_third_axis() {
        let a = Point::new2(0.0, 0.0);
        let b = Point::new2(3.0, 4.0);
        assert_eq!(a.dist(&b), 5.0);
    }
}
