//! Regular node lattices over a window and scalar fields sampled on them.
//!
//! Nodes sit at `lo + i*h` for `i = 0..=n` on every axis, so the window corners
//! are nodes. Values are stored row-major with the last axis fastest.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{Point, Window, MAX_DIM};

const RAW_MAGIC: &[u8; 8] = b"GRAINSF1";

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    window: Window,
    spacing: f64,
    shape: [usize; MAX_DIM],
}

impl Grid {
    pub fn new(window: Window, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::domain(format!("grid spacing must be positive, got {spacing}")));
        }
        let mut shape = [1usize; MAX_DIM];
        for a in 0..window.dim {
            let cells = window.extent(a) / spacing;
            let n = cells.round();
            if (cells - n).abs() > 1e-6 || n < 1.0 {
                return Err(Error::domain(format!(
                    "window extent {} on axis {a} is not a positive multiple of h = {spacing}",
                    window.extent(a)
                )));
            }
            shape[a] = n as usize + 1;
        }
        Ok(Grid { window, spacing, shape })
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.window.dim
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn shape(&self) -> [usize; MAX_DIM] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    #[inline]
    pub fn flat(&self, ijk: [usize; MAX_DIM]) -> usize {
        (ijk[0] * self.shape[1] + ijk[1]) * self.shape[2] + ijk[2]
    }

    #[inline]
    pub fn multi(&self, idx: usize) -> [usize; MAX_DIM] {
        let k = idx % self.shape[2];
        let rest = idx / self.shape[2];
        [rest / self.shape[1], rest % self.shape[1], k]
    }

    #[inline]
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        if axis < self.dim() {
            self.window.lo[axis] + i as f64 * self.spacing
        } else {
            0.0
        }
    }

    #[inline]
    pub fn point(&self, idx: usize) -> Point {
        let m = self.multi(idx);
        Point([self.coord(0, m[0]), self.coord(1, m[1]), self.coord(2, m[2])])
    }

    /// Nearest lattice node to `p`, or `None` when `p` lies outside the window.
    pub fn nearest_node(&self, p: &Point) -> Option<usize> {
        if !self.window.contains(p) {
            return None;
        }
        let mut ijk = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let f = ((p.0[a] - self.window.lo[a]) / self.spacing).round();
            ijk[a] = (f.max(0.0) as usize).min(self.shape[a] - 1);
        }
        Some(self.flat(ijk))
    }

    /// Index range (inclusive) of nodes whose coordinate on `axis` lies in `[lo, hi]`.
    pub fn axis_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        if axis >= self.dim() {
            return Some((0, 0));
        }
        let w = &self.window;
        let a = ((lo - w.lo[axis]) / self.spacing - 1e-9).ceil().max(0.0);
        let b = ((hi - w.lo[axis]) / self.spacing + 1e-9).floor();
        let max = (self.shape[axis] - 1) as f64;
        if b < 0.0 || a > max || a > b {
            return None;
        }
        Some((a as usize, b.min(max) as usize))
    }

    /// Calls `f(index, point)` for every node inside the axis-aligned bounding
    /// box of the ball `B_radius(center)`.
    pub fn for_each_in_bbox(&self, center: &Point, radius: f64, mut f: impl FnMut(usize, &Point)) {
        let mut ranges = [(0usize, 0usize); MAX_DIM];
        for (a, r) in ranges.iter_mut().enumerate() {
            match self.axis_range(a, center.0[a] - radius, center.0[a] + radius) {
                Some(rg) => *r = rg,
                None => return,
            }
        }
        for i in ranges[0].0..=ranges[0].1 {
            for j in ranges[1].0..=ranges[1].1 {
                for k in ranges[2].0..=ranges[2].1 {
                    let idx = self.flat([i, j, k]);
                    let p = Point([self.coord(0, i), self.coord(1, j), self.coord(2, k)]);
                    f(idx, &p);
                }
            }
        }
    }

    /// Nodes inside the half-open box `[lo, hi)`; with node-aligned boxes the
    /// count times `h^d` equals the box volume.
    pub fn nodes_in_box(&self, b: &Window) -> Vec<usize> {
        let slack = 1e-9 * self.spacing;
        (0..self.len()).filter(|&i| b.contains_half_open(&self.point(i), slack)).collect()
    }

    /// Index offset of this grid's origin inside `outer` when both lattices
    /// share the spacing and are aligned.
    pub fn offset_in(&self, outer: &Grid) -> Option<[usize; MAX_DIM]> {
        if self.dim() != outer.dim() || (self.spacing - outer.spacing).abs() > 1e-12 * self.spacing {
            return None;
        }
        let mut off = [0usize; MAX_DIM];
        for a in 0..self.dim() {
            let f = (self.window.lo[a] - outer.window.lo[a]) / self.spacing;
            let r = f.round();
            if (f - r).abs() > 1e-6 || r < 0.0 || r as usize + self.shape[a] > outer.shape[a] {
                return None;
            }
            off[a] = r as usize;
        }
        Some(off)
    }

    /// Grid over `window` grown by `nodes` lattice steps on every side.
    pub fn grown(&self, nodes: usize) -> Grid {
        let pad = nodes as f64 * self.spacing;
        let window = self.window.padded(pad);
        let mut shape = self.shape;
        for s in shape.iter_mut().take(self.dim()) {
            *s += 2 * nodes;
        }
        Grid { window, spacing: self.spacing, shape }
    }
}

/// Values on the nodes of a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn filled(grid: Grid, value: f64) -> Self {
        let values = vec![value; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::domain(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        ScalarField { grid, values }
    }

    pub fn from_fn_indexed(grid: Grid, f: impl Fn(usize) -> f64) -> Self {
        let values = (0..grid.len()).map(f).collect();
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn at_node(&self, p: &Point) -> Option<f64> {
        self.grid.nearest_node(p).map(|i| self.values[i])
    }

    /// Multilinear interpolation; `None` outside the window.
    pub fn interpolate(&self, p: &Point) -> Option<f64> {
        let g = &self.grid;
        if !g.window().contains(p) {
            return None;
        }
        let dim = g.dim();
        let mut base = [0usize; MAX_DIM];
        let mut frac = [0.0f64; MAX_DIM];
        for a in 0..dim {
            let f = (p.0[a] - g.window().lo[a]) / g.spacing();
            let i = (f.floor().max(0.0) as usize).min(g.shape()[a].saturating_sub(2));
            base[a] = i;
            frac[a] = (f - i as f64).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut ijk = base;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    ijk[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[g.flat(ijk)];
            }
        }
        Some(acc)
    }

    pub fn sum_over(&self, nodes: &[usize]) -> f64 {
        nodes.iter().map(|&i| self.values[i]).sum()
    }

    /// Integral over the half-open box by node Riemann sum.
    pub fn integrate_box(&self, b: &Window) -> f64 {
        self.sum_over(&self.grid.nodes_in_box(b)) * self.grid.cell_volume()
    }

    /// Writes the flat binary layout: magic `GRAINSF1`, `u32` dimension, `d`
    /// node counts (`u64`), spacing, `d` lower and `d` upper corner
    /// coordinates, then all values; every number little-endian, reals as f64.
    pub fn write_raw(&self, w: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        let d = g.dim();
        w.write_all(RAW_MAGIC)?;
        w.write_all(&(d as u32).to_le_bytes())?;
        for a in 0..d {
            w.write_all(&(g.shape()[a] as u64).to_le_bytes())?;
        }
        w.write_all(&g.spacing().to_le_bytes())?;
        for a in 0..d {
            w.write_all(&g.window().lo[a].to_le_bytes())?;
        }
        for a in 0..d {
            w.write_all(&g.window().hi[a].to_le_bytes())?;
        }
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_raw(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != RAW_MAGIC {
            return Err(Error::domain("not a raw scalar field (bad magic)"));
        }
        let d = read_u32(r)? as usize;
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::domain(format!("raw field has unsupported dimension {d}")));
        }
        let mut shape = [1u64; MAX_DIM];
        for s in shape.iter_mut().take(d) {
            *s = read_u64(r)?;
        }
        let h = read_f64(r)?;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for v in lo.iter_mut().chain(hi.iter_mut()) {
            *v = read_f64(r)?;
        }
        let grid = Grid::new(Window::new(&lo, &hi)?, h)?;
        if (0..d).any(|a| grid.shape()[a] as u64 != shape[a]) {
            return Err(Error::domain("raw field header is inconsistent with its window"));
        }
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            values.push(read_f64(r)?);
        }
        ScalarField::from_values(grid, values)
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_raw(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load_raw(path: &Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_raw(&mut f)
    }
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}
