//! Exact Euclidean distance transform (Felzenszwalb–Huttenlocher lower
//! envelope of parabolas) and morphological dilation of indicator fields.

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

/// Squared distance, in lattice steps, from every node to the nearest node
/// with `mask == true`; infinite when the mask is empty.
pub fn squared_distance_steps(grid: &Grid, mask: &[bool]) -> Vec<f64> {
    let mut d: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { f64::INFINITY }).collect();
    let shape = grid.shape();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for axis in 0..grid.dim() {
        let len = shape[axis];
        let stride = match axis {
            0 => shape[1] * shape[2],
            1 => shape[2],
            _ => 1,
        };
        for start in 0..grid.len() {
            // Only visit line starts: index with zero coordinate on `axis`.
            if grid.multi(start)[axis] != 0 {
                continue;
            }
            line.clear();
            line.extend((0..len).map(|i| d[start + i * stride]));
            transform_line(&line, &mut out);
            for (i, v) in out.iter().enumerate() {
                d[start + i * stride] = *v;
            }
        }
    }
    d
}

fn transform_line(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let mut v: Vec<usize> = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let fq = f[q] + (q * q) as f64;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let fp = f[p] + (p * p) as f64;
                    let s = (fq - fp) / (2.0 * (q as f64 - p as f64));
                    if s <= *z.last().unwrap() {
                        v.pop();
                        z.pop();
                        if v.is_empty() {
                            continue;
                        }
                    } else {
                        v.push(q);
                        z.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        return;
    }
    z.push(f64::INFINITY);
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Closed `r`-neighbourhood of the support of `indicator` (values > 0.5):
/// a node is set iff its Euclidean distance to the support is at most `r`.
pub fn dilate(indicator: &ScalarField, r: f64) -> Result<ScalarField> {
    if r < 0.0 || !r.is_finite() {
        return Err(Error::domain(format!("dilation radius must be finite and >= 0, got {r}")));
    }
    let grid = indicator.grid();
    let mask: Vec<bool> = indicator.values().iter().map(|&v| v > 0.5).collect();
    let steps = r / grid.spacing();
    let limit = steps * steps * (1.0 + 1e-12) + 1e-9;
    let d2 = squared_distance_steps(grid, &mask);
    let values = d2.iter().map(|&d| if d <= limit { 1.0 } else { 0.0 }).collect();
    ScalarField::from_values(grid.clone(), values)
}
