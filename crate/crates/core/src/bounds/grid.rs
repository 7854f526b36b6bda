use rayon::prelude::*;

use crate::boxset::BoxSet;
use crate::error::{Error, Result};

/// Uniform grid on a box with `resolution[i]` points on axis `i`; a single
/// point sits at the axis midpoint.
#[derive(Debug, Clone)]
pub struct Grid<'a> {
    pub bounds: &'a BoxSet,
    pub resolution: &'a [usize],
}

impl<'a> Grid<'a> {
    pub fn new(bounds: &'a BoxSet, resolution: &'a [usize]) -> Result<Self> {
        if resolution.len() != bounds.dim() {
            return Err(Error::config(format!(
                "grid resolution has {} axes, box has {}",
                resolution.len(),
                bounds.dim()
            )));
        }
        if resolution.contains(&0) {
            return Err(Error::config("grid resolution must be at least 1 per axis"));
        }
        Ok(Grid { bounds, resolution })
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-axis distance between neighbouring points (the full width for a
    /// single point).
    pub fn spacing(&self) -> Vec<f64> {
        self.bounds
            .widths()
            .zip(self.resolution)
            .map(|(w, &r)| if r > 1 { w / (r - 1) as f64 } else { w })
            .collect()
    }

    /// Point with linear index `idx`, first axis fastest.
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.resolution.len());
        for (a, &r) in self.resolution.iter().enumerate() {
            let k = idx % r;
            idx /= r;
            let (lo, hi) = (self.bounds.lower[a], self.bounds.upper[a]);
            x.push(if r == 1 {
                0.5 * (lo + hi)
            } else if k == r - 1 {
                hi
            } else {
                lo + k as f64 * (hi - lo) / (r - 1) as f64
            });
        }
        x
    }

    /// Maximum of `f` over the grid; ties go to the lowest index.
    pub fn maximize<F>(&self, f: F) -> Result<(f64, Vec<f64>)>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let (value, idx) = (0..self.len())
            .into_par_iter()
            .map(|i| match f(&self.point(i))? {
                v if v.is_nan() => Err(Error::numerical("objective is NaN on the grid")),
                v => Ok((v, i)),
            })
            .try_reduce(
                || (f64::NEG_INFINITY, usize::MAX),
                |a, b| {
                    Ok(if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                        b
                    } else {
                        a
                    })
                },
            )?;
        if idx == usize::MAX {
            return Err(Error::config("empty grid"));
        }
        Ok((value, self.point(idx)))
    }
}

/// Compass search for a larger value of `f` inside the box, starting at `x`
/// with per-axis steps `step`. Returns the best value and point found.
pub fn refine_max<F>(
    bounds: &BoxSet,
    x: Vec<f64>,
    value: f64,
    step: &[f64],
    f: F,
) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut best = (value, x);
    let mut step = step.to_vec();
    let floor: Vec<f64> = step.iter().map(|s| s * 1e-4).collect();
    for _ in 0..400 {
        let mut improved = false;
        for a in 0..step.len() {
            for sign in [1.0, -1.0] {
                let mut trial = best.1.clone();
                trial[a] += sign * step[a];
                bounds.project(&mut trial);
                if trial[a] == best.1[a] {
                    continue;
                }
                let v = f(&trial)?;
                if v > best.0 {
                    best = (v, trial);
                    improved = true;
                }
            }
        }
        if !improved {
            for s in step.iter_mut() {
                *s *= 0.5;
            }
            if step.iter().zip(&floor).all(|(s, f)| s < f) {
                break;
            }
        }
    }
    Ok(best)
}
