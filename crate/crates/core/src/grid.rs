//! Barycentric lattices on the simplex, lattice quadrature and the
//! plottable density grid.
//!
//! Quadrature weights come from the regular triangulation of the lattice:
//! every cell has the same volume and contributes the average of its
//! vertex values, so a lattice point is weighted by the number of cells
//! touching it. Supported for `J ∈ {2, 3}`.

use std::io::Write;

use rayon::prelude::*;
use thiserror::Error;

use crate::simplex::{clamp_to_interior, InteriorPmpVector, PmpVector, SimplexError};

#[derive(Debug, Error)]
pub enum GridError {
    #[error("resolution must be at least 1")]
    ZeroResolution,
    #[error("lattice quadrature is implemented for 2 or 3 components, got {0}")]
    UnsupportedParts(usize),
    #[error("density grids are written for 3 components, got {0}")]
    NotTernary(usize),
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("failed to write grid: {0}")]
    Io(#[from] std::io::Error),
}

/// Lattice points `(i_1/R, …, i_J/R)` with `Σ i_j = R`, clamped to the
/// interior.
#[derive(Debug, Clone)]
pub struct SimplexLattice {
    resolution: usize,
    parts: usize,
    points: Vec<InteriorPmpVector>,
    weights: Option<Vec<f64>>,
}

/// Enumerates the lattice in lexicographic order of `(i_1, i_2, …)`.
pub fn barycentric_grid(
    resolution: usize,
    parts: usize,
    epsilon: f64,
) -> Result<SimplexLattice, GridError> {
    if resolution == 0 {
        return Err(GridError::ZeroResolution);
    }
    if parts < 2 {
        return Err(SimplexError::TooFewComponents(parts).into());
    }
    let mut counts = Vec::new();
    let mut current = vec![0usize; parts];
    compositions(resolution, 0, &mut current, &mut counts);

    let r = resolution as f64;
    let points = counts
        .iter()
        .map(|c| {
            let raw: Vec<f64> = c.iter().map(|&i| i as f64 / r).collect();
            let p = PmpVector::new(raw)?;
            clamp_to_interior(&p, epsilon)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let weights = match parts {
        2 => Some(
            counts
                .iter()
                .map(|c| {
                    if c.contains(&0) {
                        0.5 / r
                    } else {
                        1.0 / r
                    }
                })
                .collect(),
        ),
        3 => Some(
            counts
                .iter()
                .map(|c| {
                    let cells = match c.iter().filter(|&&i| i == 0).count() {
                        0 => 6.0,
                        1 => 3.0,
                        _ => 1.0,
                    };
                    // each cell has area 1/(2R²) and gives a third to each vertex
                    cells / (6.0 * r * r)
                })
                .collect(),
        ),
        _ => None,
    };
    Ok(SimplexLattice {
        resolution,
        parts,
        points,
        weights,
    })
}

fn compositions(remaining: usize, slot: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if slot == current.len() - 1 {
        current[slot] = remaining;
        out.push(current.clone());
        return;
    }
    for i in 0..=remaining {
        current[slot] = i;
        compositions(remaining - i, slot + 1, current, out);
    }
}

impl SimplexLattice {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[InteriorPmpVector] {
        &self.points
    }

    pub fn weights(&self) -> Result<&[f64], GridError> {
        self.weights
            .as_deref()
            .ok_or(GridError::UnsupportedParts(self.parts))
    }

    /// `∫ exp(log_density(p)) dp` by lattice quadrature.
    pub fn integrate<F>(&self, log_density: F) -> Result<f64, GridError>
    where
        F: Fn(&InteriorPmpVector) -> f64 + Sync,
    {
        let weights = self.weights()?;
        let values: Vec<f64> = self
            .points
            .par_iter()
            .map(|p| log_density(p).exp())
            .collect();
        Ok(values.iter().zip(weights).map(|(v, w)| v * w).sum())
    }
}

/// Log-density values on a barycentric lattice.
#[derive(Debug, Clone)]
pub struct SimplexDensityGrid {
    resolution: usize,
    points: Vec<PmpVector>,
    log_density: Vec<f64>,
    weights: Option<Vec<f64>>,
}

impl SimplexDensityGrid {
    /// Evaluates `log_density` at every lattice point; evaluation runs in
    /// parallel with output in lattice order.
    pub fn evaluate<F>(lattice: &SimplexLattice, log_density: F) -> Self
    where
        F: Fn(&InteriorPmpVector) -> f64 + Sync,
    {
        let log_density = lattice.points.par_iter().map(&log_density).collect();
        SimplexDensityGrid {
            resolution: lattice.resolution,
            points: lattice.points.iter().map(|p| p.to_pmp()).collect(),
            log_density,
            weights: lattice.weights.clone(),
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn points(&self) -> &[PmpVector] {
        &self.points
    }

    pub fn log_density(&self) -> &[f64] {
        &self.log_density
    }

    /// Quadrature estimate of the total mass.
    pub fn integral(&self) -> Result<f64, GridError> {
        self.mass_where(|_| true)
    }

    /// Quadrature estimate of the mass of `{p : region(p)}`.
    pub fn mass_where<F: Fn(&PmpVector) -> bool>(&self, region: F) -> Result<f64, GridError> {
        let parts = self.points.first().map_or(0, PmpVector::parts);
        let weights = self
            .weights
            .as_deref()
            .ok_or(GridError::UnsupportedParts(parts))?;
        Ok(self
            .points
            .iter()
            .zip(&self.log_density)
            .zip(weights)
            .filter(|((p, _), _)| region(p))
            .map(|((_, ld), w)| ld.exp() * w)
            .sum())
    }

    /// Index of the lattice point with the highest density.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.log_density.iter().enumerate() {
            if *v > self.log_density[best] {
                best = i;
            }
        }
        best
    }

    /// Writes `p1,p2,p3,log_density`, one row per lattice point, using
    /// shortest round-trip decimal formatting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), GridError> {
        if let Some(p) = self.points.first() {
            if p.parts() != 3 {
                return Err(GridError::NotTernary(p.parts()));
            }
        }
        writeln!(out, "p1,p2,p3,log_density")?;
        for (p, ld) in self.points.iter().zip(&self.log_density) {
            let s = p.as_slice();
            writeln!(out, "{},{},{},{}", s[0], s[1], s[2], ld)?;
        }
        out.flush()?;
        Ok(())
    }
}
