use crate::error::{Error, Result};
use crate::particle::InitialCondition;

use super::grid::Grid2D;

/// Cell-averaged density on a [`Grid2D`], stored with `v` varying fastest
/// (flat index `j * n_v + i`).
#[derive(Clone, Debug, PartialEq)]
pub struct Density {
    pub mu: Vec<f64>,
    pub t: f64,
}

impl Density {
    pub fn zeros(g: &Grid2D) -> Self {
        Self {
            mu: vec![0.0; g.len()],
            t: 0.0,
        }
    }

    /// `sum mu dv dw`.
    pub fn mass(&self, g: &Grid2D) -> f64 {
        self.mu.iter().sum::<f64>() * g.cell_area()
    }

    pub fn min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `dv dw sum |a - b|`.
    pub fn l1_distance(&self, other: &Density, g: &Grid2D) -> f64 {
        self.mu
            .iter()
            .zip(&other.mu)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * g.cell_area()
    }

    pub fn at(&self, g: &Grid2D, i: usize, j: usize) -> f64 {
        self.mu[g.index(i, j)]
    }
}

/// Fraction of the initial mass that must fall inside the box.
pub const MIN_INITIAL_MASS: f64 = 0.999;

/// Samples `ic` at the cell centres and renormalises to unit mass.
///
/// A point mass goes entirely into the cell containing it.
pub fn discretize_initial(ic: &InitialCondition, g: &Grid2D) -> Result<Density> {
    ic.validate()?;
    let mut d = Density::zeros(g);
    match *ic {
        InitialCondition::PointMass { v0, w0 } => {
            let (i, j) = g
                .locate(v0, w0)
                .ok_or(Error::MassOutsideDomain { outside: 1.0 })?;
            d.mu[g.index(i, j)] = 1.0 / g.cell_area();
        }
        InitialCondition::Gaussian { .. } => {
            for j in 0..g.n_w {
                let w = g.w(j);
                for i in 0..g.n_v {
                    d.mu[g.index(i, j)] = ic.density(g.v(i), w).unwrap_or(0.0);
                }
            }
            let mass = d.mass(g);
            if !(mass >= MIN_INITIAL_MASS) {
                return Err(Error::MassOutsideDomain { outside: 1.0 - mass });
            }
            for x in &mut d.mu {
                *x /= mass;
            }
        }
    }
    Ok(d)
}
