//! Finite atomized measure spaces, Poisson point configurations and the
//! Mecke-formula checker.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::stats::{mean_se, par_replicates, Columns};

/// A finite measure space: cells `0..n` with masses `μ_i ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceDoc", into = "SpaceDoc")]
pub struct DiscreteSpace {
    masses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SpaceDoc {
    masses: Vec<f64>,
}

impl TryFrom<SpaceDoc> for DiscreteSpace {
    type Error = Error;
    fn try_from(doc: SpaceDoc) -> Result<Self> {
        DiscreteSpace::new(doc.masses)
    }
}

impl From<DiscreteSpace> for SpaceDoc {
    fn from(s: DiscreteSpace) -> Self {
        SpaceDoc { masses: s.masses }
    }
}

impl DiscreteSpace {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidSpace("at least one cell is required".into()));
        }
        if let Some((i, m)) = masses
            .iter()
            .enumerate()
            .find(|(_, m)| !m.is_finite() || **m < 0.0)
        {
            return Err(Error::InvalidSpace(format!(
                "cell {i} has mass {m}; masses must be finite and nonnegative"
            )));
        }
        Ok(Self { masses })
    }

    /// `n_cells` cells of equal mass.
    pub fn uniform(n_cells: usize, mass: f64) -> Result<Self> {
        Self::new(vec![mass; n_cells])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("space serializes")
    }

    pub fn n_cells(&self) -> usize {
        self.masses.len()
    }

    pub fn mass(&self, cell: usize) -> f64 {
        self.masses[cell]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn check_cell(&self, cell: usize) -> Result<()> {
        if cell < self.n_cells() {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                cell,
                n_cells: self.n_cells(),
            })
        }
    }

    pub fn check_config(&self, config: &PointConfig) -> Result<()> {
        if config.n_cells() == self.n_cells() {
            Ok(())
        } else {
            Err(Error::SpaceMismatch {
                expected: self.n_cells(),
                found: config.n_cells(),
            })
        }
    }

    /// η̂ = η − μ cellwise.
    pub fn compensated(&self, config: &PointConfig) -> Result<CompensatedEval> {
        self.check_config(config)?;
        Ok(CompensatedEval {
            values: config
                .counts
                .iter()
                .zip(&self.masses)
                .map(|(&n, &m)| f64::from(n) - m)
                .collect(),
        })
    }
}

/// One realization of the point process: per-cell point counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointConfig {
    pub(crate) counts: Vec<u32>,
}

impl PointConfig {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn empty(n_cells: usize) -> Self {
        Self {
            counts: vec![0; n_cells],
        }
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn count(&self, cell: usize) -> u32 {
        self.counts[cell]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    fn check_cell(&self, cell: usize) -> Result<()> {
        if cell < self.counts.len() {
            Ok(())
        } else {
            Err(Error::CellOutOfRange {
                cell,
                n_cells: self.counts.len(),
            })
        }
    }

    /// χ + δ_cell.
    pub fn add_point(&self, cell: usize) -> Result<PointConfig> {
        self.check_cell(cell)?;
        Ok(self.plus(cell))
    }

    /// χ − δ_cell; fails when the cell is empty.
    pub fn remove_point(&self, cell: usize) -> Result<PointConfig> {
        self.check_cell(cell)?;
        if self.counts[cell] == 0 {
            return Err(Error::EmptyCell { cell });
        }
        Ok(self.minus(cell))
    }

    pub(crate) fn plus(&self, cell: usize) -> PointConfig {
        let mut c = self.clone();
        c.counts[cell] += 1;
        c
    }

    pub(crate) fn minus(&self, cell: usize) -> PointConfig {
        let mut c = self.clone();
        c.counts[cell] -= 1;
        c
    }
}

/// Compensated counts `η(i) − μ_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompensatedEval {
    pub values: Vec<f64>,
}

/// Draw one Poisson(`mean`) variate; zero for a massless cell.
pub fn poisson_variate<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    d.sample(rng) as u32
}

/// Sample a Poisson configuration; deterministic given `seed`.
pub fn sample_poisson(space: &DiscreteSpace, seed: u64) -> PointConfig {
    let mut rng = <crate::rng::ReplicateRng as rand::SeedableRng>::seed_from_u64(seed);
    sample_poisson_with(space, &mut rng)
}

pub fn sample_poisson_with<R: Rng + ?Sized>(space: &DiscreteSpace, rng: &mut R) -> PointConfig {
    PointConfig {
        counts: space
            .masses
            .iter()
            .map(|&m| poisson_variate(m, rng))
            .collect(),
    }
}

/// Both sides of the Mecke identity with Monte-Carlo standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeckeEstimate {
    /// Estimate of E[Σ_z h(η+δ_z, z) μ(z)].
    pub lhs: f64,
    /// Estimate of E[Σ_{z∈η} h(η, z)].
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    /// Standard error of the paired difference lhs − rhs.
    pub se_diff: f64,
}

impl MeckeEstimate {
    pub fn agrees(&self, k: f64) -> bool {
        (self.lhs - self.rhs).abs() <= k * (self.se_lhs + self.se_rhs)
    }
}

/// Monte-Carlo check of E[∫h(η+δ_z,z)μ(dz)] = E[∫h(η,z)η(dz)].
pub fn mecke_check<H>(space: &DiscreteSpace, h: H, n: usize, seed: u64) -> MeckeEstimate
where
    H: Fn(&PointConfig, usize) -> f64 + Sync + Send,
{
    let tree = SeedTree::new(seed).child("mecke");
    let rows: Vec<[f64; 2]> = par_replicates(n, |i| {
        let config = sample_poisson_with(space, &mut tree.rng(i));
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for z in 0..space.n_cells() {
            let m = space.mass(z);
            if m > 0.0 {
                lhs += h(&config.plus(z), z) * m;
            }
            let c = config.count(z);
            if c > 0 {
                rhs += f64::from(c) * h(&config, z);
            }
        }
        [lhs, rhs]
    });
    let cols = Columns::from_rows(&rows);
    let l = mean_se(cols.col(0));
    let r = mean_se(cols.col(1));
    MeckeEstimate {
        lhs: l.value,
        rhs: r.value,
        se_lhs: l.se,
        se_rhs: r.se,
        se_diff: cols.linear_se(&[1.0, -1.0]),
    }
}
