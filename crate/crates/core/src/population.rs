//! The finite-population science table and what an analyst observes of it.

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{CaceError, Result};

/// Compliance type implied by the pair of potential treatment-received values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentGroup {
    AlwaysTaker,
    Complier,
    NeverTaker,
}

impl LatentGroup {
    pub fn from_potential(w0: u8, w1: u8) -> Option<Self> {
        match (w0, w1) {
            (1, 1) => Some(Self::AlwaysTaker),
            (0, 1) => Some(Self::Complier),
            (0, 0) => Some(Self::NeverTaker),
            _ => None,
        }
    }
}

fn check_binary(what: &'static str, v: &[u8]) -> Result<()> {
    match v.iter().position(|&b| b > 1) {
        Some(index) => Err(CaceError::NonBinary {
            what,
            index,
            value: v[index] as i64,
        }),
        None => Ok(()),
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(CaceError::LengthMismatch { what, expected, got })
    }
}

/// Fixed science table: covariates plus both potential treatments received and
/// both potential outcomes for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePopulation {
    x: DMatrix<f64>,
    w0: Vec<u8>,
    w1: Vec<u8>,
    y0: Vec<f64>,
    y1: Vec<f64>,
}

impl FinitePopulation {
    pub fn new(x: DMatrix<f64>, w0: Vec<u8>, w1: Vec<u8>, y0: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        let pop = Self { x, w0, w1, y0, y1 };
        pop.validate()?;
        Ok(pop)
    }

    /// Checks dimensions, binarity and monotonicity (no defiers).
    pub fn validate(&self) -> Result<()> {
        let n = self.x.nrows();
        check_len("w0", n, self.w0.len())?;
        check_len("w1", n, self.w1.len())?;
        check_len("y0", n, self.y0.len())?;
        check_len("y1", n, self.y1.len())?;
        check_binary("w0", &self.w0)?;
        check_binary("w1", &self.w1)?;
        if let Some(unit) = (0..n).find(|&i| self.w1[i] < self.w0[i]) {
            return Err(CaceError::DefierPresent { unit });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn w0(&self) -> &[u8] {
        &self.w0
    }

    pub fn w1(&self) -> &[u8] {
        &self.w1
    }

    pub fn y0(&self) -> &[f64] {
        &self.y0
    }

    pub fn y1(&self) -> &[f64] {
        &self.y1
    }

    pub fn group(&self, i: usize) -> LatentGroup {
        LatentGroup::from_potential(self.w0[i], self.w1[i]).expect("validated at construction")
    }

    pub fn n_compliers(&self) -> usize {
        (0..self.n()).filter(|&i| self.w1[i] > self.w0[i]).count()
    }

    /// Potential outcome actually realized under assignment `z`, `Y_i(z, W_i(z))`.
    pub fn outcome_under(&self, i: usize, z: u8) -> f64 {
        let w = if z == 1 { self.w1[i] } else { self.w0[i] };
        if w == 1 {
            self.y1[i]
        } else {
            self.y0[i]
        }
    }

    /// Sample CACE computed directly as the complier average of `y1 - y0`.
    pub fn sample_cace(&self) -> Result<f64> {
        let (sum, count) = (0..self.n())
            .filter(|&i| self.group(i) == LatentGroup::Complier)
            .fold((0.0, 0usize), |(s, c), i| (s + self.y1[i] - self.y0[i], c + 1));
        if count == 0 {
            return Err(CaceError::NoCompliers);
        }
        Ok(sum / count as f64)
    }

    /// Sample ITT effect on treatment received; equals the complier fraction.
    pub fn true_itt_w(&self) -> f64 {
        let s: i64 = (0..self.n())
            .map(|i| self.w1[i] as i64 - self.w0[i] as i64)
            .sum();
        s as f64 / self.n() as f64
    }

    /// Sample ITT effect on the outcome.
    pub fn true_itt_y(&self) -> f64 {
        (0..self.n())
            .map(|i| self.outcome_under(i, 1) - self.outcome_under(i, 0))
            .sum::<f64>()
            / self.n() as f64
    }

    /// Observed data under assignment `a`.
    pub fn reveal(&self, a: &Assignment) -> Result<ObservedDataset> {
        check_len("assignment", self.n(), a.z.len())?;
        let w_obs: Vec<u8> = a
            .z
            .iter()
            .enumerate()
            .map(|(i, &z)| if z == 1 { self.w1[i] } else { self.w0[i] })
            .collect();
        let y_obs = w_obs
            .iter()
            .enumerate()
            .map(|(i, &w)| if w == 1 { self.y1[i] } else { self.y0[i] })
            .collect();
        ObservedDataset::new(self.x.clone(), a.z.clone(), w_obs, y_obs)
    }

    /// Bitwise fingerprint of the table, used to check that a population stays
    /// fixed across replications.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.x.iter().for_each(|v| v.to_bits().hash(&mut h));
        self.w0.hash(&mut h);
        self.w1.hash(&mut h);
        self.y0.iter().for_each(|v| v.to_bits().hash(&mut h));
        self.y1.iter().for_each(|v| v.to_bits().hash(&mut h));
        h.finish()
    }
}

/// Treatment assignment vector with its treated count.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    z: Vec<u8>,
    n1: usize,
}

impl Assignment {
    pub fn new(z: Vec<u8>) -> Result<Self> {
        check_binary("z", &z)?;
        let n = z.len();
        let n1 = z.iter().filter(|&&v| v == 1).count();
        if n1 == 0 || n1 >= n {
            return Err(CaceError::BadMargins { n, n1 });
        }
        Ok(Self { z, n1 })
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n0(&self) -> usize {
        self.z.len() - self.n1
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.z
    }
}

/// What an analyst sees: covariates, assignment, treatment received, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedDataset {
    x: DMatrix<f64>,
    z: Vec<u8>,
    w_obs: Vec<u8>,
    y_obs: Vec<f64>,
}

impl ObservedDataset {
    pub fn new(x: DMatrix<f64>, z: Vec<u8>, w_obs: Vec<u8>, y_obs: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        check_len("z", n, z.len())?;
        check_len("w_obs", n, w_obs.len())?;
        check_len("y_obs", n, y_obs.len())?;
        check_binary("z", &z)?;
        check_binary("w_obs", &w_obs)?;
        Ok(Self { x, z, w_obs, y_obs })
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z(&self) -> &[u8] {
        &self.z
    }

    pub fn w_obs(&self) -> &[u8] {
        &self.w_obs
    }

    pub fn y_obs(&self) -> &[f64] {
        &self.y_obs
    }

    pub fn n1(&self) -> usize {
        self.z.iter().filter(|&&v| v == 1).count()
    }

    pub fn n0(&self) -> usize {
        self.n() - self.n1()
    }

    /// Indices of units assigned to arm `arm`.
    pub fn arm(&self, arm: u8) -> impl Iterator<Item = usize> + '_ {
        self.z.iter().enumerate().filter(move |(_, &z)| z == arm).map(|(i, _)| i)
    }

    /// Same design and treatment, different outcome vector.
    pub fn with_outcome(&self, y_obs: Vec<f64>) -> Result<Self> {
        Self::new(self.x.clone(), self.z.clone(), self.w_obs.clone(), y_obs)
    }

    /// Same everything, different covariates.
    pub fn with_covariates(&self, x: DMatrix<f64>) -> Result<Self> {
        Self::new(x, self.z.clone(), self.w_obs.clone(), self.y_obs.clone())
    }
}
