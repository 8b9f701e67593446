//! Rate matrices that make a prescribed wealth vector stationary.
//!
//! For a fixed target `F*` the stationarity defect
//! `d = (1/M) F* . (B F*) + Gamma F*` is linear in the entries of `B` and
//! `Gamma`, so the solve is a linear least-squares problem over the free
//! entries, with nonnegativity on free rotation rates handled by an active-set
//! loop.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::macro_dynamics::{rate_of_change, simulate_constant, MacroError};
use crate::parametrization::{InteractionRateMatrix, ParamError, RotationRateMatrix};
use crate::taxonomy::{TokenomicTaxonomy, WealthVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InverseError {
    #[error("free entries cannot cancel the defect: best residual {residual} exceeds {tolerance}")]
    InfeasibleStructure { residual: f64, tolerance: f64 },
    #[error("active-set solve did not finish in {0} iterations")]
    MaxIterations(usize),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Macro(#[from] MacroError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Entry {
    Free,
    #[default]
    Zero,
    Fixed(f64),
}

/// Which entries of `B` (upper triangle, `beta[i][j]` with `i < j`) and of
/// `Gamma` (`gamma[to][from]`, off-diagonal) are solved for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureMask {
    pub beta: Vec<Vec<Entry>>,
    pub gamma: Vec<Vec<Entry>>,
}

impl StructureMask {
    pub fn uniform(n: usize, beta: Entry, gamma: Entry) -> Self {
        Self {
            beta: vec![vec![beta; n]; n],
            gamma: vec![vec![gamma; n]; n],
        }
    }

    /// Free entries for declared interaction pairs and rotation channels,
    /// zero elsewhere.
    pub fn from_taxonomy(taxonomy: &TokenomicTaxonomy) -> Self {
        let n = taxonomy.len();
        let mut mask = Self::uniform(n, Entry::Zero, Entry::Zero);
        for it in taxonomy.interactions() {
            let (a, b) = it.pair();
            mask.beta[a][b] = Entry::Free;
        }
        for &(from, to) in taxonomy.rotations() {
            mask.gamma[to][from] = Entry::Free;
        }
        mask
    }

    /// Holds every rotation rate at the given matrix.
    pub fn fix_gamma(mut self, gamma: &RotationRateMatrix) -> Self {
        let n = gamma.dim();
        for to in 0..n {
            for from in 0..n {
                if to != from {
                    let v = gamma.get(to, from);
                    self.gamma[to][from] = if v == 0.0 { Entry::Zero } else { Entry::Fixed(v) };
                }
            }
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseProblem {
    pub target: WealthVector,
    pub supply: f64,
    pub mask: StructureMask,
    /// Ridge weight on the free entries. Zero selects the minimum-norm
    /// least-squares solution.
    #[serde(default)]
    pub regularization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverseSolution {
    pub beta: InteractionRateMatrix,
    pub gamma: RotationRateMatrix,
    pub residual_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
enum Param {
    Beta(usize, usize),
    Gamma { to: usize, from: usize },
}

/// Tolerance on the defect norm, relative to `M`.
pub const RESIDUAL_TOL: f64 = 1e-8;

impl InverseProblem {
    pub fn validate(&self) -> Result<(), InverseError> {
        let n = self.target.len();
        let bad = |m: String| Err(InverseError::InvalidProblem(m));
        if n < 2 {
            return bad("need at least 2 categories".into());
        }
        if self.mask.beta.len() != n
            || self.mask.gamma.len() != n
            || self.mask.beta.iter().chain(&self.mask.gamma).any(|r| r.len() != n)
        {
            return bad(format!("structure mask must be {n}x{n}"));
        }
        if !(self.supply > 0.0) {
            return bad("supply must be positive".into());
        }
        if self.target.validate().is_err() {
            return bad("target wealth must be finite and nonnegative".into());
        }
        let total = self.target.total();
        if (total - self.supply).abs() > 1e-9 * self.supply {
            return bad(format!("target sums to {total}, supply is {}", self.supply));
        }
        if !(self.regularization >= 0.0) {
            return bad("regularization must be nonnegative".into());
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.mask.beta[i][j] == Entry::Free && (self.target[i] == 0.0 || self.target[j] == 0.0) {
                    return bad(format!(
                        "free interaction ({i}, {j}) has a zero-wealth endpoint"
                    ));
                }
            }
            for from in 0..n {
                if let Entry::Fixed(v) = self.mask.gamma[i][from] {
                    if i != from && v < 0.0 {
                        return Err(ParamError::NegativeRotationRate { from, to: i, rate: v }.into());
                    }
                }
            }
        }
        Ok(())
    }

    fn params(&self) -> Vec<Param> {
        let n = self.target.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.mask.beta[i][j] == Entry::Free {
                    out.push(Param::Beta(i, j));
                }
            }
        }
        for to in 0..n {
            for from in 0..n {
                if to != from && self.mask.gamma[to][from] == Entry::Free {
                    out.push(Param::Gamma { to, from });
                }
            }
        }
        out
    }

    /// Matrices with fixed entries set and free entries at `x`.
    fn assemble(&self, params: &[Param], x: &[f64]) -> Result<(InteractionRateMatrix, RotationRateMatrix), InverseError> {
        let n = self.target.len();
        let mut beta = InteractionRateMatrix::zeros(n);
        let mut rates = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if let Entry::Fixed(v) = self.mask.beta[i][j] {
                    beta.set(i, j, v);
                }
            }
            for from in 0..n {
                if let Entry::Fixed(v) = self.mask.gamma[i][from] {
                    if i != from {
                        rates.push((from, i, v));
                    }
                }
            }
        }
        for (p, &v) in params.iter().zip(x) {
            match *p {
                Param::Beta(i, j) => beta.set(i, j, v),
                Param::Gamma { to, from } => rates.push((from, to, v)),
            }
        }
        Ok((beta, RotationRateMatrix::from_rates(n, rates)?))
    }

    /// Column of the defect Jacobian for one free entry.
    fn column(&self, p: Param) -> Vec<f64> {
        let f = &self.target.values;
        let mut c = vec![0.0; f.len()];
        match p {
            Param::Beta(i, j) => {
                let v = f[i] * f[j] / self.supply;
                c[i] = v;
                c[j] = -v;
            }
            Param::Gamma { to, from } => {
                c[to] = f[from];
                c[from] = -f[from];
            }
        }
        c
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const SVD_EPS: f64 = 1e-14;
const SVD_MAX_ITER: usize = 10_000;

/// Minimum-norm least-squares solution of `a x = b` restricted to the
/// columns in `cols`; other entries are zero.
fn min_norm_ls(a: &DMatrix<f64>, b: &DVector<f64>, cols: &[usize], ridge: f64) -> DVector<f64> {
    let p = a.ncols();
    let mut x = DVector::zeros(p);
    if cols.is_empty() {
        return x;
    }
    let rows = a.nrows();
    let extra = if ridge > 0.0 { cols.len() } else { 0 };
    let mut sub = DMatrix::zeros(rows + extra, cols.len());
    let mut rhs = DVector::zeros(rows + extra);
    for (k, &c) in cols.iter().enumerate() {
        sub.view_mut((0, k), (rows, 1)).copy_from(&a.column(c));
        if ridge > 0.0 {
            sub[(rows + k, k)] = ridge.sqrt();
        }
    }
    rhs.rows_mut(0, rows).copy_from(b);
    // The default convergence threshold (machine epsilon) can stop on an
    // inaccurate decomposition of rank-deficient matrices.
    let svd = sub
        .clone()
        .try_svd(true, true, SVD_EPS, SVD_MAX_ITER)
        .unwrap_or_else(|| sub.svd(true, true));
    let smax = svd.singular_values.max();
    let z = svd
        .solve(&rhs, smax * 1e-12)
        .expect("singular vectors computed");
    for (k, &c) in cols.iter().enumerate() {
        x[c] = z[k];
    }
    x
}

/// Solves for the free entries. `converged` reports whether the defect norm
/// is below `1e-8 M`.
pub fn solve_equilibrium_rates(problem: &InverseProblem) -> Result<InverseSolution, InverseError> {
    problem.validate()?;
    let n = problem.target.len();
    let params = problem.params();
    let p = params.len();
    let tolerance = RESIDUAL_TOL * problem.supply;

    let (beta0, gamma0) = problem.assemble(&params, &vec![0.0; p])?;
    let d_fixed = rate_of_change(&problem.target.values, &beta0, &gamma0, problem.supply);
    let b = DVector::from_iterator(n, d_fixed.iter().map(|v| -v));
    let mut a = DMatrix::zeros(n, p);
    for (k, &prm) in params.iter().enumerate() {
        a.set_column(k, &DVector::from_vec(problem.column(prm)));
    }
    let ridge = problem.regularization;

    let constrained: Vec<bool> = params
        .iter()
        .map(|p| matches!(p, Param::Gamma { .. }))
        .collect();
    let unconstrained: Vec<usize> = (0..p).filter(|&k| !constrained[k]).collect();

    let residual_of = |x: &DVector<f64>| (&a * x - &b).norm();

    // Unconstrained optimum tells infeasible structure apart from an active
    // nonnegativity bound.
    let all: Vec<usize> = (0..p).collect();
    let x_free = min_norm_ls(&a, &b, &all, 0.0);
    let best = residual_of(&x_free);
    if best >= tolerance {
        return Err(InverseError::InfeasibleStructure {
            residual: best,
            tolerance,
        });
    }

    let x = active_set(&a, &b, &unconstrained, &constrained, ridge)?;
    let (beta, gamma) = problem.assemble(&params, x.as_slice())?;
    let residual_norm = norm(&rate_of_change(&problem.target.values, &beta, &gamma, problem.supply));
    Ok(InverseSolution {
        beta,
        gamma,
        residual_norm,
        converged: residual_norm < tolerance,
    })
}

/// Lawson-Hanson active set with some columns left unconstrained.
fn active_set(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    unconstrained: &[usize],
    constrained: &[bool],
    ridge: f64,
) -> Result<DVector<f64>, InverseError> {
    let p = a.ncols();
    let scale = a.norm().max(1.0) * b.norm().max(1.0);
    let grad_tol = 1e-12 * scale;
    let mut passive: Vec<usize> = unconstrained.to_vec();
    let mut x = min_norm_ls(a, b, &passive, ridge);
    let max_iter = 3 * p + 10;
    for _ in 0..max_iter {
        let mut w = a.transpose() * (b - a * &x);
        if ridge > 0.0 {
            w -= &x * ridge;
        }
        let candidate = (0..p)
            .filter(|&k| constrained[k] && !passive.contains(&k))
            .max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let j = match candidate {
            Some(j) if w[j] > grad_tol => j,
            _ => return Ok(x),
        };
        passive.push(j);
        passive.sort_unstable();
        loop {
            let z = min_norm_ls(a, b, &passive, ridge);
            let blocked: Vec<usize> = passive
                .iter()
                .copied()
                .filter(|&k| constrained[k] && z[k] <= 0.0)
                .collect();
            if blocked.is_empty() {
                x = z;
                break;
            }
            let alpha = blocked
                .iter()
                .map(|&k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min)
                .clamp(0.0, 1.0);
            x += (&z - &x) * alpha;
            passive.retain(|&k| !(constrained[k] && x[k] <= 1e-15 * (1.0 + x.amax())));
            for k in 0..p {
                if constrained[k] && !passive.contains(&k) {
                    x[k] = 0.0;
                }
            }
        }
    }
    Err(InverseError::MaxIterations(max_iter))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attractivity {
    Attracting,
    Neutral,
    Repelling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `|F - F*|_1 / M` at the start and the end.
    pub initial_distance: f64,
    pub final_distance: f64,
    /// Distance every `horizon / 20` steps.
    pub distances: Vec<f64>,
    pub verdict: Attractivity,
    /// Set when the perturbed run left the nonnegative orthant.
    pub diverged: bool,
}

/// Target perturbed by alternating `+/- relative` per category, rescaled to
/// keep the total.
pub fn perturb(target: &WealthVector, relative: f64) -> WealthVector {
    let mut v: Vec<f64> = target
        .values
        .iter()
        .enumerate()
        .map(|(i, f)| f * if i % 2 == 0 { 1.0 + relative } else { 1.0 - relative })
        .collect();
    let scale = target.total() / v.iter().sum::<f64>();
    v.iter_mut().for_each(|x| *x *= scale);
    WealthVector::new(v, 0)
}

/// Forward run from a perturbed target with the solved rates held constant.
pub fn verify_solution(
    solution: &InverseSolution,
    problem: &InverseProblem,
    perturbation: f64,
    horizon: usize,
    dt: f64,
) -> Result<VerificationReport, InverseError> {
    let m = problem.supply;
    let target = &problem.target.values;
    let distance = |f: &[f64]| f.iter().zip(target).map(|(a, b)| (a - b).abs()).sum::<f64>() / m;
    let start = perturb(&problem.target, perturbation);
    let initial_distance = distance(&start.values);
    let every = (horizon / 20).max(1);
    let (distances, final_distance, diverged) =
        match simulate_constant(&start, &solution.beta, &solution.gamma, horizon, dt) {
            Ok(tr) => {
                let d: Vec<f64> = tr.states.iter().step_by(every).map(|s| distance(&s.f.values)).collect();
                (d, distance(&tr.last().f.values), false)
            }
            Err(MacroError::NegativeWealth { .. }) => (vec![initial_distance], f64::INFINITY, true),
            Err(e) => return Err(e.into()),
        };
    let ratio = final_distance / initial_distance;
    let verdict = if diverged || ratio > 1.0 + 1e-9 {
        Attractivity::Repelling
    } else if ratio < 1.0 - 1e-9 {
        Attractivity::Attracting
    } else {
        Attractivity::Neutral
    };
    Ok(VerificationReport {
        initial_distance,
        final_distance,
        distances,
        verdict,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametrization::gamma_static;

    fn wv(v: &[f64]) -> WealthVector {
        WealthVector::new(v.to_vec(), 0)
    }

    #[test]
    fn symmetric_target_gives_zero_beta() {
        let problem = InverseProblem {
            target: wv(&[50.0, 50.0]),
            supply: 100.0,
            mask: StructureMask::uniform(2, Entry::Free, Entry::Zero),
            regularization: 0.0,
        };
        let s = solve_equilibrium_rates(&problem).unwrap();
        assert!(s.beta.is_zero());
        assert!(s.converged);
    }

    #[test]
    fn all_zero_mask_is_stationary_everywhere() {
        let problem = InverseProblem {
            target: wv(&[10.0, 30.0, 60.0]),
            supply: 100.0,
            mask: StructureMask::uniform(3, Entry::Zero, Entry::Zero),
            regularization: 0.0,
        };
        let s = solve_equilibrium_rates(&problem).unwrap();
        assert!(s.beta.is_zero() && s.gamma.is_zero());
        assert_eq!(s.residual_norm, 0.0);
        assert!(s.converged);
        let r = verify_solution(&s, &problem, 0.05, 100, 1.0).unwrap();
        assert_eq!(r.verdict, Attractivity::Neutral);
    }

    #[test]
    fn rotation_fixed_interaction_free() {
        let gamma = gamma_static(&[vec![0.0, 0.1], vec![0.05, 0.0]]).unwrap();
        let problem = InverseProblem {
            target: wv(&[30.0, 70.0]),
            supply: 100.0,
            mask: StructureMask::uniform(2, Entry::Free, Entry::Zero).fix_gamma(&gamma),
            regularization: 0.0,
        };
        let s = solve_equilibrium_rates(&problem).unwrap();
        assert!(s.converged, "residual {}", s.residual_norm);
        // 0 = 0.3 * 70 * beta - 0.1 * 30 + 0.05 * 70
        assert!((s.beta.get(0, 1) - (3.0 - 3.5) / 21.0).abs() < 1e-12);
        assert_eq!(s.gamma, gamma);
    }

    #[test]
    fn infeasible_structure() {
        let gamma = gamma_static(&[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap();
        let problem = InverseProblem {
            target: wv(&[30.0, 70.0]),
            supply: 100.0,
            mask: StructureMask::uniform(2, Entry::Zero, Entry::Zero).fix_gamma(&gamma),
            regularization: 0.0,
        };
        assert!(matches!(
            solve_equilibrium_rates(&problem),
            Err(InverseError::InfeasibleStructure { .. })
        ));
    }

    #[test]
    fn free_rotations_stay_nonnegative() {
        let problem = InverseProblem {
            target: wv(&[20.0, 30.0, 50.0]),
            supply: 100.0,
            mask: StructureMask {
                beta: vec![vec![Entry::Zero; 3]; 3],
                gamma: vec![
                    vec![Entry::Zero, Entry::Fixed(0.2), Entry::Free],
                    vec![Entry::Free, Entry::Zero, Entry::Free],
                    vec![Entry::Free, Entry::Free, Entry::Zero],
                ],
            },
            regularization: 0.0,
        };
        let s = solve_equilibrium_rates(&problem).unwrap();
        assert!(s.converged, "residual {}", s.residual_norm);
        assert!(s.gamma.min_off_diagonal() >= 0.0);
    }
}
