use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ParamError;

const COLUMN_SUM_TOL: f64 = 1e-12;

/// Antisymmetric matrix of interaction rates (1/time).
///
/// Only the strict upper triangle is stored as data; the lower triangle is its
/// mirror, so antisymmetry holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRateMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl InteractionRateMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// Sets `beta[i][j] = rate` and `beta[j][i] = -rate`.
    pub fn set(&mut self, i: usize, j: usize, rate: f64) {
        assert_ne!(i, j, "interaction rates have a zero diagonal");
        self.entries[i * self.n + j] = rate;
        self.entries[j * self.n + i] = -rate;
    }

    /// Builds from full rows, taking the upper triangle as authoritative after
    /// checking that the rows are antisymmetric.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ParamError> {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ParamError::InvalidMatrix(format!(
                    "interaction row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ParamError::InvalidMatrix(format!(
                    "interaction row {i} has a non-finite entry"
                )));
            }
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(ParamError::InvalidMatrix(format!(
                    "interaction diagonal entry {i} is nonzero"
                )));
            }
            for j in i + 1..n {
                let (a, b) = (rows[i][j], rows[j][i]);
                if (a + b).abs() > COLUMN_SUM_TOL * a.abs().max(b.abs()).max(1.0) {
                    return Err(ParamError::InvalidMatrix(format!(
                        "interaction matrix not antisymmetric at ({i}, {j})"
                    )));
                }
                m.set(i, j, a);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// `B . f`
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        mat_vec(self.n, &self.entries, f)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    pub fn is_antisymmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.get(i, i) == 0.0 && (i + 1..self.n).all(|j| self.get(i, j) == -self.get(j, i))
        })
    }

    /// Reorders categories: entry `(i, j)` of the result is entry
    /// `(perm[i], perm[j])` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in i + 1..self.n {
                m.set(i, j, self.get(perm[i], perm[j]));
            }
        }
        m
    }
}

/// Rotation-rate matrix: entry `(to, from)` is the rate at which wealth of
/// `from` rotates into `to`; every column sums to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationRateMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl RotationRateMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            entries: vec![0.0; n * n],
        }
    }

    /// From `(from, to, rate)` triples. Repeated channels accumulate.
    pub fn from_rates(
        n: usize,
        rates: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, ParamError> {
        let mut m = Self::zeros(n);
        for (from, to, rate) in rates {
            if from == to {
                return Err(ParamError::InvalidMatrix(format!(
                    "rotation channel {from} -> {to} is a self loop"
                )));
            }
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(ParamError::NegativeRotationRate { from, to, rate });
            }
            m.entries[to * n + from] += rate;
        }
        m.restore_diagonal();
        Ok(m)
    }

    /// From full rows (`rows[to][from]`); the diagonal is recomputed after the
    /// column sums are checked.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ParamError> {
        let n = rows.len();
        let mut triples = Vec::new();
        for (to, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(ParamError::InvalidMatrix(format!(
                    "rotation row {to} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (from, &v) in row.iter().enumerate() {
                if from != to && v != 0.0 {
                    triples.push((from, to, v));
                }
            }
        }
        let m = Self::from_rates(n, triples)?;
        for col in 0..n {
            let sum: f64 = rows.iter().map(|r| r[col]).sum();
            let scale = rows.iter().map(|r| r[col].abs()).fold(1.0, f64::max);
            if sum.abs() > 1e-9 * scale {
                return Err(ParamError::InvalidMatrix(format!(
                    "rotation column {col} sums to {sum}, expected 0"
                )));
            }
        }
        Ok(m)
    }

    /// Accepts arbitrary zero-column-sum entries, including negative
    /// off-diagonals. Used to probe stability of non-physical systems.
    pub fn from_entries_unchecked(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        Self {
            n,
            entries: rows.iter().flat_map(|r| r.iter().copied()).collect(),
        }
    }

    fn restore_diagonal(&mut self) {
        let n = self.n;
        for col in 0..n {
            let out: f64 = (0..n)
                .filter(|&row| row != col)
                .map(|row| self.entries[row * n + col])
                .sum();
            self.entries[col * n + col] = -out;
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    /// Rate of rotation `from -> to`.
    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.get(to, from)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n.max(1)).map(<[f64]>::to_vec).collect()
    }

    /// `Gamma . f`
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        mat_vec(self.n, &self.entries, f)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs_column_sum(&self) -> f64 {
        (0..self.n)
            .map(|c| (0..self.n).map(|r| self.get(r, c)).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    pub fn min_off_diagonal(&self) -> f64 {
        let mut min = f64::INFINITY;
        for r in 0..self.n {
            for c in 0..self.n {
                if r != c {
                    min = min.min(self.get(r, c));
                }
            }
        }
        min
    }

    /// Largest total outflow rate of any column.
    pub fn max_outflow(&self) -> f64 {
        (0..self.n).map(|c| -self.get(c, c)).fold(0.0, f64::max)
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for r in 0..n {
            for c in 0..n {
                entries[r * n + c] = self.get(perm[r], perm[c]);
            }
        }
        Self { n, entries }
    }
}

fn mat_vec(n: usize, entries: &[f64], f: &[f64]) -> Vec<f64> {
    assert_eq!(f.len(), n, "dimension mismatch");
    entries
        .chunks(n.max(1))
        .take(n)
        .map(|row| row.iter().zip(f).map(|(a, b)| a * b).sum())
        .collect()
}

/// Gross rotation matrix `mu[from][to]` to a rotation-rate matrix.
pub fn gamma_static(mu: &[Vec<f64>]) -> Result<RotationRateMatrix, ParamError> {
    let n = mu.len();
    let mut triples = Vec::new();
    for (from, row) in mu.iter().enumerate() {
        if row.len() != n {
            return Err(ParamError::InvalidMatrix(format!(
                "mu row {from} has {} entries, expected {n}",
                row.len()
            )));
        }
        for (to, &rate) in row.iter().enumerate() {
            if from != to {
                triples.push((from, to, rate));
            }
        }
    }
    RotationRateMatrix::from_rates(n, triples)
}

impl Serialize for InteractionRateMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for InteractionRateMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

impl Serialize for RotationRateMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RotationRateMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_from_single_rotation() {
        let g = gamma_static(&[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap();
        assert_eq!(g.rows(), vec![vec![-0.1, 0.0], vec![0.1, 0.0]]);
        assert_eq!(g.apply(&[50.0, 50.0]), vec![-5.0, 5.0]);
    }

    #[test]
    fn gamma_zero_and_negative() {
        let z = gamma_static(&[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]).unwrap();
        assert!(z.is_zero());
        let err = gamma_static(&[vec![0.0, -0.5], vec![0.0, 0.0]]).unwrap_err();
        assert!(matches!(err, ParamError::NegativeRotationRate { from: 0, to: 1, .. }));
    }

    #[test]
    fn beta_mirrors() {
        let mut b = InteractionRateMatrix::zeros(3);
        b.set(0, 2, 0.25);
        assert_eq!(b.get(2, 0), -0.25);
        assert!(b.is_antisymmetric());
        assert!(InteractionRateMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let g = gamma_static(&[vec![0.0, 0.2, 0.1], vec![0.05, 0.0, 0.0], vec![0.0, 0.3, 0.0]])
            .unwrap();
        let text = serde_json::to_string(&g).unwrap();
        let back: RotationRateMatrix = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        let bad = "[[0.0, 0.5], [0.1, 0.0]]";
        assert!(serde_json::from_str::<RotationRateMatrix>(bad).is_err());
    }
}
