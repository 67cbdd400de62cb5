//! Turning a real-valued matching matrix into an injective node mapping:
//! iterative greedy maximum selection, and an exact max-weight assignment via
//! the Hungarian algorithm as the reference extraction.

use rayon::prelude::*;

use crate::diffusion::MatchingMatrix;
use crate::edit_path::NodeMapping;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractionMethod {
    Greedy,
    Hungarian,
}

impl ExtractionMethod {
    pub fn extract(&self, m: &MatchingMatrix) -> Result<NodeMapping> {
        match self {
            Self::Greedy => greedy_extract(m),
            Self::Hungarian => hungarian_extract(m),
        }
    }
}

impl std::str::FromStr for ExtractionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Self::Greedy),
            "hungarian" => Ok(Self::Hungarian),
            other => Err(Error::InvalidArgument(format!("unknown extraction method {other:?}"))),
        }
    }
}

fn check_shape(m: &MatchingMatrix) -> Result<()> {
    if m.rows() > m.cols() {
        return Err(Error::Shape(format!(
            "extraction needs rows <= cols, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(())
}

/// Repeatedly selects the globally largest entry, records the pair and
/// invalidates its row and column. Ties break toward the smallest row, then
/// the smallest column. NaN entries are treated as negative infinity.
pub fn greedy_extract(m: &MatchingMatrix) -> Result<NodeMapping> {
    check_shape(m)?;
    let rows = m.rows();
    let cols = m.cols();
    let mut work: Vec<f64> =
        m.data().iter().map(|&x| if x.is_nan() { f64::NEG_INFINITY } else { x }).collect();
    let mut assignment = vec![usize::MAX; rows];
    for _ in 0..rows {
        let mut best: Option<(f64, usize, usize)> = None;
        for r in 0..rows {
            if assignment[r] != usize::MAX {
                continue;
            }
            for c in 0..cols {
                let x = work[r * cols + c];
                // strict > keeps the first (smallest row, column) maximum
                if best.is_none_or(|(bx, _, _)| x > bx) && x > f64::NEG_INFINITY {
                    best = Some((x, r, c));
                }
            }
        }
        let (_, r, c) = best.unwrap_or_else(|| {
            // every remaining entry is invalidated (all-NaN input): fall back
            // to the first free cell to keep the mapping injective
            let r = assignment.iter().position(|&a| a == usize::MAX).unwrap();
            let mut used: Vec<bool> = vec![false; cols];
            for &a in assignment.iter().filter(|&&a| a != usize::MAX) {
                used[a] = true;
            }
            let c = used.iter().position(|&u| !u).unwrap();
            (0.0, r, c)
        });
        assignment[r] = c;
        for cc in 0..cols {
            work[r * cols + cc] = f64::NEG_INFINITY;
        }
        for rr in 0..rows {
            work[rr * cols + c] = f64::NEG_INFINITY;
        }
    }
    NodeMapping::new(assignment, cols)
}

/// Exact maximum-weight injective assignment (rows into columns) via the
/// O(rows^2 * cols) potential-based Hungarian algorithm.
pub fn hungarian_extract(m: &MatchingMatrix) -> Result<NodeMapping> {
    check_shape(m)?;
    let n = m.rows();
    let w = m.cols();
    if n == 0 {
        return NodeMapping::new(vec![], w);
    }
    // Minimize negated weights; sanitize NaN like the greedy path.
    let cost =
        |r: usize, c: usize| -> f64 { with_nan_floor(m.get(r, c)) };

    // 1-based arrays with a virtual column 0.
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; w + 1];
    let mut assigned_row = vec![0usize; w + 1]; // row occupying column (0 = none)
    let mut way = vec![0usize; w + 1];

    for i in 1..=n {
        assigned_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; w + 1];
        let mut used = vec![false; w + 1];
        loop {
            used[j0] = true;
            let i0 = assigned_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=w {
                if used[j] {
                    continue;
                }
                let cur = -cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=w {
                if used[j] {
                    u[assigned_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if assigned_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            assigned_row[j0] = assigned_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![usize::MAX; n];
    for j in 1..=w {
        if assigned_row[j] > 0 {
            assignment[assigned_row[j] - 1] = j - 1;
        }
    }
    NodeMapping::new(assignment, w)
}

fn with_nan_floor(x: f64) -> f64 {
    if x.is_nan() {
        // large negative finite value keeps potentials finite
        -1e30
    } else {
        x
    }
}

/// Total selected weight of a mapping (NaN entries count as the same floor the
/// solvers use).
pub fn mapping_weight(m: &MatchingMatrix, f: &NodeMapping) -> f64 {
    (0..f.len()).map(|r| with_nan_floor(m.get(r, f.get(r)))).sum()
}

/// Extracts one mapping per matrix, in parallel, preserving input order.
pub fn parallel_extract(
    matrices: &[MatchingMatrix],
    method: ExtractionMethod,
) -> Result<Vec<NodeMapping>> {
    matrices.par_iter().map(|m| method.extract(m)).collect()
}
