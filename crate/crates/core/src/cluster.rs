//! Cluster graphs, cluster states, stabilizers and the cluster Hamiltonian.
//!
//! Sites are numbered from 1, matching the usual figures of measurement
//! patterns.

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::linalg::{c64, CMatrix, CVector, HermitianOperator, Pauli, PauliString, PureState};

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ClusterGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl ClusterGraph {
    /// Builds a graph on sites `1..=n`. Edges may be given in either
    /// orientation; they are stored as sorted `(i, j)` with `i < j`.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return invalid("graph needs at least one site");
        }
        if n > 24 {
            return invalid(format!("{n} sites exceed the dense-simulation limit of 24"));
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a == b {
                return invalid(format!("self-loop on site {a}"));
            }
            if a == 0 || b == 0 || a > n || b > n {
                return invalid(format!("edge {a}-{b} out of range 1..={n}"));
            }
            list.push((a.min(b), a.max(b)));
        }
        list.sort_unstable();
        let before = list.len();
        list.dedup();
        if list.len() != before {
            return invalid("duplicate edge");
        }
        Ok(Self { n, edges: list })
    }

    pub fn linear_chain(n: usize) -> Result<Self> {
        Self::new(n, (1..n).map(|i| (i, i + 1)))
    }

    /// Two rows of `k` sites: top row `1..=k`, bottom row `k+1..=2k`, with a
    /// rung between sites `i` and `k+i`.
    pub fn ladder(k: usize) -> Result<Self> {
        let top = (1..k).map(|i| (i, i + 1));
        let bottom = (1..k).map(move |i| (k + i, k + i + 1));
        let rungs = (1..=k).map(move |i| (i, k + i));
        Self::new(2 * k, top.chain(bottom).chain(rungs))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn neighbors(&self, site: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == site {
                    Some(b)
                } else if b == site {
                    Some(a)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    // Bit mask of `site` inside a basis index (site 1 is the top bit).
    pub(crate) fn site_mask(&self, site: usize) -> usize {
        1 << (self.n - site)
    }

    pub fn cluster_state(&self) -> PureState {
        cluster_state(self)
    }
}

/// Parses the literal `n=5; edges=1-2,2-3,3-4,4-5`.
impl FromStr for ClusterGraph {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for part in text.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let Some((key, value)) = part.split_once('=') else {
                return invalid(format!("graph literal part `{part}` lacks `=`"));
            };
            match key.trim() {
                "n" => {
                    n = Some(value.trim().parse::<usize>().map_err(|_| {
                        Error::InvalidInput(format!("graph size `{}` is not an integer", value.trim()))
                    })?)
                }
                "edges" => {
                    for e in value.split(',').map(str::trim).filter(|e| !e.is_empty()) {
                        let parsed = e
                            .split_once('-')
                            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
                        match parsed {
                            Some(pair) => edges.push(pair),
                            None => return invalid(format!("edge `{e}` is not of the form i-j")),
                        }
                    }
                }
                other => return invalid(format!("unknown graph key `{other}`")),
            }
        }
        let Some(n) = n else {
            return invalid("graph literal needs `n=`");
        };
        ClusterGraph::new(n, edges)
    }
}

impl fmt::Display for ClusterGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}; edges=", self.n)?;
        for (k, (a, b)) in self.edges.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}-{b}")?;
        }
        Ok(())
    }
}

/// `∏ CZ_ij |+⟩^{⊗n}` over the graph edges.
pub fn cluster_state(g: &ClusterGraph) -> PureState {
    let dim = g.dim();
    let amp = 1.0 / (dim as f64).sqrt();
    let masks: Vec<usize> = g.edges.iter().map(|&(a, b)| g.site_mask(a) | g.site_mask(b)).collect();
    let amps = CVector::from_fn(dim, |b, _| {
        let flips = masks.iter().filter(|&&m| b & m == m).count();
        c64(if flips % 2 == 0 { amp } else { -amp }, 0.0)
    });
    PureState::from_vector_unchecked(amps)
}

/// `K_i = X_i ∏_{j ∈ N(i)} Z_j`.
pub fn stabilizer(g: &ClusterGraph, site: usize) -> Result<PauliString> {
    if site == 0 || site > g.n {
        return invalid(format!("site {site} out of range 1..={}", g.n));
    }
    let mut s = PauliString::single(g.n, site, Pauli::X);
    for j in g.neighbors(site) {
        s = s.mul(&PauliString::single(g.n, j, Pauli::Z));
    }
    Ok(s)
}

pub fn stabilizers(g: &ClusterGraph) -> Vec<PauliString> {
    (1..=g.n).map(|i| stabilizer(g, i).expect("site in range")).collect()
}

/// `H = -J Σ_i K_i` as a dense matrix.
pub fn cluster_hamiltonian(g: &ClusterGraph, j: f64) -> Result<HermitianOperator> {
    if !(j > 0.0) || !j.is_finite() {
        return invalid(format!("cluster coupling J must be positive, got {j}"));
    }
    let dim = g.dim();
    let mut h = CMatrix::zeros(dim, dim);
    for k in stabilizers(g) {
        h -= k.matrix() * c64(j, 0.0);
    }
    Ok(HermitianOperator::from_matrix_unchecked(h))
}
