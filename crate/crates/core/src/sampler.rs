//! Seeded sampling of sparse W-random graphs `G(W, ρₙ, Xₙ)`.
//!
//! Node `i` (0-based) sits at `x = (i+1)/n`, the right end of its cell
//! `((i)/n, (i+1)/n]`. Each unordered pair `{i, j}` with `i <= j`, loops
//! included, is an edge independently of all others.
//!
//! Row `i` draws from its own ChaCha8 stream (key from the master seed,
//! stream id `i`) in increasing column order, so the result does not depend
//! on how rows are scheduled.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{DensitySchedule, GraphonSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

pub fn build_grid(n: usize) -> Result<Grid> {
    if n < 2 {
        return Err(Error::Size(format!("grid needs at least 2 nodes, got {n}")));
    }
    Ok(Grid { n })
}

impl Grid {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Location of node `i` (0-based): `(i+1)/n`.
    pub fn point(&self, i: usize) -> f64 {
        (i + 1) as f64 / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Cell of node `i` as `(left, right)`; left end open.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        (i as f64 / self.n as f64, self.point(i))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeVariant {
    /// `ρ · min(ρ⁻¹, W(xᵢ, xⱼ))`.
    #[default]
    Pointwise,
    /// `ρ · n² ∫∫_{Iᵢ×Iⱼ} W`, clamped to [0, 1].
    CellAveraged,
}

impl fmt::Display for EdgeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeVariant::Pointwise => "pointwise",
            EdgeVariant::CellAveraged => "cell_averaged",
        })
    }
}

impl std::str::FromStr for EdgeVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(EdgeVariant::Pointwise),
            "cell_averaged" => Ok(EdgeVariant::CellAveraged),
            other => Err(Error::Config(format!("unknown edge variant {other:?}"))),
        }
    }
}

/// Truncated kernel entry `p_ij / ρ` for the chosen variant.
///
/// Points and cells are strictly inside `(0,1]`, so evaluation never fails
/// for a validated spec.
pub fn kernel_entry(spec: &GraphonSpec, rho: f64, n: usize, i: usize, j: usize, variant: EdgeVariant) -> f64 {
    let nf = n as f64;
    let cap = rho.recip();
    match variant {
        EdgeVariant::Pointwise => {
            let x = (i + 1) as f64 / nf;
            let y = (j + 1) as f64 / nf;
            spec.eval_w(x, y).map(|w| w.min(cap)).unwrap_or(0.0)
        }
        EdgeVariant::CellAveraged => spec.cell_mean_w(n, i, j).min(cap),
    }
}

fn rho_for(schedule: &DensitySchedule, n: usize) -> Result<f64> {
    schedule.validate()?;
    Ok(schedule.rho(n))
}

pub fn edge_probability(
    spec: &GraphonSpec,
    schedule: &DensitySchedule,
    n: usize,
    i: usize,
    j: usize,
    variant: EdgeVariant,
) -> Result<f64> {
    if i >= n || j >= n {
        return Err(Error::Size(format!("node index ({i}, {j}) out of range for n = {n}")));
    }
    let rho = rho_for(schedule, n)?;
    Ok((rho * kernel_entry(spec, rho, n, i, j, variant)).clamp(0.0, 1.0))
}

/// `Gᵢ = n⁻¹ Σⱼ W̄ₙ(xᵢ, xⱼ)` for the given variant.
pub fn node_weights(spec: &GraphonSpec, rho: f64, n: usize, variant: EdgeVariant) -> Vec<f64> {
    let nf = n as f64;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let first = kernel_entry(spec, rho, n, i, 0, variant);
            let mut s = first;
            let mut flat = true;
            for j in 1..n {
                let e = kernel_entry(spec, rho, n, i, j, variant);
                flat &= e == first;
                s += e;
            }
            // a constant row averages to its entry, without summation error
            if flat {
                first
            } else {
                s / nf
            }
        })
        .collect()
}

fn degrees_from_weights(rho: f64, weights: &[f64]) -> Vec<f64> {
    let nf = weights.len() as f64;
    weights.iter().map(|g| rho * nf * g).collect()
}

/// `dᵢ = ρₙ Σⱼ W̄ₙ(xᵢ, xⱼ)`, computed as `ρₙ · n · Gᵢ`.
pub fn expected_degrees(spec: &GraphonSpec, schedule: &DensitySchedule, n: usize) -> Result<Vec<f64>> {
    expected_degrees_variant(spec, schedule, n, EdgeVariant::Pointwise)
}

pub fn expected_degrees_variant(
    spec: &GraphonSpec,
    schedule: &DensitySchedule,
    n: usize,
    variant: EdgeVariant,
) -> Result<Vec<f64>> {
    build_grid(n)?;
    let rho = rho_for(schedule, n)?;
    let d = degrees_from_weights(rho, &node_weights(spec, rho, n, variant));
    if let Some(node) = d.iter().position(|&v| v <= 0.0) {
        return Err(Error::DegenerateDegree { node });
    }
    Ok(d)
}

/// One realization of `G(W, ρₙ, Xₙ)` in compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledGraph {
    pub n: usize,
    pub rho: f64,
    pub seed: u64,
    pub variant: EdgeVariant,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    pub expected_degrees: Vec<f64>,
    pub node_weights: Vec<f64>,
}

impl SampledGraph {
    /// Builds a graph from canonical edges `(i, j)`, `i <= j`, 0-based.
    pub fn from_edges(
        n: usize,
        rho: f64,
        seed: u64,
        variant: EdgeVariant,
        edges: &[(usize, usize)],
        node_weights: Vec<f64>,
    ) -> Result<Self> {
        if node_weights.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: node_weights.len() });
        }
        let mut upper: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i > j || j >= n {
                return Err(Error::Size(format!("edge ({i}, {j}) not canonical for n = {n}")));
            }
            upper[i].push(j as u32);
        }
        for row in &mut upper {
            row.sort_unstable();
            row.dedup();
        }
        Ok(Self::from_upper(n, rho, seed, variant, upper, node_weights))
    }

    fn from_upper(
        n: usize,
        rho: f64,
        seed: u64,
        variant: EdgeVariant,
        upper: Vec<Vec<u32>>,
        node_weights: Vec<f64>,
    ) -> Self {
        let mut counts = vec![0usize; n];
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                counts[i] += 1;
                if j as usize != i {
                    counts[j as usize] += 1;
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        // Row r receives its lower neighbours (ascending i) before its own
        // upper list, so every row comes out sorted.
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                neighbors[fill[i]] = j;
                fill[i] += 1;
                let ju = j as usize;
                if ju != i {
                    neighbors[fill[ju]] = i as u32;
                    fill[ju] += 1;
                }
            }
        }
        let expected_degrees = degrees_from_weights(rho, &node_weights);
        SampledGraph { n, rho, seed, variant, offsets, neighbors, expected_degrees, node_weights }
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn loop_count(&self) -> usize {
        (0..self.n).filter(|&i| self.neighbors(i).binary_search(&(i as u32)).is_ok()).count()
    }

    /// Number of edges, each loop counted once.
    pub fn edge_count(&self) -> usize {
        (self.neighbors.len() + self.loop_count()) / 2
    }

    /// Canonical edges `(i, j)`, `i <= j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .map(|&j| j as usize)
                .filter(move |&j| j >= i)
                .map(move |j| (i, j))
        })
    }

    pub fn check_symmetry(&self) -> Result<()> {
        for i in 0..self.n {
            for &j in self.neighbors(i) {
                if self.neighbors(j as usize).binary_search(&(i as u32)).is_err() {
                    return Err(Error::SymmetryViolation { i, j: j as usize });
                }
            }
        }
        Ok(())
    }
}

pub fn sample_graph(
    spec: &GraphonSpec,
    schedule: &DensitySchedule,
    n: usize,
    seed: u64,
    variant: EdgeVariant,
) -> Result<SampledGraph> {
    build_grid(n)?;
    spec.validate()?;
    let rho = rho_for(schedule, n)?;
    let upper: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut row = Vec::new();
            for j in i..n {
                let p = (rho * kernel_entry(spec, rho, n, i, j, variant)).clamp(0.0, 1.0);
                // one draw per pair, always, so streams stay aligned
                let u: f64 = rng.gen();
                if u < p {
                    row.push(j as u32);
                }
            }
            row
        })
        .collect();
    let weights = node_weights(spec, rho, n, variant);
    Ok(SampledGraph::from_upper(n, rho, seed, variant, upper, weights))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeStatistics {
    pub degrees: Vec<usize>,
    pub mean_degree: f64,
    pub edge_count: usize,
    /// `|E| / (n(n+1)/2)`.
    pub density: f64,
}

pub fn degree_statistics(graph: &SampledGraph) -> DegreeStatistics {
    let n = graph.n;
    let degrees: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let edge_count = graph.edge_count();
    let mean_degree = degrees.iter().sum::<usize>() as f64 / n as f64;
    let pairs = (n * (n + 1) / 2) as f64;
    DegreeStatistics { degrees, mean_degree, edge_count, density: edge_count as f64 / pairs }
}
