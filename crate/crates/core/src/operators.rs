//! Deterministic coupling operators and their application to states.
//!
//! `CouplingMatrix` holds a dense row-major n×n kernel. Applying it means
//! `wᵢ = n⁻¹ Σⱼ Mᵢⱼ D(uⱼ − uᵢ)`; the sampled counterpart sums `D` over the
//! realized neighbours and scales by `1/dᵢ` or `1/(nρ)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphon::{DensitySchedule, GraphonSpec};
use crate::sampler::{build_grid, kernel_entry, node_weights, EdgeVariant, SampledGraph};

/// Coupling nonlinearity `D`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    #[default]
    Identity,
    /// Kuramoto coupling `sin u`.
    Sine,
    #[serde(skip)]
    Custom(CustomCoupling),
}

/// A user-supplied coupling function, known by name.
#[derive(Clone, Debug)]
pub struct CustomCoupling {
    pub name: String,
    pub func: fn(f64) -> f64,
    pub lipschitz: f64,
}

impl Coupling {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Coupling::Identity => u,
            Coupling::Sine => u.sin(),
            Coupling::Custom(c) => (c.func)(u),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Coupling::Identity | Coupling::Sine => 1.0,
            Coupling::Custom(c) => c.lipschitz,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Coupling::Identity => "identity",
            Coupling::Sine => "sine",
            Coupling::Custom(c) => &c.name,
        }
    }
}

impl PartialEq for Coupling {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Coupling::Identity, Coupling::Identity) | (Coupling::Sine, Coupling::Sine) => true,
            (Coupling::Custom(a), Coupling::Custom(b)) => a.name == b.name && a.lipschitz == b.lipschitz,
            _ => false,
        }
    }
}

/// How the sampled coupling sum is normalized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Divide by the expected degree `dᵢ`.
    #[default]
    ExpectedDegree,
    /// Divide by `nρₙ`.
    EdgeDensity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// `Vᵢⱼ = W̄ₙ(xᵢ,xⱼ) / Gᵢ`.
    AveragedV,
    /// `W̄ₙ(xᵢ,xⱼ)`, the averaged operator under edge-density scaling.
    AveragedW,
    /// `n² ∫∫_{Iᵢ×Iⱼ} U`.
    GalerkinU,
    /// `n² ∫∫_{Iᵢ×Iⱼ} W`.
    GalerkinW,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::AveragedV => "averaged_V",
            Provenance::AveragedW => "averaged_W",
            Provenance::GalerkinU => "galerkin_U",
            Provenance::GalerkinW => "galerkin_W",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelChoice {
    U,
    W,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub n: usize,
    entries: Vec<f64>,
    pub provenance: Provenance,
    pub graphon: GraphonSpec,
    pub rho: Option<f64>,
    /// Weights of the natural weighted norm: `Gᵢ` for averaged matrices,
    /// cell averages of the degree function for Galerkin ones.
    pub node_weights: Vec<f64>,
    uniform_rows: bool,
}

impl CouplingMatrix {
    fn new(
        n: usize,
        entries: Vec<f64>,
        provenance: Provenance,
        graphon: GraphonSpec,
        rho: Option<f64>,
        node_weights: Vec<f64>,
    ) -> Self {
        let first = &entries[..n];
        let uniform_rows = entries.chunks_exact(n).all(|row| row == first);
        CouplingMatrix { n, entries, provenance, graphon, rho, node_weights, uniform_rows }
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// True when every row is bitwise identical (x-independent kernels).
    pub fn has_uniform_rows(&self) -> bool {
        self.uniform_rows
    }

    pub fn row_means(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().sum::<f64>() / self.n as f64)
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.entry(i, j) - self.entry(j, i)).abs() <= tol))
    }
}

fn averaged_rows(
    spec: &GraphonSpec,
    rho: f64,
    n: usize,
    variant: EdgeVariant,
) -> Vec<f64> {
    let mut entries = vec![0.0; n * n];
    entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, e) in row.iter_mut().enumerate() {
            *e = kernel_entry(spec, rho, n, i, j, variant);
        }
    });
    entries
}

/// `Vᵢⱼ = W̄ₙ(xᵢ,xⱼ) / Gᵢ` from point values of the truncated kernel.
pub fn averaged_matrix(spec: &GraphonSpec, schedule: &DensitySchedule, n: usize) -> Result<CouplingMatrix> {
    averaged_matrix_variant(spec, schedule, n, EdgeVariant::Pointwise)
}

pub fn averaged_matrix_variant(
    spec: &GraphonSpec,
    schedule: &DensitySchedule,
    n: usize,
    variant: EdgeVariant,
) -> Result<CouplingMatrix> {
    build_grid(n)?;
    spec.validate()?;
    schedule.validate()?;
    let rho = schedule.rho(n);
    let mut entries = averaged_rows(spec, rho, n, variant);
    let weights = node_weights(spec, rho, n, variant);
    if let Some(row) = weights.iter().position(|&g| g <= 0.0) {
        return Err(Error::ZeroRow { row });
    }
    entries.par_chunks_mut(n).zip(weights.par_iter()).for_each(|(row, g)| {
        for e in row.iter_mut() {
            *e /= g;
        }
    });
    Ok(CouplingMatrix::new(n, entries, Provenance::AveragedV, spec.clone(), Some(rho), weights))
}

/// Unnormalized truncated kernel `W̄ₙ(xᵢ,xⱼ)`, used with edge-density scaling.
pub fn averaged_kernel_matrix(
    spec: &GraphonSpec,
    schedule: &DensitySchedule,
    n: usize,
    variant: EdgeVariant,
) -> Result<CouplingMatrix> {
    build_grid(n)?;
    spec.validate()?;
    schedule.validate()?;
    let rho = schedule.rho(n);
    let entries = averaged_rows(spec, rho, n, variant);
    let weights = node_weights(spec, rho, n, variant);
    Ok(CouplingMatrix::new(n, entries, Provenance::AveragedW, spec.clone(), Some(rho), weights))
}

/// Galerkin matrix `n² ∫∫_{Iᵢ×Iⱼ} K` with `K = U` or `K = W`, untruncated.
pub fn galerkin_matrix(spec: &GraphonSpec, n: usize, kernel: KernelChoice) -> Result<CouplingMatrix> {
    build_grid(n)?;
    spec.validate()?;
    let nf = n as f64;
    let mut entries = vec![0.0; n * n];
    match kernel {
        KernelChoice::U => {
            spec.nu_inf()?;
            entries
                .par_chunks_mut(n)
                .enumerate()
                .try_for_each(|(i, row)| -> Result<()> {
                    for (j, e) in row.iter_mut().enumerate() {
                        *e = spec.cell_mean_u(n, i, j)?;
                    }
                    Ok(())
                })?;
        }
        KernelChoice::W => {
            entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                for (j, e) in row.iter_mut().enumerate() {
                    *e = spec.cell_mean_w(n, i, j);
                }
            });
        }
    }
    let weights = (0..n)
        .map(|i| nf * spec.cell_integral_degree(i as f64 / nf, (i + 1) as f64 / nf))
        .collect();
    let provenance = match kernel {
        KernelChoice::U => Provenance::GalerkinU,
        KernelChoice::W => Provenance::GalerkinW,
    };
    Ok(CouplingMatrix::new(n, entries, provenance, spec.clone(), None, weights))
}

/// `wᵢ = n⁻¹ Σⱼ Mᵢⱼ D(uⱼ − uᵢ)`.
pub fn apply_coupling(m: &CouplingMatrix, u: &[f64], d: &Coupling) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.n];
    apply_coupling_into(m, u, d, &mut out)?;
    Ok(out)
}

pub fn apply_coupling_into(m: &CouplingMatrix, u: &[f64], d: &Coupling, out: &mut [f64]) -> Result<()> {
    let n = m.n;
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: u.len() });
    }
    if out.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: out.len() });
    }
    let inv_n = 1.0 / n as f64;
    if m.uniform_rows && matches!(d, Coupling::Identity) {
        // Σⱼ cⱼ(uⱼ − uᵢ) = Σⱼ cⱼ(uⱼ − u₀) − (uᵢ − u₀) Σⱼ cⱼ, exact zero on constants.
        let row = m.row(0);
        let u0 = u[0];
        let mut shifted = 0.0;
        let mut mass = 0.0;
        for (c, &x) in row.iter().zip(u) {
            shifted += c * (x - u0);
            mass += c;
        }
        for (o, &x) in out.iter_mut().zip(u) {
            *o = (shifted - (x - u0) * mass) * inv_n;
        }
        return Ok(());
    }
    let body = |(o, row): (&mut f64, &[f64]), ui: f64| {
        let mut acc = 0.0;
        match d {
            Coupling::Identity => {
                for (mij, &uj) in row.iter().zip(u) {
                    acc += mij * (uj - ui);
                }
            }
            _ => {
                for (mij, &uj) in row.iter().zip(u) {
                    acc += mij * d.eval(uj - ui);
                }
            }
        }
        *o = acc * inv_n;
    };
    // Each row is reduced sequentially, so the result is identical for any
    // thread count.
    if n >= 256 {
        out.par_iter_mut()
            .zip(m.entries.par_chunks_exact(n))
            .zip(u.par_iter())
            .for_each(|((o, row), &ui)| body((o, row), ui));
    } else {
        for ((o, row), &ui) in out.iter_mut().zip(m.entries.chunks_exact(n)).zip(u) {
            body((o, row), ui);
        }
    }
    Ok(())
}

/// Row scale factors `cᵢ` of the sampled coupling.
pub fn sampled_scale(graph: &SampledGraph, scaling: Scaling) -> Result<Vec<f64>> {
    match scaling {
        Scaling::ExpectedDegree => graph
            .expected_degrees
            .iter()
            .enumerate()
            .map(|(node, &d)| {
                if d > 0.0 {
                    Ok(d.recip())
                } else {
                    Err(Error::DegenerateDegree { node })
                }
            })
            .collect(),
        Scaling::EdgeDensity => Ok(vec![(graph.n as f64 * graph.rho).recip(); graph.n]),
    }
}

/// `wᵢ = cᵢ Σ_{j∈N(i)} D(uⱼ − uᵢ)`.
pub fn apply_sampled_coupling(
    graph: &SampledGraph,
    u: &[f64],
    d: &Coupling,
    scaling: Scaling,
) -> Result<Vec<f64>> {
    let scale = sampled_scale(graph, scaling)?;
    let mut out = vec![0.0; graph.n];
    apply_sampled_scaled_into(graph, &scale, u, d, &mut out)?;
    Ok(out)
}

pub(crate) fn apply_sampled_scaled_into(
    graph: &SampledGraph,
    scale: &[f64],
    u: &[f64],
    d: &Coupling,
    out: &mut [f64],
) -> Result<()> {
    if u.len() != graph.n {
        return Err(Error::DimensionMismatch { expected: graph.n, got: u.len() });
    }
    for (i, o) in out.iter_mut().enumerate() {
        let ui = u[i];
        let mut acc = 0.0;
        for &j in graph.neighbors(i) {
            acc += d.eval(u[j as usize] - ui);
        }
        *o = scale[i] * acc;
    }
    Ok(())
}

/// Writes one matrix row per line with 17 significant digits.
pub fn write_matrix_csv<W: std::io::Write>(m: &CouplingMatrix, mut w: W) -> std::io::Result<()> {
    for i in 0..m.n {
        let line: Vec<String> = m.row(i).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::sample_graph;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn ones(n: usize) -> CouplingMatrix {
        galerkin_matrix(&GraphonSpec::constant(1.0), n, KernelChoice::U).unwrap()
    }

    #[test]
    fn averaged_constant_is_all_ones() {
        let m = averaged_matrix(&GraphonSpec::constant(1.0), &DensitySchedule::fixed(0.5), 3).unwrap();
        assert!(m.entries().iter().all(|&v| v == 1.0));
        assert_eq!(m.provenance, Provenance::AveragedV);
    }

    #[test]
    fn averaged_power_law_two_nodes() {
        let pl = GraphonSpec::power_law(0.2);
        let m = averaged_matrix(&pl, &DensitySchedule::fixed(0.5), 2).unwrap();
        // direct evaluation oracle
        let w11 = 0.64 * 0.25f64.powf(-0.2);
        let w12 = 0.64 * 0.5f64.powf(-0.2);
        assert_abs_diff_eq!(w11, 0.84449, epsilon = 1e-5);
        assert_abs_diff_eq!(w12, 0.73517, epsilon = 1e-5);
        let g = (w11 + w12) / 2.0;
        assert_abs_diff_eq!(m.entry(0, 0), w11 / g, epsilon = 1e-14);
        assert_abs_diff_eq!(m.entry(0, 1), w12 / g, epsilon = 1e-14);
        assert_abs_diff_eq!(m.entry(0, 0), 1.06920, epsilon = 1e-5);
        assert_abs_diff_eq!(m.entry(0, 1), 0.93080, epsilon = 1e-5);
    }

    #[test]
    fn averaged_row_means_are_one() {
        let specs = [
            GraphonSpec::power_law(0.2),
            GraphonSpec::power_law(0.45),
            GraphonSpec::block(vec![0.0, 0.25, 1.0], vec![vec![3.0, 0.5], vec![0.5, 0.1]]),
        ];
        for s in &specs {
            for n in [2, 7, 64, 300] {
                let m = averaged_matrix(s, &DensitySchedule::power(0.5), n).unwrap();
                for mean in m.row_means() {
                    assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn averaged_zero_row_is_rejected() {
        let s = GraphonSpec::block(vec![0.0, 0.5, 1.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]]);
        assert!(matches!(
            averaged_matrix(&s, &DensitySchedule::fixed(0.5), 4),
            Err(Error::ZeroRow { row: 2 })
        ));
    }

    #[test]
    fn galerkin_power_law_two_cells() {
        let m = galerkin_matrix(&GraphonSpec::power_law(0.2), 2, KernelChoice::U).unwrap();
        // analytic oracle: entry = n (y^{0.8}) over the column cell
        let c1 = 2.0 * 0.5f64.powf(0.8);
        let c2 = 2.0 * (1.0 - 0.5f64.powf(0.8));
        for i in 0..2 {
            assert_abs_diff_eq!(m.entry(i, 0), c1, epsilon = 1e-14);
            assert_abs_diff_eq!(m.entry(i, 1), c2, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(c1, 1.14870, epsilon = 1e-5);
        assert_abs_diff_eq!(c2, 0.85130, epsilon = 1e-5);
        for mean in m.row_means() {
            assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-15);
        }
        assert!(m.has_uniform_rows());
    }

    #[test]
    fn galerkin_u_row_means_across_sizes() {
        let specs = [
            GraphonSpec::power_law(0.1),
            GraphonSpec::power_law(0.2),
            GraphonSpec::power_law(0.4),
            GraphonSpec::constant(2.0),
            GraphonSpec::block(vec![0.0, 0.3, 1.0], vec![vec![1.0, 2.0], vec![2.0, 0.5]]),
        ];
        for s in &specs {
            let mut n = 2;
            while n <= 512 {
                let m = galerkin_matrix(s, n, KernelChoice::U).unwrap();
                for mean in m.row_means() {
                    assert!((mean - 1.0).abs() < 1e-10, "{s:?} n={n} mean={mean}");
                }
                n *= 2;
            }
        }
    }

    #[test]
    fn galerkin_w_is_symmetric() {
        let m = galerkin_matrix(&GraphonSpec::power_law(0.3), 16, KernelChoice::W).unwrap();
        assert!(m.is_symmetric(1e-13));
        // n⁻² Σ entries = total mass
        let total: f64 = m.entries().iter().sum::<f64>() / 256.0;
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_kernels_agree() {
        for n in [2, 5, 32] {
            let a = averaged_matrix(&GraphonSpec::constant(0.8), &DensitySchedule::fixed(0.5), n).unwrap();
            let g = galerkin_matrix(&GraphonSpec::constant(0.8), n, KernelChoice::U).unwrap();
            assert_eq!(a.entries(), g.entries());
        }
    }

    #[test]
    fn apply_examples() {
        let m = ones(2);
        assert_eq!(apply_coupling(&m, &[0.0, 1.0], &Coupling::Identity).unwrap(), vec![0.5, -0.5]);
        let w = apply_coupling(&m, &[0.0, PI], &Coupling::Sine).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(
            apply_coupling(&m, &[0.0, 1.0, 2.0], &Coupling::Identity),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn uniform_row_fast_path_matches_dense() {
        let m = galerkin_matrix(&GraphonSpec::power_law(0.2), 64, KernelChoice::U).unwrap();
        assert!(m.has_uniform_rows());
        let u: Vec<f64> = (0..64).map(|i| (i as f64 * 0.37).sin()).collect();
        let fast = apply_coupling(&m, &u, &Coupling::Identity).unwrap();
        for (i, f) in fast.iter().enumerate() {
            let dense: f64 = (0..64).map(|j| m.entry(i, j) * (u[j] - u[i])).sum::<f64>() / 64.0;
            assert_abs_diff_eq!(*f, dense, epsilon = 1e-13);
        }
    }

    #[test]
    fn sampled_examples() {
        let spec = GraphonSpec::constant(1.0);
        // complete graph with loops on two nodes
        let g = SampledGraph::from_edges(2, 0.5, 0, EdgeVariant::Pointwise, &[(0, 0), (0, 1), (1, 1)], vec![1.0, 1.0]).unwrap();
        assert_eq!(g.expected_degrees, vec![1.0, 1.0]);
        let w = apply_sampled_coupling(&g, &[0.0, 1.0], &Coupling::Identity, Scaling::ExpectedDegree).unwrap();
        assert_eq!(w, vec![1.0, -1.0]);
        let w = apply_sampled_coupling(&g, &[3.0, 3.0], &Coupling::Sine, Scaling::EdgeDensity).unwrap();
        assert_eq!(w, vec![0.0, 0.0]);

        let empty = SampledGraph::from_edges(4, 0.5, 0, EdgeVariant::Pointwise, &[], vec![1.0; 4]).unwrap();
        let w = apply_sampled_coupling(&empty, &[1.0, -2.0, 0.5, 9.0], &Coupling::Sine, Scaling::ExpectedDegree).unwrap();
        assert_eq!(w, vec![0.0; 4]);

        let sampled = sample_graph(&spec, &DensitySchedule::fixed(0.5), 10, 1, EdgeVariant::Pointwise).unwrap();
        let w = apply_sampled_coupling(&sampled, &[2.5; 10], &Coupling::Identity, Scaling::ExpectedDegree).unwrap();
        assert_eq!(w, vec![0.0; 10]);

        let zero = SampledGraph::from_edges(2, 0.5, 0, EdgeVariant::Pointwise, &[], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            apply_sampled_coupling(&zero, &[0.0, 1.0], &Coupling::Identity, Scaling::ExpectedDegree),
            Err(Error::DegenerateDegree { node: 0 })
        ));
    }

    #[test]
    fn matrix_csv_has_17_digits() {
        let m = ones(2);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "1.0000000000000000e0,1.0000000000000000e0\n1.0000000000000000e0,1.0000000000000000e0\n");
    }

    proptest! {
        #[test]
        fn identity_coupling_is_linear_and_kills_constants(
            u in prop::collection::vec(-5.0f64..5.0, 12),
            v in prop::collection::vec(-5.0f64..5.0, 12),
            c in -10.0f64..10.0,
        ) {
            let mats = [
                averaged_matrix(&GraphonSpec::power_law(0.3), &DensitySchedule::power(0.5), 12).unwrap(),
                galerkin_matrix(&GraphonSpec::power_law(0.3), 12, KernelChoice::U).unwrap(),
                galerkin_matrix(&GraphonSpec::power_law(0.3), 12, KernelChoice::W).unwrap(),
            ];
            for m in &mats {
                let constant = apply_coupling(m, &[c; 12], &Coupling::Identity).unwrap();
                prop_assert!(constant.iter().all(|&x| x == 0.0));
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let lhs = apply_coupling(m, &sum, &Coupling::Identity).unwrap();
                let a = apply_coupling(m, &u, &Coupling::Identity).unwrap();
                let b = apply_coupling(m, &v, &Coupling::Identity).unwrap();
                for i in 0..12 {
                    prop_assert!((lhs[i] - a[i] - b[i]).abs() < 1e-12);
                }
            }
        }
    }
}
