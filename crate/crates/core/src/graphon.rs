//! Analytic graphons, their truncations and the integrals derived from them.
//!
//! All kernels live on `(0,1]²`. The power-law kernel
//! `W(x,y) = (1-α)² (xy)^{-α}` is singular at the axes, so every integral
//! that touches a cell next to zero goes through the closed-form
//! antiderivative `∫ x^{-α} = x^{1-α}/(1-α)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Degree values below this are treated as zero when normalizing.
pub const DEGREE_FLOOR: f64 = 1e-300;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphonSpec {
    /// `(1-α)² (xy)^{-α}`, unit total mass.
    PowerLaw { alpha: f64 },
    Constant { c: f64 },
    /// Piecewise constant on `(v_k, v_{k+1}] × (v_l, v_{l+1}]`.
    /// `boundaries` runs from 0 to 1; `b` is the symmetric k×k block matrix.
    Block { boundaries: Vec<f64>, b: Vec<Vec<f64>> },
}

/// Density schedule ρₙ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DensitySchedule {
    /// ρₙ = n^{-γ} with γ ∈ (0,1).
    Power { gamma: f64 },
    /// A fixed density, for small hand-checked cases and reloaded graphs.
    Fixed { rho: f64 },
}

impl DensitySchedule {
    pub fn power(gamma: f64) -> Self {
        DensitySchedule::Power { gamma }
    }

    pub fn fixed(rho: f64) -> Self {
        DensitySchedule::Fixed { rho }
    }

    pub fn rho(&self, n: usize) -> f64 {
        match *self {
            DensitySchedule::Power { gamma } => (n as f64).powf(-gamma),
            DensitySchedule::Fixed { rho } => rho,
        }
    }

    pub fn gamma(&self) -> Option<f64> {
        match *self {
            DensitySchedule::Power { gamma } => Some(gamma),
            DensitySchedule::Fixed { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DensitySchedule::Power { gamma } if gamma > 0.0 && gamma < 1.0 => Ok(()),
            DensitySchedule::Power { gamma } => {
                Err(Error::Config(format!("gamma must lie in (0,1), got {gamma}")))
            }
            DensitySchedule::Fixed { rho } if rho > 0.0 && rho <= 1.0 => Ok(()),
            DensitySchedule::Fixed { rho } => {
                Err(Error::Config(format!("rho must lie in (0,1], got {rho}")))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Integrability {
    pub l2: bool,
    pub l4: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub n: usize,
    pub rho: f64,
    pub total_mass: f64,
    pub nu: f64,
    pub delta_sup: f64,
    pub l4_row_bound: f64,
    pub integrability: Integrability,
    /// `Some(α < γ)` for a power-law kernel on a power schedule.
    pub alpha_below_gamma: Option<bool>,
    pub violations: Vec<String>,
}

impl GraphonSpec {
    pub fn power_law(alpha: f64) -> Self {
        GraphonSpec::PowerLaw { alpha }
    }

    pub fn constant(c: f64) -> Self {
        GraphonSpec::Constant { c }
    }

    pub fn block(boundaries: Vec<f64>, b: Vec<Vec<f64>>) -> Self {
        GraphonSpec::Block { boundaries, b }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GraphonSpec::PowerLaw { alpha } => {
                if !(*alpha > 0.0 && *alpha < 1.0) {
                    return Err(Error::Config(format!("alpha must lie in (0,1), got {alpha}")));
                }
            }
            GraphonSpec::Constant { c } => {
                if !(*c >= 0.0 && c.is_finite()) {
                    return Err(Error::Config(format!("constant graphon needs c >= 0, got {c}")));
                }
            }
            GraphonSpec::Block { boundaries, b } => {
                let k = b.len();
                if k == 0 || boundaries.len() != k + 1 {
                    return Err(Error::Config(format!(
                        "block graphon with {} boundaries needs a {}x{} matrix",
                        boundaries.len(),
                        boundaries.len().saturating_sub(1),
                        boundaries.len().saturating_sub(1)
                    )));
                }
                if boundaries[0] != 0.0 || boundaries[k] != 1.0 {
                    return Err(Error::Config("block boundaries must start at 0 and end at 1".into()));
                }
                if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("block boundaries must be strictly increasing".into()));
                }
                let mut total = 0.0;
                for (i, row) in b.iter().enumerate() {
                    if row.len() != k {
                        return Err(Error::Config(format!("block matrix row {i} has wrong length")));
                    }
                    for (j, &v) in row.iter().enumerate() {
                        if !(v >= 0.0 && v.is_finite()) {
                            return Err(Error::Config(format!("block entry ({i},{j}) must be >= 0")));
                        }
                        if v != b[j][i] {
                            return Err(Error::Asymmetry { i, j });
                        }
                        total += v;
                    }
                }
                if total <= 0.0 {
                    return Err(Error::AssumptionViolation("block matrix sums to zero".into()));
                }
            }
        }
        Ok(())
    }

    pub fn integrability(&self) -> Integrability {
        match *self {
            GraphonSpec::PowerLaw { alpha } => Integrability {
                l2: alpha < 0.5,
                l4: alpha < 0.25,
            },
            _ => Integrability { l2: true, l4: true },
        }
    }

    fn check_point(&self, x: f64, y: f64) -> Result<()> {
        let singular = matches!(self, GraphonSpec::PowerLaw { .. });
        let ok = |t: f64| {
            if singular {
                t > 0.0 && t <= 1.0
            } else {
                (0.0..=1.0).contains(&t)
            }
        };
        if ok(x) && ok(y) {
            Ok(())
        } else {
            Err(Error::Domain { x, y })
        }
    }

    /// Index of the block containing `x`; interior boundary points go left.
    pub fn block_index(boundaries: &[f64], x: f64) -> usize {
        let k = boundaries.len() - 1;
        // first boundary index m >= 1 with x <= v_m
        let m = boundaries[1..].partition_point(|&v| v < x);
        m.min(k - 1)
    }

    pub fn eval_w(&self, x: f64, y: f64) -> Result<f64> {
        self.check_point(x, y)?;
        Ok(match self {
            GraphonSpec::PowerLaw { alpha } => {
                let a = 1.0 - alpha;
                // (xy) is symmetric in floating point, so W is exactly symmetric.
                a * a * (x * y).powf(-alpha)
            }
            GraphonSpec::Constant { c } => *c,
            GraphonSpec::Block { boundaries, b } => {
                b[Self::block_index(boundaries, x)][Self::block_index(boundaries, y)]
            }
        })
    }

    /// `min(ρ⁻¹, W(x,y))`.
    pub fn truncate_w(&self, rho: f64, x: f64, y: f64) -> Result<f64> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Config(format!("rho must lie in (0,1], got {rho}")));
        }
        Ok(self.eval_w(x, y)?.min(rho.recip()))
    }

    /// `∫₀¹ W(x,z) dz`.
    pub fn degree_g(&self, x: f64) -> Result<f64> {
        self.check_point(x, 1.0)?;
        Ok(match self {
            GraphonSpec::PowerLaw { alpha } => (1.0 - alpha) * x.powf(-alpha),
            GraphonSpec::Constant { c } => *c,
            GraphonSpec::Block { boundaries, b } => {
                Self::block_degrees(boundaries, b)[Self::block_index(boundaries, x)]
            }
        })
    }

    fn block_degrees(boundaries: &[f64], b: &[Vec<f64>]) -> Vec<f64> {
        b.iter()
            .map(|row| {
                row.iter()
                    .zip(boundaries.windows(2))
                    .map(|(v, w)| v * (w[1] - w[0]))
                    .sum()
            })
            .collect()
    }

    /// Degree-normalized kernel `U(x,y) = W(x,y) / ∫ W(x,z) dz`.
    pub fn eval_u(&self, x: f64, y: f64) -> Result<f64> {
        self.check_point(x, y)?;
        match self {
            // W/g simplifies to an x-independent kernel.
            GraphonSpec::PowerLaw { alpha } => Ok((1.0 - alpha) * y.powf(-alpha)),
            _ => {
                let g = self.degree_g(x)?;
                if g < DEGREE_FLOOR {
                    return Err(Error::SingularKernel { x });
                }
                Ok(self.eval_w(x, y)? / g)
            }
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            GraphonSpec::PowerLaw { .. } => 1.0,
            GraphonSpec::Constant { c } => *c,
            GraphonSpec::Block { boundaries, b } => {
                let widths: Vec<f64> = boundaries.windows(2).map(|w| w[1] - w[0]).collect();
                let mut s = 0.0;
                for (k, row) in b.iter().enumerate() {
                    for (l, v) in row.iter().enumerate() {
                        s += v * widths[k] * widths[l];
                    }
                }
                s
            }
        }
    }

    /// `inf_x ∫ W(x,z) dz`.
    pub fn nu_inf(&self) -> Result<f64> {
        let nu = match self {
            // x^{-α} is decreasing, so the infimum sits at x = 1.
            GraphonSpec::PowerLaw { alpha } => 1.0 - alpha,
            GraphonSpec::Constant { c } => *c,
            GraphonSpec::Block { boundaries, b } => Self::block_degrees(boundaries, b)
                .into_iter()
                .fold(f64::INFINITY, f64::min),
        };
        if nu <= 0.0 {
            return Err(Error::AssumptionViolation(
                "degree function has zero infimum".into(),
            ));
        }
        Ok(nu)
    }

    /// `∫_{x0}^{x1} ∫_{y0}^{y1} W`, exact for every catalog kind.
    pub fn cell_integral_w(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        match self {
            GraphonSpec::PowerLaw { alpha } => {
                let p = 1.0 - alpha;
                (x1.powf(p) - x0.powf(p)) * (y1.powf(p) - y0.powf(p))
            }
            GraphonSpec::Constant { c } => c * (x1 - x0) * (y1 - y0),
            GraphonSpec::Block { boundaries, b } => {
                let ox = overlaps(boundaries, x0, x1);
                let oy = overlaps(boundaries, y0, y1);
                let mut s = 0.0;
                for &(k, wx) in &ox {
                    for &(l, wy) in &oy {
                        s += b[k][l] * wx * wy;
                    }
                }
                s
            }
        }
    }

    /// `∫_{x0}^{x1} ∫_{y0}^{y1} U`, exact for every catalog kind.
    pub fn cell_integral_u(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> Result<f64> {
        match self {
            GraphonSpec::PowerLaw { alpha } => {
                let p = 1.0 - alpha;
                Ok((x1 - x0) * (y1.powf(p) - y0.powf(p)))
            }
            GraphonSpec::Constant { c } => {
                if *c < DEGREE_FLOOR {
                    return Err(Error::SingularKernel { x: x0 });
                }
                Ok((x1 - x0) * (y1 - y0))
            }
            GraphonSpec::Block { boundaries, b } => {
                let g = Self::block_degrees(boundaries, b);
                let ox = overlaps(boundaries, x0, x1);
                let oy = overlaps(boundaries, y0, y1);
                let mut s = 0.0;
                for &(k, wx) in &ox {
                    if g[k] < DEGREE_FLOOR {
                        return Err(Error::SingularKernel { x: boundaries[k] });
                    }
                    for &(l, wy) in &oy {
                        s += b[k][l] / g[k] * wx * wy;
                    }
                }
                Ok(s)
            }
        }
    }

    /// `∫_{x0}^{x1} ∫₀¹ W(x,z) dz dx`.
    pub fn cell_integral_degree(&self, x0: f64, x1: f64) -> f64 {
        match self {
            GraphonSpec::PowerLaw { alpha } => {
                let p = 1.0 - alpha;
                x1.powf(p) - x0.powf(p)
            }
            GraphonSpec::Constant { c } => c * (x1 - x0),
            GraphonSpec::Block { boundaries, b } => {
                let g = Self::block_degrees(boundaries, b);
                overlaps(boundaries, x0, x1)
                    .into_iter()
                    .map(|(k, w)| g[k] * w)
                    .sum()
            }
        }
    }

    /// `n² ∫∫_{Iᵢ×Iⱼ} W` on the uniform n-grid (0-based cells).
    ///
    /// Block and constant kernels are evaluated in cell units so that a cell
    /// lying inside one block returns the block value exactly.
    pub fn cell_mean_w(&self, n: usize, i: usize, j: usize) -> f64 {
        let nf = n as f64;
        match self {
            GraphonSpec::Constant { c } => *c,
            GraphonSpec::Block { boundaries, b } => {
                let mut s = 0.0;
                for (k, fx) in cell_fractions(boundaries, n, i) {
                    for (l, fy) in cell_fractions(boundaries, n, j) {
                        s += b[k][l] * fx * fy;
                    }
                }
                s
            }
            GraphonSpec::PowerLaw { .. } => {
                nf * nf * self.cell_integral_w(i as f64 / nf, (i + 1) as f64 / nf, j as f64 / nf, (j + 1) as f64 / nf)
            }
        }
    }

    /// `n² ∫∫_{Iᵢ×Iⱼ} U` on the uniform n-grid (0-based cells).
    pub fn cell_mean_u(&self, n: usize, i: usize, j: usize) -> Result<f64> {
        let nf = n as f64;
        match self {
            GraphonSpec::Constant { c } => {
                if *c < DEGREE_FLOOR {
                    return Err(Error::SingularKernel { x: i as f64 / nf });
                }
                Ok(1.0)
            }
            GraphonSpec::Block { boundaries, b } => {
                let g = Self::block_degrees(boundaries, b);
                let mut s = 0.0;
                for (k, fx) in cell_fractions(boundaries, n, i) {
                    if g[k] < DEGREE_FLOOR {
                        return Err(Error::SingularKernel { x: boundaries[k] });
                    }
                    for (l, fy) in cell_fractions(boundaries, n, j) {
                        s += b[k][l] / g[k] * fx * fy;
                    }
                }
                Ok(s)
            }
            // U does not depend on x, so the x-average is exactly 1
            GraphonSpec::PowerLaw { alpha } => {
                let p = 1.0 - alpha;
                Ok(nf * (((j + 1) as f64 / nf).powf(p) - (j as f64 / nf).powf(p)))
            }
        }
    }

    pub fn check_assumptions(&self, schedule: &DensitySchedule, n: usize) -> AssumptionReport {
        let rho = schedule.rho(n);
        let mut violations = Vec::new();
        if let Err(e) = self.validate() {
            violations.push(e.to_string());
        }
        if let Err(e) = schedule.validate() {
            violations.push(e.to_string());
        }
        let total_mass = self.total_mass();
        if total_mass <= 0.0 {
            violations.push("total mass is not positive".into());
        }
        let nu = match self.nu_inf() {
            Ok(v) => v,
            Err(e) => {
                violations.push(e.to_string());
                0.0
            }
        };
        let integrability = self.integrability();
        let alpha_below_gamma = match (self, schedule) {
            (GraphonSpec::PowerLaw { alpha }, DensitySchedule::Power { gamma }) => {
                Some(alpha < gamma)
            }
            _ => None,
        };
        if alpha_below_gamma == Some(false) {
            violations.push("power-law exponent must be below the density exponent".into());
        }

        let mut delta_sup = 0.0_f64;
        let mut l4_sum = 0.0;
        let nf = n as f64;
        if n >= 2 && rho > 0.0 && rho <= 1.0 {
            let cap = rho.recip();
            for i in 1..=n {
                let x = i as f64 / nf;
                let mut row = 0.0;
                for j in 1..=n {
                    let w = self.eval_w(x, j as f64 / nf).unwrap_or(0.0).min(cap);
                    row += w;
                    l4_sum += w * w;
                }
                if i < n {
                    if let Ok(g) = self.degree_g(x) {
                        if g > DEGREE_FLOOR {
                            delta_sup = delta_sup.max((row / nf / g - 1.0).abs());
                        }
                    }
                }
            }
        } else {
            violations.push(format!("node count {n} too small"));
        }

        AssumptionReport {
            n,
            rho,
            total_mass,
            nu,
            delta_sup,
            l4_row_bound: l4_sum / (nf * nf),
            integrability,
            alpha_below_gamma,
            violations,
        }
    }
}

/// Blocks meeting cell `i` of the n-grid, with the covered fraction of the cell.
fn cell_fractions(boundaries: &[f64], n: usize, i: usize) -> Vec<(usize, f64)> {
    let nf = n as f64;
    let (lo, hi) = (i as f64, (i + 1) as f64);
    boundaries
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let len = hi.min(w[1] * nf) - lo.max(w[0] * nf);
            (len > 0.0).then_some((k, len))
        })
        .collect()
}

/// Blocks meeting `[a0, a1]` and the length of each intersection.
fn overlaps(boundaries: &[f64], a0: f64, a1: f64) -> Vec<(usize, f64)> {
    boundaries
        .windows(2)
        .enumerate()
        .filter_map(|(k, w)| {
            let len = a1.min(w[1]) - a0.max(w[0]);
            (len > 0.0).then_some((k, len))
        })
        .collect()
}
