//! Norms, grid transfer and error metrics on step functions.
//!
//! A state vector of length n is identified with the step function that is
//! constant on each cell `((i-1)/n, i/n]`, so discrete norms below are exact
//! `L²(0,1)` norms of those functions.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::graphon::{DensitySchedule, GraphonSpec};
use crate::operators::{averaged_matrix, galerkin_matrix, KernelChoice};

/// `√(n⁻¹ Σ uᵢ²)`.
pub fn step_l2_norm(u: &[f64]) -> f64 {
    if u.is_empty() {
        return 0.0;
    }
    (u.iter().map(|x| x * x).sum::<f64>() / u.len() as f64).sqrt()
}

/// `√(n⁻¹ Σ Gᵢ uᵢ²)`.
pub fn gn_norm(u: &[f64], weights: &[f64]) -> Result<f64> {
    if u.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: weights.len() });
    }
    if let Some(index) = weights.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::NonpositiveWeight { index });
    }
    let s: f64 = u.iter().zip(weights).map(|(x, g)| g * x * x).sum();
    Ok((s / u.len() as f64).sqrt())
}

pub fn sup_norm(u: &[f64]) -> f64 {
    u.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Mean over each block of `fine.len() / n` consecutive values.
pub fn restrict_to_coarse(fine: &[f64], n: usize) -> Result<Vec<f64>> {
    let m = fine.len();
    if n == 0 || !m.is_multiple_of(n) {
        return Err(Error::Divisibility { fine: m, coarse: n });
    }
    let r = m / n;
    Ok(fine.chunks_exact(r).map(|c| c.iter().sum::<f64>() / r as f64).collect())
}

pub fn restrict_trajectory(traj: &Trajectory, n: usize) -> Result<Trajectory> {
    if traj.n == n {
        return Ok(traj.clone());
    }
    let states = traj
        .states
        .iter()
        .map(|s| restrict_to_coarse(s, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        n,
        times: traj.times.clone(),
        sup_norms: states.iter().map(|s| sup_norm(s)).collect(),
        weighted_norms: states.iter().map(|s| step_l2_norm(s)).collect(),
        states,
        fingerprint: format!("{} restricted to n={n}", traj.fingerprint),
    })
}

fn check_time_grids(a: &Trajectory, b: &Trajectory) -> Result<()> {
    if a.times.len() != b.times.len() {
        return Err(Error::TimeGridMismatch(format!(
            "{} vs {} snapshots",
            a.times.len(),
            b.times.len()
        )));
    }
    for (k, (ta, tb)) in a.times.iter().zip(&b.times).enumerate() {
        if (ta - tb).abs() > 1e-12 * ta.abs().max(1.0) {
            return Err(Error::TimeGridMismatch(format!("snapshot {k}: t={ta} vs t={tb}")));
        }
    }
    Ok(())
}

/// Squared step-L² distance per snapshot, on the coarser of the two grids.
fn snapshot_distances(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>> {
    check_time_grids(a, b)?;
    let n = a.n.min(b.n);
    if !a.n.max(b.n).is_multiple_of(n) {
        return Err(Error::Divisibility { fine: a.n.max(b.n), coarse: n });
    }
    a.states
        .iter()
        .zip(&b.states)
        .map(|(sa, sb)| {
            let ra = restrict_to_coarse(sa, n)?;
            let rb = restrict_to_coarse(sb, n)?;
            let diff: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| x - y).collect();
            Ok(step_l2_norm(&diff).powi(2))
        })
        .collect()
}

/// `√(∫₀ᵀ ‖a(t) − b(t)‖² dt)` by the trapezoidal rule on the snapshot grid.
pub fn spacetime_l2_error(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    let d = snapshot_distances(a, b)?;
    let mut acc = 0.0;
    for k in 1..d.len() {
        acc += 0.5 * (a.times[k] - a.times[k - 1]) * (d[k] + d[k - 1]);
    }
    Ok(acc.sqrt())
}

/// `max_t ‖a(t) − b(t)‖_G` on a shared grid.
pub fn max_gn_gap(a: &Trajectory, b: &Trajectory, weights: &[f64]) -> Result<f64> {
    check_time_grids(a, b)?;
    if a.n != b.n {
        return Err(Error::DimensionMismatch { expected: a.n, got: b.n });
    }
    let mut worst = 0.0f64;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        let diff: Vec<f64> = sa.iter().zip(sb).map(|(x, y)| x - y).collect();
        worst = worst.max(gn_norm(&diff, weights)?);
    }
    Ok(worst)
}

/// `‖Uₙ − Vₙ‖_{L⁴(I²)}` between the Galerkin step kernel and the averaged one.
pub fn kernel_l4_distance(spec: &GraphonSpec, schedule: &DensitySchedule, n: usize) -> Result<f64> {
    if !spec.integrability().l4 {
        return Err(Error::Integrability { p: 4 });
    }
    let u = galerkin_matrix(spec, n, KernelChoice::U)?;
    let v = averaged_matrix(spec, schedule, n)?;
    let s: f64 = u
        .entries()
        .iter()
        .zip(v.entries())
        .map(|(a, b)| (a - b).powi(4))
        .sum();
    let nf = n as f64;
    Ok((s / (nf * nf)).powf(0.25))
}

/// Both sides of `Σᵢⱼ Wᵢⱼ(θⱼ−θᵢ)θᵢ = −½ Σᵢⱼ Wᵢⱼ(θⱼ−θᵢ)²` for symmetric `W`.
pub fn dissipation_identity_check(w: &[f64], theta: &[f64]) -> Result<(f64, f64)> {
    let n = theta.len();
    if w.len() != n * n {
        return Err(Error::DimensionMismatch { expected: n * n, got: w.len() });
    }
    for i in 0..n {
        for j in 0..i {
            let (a, b) = (w[i * n + j], w[j * n + i]);
            if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                return Err(Error::Asymmetry { i, j });
            }
        }
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..n {
        for j in 0..n {
            let d = theta[j] - theta[i];
            lhs += w[i * n + j] * d * theta[i];
            rhs += w[i * n + j] * d * d;
        }
    }
    Ok((lhs, -0.5 * rhs))
}

/// `(1 + 3LT e^{3LT}) · sup|g|`.
pub fn apriori_sup_bound(lipschitz: f64, horizon: f64, initial_sup: f64) -> f64 {
    let a = 3.0 * lipschitz * horizon;
    (1.0 + a * a.exp()) * initial_sup
}

/// Slack added to the a priori bound when checking trajectories.
pub const APRIORI_SLACK: f64 = 1e-6;

pub fn satisfies_apriori_bound(traj: &Trajectory, lipschitz: f64, horizon: f64, initial_sup: f64) -> bool {
    traj.max_sup_norm() <= apriori_sup_bound(lipschitz, horizon, initial_sup) + APRIORI_SLACK
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub n: usize,
    pub seed: u64,
    pub spacetime_l2: Option<f64>,
    pub sup_gn_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_l4: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed: Option<String>,
}

impl ErrorRecord {
    pub fn new(n: usize, seed: u64) -> Self {
        ErrorRecord { n, seed, spacetime_l2: None, sup_gn_gap: None, kernel_l4: None, failed: None }
    }

    pub fn failure(n: usize, seed: u64, reason: impl Into<String>) -> Self {
        ErrorRecord { failed: Some(reason.into()), ..Self::new(n, seed) }
    }

    /// The quantity a study aggregates: first of spacetime error, gap, kernel distance.
    pub fn metric(&self) -> Option<f64> {
        if self.failed.is_some() {
            return None;
        }
        self.spacetime_l2.or(self.sup_gn_gap).or(self.kernel_l4)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub median: f64,
    pub iqr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub study: String,
    pub graphon: GraphonSpec,
    pub gamma: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub reference_resolution: usize,
    pub records: Vec<ErrorRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ErrorReport {
    /// Builds the report and its per-n aggregates from `records`, in the
    /// order of first appearance of each n.
    pub fn new(
        study: &str,
        graphon: GraphonSpec,
        gamma: Option<f64>,
        horizon: f64,
        reference_resolution: usize,
        records: Vec<ErrorRecord>,
    ) -> Self {
        let mut ns: Vec<usize> = Vec::new();
        for r in &records {
            if !ns.contains(&r.n) {
                ns.push(r.n);
            }
        }
        let aggregates = ns
            .into_iter()
            .filter_map(|n| {
                let values: Vec<f64> = records.iter().filter(|r| r.n == n).filter_map(|r| r.metric()).collect();
                let (median, iqr) = median_iqr(&values)?;
                Some(Aggregate { n, median, iqr })
            })
            .collect();
        ErrorReport {
            study: study.to_string(),
            graphon,
            gamma,
            horizon,
            reference_resolution,
            records,
            aggregates,
        }
    }

    pub fn medians(&self) -> Vec<(usize, f64)> {
        self.aggregates.iter().map(|a| (a.n, a.median)).collect()
    }

    pub fn failed_records(&self) -> impl Iterator<Item = &ErrorRecord> {
        self.records.iter().filter(|r| r.failed.is_some())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and interquartile range; `None` for empty input.
pub fn median_iqr(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some((quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn traj(times: Vec<f64>, states: Vec<Vec<f64>>) -> Trajectory {
        let n = states[0].len();
        Trajectory {
            n,
            sup_norms: states.iter().map(|s| sup_norm(s)).collect(),
            weighted_norms: states.iter().map(|s| step_l2_norm(s)).collect(),
            times,
            states,
            fingerprint: String::new(),
        }
    }

    #[test]
    fn norm_examples() {
        assert_eq!(step_l2_norm(&[1.0; 4]), 1.0);
        assert_eq!(step_l2_norm(&[0.0; 5]), 0.0);
        assert_abs_diff_eq!(step_l2_norm(&[3.0, 4.0]), 12.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(step_l2_norm(&[3.0, 4.0]), 3.53553, epsilon = 1e-5);

        let u = [0.3, -1.2, 2.0];
        assert_eq!(gn_norm(&u, &[1.0; 3]).unwrap(), step_l2_norm(&u));
        assert_eq!(gn_norm(&[0.0; 3], &[2.0; 3]).unwrap(), 0.0);
        assert_abs_diff_eq!(gn_norm(&[1.0, 1.0], &[2.0, 2.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        assert!(matches!(gn_norm(&[1.0, 1.0], &[1.0, 0.0]), Err(Error::NonpositiveWeight { index: 1 })));

        assert_eq!(sup_norm(&[-3.0, 2.0]), 3.0);
        assert_eq!(sup_norm(&[0.0]), 0.0);
        assert_eq!(sup_norm(&[5.0, 5.0]), 5.0);
    }

    #[test]
    fn step_norm_is_exact_l2_of_step_function() {
        // step function 1 on (0,1/4], -2 on (1/4,1/2], 0 elsewhere: ∫ = 1/4 + 1
        let u = [1.0, -2.0, 0.0, 0.0];
        assert_abs_diff_eq!(step_l2_norm(&u), (1.25f64).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn restriction_examples() {
        assert_eq!(restrict_to_coarse(&[1.0, 1.0, 3.0, 3.0], 2).unwrap(), vec![1.0, 3.0]);
        assert_eq!(restrict_to_coarse(&[0.0, 2.0, 0.0, 2.0], 2).unwrap(), vec![1.0, 1.0]);
        assert_eq!(restrict_to_coarse(&[7.0; 8], 4).unwrap(), vec![7.0; 4]);
        assert!(matches!(restrict_to_coarse(&[1.0; 6], 4), Err(Error::Divisibility { .. })));
    }

    #[test]
    fn spacetime_examples() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let a = traj(times.clone(), times.iter().map(|_| vec![1.0, 2.0]).collect());
        assert_eq!(spacetime_l2_error(&a, &a).unwrap(), 0.0);

        let b = traj(times.clone(), times.iter().map(|_| vec![1.5, 2.5]).collect());
        assert_abs_diff_eq!(spacetime_l2_error(&a, &b).unwrap(), 0.5, epsilon = 1e-14);

        let decay = traj(times.clone(), times.iter().map(|t| vec![(-t).exp(); 4]).collect());
        let zero = traj(times.clone(), times.iter().map(|_| vec![0.0; 2]).collect());
        // closed form √((1−e⁻²)/2); trapezoid error O(h²)
        let exact = ((1.0 - (-2.0f64).exp()) / 2.0).sqrt();
        assert_abs_diff_eq!(exact, 0.65752, epsilon = 1e-5);
        assert_abs_diff_eq!(spacetime_l2_error(&decay, &zero).unwrap(), exact, epsilon = 1e-4);

        let short = traj(times[..50].to_vec(), vec![vec![0.0; 2]; 50]);
        assert!(matches!(spacetime_l2_error(&a, &short), Err(Error::TimeGridMismatch(_))));
        let shifted = traj(times.iter().map(|t| t + 0.001).collect(), vec![vec![0.0; 2]; 101]);
        assert!(matches!(spacetime_l2_error(&a, &shifted), Err(Error::TimeGridMismatch(_))));
    }

    #[test]
    fn kernel_distance_examples() {
        for n in [2, 16, 100] {
            let d = kernel_l4_distance(&GraphonSpec::constant(1.0), &DensitySchedule::power(0.5), n).unwrap();
            assert_eq!(d, 0.0);
            let block = GraphonSpec::block(vec![0.0, 0.5, 1.0], vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
            assert_eq!(kernel_l4_distance(&block, &DensitySchedule::power(0.5), n).unwrap(), 0.0);
        }
        let pl = GraphonSpec::power_law(0.2);
        let sched = DensitySchedule::power(0.5);
        let d64 = kernel_l4_distance(&pl, &sched, 64).unwrap();
        let d1024 = kernel_l4_distance(&pl, &sched, 1024).unwrap();
        assert!(d1024 < d64, "{d1024} vs {d64}");
        assert!(matches!(
            kernel_l4_distance(&GraphonSpec::power_law(0.3), &sched, 8),
            Err(Error::Integrability { p: 4 })
        ));
    }

    #[test]
    fn dissipation_examples() {
        let (l, r) = dissipation_identity_check(&[0.0, 1.0, 1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!((l, r), (-1.0, -1.0));
        let (l, r) = dissipation_identity_check(&[0.0, 1.0, 1.0, 0.0], &[4.0, 4.0]).unwrap();
        assert_eq!((l, r), (0.0, 0.0));
        assert!(matches!(
            dissipation_identity_check(&[0.0, 1.0, 2.0, 0.0], &[0.0, 1.0]),
            Err(Error::Asymmetry { .. })
        ));

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 8;
        let mut w = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = rng.gen_range(-1.0..1.0);
                w[i * n + j] = v;
                w[j * n + i] = v;
            }
        }
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (l, r) = dissipation_identity_check(&w, &theta).unwrap();
        let wn = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let tn = theta.iter().map(|x| x * x).sum::<f64>();
        assert!((l - r).abs() <= 1e-12 * wn * tn);
    }

    #[test]
    fn median_and_iqr() {
        assert_eq!(median_iqr(&[3.0, 1.0, 2.0]), Some((2.0, 1.0)));
        assert_eq!(median_iqr(&[4.0, 1.0, 2.0, 3.0]), Some((2.5, 1.5)));
        assert_eq!(median_iqr(&[]), None);
    }

    #[test]
    fn report_aggregates_skip_failures() {
        let mut a = ErrorRecord::new(8, 1);
        a.spacetime_l2 = Some(1.0);
        let mut b = ErrorRecord::new(8, 2);
        b.spacetime_l2 = Some(3.0);
        let c = ErrorRecord::failure(8, 3, "blew up");
        let mut d = ErrorRecord::new(16, 1);
        d.spacetime_l2 = Some(0.5);
        let r = ErrorReport::new("continuum_convergence", GraphonSpec::constant(1.0), Some(0.5), 1.0, 64, vec![a, b, c, d]);
        assert_eq!(r.medians(), vec![(8, 2.0), (16, 0.5)]);
        assert_eq!(r.failed_records().count(), 1);
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        for key in ["study", "graphon", "gamma", "T", "M", "records", "aggregates"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        let rec = &json["records"][0];
        for key in ["n", "seed", "spacetime_l2", "sup_gn_gap"] {
            assert!(rec.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["graphon"]["kind"], "constant");
    }

    fn arb_traj(n: usize) -> impl Strategy<Value = Trajectory> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, n), 6).prop_map(|states| {
            let times = (0..6).map(|k| k as f64 * 0.2).collect();
            traj(times, states)
        })
    }

    proptest! {
        #[test]
        fn restriction_contracts(v in prop::collection::vec(-10.0f64..10.0, 16), k in 0usize..4) {
            let n = 16 >> k;
            let c = restrict_to_coarse(&v, n).unwrap();
            prop_assert!(step_l2_norm(&c) <= step_l2_norm(&v) + 1e-12);
        }

        #[test]
        fn spacetime_error_is_pseudometric(a in arb_traj(8), b in arb_traj(8), c in arb_traj(4)) {
            let ab = spacetime_l2_error(&a, &b).unwrap();
            let ba = spacetime_l2_error(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(spacetime_l2_error(&a, &a).unwrap(), 0.0);
            // triangle on the common coarse grid
            let ac = spacetime_l2_error(&a, &c).unwrap();
            let bc = spacetime_l2_error(&b, &c).unwrap();
            let ab4 = spacetime_l2_error(&restrict_trajectory(&a, 4).unwrap(), &restrict_trajectory(&b, 4).unwrap()).unwrap();
            prop_assert!(ab4 <= ac + bc + 1e-10);
        }
    }
}
