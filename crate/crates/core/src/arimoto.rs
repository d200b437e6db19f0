//! The Arimoto-Blahut iteration and fixed-point classification.

use serde::Serialize;

use crate::channel::{self, ChannelMatrix, InputDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationSettings {
    pub max_iters: usize,
    /// Stop when ‖λ^{N+1} − λ^N‖ falls below this.
    pub fixed_point_tol: f64,
    pub prune_tol: f64,
    pub prune_margin: f64,
    /// Support pruning; off reproduces the plain iteration.
    pub prune: bool,
    /// Largest Kuhn-Tucker residual accepted as converged.
    pub kt_tol: f64,
    pub class_tol: ClassTol,
}

impl Default for IterationSettings {
    fn default() -> Self {
        IterationSettings {
            max_iters: 1_000_000,
            fixed_point_tol: 1e-14,
            prune_tol: 1e-12,
            prune_margin: 1e-9,
            prune: true,
            kt_tol: 1e-8,
            class_tol: ClassTol::SOLVER,
        }
    }
}

impl IterationSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.fixed_point_tol > 0.0
            && self.prune_tol > 0.0
            && self.prune_margin > 0.0
            && self.kt_tol > 0.0
            && self.class_tol.mass > 0.0
            && self.class_tol.nats > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation("iteration settings must be positive".into()))
        }
    }
}

/// Thresholds for the type-I/II/III split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassTol {
    /// λ_i above this is type-I.
    pub mass: f64,
    /// Zero-mass indices with C − D_i at most this are type-II.
    pub nats: f64,
}

impl ClassTol {
    pub const SOLVER: ClassTol = ClassTol { mass: 1e-9, nats: 1e-6 };
    pub const ANALYZE: ClassTol = ClassTol { mass: 1e-9, nats: 1e-2 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Solved,
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndexType {
    #[serde(rename = "I")]
    One,
    #[serde(rename = "II")]
    Two,
    #[serde(rename = "III")]
    Three,
}

fn one_based<S: serde::Serializer>(v: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|i| i + 1))
}

/// λ*, Q*, C and the index classification. Index sets are 0-based in Rust and
/// 1-based when serialized.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointReport {
    pub lambda_star: Vec<f64>,
    pub q_star: Vec<f64>,
    pub capacity: f64,
    pub divergences: Vec<f64>,
    #[serde(serialize_with = "one_based")]
    pub type1: Vec<usize>,
    #[serde(serialize_with = "one_based")]
    pub type2: Vec<usize>,
    #[serde(serialize_with = "one_based")]
    pub type3: Vec<usize>,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub kt_residual: f64,
    /// max_i |F(λ*)_i − λ*_i|.
    pub fixed_point_residual: f64,
    pub provenance: Provenance,
    pub iterations: usize,
    pub pruned: Vec<usize>,
    pub converged: bool,
}

impl FixedPointReport {
    pub fn m(&self) -> usize {
        self.lambda_star.len()
    }

    pub fn index_type(&self, i: usize) -> IndexType {
        if self.type1.contains(&i) {
            IndexType::One
        } else if self.type2.contains(&i) {
            IndexType::Two
        } else {
            IndexType::Three
        }
    }

    /// D*_i − C as used by the analysis: exactly 0 on type-I/II indices.
    pub fn exponent_gap(&self, i: usize) -> f64 {
        match self.index_type(i) {
            IndexType::Three => self.divergences[i] - self.capacity,
            _ => 0.0,
        }
    }

    /// e^{D*_i − C} with the type-I/II snap.
    pub fn theta_factors(&self) -> Vec<f64> {
        (0..self.m()).map(|i| self.exponent_gap(i).exp()).collect()
    }
}

/// D_i for every row, +∞ where P^i charges an output that Q does not.
fn divergences_lenient(lambda: &[f64], phi: &ChannelMatrix) -> Result<Vec<f64>> {
    let q = channel::output_vector(lambda, phi)?;
    Ok(phi
        .rows()
        .iter()
        .map(|r| channel::kl_divergence(r, &q).unwrap_or(f64::INFINITY))
        .collect())
}

fn ab_step_raw(lambda: &[f64], phi: &ChannelMatrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = divergences_lenient(lambda, phi)?;
    let mut w: Vec<f64> = lambda
        .iter()
        .zip(&d)
        .map(|(&l, &d)| if l > 0.0 { l.ln() + d } else { f64::NEG_INFINITY })
        .collect();
    let top = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Err(Error::Validation("input distribution has no mass".into()));
    }
    if !top.is_finite() {
        return Err(Error::Validation("output probability vanishes on a used column".into()));
    }
    w.iter_mut().for_each(|x| *x = (*x - top).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    Ok((w, d))
}

/// One Arimoto-Blahut step λ′_i = λ_i e^{D_i} / Σ λ_k e^{D_k}, in log space.
pub fn ab_step(lambda: &InputDistribution, phi: &ChannelMatrix) -> Result<InputDistribution> {
    let (next, _) = ab_step_raw(lambda.as_slice(), phi)?;
    Ok(InputDistribution::normalized(next)?)
}

/// The iteration map on an unconstrained real vector; only needs λΦ > 0.
pub fn extended_f(lambda: &[f64], phi: &ChannelMatrix) -> Result<Vec<f64>> {
    let q = channel::output_vector(lambda, phi)?;
    if let Some(j) = q.iter().position(|&x| x <= 0.0) {
        return Err(Error::Domain(format!("induced output probability Q_{} = {} is not positive", j + 1, q[j])));
    }
    let d = channel::divergences_to(phi, &q)?;
    let num: Vec<f64> = lambda.iter().zip(&d).map(|(l, d)| l * d.exp()).collect();
    let den: f64 = num.iter().sum();
    Ok(num.into_iter().map(|x| x / den).collect())
}

fn build_report(
    phi: &ChannelMatrix,
    lambda: &[f64],
    class: ClassTol,
    provenance: Provenance,
    iterations: usize,
    pruned: Vec<usize>,
    kt_tol: f64,
) -> Result<FixedPointReport> {
    let q = channel::output_vector(lambda, phi)?;
    if let Some(j) = q.iter().position(|&x| x <= 0.0) {
        return Err(Error::Validation(format!("λΦ has a zero component at output {}", j + 1)));
    }
    let d = channel::divergences_to(phi, &q)?;
    let m = phi.m();
    let type1: Vec<usize> = (0..m).filter(|&i| lambda[i] > class.mass).collect();
    if type1.len() < 2 {
        return Err(Error::Validation(format!(
            "at least two input symbols need mass above {:e}; found {}",
            class.mass,
            type1.len()
        )));
    }
    let capacity: f64 = type1.iter().map(|&i| lambda[i] * d[i]).sum();
    let (type2, type3): (Vec<usize>, Vec<usize>) =
        (0..m).filter(|i| !type1.contains(i)).partition(|&i| capacity - d[i] <= class.nats);
    let mut kt = 0.0f64;
    for i in 0..m {
        let r = if type1.contains(&i) || type2.contains(&i) {
            (d[i] - capacity).abs()
        } else {
            (d[i] - capacity).max(0.0)
        };
        kt = kt.max(r);
    }
    // Mass below the classification threshold counts as zero.
    let lam_clean: Vec<f64> = (0..m).map(|i| if type1.contains(&i) { lambda[i] } else { 0.0 }).collect();
    let f = extended_f(&lam_clean, phi)?;
    let fp_res = f.iter().zip(&lam_clean).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    Ok(FixedPointReport {
        lambda_star: lambda.to_vec(),
        q_star: q,
        capacity,
        divergences: d,
        m1: type1.len(),
        m2: type2.len(),
        m3: type3.len(),
        type1,
        type2,
        type3,
        kt_residual: kt,
        fixed_point_residual: fp_res,
        provenance,
        iterations,
        pruned,
        converged: kt <= kt_tol,
    })
}

/// Solve for the capacity-achieving distribution starting from uniform.
pub fn solve_capacity(phi: &ChannelMatrix, settings: &IterationSettings) -> Result<FixedPointReport> {
    settings.validate()?;
    let m = phi.m();
    let mut lam = vec![1.0 / m as f64; m];
    let mut pruned = Vec::new();
    let mut iters = 0;
    while iters < settings.max_iters {
        iters += 1;
        let (next, d) = ab_step_raw(&lam, phi)?;
        if settings.prune {
            let c_est: f64 = lam.iter().zip(&d).filter(|(l, _)| **l > 0.0).map(|(l, d)| l * d).sum();
            let drop: Vec<usize> = (0..m)
                .filter(|&i| next[i] > 0.0 && next[i] < settings.prune_tol && d[i] < c_est - settings.prune_margin)
                .collect();
            if !drop.is_empty() {
                for &i in &drop {
                    lam[i] = 0.0;
                }
                let s: f64 = lam.iter().sum();
                lam.iter_mut().for_each(|x| *x /= s);
                pruned.extend(drop);
                continue;
            }
        }
        let change = next.iter().zip(&lam).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        lam = next;
        if change < settings.fixed_point_tol {
            break;
        }
    }
    pruned.sort_unstable();
    build_report(phi, &lam, settings.class_tol, Provenance::Solved, iters, pruned, settings.kt_tol)
}

/// Treat a given λ as the fixed point and classify around it.
pub fn analyze_at(phi: &ChannelMatrix, lambda: &InputDistribution, class: ClassTol) -> Result<FixedPointReport> {
    if lambda.len() != phi.m() {
        return Err(Error::Dimension { what: "fixed point", expected: phi.m(), got: lambda.len() });
    }
    build_report(phi, lambda.as_slice(), class, Provenance::UserSupplied, 0, Vec::new(), f64::INFINITY)
        .map(|mut r| {
            r.converged = r.kt_residual <= class.nats;
            r
        })
}

pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// C(N+1,N) from two consecutive iterates, straight from its definition.
pub fn c_next(prev: &[f64], next: &[f64], phi: &ChannelMatrix) -> Result<f64> {
    let q = channel::output_vector(prev, phi)?;
    let mut c = entropy(next);
    for (i, row) in phi.rows().iter().enumerate() {
        if next[i] <= 0.0 {
            continue;
        }
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                c += next[i] * p * (prev[i] * p / q[j]).ln();
            }
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CBoundRow {
    pub n: usize,
    pub c_next: f64,
    pub gap: f64,
    pub bound: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CBoundDiagnostics {
    /// ln m − h(λ*).
    pub bound_constant: f64,
    pub rows: Vec<CBoundRow>,
    /// No row violates 0 ≤ C − C(N+1,N) ≤ bound (up to 1e-12).
    pub within_bound: bool,
}

/// C(N+1,N) along a trace of iterates λ⁰, λ¹, … and the (ln m − h(λ*))/N bound.
pub fn c_bound_diagnostics(
    lambdas: &[Vec<f64>],
    fp: &FixedPointReport,
    phi: &ChannelMatrix,
) -> Result<CBoundDiagnostics> {
    let k = (phi.m() as f64).ln() - entropy(&fp.lambda_star);
    let mut rows = Vec::new();
    let mut ok = true;
    for n in 0..lambdas.len().saturating_sub(1) {
        let c = c_next(&lambdas[n], &lambdas[n + 1], phi)?;
        let gap = fp.capacity - c;
        let bound = if n == 0 { f64::INFINITY } else { k / n as f64 };
        ok &= gap >= -1e-12 && gap <= bound + 1e-12;
        rows.push(CBoundRow { n, c_next: c, gap, bound, slack: bound - gap });
    }
    Ok(CBoundDiagnostics { bound_constant: k, rows, within_bound: ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paper;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ab_step_identity_uniform() {
        let id = ChannelMatrix::identity(3);
        let l = ab_step(&InputDistribution::uniform(3), &id).unwrap();
        for x in l.as_slice() {
            assert_abs_diff_eq!(*x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ab_step_keeps_zeros() {
        let l = InputDistribution::new(vec![0.5, 0.5, 0.0]).unwrap();
        let next = ab_step(&l, &paper::phi2()).unwrap();
        assert_eq!(next.as_slice()[2], 0.0);
        assert_abs_diff_eq!(next.as_slice()[0], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ab_step_matches_direct_formula() {
        // Direct real-space evaluation of λ_i e^{D_i} / Σ λ_k e^{D_k}.
        let phi = paper::phi1();
        let l = [1.0 / 3.0; 3];
        let q: Vec<f64> = (0..3).map(|j| (0..3).map(|i| l[i] * phi.get(i, j)).sum()).collect();
        let e: Vec<f64> = (0..3)
            .map(|i| (0..3).map(|j| phi.get(i, j) * (phi.get(i, j) / q[j]).ln()).sum::<f64>().exp() * l[i])
            .collect();
        let s: f64 = e.iter().sum();
        let next = ab_step(&InputDistribution::uniform(3), &phi).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(next.as_slice()[i], e[i] / s, epsilon = 1e-15);
        }
    }

    #[test]
    fn extended_f_off_simplex() {
        let f = extended_f(&[0.44, 0.43, 0.14], &paper::phi1()).unwrap();
        assert!(f.iter().all(|x| x.is_finite()));
        assert!(extended_f(&[-1.0, 0.0, 0.0], &paper::phi1()).is_err());
    }

    #[test]
    fn solve_identity() {
        let r = solve_capacity(&ChannelMatrix::identity(3), &IterationSettings::default()).unwrap();
        assert_abs_diff_eq!(r.capacity, 3f64.ln(), epsilon = 1e-14);
        assert!(r.converged);
        assert_eq!(r.m1, 3);
    }

    #[test]
    fn solve_phi1_and_phi4() {
        let r = solve_capacity(&paper::phi1(), &IterationSettings::default()).unwrap();
        for (g, w) in r.lambda_star.iter().zip([0.431, 0.431, 0.138]) {
            assert!((g - w).abs() < 2e-3);
        }
        assert!(r.converged && r.kt_residual < 1e-8 && r.fixed_point_residual < 1e-9);
        let r = solve_capacity(&paper::phi4(), &IterationSettings::default()).unwrap();
        for (g, w) in r.lambda_star.iter().zip([0.352, 0.352, 0.296]) {
            assert!((g - w).abs() < 2e-3);
        }
    }

    #[test]
    fn solve_prunes_type3() {
        let r = solve_capacity(&paper::phi3(), &IterationSettings::default()).unwrap();
        assert_eq!(r.type1, vec![0, 1]);
        assert_eq!(r.type3, vec![2]);
        assert_eq!(r.pruned, vec![2]);
        assert!(r.converged);
    }

    #[test]
    fn analyze_at_classification() {
        let half = InputDistribution::new(vec![0.5, 0.5, 0.0]).unwrap();
        let r = analyze_at(&paper::phi2(), &half, ClassTol { mass: 1e-9, nats: 1e-2 }).unwrap();
        assert_eq!((r.type1.clone(), r.type2.clone()), (vec![0, 1], vec![2]));
        assert_eq!(r.provenance, Provenance::UserSupplied);
        let r = analyze_at(&paper::phi3(), &half, ClassTol::ANALYZE).unwrap();
        assert_eq!(r.type3, vec![2]);
        let solved = solve_capacity(&paper::phi1(), &IterationSettings::default()).unwrap();
        let l = InputDistribution::new(solved.lambda_star.clone()).unwrap();
        assert_eq!(analyze_at(&paper::phi1(), &l, ClassTol::ANALYZE).unwrap().m1, 3);
    }

    #[test]
    fn c_next_at_fixed_point_equals_capacity() {
        let r = solve_capacity(&paper::phi1(), &IterationSettings::default()).unwrap();
        let c = c_next(&r.lambda_star, &r.lambda_star, &paper::phi1()).unwrap();
        assert_abs_diff_eq!(c, r.capacity, epsilon = 1e-10);
        let k = 3f64.ln() - entropy(&[0.431, 0.431, 0.138]);
        assert_abs_diff_eq!(k, 0.0999, epsilon = 1e-3);
        let u = vec![0.5, 0.5];
        assert_abs_diff_eq!(c_next(&u, &u, &ChannelMatrix::identity(2)).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }
}
