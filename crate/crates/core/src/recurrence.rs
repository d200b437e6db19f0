//! Second-order recurrence, its reduction to the type-II coordinates, and the
//! canonical form ξ′_i = ξ_i − ξ_i Σ q_{ii′} ξ_{i′}.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{self, Analysis, DerivativeTensors, Diagonalization, HessianTensor};
use crate::arimoto::{self, FixedPointReport};
use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedModel {
    /// I ∪ III first, type-II last (0-based original indices).
    pub order: Vec<usize>,
    pub m_prime: usize,
    pub m2: usize,
    /// Original indices of the type-II coordinates, in model order.
    pub type2: Vec<usize>,
    /// S_{ii′}, rows type-II, columns original indices.
    pub s: Matrix,
    pub t: Matrix,
    pub r: Matrix,
    pub sigma: Vec<f64>,
    /// Canonical coefficients p_{ii′} = −r_{ii′} σ_{i′}.
    pub p: Matrix,
    /// Predicted lim N·μ̄^N in original index order.
    pub limits_full: Vec<f64>,
    pub diag_dominant: bool,
    pub sigma_positive: bool,
    /// Max gap between the direct Hessian term and its reduced form.
    pub consistency_error: f64,
}

/// Step-1 substitution: μ̄_{I,III} = −μ̄_II A₂ A₁⁻¹, returned in original order.
pub fn lift(d: &Diagonalization, mu_ii: &[f64], a1_inv: &Matrix) -> Vec<f64> {
    let m = d.a.rows;
    let mp = d.a1.rows;
    let x = d.a2.vec_mul(mu_ii);
    let y = a1_inv.vec_mul(&x);
    let mut full = vec![0.0; m];
    for k in 0..mp {
        full[d.order[k]] = -y[k];
    }
    for (c, &i) in d.order[mp..].iter().enumerate() {
        full[i] = mu_ii[c];
    }
    full
}

pub fn build_reduced_model(
    fp: &FixedPointReport,
    tensors: &DerivativeTensors,
    diag: &Diagonalization,
    hessian: &HessianTensor,
) -> Result<ReducedModel> {
    if fp.type2.is_empty() {
        return Err(Error::NoTypeTwo);
    }
    let m = fp.m();
    let mp = m - fp.m2;
    let type2: Vec<usize> = diag.order[mp..].to_vec();
    let m2 = type2.len();
    let zeta = if mp > 0 { numerics::invert(&diag.a1)? } else { Matrix::zeros(0, 0) };
    let s = Matrix::from_fn(m2, m, |r, c| analysis::s_coefficients(fp, tensors, type2[r])[c]);
    // T_{ii′} = −Σ_{k,k′} a_{i′k} ζ_{kk′} S_{ik′}, k′ running over I ∪ III in model order.
    let t = Matrix::from_fn(m2, m2, |i, ip| {
        let mut acc = 0.0;
        for k in 0..mp {
            for kp in 0..mp {
                acc += diag.a2[(ip, k)] * zeta[(k, kp)] * s[(i, diag.order[kp])];
            }
        }
        -acc
    });
    let r = Matrix::from_fn(m2, m2, |i, ip| t[(i, ip)] + tensors.d1[(type2[i], type2[ip])]);
    let sigma = numerics::lin_solve(&r, &vec![-1.0; m2]).map_err(|e| match e {
        Error::Singular { .. } => Error::CanonicalUnavailable,
        other => other,
    })?;
    let p = Matrix::from_fn(m2, m2, |i, ip| -r[(i, ip)] * sigma[ip]);
    let diag_dominant =
        (0..m2).all(|i| p[(i, i)] > (0..m2).filter(|&k| k != i).map(|k| p[(i, k)]).sum::<f64>());
    let sigma_positive = sigma.iter().all(|&x| x > 0.0);
    let limits_full = lift(diag, &sigma, &zeta);

    // Check the reduction against the direct Hessian term on random points.
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut err = 0.0f64;
    for _ in 0..8 {
        let mu_ii: Vec<f64> = (0..m2).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let mu = lift(diag, &mu_ii, &zeta);
        for (c, &i) in type2.iter().enumerate() {
            let direct = 0.5 * numerics::dot(&hessian.h[i].mul_vec(&mu), &mu);
            let reduced: f64 = mu_ii[c] * (0..m2).map(|k| (s[(c, type2[k])] + t[(c, k)]) * mu_ii[k]).sum::<f64>();
            err = err.max((direct - reduced).abs());
        }
    }
    Ok(ReducedModel {
        order: diag.order.clone(),
        m_prime: mp,
        m2,
        type2,
        s,
        t,
        r,
        sigma,
        p,
        limits_full,
        diag_dominant,
        sigma_positive,
        consistency_error: err,
    })
}

/// Convenience wrapper over an [`Analysis`].
pub fn reduced_model_for(fp: &FixedPointReport, an: &Analysis) -> Result<ReducedModel> {
    let diag = an
        .spectral
        .diagonalization
        .as_ref()
        .ok_or_else(|| Error::Domain(an.diagonalization_error.clone().unwrap_or_default()))?;
    build_reduced_model(fp, &an.tensors, diag, &an.hessian)
}

/// A recorded iteration: `values[N]` is the state after N steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub values: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.values.last().expect("trajectory holds the initial state")
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// N·x^N at step N.
    pub fn scaled(&self, n: usize) -> Vec<f64> {
        self.values[n].iter().map(|x| n as f64 * x).collect()
    }

    /// Largest |Σ_i x_i^N| over the run.
    pub fn max_mass_drift(&self) -> f64 {
        self.values.iter().map(|v| v.iter().sum::<f64>().abs()).fold(0.0, f64::max)
    }
}

/// μ̄^{N+1} = μ̄^N J + ½ μ̄^N H ᵗμ̄^N.
///
/// Aborts when ‖μ̄‖ exceeds max(1, ‖μ̄⁰‖).
pub fn second_order_iterate(mu0: &[f64], jac: &Matrix, hessian: &HessianTensor, steps: usize) -> Result<Trajectory> {
    let m = jac.rows;
    if mu0.len() != m {
        return Err(Error::Dimension { what: "initial deviation", expected: m, got: mu0.len() });
    }
    let s: f64 = mu0.iter().sum();
    if s.abs() > 1e-12 {
        return Err(Error::Validation(format!("initial deviation must sum to 0, sums to {s:e}")));
    }
    let guard = numerics::norm2(mu0).max(1.0);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(mu0.to_vec());
    let mut mu = mu0.to_vec();
    for step in 1..=steps {
        let mut next = jac.vec_mul(&mu);
        for (i, x) in next.iter_mut().enumerate() {
            *x += 0.5 * numerics::dot(&hessian.h[i].mul_vec(&mu), &mu);
        }
        guarded(step, &next, guard)?;
        values.push(next.clone());
        mu = next;
    }
    Ok(Trajectory { values })
}

fn guarded(step: usize, v: &[f64], guard: f64) -> Result<()> {
    let norm = numerics::norm2(v);
    if norm <= guard {
        Ok(())
    } else {
        Err(Error::Diverged { step, norm })
    }
}

/// μ̄_i′ = μ̄_i + μ̄_i Σ r_{ii′} μ̄_{i′} on the type-II coordinates.
pub fn reduced_iterate(mu_ii0: &[f64], model: &ReducedModel, steps: usize) -> Result<Trajectory> {
    if mu_ii0.len() != model.m2 {
        return Err(Error::Dimension { what: "reduced initial state", expected: model.m2, got: mu_ii0.len() });
    }
    let guard = numerics::norm2(mu_ii0).max(1.0);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(mu_ii0.to_vec());
    let mut mu = mu_ii0.to_vec();
    for step in 1..=steps {
        let rm = model.r.mul_vec(&mu);
        let next: Vec<f64> = mu.iter().zip(&rm).map(|(x, y)| x + x * y).collect();
        guarded(step, &next, guard)?;
        values.push(next.clone());
        mu = next;
    }
    Ok(Trajectory { values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialSumCheck {
    /// q_{top,top} − Σ_{i′≠bottom} q_{bottom,i′}.
    pub k: f64,
    pub bound: f64,
    pub max_partial_sum: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalTrace {
    pub xi: Trajectory,
    /// 0 < ξ^N_i ≤ 1/2 throughout.
    pub bounds_ok: bool,
    pub strictly_decreasing: bool,
    /// Descending order of ξ⁰ (stable), the ordering being monitored.
    pub ordering: Vec<usize>,
    /// (N, i, i′) with ξ_i^N < ξ_{i′}^N although i precedes i′; capped.
    pub ordering_violations: Vec<(usize, usize, usize)>,
    pub violation_count: usize,
    /// Smallest N₀ after which the ordering holds to the horizon.
    pub n0: usize,
    /// Present when m2 ≥ 2 and K > 0.
    pub partial_sums: Option<PartialSumCheck>,
}

impl CanonicalTrace {
    pub fn n_xi(&self, n: usize) -> Vec<f64> {
        self.xi.scaled(n)
    }
}

const MAX_RECORDED_VIOLATIONS: usize = 100;

/// Iterate the canonical form and run the invariant monitors.
pub fn canonical_iterate(xi0: &[f64], q: &Matrix, steps: usize) -> Result<CanonicalTrace> {
    let k = xi0.len();
    if q.rows != k || q.cols != k {
        return Err(Error::Dimension { what: "canonical coefficients", expected: k, got: q.rows });
    }
    if xi0.iter().any(|&x| !(x > 0.0 && x <= 0.5)) {
        return Err(Error::Domain("canonical initial values must lie in (0, 1/2]".into()));
    }
    for i in 0..k {
        let row = q.row(i);
        let s: f64 = row.iter().sum();
        if row.iter().any(|&x| x < 0.0) || (s - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("row {} of q is not a probability vector", i + 1)));
        }
    }
    let mut ordering: Vec<usize> = (0..k).collect();
    ordering.sort_by(|&a, &b| xi0[b].total_cmp(&xi0[a]));
    let mut values = Vec::with_capacity(steps + 1);
    values.push(xi0.to_vec());
    let mut xi = xi0.to_vec();
    let mut bounds_ok = true;
    let mut decreasing = true;
    let mut violations = Vec::new();
    let mut count = 0;
    let mut n0 = 0;
    let check_order = |n: usize, v: &[f64], violations: &mut Vec<(usize, usize, usize)>, count: &mut usize| {
        let mut ok = true;
        for w in ordering.windows(2) {
            if v[w[0]] < v[w[1]] {
                ok = false;
                *count += 1;
                if violations.len() < MAX_RECORDED_VIOLATIONS {
                    violations.push((n, w[0], w[1]));
                }
            }
        }
        ok
    };
    for n in 1..=steps {
        let qx = q.mul_vec(&xi);
        let next: Vec<f64> = xi.iter().zip(&qx).map(|(x, y)| x - x * y).collect();
        bounds_ok &= next.iter().all(|&x| x > 0.0 && x <= 0.5);
        decreasing &= next.iter().zip(&xi).all(|(a, b)| a < b);
        if !check_order(n, &next, &mut violations, &mut count) {
            n0 = n + 1;
        }
        values.push(next.clone());
        xi = next;
    }
    let n0 = n0.min(steps);
    let partial_sums = if k >= 2 {
        let (top, bottom) = (ordering[0], ordering[k - 1]);
        let kk = q[(top, top)] - (0..k).filter(|&i| i != bottom).map(|i| q[(bottom, i)]).sum::<f64>();
        (kk > 0.0).then(|| {
            let bound = values[n0][top] / values[n0][bottom] / kk;
            let mut acc = 0.0;
            let mut max_sum = 0.0f64;
            for v in &values[n0..] {
                acc += v[top] - v[bottom];
                max_sum = max_sum.max(acc);
            }
            PartialSumCheck { k: kk, bound, max_partial_sum: max_sum, ok: max_sum <= bound }
        })
    } else {
        None
    };
    Ok(CanonicalTrace {
        xi: Trajectory { values },
        bounds_ok,
        strictly_decreasing: decreasing,
        ordering,
        ordering_violations: violations,
        violation_count: count,
        n0,
        partial_sums,
    })
}

/// ν^{N+1} = ν^N − (ν^N)².
pub fn scalar_logistic(nu0: f64, steps: usize) -> Result<Vec<f64>> {
    if !(nu0 > 0.0 && nu0 <= 0.5) {
        return Err(Error::Domain(format!("ν⁰ = {nu0} is outside (0, 1/2]")));
    }
    let mut out = Vec::with_capacity(steps + 1);
    let mut nu = nu0;
    out.push(nu);
    for _ in 0..steps {
        nu -= nu * nu;
        out.push(nu);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivisibilityResult {
    /// Column of A being tested.
    pub column: usize,
    pub theta: f64,
    /// max |(F(λ) − λ*)·a| over samples with μ·a = 0.
    pub max_abs: f64,
    /// `max_abs` / ‖μ‖².
    pub max_ratio: f64,
    pub pass: bool,
}

/// For each non-unit right eigenvector a, sample λ = λ* + μ with Σμ = 0 and
/// μ·a = 0 and test whether (F(λ) − λ*)·a vanishes.
pub fn divisibility_check(
    phi: &ChannelMatrix,
    fp: &FixedPointReport,
    diag: &Diagonalization,
    trials: usize,
) -> Result<Vec<DivisibilityResult>> {
    let m = fp.m();
    let mp = m - fp.m2;
    let eps = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(113);
    let mut out = Vec::new();
    for c in 0..mp {
        let a = diag.a.column(c);
        let ones = vec![1.0; m];
        let (mut max_abs, mut max_ratio) = (0.0f64, 0.0f64);
        for _ in 0..trials {
            // Project a random direction off 1 and a (Gram-Schmidt).
            let mut mu: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u1: Vec<f64> = ones.iter().map(|x| x / (m as f64).sqrt()).collect();
            let p = numerics::dot(&mu, &u1);
            mu.iter_mut().zip(&u1).for_each(|(x, u)| *x -= p * u);
            let mut a_perp = a.clone();
            let pa = numerics::dot(&a_perp, &u1);
            a_perp.iter_mut().zip(&u1).for_each(|(x, u)| *x -= pa * u);
            let na = numerics::norm2(&a_perp);
            if na > 1e-12 {
                a_perp.iter_mut().for_each(|x| *x /= na);
                let pa = numerics::dot(&mu, &a_perp);
                mu.iter_mut().zip(&a_perp).for_each(|(x, u)| *x -= pa * u);
            }
            let nm = numerics::norm2(&mu);
            if nm < 1e-12 {
                continue;
            }
            mu.iter_mut().for_each(|x| *x *= eps / nm);
            let lam: Vec<f64> = fp.lambda_star.iter().zip(&mu).map(|(l, x)| l + x).collect();
            let f = match arimoto::extended_f(&lam, phi) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let dev: Vec<f64> = f.iter().zip(&fp.lambda_star).map(|(x, l)| x - l).collect();
            let v = numerics::dot(&dev, &a).abs();
            max_abs = max_abs.max(v);
            max_ratio = max_ratio.max(v / (eps * eps));
        }
        out.push(DivisibilityResult { column: c, theta: diag.theta[c], max_abs, max_ratio, pass: max_abs <= 1e-10 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::analyze;
    use crate::arimoto::{analyze_at, ClassTol};
    use crate::channel::InputDistribution;
    use crate::paper::{self, Builtin};

    fn model(b: Builtin) -> (FixedPointReport, Analysis, ReducedModel) {
        let phi = b.channel();
        let l = InputDistribution::new(b.stated_fixed_point().unwrap()).unwrap();
        let fp = analyze_at(&phi, &l, ClassTol::ANALYZE).unwrap();
        let an = analyze(&fp, &phi).unwrap();
        let rm = reduced_model_for(&fp, &an).unwrap();
        (fp, an, rm)
    }

    #[test]
    fn phi2_reduced_model() {
        let (_, _, rm) = model(Builtin::Phi2);
        assert!((rm.r[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((rm.sigma[0] - 1.0).abs() < 1e-12);
        for (g, w) in rm.limits_full.iter().zip([-0.5, -0.5, 1.0]) {
            assert!((g - w).abs() < 1e-12);
        }
        assert!(rm.consistency_error < 1e-10);
    }

    #[test]
    fn phi5_reduced_model() {
        let (_, _, rm) = model(Builtin::Phi5Equalized);
        for s in &rm.sigma {
            assert!((s - 1.389).abs() < 1e-3, "{s}");
        }
        for i in 0..3 {
            for k in 0..3 {
                let want = if i == k { 0.8 } else { 0.1 };
                assert!((rm.p[(i, k)] - want).abs() < 1e-3);
            }
            assert!((rm.p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        assert!(rm.diag_dominant && rm.sigma_positive);
        assert!(rm.consistency_error < 1e-10);
    }

    #[test]
    fn reduction_needs_type2() {
        let phi = paper::phi3();
        let fp = analyze_at(&phi, &InputDistribution::new(vec![0.5, 0.5, 0.0]).unwrap(), ClassTol::ANALYZE).unwrap();
        let an = analyze(&fp, &phi).unwrap();
        assert_eq!(reduced_model_for(&fp, &an), Err(Error::NoTypeTwo));
    }

    #[test]
    fn phi2_reduced_is_logistic() {
        let (_, _, rm) = model(Builtin::Phi2);
        let tr = reduced_iterate(&[0.5], &rm, 10_000).unwrap();
        let logistic = scalar_logistic(0.5, 10_000).unwrap();
        for (a, b) in tr.values.iter().zip(&logistic) {
            assert!((a[0] - b).abs() < 1e-15);
        }
        assert!((tr.scaled(10_000)[0] - 1.0).abs() < 1e-2);
        assert_eq!(reduced_iterate(&[0.0], &rm, 10).unwrap().last(), &[0.0]);
    }

    #[test]
    fn phi2_second_order_from_special_initial() {
        let (_, an, rm) = model(Builtin::Phi2);
        let s = rm.sigma[0];
        let tr = second_order_iterate(&[-s / 4.0, -s / 4.0, s / 2.0], &an.spectral.jacobian, &an.hessian, 10_000)
            .unwrap();
        assert!((tr.scaled(10_000)[2] - 1.0).abs() < 1e-2);
        assert!(tr.max_mass_drift() < 1e-12);
        let zero = second_order_iterate(&[0.0; 3], &an.spectral.jacobian, &an.hessian, 5).unwrap();
        assert!(zero.values.iter().all(|v| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn logistic_cases() {
        assert_eq!(scalar_logistic(0.5, 1).unwrap()[1], 0.25);
        for nu0 in [0.5, 0.1] {
            let v = scalar_logistic(nu0, 10_000).unwrap();
            assert!((10_000.0 * v[10_000] - 1.0).abs() < 1e-2);
        }
        assert!(scalar_logistic(0.6, 1).is_err());
        assert!(scalar_logistic(0.0, 1).is_err());
    }

    #[test]
    fn canonical_phi5_shape() {
        let q = Matrix::from_rows(&[vec![0.8, 0.1, 0.1], vec![0.1, 0.8, 0.1], vec![0.1, 0.1, 0.8]]).unwrap();
        let tr = canonical_iterate(&[0.5, 0.4, 0.3], &q, 10_000).unwrap();
        for x in tr.n_xi(10_000) {
            assert!((x - 1.0).abs() < 2e-2, "{x}");
        }
        assert_eq!(tr.violation_count, 0);
        assert!(tr.bounds_ok && tr.strictly_decreasing);
        assert!(tr.partial_sums.as_ref().unwrap().ok);
        let eq = canonical_iterate(&[0.5; 3], &q, 100).unwrap();
        assert!(eq.xi.values.iter().all(|v| (v[0] - v[1]).abs() <= 1e-15 * v[0] && (v[1] - v[2]).abs() <= 1e-15 * v[0]));
        let one = canonical_iterate(&[0.5], &Matrix::identity(1), 10_000).unwrap();
        assert!((one.n_xi(10_000)[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn divisibility_on_symmetric_channels() {
        for b in [Builtin::Phi2, Builtin::Phi5Equalized] {
            let (fp, an, _) = model(b);
            let d = an.spectral.diagonalization.as_ref().unwrap();
            let res = divisibility_check(&b.channel(), &fp, d, 5).unwrap();
            assert!(res.iter().all(|r| r.pass), "{:?}", res);
        }
    }
}
