//! Reference implementations and random instance generators for validation.
//!
//! Everything here exists to check the main solver paths from an independent
//! direction: the naive evaluators walk the defining formulas entry by entry
//! with their own scalar loops (no shared matrix assembly), the projected
//! gradient method solves the power-constrained subproblem by first-order
//! iteration with its own Jacobi eigensolver, and the scalar grid search
//! brute-forces the smallest instance of the whole design problem. Slow and
//! simple on purpose. Compiled only for tests and diagnostics (`oracle`
//! feature); not part of the solver path.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};
use crate::model::{BeamformerSet, Receiver, SystemModel};

/// Naive complex grid used by the term-by-term evaluators. Deliberately not
/// nalgebra: an independent arithmetic path.
type Grid = Vec<Vec<Complex64>>;

fn grid_of(m: &CMat) -> Grid {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn grid_to_mat(g: &Grid) -> CMat {
    CMat::from_fn(g.len(), g[0].len(), |i, j| g[i][j])
}

fn gzero(rows: usize, cols: usize) -> Grid {
    vec![vec![Complex64::new(0.0, 0.0); cols]; rows]
}

fn gmul(a: &Grid, b: &Grid) -> Grid {
    let (ra, ca, cb) = (a.len(), b.len(), b[0].len());
    let mut out = gzero(ra, cb);
    for i in 0..ra {
        for j in 0..cb {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..ca {
                acc += a[i][t] * b[t][j];
            }
            out[i][j] = acc;
        }
    }
    out
}

fn gadd(a: &Grid, b: &Grid) -> Grid {
    let mut out = a.clone();
    for i in 0..a.len() {
        for j in 0..a[0].len() {
            out[i][j] += b[i][j];
        }
    }
    out
}

fn gadj(a: &Grid) -> Grid {
    let (r, c) = (a.len(), a[0].len());
    let mut out = gzero(c, r);
    for i in 0..r {
        for j in 0..c {
            out[j][i] = a[i][j].conj();
        }
    }
    out
}

fn gtrace(a: &Grid) -> Complex64 {
    (0..a.len()).map(|i| a[i][i]).sum()
}

/// Noise covariance `σ₀²I + Σᵢ HᵢFᵢΣᵢFᵢᴴHᵢᴴ` evaluated with naive loops.
pub fn naive_noise_covariance(model: &SystemModel, bf: &BeamformerSet) -> CMat {
    let m = model.fc_antennas();
    let mut sn = gzero(m, m);
    for d in 0..m {
        sn[d][d] = Complex64::new(model.channel_noise_var(), 0.0);
    }
    for i in 0..model.num_sensors() {
        let hf = gmul(&grid_of(model.channel(i)), &grid_of(bf.mat(i)));
        let term = gmul(&gmul(&hf, &grid_of(model.sensor(i).noise_cov())), &gadj(&hf));
        sn = gadd(&sn, &term);
    }
    grid_to_mat(&sn)
}

/// Total MSE evaluated term by term from the defining error covariance.
pub fn naive_mse(model: &SystemModel, bf: &BeamformerSet, rx: &Receiver) -> f64 {
    let k = model.source_dim();
    let sigma_s = grid_of(model.source().covariance());
    let g = grid_of(rx.mat());
    let mut t = gzero(model.fc_antennas(), k);
    for i in 0..model.num_sensors() {
        let hfk = gmul(
            &gmul(&grid_of(model.channel(i)), &grid_of(bf.mat(i))),
            &grid_of(model.sensor(i).obs_matrix()),
        );
        t = gadd(&t, &hfk);
    }
    let gh = gadj(&g);
    let gt = gmul(&gh, &t); // Gᴴ T
    let term_signal = gtrace(&gmul(&gmul(&gt, &sigma_s), &gadj(&gt)));
    let term_cross = gtrace(&gmul(&gt, &sigma_s));
    let sn = grid_of(&naive_noise_covariance(model, bf));
    let term_noise = gtrace(&gmul(&gmul(&gh, &sn), &g));
    let term_source = gtrace(&sigma_s);
    (term_signal - term_cross - term_cross.conj() + term_noise + term_source).re
}

/// Transmit power `Tr{Fᵢ(KᵢΣ_sKᵢᴴ + Σᵢ)Fᵢᴴ}` evaluated with naive loops.
pub fn naive_transmit_power(model: &SystemModel, bf: &BeamformerSet, i: usize) -> f64 {
    let f = grid_of(bf.mat(i));
    let kmat = grid_of(model.sensor(i).obs_matrix());
    let inner = gadd(
        &gmul(&gmul(&kmat, &grid_of(model.source().covariance())), &gadj(&kmat)),
        &grid_of(model.sensor(i).noise_cov()),
    );
    gtrace(&gmul(&gmul(&f, &inner), &gadj(&f))).re
}

/// Central-difference gradient of `f` at `at`.
pub fn finite_diff_grad<F: Fn(&[f64]) -> f64>(f: F, at: &[f64], step: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(at.len());
    let mut x = at.to_vec();
    for i in 0..at.len() {
        x[i] = at[i] + step;
        let up = f(&x);
        x[i] = at[i] - step;
        let down = f(&x);
        x[i] = at[i];
        grad.push((up - down) / (2.0 * step));
    }
    grad
}

/// Cyclic-Jacobi eigendecomposition of a Hermitian matrix; independent of the
/// eigensolver used by the main code paths. Returns `(λ, U)` unordered with
/// `X = U diag(λ) Uᴴ`.
fn jacobi_hermitian_eigen(x: &Grid) -> (Vec<f64>, Grid) {
    let n = x.len();
    let mut a = x.clone();
    // Symmetrize defensively.
    for i in 0..n {
        for j in 0..n {
            let avg = (x[i][j] + x[j][i].conj()) * 0.5;
            a[i][j] = avg;
        }
    }
    let mut u = gzero(n, n);
    for i in 0..n {
        u[i][i] = Complex64::new(1.0, 0.0);
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + gtrace(&a).re.abs()) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.norm() == 0.0 {
                    continue;
                }
                // Unitary rotation J = [[c, s], [-s̄, c]] (acting on the p, q
                // plane) chosen so Jᴴ A J zeroes a[p][q]: absorb the phase of
                // apq into s and pick the classic real-Jacobi tangent for the
                // remaining 2x2 real symmetric block.
                let app = a[p][p].re;
                let aqq = a[q][q].re;
                let phase = apq / apq.norm();
                let tau = (aqq - app) / (2.0 * apq.norm());
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = phase * Complex64::new(t * c, 0.0);
                // A ← Jᴴ A J: columns first (A·J), then rows (Jᴴ·A).
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = akp * c - akq * s.conj();
                    a[k][q] = akp * s + akq * c;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = apk * c - aqk * s;
                    a[q][k] = apk * s.conj() + aqk * c;
                }
                // Accumulate U ← U·J so X = U diag(λ) Uᴴ at convergence.
                for k in 0..n {
                    let ukp = u[k][p];
                    let ukq = u[k][q];
                    u[k][p] = ukp * c - ukq * s.conj();
                    u[k][q] = ukp * s + ukq * c;
                }
            }
        }
    }
    let lambda: Vec<f64> = (0..n).map(|i| a[i][i].re).collect();
    (lambda, u)
}

/// `X^{-1/2}` and `X^{1/2}` for Hermitian PD `X`, via the Jacobi eigensolver.
fn jacobi_sqrt_pair(x: &Grid) -> Result<(Grid, Grid)> {
    let n = x.len();
    let (lambda, u) = jacobi_hermitian_eigen(x);
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    if lambda.iter().any(|&l| l <= 1e-14 * lmax.max(1e-300)) {
        return Err(Error::Numerical("oracle: constraint gram not PD".into()));
    }
    let mut sqrt = gzero(n, n);
    let mut inv_sqrt = gzero(n, n);
    for k in 0..n {
        let (sl, il) = (lambda[k].sqrt(), 1.0 / lambda[k].sqrt());
        for i in 0..n {
            for j in 0..n {
                let outer = u[i][k] * u[j][k].conj();
                sqrt[i][j] += outer * sl;
                inv_sqrt[i][j] += outer * il;
            }
        }
    }
    Ok((sqrt, inv_sqrt))
}

fn gmatvec(a: &Grid, v: &[Complex64]) -> Vec<Complex64> {
    a.iter()
        .map(|row| row.iter().zip(v).map(|(aij, vj)| aij * vj).sum())
        .collect()
}

/// Solves `min fᴴQf − 2Re{linᴴf}` s.t. `fᴴEf ≤ P` by projected gradient on
/// the whitened problem: substitute `f̃ = E^{1/2}f`, giving a ball constraint
/// `‖f̃‖² ≤ P`, and iterate gradient steps with exact ball projection and
/// fixed step `1/(2λ_max + ε)`. First-order and independent of the
/// closed-form solver. Runs until the iterate stalls below `tol`.
pub fn projected_gradient_qcqp(inst: &crate::subproblem::SubproblemInstance, tol: f64) -> CVec {
    let n = inst.quad().nrows();
    let e = grid_of(inst.gram());
    let (sqrt_e, inv_sqrt_e) = jacobi_sqrt_pair(&e).expect("oracle: gram must be PD");
    let _ = &sqrt_e;
    // Whitened quadratic M = E^{-1/2} Q E^{-1/2} and linear b = E^{-1/2} lin.
    let m = gmul(&gmul(&inv_sqrt_e, &grid_of(inst.quad())), &inv_sqrt_e);
    let b = gmatvec(&inv_sqrt_e, inst.lin().as_slice());
    let (lambda, _) = jacobi_hermitian_eigen(&m);
    let lmax = lambda.iter().cloned().fold(0.0, f64::max).max(0.0);
    let step = 1.0 / (2.0 * lmax + 1e-9);
    let radius = inst.power_budget().sqrt();

    let mut ft = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..400_000 {
        // ∇(f̃ᴴMf̃ − 2Re{bᴴf̃}) in the real-composite sense: 2(Mf̃ − b).
        let mf = gmatvec(&m, &ft);
        let mut next: Vec<Complex64> = (0..n)
            .map(|i| ft[i] - (mf[i] - b[i]) * (2.0 * step))
            .collect();
        let norm = next.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > radius {
            let scale = radius / norm;
            for z in &mut next {
                *z *= scale;
            }
        }
        let delta = (0..n).map(|i| (next[i] - ft[i]).norm_sqr()).sum::<f64>().sqrt();
        ft = next;
        if delta <= tol {
            break;
        }
    }
    // Map back: f = E^{-1/2} f̃.
    CVec::from_vec(gmatvec(&inv_sqrt_e, &ft))
}

/// Joint minimizer over all precoder blocks at a fixed receiver, found by
/// plain cyclic coordinate descent run to a tight tolerance. The joint
/// problem is convex with separable constraints, so exact block updates
/// converge to its global optimum; this is an independent cross-check for
/// the interior-point path (different algorithm, same problem).
///
/// Returns the beamformers and their MSE at the fixed receiver.
pub fn joint_by_coordinate_descent(
    model: &SystemModel,
    rx: &Receiver,
    max_sweeps: usize,
    tol: f64,
) -> Result<(BeamformerSet, f64)> {
    let vf = crate::model::assemble_vectorized(model, rx)?;
    let mut bf = BeamformerSet::zeros(model);
    let mut prev = crate::model::mse_quadratic(&vf, &bf, rx);
    for _ in 0..max_sweeps {
        for i in 0..model.num_sensors() {
            let inst = crate::subproblem::build_plain(
                &vf,
                &bf,
                rx,
                i,
                model.sensor(i).power_budget(),
            )?;
            let sol = crate::subproblem::solve_single(&inst, crate::subproblem::BISECTION_TOL)?;
            bf.set_vec_block(model, i, &sol.f_opt);
        }
        let cur = crate::model::mse_quadratic(&vf, &bf, rx);
        if prev - cur <= tol * (1.0 + cur.abs()) {
            return Ok((bf, cur));
        }
        prev = cur;
    }
    Ok((bf, prev))
}

/// Grid specification for [`grid_search_scalar`]: inclusive ranges stepped at
/// `resolution` for both the precoder and receiver axes.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub f_range: (f64, f64),
    pub g_range: (f64, f64),
    pub resolution: f64,
}

fn axis(range: (f64, f64), res: f64) -> Vec<f64> {
    let steps = ((range.1 - range.0) / res).round() as usize;
    (0..=steps).map(|t| range.0 + t as f64 * res).collect()
}

/// Ground-truth minimizer of the complete design problem for an all-scalar
/// model (`K = M = N = J = L = 1`) by exhaustive search.
///
/// When every model quantity is real the optimum may be taken real (the MSE
/// is invariant to a common phase rotation of `f` and `g`), and the search
/// covers the two real axes. Otherwise it covers real and imaginary parts of
/// both variables — a 4-D grid, so use coarse resolutions there.
///
/// Returns `(f★, g★, mse★)`.
pub fn grid_search_scalar(
    model: &SystemModel,
    grid: &GridSpec,
) -> Result<(Complex64, Complex64, f64)> {
    if model.num_sensors() != 1
        || model.source_dim() != 1
        || model.fc_antennas() != 1
        || model.sensor(0).antennas() != 1
        || model.sensor(0).obs_dim() != 1
    {
        return Err(Error::Dimension("grid_search_scalar requires an all-scalar model".into()));
    }
    let h = model.channel(0)[(0, 0)];
    let k = model.sensor(0).obs_matrix()[(0, 0)];
    let sigma_s = model.source().covariance()[(0, 0)].re;
    let sigma_1 = model.sensor(0).noise_cov()[(0, 0)].re;
    let sigma_0 = model.channel_noise_var();
    let p = model.sensor(0).power_budget();
    let power_coeff = k.norm_sqr() * sigma_s + sigma_1;

    let mse_at = |f: Complex64, g: Complex64| -> f64 {
        let e = Complex64::new(1.0, 0.0) - g.conj() * h * f * k;
        e.norm_sqr() * sigma_s + g.norm_sqr() * ((h * f).norm_sqr() * sigma_1 + sigma_0)
    };

    let real_symmetric =
        h.im.abs() <= 1e-12 && k.im.abs() <= 1e-12;
    let f_axis = axis(grid.f_range, grid.resolution);
    let g_axis = axis(grid.g_range, grid.resolution);
    let imag_axis = |on: bool, template: &[f64]| -> Vec<f64> {
        if on {
            template.to_vec()
        } else {
            vec![0.0]
        }
    };
    let f_im = imag_axis(!real_symmetric, &f_axis);
    let g_im = imag_axis(!real_symmetric, &g_axis);

    let mut best = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), f64::INFINITY);
    for &fr in &f_axis {
        for &fi in &f_im {
            let f = Complex64::new(fr, fi);
            if f.norm_sqr() * power_coeff > p {
                continue;
            }
            for &gr in &g_axis {
                for &gi in &g_im {
                    let g = Complex64::new(gr, gi);
                    let mse = mse_at(f, g);
                    if mse < best.2 {
                        best = (f, g, mse);
                    }
                }
            }
        }
    }
    if best.2.is_infinite() {
        return Err(Error::Config("grid contains no feasible point".into()));
    }
    Ok(best)
}

/// Random instance generators. Deterministic given the seed.
pub mod gen {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    pub fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    /// One draw from CN(0, 1).
    pub fn cgauss(rng: &mut ChaCha12Rng) -> Complex64 {
        crate::sampling::complex_gaussian(rng)
    }

    /// Matrix of iid CN(0,1) entries.
    pub fn cmat(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> CMat {
        CMat::from_fn(rows, cols, |_, _| cgauss(rng))
    }

    /// Random Hermitian PD matrix `WWᴴ/n + ridge·I`.
    pub fn random_pd(rng: &mut ChaCha12Rng, n: usize, ridge: f64) -> CMat {
        let w = cmat(rng, n, n);
        crate::linalg::hermitian_part(
            &(&w * w.adjoint() / Complex64::new(n as f64, 0.0)
                + CMat::identity(n, n) * Complex64::new(ridge, 0.0)),
        )
    }

    /// Random network with `l` sensors, source dimension `k`, `m` fusion
    /// antennas, and per-sensor antenna/observation counts up to the caps.
    pub fn random_model(
        rng: &mut ChaCha12Rng,
        l: usize,
        k: usize,
        m: usize,
        n_cap: usize,
        j_cap: usize,
    ) -> SystemModel {
        let source = crate::model::SourceModel::new(random_pd(rng, k, 0.05)).unwrap();
        let mut sensors = Vec::with_capacity(l);
        let mut channels = Vec::with_capacity(l);
        for _ in 0..l {
            let n = rng.random_range(1..=n_cap);
            let j = rng.random_range(1..=j_cap);
            let obs = cmat(rng, j, k);
            let noise = random_pd(rng, j, 0.1);
            let power = rng.random_range(0.5..3.0);
            sensors.push(crate::model::SensorSpec::new(obs, noise, n, power).unwrap());
            channels.push(cmat(rng, m, n));
        }
        SystemModel::new(source, sensors, channels, m, rng.random_range(0.1..1.0)).unwrap()
    }

    /// Random beamformers, each scaled to a uniformly drawn fraction of its
    /// power budget (at most `cap`, clamped to 1 so the set stays feasible).
    pub fn random_feasible_beamformers(
        model: &SystemModel,
        rng: &mut ChaCha12Rng,
        cap: f64,
    ) -> BeamformerSet {
        let hi = cap.min(1.0).max(0.06);
        let mats = (0..model.num_sensors())
            .map(|i| {
                let s = model.sensor(i);
                let f = cmat(rng, s.antennas(), s.obs_dim());
                let bf_probe =
                    BeamformerSet::new(model, {
                        let mut v: Vec<CMat> = (0..model.num_sensors())
                            .map(|t| CMat::zeros(model.sensor(t).antennas(), model.sensor(t).obs_dim()))
                            .collect();
                        v[i] = f.clone();
                        v
                    })
                    .unwrap();
                let power = crate::model::transmit_power(model, &bf_probe, i);
                let target = rng.random_range(0.05..hi) * s.power_budget();
                f * Complex64::new((target / power.max(1e-300)).sqrt(), 0.0)
            })
            .collect();
        BeamformerSet::new(model, mats).unwrap()
    }

    /// Random receiver with iid CN(0,1) entries.
    pub fn random_receiver(model: &SystemModel, rng: &mut ChaCha12Rng) -> Receiver {
        Receiver::new(model, cmat(rng, model.fc_antennas(), model.source_dim())).unwrap()
    }

    /// Random power-constrained subproblem, optionally steered toward one
    /// solve case. Steering fixes the structure (quadratic rank, budget
    /// relative to the minimum-norm solution power) and retries until the
    /// classifier agrees, so returned instances genuinely belong to the
    /// requested case.
    pub fn random_subproblem(
        rng: &mut ChaCha12Rng,
        n: usize,
        target: Option<crate::subproblem::SolveCase>,
    ) -> crate::subproblem::SubproblemInstance {
        use crate::subproblem::{
            classify_case, whiten, InstanceKind, SolveCase, SubproblemInstance,
        };

        let low_rank_quad = |rng: &mut ChaCha12Rng, r: usize| -> CMat {
            if r == 0 {
                return CMat::zeros(n, n);
            }
            let w = cmat(rng, n, r);
            crate::linalg::hermitian_part(&(&w * w.adjoint() / Complex64::new(n as f64, 0.0)))
        };

        for _attempt in 0..64 {
            let gram = random_pd(rng, n, 0.2);
            let candidate = match target {
                None => {
                    let r = rng.random_range(0..=n);
                    SubproblemInstance::new(
                        low_rank_quad(rng, r),
                        CVec::from_fn(n, |_, _| cgauss(rng)),
                        gram,
                        rng.random_range(0.3..2.0),
                        InstanceKind::Plain,
                    )
                    .unwrap()
                }
                Some(SolveCase::NullComponent) => {
                    // Rank-deficient quadratic with a generic linear term:
                    // the rotated vector has a null-space component a.s.
                    let r = if n == 1 { 0 } else { rng.random_range(0..n) };
                    SubproblemInstance::new(
                        low_rank_quad(rng, r),
                        CVec::from_fn(n, |_, _| cgauss(rng)),
                        gram,
                        rng.random_range(0.3..2.0),
                        InstanceKind::Plain,
                    )
                    .unwrap()
                }
                Some(SolveCase::OverBudget) | Some(SolveCase::WithinBudget) => {
                    let over = target == Some(SolveCase::OverBudget);
                    // Within-budget comes in two flavors: full-rank quadratic,
                    // or rank-deficient with the linear term inside its range.
                    let in_range_flavor = !over && n >= 2 && rng.random_range(0..2) == 0;
                    let (quad, lin) = if in_range_flavor {
                        let r = rng.random_range(1..n);
                        let quad = low_rank_quad(rng, r);
                        let x0 = CVec::from_fn(n, |_, _| cgauss(rng));
                        let lin = &quad * x0;
                        (quad, lin)
                    } else {
                        (random_pd(rng, n, 0.3), CVec::from_fn(n, |_, _| cgauss(rng)))
                    };
                    let probe = SubproblemInstance::new(
                        quad.clone(),
                        lin.clone(),
                        gram.clone(),
                        1.0,
                        InstanceKind::Plain,
                    )
                    .unwrap();
                    let sf = whiten(&probe).unwrap();
                    let min_norm_power: f64 = (0..sf.rank())
                        .map(|k| {
                            sf.rotated()[k].norm_sqr()
                                / (sf.eigenvalues()[k] * sf.eigenvalues()[k])
                        })
                        .sum();
                    if min_norm_power <= 1e-10 {
                        continue;
                    }
                    let p = if over {
                        min_norm_power * rng.random_range(0.2..0.8)
                    } else {
                        min_norm_power * rng.random_range(1.5..4.0)
                    };
                    SubproblemInstance::new(quad, lin, gram, p, InstanceKind::Plain).unwrap()
                }
            };
            match target {
                None => return candidate,
                Some(t) => {
                    let sf = whiten(&candidate).unwrap();
                    if classify_case(&sf, candidate.power_budget()) == t {
                        return candidate;
                    }
                }
            }
        }
        panic!("random_subproblem: failed to hit the requested case in 64 attempts");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermitian_part;

    #[test]
    fn jacobi_eigensolver_reconstructs_hermitian_matrices() {
        let mut rng = gen::rng(0x0a0b_0c01);
        for trial in 0..25 {
            let n = 2 + trial % 4;
            // Mix PD and indefinite inputs.
            let shift = if trial % 2 == 0 { 0.0 } else { 1.5 };
            let x = hermitian_part(
                &(gen::random_pd(&mut rng, n, 0.05)
                    - CMat::identity(n, n) * Complex64::new(shift, 0.0)),
            );
            let (lambda, u) = jacobi_hermitian_eigen(&grid_of(&x));
            let u = grid_to_mat(&u);
            assert!(
                (u.adjoint() * &u - CMat::identity(n, n)).norm() <= 1e-10,
                "trial {trial}: basis not unitary"
            );
            let diag = CMat::from_fn(n, n, |i, j| {
                if i == j { Complex64::new(lambda[i], 0.0) } else { Complex64::new(0.0, 0.0) }
            });
            let back = &u * diag * u.adjoint();
            assert!(
                (&back - &x).norm() <= 1e-10 * (1.0 + x.norm()),
                "trial {trial}: reconstruction off by {}",
                (back - &x).norm()
            );
        }
    }

    #[test]
    fn jacobi_sqrt_pair_inverts() {
        let mut rng = gen::rng(0x0a0b_0c02);
        for _ in 0..10 {
            let x = gen::random_pd(&mut rng, 4, 0.2);
            let (sqrt, inv_sqrt) = jacobi_sqrt_pair(&grid_of(&x)).unwrap();
            let sqrt = grid_to_mat(&sqrt);
            let inv_sqrt = grid_to_mat(&inv_sqrt);
            assert!((&sqrt * &sqrt - &x).norm() <= 1e-10 * (1.0 + x.norm()));
            assert!((&sqrt * &inv_sqrt - CMat::identity(4, 4)).norm() <= 1e-9);
        }
    }

    #[test]
    fn projected_gradient_solves_the_scalar_clip() {
        // Q = E = 1, lin = 2, P = 1: constrained optimum f = 1.
        let inst = crate::subproblem::SubproblemInstance::new(
            CMat::identity(1, 1),
            CVec::from_column_slice(&[Complex64::new(2.0, 0.0)]),
            CMat::identity(1, 1),
            1.0,
            crate::subproblem::InstanceKind::Plain,
        )
        .unwrap();
        let f = projected_gradient_qcqp(&inst, 1e-12);
        assert!((f[0] - Complex64::new(1.0, 0.0)).norm() <= 1e-6);
    }
}
