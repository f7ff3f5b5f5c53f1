//! Closed-form solver for the single-sensor power-constrained update.
//!
//! Each coordinate-descent step over one precoder block solves
//!
//! ```text
//! min_f  fᴴ Q f − 2 Re{linᴴ f}     s.t.  fᴴ E f ≤ P
//! ```
//!
//! with `Q ⪰ 0` and `E ≻ 0`. Substituting `f̃ = E^{1/2} f` turns the
//! constraint into a Euclidean ball and the quadratic into
//! `M = E^{-1/2} Q E^{-1/2} = U diag(λ) Uᴴ` (eigenvalues descending, rank `r`
//! relative to `λ₁`). With `b = E^{-1/2} lin` and `p = Uᴴ b`, the KKT system
//! is `(M + μI) f̃ = b`, `μ ≥ 0`, `μ(‖f̃‖² − P) = 0`, and the active-constraint
//! multiplier is the unique root of the strictly decreasing
//!
//! ```text
//! g(μ) = Σₖ |pₖ|² / (λₖ + μ)² = P .
//! ```
//!
//! Three exhaustive regimes decide how to solve:
//! - [`SolveCase::NullComponent`]: some `pₖ ≠ 0` with `k > r`. Any optimum
//!   uses full power; `μ★ > 0` found by bisection on
//!   `[max(0, ‖p‖/√P − λ₁), ‖p‖/√P]`.
//! - [`SolveCase::OverBudget`]: `p` lies in the range of `M` but the
//!   minimum-norm unconstrained solution exceeds the budget
//!   (`Σ_{k≤r} |pₖ|²/λₖ² > P`). Again `μ★ > 0`, bracketed by
//!   `[max(0, ‖p‖/√P − λ₁), ‖p‖/√P − λᵣ]`.
//! - [`SolveCase::WithinBudget`]: the pseudoinverse solution is feasible;
//!   `μ★ = 0` and `f★ = E^{-1/2} M† E^{-1/2} lin`, the power-minimal optimum.
//!
//! For `μ★ > 0` the beamformer is recovered as `f★ = (Q + μ★E)⁻¹ lin` via a
//! Hermitian PD factorization.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    check_psd, hermitian_eigen_desc, hermitian_part, hpd_cholesky, real_part_checked,
    sqrt_and_inv_sqrt, CMat, CVec, PSD_EPS,
};
use crate::model::{BeamformerSet, Receiver, SensorRow, VectorizedForm};

/// Relative eigenvalue threshold for the numerical rank of the whitened
/// quadratic.
pub const RANK_EPS: f64 = 1e-10;

/// Relative threshold below which a rotated component counts as zero.
pub const NULL_EPS: f64 = 1e-9;

/// Default relative tolerance of the multiplier bisection, `|g(μ)−P| ≤ tol·P`.
pub const BISECTION_TOL: f64 = 1e-10;

const BISECTION_MAX_ITERS: usize = 200;

/// How a subproblem instance was produced; carried for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceKind {
    /// Exact block objective.
    Plain,
    /// Plain objective plus `κ‖f − anchor‖²`.
    Proximal { kappa: f64, anchor: CVec },
    /// Cross-coupling quadratic frozen at `anchor`; only the own-noise
    /// quadratic is kept exact.
    Approximate { anchor: CVec },
}

/// One power-constrained quadratic subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemInstance {
    quad: CMat,
    lin: CVec,
    gram: CMat,
    power_budget: f64,
    kind: InstanceKind,
}

impl SubproblemInstance {
    /// Validates shapes and `P > 0`; stores the Hermitian part of `quad`.
    pub fn new(
        quad: CMat,
        lin: CVec,
        gram: CMat,
        power_budget: f64,
        kind: InstanceKind,
    ) -> Result<Self> {
        let n = quad.nrows();
        if quad.ncols() != n || n == 0 {
            return Err(Error::Dimension("quadratic term must be square and non-empty".into()));
        }
        if lin.len() != n || gram.nrows() != n || gram.ncols() != n {
            return Err(Error::Dimension(format!(
                "inconsistent subproblem dimensions: quad {n}, lin {}, gram {}x{}",
                lin.len(),
                gram.nrows(),
                gram.ncols()
            )));
        }
        if !(power_budget > 0.0) {
            return Err(Error::Model(format!(
                "power budget must be positive, got {power_budget}"
            )));
        }
        Ok(Self { quad: hermitian_part(&quad), lin, gram: hermitian_part(&gram), power_budget, kind })
    }

    pub fn quad(&self) -> &CMat {
        &self.quad
    }

    pub fn lin(&self) -> &CVec {
        &self.lin
    }

    pub fn gram(&self) -> &CMat {
        &self.gram
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn kind(&self) -> &InstanceKind {
        &self.kind
    }

    /// `fᴴ Q f − 2 Re{linᴴ f}` (the constant of the enclosing MSE is omitted).
    pub fn objective(&self, f: &CVec) -> f64 {
        let quad = real_part_checked((f.adjoint() * &self.quad * f)[(0, 0)], "objective quad");
        quad - 2.0 * (self.lin.adjoint() * f)[(0, 0)].re
    }

    /// Constraint value `fᴴ E f`.
    pub fn constraint_power(&self, f: &CVec) -> f64 {
        real_part_checked((f.adjoint() * &self.gram * f)[(0, 0)], "constraint power")
    }
}

/// Cached square root and inverse square root of a constraint gram `E`.
/// `E` depends only on model data, so coordinate-descent drivers compute this
/// once per sensor and reuse it for the whole run.
#[derive(Debug, Clone)]
pub struct GramFactor {
    sqrt: CMat,
    inv_sqrt: CMat,
}

impl GramFactor {
    pub fn new(gram: &CMat) -> Result<Self> {
        let (sqrt, inv_sqrt) = sqrt_and_inv_sqrt(&hermitian_part(gram), "constraint gram")?;
        Ok(Self { sqrt, inv_sqrt })
    }

    pub fn sqrt(&self) -> &CMat {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &CMat {
        &self.inv_sqrt
    }
}

/// The whitened, rotated subproblem data.
#[derive(Debug, Clone)]
pub struct SpectralForm {
    whitened: CMat,
    basis: CMat,
    /// Descending; entries below the rank threshold are exactly zero.
    eigenvalues: Vec<f64>,
    rank: usize,
    lin_whitened: CVec,
    rotated: CVec,
}

impl SpectralForm {
    /// Whitened quadratic `M = E^{-1/2} Q E^{-1/2}`.
    pub fn whitened(&self) -> &CMat {
        &self.whitened
    }

    /// Eigenbasis `U` of `M` (columns follow the descending eigenvalues).
    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `b = E^{-1/2} lin`.
    pub fn lin_whitened(&self) -> &CVec {
        &self.lin_whitened
    }

    /// `p = Uᴴ b`.
    pub fn rotated(&self) -> &CVec {
        &self.rotated
    }

    /// Power of the multiplier-μ candidate: `g(μ) = Σₖ |pₖ|²/(λₖ+μ)²`.
    /// Strictly decreasing in `μ` wherever finite.
    pub fn constraint_value(&self, mu: f64) -> f64 {
        let mut total = 0.0;
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let pk2 = self.rotated[k].norm_sqr();
            if pk2 == 0.0 {
                continue;
            }
            let denom = lambda + mu;
            total += pk2 / (denom * denom);
        }
        total
    }
}

/// Whitens an instance with a freshly computed gram factor.
pub fn whiten(inst: &SubproblemInstance) -> Result<SpectralForm> {
    let factor = GramFactor::new(inst.gram())?;
    Ok(whiten_with(inst, &factor))
}

/// Whitens an instance using a cached factor of its constraint gram.
pub fn whiten_with(inst: &SubproblemInstance, factor: &GramFactor) -> SpectralForm {
    let m = hermitian_part(&(factor.inv_sqrt() * inst.quad() * factor.inv_sqrt()));
    let (raw, basis) = hermitian_eigen_desc(&m);
    let lmax = raw.first().copied().unwrap_or(0.0);
    let rank = if lmax <= 0.0 { 0 } else { raw.iter().take_while(|&&l| l > RANK_EPS * lmax).count() };
    let mut eigenvalues = raw;
    for l in eigenvalues.iter_mut().skip(rank) {
        *l = 0.0;
    }
    let lin_whitened = factor.inv_sqrt() * inst.lin();
    let rotated = basis.adjoint() * &lin_whitened;
    SpectralForm { whitened: m, basis, eigenvalues, rank, lin_whitened, rotated }
}

/// Which regime the KKT conditions fall into for a given power budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveCase {
    /// The linear term has a component in the null space of the whitened
    /// quadratic; the power constraint is necessarily active.
    NullComponent,
    /// The minimum-norm unconstrained solution exceeds the budget; active.
    OverBudget,
    /// The pseudoinverse solution is feasible; multiplier is zero.
    WithinBudget,
}

impl std::fmt::Display for SolveCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SolveCase::NullComponent => "null-component",
            SolveCase::OverBudget => "over-budget",
            SolveCase::WithinBudget => "within-budget",
        })
    }
}

/// Classifies an instance. The three cases are exhaustive and mutually
/// exclusive by construction.
pub fn classify_case(sf: &SpectralForm, power_budget: f64) -> SolveCase {
    let p_norm = sf.rotated().norm();
    let null_thresh = NULL_EPS * p_norm;
    let has_null_component =
        sf.rotated().iter().skip(sf.rank()).any(|z| z.norm() > null_thresh);
    if has_null_component {
        return SolveCase::NullComponent;
    }
    let min_norm_power: f64 = (0..sf.rank())
        .map(|k| sf.rotated()[k].norm_sqr() / (sf.eigenvalues()[k] * sf.eigenvalues()[k]))
        .sum();
    if min_norm_power > power_budget {
        SolveCase::OverBudget
    } else {
        SolveCase::WithinBudget
    }
}

/// Bisection bracket `[lbd, ubd]` guaranteed to contain the root of
/// `g(μ) = P` for the two active-constraint cases.
///
/// Panics if called with [`SolveCase::WithinBudget`]; there is no root to
/// bracket when the multiplier is zero.
pub fn multiplier_bounds(sf: &SpectralForm, power_budget: f64, case: SolveCase) -> (f64, f64) {
    assert!(
        case != SolveCase::WithinBudget,
        "multiplier_bounds: no bracket exists for an inactive constraint"
    );
    let base = sf.rotated().norm() / power_budget.sqrt();
    let lambda_max = sf.eigenvalues().first().copied().unwrap_or(0.0);
    let lbd = (base - lambda_max).max(0.0);
    let ubd = match case {
        SolveCase::NullComponent => base,
        SolveCase::OverBudget => {
            // rank ≥ 1 here: an over-budget minimum-norm solution needs at
            // least one positive eigenvalue.
            let lambda_min_pos = sf.eigenvalues()[sf.rank() - 1];
            (base - lambda_min_pos).max(lbd)
        }
        SolveCase::WithinBudget => unreachable!(),
    };
    (lbd, ubd)
}

/// Finds the active-constraint multiplier by bisection on `g(μ) = P`.
///
/// Returns `(μ★, iterations)`. A collapsed bracket returns its point
/// immediately. The bracket is validated (and symmetrically expanded a few
/// times if roundoff pushed the root outside) before bisection starts.
pub fn solve_multiplier(
    sf: &SpectralForm,
    power_budget: f64,
    case: SolveCase,
    tol: f64,
) -> Result<(f64, usize)> {
    let (mut lo, mut hi) = multiplier_bounds(sf, power_budget, case);
    if hi - lo <= 1e-15 * hi.max(1.0) {
        return Ok((0.5 * (lo + hi), 0));
    }
    // Validate the bracket; expand on roundoff spill.
    let mut width = hi - lo;
    let mut tries = 0;
    while sf.constraint_value(hi) > power_budget && tries < 64 {
        hi += width;
        width *= 2.0;
        tries += 1;
    }
    while lo > 0.0 && sf.constraint_value(lo) < power_budget && tries < 64 {
        lo = (lo - width).max(0.0);
        width *= 2.0;
        tries += 1;
    }
    if sf.constraint_value(hi) > power_budget
        || (sf.constraint_value(lo) < power_budget && lo > 0.0)
    {
        return Err(Error::Numerical(format!(
            "multiplier bracket failure: g({lo}) = {}, g({hi}) = {}, target {power_budget}",
            sf.constraint_value(lo),
            sf.constraint_value(hi)
        )));
    }
    for iter in 1..=BISECTION_MAX_ITERS {
        let mid = 0.5 * (lo + hi);
        let g = sf.constraint_value(mid);
        if (g - power_budget).abs() <= tol * power_budget {
            return Ok((mid, iter));
        }
        if g > power_budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Numerical(format!(
        "multiplier bisection did not reach tolerance {tol} in {BISECTION_MAX_ITERS} iterations"
    )))
}

/// Solution of one subproblem.
#[derive(Debug, Clone)]
pub struct SubproblemSolution {
    pub f_opt: CVec,
    pub multiplier: f64,
    pub case_taken: SolveCase,
    pub bisection_iters: usize,
    /// Stationarity residual `‖(Q + μE)f − lin‖`.
    pub kkt_residual: f64,
}

/// Solves one instance, computing the gram factor on the fly.
pub fn solve_single(inst: &SubproblemInstance, tol: f64) -> Result<SubproblemSolution> {
    let factor = GramFactor::new(inst.gram())?;
    solve_single_with(inst, &factor, tol)
}

/// Solves one instance with a cached gram factor.
pub fn solve_single_with(
    inst: &SubproblemInstance,
    factor: &GramFactor,
    tol: f64,
) -> Result<SubproblemSolution> {
    let sf = whiten_with(inst, factor);
    let case = classify_case(&sf, inst.power_budget());
    let (f_opt, multiplier, iters) = match case {
        SolveCase::WithinBudget => {
            // f̃★ = M† b = Σ_{k≤r} (pₖ/λₖ) uₖ, then f★ = E^{-1/2} f̃★. The
            // minimum-norm pseudoinverse solution, hence power-minimal among
            // the optima.
            let mut ft = CVec::zeros(inst.lin().len());
            for k in 0..sf.rank() {
                let coeff = sf.rotated()[k] / Complex64::new(sf.eigenvalues()[k], 0.0);
                ft += CVec::from(sf.basis().column(k)) * coeff;
            }
            (factor.inv_sqrt() * ft, 0.0, 0)
        }
        SolveCase::NullComponent | SolveCase::OverBudget => {
            let (mu, iters) = solve_multiplier(&sf, inst.power_budget(), case, tol)?;
            let kkt = inst.quad() + inst.gram() * Complex64::new(mu, 0.0);
            let chol = hpd_cholesky(hermitian_part(&kkt)).ok_or_else(|| {
                Error::Numerical(format!(
                    "subproblem KKT matrix not PD at μ = {mu} (case {case})"
                ))
            })?;
            (chol.solve(inst.lin()), mu, iters)
        }
    };
    let residual =
        (inst.quad() * &f_opt + inst.gram() * &f_opt * Complex64::new(multiplier, 0.0)
            - inst.lin())
        .norm();
    Ok(SubproblemSolution {
        f_opt,
        multiplier,
        case_taken: case,
        bisection_iters: iters,
        kkt_residual: residual,
    })
}

fn own_quad(vf: &VectorizedForm, i: usize) -> CMat {
    hermitian_part(&(vf.a_block(i, i) + vf.c_block(i)))
}

fn lin_term(vf: &VectorizedForm, bf: &BeamformerSet, rx: &Receiver, i: usize) -> CVec {
    vf.b_block(i).adjoint() * rx.vec() - vf.coupling(bf, i)
}

/// Exact block objective for sensor `i`:
/// `Q = Aᵢᵢ + Cᵢ`, `lin = Bᵢᴴg − Σ_{j≠i} Aᵢⱼfⱼ`, constraint `(Eᵢ, Pᵢ)`.
pub fn build_plain(
    vf: &VectorizedForm,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    power_budget: f64,
) -> Result<SubproblemInstance> {
    let quad = own_quad(vf, i);
    check_psd(&quad, PSD_EPS, "build_plain: block quadratic")?;
    SubproblemInstance::new(
        quad,
        lin_term(vf, bf, rx, i),
        vf.e_block(i).clone(),
        power_budget,
        InstanceKind::Plain,
    )
}

/// Proximal regularization of the plain objective around the current block
/// value `f̂ᵢ = fᵢ`: adds `κ‖f − f̂ᵢ‖²`, i.e. `Q += κI`, `lin += κf̂ᵢ`.
///
/// Panics if `κ ≤ 0`.
pub fn build_proximal(
    vf: &VectorizedForm,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    power_budget: f64,
    kappa: f64,
) -> Result<SubproblemInstance> {
    assert!(kappa > 0.0, "proximal weight must be positive, got {kappa}");
    let anchor = bf.vec_block(i);
    let n = anchor.len();
    let quad = own_quad(vf, i) + CMat::identity(n, n) * Complex64::new(kappa, 0.0);
    let lin = lin_term(vf, bf, rx, i) + &anchor * Complex64::new(kappa, 0.0);
    SubproblemInstance::new(
        quad,
        lin,
        vf.e_block(i).clone(),
        power_budget,
        InstanceKind::Proximal { kappa, anchor },
    )
}

/// Structure-dropping approximation around `f̂ᵢ = fᵢ`: freezes the entire
/// signal quadratic at the anchor (`q̂ᵢ = qᵢ + Aᵢᵢf̂ᵢ`), keeping only the
/// own-noise quadratic `Cᵢ` exact.
pub fn build_approximate(
    vf: &VectorizedForm,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    power_budget: f64,
) -> Result<SubproblemInstance> {
    let anchor = bf.vec_block(i);
    let quad = hermitian_part(vf.c_block(i));
    check_psd(&quad, PSD_EPS, "build_approximate: noise quadratic")?;
    let lin = lin_term(vf, bf, rx, i) - vf.a_block(i, i) * &anchor;
    SubproblemInstance::new(
        quad,
        lin,
        vf.e_block(i).clone(),
        power_budget,
        InstanceKind::Approximate { anchor },
    )
}

// Row-based builders, mirroring the three above but fed from a single-sensor
// slice of the quadratic form. Used by the cyclic driver, which rebuilds only
// sensor rows after a receiver update instead of the full form.

fn row_lin(row: &SensorRow, bf: &BeamformerSet, rx: &Receiver, i: usize) -> CVec {
    row.b.adjoint() * rx.vec() - row.coupling(bf, i)
}

pub(crate) fn build_plain_from_row(
    row: &SensorRow,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    gram: &CMat,
    power_budget: f64,
) -> Result<SubproblemInstance> {
    let quad = hermitian_part(&(&row.a_row[i] + &row.c));
    check_psd(&quad, PSD_EPS, "block quadratic")?;
    SubproblemInstance::new(
        quad,
        row_lin(row, bf, rx, i),
        gram.clone(),
        power_budget,
        InstanceKind::Plain,
    )
}

pub(crate) fn build_proximal_from_row(
    row: &SensorRow,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    gram: &CMat,
    power_budget: f64,
    kappa: f64,
) -> Result<SubproblemInstance> {
    assert!(kappa > 0.0, "proximal weight must be positive, got {kappa}");
    let anchor = bf.vec_block(i);
    let n = anchor.len();
    let quad = hermitian_part(&(&row.a_row[i] + &row.c))
        + CMat::identity(n, n) * Complex64::new(kappa, 0.0);
    let lin = row_lin(row, bf, rx, i) + &anchor * Complex64::new(kappa, 0.0);
    SubproblemInstance::new(
        quad,
        lin,
        gram.clone(),
        power_budget,
        InstanceKind::Proximal { kappa, anchor },
    )
}

pub(crate) fn build_approximate_from_row(
    row: &SensorRow,
    bf: &BeamformerSet,
    rx: &Receiver,
    i: usize,
    gram: &CMat,
    power_budget: f64,
) -> Result<SubproblemInstance> {
    let anchor = bf.vec_block(i);
    let quad = hermitian_part(&row.c);
    check_psd(&quad, PSD_EPS, "noise quadratic")?;
    let lin = row_lin(row, bf, rx, i) - &row.a_row[i] * &anchor;
    SubproblemInstance::new(
        quad,
        lin,
        gram.clone(),
        power_budget,
        InstanceKind::Approximate { anchor },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar_instance(q: f64, e: f64, lin: f64, p: f64) -> SubproblemInstance {
        SubproblemInstance::new(
            CMat::identity(1, 1) * c(q, 0.0),
            CVec::from_column_slice(&[c(lin, 0.0)]),
            CMat::identity(1, 1) * c(e, 0.0),
            p,
            InstanceKind::Plain,
        )
        .unwrap()
    }

    #[test]
    fn whiten_scalar_and_zero() {
        // Q = 2, E = 4, lin = 2: M = 1/2, b = 1, p = ±1, rank 1.
        let inst = scalar_instance(2.0, 4.0, 2.0, 1.0);
        let sf = whiten(&inst).unwrap();
        assert!((sf.whitened()[(0, 0)] - c(0.5, 0.0)).norm() < 1e-14);
        assert_eq!(sf.rank(), 1);
        assert!((sf.eigenvalues()[0] - 0.5).abs() < 1e-14);
        assert!((sf.rotated()[0].norm() - 1.0).abs() < 1e-14);

        // Zero quadratic: M = 0, rank 0, eigenvalues exactly zero.
        let zero = SubproblemInstance::new(
            CMat::zeros(2, 2),
            CVec::from_column_slice(&[c(1.0, 0.0), c(0.0, 1.0)]),
            CMat::identity(2, 2),
            1.0,
            InstanceKind::Plain,
        )
        .unwrap();
        let sf0 = whiten(&zero).unwrap();
        assert_eq!(sf0.rank(), 0);
        assert!(sf0.eigenvalues().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn whiten_reconstructs_on_random_instances() {
        let mut rng = oracle::gen::rng(0x5eed_1001);
        for _ in 0..30 {
            let inst = oracle::gen::random_subproblem(&mut rng, 4, None);
            let factor = GramFactor::new(inst.gram()).unwrap();
            let sf = whiten_with(&inst, &factor);
            // E^{1/2} M E^{1/2} = Q.
            let back = factor.sqrt() * sf.whitened() * factor.sqrt();
            assert!((back - inst.quad()).norm() <= 1e-9 * (1.0 + inst.quad().norm()));
            // Basis unitary.
            let n = inst.quad().nrows();
            assert!((sf.basis().adjoint() * sf.basis() - CMat::identity(n, n)).norm() <= 1e-10);
            // Truncated spectrum is descending and zero past the rank.
            assert!(sf.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
            assert!(sf.eigenvalues().iter().skip(sf.rank()).all(|&l| l == 0.0));
        }
    }

    #[test]
    fn classification_trivial_cases() {
        // Zero quadratic with nonzero linear term: null component.
        let null = SubproblemInstance::new(
            CMat::zeros(1, 1),
            CVec::from_column_slice(&[c(2.0, 0.0)]),
            CMat::identity(1, 1),
            1.0,
            InstanceKind::Plain,
        )
        .unwrap();
        let sf = whiten(&null).unwrap();
        assert_eq!(classify_case(&sf, 1.0), SolveCase::NullComponent);

        // Full-rank, unconstrained optimum power 4 against budget 1 / 10.
        let clip = scalar_instance(1.0, 1.0, 2.0, 1.0);
        let sf = whiten(&clip).unwrap();
        assert_eq!(classify_case(&sf, 1.0), SolveCase::OverBudget);
        assert_eq!(classify_case(&sf, 10.0), SolveCase::WithinBudget);

        // Zero linear term is always within budget (optimum f = 0).
        let idle = scalar_instance(1.0, 1.0, 0.0, 1.0);
        let sf = whiten(&idle).unwrap();
        assert_eq!(classify_case(&sf, 1.0), SolveCase::WithinBudget);
    }

    #[test]
    fn bounds_trivial_cases() {
        // λ₁ = 0 (zero quadratic), p = 2, P = 1: bracket collapses at 2.
        let null = SubproblemInstance::new(
            CMat::zeros(1, 1),
            CVec::from_column_slice(&[c(2.0, 0.0)]),
            CMat::identity(1, 1),
            1.0,
            InstanceKind::Plain,
        )
        .unwrap();
        let sf = whiten(&null).unwrap();
        let (lo, hi) = multiplier_bounds(&sf, 1.0, SolveCase::NullComponent);
        assert!((lo - 2.0).abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
        let (mu, iters) = solve_multiplier(&sf, 1.0, SolveCase::NullComponent, 1e-10).unwrap();
        assert!((mu - 2.0).abs() < 1e-12);
        assert_eq!(iters, 0);

        // λ = 1, p = 2, P = 1: bracket [1, 1], μ★ = 1.
        let clip = scalar_instance(1.0, 1.0, 2.0, 1.0);
        let sf = whiten(&clip).unwrap();
        let (lo, hi) = multiplier_bounds(&sf, 1.0, SolveCase::OverBudget);
        assert!((lo - 1.0).abs() < 1e-14 && (hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn multiplier_two_mode_golden_value() {
        // λ = (1, 0), p = (1, 1), P = 5: the multiplier solves
        // g(μ) = 1/(1+μ)² + 1/μ² = 5. Golden root from an independent scalar
        // bisection, with its value frozen below.
        let q = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let inst = SubproblemInstance::new(
            q,
            CVec::from_column_slice(&[c(1.0, 0.0), c(1.0, 0.0)]),
            CMat::identity(2, 2),
            5.0,
            InstanceKind::Plain,
        )
        .unwrap();
        let sf = whiten(&inst).unwrap();
        assert_eq!(classify_case(&sf, 5.0), SolveCase::NullComponent);

        let g = |mu: f64| 1.0 / ((1.0 + mu) * (1.0 + mu)) + 1.0 / (mu * mu);
        let (mut lo, mut hi) = (1e-6, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 5.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let golden = 0.5 * (lo + hi);
        let (mu, _) = solve_multiplier(&sf, 5.0, SolveCase::NullComponent, 1e-12).unwrap();
        assert!(
            (mu - golden).abs() <= 1e-9 * golden.max(1e-3),
            "solver {mu} vs independent bisection {golden}"
        );
        // Frozen value of the independent bisection.
        assert!((golden - 0.469_483_341_041).abs() < 1e-9, "golden drifted: {golden}");
    }

    #[test]
    fn constraint_value_is_strictly_decreasing() {
        let mut rng = oracle::gen::rng(0x5eed_1002);
        for _ in 0..20 {
            let inst = oracle::gen::random_subproblem(&mut rng, 3, None);
            let sf = whiten(&inst).unwrap();
            if sf.rotated().norm() == 0.0 {
                continue;
            }
            let mut prev = sf.constraint_value(1e-3);
            for step in 1..40 {
                let mu = 1e-3 + step as f64 * 0.25;
                let cur = sf.constraint_value(mu);
                assert!(cur < prev, "g not strictly decreasing at μ = {mu}");
                prev = cur;
            }
        }
    }

    #[test]
    fn solve_single_scalar_clip() {
        // Q = E = 1, lin = 2, P = 1: unconstrained optimum f = 2 has power 4;
        // the constrained optimum saturates at f = 1 with μ★ = 1.
        let inst = scalar_instance(1.0, 1.0, 2.0, 1.0);
        let sol = solve_single(&inst, BISECTION_TOL).unwrap();
        assert_eq!(sol.case_taken, SolveCase::OverBudget);
        assert!((sol.f_opt[0] - c(1.0, 0.0)).norm() < 1e-9);
        assert!((sol.multiplier - 1.0).abs() < 1e-9);
        assert!(sol.kkt_residual < 1e-9);
    }

    #[test]
    fn solve_single_pseudoinverse_case_is_power_minimal() {
        // Q = diag(1, 0), lin = (1, 0), P = 10: within budget, f★ = (1, 0).
        // Adding any null-space component keeps the objective but costs power.
        let q = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        let inst = SubproblemInstance::new(
            q,
            CVec::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0)]),
            CMat::identity(2, 2),
            10.0,
            InstanceKind::Plain,
        )
        .unwrap();
        let sol = solve_single(&inst, BISECTION_TOL).unwrap();
        assert_eq!(sol.case_taken, SolveCase::WithinBudget);
        assert_eq!(sol.multiplier, 0.0);
        assert!((sol.f_opt[0] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(sol.f_opt[1].norm() < 1e-10);
        let base_obj = inst.objective(&sol.f_opt);
        let base_power = inst.constraint_power(&sol.f_opt);
        for t in [0.5, -1.0, 2.0] {
            let shifted = CVec::from_column_slice(&[sol.f_opt[0], c(t, 0.0)]);
            assert!((inst.objective(&shifted) - base_obj).abs() < 1e-12);
            assert!(inst.constraint_power(&shifted) > base_power);
        }
    }

    #[test]
    fn solutions_satisfy_kkt_and_match_projected_gradient() {
        let mut rng = oracle::gen::rng(0x5eed_1003);
        let cases = [
            Some(SolveCase::NullComponent),
            Some(SolveCase::OverBudget),
            Some(SolveCase::WithinBudget),
            None,
        ];
        for trial in 0..60 {
            let n = 2 + trial % 3;
            let target = cases[trial % cases.len()];
            let inst = oracle::gen::random_subproblem(&mut rng, n, target);
            let sol = solve_single(&inst, BISECTION_TOL).unwrap();
            if let Some(t) = target {
                assert_eq!(sol.case_taken, t, "trial {trial} generator missed its case");
            }

            // KKT: stationarity, feasibility, dual feasibility, complementary
            // slackness.
            let lin_scale = 1.0 + inst.lin().norm();
            assert!(sol.kkt_residual <= 1e-7 * lin_scale, "trial {trial} stationarity");
            let power = inst.constraint_power(&sol.f_opt);
            assert!(power <= inst.power_budget() * (1.0 + 1e-9), "trial {trial} feasibility");
            assert!(sol.multiplier >= 0.0);
            assert!(
                (sol.multiplier * (power - inst.power_budget())).abs() <= 1e-7,
                "trial {trial} complementary slackness"
            );

            // First-order oracle agreement on the objective.
            let pg = oracle::projected_gradient_qcqp(&inst, 1e-10);
            let obj_solver = inst.objective(&sol.f_opt);
            let obj_pg = inst.objective(&pg);
            assert!(
                obj_solver <= obj_pg + 1e-6 * (1.0 + obj_pg.abs()),
                "trial {trial}: solver {obj_solver} worse than projected gradient {obj_pg}"
            );
        }
    }

    #[test]
    fn multiplier_lies_inside_reported_bracket() {
        let mut rng = oracle::gen::rng(0x5eed_1004);
        for trial in 0..40 {
            let target = if trial % 2 == 0 {
                Some(SolveCase::NullComponent)
            } else {
                Some(SolveCase::OverBudget)
            };
            let inst = oracle::gen::random_subproblem(&mut rng, 3, target);
            let sf = whiten(&inst).unwrap();
            let case = classify_case(&sf, inst.power_budget());
            let (lo, hi) = multiplier_bounds(&sf, inst.power_budget(), case);
            let p = inst.power_budget();
            assert!(sf.constraint_value(lo) >= p * (1.0 - 1e-9), "trial {trial} lower end");
            assert!(sf.constraint_value(hi) <= p * (1.0 + 1e-9), "trial {trial} upper end");
            let (mu, _) = solve_multiplier(&sf, p, case, 1e-10).unwrap();
            assert!(mu >= lo - 1e-12 && mu <= hi + 1e-12, "trial {trial} root outside bracket");
        }
    }

    fn scalar_chain_setup() -> (crate::model::SystemModel, BeamformerSet, Receiver, VectorizedForm)
    {
        let source = crate::model::SourceModel::new(CMat::identity(1, 1)).unwrap();
        let sensor = crate::model::SensorSpec::new(
            CMat::identity(1, 1),
            CMat::identity(1, 1) * c(0.3, 0.0),
            1,
            2.0,
        )
        .unwrap();
        let model = crate::model::SystemModel::new(
            source,
            vec![sensor],
            vec![CMat::identity(1, 1)],
            1,
            0.5,
        )
        .unwrap();
        let bf =
            BeamformerSet::new(&model, vec![CMat::identity(1, 1) * c(0.8, 0.0)]).unwrap();
        let rx = Receiver::new(&model, CMat::identity(1, 1) * c(0.6, 0.0)).unwrap();
        let vf = crate::model::assemble_vectorized(&model, &rx).unwrap();
        (model, bf, rx, vf)
    }

    #[test]
    fn proximal_objective_identity_and_fixed_point() {
        let (model, mut bf, rx, vf) = scalar_chain_setup();
        let p = model.sensor(0).power_budget();
        let kappa = 1.0;

        let plain = build_plain(&vf, &bf, &rx, 0, p).unwrap();
        let prox = build_proximal(&vf, &bf, &rx, 0, p, kappa).unwrap();
        let anchor = bf.vec_block(0);
        let mut rng = oracle::gen::rng(0x5eed_1005);
        for _ in 0..20 {
            let f = CVec::from_fn(1, |_, _| oracle::gen::cgauss(&mut rng));
            let lhs = prox.objective(&f);
            let rhs = plain.objective(&f) + kappa * (&f - &anchor).norm_squared()
                - kappa * anchor.norm_squared();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }

        // Anchoring the proximal term at the plain optimum leaves it fixed.
        let star = solve_single(&plain, BISECTION_TOL).unwrap().f_opt;
        bf.set_vec_block(&model, 0, &star);
        let prox_at_star = build_proximal(&vf, &bf, &rx, 0, p, kappa).unwrap();
        let again = solve_single(&prox_at_star, BISECTION_TOL).unwrap().f_opt;
        assert!((again - star).norm() <= 1e-8);
    }

    #[test]
    fn approximate_builder_freezes_coupling() {
        let (model, bf, rx, vf) = scalar_chain_setup();
        let p = model.sensor(0).power_budget();
        let approx = build_approximate(&vf, &bf, &rx, 0, p).unwrap();
        // Quadratic keeps only the noise term.
        assert!((approx.quad() - vf.c_block(0)).norm() <= 1e-14);
        // Linear term subtracts the own-block coupling at the anchor.
        let expect = vf.b_block(0).adjoint() * rx.vec()
            - vf.coupling(&bf, 0)
            - vf.a_block(0, 0) * bf.vec_block(0);
        assert!((approx.lin() - expect).norm() <= 1e-14);
        let _ = model;
    }

    #[test]
    #[should_panic(expected = "proximal weight must be positive")]
    fn proximal_rejects_nonpositive_weight() {
        let (model, bf, rx, vf) = scalar_chain_setup();
        let p = model.sensor(0).power_budget();
        let _ = build_proximal(&vf, &bf, &rx, 0, p, 0.0);
    }

    #[test]
    #[should_panic(expected = "no bracket exists")]
    fn bounds_reject_inactive_case() {
        let inst = scalar_instance(1.0, 1.0, 2.0, 10.0);
        let sf = whiten(&inst).unwrap();
        let _ = multiplier_bounds(&sf, 10.0, SolveCase::WithinBudget);
    }
}
