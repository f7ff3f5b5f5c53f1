//! Joint update of every precoder block at a fixed receiver.
//!
//! With the receiver held fixed, the stacked beamformer `x = [f₁; …; f_L]`
//! minimizes one convex quadratic subject to a power ellipsoid per sensor:
//!
//! ```text
//! min  xᴴ Q x − 2 Re{linᴴ x} + const     s.t.  fᵢᴴ Eᵢ fᵢ ≤ Pᵢ ,  i = 1..L
//! ```
//!
//! where `Q` is the full signal-plus-noise quadratic (PSD) and the constant
//! makes the objective the exact MSE. Solved by a log-barrier interior-point
//! method on the real lifting of the complex variables: center
//!
//! ```text
//! f₀(z) + μ Σᵢ −log(Pᵢ − zᵀDᵢz)
//! ```
//!
//! by damped Newton, then shrink `μ` geometrically until the duality-gap
//! bound `L·μ` crosses the requested tolerance. `z = 0` is strictly feasible
//! for every instance, and warm starts are pulled into the interior first.

use nalgebra::{Cholesky, DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{lift_mat, lift_vec, real_part_checked, unlift_vec, CMat, CVec};
use crate::model::{Receiver, VectorizedForm};

/// Log-barrier controls. `gap_tol` bounds the final duality gap `L·μ`.
#[derive(Debug, Clone)]
pub struct BarrierSettings {
    pub mu0: f64,
    pub shrink: f64,
    /// Centering stops when the Newton decrement `∇ᵀH⁻¹∇` falls below this;
    /// the decrement bounds twice the remaining centered-value suboptimality
    /// in the quadratic regime, and is affine-invariant (a plain gradient
    /// norm would tie the stop to the data scale).
    pub newton_tol: f64,
    pub gap_tol: f64,
    pub max_centerings: usize,
    pub max_newton_per_centering: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            shrink: 0.2,
            newton_tol: 1e-12,
            gap_tol: 1e-8,
            max_centerings: 60,
            max_newton_per_centering: 200,
        }
    }
}

/// One centering step of the barrier path.
#[derive(Debug, Clone, Copy)]
pub struct CenteringRecord {
    pub mu: f64,
    /// True objective (MSE) at the centered point.
    pub objective: f64,
    pub newton_steps: usize,
}

/// Result of a joint solve.
#[derive(Debug, Clone)]
pub struct JointSolution {
    pub x: CVec,
    pub objective: f64,
    /// Duality-gap bound `L·μ_final` at the returned point.
    pub gap_bound: f64,
    /// Barrier multipliers `μ/sᵢ`, one per power constraint.
    pub multipliers: Vec<f64>,
    pub history: Vec<CenteringRecord>,
}

/// The stacked convex QCQP.
#[derive(Debug, Clone)]
pub struct JointProblem {
    quad_lifted: DMatrix<f64>,
    lin_lifted: DVector<f64>,
    /// Per-sensor lifted constraint grams, full-size with one embedded block.
    constraints: Vec<(DMatrix<f64>, f64)>,
    e_blocks: Vec<CMat>,
    budgets: Vec<f64>,
    offsets: Vec<usize>,
    total_dim: usize,
    constant: f64,
}

impl JointProblem {
    /// Builds the joint problem from an assembled quadratic form at the given
    /// receiver. `budgets` are the per-sensor power limits, in sensor order.
    pub fn from_vectorized(
        vf: &VectorizedForm,
        rx: &Receiver,
        budgets: &[f64],
    ) -> Result<Self> {
        if budgets.len() != vf.num_sensors() {
            return Err(Error::Dimension(format!(
                "expected {} power budgets, got {}",
                vf.num_sensors(),
                budgets.len()
            )));
        }
        if budgets.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::Model("power budgets must be positive".into()));
        }
        let dims = vf.block_dims().to_vec();
        let total: usize = dims.iter().sum();
        let mut offsets = Vec::with_capacity(dims.len());
        let mut acc = 0;
        for &d in &dims {
            offsets.push(acc);
            acc += d;
        }
        let quad = vf.stacked_quad();
        let mut constraints = Vec::with_capacity(dims.len());
        let mut e_blocks = Vec::with_capacity(dims.len());
        for i in 0..dims.len() {
            let mut embedded = CMat::zeros(total, total);
            embedded
                .view_mut((offsets[i], offsets[i]), (dims[i], dims[i]))
                .copy_from(vf.e_block(i));
            constraints.push((lift_mat(&embedded), budgets[i]));
            e_blocks.push(vf.e_block(i).clone());
        }
        Ok(Self {
            quad_lifted: lift_mat(&quad),
            lin_lifted: lift_vec(&vf.stacked_lin(rx)),
            constraints,
            e_blocks,
            budgets: budgets.to_vec(),
            offsets,
            total_dim: total,
            constant: vf.constant(),
        })
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    /// True objective (the MSE at the fixed receiver) for a stacked complex
    /// beamformer.
    pub fn objective(&self, x: &CVec) -> f64 {
        let z = lift_vec(x);
        self.objective_lifted(&z)
    }

    fn objective_lifted(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.quad_lifted * z)[(0, 0)] - 2.0 * self.lin_lifted.dot(z)
            + self.constant
    }

    /// Transmit power of block `i` in a stacked complex beamformer.
    pub fn block_power(&self, x: &CVec, i: usize) -> f64 {
        let d = self.e_blocks[i].nrows();
        let xi = CVec::from(x.rows(self.offsets[i], d));
        real_part_checked((xi.adjoint() * &self.e_blocks[i] * xi)[(0, 0)], "block power")
    }

    /// Pulls a feasible point strictly inside every power constraint: any
    /// block at or above 98% of its budget is scaled down to 98%.
    pub fn shrink_to_interior(&self, x: &CVec) -> CVec {
        let mut out = x.clone();
        for i in 0..self.constraints.len() {
            let power = self.block_power(x, i);
            let limit = 0.98 * self.budgets[i];
            if power > limit {
                let scale = (limit / power).sqrt();
                let d = self.e_blocks[i].nrows();
                for r in self.offsets[i]..self.offsets[i] + d {
                    out[r] *= Complex64::new(scale, 0.0);
                }
            }
        }
        out
    }

    fn slacks(&self, z: &DVector<f64>) -> Vec<f64> {
        self.constraints
            .iter()
            .map(|(d, p)| p - (z.transpose() * d * z)[(0, 0)])
            .collect()
    }

    /// Barrier-augmented objective; `None` when infeasible.
    fn center_value(&self, z: &DVector<f64>, mu: f64) -> Option<f64> {
        let mut value = self.objective_lifted(z);
        for s in self.slacks(z) {
            if s <= 0.0 {
                return None;
            }
            value -= mu * s.ln();
        }
        Some(value)
    }

    fn center_grad_hess(
        &self,
        z: &DVector<f64>,
        mu: f64,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mut grad = &self.quad_lifted * z * 2.0 - &self.lin_lifted * 2.0;
        let mut hess = &self.quad_lifted * 2.0;
        for (d, p) in &self.constraints {
            let dz = d * z;
            let s = p - z.dot(&dz);
            if s <= 0.0 {
                return None;
            }
            grad += &dz * (2.0 * mu / s);
            hess += d * (2.0 * mu / s);
            // Rank-one curvature of −log s: 4μ (Dz)(Dz)ᵀ / s².
            hess.ger(4.0 * mu / (s * s), &dz, &dz, 1.0);
        }
        Some((grad, hess))
    }

    /// Newton steps at fixed barrier weight until the decrement is small.
    /// Returns the number of steps taken.
    fn center(
        &self,
        z: &mut DVector<f64>,
        mu: f64,
        settings: &BarrierSettings,
    ) -> Result<usize> {
        for step in 0..settings.max_newton_per_centering {
            let (grad, hess) = self
                .center_grad_hess(z, mu)
                .ok_or_else(|| Error::Numerical("barrier centering left the interior".into()))?;
            let dir = solve_newton_system(hess, &grad)?;
            let decrement = -grad.dot(&dir);
            if decrement <= settings.newton_tol {
                return Ok(step);
            }
            // Backtrack into the interior, then Armijo on the centered value.
            let base = self
                .center_value(z, mu)
                .ok_or_else(|| Error::Numerical("barrier centering left the interior".into()))?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..100 {
                let trial = z.clone() + &dir * alpha;
                if let Some(value) = self.center_value(&trial, mu) {
                    if value <= base - 1e-4 * alpha * decrement {
                        *z = trial;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !accepted {
                // Value evaluation ran out of precision. Benign only when the
                // remaining suboptimality is already negligible.
                if decrement <= 1e4 * settings.newton_tol {
                    return Ok(step);
                }
                return Err(Error::Numerical(format!(
                    "barrier line search stalled at μ = {mu} with decrement {decrement}"
                )));
            }
        }
        Err(Error::Numerical(format!(
            "barrier centering at μ = {mu} did not converge in {} Newton steps",
            settings.max_newton_per_centering
        )))
    }

    /// Runs the barrier path from an optional warm start (pulled into the
    /// interior; `None` starts at zero, which is always strictly feasible).
    ///
    /// A warm start also enters the path at a reduced barrier weight chosen
    /// between `mu0` and the weight the gap tolerance demands, skipping the
    /// centerings a near-optimal point does not need. If the shortcut fails
    /// to center, the full path from the origin runs instead: a poor warm
    /// point costs time, never accuracy.
    pub fn solve(&self, warm: Option<&CVec>, settings: &BarrierSettings) -> Result<JointSolution> {
        let Some(x) = warm else {
            return self.solve_path(&CVec::zeros(self.total_dim), settings.mu0, settings);
        };
        if x.len() != self.total_dim {
            return Err(Error::Dimension(format!(
                "warm start has dimension {}, expected {}",
                x.len(),
                self.total_dim
            )));
        }
        let start = self.shrink_to_interior(x);
        let target = settings.gap_tol / self.constraints.len().max(1) as f64;
        let entry = (settings.mu0 * target).sqrt().clamp(target.min(settings.mu0), settings.mu0);
        match self.solve_path(&start, entry, settings) {
            Ok(solution) => Ok(solution),
            Err(_) => self.solve_path(&CVec::zeros(self.total_dim), settings.mu0, settings),
        }
    }

    fn solve_path(
        &self,
        start: &CVec,
        mu0: f64,
        settings: &BarrierSettings,
    ) -> Result<JointSolution> {
        let mut z = lift_vec(start);
        let mut mu = mu0;
        let l = self.constraints.len() as f64;
        let mut history = Vec::new();
        for _ in 0..settings.max_centerings {
            let newton_steps = self.center(&mut z, mu, settings)?;
            history.push(CenteringRecord { mu, objective: self.objective_lifted(&z), newton_steps });
            if l * mu < settings.gap_tol {
                let slacks = self.slacks(&z);
                let multipliers = slacks.iter().map(|&s| mu / s).collect();
                return Ok(JointSolution {
                    x: unlift_vec(&z),
                    objective: self.objective_lifted(&z),
                    gap_bound: l * mu,
                    multipliers,
                    history,
                });
            }
            mu *= settings.shrink;
        }
        Err(Error::Numerical(format!(
            "barrier path did not reach gap tolerance {} in {} centerings",
            settings.gap_tol, settings.max_centerings
        )))
    }

    /// Stationarity residual `‖Qx − lin + Σᵢ μᵢ Ēᵢ x‖` of a candidate point
    /// with given constraint multipliers, in the lifted (real) metric.
    pub fn kkt_residual(&self, x: &CVec, multipliers: &[f64]) -> f64 {
        let z = lift_vec(x);
        let mut r = &self.quad_lifted * &z - &self.lin_lifted;
        for ((d, _), &m) in self.constraints.iter().zip(multipliers) {
            r += d * &z * m;
        }
        r.norm()
    }
}

fn solve_newton_system(hess: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>> {
    let n = hess.nrows();
    let scale = hess.diagonal().sum().max(1.0) / n as f64;
    let mut ridge = 0.0;
    for _ in 0..8 {
        let shifted = if ridge == 0.0 {
            hess.clone()
        } else {
            &hess + DMatrix::identity(n, n) * (ridge * scale)
        };
        if let Some(chol) = Cholesky::new(shifted) {
            return Ok(chol.solve(&(-grad)));
        }
        ridge = if ridge == 0.0 { 1e-12 } else { ridge * 100.0 };
    }
    Err(Error::Numerical("Newton system not positive definite even with ridge".into()))
}
