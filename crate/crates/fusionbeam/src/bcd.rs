//! Coordinate-descent drivers for the joint transceiver design.
//!
//! Every algorithm here minimizes the same objective, the end-to-end MSE as a
//! function of all per-sensor precoders and the fusion-center receiver, by
//! repeatedly replacing one block of variables with its constrained minimizer
//! (or a deliberate modification of it):
//!
//! - [`Algorithm::TwoBlock`]: two blocks per outer iteration. All precoders
//!   are re-optimized jointly by the interior-point solver, then the receiver
//!   snaps to the MMSE solution.
//! - [`Algorithm::Nested`]: an inner cyclic loop over single precoders runs
//!   until its own stopping rule, then the receiver updates once.
//! - [`Algorithm::Cyclic`]: a free-form [`Schedule`] of single-precoder and
//!   receiver updates; one pass over the schedule is one outer iteration.
//!   Precoder updates come in the flavors of [`UpdateKind`].
//!
//! Exact and proximal block updates can only decrease the objective, so those
//! traces are monotone and bounded below by zero. Approximate updates drop
//! the own-block signal curvature and may move the MSE up; their fixed points
//! still satisfy the stationarity conditions, because the dropped terms have
//! zero gradient at the anchor.
//!
//! The MSE recorded in traces is always recomputed from the defining model
//! expressions after each block update, never carried forward from solver
//! internals.

use std::time::Instant;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jointsolver::{BarrierSettings, JointProblem};
use crate::model::{
    assemble_vectorized, mse_total, transmit_power, wiener_receiver, BeamformerSet, Receiver,
    SensorRow, SystemModel,
};
use crate::subproblem::{
    self, solve_single_with, GramFactor, SolveCase, SubproblemInstance, BISECTION_TOL,
};

const MAX_INNER_SWEEPS: usize = 200;

/// One entry of a cyclic schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Precoder(usize),
    Receiver,
}

/// A cyclic update pattern. One pass over the pattern counts as one outer
/// iteration. Valid schedules touch every precoder and the receiver at least
/// once, so no variable is silently frozen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pattern: Vec<Block>,
    num_sensors: usize,
}

impl Schedule {
    pub fn new(pattern: Vec<Block>, num_sensors: usize) -> Result<Self> {
        if num_sensors == 0 {
            return Err(Error::Schedule("schedule needs at least one sensor".into()));
        }
        let mut seen = vec![false; num_sensors];
        let mut has_receiver = false;
        for block in &pattern {
            match *block {
                Block::Precoder(i) => {
                    if i >= num_sensors {
                        return Err(Error::Schedule(format!(
                            "schedule refers to sensor {i}, but there are only {num_sensors}"
                        )));
                    }
                    seen[i] = true;
                }
                Block::Receiver => has_receiver = true,
            }
        }
        if !has_receiver {
            return Err(Error::Schedule("schedule never updates the receiver".into()));
        }
        if let Some(i) = seen.iter().position(|&s| !s) {
            return Err(Error::Schedule(format!("schedule never updates precoder {i}")));
        }
        Ok(Self { pattern, num_sensors })
    }

    /// `[F₁, G, F₂, G, …, F_L, G]`: a receiver refresh after every precoder.
    pub fn fg_interleaved(num_sensors: usize) -> Self {
        let mut pattern = Vec::with_capacity(2 * num_sensors);
        for i in 0..num_sensors {
            pattern.push(Block::Precoder(i));
            pattern.push(Block::Receiver);
        }
        Self::new(pattern, num_sensors).expect("interleaved pattern is always valid")
    }

    /// `[F₁, …, F_L, G]`: one full precoder sweep, then the receiver.
    pub fn sweep_then_receiver(num_sensors: usize) -> Self {
        let mut pattern: Vec<Block> = (0..num_sensors).map(Block::Precoder).collect();
        pattern.push(Block::Receiver);
        Self::new(pattern, num_sensors).expect("sweep pattern is always valid")
    }

    pub fn pattern(&self) -> &[Block] {
        &self.pattern
    }

    pub fn num_sensors(&self) -> usize {
        self.num_sensors
    }
}

/// How single-precoder updates are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateKind {
    /// Exact constrained minimizer of the block objective.
    Plain,
    /// Exact minimizer of the block objective plus `κ‖f − f_current‖²`.
    Proximal { kappa: f64 },
    /// Structure-dropping update: the signal quadratic is frozen at the
    /// current block value and only the own-noise curvature is kept.
    Approximate,
    /// Approximate for the first `switch_after` outer iterations, proximal
    /// afterwards: fast early progress, guaranteed decrease later.
    ApproxThenProximal { switch_after: usize, kappa: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResolvedKind {
    Plain,
    Proximal(f64),
    Approximate,
}

impl UpdateKind {
    fn resolve(&self, outer: usize) -> ResolvedKind {
        match *self {
            UpdateKind::Plain => ResolvedKind::Plain,
            UpdateKind::Proximal { kappa } => ResolvedKind::Proximal(kappa),
            UpdateKind::Approximate => ResolvedKind::Approximate,
            UpdateKind::ApproxThenProximal { switch_after, kappa } => {
                if outer < switch_after {
                    ResolvedKind::Approximate
                } else {
                    ResolvedKind::Proximal(kappa)
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let kappa = match *self {
            UpdateKind::Proximal { kappa } => kappa,
            UpdateKind::ApproxThenProximal { kappa, .. } => kappa,
            _ => return Ok(()),
        };
        if kappa > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("proximal weight must be positive, got {kappa}")))
        }
    }
}

/// Stopping rule of the inner precoder loop of [`Algorithm::Nested`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnerStop {
    /// Sweep until the relative MSE decrease of a full sweep drops below the
    /// tolerance (capped at an internal sweep limit).
    Tolerance(f64),
    /// Run exactly this many sweeps.
    Sweeps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Algorithm {
    TwoBlock,
    Nested { inner: InnerStop },
    Cyclic { schedule: Schedule, update: UpdateKind },
}

impl Algorithm {
    pub fn fg_plain(num_sensors: usize) -> Self {
        Algorithm::Cyclic {
            schedule: Schedule::fg_interleaved(num_sensors),
            update: UpdateKind::Plain,
        }
    }

    pub fn fg_proximal(num_sensors: usize, kappa: f64) -> Self {
        Algorithm::Cyclic {
            schedule: Schedule::fg_interleaved(num_sensors),
            update: UpdateKind::Proximal { kappa },
        }
    }

    pub fn fg_approximate(num_sensors: usize) -> Self {
        Algorithm::Cyclic {
            schedule: Schedule::fg_interleaved(num_sensors),
            update: UpdateKind::Approximate,
        }
    }

    pub fn fg_approx_then_proximal(num_sensors: usize, switch_after: usize, kappa: f64) -> Self {
        Algorithm::Cyclic {
            schedule: Schedule::fg_interleaved(num_sensors),
            update: UpdateKind::ApproxThenProximal { switch_after, kappa },
        }
    }

    pub fn nested_sweeps(sweeps: usize) -> Self {
        Algorithm::Nested { inner: InnerStop::Sweeps(sweeps) }
    }

    pub fn nested_tolerance(tol: f64) -> Self {
        Algorithm::Nested { inner: InnerStop::Tolerance(tol) }
    }

    /// Default identifier used in exports when no explicit name is given.
    pub fn label(&self) -> String {
        match self {
            Algorithm::TwoBlock => "two-block".into(),
            Algorithm::Nested { inner: InnerStop::Sweeps(k) } => format!("nested-{k}sweep"),
            Algorithm::Nested { inner: InnerStop::Tolerance(_) } => "nested-tol".into(),
            Algorithm::Cyclic { update, .. } => match update {
                UpdateKind::Plain => "cyclic-exact".into(),
                UpdateKind::Proximal { .. } => "cyclic-proximal".into(),
                UpdateKind::Approximate => "cyclic-approximate".into(),
                UpdateKind::ApproxThenProximal { .. } => "cyclic-approx-then-proximal".into(),
            },
        }
    }

    fn validate(&self, model: &SystemModel) -> Result<()> {
        match self {
            Algorithm::TwoBlock => Ok(()),
            Algorithm::Nested { inner } => match *inner {
                InnerStop::Sweeps(0) => {
                    Err(Error::Config("nested inner loop needs at least one sweep".into()))
                }
                InnerStop::Tolerance(t) if !(t > 0.0) => {
                    Err(Error::Config(format!("inner tolerance must be positive, got {t}")))
                }
                _ => Ok(()),
            },
            Algorithm::Cyclic { schedule, update } => {
                if schedule.num_sensors() != model.num_sensors() {
                    return Err(Error::Schedule(format!(
                        "schedule is for {} sensors, model has {}",
                        schedule.num_sensors(),
                        model.num_sensors()
                    )));
                }
                update.validate()
            }
        }
    }
}

/// Outer-loop controls shared by all algorithms.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Stop when an outer pass changes the MSE by less than
    /// `rel_tol · (1 + MSE)`.
    pub rel_tol: f64,
    pub max_outer: usize,
    /// Seed of the random feasible start.
    pub seed: u64,
    /// Fraction of each power budget used by the random start.
    pub init_power_fraction: f64,
    /// Interior-point controls for the joint precoder update. The default
    /// tightens the gap tolerance well below the monotonicity slack of the
    /// trace invariants, so a joint update can never look like an increase.
    pub barrier: BarrierSettings,
    pub bisection_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_outer: 500,
            seed: 0,
            init_power_fraction: 0.9,
            // Tight gap: joint updates must never register as an MSE
            // increase. Aggressive shrink: warm-started paths re-center
            // cheaply, so few long steps beat many short ones.
            barrier: BarrierSettings { gap_tol: 1e-10, shrink: 0.05, ..BarrierSettings::default() },
            bisection_tol: BISECTION_TOL,
        }
    }
}

/// Which variables an update touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateTarget {
    Precoder(usize),
    AllPrecoders,
    Receiver,
}

/// How the update was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppliedUpdate {
    Exact,
    Proximal,
    Approximate,
    Joint,
    Wiener,
}

/// One block update as it happened.
#[derive(Debug, Clone)]
pub struct UpdateRecord {
    pub target: UpdateTarget,
    pub applied: AppliedUpdate,
    /// Exact MSE after this update.
    pub mse: f64,
    /// Euclidean norm of the change in the updated block.
    pub step_norm: f64,
    pub case: Option<SolveCase>,
    pub multiplier: Option<f64>,
    /// `Pᵢ` minus the transmit power after the update (precoder updates).
    pub power_slack: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct OuterRecord {
    pub mse: f64,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub initial_mse: f64,
    pub updates: Vec<UpdateRecord>,
    pub outer: Vec<OuterRecord>,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub beamformers: BeamformerSet,
    pub receiver: Receiver,
    pub mse: f64,
    pub trace: SolverTrace,
}

/// Random feasible start: iid CN(0,1) precoder entries scaled so each sensor
/// transmits at `power_fraction` of its budget, receiver set to the MMSE
/// solution for those precoders.
pub fn init_feasible(
    model: &SystemModel,
    seed: u64,
    power_fraction: f64,
) -> Result<(BeamformerSet, Receiver)> {
    if !(power_fraction > 0.0 && power_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "initial power fraction must be in (0, 1], got {power_fraction}"
        )));
    }
    let mut rng = crate::sampling::seeded(seed);
    let mats: Vec<_> = (0..model.num_sensors())
        .map(|i| {
            let s = model.sensor(i);
            crate::sampling::complex_gaussian_matrix(&mut rng, s.antennas(), s.obs_dim())
        })
        .collect();
    let mut bf = BeamformerSet::new(model, mats)?;
    for i in 0..model.num_sensors() {
        let power = transmit_power(model, &bf, i);
        if power <= 0.0 {
            return Err(Error::Numerical("degenerate random start with zero power".into()));
        }
        let scale = (power_fraction * model.sensor(i).power_budget() / power).sqrt();
        let scaled = bf.vec_block(i) * Complex64::new(scale, 0.0);
        bf.set_vec_block(model, i, &scaled);
    }
    let rx = wiener_receiver(model, &bf)?;
    Ok((bf, rx))
}

/// Runs an algorithm from the seeded random start in `config`.
pub fn run(model: &SystemModel, algorithm: &Algorithm, config: &SolverConfig) -> Result<SolveOutcome> {
    let (bf, rx) = init_feasible(model, config.seed, config.init_power_fraction)?;
    run_with_init(model, algorithm, config, bf, rx)
}

/// Runs an algorithm from a caller-supplied starting point.
pub fn run_with_init(
    model: &SystemModel,
    algorithm: &Algorithm,
    config: &SolverConfig,
    mut bf: BeamformerSet,
    mut rx: Receiver,
) -> Result<SolveOutcome> {
    algorithm.validate(model)?;
    let l = model.num_sensors();
    let budgets: Vec<f64> = (0..l).map(|i| model.sensor(i).power_budget()).collect();
    // The power grams depend only on model data; factor them once per run.
    let factors: Vec<GramFactor> = (0..l)
        .map(|i| GramFactor::new(&model.power_gram(i)))
        .collect::<Result<_>>()?;

    let mut mse = mse_total(model, &bf, &rx);
    let mut trace = SolverTrace {
        initial_mse: mse,
        updates: Vec::new(),
        outer: Vec::new(),
        termination: Termination::IterationLimit,
    };
    // Per-sensor row slices of the quadratic form; valid for the current
    // receiver, dropped whenever it moves.
    let mut rows: Vec<Option<SensorRow>> = vec![None; l];

    // Convergence may not be declared while a phased update kind is still in
    // its approximate phase; stalling there says nothing about stationarity.
    let min_outer = match algorithm {
        Algorithm::Cyclic { update: UpdateKind::ApproxThenProximal { switch_after, .. }, .. } => {
            *switch_after
        }
        _ => 0,
    };

    for outer in 0..config.max_outer {
        let tick = Instant::now();
        let before = mse;
        match algorithm {
            Algorithm::TwoBlock => {
                let vf = assemble_vectorized(model, &rx)?;
                let jp = JointProblem::from_vectorized(&vf, &rx, &budgets)?;
                let warm = bf.stacked();
                let sol = jp.solve(Some(&warm), &config.barrier)?;
                let step_norm = (&sol.x - &warm).norm();
                bf = BeamformerSet::from_stacked(model, &sol.x)?;
                mse = mse_total(model, &bf, &rx);
                trace.updates.push(UpdateRecord {
                    target: UpdateTarget::AllPrecoders,
                    applied: AppliedUpdate::Joint,
                    mse,
                    step_norm,
                    case: None,
                    multiplier: None,
                    power_slack: None,
                });
                apply_receiver(model, &bf, &mut rx, &mut mse, &mut trace.updates)?;
            }
            Algorithm::Nested { inner } => {
                let vf = assemble_vectorized(model, &rx)?;
                let max_sweeps = match *inner {
                    InnerStop::Sweeps(k) => k,
                    InnerStop::Tolerance(_) => MAX_INNER_SWEEPS,
                };
                let mut sweep_prev = mse;
                for _ in 0..max_sweeps {
                    for i in 0..l {
                        let inst = subproblem::build_plain(&vf, &bf, &rx, i, budgets[i])?;
                        apply_single(
                            model,
                            &inst,
                            &factors[i],
                            i,
                            budgets[i],
                            config.bisection_tol,
                            AppliedUpdate::Exact,
                            &mut bf,
                            &rx,
                            &mut mse,
                            &mut trace.updates,
                        )?;
                    }
                    if let InnerStop::Tolerance(t) = *inner {
                        if sweep_prev - mse <= t * (1.0 + mse.abs()) {
                            break;
                        }
                        sweep_prev = mse;
                    }
                }
                apply_receiver(model, &bf, &mut rx, &mut mse, &mut trace.updates)?;
            }
            Algorithm::Cyclic { schedule, update } => {
                let kind = update.resolve(outer);
                for entry in schedule.pattern() {
                    match *entry {
                        Block::Precoder(i) => {
                            if rows[i].is_none() {
                                rows[i] = Some(SensorRow::assemble(model, &rx, i));
                            }
                            let row = rows[i].as_ref().unwrap();
                            let gram = model.power_gram(i);
                            let (inst, applied) = match kind {
                                ResolvedKind::Plain => (
                                    subproblem::build_plain_from_row(
                                        row, &bf, &rx, i, &gram, budgets[i],
                                    )?,
                                    AppliedUpdate::Exact,
                                ),
                                ResolvedKind::Proximal(kappa) => (
                                    subproblem::build_proximal_from_row(
                                        row, &bf, &rx, i, &gram, budgets[i], kappa,
                                    )?,
                                    AppliedUpdate::Proximal,
                                ),
                                ResolvedKind::Approximate => (
                                    subproblem::build_approximate_from_row(
                                        row, &bf, &rx, i, &gram, budgets[i],
                                    )?,
                                    AppliedUpdate::Approximate,
                                ),
                            };
                            apply_single(
                                model,
                                &inst,
                                &factors[i],
                                i,
                                budgets[i],
                                config.bisection_tol,
                                applied,
                                &mut bf,
                                &rx,
                                &mut mse,
                                &mut trace.updates,
                            )?;
                        }
                        Block::Receiver => {
                            apply_receiver(model, &bf, &mut rx, &mut mse, &mut trace.updates)?;
                            rows.iter_mut().for_each(|r| *r = None);
                        }
                    }
                }
            }
        }
        trace.outer.push(OuterRecord { mse, wall_secs: tick.elapsed().as_secs_f64() });
        if outer >= min_outer && (before - mse).abs() <= config.rel_tol * (1.0 + mse.abs()) {
            trace.termination = Termination::Converged;
            break;
        }
    }
    Ok(SolveOutcome { beamformers: bf, receiver: rx, mse, trace })
}

#[allow(clippy::too_many_arguments)]
fn apply_single(
    model: &SystemModel,
    inst: &SubproblemInstance,
    factor: &GramFactor,
    i: usize,
    budget: f64,
    bisection_tol: f64,
    applied: AppliedUpdate,
    bf: &mut BeamformerSet,
    rx: &Receiver,
    mse: &mut f64,
    updates: &mut Vec<UpdateRecord>,
) -> Result<()> {
    let sol = solve_single_with(inst, factor, bisection_tol)?;
    let step_norm = (&sol.f_opt - bf.vec_block(i)).norm();
    bf.set_vec_block(model, i, &sol.f_opt);
    *mse = mse_total(model, bf, rx);
    updates.push(UpdateRecord {
        target: UpdateTarget::Precoder(i),
        applied,
        mse: *mse,
        step_norm,
        case: Some(sol.case_taken),
        multiplier: Some(sol.multiplier),
        power_slack: Some(budget - transmit_power(model, bf, i)),
    });
    Ok(())
}

fn apply_receiver(
    model: &SystemModel,
    bf: &BeamformerSet,
    rx: &mut Receiver,
    mse: &mut f64,
    updates: &mut Vec<UpdateRecord>,
) -> Result<()> {
    let next = wiener_receiver(model, bf)?;
    let step_norm = (next.vec() - rx.vec()).norm();
    *rx = next;
    *mse = mse_total(model, bf, rx);
    updates.push(UpdateRecord {
        target: UpdateTarget::Receiver,
        applied: AppliedUpdate::Wiener,
        mse: *mse,
        step_norm,
        case: None,
        multiplier: None,
        power_slack: None,
    });
    Ok(())
}

/// First-order stationarity diagnostic at a point: the receiver part is the
/// fixed-point residual of the MMSE update, the precoder part is the norm of
/// the projected-gradient step mapping of each block in whitened coordinates.
/// Both are scaled relative to their data; a joint minimizer gives ~0.
pub fn stationarity_residual(
    model: &SystemModel,
    bf: &BeamformerSet,
    rx: &Receiver,
) -> Result<f64> {
    let gstar = wiener_receiver(model, bf)?;
    let mut worst = (gstar.vec() - rx.vec()).norm() / (1.0 + gstar.vec().norm());
    let vf = assemble_vectorized(model, rx)?;
    for i in 0..model.num_sensors() {
        let budget = model.sensor(i).power_budget();
        let inst = subproblem::build_plain(&vf, bf, rx, i, budget)?;
        let factor = GramFactor::new(inst.gram())?;
        let sf = subproblem::whiten_with(&inst, &factor);
        let ft = factor.sqrt() * bf.vec_block(i);
        let lmax = sf.eigenvalues().first().copied().unwrap_or(0.0);
        let gamma = 1.0 / (2.0 * lmax + 1.0);
        let grad = (sf.whitened() * &ft - sf.lin_whitened()) * Complex64::new(2.0, 0.0);
        let mut target = &ft - &grad * Complex64::new(gamma, 0.0);
        let radius = budget.sqrt();
        let norm = target.norm();
        if norm > radius {
            target *= Complex64::new(radius / norm, 0.0);
        }
        let res = (&ft - &target).norm() / (gamma * (1.0 + sf.lin_whitened().norm()));
        worst = worst.max(res);
    }
    Ok(worst)
}
