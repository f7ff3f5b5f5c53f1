//! System model and mean-squared-error algebra.
//!
//! `L` sensors observe a common zero-mean source `s ∈ ℂᴷ` with covariance
//! `Σ_s`. Sensor `i` sees `xᵢ = Kᵢ s + nᵢ` (observation matrix `Kᵢ ∈ ℂ^{Jᵢ×K}`,
//! noise covariance `Σᵢ`), precodes with `Fᵢ ∈ ℂ^{Nᵢ×Jᵢ}`, and transmits over
//! the channel `Hᵢ ∈ ℂ^{M×Nᵢ}` of a coherent multiple-access channel. The
//! fusion center observes
//!
//! ```text
//! y = Σᵢ Hᵢ Fᵢ (Kᵢ s + nᵢ) + n₀,    n₀ ~ CN(0, σ₀² I_M)
//! ```
//!
//! and estimates `ŝ = Gᴴ y`. With `T = Σᵢ HᵢFᵢKᵢ` the estimation error
//! covariance is
//!
//! ```text
//! Φ = Gᴴ T Σ_s Tᴴ G − Gᴴ T Σ_s − Σ_s Tᴴ G + Gᴴ Σ_n G + Σ_s
//! Σ_n = σ₀² I_M + Σᵢ Hᵢ Fᵢ Σᵢ Fᵢᴴ Hᵢᴴ
//! ```
//!
//! and the design objective is `MSE = Tr Φ` subject to per-sensor transmit
//! power `Tr{Fᵢ (KᵢΣ_sKᵢᴴ + Σᵢ) Fᵢᴴ} ≤ Pᵢ`.
//!
//! For fixed beamformers the optimal receiver is the Wiener filter
//! `G★ = (T Σ_s Tᴴ + Σ_n)⁻¹ T Σ_s`. For a fixed receiver the MSE is a convex
//! quadratic in the stacked vectorized beamformers `fᵢ = vec(Fᵢ)`:
//!
//! ```text
//! MSE = Σᵢⱼ fᵢᴴ Aᵢⱼ fⱼ − 2 Re Σᵢ gᴴ Bᵢ fᵢ + Σᵢ fᵢᴴ Cᵢ fᵢ + c
//!
//! Aᵢⱼ = (KⱼΣ_sKᵢᴴ)ᵀ ⊗ (Hᵢᴴ G Gᴴ Hⱼ)      Bᵢ = (KᵢΣ_s)ᵀ ⊗ Hᵢ
//! Cᵢ  = Σᵢ* ⊗ (Hᵢᴴ G Gᴴ Hᵢ)               Eᵢ = (KᵢΣ_sKᵢᴴ + Σᵢ)ᵀ ⊗ I_{Nᵢ}
//! c   = Tr Σ_s + σ₀² ‖g‖²                 (g = vec(G))
//! ```
//!
//! with the power constraint `fᵢᴴ Eᵢ fᵢ ≤ Pᵢ`. [`assemble_vectorized`] builds
//! these blocks; [`mse_quadratic`] evaluates the quadratic form and must agree
//! with [`mse_total`] to roundoff.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    check_psd, hermitian_defect, hermitian_eigen_desc, hermitian_part, hpd_cholesky, mat_of,
    real_part_checked, vec_of, CMat, CVec, IMAG_EPS, PSD_EPS,
};

/// Source dimension and covariance `Σ_s`.
#[derive(Debug, Clone)]
pub struct SourceModel {
    covariance: CMat,
}

impl SourceModel {
    /// Validates that `covariance` is Hermitian PSD; stores its Hermitian part.
    pub fn new(covariance: CMat) -> Result<Self> {
        if covariance.nrows() != covariance.ncols() || covariance.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "source covariance must be square and non-empty, got {}x{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if hermitian_defect(&covariance) > IMAG_EPS {
            return Err(Error::Model("source covariance is not Hermitian".into()));
        }
        let h = hermitian_part(&covariance);
        let (lambda, _) = hermitian_eigen_desc(&h);
        let lmax = lambda.first().copied().unwrap_or(0.0).max(0.0);
        if lambda.iter().any(|&l| l < -PSD_EPS * lmax.max(1.0)) {
            return Err(Error::Model(format!(
                "source covariance is not PSD (min eigenvalue {:+e})",
                lambda.last().unwrap()
            )));
        }
        Ok(Self { covariance: h })
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &CMat {
        &self.covariance
    }
}

/// One sensor: observation map `Kᵢ`, observation noise `Σᵢ`, antenna count,
/// and transmit power budget `Pᵢ`.
#[derive(Debug, Clone)]
pub struct SensorSpec {
    obs_matrix: CMat,
    noise_cov: CMat,
    antennas: usize,
    power_budget: f64,
}

impl SensorSpec {
    pub fn new(obs_matrix: CMat, noise_cov: CMat, antennas: usize, power_budget: f64) -> Result<Self> {
        let j = obs_matrix.nrows();
        if j == 0 || obs_matrix.ncols() == 0 {
            return Err(Error::Dimension("observation matrix must be non-empty".into()));
        }
        if noise_cov.nrows() != j || noise_cov.ncols() != j {
            return Err(Error::Dimension(format!(
                "noise covariance must be {j}x{j}, got {}x{}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        if antennas == 0 {
            return Err(Error::Model("sensor must have at least one antenna".into()));
        }
        if !(power_budget > 0.0) {
            return Err(Error::Model(format!(
                "power budget must be positive, got {power_budget}"
            )));
        }
        if hermitian_defect(&noise_cov) > IMAG_EPS {
            return Err(Error::Model("sensor noise covariance is not Hermitian".into()));
        }
        let h = hermitian_part(&noise_cov);
        let (lambda, _) = hermitian_eigen_desc(&h);
        let lmax = lambda.first().copied().unwrap_or(0.0).max(0.0);
        if lambda.iter().any(|&l| l < -PSD_EPS * lmax.max(1.0)) {
            return Err(Error::Model(format!(
                "sensor noise covariance is not PSD (min eigenvalue {:+e})",
                lambda.last().unwrap()
            )));
        }
        Ok(Self { obs_matrix, noise_cov: h, antennas, power_budget })
    }

    /// Observation dimension `Jᵢ`.
    pub fn obs_dim(&self) -> usize {
        self.obs_matrix.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn obs_matrix(&self) -> &CMat {
        &self.obs_matrix
    }

    pub fn noise_cov(&self) -> &CMat {
        &self.noise_cov
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }
}

/// The complete network: source, sensors, channels, and fusion-center noise.
#[derive(Debug, Clone)]
pub struct SystemModel {
    source: SourceModel,
    sensors: Vec<SensorSpec>,
    channels: Vec<CMat>,
    fc_antennas: usize,
    channel_noise_var: f64,
    /// Per-sensor observation gram `KᵢΣ_sKᵢᴴ + Σᵢ`; strictly PD by validation.
    obs_grams: Vec<CMat>,
}

impl SystemModel {
    /// Assembles and validates the network. `channels[i]` is `Hᵢ ∈ ℂ^{M×Nᵢ}`.
    ///
    /// Beyond shape checks, requires `σ₀² > 0` and strict positive
    /// definiteness of every observation gram `KᵢΣ_sKᵢᴴ + Σᵢ` (the transmit
    /// power form degenerates otherwise).
    pub fn new(
        source: SourceModel,
        sensors: Vec<SensorSpec>,
        channels: Vec<CMat>,
        fc_antennas: usize,
        channel_noise_var: f64,
    ) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::Model("at least one sensor is required".into()));
        }
        if channels.len() != sensors.len() {
            return Err(Error::Dimension(format!(
                "{} sensors but {} channel matrices",
                sensors.len(),
                channels.len()
            )));
        }
        if fc_antennas == 0 {
            return Err(Error::Model("fusion center must have at least one antenna".into()));
        }
        if !(channel_noise_var > 0.0) {
            return Err(Error::Model(format!(
                "channel noise variance must be positive, got {channel_noise_var}"
            )));
        }
        let k = source.dim();
        let mut obs_grams = Vec::with_capacity(sensors.len());
        for (i, (s, h)) in sensors.iter().zip(&channels).enumerate() {
            if s.obs_matrix().ncols() != k {
                return Err(Error::Dimension(format!(
                    "sensor {i}: observation matrix has {} columns, source dimension is {k}",
                    s.obs_matrix().ncols()
                )));
            }
            if h.nrows() != fc_antennas || h.ncols() != s.antennas() {
                return Err(Error::Dimension(format!(
                    "sensor {i}: channel must be {fc_antennas}x{}, got {}x{}",
                    s.antennas(),
                    h.nrows(),
                    h.ncols()
                )));
            }
            let gram = hermitian_part(
                &(s.obs_matrix() * source.covariance() * s.obs_matrix().adjoint() + s.noise_cov()),
            );
            if hpd_cholesky(gram.clone()).is_none() {
                return Err(Error::Model(format!(
                    "sensor {i}: observation gram KΣ_sKᴴ + Σ is not positive definite"
                )));
            }
            obs_grams.push(gram);
        }
        Ok(Self { source, sensors, channels, fc_antennas, channel_noise_var, obs_grams })
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn source(&self) -> &SourceModel {
        &self.source
    }

    pub fn source_dim(&self) -> usize {
        self.source.dim()
    }

    pub fn fc_antennas(&self) -> usize {
        self.fc_antennas
    }

    pub fn channel_noise_var(&self) -> f64 {
        self.channel_noise_var
    }

    pub fn sensor(&self, i: usize) -> &SensorSpec {
        &self.sensors[i]
    }

    pub fn channel(&self, i: usize) -> &CMat {
        &self.channels[i]
    }

    /// Observation gram `KᵢΣ_sKᵢᴴ + Σᵢ` (the matrix inside the power form).
    pub fn obs_gram(&self, i: usize) -> &CMat {
        &self.obs_grams[i]
    }

    /// Power-form matrix `Eᵢ = (KᵢΣ_sKᵢᴴ + Σᵢ)ᵀ ⊗ I_{Nᵢ}` over `vec(Fᵢ)`.
    pub fn power_gram(&self, i: usize) -> CMat {
        let n = self.sensors[i].antennas();
        self.obs_grams[i].transpose().kronecker(&CMat::identity(n, n))
    }

    /// Length of `vec(Fᵢ)`.
    pub fn block_dim(&self, i: usize) -> usize {
        self.sensors[i].antennas() * self.sensors[i].obs_dim()
    }

    /// Offsets of each `fᵢ` within the stacked vector `f`, plus the total.
    pub fn block_offsets(&self) -> (Vec<usize>, usize) {
        let mut offs = Vec::with_capacity(self.sensors.len());
        let mut total = 0;
        for i in 0..self.sensors.len() {
            offs.push(total);
            total += self.block_dim(i);
        }
        (offs, total)
    }
}

/// One precoder per sensor, `Fᵢ ∈ ℂ^{Nᵢ×Jᵢ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    mats: Vec<CMat>,
}

impl BeamformerSet {
    pub fn new(model: &SystemModel, mats: Vec<CMat>) -> Result<Self> {
        if mats.len() != model.num_sensors() {
            return Err(Error::Dimension(format!(
                "expected {} beamformers, got {}",
                model.num_sensors(),
                mats.len()
            )));
        }
        for (i, f) in mats.iter().enumerate() {
            let s = model.sensor(i);
            if f.nrows() != s.antennas() || f.ncols() != s.obs_dim() {
                return Err(Error::Dimension(format!(
                    "beamformer {i} must be {}x{}, got {}x{}",
                    s.antennas(),
                    s.obs_dim(),
                    f.nrows(),
                    f.ncols()
                )));
            }
        }
        Ok(Self { mats })
    }

    pub fn zeros(model: &SystemModel) -> Self {
        let mats = (0..model.num_sensors())
            .map(|i| CMat::zeros(model.sensor(i).antennas(), model.sensor(i).obs_dim()))
            .collect();
        Self { mats }
    }

    pub fn mat(&self, i: usize) -> &CMat {
        &self.mats[i]
    }

    /// `fᵢ = vec(Fᵢ)`.
    pub fn vec_block(&self, i: usize) -> CVec {
        vec_of(&self.mats[i])
    }

    /// All blocks stacked: `f = [f₁; …; f_L]`.
    pub fn stacked(&self) -> CVec {
        let total: usize = self.mats.iter().map(|m| m.len()).sum();
        let mut out = CVec::zeros(total);
        let mut at = 0;
        for m in &self.mats {
            out.rows_mut(at, m.len()).copy_from(&vec_of(m));
            at += m.len();
        }
        out
    }

    pub fn from_stacked(model: &SystemModel, f: &CVec) -> Result<Self> {
        let (offs, total) = model.block_offsets();
        if f.len() != total {
            return Err(Error::Dimension(format!(
                "stacked beamformer must have length {total}, got {}",
                f.len()
            )));
        }
        let mats = (0..model.num_sensors())
            .map(|i| {
                let s = model.sensor(i);
                let block = CVec::from(f.rows(offs[i], model.block_dim(i)));
                mat_of(&block, s.antennas(), s.obs_dim())
            })
            .collect();
        Ok(Self { mats })
    }

    /// Replaces block `i` with the reshaped `fᵢ`.
    pub fn set_vec_block(&mut self, model: &SystemModel, i: usize, f_i: &CVec) {
        let s = model.sensor(i);
        assert_eq!(f_i.len(), s.antennas() * s.obs_dim(), "block {i} length mismatch");
        self.mats[i] = mat_of(f_i, s.antennas(), s.obs_dim());
    }
}

/// Fusion-center receiver `G ∈ ℂ^{M×K}`, applied as `ŝ = Gᴴ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Receiver {
    mat: CMat,
}

impl Receiver {
    pub fn new(model: &SystemModel, mat: CMat) -> Result<Self> {
        if mat.nrows() != model.fc_antennas() || mat.ncols() != model.source_dim() {
            return Err(Error::Dimension(format!(
                "receiver must be {}x{}, got {}x{}",
                model.fc_antennas(),
                model.source_dim(),
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { mat })
    }

    pub fn zeros(model: &SystemModel) -> Self {
        Self { mat: CMat::zeros(model.fc_antennas(), model.source_dim()) }
    }

    pub fn mat(&self) -> &CMat {
        &self.mat
    }

    /// `g = vec(G)`.
    pub fn vec(&self) -> CVec {
        vec_of(&self.mat)
    }
}

/// Effective signal map `T = Σᵢ HᵢFᵢKᵢ ∈ ℂ^{M×K}`.
fn signal_map(model: &SystemModel, bf: &BeamformerSet) -> CMat {
    let mut t = CMat::zeros(model.fc_antennas(), model.source_dim());
    for i in 0..model.num_sensors() {
        t += model.channel(i) * bf.mat(i) * model.sensor(i).obs_matrix();
    }
    t
}

/// Total received noise covariance `Σ_n = σ₀² I_M + Σᵢ HᵢFᵢΣᵢFᵢᴴHᵢᴴ`.
pub fn noise_covariance(model: &SystemModel, bf: &BeamformerSet) -> CMat {
    let m = model.fc_antennas();
    let mut sn = CMat::identity(m, m) * Complex64::new(model.channel_noise_var(), 0.0);
    for i in 0..model.num_sensors() {
        let hf = model.channel(i) * bf.mat(i);
        sn += &hf * model.sensor(i).noise_cov() * hf.adjoint();
    }
    hermitian_part(&sn)
}

/// Total mean squared error `Tr Φ` for the given beamformers and receiver.
/// Always real and non-negative.
pub fn mse_total(model: &SystemModel, bf: &BeamformerSet, rx: &Receiver) -> f64 {
    let t = signal_map(model, bf);
    let sn = noise_covariance(model, bf);
    let g = rx.mat();
    let sigma_s = model.source().covariance();
    let gt = g.adjoint() * &t;
    // Tr Φ = Tr{GᴴTΣ_sTᴴG} − 2 Re Tr{GᴴTΣ_s} + Tr{GᴴΣ_nG} + Tr{Σ_s}
    let quad = (&gt * sigma_s * gt.adjoint()).trace();
    let cross = (&gt * sigma_s).trace();
    let noise = (g.adjoint() * &sn * g).trace();
    let total = quad.re - 2.0 * cross.re + noise.re + sigma_s.trace().re;
    let imag = quad.im + noise.im; // cross enters via 2·Re only
    assert!(
        imag.abs() <= IMAG_EPS * (1.0 + total.abs()),
        "mse_total: imaginary residue {imag} (mse {total})"
    );
    total.max(0.0)
}

/// Transmit power of sensor `i`: `Tr{Fᵢ (KᵢΣ_sKᵢᴴ + Σᵢ) Fᵢᴴ}`.
pub fn transmit_power(model: &SystemModel, bf: &BeamformerSet, i: usize) -> f64 {
    let f = bf.mat(i);
    real_part_checked((f * model.obs_gram(i) * f.adjoint()).trace(), "transmit_power")
}

/// MMSE receiver for fixed beamformers: `G★ = (TΣ_sTᴴ + Σ_n)⁻¹ TΣ_s`.
///
/// The system matrix is Hermitian PD because `σ₀² > 0`; solved by Cholesky,
/// never by explicit inversion.
pub fn wiener_receiver(model: &SystemModel, bf: &BeamformerSet) -> Result<Receiver> {
    let t = signal_map(model, bf);
    let sn = noise_covariance(model, bf);
    let sigma_s = model.source().covariance();
    let r = hermitian_part(&(&t * sigma_s * t.adjoint() + &sn));
    let s = &t * sigma_s;
    let chol = hpd_cholesky(r).ok_or_else(|| {
        Error::Numerical("wiener_receiver: received-signal covariance is not PD".into())
    })?;
    Receiver::new(model, chol.solve(&s))
}

/// The MSE as an explicit quadratic form over stacked `vec(Fᵢ)` blocks, for a
/// fixed receiver. See the module docs for the block definitions.
#[derive(Debug, Clone)]
pub struct VectorizedForm {
    a: Vec<Vec<CMat>>,
    b: Vec<CMat>,
    c: Vec<CMat>,
    e: Vec<CMat>,
    constant: f64,
    block_dims: Vec<usize>,
}

impl VectorizedForm {
    /// Quadratic coupling block `Aᵢⱼ` (dimensions `NᵢJᵢ × NⱼJⱼ`).
    pub fn a_block(&self, i: usize, j: usize) -> &CMat {
        &self.a[i][j]
    }

    /// Linear-term block `Bᵢ` (dimensions `KM × NᵢJᵢ`).
    pub fn b_block(&self, i: usize) -> &CMat {
        &self.b[i]
    }

    /// Noise quadratic block `Cᵢ`.
    pub fn c_block(&self, i: usize) -> &CMat {
        &self.c[i]
    }

    /// Power-form block `Eᵢ`.
    pub fn e_block(&self, i: usize) -> &CMat {
        &self.e[i]
    }

    /// Constant term `c = Tr Σ_s + σ₀²‖g‖²`.
    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn num_sensors(&self) -> usize {
        self.block_dims.len()
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    pub fn total_dim(&self) -> usize {
        self.block_dims.iter().sum()
    }

    /// Full stacked quadratic `A + blockdiag(C)`, Hermitian PSD.
    pub fn stacked_quad(&self) -> CMat {
        let total = self.total_dim();
        let l = self.num_sensors();
        let mut q = CMat::zeros(total, total);
        let mut row = 0;
        for i in 0..l {
            let mut col = 0;
            for j in 0..l {
                let mut block = self.a[i][j].clone();
                if i == j {
                    block += &self.c[i];
                }
                q.view_mut((row, col), block.shape()).copy_from(&block);
                col += self.block_dims[j];
            }
            row += self.block_dims[i];
        }
        hermitian_part(&q)
    }

    /// Stacked linear vector `[B₁ᴴg; …; B_Lᴴg]`.
    pub fn stacked_lin(&self, rx: &Receiver) -> CVec {
        let g = rx.vec();
        let total = self.total_dim();
        let mut out = CVec::zeros(total);
        let mut at = 0;
        for i in 0..self.num_sensors() {
            let w = self.b[i].adjoint() * &g;
            out.rows_mut(at, w.len()).copy_from(&w);
            at += self.block_dims[i];
        }
        out
    }

    /// Coupling term `qᵢ = Σ_{j≠i} Aᵢⱼ fⱼ` at the current beamformers.
    pub fn coupling(&self, bf: &BeamformerSet, i: usize) -> CVec {
        let mut q = CVec::zeros(self.block_dims[i]);
        for j in 0..self.num_sensors() {
            if j != i {
                q += &self.a[i][j] * bf.vec_block(j);
            }
        }
        q
    }
}

/// Builds `Aᵢⱼ` for the given receiver gram `W = GGᴴ`.
fn a_block_of(model: &SystemModel, w: &CMat, i: usize, j: usize) -> CMat {
    let sigma_s = model.source().covariance();
    let left = (model.sensor(j).obs_matrix() * sigma_s * model.sensor(i).obs_matrix().adjoint())
        .transpose();
    let right = model.channel(i).adjoint() * w * model.channel(j);
    left.kronecker(&right)
}

/// Builds `Cᵢ` for the given receiver gram.
fn c_block_of(model: &SystemModel, w: &CMat, i: usize) -> CMat {
    let right = model.channel(i).adjoint() * w * model.channel(i);
    model.sensor(i).noise_cov().conjugate().kronecker(&right)
}

/// Builds `Bᵢ`.
fn b_block_of(model: &SystemModel, i: usize) -> CMat {
    (model.sensor(i).obs_matrix() * model.source().covariance())
        .transpose()
        .kronecker(model.channel(i))
}

/// Assembles the full vectorized quadratic form for receiver `rx`.
///
/// Verifies that the stacked quadratic `A + blockdiag(C)` is Hermitian PSD
/// (it is a gram form by construction, so a violation signals a bug).
pub fn assemble_vectorized(model: &SystemModel, rx: &Receiver) -> Result<VectorizedForm> {
    let l = model.num_sensors();
    let g = rx.mat();
    let w = g * g.adjoint();
    let mut a = Vec::with_capacity(l);
    for i in 0..l {
        let mut row = Vec::with_capacity(l);
        for j in 0..l {
            row.push(a_block_of(model, &w, i, j));
        }
        a.push(row);
    }
    let b: Vec<CMat> = (0..l).map(|i| b_block_of(model, i)).collect();
    let c: Vec<CMat> = (0..l).map(|i| c_block_of(model, &w, i)).collect();
    let e: Vec<CMat> = (0..l).map(|i| model.power_gram(i)).collect();
    let block_dims: Vec<usize> = (0..l).map(|i| model.block_dim(i)).collect();
    let constant = real_part_checked(model.source().covariance().trace(), "Tr Σ_s")
        + model.channel_noise_var() * rx.vec().norm_squared();
    let vf = VectorizedForm { a, b, c, e, constant, block_dims };
    check_psd(&vf.stacked_quad(), PSD_EPS, "assemble_vectorized: A + blockdiag(C)")?;
    Ok(vf)
}

/// Per-sensor slice of the vectorized form: row `i` of `A`, plus `Bᵢ` and
/// `Cᵢ`. Lets coordinate-descent loops rebuild only what a single-beamformer
/// update needs after a receiver change.
#[derive(Debug, Clone)]
pub(crate) struct SensorRow {
    pub a_row: Vec<CMat>,
    pub b: CMat,
    pub c: CMat,
}

impl SensorRow {
    pub(crate) fn assemble(model: &SystemModel, rx: &Receiver, i: usize) -> Self {
        let g = rx.mat();
        let w = g * g.adjoint();
        let a_row = (0..model.num_sensors()).map(|j| a_block_of(model, &w, i, j)).collect();
        Self { a_row, b: b_block_of(model, i), c: c_block_of(model, &w, i) }
    }

    /// `qᵢ = Σ_{j≠i} Aᵢⱼ fⱼ`.
    pub(crate) fn coupling(&self, bf: &BeamformerSet, i: usize) -> CVec {
        let mut q = CVec::zeros(self.a_row[i].nrows());
        for (j, block) in self.a_row.iter().enumerate() {
            if j != i {
                q += block * bf.vec_block(j);
            }
        }
        q
    }
}

/// Evaluates the quadratic MSE form at the given beamformers.
///
/// `vf` must have been assembled for the same receiver `rx`; the result then
/// matches [`mse_total`] to roundoff.
pub fn mse_quadratic(vf: &VectorizedForm, bf: &BeamformerSet, rx: &Receiver) -> f64 {
    let l = vf.num_sensors();
    let g = rx.vec();
    let blocks: Vec<CVec> = (0..l).map(|i| bf.vec_block(i)).collect();
    let mut quad = Complex64::new(0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            quad += (blocks[i].adjoint() * &vf.a[i][j] * &blocks[j])[(0, 0)];
        }
        quad += (blocks[i].adjoint() * &vf.c[i] * &blocks[i])[(0, 0)];
    }
    let mut cross = 0.0;
    for i in 0..l {
        cross += (g.adjoint() * &vf.b[i] * &blocks[i])[(0, 0)].re;
    }
    real_part_checked(quad, "mse_quadratic") - 2.0 * cross + vf.constant
}
