//! Communication and sensing SINR matrices and log-det rates.
//!
//! SINR matrices are returned in whitened Hermitian form
//! `p · L⁻¹ A Aᴴ L⁻ᴴ`, where `L Lᴴ` is the interference-plus-noise
//! covariance. This has the same determinant identity `det(I + S)` as the
//! signal-times-inverse-covariance form but stays Hermitian. Everything is
//! evaluated on the range of the combined-noise covariance `σ² WᴴW`: a
//! rank-deficient analog combiner has null directions that carry neither
//! signal nor noise.

use crate::beamforming::HybridBeamformer;
use crate::channel::{Object, SubcarrierChannelSet};
use crate::error::{Error, Result};
use crate::numerics::{
    cholesky_with_jitter, hermitian, log_det_capacity_checked, matmul, range_basis, ComplexMatrix,
};

/// Relative eigenvalue cutoff defining the range of a noise covariance.
pub const NOISE_RANGE_RCOND: f64 = 1e-10;

/// Thermal noise power in watts over `bandwidth_hz`: −173 dBm/Hz.
pub fn noise_var_from_bandwidth(bandwidth_hz: f64) -> f64 {
    let dbm = -173.0 + 10.0 * bandwidth_hz.log10();
    10f64.powf((dbm - 30.0) / 10.0)
}

/// NOMA and target power coefficients for one operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerAllocation {
    /// Strong user.
    pub alpha1: f64,
    /// Weak user.
    pub alpha2: f64,
    pub alpha_t: f64,
    pub snr_linear: f64,
    /// Per-subcarrier budget `P_k` in watts.
    pub total_budget: f64,
}

impl PowerAllocation {
    /// `α₁ = alpha_c − α₂`.
    pub fn from_alpha2(
        alpha2: f64,
        alpha_c: f64,
        alpha_t: f64,
        snr_linear: f64,
        total_budget: f64,
    ) -> Result<Self> {
        let pa = PowerAllocation {
            alpha1: alpha_c - alpha2,
            alpha2,
            alpha_t,
            snr_linear,
            total_budget,
        };
        pa.validate()?;
        Ok(pa)
    }

    /// Checks the budget-level invariants. NOMA ordering is reported by
    /// [`PowerAllocation::ordering_holds`] instead.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.alpha1, self.alpha2, self.alpha_t, self.snr_linear, self.total_budget]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("power allocation has non-finite entries"));
        }
        if self.alpha1 < 0.05 - 1e-12 || self.alpha1 > 0.65 + 1e-12 {
            return Err(Error::config(format!("alpha1 = {} outside [0.05, 0.65]", self.alpha1)));
        }
        if self.alpha2 < 0.0 {
            return Err(Error::config(format!("alpha2 = {} is negative", self.alpha2)));
        }
        if !(self.alpha_t > 0.0 && self.alpha_t <= 0.3 + 1e-12) {
            return Err(Error::config(format!("alpha_t = {} outside (0, 0.3]", self.alpha_t)));
        }
        if self.alpha1 + self.alpha2 + self.alpha_t > 1.0 + 1e-12 {
            return Err(Error::config("power coefficients exceed the budget"));
        }
        if !(self.snr_linear > 0.0) || !(self.total_budget > 0.0) {
            return Err(Error::config("snr and total budget must be positive"));
        }
        Ok(())
    }

    /// Weak user gets strictly more power than the strong user.
    pub fn ordering_holds(&self) -> bool {
        self.alpha2 > self.alpha1
    }

    pub fn p1(&self) -> f64 {
        self.alpha1 * self.total_budget * self.snr_linear
    }

    pub fn p2(&self) -> f64 {
        self.alpha2 * self.total_budget * self.snr_linear
    }

    pub fn p_target(&self) -> f64 {
        self.alpha_t * self.total_budget * self.snr_linear
    }

    /// Power carried by the communication beam (both users).
    pub fn p_comm_beam(&self) -> f64 {
        self.p1() + self.p2()
    }

    /// Power illuminating object `o`: the communication beam for users, the
    /// sensing beam for the target.
    pub fn p_object(&self, o: Object) -> f64 {
        if o.is_user() {
            self.p_comm_beam()
        } else {
            self.p_target()
        }
    }
}

/// Reflection coefficients of user 1, user 2 and the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReflectorSet {
    rho: [f64; 3],
}

impl ReflectorSet {
    pub fn new(rho: [f64; 3]) -> Result<Self> {
        if let Some(r) = rho.iter().find(|r| !(**r >= 0.0 && **r <= 1.0)) {
            return Err(Error::config(format!("reflection coefficient {r} outside [0, 1]")));
        }
        Ok(ReflectorSet { rho })
    }

    pub fn get(&self, o: Object) -> f64 {
        self.rho[o.index()]
    }

    pub fn as_array(&self) -> [f64; 3] {
        self.rho
    }
}

impl Default for ReflectorSet {
    fn default() -> Self {
        ReflectorSet { rho: [0.8, 0.5, 0.5] }
    }
}

/// Per-user, per-object and per-subcarrier rates of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    /// `r_user[i][k]`, user 1 then user 2.
    pub r_user: Vec<Vec<f64>>,
    /// `r_sense[o][k]` in [`Object::ALL`] order.
    pub r_sense: Vec<Vec<f64>>,
    pub r_comm_sum: f64,
    pub r_sense_sum: f64,
    pub r_total: f64,
    pub scenario: String,
    pub snr_db: f64,
    /// Log-det evaluations whose argument was not positive definite.
    pub numerical_warnings: usize,
}

impl RateReport {
    pub fn from_rates(
        r_user: Vec<Vec<f64>>,
        r_sense: Vec<Vec<f64>>,
        scenario: impl Into<String>,
        snr_db: f64,
    ) -> Self {
        let r_comm_sum: f64 = r_user.iter().flatten().sum();
        let r_sense_sum: f64 = r_sense.iter().flatten().sum();
        RateReport {
            r_user,
            r_sense,
            r_comm_sum,
            r_sense_sum,
            r_total: r_comm_sum + r_sense_sum,
            scenario: scenario.into(),
            snr_db,
            numerical_warnings: 0,
        }
    }

    /// Weak-user rate summed over subcarriers.
    pub fn weak_user_sum(&self) -> f64 {
        self.r_user[1].iter().sum()
    }

    /// Largest deviation between the stored sums and freshly recomputed ones.
    pub fn sum_mismatch(&self) -> f64 {
        let c: f64 = self.r_user.iter().flatten().sum();
        let s: f64 = self.r_sense.iter().flatten().sum();
        [
            (c - self.r_comm_sum).abs(),
            (s - self.r_sense_sum).abs(),
            (c + s - self.r_total).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// A receiver's combined-noise covariance restricted to its range.
#[derive(Debug, Clone)]
pub struct NoiseSubspace {
    basis: ComplexMatrix,
    noise: ComplexMatrix,
}

impl NoiseSubspace {
    /// Covariance `σ² WᴴW` of the noise after combiner `w`.
    pub fn from_combiner(w: &ComplexMatrix, noise_var: f64) -> Result<Self> {
        let cov = matmul(&hermitian(w), w)?.scale(noise_var);
        Self::from_covariance(&cov)
    }

    pub fn from_covariance(cov: &ComplexMatrix) -> Result<Self> {
        let basis = range_basis(cov, NOISE_RANGE_RCOND)?;
        let noise = matmul(&matmul(&hermitian(&basis), cov)?, &basis)?;
        Ok(NoiseSubspace { basis, noise })
    }

    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn rank(&self) -> usize {
        self.basis.cols()
    }

    /// `p · L⁻¹ A Aᴴ L⁻ᴴ` with `L Lᴴ = Σ p_j A_j A_jᴴ + noise`, mapped back
    /// to the full receiver dimension.
    pub fn sinr(
        &self,
        signal_power: f64,
        signal: &ComplexMatrix,
        interferers: &[(f64, &ComplexMatrix)],
    ) -> Result<ComplexMatrix> {
        let n = self.dim();
        if signal.rows() != n || interferers.iter().any(|(_, a)| a.rows() != n) {
            return Err(Error::shape(
                "sinr",
                format!("receiver has {n} outputs, signal has {} rows", signal.rows()),
            ));
        }
        if self.rank() == 0 || signal_power == 0.0 {
            return Ok(ComplexMatrix::zeros(n, n));
        }
        let ub = hermitian(&self.basis);
        let mut cov = self.noise.clone();
        for &(p, a) in interferers {
            if p != 0.0 {
                let ar = matmul(&ub, a)?;
                cov = cov.add(&matmul(&ar, &hermitian(&ar))?.scale(p))?;
            }
        }
        let chol = cholesky_with_jitter(&cov)?;
        let b = chol.whiten(&matmul(&ub, signal)?)?;
        let s_r = matmul(&b, &hermitian(&b))?.scale(signal_power);
        matmul(&matmul(&self.basis, &s_r)?, &ub)
    }
}

fn user_index(user: Object) -> Result<usize> {
    match user {
        Object::User1 => Ok(0),
        Object::User2 => Ok(1),
        Object::Target => Err(Error::config("the target is not a communication user")),
    }
}

fn check_k(channels: &SubcarrierChannelSet, bf: &HybridBeamformer, k: usize) -> Result<()> {
    if k >= channels.k_subcarriers() || k >= bf.k_subcarriers() {
        return Err(Error::config(format!(
            "subcarrier {k} out of range ({} subcarriers)",
            channels.k_subcarriers()
        )));
    }
    Ok(())
}

/// `W_iᴴ H_i(k) F_c(k)`.
fn comm_effective(
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    user: Object,
    k: usize,
) -> Result<ComplexMatrix> {
    matmul(
        &matmul(&hermitian(bf.combiner(user)), &channels.downlink(user, k))?,
        &bf.comm_precoder(k),
    )
}

/// `ρ_o W_Rᴴ H_o,echo(k) F_beam(k)`.
fn sensing_effective(
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    reflectors: &ReflectorSet,
    o: Object,
    k: usize,
) -> Result<ComplexMatrix> {
    let beam = if o.is_user() { bf.comm_precoder(k) } else { bf.sensing_precoder(k) };
    Ok(matmul(&matmul(&hermitian(&bf.w_radar), &channels.echo(o, k))?, &beam)?
        .scale(reflectors.get(o)))
}

/// SIC ordering: user 1 cancels user 2 and sees no intra-beam
/// interference; user 2 is interfered by user 1's power.
fn comm_sinr_from_effective(
    rx: &NoiseSubspace,
    user: usize,
    g: &ComplexMatrix,
    pa: &PowerAllocation,
) -> Result<ComplexMatrix> {
    if user == 0 {
        rx.sinr(pa.p1(), g, &[])
    } else {
        rx.sinr(pa.p2(), g, &[(pa.p1(), g)])
    }
}

fn sensing_sinr_from_effective(
    rx: &NoiseSubspace,
    o: Object,
    echoes: [&ComplexMatrix; 3],
    pa: &PowerAllocation,
) -> Result<ComplexMatrix> {
    let interferers: Vec<(f64, &ComplexMatrix)> = Object::ALL
        .iter()
        .filter(|&&j| j != o)
        .map(|&j| (pa.p_object(j), echoes[j.index()]))
        .collect();
    rx.sinr(pa.p_object(o), echoes[o.index()], &interferers)
}

pub fn comm_sinr_matrix(
    user: Object,
    k: usize,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    noise_var: f64,
) -> Result<ComplexMatrix> {
    let i = user_index(user)?;
    check_k(channels, bf, k)?;
    let rx = NoiseSubspace::from_combiner(bf.combiner(user), noise_var)?;
    comm_sinr_from_effective(&rx, i, &comm_effective(channels, bf, user, k)?, pa)
}

pub fn comm_rate(
    user: Object,
    k: usize,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    noise_var: f64,
) -> Result<f64> {
    crate::numerics::log_det_capacity(&comm_sinr_matrix(user, k, channels, bf, pa, noise_var)?)
}

pub fn sensing_sinr_matrix(
    o: Object,
    k: usize,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    noise_var: f64,
) -> Result<ComplexMatrix> {
    check_k(channels, bf, k)?;
    let rx = NoiseSubspace::from_combiner(&bf.w_radar, noise_var)?;
    let e: Vec<ComplexMatrix> = Object::ALL
        .iter()
        .map(|&j| sensing_effective(channels, bf, reflectors, j, k))
        .collect::<Result<_>>()?;
    sensing_sinr_from_effective(&rx, o, [&e[0], &e[1], &e[2]], pa)
}

pub fn sensing_rate(
    o: Object,
    k: usize,
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    noise_var: f64,
) -> Result<f64> {
    crate::numerics::log_det_capacity(&sensing_sinr_matrix(
        o, k, channels, bf, pa, reflectors, noise_var,
    )?)
}

pub fn comm_sum(
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    noise_var: f64,
) -> Result<f64> {
    let ev = RateEvaluator::new(channels, bf, &ReflectorSet::default(), noise_var)?;
    Ok(ev.comm_rates(pa)?.0.iter().flatten().sum())
}

pub fn sensing_sum(
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    noise_var: f64,
) -> Result<f64> {
    let ev = RateEvaluator::new(channels, bf, reflectors, noise_var)?;
    Ok(ev.sensing_rates(pa)?.0.iter().flatten().sum())
}

#[allow(clippy::too_many_arguments)]
pub fn total_report(
    channels: &SubcarrierChannelSet,
    bf: &HybridBeamformer,
    pa: &PowerAllocation,
    reflectors: &ReflectorSet,
    noise_var: f64,
    scenario: &str,
    snr_db: f64,
) -> Result<RateReport> {
    RateEvaluator::new(channels, bf, reflectors, noise_var)?.report(pa, scenario, snr_db)
}

/// Effective channels and noise subspaces precomputed for one beamformer,
/// so repeated evaluations under different power allocations stay cheap.
#[derive(Debug, Clone)]
pub struct RateEvaluator {
    /// `g[i][k]`.
    g: [Vec<ComplexMatrix>; 2],
    /// `e[o][k]`.
    e: [Vec<ComplexMatrix>; 3],
    user_rx: [NoiseSubspace; 2],
    radar_rx: NoiseSubspace,
}

impl RateEvaluator {
    pub fn new(
        channels: &SubcarrierChannelSet,
        bf: &HybridBeamformer,
        reflectors: &ReflectorSet,
        noise_var: f64,
    ) -> Result<Self> {
        if !(noise_var > 0.0) {
            return Err(Error::config(format!("noise variance {noise_var} must be positive")));
        }
        if bf.k_subcarriers() != channels.k_subcarriers() {
            return Err(Error::config("beamformer and channel subcarrier counts differ"));
        }
        let ks = 0..channels.k_subcarriers();
        let g_for = |u| ks.clone().map(|k| comm_effective(channels, bf, u, k)).collect::<Result<Vec<_>>>();
        let e_for = |o| {
            ks.clone()
                .map(|k| sensing_effective(channels, bf, reflectors, o, k))
                .collect::<Result<Vec<_>>>()
        };
        Ok(RateEvaluator {
            g: [g_for(Object::User1)?, g_for(Object::User2)?],
            e: [e_for(Object::User1)?, e_for(Object::User2)?, e_for(Object::Target)?],
            user_rx: [
                NoiseSubspace::from_combiner(&bf.w_user[0], noise_var)?,
                NoiseSubspace::from_combiner(&bf.w_user[1], noise_var)?,
            ],
            radar_rx: NoiseSubspace::from_combiner(&bf.w_radar, noise_var)?,
        })
    }

    pub fn k_subcarriers(&self) -> usize {
        self.g[0].len()
    }

    pub fn comm_sinr(&self, user: Object, k: usize, pa: &PowerAllocation) -> Result<ComplexMatrix> {
        let i = user_index(user)?;
        comm_sinr_from_effective(&self.user_rx[i], i, &self.g[i][k], pa)
    }

    pub fn sensing_sinr(&self, o: Object, k: usize, pa: &PowerAllocation) -> Result<ComplexMatrix> {
        sensing_sinr_from_effective(
            &self.radar_rx,
            o,
            [&self.e[0][k], &self.e[1][k], &self.e[2][k]],
            pa,
        )
    }

    /// `r[i][k]` and the number of numerical warnings.
    pub fn comm_rates(&self, pa: &PowerAllocation) -> Result<(Vec<Vec<f64>>, usize)> {
        let mut warnings = 0;
        let mut rates = Vec::with_capacity(2);
        for user in Object::USERS {
            let mut row = Vec::with_capacity(self.k_subcarriers());
            for k in 0..self.k_subcarriers() {
                let (r, w) = log_det_capacity_checked(&self.comm_sinr(user, k, pa)?)?;
                warnings += w.is_some() as usize;
                row.push(r);
            }
            rates.push(row);
        }
        Ok((rates, warnings))
    }

    /// `r[o][k]` and the number of numerical warnings.
    pub fn sensing_rates(&self, pa: &PowerAllocation) -> Result<(Vec<Vec<f64>>, usize)> {
        let mut warnings = 0;
        let mut rates = Vec::with_capacity(3);
        for o in Object::ALL {
            let mut row = Vec::with_capacity(self.k_subcarriers());
            for k in 0..self.k_subcarriers() {
                let (r, w) = log_det_capacity_checked(&self.sensing_sinr(o, k, pa)?)?;
                warnings += w.is_some() as usize;
                row.push(r);
            }
            rates.push(row);
        }
        Ok((rates, warnings))
    }

    pub fn report(&self, pa: &PowerAllocation, scenario: &str, snr_db: f64) -> Result<RateReport> {
        let (r_user, wc) = self.comm_rates(pa)?;
        let (r_sense, ws) = self.sensing_rates(pa)?;
        let mut report = RateReport::from_rates(r_user, r_sense, scenario, snr_db);
        report.numerical_warnings = wc + ws;
        Ok(report)
    }
}
