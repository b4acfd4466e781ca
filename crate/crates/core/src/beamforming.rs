//! Hybrid analog/digital beamformer construction.
//!
//! Analog stages are constant-modulus phase extractions: user and radar
//! combiners from the pseudo-inverse of each receiver's strongest subcarrier
//! channel, the shared precoder from the negated conjugate phase of the
//! stacked target/strong-user channel. The per-subcarrier digital precoder is
//! a trace-normalized zero-forcing inverse of the post-analog channel.
//!
//! Column convention: the first `N_s` precoder columns form the sensing beam,
//! the remaining columns the communication beam.

use crate::channel::{trace::write_matrix, Object, SubcarrierChannelSet};
use crate::error::{Error, Result};
use crate::numerics::{
    frobenius_norm, hermitian, matmul, phase_matrix, power, pseudo_inverse,
    pseudo_inverse_detailed, trace, ComplexMatrix,
};

/// Condition number above which the effective channel is reported as
/// numerically rank deficient.
pub const ZF_RCOND: f64 = 1e-12;

/// Default relative truncation of the zero-forcing inverse.
pub const DEFAULT_ZF_TRUNCATION: f64 = 2e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformingConfig {
    /// RF chains per user; also the number of combiner columns.
    pub n_r_rf: usize,
    /// Streams per beam.
    pub n_s: usize,
    pub p_max: f64,
    /// Effective-channel modes weaker than this fraction of the strongest
    /// are not inverted.
    pub zf_truncation: f64,
}

impl BeamformingConfig {
    pub const fn new(n_r_rf: usize, n_s: usize, p_max: f64) -> Self {
        BeamformingConfig {
            n_r_rf,
            n_s,
            p_max,
            zf_truncation: DEFAULT_ZF_TRUNCATION,
        }
    }
}

/// Index of the subcarrier with the largest Frobenius norm (first one on
/// ties).
pub fn select_strongest_subcarrier(channels: &[ComplexMatrix]) -> Result<usize> {
    if channels.is_empty() {
        return Err(Error::config("no subcarrier channels to choose from"));
    }
    let mut best = 0;
    let mut best_norm = frobenius_norm(&channels[0]);
    for (k, h) in channels.iter().enumerate().skip(1) {
        let n = frobenius_norm(h);
        if n > best_norm {
            best = k;
            best_norm = n;
        }
    }
    Ok(best)
}

/// `(1/√N_r) exp(j∠[pinv(Hᴴ)]_{:, 0..n_rf})` for an `N_r x N_t` channel.
pub fn design_analog_combiner(h_strongest: &ComplexMatrix, n_rf: usize) -> Result<ComplexMatrix> {
    let n_r = h_strongest.rows();
    let p = pseudo_inverse(&hermitian(h_strongest), None)?;
    if n_rf == 0 || n_rf > p.cols() {
        return Err(Error::shape(
            "design_analog_combiner",
            format!("{n_rf} RF chains requested, pinv(Hᴴ) has {} columns", p.cols()),
        ));
    }
    Ok(phase_matrix(&p.columns(0..n_rf)?, 1.0 / (n_r as f64).sqrt()))
}

/// `(1/√N_t) exp(j∠[-Hᴴ])` for a stacked `(rows x N_t)` channel.
pub fn design_analog_precoder(stacked: &ComplexMatrix) -> Result<ComplexMatrix> {
    if stacked.rows() == 0 || stacked.cols() == 0 {
        return Err(Error::shape("design_analog_precoder", "empty stacked channel"));
    }
    let n_t = stacked.cols();
    Ok(phase_matrix(
        &hermitian(stacked).scale(-1.0),
        1.0 / (n_t as f64).sqrt(),
    ))
}

/// `[H_t; H_1]`.
pub fn stack_composite_channel(
    h_target_k: &ComplexMatrix,
    h_user1_k: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    h_target_k.vstack(h_user1_k).map_err(|_| {
        Error::shape(
            "stack_composite_channel",
            format!(
                "target has {} columns, user has {}",
                h_target_k.cols(),
                h_user1_k.cols()
            ),
        )
    })
}

/// Zero-forcing digital precoder with the rank it could realize.
#[derive(Debug, Clone)]
pub struct DigitalPrecoder {
    pub matrix: ComplexMatrix,
    pub rank: usize,
    pub condition_number: f64,
}

impl DigitalPrecoder {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.matrix.rows().min(self.matrix.cols())
    }
}

/// `H̃† / sqrt(tr(H̃† H̃†ᴴ))`, truncating only numerically zero modes.
pub fn design_digital_precoder(effective: &ComplexMatrix) -> Result<ComplexMatrix> {
    design_digital_precoder_detailed(effective, ZF_RCOND).map(|d| d.matrix)
}

/// Zero-forcing precoder over the modes of `effective` whose singular value
/// exceeds `truncation` times the largest.
pub fn design_digital_precoder_detailed(effective: &ComplexMatrix, truncation: f64) -> Result<DigitalPrecoder> {
    if !(0.0..1.0).contains(&truncation) {
        return Err(Error::config(format!("zf truncation {truncation} outside [0, 1)")));
    }
    let pinv = pseudo_inverse_detailed(effective, Some(truncation.max(ZF_RCOND)))?;
    let cond = pinv.condition_number();
    if cond > 1.0 / ZF_RCOND {
        log::debug!(
            "digital precoder: effective channel condition number {cond:e}, rank {} kept",
            pinv.rank
        );
    }
    let norm = power(&pinv.matrix);
    if !(norm > 0.0) {
        return Err(Error::NumericalFailure {
            op: "design_digital_precoder",
            iterations: 0,
        });
    }
    Ok(DigitalPrecoder {
        matrix: pinv.matrix.scale(1.0 / norm.sqrt()),
        rank: pinv.rank,
        condition_number: cond,
    })
}

/// Analog precoder, per-subcarrier digital precoders and all combiners.
#[derive(Debug, Clone)]
pub struct HybridBeamformer {
    /// `N_t x (N_R + N_r)`, constant modulus `1/√N_t`.
    pub f_rf: ComplexMatrix,
    /// Trace-normalized zero-forcing precoders, one per subcarrier.
    pub f_bb: Vec<ComplexMatrix>,
    /// Amplitude factor (≤ 1) keeping `tr(F Fᴴ) ≤ P_max` per subcarrier.
    pub power_scale: Vec<f64>,
    /// Analog combiners of user 1 and user 2.
    pub w_user: Vec<ComplexMatrix>,
    pub w_radar: ComplexMatrix,
    /// Subcarrier used for the shared analog precoder.
    pub strongest_subcarrier: usize,
    /// Subcarrier each receiver's combiner was designed on (user1, user2, radar).
    pub combiner_subcarriers: [usize; 3],
    pub digital_rank: Vec<usize>,
    pub n_s: usize,
}

impl HybridBeamformer {
    pub fn k_subcarriers(&self) -> usize {
        self.f_bb.len()
    }

    /// Full hybrid precoder `s_k F_RF F_BB(k)`.
    pub fn precoder(&self, k: usize) -> ComplexMatrix {
        matmul(&self.f_rf, &self.f_bb[k])
            .expect("shapes fixed at assembly")
            .scale(self.power_scale[k])
    }

    /// Sensing beam: the first `N_s` precoder columns.
    pub fn sensing_precoder(&self, k: usize) -> ComplexMatrix {
        self.precoder(k).columns(0..self.n_s).expect("n_s columns")
    }

    /// Communication beam: the columns after the sensing block.
    pub fn comm_precoder(&self, k: usize) -> ComplexMatrix {
        let f = self.precoder(k);
        let cols = f.cols();
        f.columns(self.n_s..cols).expect("comm columns")
    }

    /// Combiner used by a receiver: the user's own, or the radar combiner
    /// for the target echo.
    pub fn combiner(&self, o: Object) -> &ComplexMatrix {
        match o {
            Object::User1 => &self.w_user[0],
            Object::User2 => &self.w_user[1],
            Object::Target => &self.w_radar,
        }
    }

    /// Measures every hardware and power constraint.
    pub fn audit(&self) -> ConstraintAudit {
        let modulus_dev = |m: &ComplexMatrix| {
            let target = 1.0 / m.rows() as f64;
            m.iter()
                .map(|z| (z.norm_sqr() - target).abs())
                .fold(0.0, f64::max)
        };
        let n_cols = self.f_rf.cols() as f64;
        let rf_gram = matmul(&hermitian(&self.f_rf), &self.f_rf).expect("square");
        let rf_trace = trace(&rf_gram).expect("square").re;
        ConstraintAudit {
            c4_max_power: (0..self.k_subcarriers())
                .map(|k| power(&self.precoder(k)))
                .fold(0.0, f64::max),
            c5_rf_trace_dev: (rf_trace - n_cols).abs(),
            c6_max_dev: modulus_dev(&self.f_rf),
            c7_max_dev: self
                .w_user
                .iter()
                .chain(std::iter::once(&self.w_radar))
                .map(modulus_dev)
                .fold(0.0, f64::max),
            bb_trace_dev: self
                .f_bb
                .iter()
                .map(|f| (power(f) - 1.0).abs())
                .fold(0.0, f64::max),
        }
    }

    /// All matrices in the channel-trace block syntax.
    pub fn debug_dump(&self) -> String {
        let mut out = String::from("# hybrid beamformer dump\n");
        write_matrix(&mut out, "f_rf", "analog", 0, &self.f_rf);
        for (k, f) in self.f_bb.iter().enumerate() {
            write_matrix(&mut out, "f_bb", "digital", k, f);
        }
        write_matrix(&mut out, "w_user1", "analog", 0, &self.w_user[0]);
        write_matrix(&mut out, "w_user2", "analog", 0, &self.w_user[1]);
        write_matrix(&mut out, "w_radar", "analog", 0, &self.w_radar);
        out
    }
}

/// Worst-case deviations from the beamforming constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintAudit {
    /// Largest `tr(F(k) F(k)ᴴ)` over subcarriers (C4).
    pub c4_max_power: f64,
    /// `|tr(F_RFᴴ F_RF) - N N_s|` (C5).
    pub c5_rf_trace_dev: f64,
    /// Largest `| |F_RF(i,j)|² - 1/N_t |` (C6).
    pub c6_max_dev: f64,
    /// Largest `| |W(i,j)|² - 1/rows |` over all combiners (C7).
    pub c7_max_dev: f64,
    /// Largest `|tr(F_BB F_BBᴴ) - 1|`.
    pub bb_trace_dev: f64,
}

impl ConstraintAudit {
    /// Names of violated constraints at the standard tolerances.
    pub fn violations(&self, p_max: f64) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.c4_max_power > p_max + 1e-9 {
            v.push("C4");
        }
        if self.c5_rf_trace_dev > 1e-9 {
            v.push("C5");
        }
        if self.c6_max_dev > 1e-12 {
            v.push("C6");
        }
        if self.c7_max_dev > 1e-12 {
            v.push("C7");
        }
        if self.bb_trace_dev > 1e-9 {
            v.push("F_BB trace");
        }
        v
    }
}

/// Builds the full hybrid beamformer for the active channels.
pub fn assemble(channels: &SubcarrierChannelSet, cfg: &BeamformingConfig) -> Result<HybridBeamformer> {
    let k_sub = channels.k_subcarriers();
    if channels.n_radar() != cfg.n_s {
        return Err(Error::config(format!(
            "radar antennas ({}) must equal streams per beam ({})",
            channels.n_radar(),
            cfg.n_s
        )));
    }
    if cfg.n_r_rf != cfg.n_s {
        return Err(Error::config(format!(
            "user RF chains ({}) must equal streams per beam ({})",
            cfg.n_r_rf, cfg.n_s
        )));
    }

    let user_h: Vec<Vec<ComplexMatrix>> =
        Object::USERS.iter().map(|&o| channels.downlink_all(o)).collect();
    let target_h = channels.downlink_all(Object::Target);

    let mut combiner_subcarriers = [0; 3];
    let mut w_user = Vec::with_capacity(2);
    for (i, h) in user_h.iter().enumerate() {
        let k = select_strongest_subcarrier(h)?;
        combiner_subcarriers[i] = k;
        w_user.push(design_analog_combiner(&h[k], cfg.n_r_rf)?);
    }
    let k_radar = select_strongest_subcarrier(&target_h)?;
    combiner_subcarriers[2] = k_radar;
    let w_radar = design_analog_combiner(&target_h[k_radar], cfg.n_s)?;

    let stacked: Vec<ComplexMatrix> = (0..k_sub)
        .map(|k| stack_composite_channel(&target_h[k], &user_h[0][k]))
        .collect::<Result<_>>()?;
    let k_star = select_strongest_subcarrier(&stacked)?;
    let f_rf = design_analog_precoder(&stacked[k_star])?;

    let w_radar_h = hermitian(&w_radar);
    let w1_h = hermitian(&w_user[0]);
    let mut f_bb = Vec::with_capacity(k_sub);
    let mut power_scale = Vec::with_capacity(k_sub);
    let mut digital_rank = Vec::with_capacity(k_sub);
    for k in 0..k_sub {
        // Sensing rows first so the ZF columns line up with [F_s | F_c].
        let sense = matmul(&matmul(&w_radar_h, &target_h[k])?, &f_rf)?;
        let comm = matmul(&matmul(&w1_h, &user_h[0][k])?, &f_rf)?;
        let effective = sense.vstack(&comm)?;
        let dp = design_digital_precoder_detailed(&effective, cfg.zf_truncation)?;
        let p = power(&matmul(&f_rf, &dp.matrix)?);
        power_scale.push(if p > cfg.p_max { (cfg.p_max / p).sqrt() } else { 1.0 });
        digital_rank.push(dp.rank);
        f_bb.push(dp.matrix);
    }

    Ok(HybridBeamformer {
        f_rf,
        f_bb,
        power_scale,
        w_user,
        w_radar,
        strongest_subcarrier: k_star,
        combiner_subcarriers,
        digital_rank,
        n_s: cfg.n_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn strongest_subcarrier_examples() {
        let h = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 0.5, 0.0]).unwrap();
        assert_eq!(select_strongest_subcarrier(&[h.clone(), h.scale(2.0)]).unwrap(), 1);
        assert_eq!(select_strongest_subcarrier(std::slice::from_ref(&h)).unwrap(), 0);
        assert_eq!(select_strongest_subcarrier(&[h.clone(), h.clone()]).unwrap(), 0);
        assert!(matches!(select_strongest_subcarrier(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn combiner_of_identity() {
        let w = design_analog_combiner(&ComplexMatrix::identity(2), 2).unwrap();
        let a = 1.0 / 2f64.sqrt();
        for z in w.iter() {
            assert!((z - c(a, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn combiner_rejects_too_many_chains() {
        let h = ComplexMatrix::identity(2);
        assert!(matches!(design_analog_combiner(&h, 3), Err(Error::Shape { .. })));
        assert!(matches!(design_analog_combiner(&h, 0), Err(Error::Shape { .. })));
    }

    #[test]
    fn combiner_is_scale_invariant() {
        let h = ComplexMatrix::from_fn(2, 4, |r, col| c((r + 2 * col) as f64 - 2.5, r as f64 * 0.3 - col as f64));
        let a = design_analog_combiner(&h, 2).unwrap();
        let b = design_analog_combiner(&h.scale(3.7), 2).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn precoder_of_all_ones() {
        let stacked = ComplexMatrix::from_real(1, 4, &[1.0; 4]).unwrap();
        let f = design_analog_precoder(&stacked).unwrap();
        assert_eq!(f.shape(), (4, 1));
        for z in f.iter() {
            assert!((z - Complex64::from_polar(0.5, PI)).norm() < 1e-15);
        }
        let g = design_analog_precoder(&stacked.scale(2.0)).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn stacking() {
        let a = ComplexMatrix::from_real(2, 4, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let b = a.scale(-1.0);
        let s = stack_composite_channel(&a, &b).unwrap();
        assert_eq!(s.shape(), (4, 4));
        assert_eq!(s.row_range(0..2).unwrap(), a);
        assert_eq!(s.row_range(2..4).unwrap(), b);
        let bad = ComplexMatrix::zeros(2, 3);
        assert!(matches!(stack_composite_channel(&a, &bad), Err(Error::Shape { .. })));
    }

    #[test]
    fn digital_precoder_of_identity() {
        let f = design_digital_precoder(&ComplexMatrix::identity(4)).unwrap();
        for r in 0..4 {
            for col in 0..4 {
                let want = if r == col { 0.5 } else { 0.0 };
                assert!((f[(r, col)] - c(want, 0.0)).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn digital_precoder_of_diagonal() {
        let f = design_digital_precoder(&ComplexMatrix::from_real_diagonal(&[1.0, 2.0])).unwrap();
        let s = 1.25f64.sqrt();
        assert!((f[(0, 0)] - c(1.0 / s, 0.0)).norm() < 1e-14);
        assert!((f[(1, 1)] - c(0.5 / s, 0.0)).norm() < 1e-14);
        assert!(f[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn digital_precoder_flags_rank_deficiency() {
        let m = ComplexMatrix::from_real_diagonal(&[1.0, 0.0, 2.0]);
        let d = design_digital_precoder_detailed(&m, ZF_RCOND).unwrap();
        assert_eq!(d.rank, 2);
        assert!(d.rank_deficient());
        assert!((power(&d.matrix) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncation_drops_weak_modes() {
        let m = ComplexMatrix::from_real_diagonal(&[1.0, 1e-5]);
        let full = design_digital_precoder_detailed(&m, ZF_RCOND).unwrap();
        assert_eq!(full.rank, 2);
        // Inverting the weak mode leaves almost nothing for the strong one.
        assert!(full.matrix[(0, 0)].norm() < 1e-4);
        let cut = design_digital_precoder_detailed(&m, 1e-4).unwrap();
        assert_eq!(cut.rank, 1);
        assert!((cut.matrix[(0, 0)] - c(1.0, 0.0)).norm() < 1e-14);
        assert!(design_digital_precoder_detailed(&m, 1.0).is_err());
        assert!(design_digital_precoder_detailed(&m, -1e-3).is_err());
    }

    #[test]
    fn audit_flags_broken_modulus() {
        let bf = HybridBeamformer {
            f_rf: ComplexMatrix::from_real(2, 2, &[0.5f64.sqrt(), 0.5f64.sqrt(), 0.5f64.sqrt(), 0.6]).unwrap(),
            f_bb: vec![ComplexMatrix::identity(2).scale(0.5f64.sqrt())],
            power_scale: vec![1.0],
            w_user: vec![ComplexMatrix::identity(1), ComplexMatrix::identity(1)],
            w_radar: ComplexMatrix::identity(1),
            strongest_subcarrier: 0,
            combiner_subcarriers: [0; 3],
            digital_rank: vec![2],
            n_s: 1,
        };
        let v = bf.audit().violations(1.0);
        assert!(v.contains(&"C6"));
        assert!(!v.contains(&"C7"));
        assert!(!v.contains(&"F_BB trace"));
    }

    fn paper_set() -> SubcarrierChannelSet {
        use crate::channel::{generate_channel_set, ChannelDims, ChannelModelConfig};
        use rand::SeedableRng;
        let dims = ChannelDims {
            n_t: 64,
            n_r: 4,
            n_radar: 4,
            k_subcarriers: 4,
            carrier_freq: 28e9,
            bandwidth: 800e6,
            spacing_wavelengths: 0.5,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        generate_channel_set(&dims, &ChannelModelConfig::default(), &mut rng).unwrap()
    }

    const CFG: BeamformingConfig = BeamformingConfig::new(4, 4, 1.0);

    #[test]
    fn assembled_shapes_and_constraints() {
        let bf = assemble(&paper_set(), &CFG).unwrap();
        assert_eq!(bf.f_rf.shape(), (64, 8));
        assert_eq!(bf.f_bb.len(), 4);
        for f in &bf.f_bb {
            assert_eq!(f.shape(), (8, 8));
        }
        assert_eq!(bf.w_user[0].shape(), (4, 4));
        assert_eq!(bf.w_radar.shape(), (4, 4));
        assert_eq!(bf.sensing_precoder(0).shape(), (64, 4));
        assert_eq!(bf.comm_precoder(0).shape(), (64, 4));
        let audit = bf.audit();
        assert!(audit.violations(CFG.p_max).is_empty(), "{audit:?}");
    }

    #[test]
    fn sensing_beam_points_at_target() {
        let set = paper_set();
        let bf = assemble(&set, &CFG).unwrap();
        for k in 0..set.k_subcarriers() {
            let ht = set.downlink(Object::Target, k);
            let h1 = set.downlink(Object::User1, k);
            let fs = bf.sensing_precoder(k);
            let fc = bf.comm_precoder(k);
            let wr = hermitian(&bf.w_radar);
            let w1 = hermitian(&bf.w_user[0]);
            let own_t = power(&matmul(&matmul(&wr, &ht).unwrap(), &fs).unwrap());
            let leak_t = power(&matmul(&matmul(&wr, &ht).unwrap(), &fc).unwrap());
            let own_c = power(&matmul(&matmul(&w1, &h1).unwrap(), &fc).unwrap());
            let leak_c = power(&matmul(&matmul(&w1, &h1).unwrap(), &fs).unwrap());
            assert!(own_t > 1e6 * leak_t, "target {own_t} vs {leak_t}");
            assert!(own_c > 1e6 * leak_c, "user {own_c} vs {leak_c}");
        }
    }

    #[test]
    fn power_scale_enforces_budget() {
        let tight = BeamformingConfig { p_max: 1e-6, ..CFG };
        let bf = assemble(&paper_set(), &tight).unwrap();
        assert!(bf.audit().c4_max_power <= 1e-6 * (1.0 + 1e-9));
        assert!(bf.power_scale.iter().all(|&s| s < 1.0));
    }

    #[test]
    fn assemble_rejects_mismatched_streams() {
        let bad = BeamformingConfig { n_s: 2, ..CFG };
        assert!(matches!(assemble(&paper_set(), &bad), Err(Error::Config(_))));
    }

    #[test]
    fn debug_dump_lists_all_blocks() {
        let bf = assemble(&paper_set(), &CFG).unwrap();
        let d = bf.debug_dump();
        assert_eq!(d.matches("matrix f_bb").count(), 4);
        assert!(d.contains("matrix w_radar analog 0"));
    }
}
