use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{hermitian, ComplexMatrix};

/// Uniform square array: `side * side` elements on a regular grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayGeometry {
    n_elements: usize,
    side: usize,
    spacing_wavelengths: f64,
}

impl ArrayGeometry {
    pub fn new(n_elements: usize, spacing_wavelengths: f64) -> Result<Self> {
        let side = (n_elements as f64).sqrt().round() as usize;
        if n_elements == 0 || side * side != n_elements {
            return Err(Error::config(format!(
                "array size {n_elements} is not a perfect square"
            )));
        }
        if !(spacing_wavelengths > 0.0) || !spacing_wavelengths.is_finite() {
            return Err(Error::config(format!(
                "element spacing {spacing_wavelengths} must be positive"
            )));
        }
        Ok(ArrayGeometry {
            n_elements,
            side,
            spacing_wavelengths,
        })
    }

    /// Half-wavelength spaced array.
    pub fn half_wavelength(n_elements: usize) -> Result<Self> {
        Self::new(n_elements, 0.5)
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn spacing_wavelengths(&self) -> f64 {
        self.spacing_wavelengths
    }
}

/// Array response of a uniform square array, unit norm.
///
/// Element `(m, n)` (raster index `m * side + n`) carries the phase
/// `2π d (m sinθ cosφ + n sinθ sinφ)`.
pub fn steering_vector(geom: &ArrayGeometry, azimuth: f64, elevation: f64) -> ComplexMatrix {
    let s = geom.side();
    let amp = 1.0 / (geom.n_elements() as f64).sqrt();
    let u = elevation.sin() * azimuth.cos();
    let v = elevation.sin() * azimuth.sin();
    let k = TAU * geom.spacing_wavelengths();
    let entries: Vec<Complex64> = (0..s)
        .flat_map(|m| (0..s).map(move |n| (m, n)))
        .map(|(m, n)| Complex64::from_polar(amp, k * (m as f64 * u + n as f64 * v)))
        .collect();
    ComplexMatrix::column(&entries)
}

/// One multipath component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    pub phase_shift: f64,
    /// Seconds.
    pub delay: f64,
    pub aoa_azimuth: f64,
    pub aoa_elevation: f64,
    pub aod_azimuth: f64,
    pub aod_elevation: f64,
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delay >= 0.0) {
            return Err(Error::config(format!("path delay {} < 0", self.delay)));
        }
        for (name, el) in [
            ("aoa_elevation", self.aoa_elevation),
            ("aod_elevation", self.aod_elevation),
        ] {
            if !(0.0..=PI).contains(&el) {
                return Err(Error::config(format!("{name} {el} outside [0, pi]")));
            }
        }
        for (name, az) in [
            ("aoa_azimuth", self.aoa_azimuth),
            ("aod_azimuth", self.aod_azimuth),
        ] {
            if !(0.0..TAU).contains(&az) {
                return Err(Error::config(format!("{name} {az} outside [0, 2pi)")));
            }
        }
        if !(self.gain.re.is_finite() && self.gain.im.is_finite() && self.phase_shift.is_finite()) {
            return Err(Error::config("non-finite path gain or phase"));
        }
        Ok(())
    }

    /// The same path seen by a co-located receiver: arrival angles equal
    /// the departure angles.
    pub fn monostatic(&self) -> Self {
        PathParams {
            aoa_azimuth: self.aod_azimuth,
            aoa_elevation: self.aod_elevation,
            ..*self
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        PathParams {
            gain: self.gain * factor,
            ..*self
        }
    }
}

/// Wraps an azimuth into `[0, 2π)`.
pub(crate) fn wrap_azimuth(az: f64) -> f64 {
    let w = az.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// A link described by its paths. One path means line of sight.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSpec {
    pub paths: Vec<PathParams>,
    pub carrier_freq: f64,
    pub is_los: bool,
}

impl LinkSpec {
    pub fn los(path: PathParams, carrier_freq: f64) -> Self {
        LinkSpec {
            paths: vec![path],
            carrier_freq,
            is_los: true,
        }
    }

    pub fn nlos(paths: Vec<PathParams>, carrier_freq: f64) -> Self {
        LinkSpec {
            paths,
            carrier_freq,
            is_los: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.is_empty() {
            return Err(Error::config("link has no paths"));
        }
        if self.is_los && self.paths.len() != 1 {
            return Err(Error::config(format!(
                "LOS link must have exactly one path, got {}",
                self.paths.len()
            )));
        }
        if !self.is_los && self.paths.len() < 2 {
            return Err(Error::config("NLOS link needs at least two paths"));
        }
        if !(self.carrier_freq > 0.0) {
            return Err(Error::config(format!(
                "carrier frequency {} must be positive",
                self.carrier_freq
            )));
        }
        self.paths.iter().try_for_each(PathParams::validate)
    }

    /// Same link observed monostatically at the transmitter.
    pub fn monostatic(&self) -> Self {
        LinkSpec {
            paths: self.paths.iter().map(PathParams::monostatic).collect(),
            ..self.clone()
        }
    }
}

/// `f_k = f_c + (k - (K+1)/2) * B/K` for `k = 1..=K`.
pub fn subcarrier_frequencies(carrier: f64, bandwidth: f64, k: usize) -> Vec<f64> {
    let spacing = bandwidth / k as f64;
    let center = (k as f64 + 1.0) / 2.0;
    (1..=k)
        .map(|i| carrier + (i as f64 - center) * spacing)
        .collect()
}

/// `H(k) = Σ_ℓ γ_ℓ e^{jΦ_ℓ} e^{-j2π f_k τ_ℓ} a_r a_tᴴ`, one matrix per
/// subcarrier frequency.
pub fn synthesize_channel(
    link: &LinkSpec,
    tx_geom: &ArrayGeometry,
    rx_geom: &ArrayGeometry,
    subcarrier_freqs: &[f64],
) -> Result<Vec<ComplexMatrix>> {
    if link.paths.is_empty() {
        return Err(Error::config("cannot synthesize a channel without paths"));
    }
    let responses: Vec<(Complex64, f64, ComplexMatrix)> = link
        .paths
        .iter()
        .map(|p| {
            let a_r = steering_vector(rx_geom, p.aoa_azimuth, p.aoa_elevation);
            let a_t = steering_vector(tx_geom, p.aod_azimuth, p.aod_elevation);
            let outer = crate::numerics::matmul(&a_r, &hermitian(&a_t)).expect("column x row");
            (p.gain * Complex64::from_polar(1.0, p.phase_shift), p.delay, outer)
        })
        .collect();

    let nr = rx_geom.n_elements();
    let nt = tx_geom.n_elements();
    Ok(subcarrier_freqs
        .iter()
        .map(|&f| {
            let mut h = nalgebra::DMatrix::<Complex64>::zeros(nr, nt);
            for (g, tau, outer) in &responses {
                let coef = g * Complex64::from_polar(1.0, -TAU * f * tau);
                h += outer.as_inner() * coef;
            }
            ComplexMatrix::from(h)
        })
        .collect())
}

/// Amplitude factor `10^(-dB/20)` for a power loss in dB.
pub fn blockage_amplitude(blockage_db: f64) -> Result<f64> {
    if !(blockage_db >= 0.0) || !blockage_db.is_finite() {
        return Err(Error::config(format!(
            "blockage loss {blockage_db} dB must be a finite non-negative number"
        )));
    }
    Ok(10f64.powf(-blockage_db / 20.0))
}

/// `β H` with `β = 10^(-dB/20)`, so the received power drops by `blockage_db`.
pub fn apply_blockage(h: &ComplexMatrix, blockage_db: f64) -> Result<ComplexMatrix> {
    let beta = blockage_amplitude(blockage_db)?;
    if beta == 1.0 {
        return Ok(h.clone());
    }
    Ok(h.scale(beta))
}
