//! Refractive-index model of the poled zinc-doped lithium niobate waveguide and
//! the quasi-phase-matching algebra built on it.
//!
//! The base curve is a published temperature-dependent Sellmeier equation for the
//! extraordinary index of congruent lithium niobate,
//!
//! ```text
//! n^2 = a1 + b1 f + (a2 + b2 f)/(lam^2 - (a3 + b3 f)^2)
//!              + (a4 + b4 f)/(lam^2 - a5^2) - a6 lam^2,
//! f = (T - 24.5)(T + 570.82),  lam in um, T in deg C.
//! ```
//!
//! The waveguide differs from bulk through doping and modal confinement. Those
//! differences are absorbed by three additive corrections fixed against two
//! measured anchors of the device:
//!
//! * `pump_index_offset`, applied at the pump wavelength only, solved so the
//!   first-order quasi-phase-matching mismatch vanishes for second-harmonic
//!   generation of 1560 nm at the operating temperature with the fabricated
//!   poling period. A wavelength-independent offset cannot do this job: for any
//!   energy-conserving triple its contribution multiplies
//!   `1/lam_p - 1/lam_s - 1/lam_i = 0`.
//! * `group_offset`, an additive group-index correction solved so the group index
//!   at the reference wavelength reproduces the measured free spectral range
//!   `c / (2 L n_g)`.
//! * `phase_offset`, an additive index correction at every wavelength. It shifts
//!   absolute resonance positions and nothing else; it is kept configurable and
//!   defaults to zero.
//!
//! The round-trip phase of the cavity uses [`IndexModel::cavity_phase_index`],
//! which augments the phase index with `group_offset * (1 - lam/lam_ref)`. That
//! term leaves the index at the reference wavelength untouched while making the
//! frequency derivative of `n * nu` equal the calibrated group index, so the
//! resonance comb spacing and [`crate::cavity::fsr`] agree everywhere.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::numeric::{bisect, sinc};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Lower edge of the supported wavelength domain, nm.
pub const WAVELENGTH_MIN_NM: f64 = 700.0;
/// Upper edge of the supported wavelength domain, nm.
pub const WAVELENGTH_MAX_NM: f64 = 1700.0;

/// Relative step of the central difference used for the group index.
const GROUP_DIFF_REL_STEP: f64 = 1e-4;

/// Coefficients of the two-pole Sellmeier form with quadratic temperature factor.
/// `a` are the temperature-independent terms, `b` their temperature slopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SellmeierCoefficients {
    pub a: [f64; 6],
    pub b: [f64; 4],
}

impl SellmeierCoefficients {
    /// Published extraordinary-index coefficients of congruent lithium niobate,
    /// valid across the visible pump band and the telecom emission band.
    pub fn congruent_lithium_niobate_extraordinary() -> Self {
        Self {
            a: [5.35583, 0.100473, 0.20692, 100.0, 11.34927, 1.5334e-2],
            b: [4.629e-7, 3.862e-8, -0.89e-8, 2.657e-5],
        }
    }

    /// Dispersionless toy material with index `n0` at every wavelength and
    /// temperature. Useful for analytic checks (group index equals phase index,
    /// uniform comb, no clustering).
    pub fn constant(n0: f64) -> Self {
        Self {
            a: [n0 * n0, 0.0, 0.0, 0.0, 1.0, 0.0],
            b: [0.0; 4],
        }
    }

    fn squared_index(&self, wavelength_um: f64, temperature_c: f64) -> f64 {
        let f = (temperature_c - 24.5) * (temperature_c + 570.82);
        let l2 = wavelength_um * wavelength_um;
        let pole1 = self.a[2] + self.b[2] * f;
        self.a[0]
            + self.b[0] * f
            + (self.a[1] + self.b[1] * f) / (l2 - pole1 * pole1)
            + (self.a[3] + self.b[3] * f) / (l2 - self.a[4] * self.a[4])
            - self.a[5] * l2
    }
}

/// Dispersion model of the waveguide: base Sellmeier curve at a fixed operating
/// temperature plus the calibration offsets described in the module docs.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IndexModel {
    pub coefficients: SellmeierCoefficients,
    /// Operating temperature, deg C.
    pub temperature_c: f64,
    /// Additive index correction applied at every wavelength (dimensionless).
    pub phase_offset: f64,
    /// Additive group-index correction (dimensionless).
    pub group_offset: f64,
    /// Additional index correction at the pump wavelength only (dimensionless).
    pub pump_index_offset: f64,
    /// Reference wavelength of the group-index calibration, nm.
    pub group_reference_nm: f64,
}

impl IndexModel {
    /// Uncalibrated congruent lithium niobate model at `temperature_c`.
    pub fn congruent_lithium_niobate(temperature_c: f64) -> Self {
        Self {
            coefficients: SellmeierCoefficients::congruent_lithium_niobate_extraordinary(),
            temperature_c,
            phase_offset: 0.0,
            group_offset: 0.0,
            pump_index_offset: 0.0,
            group_reference_nm: 1580.0,
        }
    }

    /// Dispersionless model with constant index `n0`.
    pub fn constant_index(n0: f64) -> Self {
        Self {
            coefficients: SellmeierCoefficients::constant(n0),
            temperature_c: 25.0,
            phase_offset: 0.0,
            group_offset: 0.0,
            pump_index_offset: 0.0,
            group_reference_nm: 1580.0,
        }
    }

    fn check_domain(&self, wavelength_nm: f64) -> Result<()> {
        if !(WAVELENGTH_MIN_NM..=WAVELENGTH_MAX_NM).contains(&wavelength_nm)
            || !wavelength_nm.is_finite()
        {
            return Err(Error::WavelengthRange {
                wavelength_nm,
                min_nm: WAVELENGTH_MIN_NM,
                max_nm: WAVELENGTH_MAX_NM,
            });
        }
        Ok(())
    }

    /// Phase index n(lam) = sellmeier(lam, T) + phase_offset.
    pub fn refractive_index(&self, wavelength_nm: f64) -> Result<f64> {
        self.check_domain(wavelength_nm)?;
        let n2 = self
            .coefficients
            .squared_index(wavelength_nm * 1e-3, self.temperature_c);
        if n2 <= 0.0 {
            return Err(Error::Domain {
                name: "squared refractive index",
                value: n2,
                constraint: "positive (wavelength too close to a Sellmeier pole)",
            });
        }
        Ok(n2.sqrt() + self.phase_offset)
    }

    /// Index seen by the pump inside the waveguide: phase index plus the
    /// pump-band correction.
    pub fn pump_index(&self, wavelength_nm: f64) -> Result<f64> {
        Ok(self.refractive_index(wavelength_nm)? + self.pump_index_offset)
    }

    /// Group index n_g = n - lam dn/dlam + group_offset, with dn/dlam from a
    /// central difference at relative step 1e-4.
    pub fn group_index(&self, wavelength_nm: f64) -> Result<f64> {
        let h = GROUP_DIFF_REL_STEP;
        let lo = wavelength_nm * (1.0 - h);
        let hi = wavelength_nm * (1.0 + h);
        self.check_domain(lo)?;
        self.check_domain(hi)?;
        let n = self.refractive_index(wavelength_nm)?;
        let dn = (self.refractive_index(hi)? - self.refractive_index(lo)?) / (hi - lo);
        Ok(n - wavelength_nm * dn + self.group_offset)
    }

    /// Effective index for the cavity round-trip phase,
    /// n(lam) + group_offset * (1 - lam/lam_ref). Equals the phase index at the
    /// group-reference wavelength, and its d(n nu)/dnu equals the calibrated
    /// group index, keeping the resonance comb consistent with `fsr`.
    pub fn cavity_phase_index(&self, wavelength_nm: f64) -> Result<f64> {
        let n = self.refractive_index(wavelength_nm)?;
        Ok(n + self.group_offset * (1.0 - wavelength_nm / self.group_reference_nm))
    }
}

/// Geometry of the quasi-phase-matching grating.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PhaseMatchSpec {
    /// Poling period, um.
    pub poling_period_um: f64,
    /// Crystal length, mm.
    pub crystal_length_mm: f64,
    /// Grating order; odd orders carry the square-wave poling harmonics.
    pub qpm_order: u32,
}

impl PhaseMatchSpec {
    pub fn new(poling_period_um: f64, crystal_length_mm: f64, qpm_order: u32) -> Result<Self> {
        if !(poling_period_um > 0.0) {
            return Err(Error::Domain {
                name: "poling period",
                value: poling_period_um,
                constraint: "positive",
            });
        }
        if !(crystal_length_mm > 0.0) {
            return Err(Error::Domain {
                name: "crystal length",
                value: crystal_length_mm,
                constraint: "positive",
            });
        }
        if !matches!(qpm_order, 1 | 3 | 5) {
            return Err(Error::Domain {
                name: "grating order",
                value: qpm_order as f64,
                constraint: "odd, one of 1, 3, 5",
            });
        }
        Ok(Self {
            poling_period_um,
            crystal_length_mm,
            qpm_order,
        })
    }

    /// Fabricated device: 18.090 um period, 20 mm length, first order.
    pub fn device_default() -> Self {
        Self::new(18.090, 20.0, 1).expect("device constants are valid")
    }

    pub fn poling_period_m(&self) -> f64 {
        self.poling_period_um * 1e-6
    }

    pub fn crystal_length_m(&self) -> f64 {
        self.crystal_length_mm * 1e-3
    }
}

const ENERGY_GUARD_REL: f64 = 1e-9;

fn check_energy_conservation(pump_nm: f64, signal_nm: f64, idler_nm: f64) -> Result<()> {
    let lhs = 1.0 / pump_nm;
    let rhs = 1.0 / signal_nm + 1.0 / idler_nm;
    let relative = ((lhs - rhs) / lhs).abs();
    if relative > ENERGY_GUARD_REL {
        return Err(Error::EnergyMismatch {
            pump_nm,
            signal_nm,
            idler_nm,
            relative,
        });
    }
    Ok(())
}

/// Wavevector mismatch of the poled interaction,
/// dk = 2 pi [ n_p/lam_p - n_s/lam_s - n_i/lam_i - m/Lambda ], in rad/m.
/// Requires `1/lam_p = 1/lam_s + 1/lam_i` to hold within 1e-9 relative.
/// Symmetric under swapping signal and idler.
pub fn qpm_mismatch(
    model: &IndexModel,
    pm: &PhaseMatchSpec,
    pump_nm: f64,
    signal_nm: f64,
    idler_nm: f64,
) -> Result<f64> {
    check_energy_conservation(pump_nm, signal_nm, idler_nm)?;
    let np = model.pump_index(pump_nm)?;
    let ns = model.refractive_index(signal_nm)?;
    let ni = model.refractive_index(idler_nm)?;
    let per_m = np / (pump_nm * 1e-9)
        - ns / (signal_nm * 1e-9)
        - ni / (idler_nm * 1e-9)
        - pm.qpm_order as f64 / pm.poling_period_m();
    Ok(2.0 * std::f64::consts::PI * per_m)
}

/// Phase-matching envelope of the finite crystal,
/// sinc(dk L / 2) * exp(i dk L / 2). Magnitude is at most 1.
pub fn phase_match_envelope(
    model: &IndexModel,
    pm: &PhaseMatchSpec,
    pump_nm: f64,
    signal_nm: f64,
    idler_nm: f64,
) -> Result<Complex64> {
    let dk = qpm_mismatch(model, pm, pump_nm, signal_nm, idler_nm)?;
    let x = dk * pm.crystal_length_m() / 2.0;
    Ok(Complex64::from_polar(1.0, x) * sinc(x))
}

/// Anchors of the two-constraint calibration.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationTargets {
    /// Pump wavelength of the phase-matching anchor, nm.
    pub shg_pump_nm: f64,
    /// Degenerate fundamental wavelength of the anchor, nm.
    pub shg_fundamental_nm: f64,
    /// Grating the anchor must null.
    pub phase_match: PhaseMatchSpec,
    /// Wavelength at which the free spectral range was measured, nm.
    pub fsr_reference_nm: f64,
    /// Cavity length entering the free-spectral-range relation, mm.
    pub cavity_length_mm: f64,
    /// Measured free spectral range, Hz.
    pub target_fsr_hz: f64,
}

impl Default for CalibrationTargets {
    /// Measured anchors of the fabricated device: frequency doubling of 1560 nm
    /// at the operating point, and a 3.5 GHz mode spacing at 1580 nm in the
    /// 20 mm resonator.
    fn default() -> Self {
        Self {
            shg_pump_nm: 780.0,
            shg_fundamental_nm: 1560.0,
            phase_match: PhaseMatchSpec::device_default(),
            fsr_reference_nm: 1580.0,
            cavity_length_mm: 20.0,
            target_fsr_hz: 3.5e9,
        }
    }
}

/// Solves the two calibration offsets by one-dimensional bisection each; the
/// constraints decouple (the pump correction does not move the group index at
/// the reference wavelength, and the group correction cancels in the mismatch).
/// Calibrating an already calibrated model reproduces the same offsets.
pub fn calibrate(base: &IndexModel, targets: &CalibrationTargets) -> Result<IndexModel> {
    let mut model = base.clone();
    model.group_reference_nm = targets.fsr_reference_nm;

    // Pump-band offset nulls the quasi-phase-matching mismatch at the anchor.
    let pump_nm = targets.shg_pump_nm;
    let fund_nm = targets.shg_fundamental_nm;
    let pm = targets.phase_match;
    let probe = model.clone();
    let offset = bisect(
        |po| {
            let mut m = probe.clone();
            m.pump_index_offset = po;
            qpm_mismatch(&m, &pm, pump_nm, fund_nm, fund_nm)
                .expect("anchor wavelengths are inside the model domain")
        },
        -0.1,
        0.1,
        1e-14,
        "pump index offset",
    )?;
    model.pump_index_offset = offset;

    // Group offset pins the group index to the measured free spectral range.
    let target_ng =
        SPEED_OF_LIGHT / (2.0 * targets.cavity_length_mm * 1e-3 * targets.target_fsr_hz);
    let lam_ref = targets.fsr_reference_nm;
    let probe = model.clone();
    let group = bisect(
        |go| {
            let mut m = probe.clone();
            m.group_offset = go;
            m.group_index(lam_ref)
                .expect("reference wavelength is inside the model domain")
                - target_ng
        },
        -0.5,
        0.5,
        1e-13,
        "group offset",
    )?;
    model.group_offset = group;
    Ok(model)
}

/// Calibrated device model at the operating temperature.
pub fn device_model(temperature_c: f64) -> Result<IndexModel> {
    calibrate(
        &IndexModel::congruent_lithium_niobate(temperature_c),
        &CalibrationTargets::default(),
    )
}

/// Idler wavelength completing the energy-conserving triple, nm.
pub fn matched_idler_nm(pump_nm: f64, signal_nm: f64) -> f64 {
    1.0 / (1.0 / pump_nm - 1.0 / signal_nm)
}
