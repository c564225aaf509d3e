//! Fabry-Perot response of the monolithic waveguide resonator.
//!
//! The two polished end facets of the waveguide carry dielectric coatings and
//! form the cavity; there is no separate mirror assembly. The coating power
//! reflectance is strongly wavelength dependent: high in the signal band near
//! 1600 nm, rolling off steeply below 1560 nm, and anti-reflective (about 1%)
//! for the idler band around 1520 nm and for the 780 nm pump. Reflectance
//! curves are stored as tabulated data with linear interpolation and no
//! extrapolation.
//!
//! With round-trip amplitude `rho = sqrt(R_f R_b) (1 - a)` (a is the internal
//! power loss per pass) and round-trip phase `phi = 4 pi n_eff L nu / c`, the
//! standard results used here are
//!
//! ```text
//! FSR       = c / (2 n_g L)
//! finesse   = pi sqrt(rho) / (1 - rho)
//! linewidth = FSR / finesse                      (FWHM)
//! Q         = nu / linewidth
//! t(nu)     = t1 t2 e^{i phi/2} / (1 - rho e^{i phi}),   t_j = sqrt(1 - R_j)
//! E(nu)     = sqrt(1 - R_port) / (1 - rho e^{i phi})
//! ```
//!
//! `t` is the transmission amplitude for externally injected light, whose
//! squared magnitude is the Airy function; `E` is the comb-shaped spectral
//! filter experienced by light generated inside the cavity and leaving through
//! one port. Resonances sit where `phi` is a multiple of 2 pi; they are located
//! by a grid scan finer than a tenth of the free spectral range followed by
//! bisection to 1 kHz.

use std::io::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::IndexModel;
use crate::exec::try_map_indexed;
use crate::numeric::bisect;
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Tabulated power reflectance of one coated facet, linearly interpolated in
/// wavelength. Queries outside the tabulated span are errors.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MirrorSpectrum {
    knots: Vec<(f64, f64)>,
}

impl MirrorSpectrum {
    /// Validates strictly increasing wavelengths and reflectances in [0, 1].
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Config(
                "mirror table needs at least two samples".into(),
            ));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Config(format!(
                    "mirror wavelengths must be strictly increasing ({} nm then {} nm)",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(lam, r) in &knots {
            if !(0.0..=1.0).contains(&r) || !lam.is_finite() {
                return Err(Error::Config(format!(
                    "mirror reflectance {r} at {lam} nm outside [0, 1]"
                )));
            }
        }
        Ok(Self { knots })
    }

    /// Wavelength-independent reflectance spanning the full index-model domain.
    pub fn constant(reflectance: f64) -> Self {
        Self::new(vec![
            (crate::dispersion::WAVELENGTH_MIN_NM, reflectance),
            (crate::dispersion::WAVELENGTH_MAX_NM, reflectance),
        ])
        .expect("constant table is valid")
    }

    /// Reflectance curve of the fabricated facets. Both ends carry the same
    /// coating: about 1% below 1540 nm (idler band and pump pass through), a
    /// steep edge through the 1540-1560 nm transition, then high reflectance
    /// across the 1560-1600 nm signal band. The 1560/1580/1600 nm samples are
    /// pinned so the cold-cavity finesse comes out at 7, 29 and 59 with 0.5%
    /// internal loss per pass.
    pub fn device_high_reflector() -> Self {
        Self::new(vec![
            (700.0, 0.01),
            (900.0, 0.01),
            (1100.0, 0.01),
            (1300.0, 0.01),
            (1450.0, 0.01),
            (1500.0, 0.01),
            (1520.0, 0.01),
            (1530.0, 0.01),
            (1540.0, 0.012),
            (1545.0, 0.03),
            (1550.0, 0.10),
            (1555.0, 0.30),
            (1560.0, 0.643_970_262_673_455_5),
            (1565.0, 0.76),
            (1570.0, 0.835),
            (1575.0, 0.876),
            (1580.0, 0.901_887_637_217_624_1),
            (1585.0, 0.92),
            (1590.0, 0.934),
            (1595.0, 0.945),
            (1600.0, 0.952_916_018_186_677_2),
            (1610.0, 0.956),
            (1620.0, 0.957),
            (1650.0, 0.954),
            (1700.0, 0.94),
        ])
        .expect("built-in table is valid")
    }

    /// Loads a table from CSV with header `wavelength_nm,reflectance`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let fail = |reason: String| Error::MirrorTable {
            path: path.display().to_string(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
        {
            let headers = reader.headers().map_err(|e| fail(e.to_string()))?;
            let expected = ["wavelength_nm", "reflectance"];
            let got: Vec<&str> = headers.iter().map(|h| h.trim()).collect();
            if got != expected {
                return Err(fail(format!(
                    "expected header `wavelength_nm,reflectance`, got `{}`",
                    got.join(",")
                )));
            }
        }
        let mut knots = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| fail(e.to_string()))?;
            let lam: f64 = record
                .get(0)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| fail(format!("bad wavelength in row {:?}", record)))?;
            let r: f64 = record
                .get(1)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| fail(format!("bad reflectance in row {:?}", record)))?;
            knots.push((lam, r));
        }
        Self::new(knots).map_err(|e| fail(e.to_string()))
    }

    /// Writes the table in the same CSV layout `from_csv` reads.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("wavelength_nm,reflectance\n");
        for &(lam, r) in &self.knots {
            out.push_str(&format!("{lam},{r}\n"));
        }
        let mut file = tempfile::NamedTempFile::new_in(
            path.parent().unwrap_or_else(|| Path::new(".")),
        )?;
        file.write_all(out.as_bytes())?;
        file.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn min_nm(&self) -> f64 {
        self.knots[0].0
    }

    pub fn max_nm(&self) -> f64 {
        self.knots[self.knots.len() - 1].0
    }

    /// Linear interpolation; outside the tabulated span this is an error, not
    /// an extrapolation.
    pub fn reflectance(&self, wavelength_nm: f64) -> Result<f64> {
        if !(wavelength_nm >= self.min_nm() && wavelength_nm <= self.max_nm()) {
            return Err(Error::MirrorRange {
                wavelength_nm,
                min_nm: self.min_nm(),
                max_nm: self.max_nm(),
            });
        }
        let i = match self
            .knots
            .binary_search_by(|k| k.0.partial_cmp(&wavelength_nm).expect("finite"))
        {
            Ok(i) => return Ok(self.knots[i].1),
            Err(i) => i,
        };
        let (x0, y0) = self.knots[i - 1];
        let (x1, y1) = self.knots[i];
        Ok(y0 + (y1 - y0) * (wavelength_nm - x0) / (x1 - x0))
    }
}

/// Which facet of the waveguide light leaves through. The pump enters at the
/// front; the detected signal and idler leave at the back.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Port {
    Front,
    Back,
}

/// Geometry, dispersion model and coatings of the resonator.
#[derive(Clone, Debug)]
pub struct ResonatorSpec {
    pub length_mm: f64,
    pub index_model: IndexModel,
    pub front_mirror: MirrorSpectrum,
    pub back_mirror: MirrorSpectrum,
    /// Internal power loss per single pass, in [0, 1).
    pub internal_loss_per_pass: f64,
}

impl ResonatorSpec {
    pub fn new(
        length_mm: f64,
        index_model: IndexModel,
        front_mirror: MirrorSpectrum,
        back_mirror: MirrorSpectrum,
        internal_loss_per_pass: f64,
    ) -> Result<Self> {
        if !(length_mm > 0.0) {
            return Err(Error::Domain {
                name: "cavity length",
                value: length_mm,
                constraint: "positive",
            });
        }
        if !(0.0..1.0).contains(&internal_loss_per_pass) {
            return Err(Error::Domain {
                name: "internal loss per pass",
                value: internal_loss_per_pass,
                constraint: "in [0, 1)",
            });
        }
        Ok(Self {
            length_mm,
            index_model,
            front_mirror,
            back_mirror,
            internal_loss_per_pass,
        })
    }

    /// The fabricated 20 mm resonator at its 50 C operating temperature with
    /// the built-in coating curve on both facets and 0.5% loss per pass.
    pub fn device_default() -> Result<Self> {
        Self::new(
            20.0,
            crate::dispersion::device_model(50.0)?,
            MirrorSpectrum::device_high_reflector(),
            MirrorSpectrum::device_high_reflector(),
            0.005,
        )
    }

    pub fn length_m(&self) -> f64 {
        self.length_mm * 1e-3
    }

    /// Free spectral range c / (2 n_g L), Hz.
    pub fn fsr(&self, wavelength_nm: f64) -> Result<f64> {
        let ng = self.index_model.group_index(wavelength_nm)?;
        Ok(SPEED_OF_LIGHT / (2.0 * ng * self.length_m()))
    }

    /// Round-trip power-amplitude factor rho = sqrt(R_f R_b) (1 - loss).
    pub fn round_trip_magnitude(&self, wavelength_nm: f64) -> Result<f64> {
        let rf = self.front_mirror.reflectance(wavelength_nm)?;
        let rb = self.back_mirror.reflectance(wavelength_nm)?;
        Ok((rf * rb).sqrt() * (1.0 - self.internal_loss_per_pass))
    }

    /// Round-trip phase phi(nu) = 4 pi n_eff L nu / c.
    pub fn round_trip_phase(&self, frequency_hz: f64) -> Result<f64> {
        let lam_nm = crate::hz_to_wavelength_nm(frequency_hz);
        let n = self.index_model.cavity_phase_index(lam_nm)?;
        Ok(4.0 * std::f64::consts::PI * n * self.length_m() * frequency_hz / SPEED_OF_LIGHT)
    }

    /// Complex round-trip amplitude rho e^{i phi} at the given wavelength.
    pub fn round_trip_amplitude(&self, wavelength_nm: f64) -> Result<Complex64> {
        let rho = self.round_trip_magnitude(wavelength_nm)?;
        let phi = self.round_trip_phase(crate::wavelength_nm_to_hz(wavelength_nm))?;
        Ok(Complex64::from_polar(rho, phi))
    }

    fn checked_rho(&self, wavelength_nm: f64) -> Result<f64> {
        let rho = self.round_trip_magnitude(wavelength_nm)?;
        if rho <= 0.0 {
            return Err(Error::NoFeedback { rho });
        }
        if rho >= 1.0 {
            return Err(Error::Divergent { rho });
        }
        Ok(rho)
    }

    /// Finesse pi sqrt(rho) / (1 - rho). Undefined without feedback; divergent
    /// for a lossless cavity with perfect mirrors.
    pub fn finesse(&self, wavelength_nm: f64) -> Result<f64> {
        let rho = self.checked_rho(wavelength_nm)?;
        Ok(std::f64::consts::PI * rho.sqrt() / (1.0 - rho))
    }

    /// Resonance FWHM gamma_f = FSR / finesse, Hz.
    pub fn linewidth_hz(&self, wavelength_nm: f64) -> Result<f64> {
        Ok(self.fsr(wavelength_nm)? / self.finesse(wavelength_nm)?)
    }

    /// Quality factor nu / gamma_f.
    pub fn quality_factor(&self, wavelength_nm: f64) -> Result<f64> {
        Ok(crate::wavelength_nm_to_hz(wavelength_nm) / self.linewidth_hz(wavelength_nm)?)
    }

    /// Transmission amplitude for externally injected light,
    /// t = t1 t2 e^{i phi/2} / (1 - rho e^{i phi}). |t|^2 is the Airy pattern
    /// and never exceeds 1 for nonnegative loss.
    pub fn transmission_amplitude(&self, frequency_hz: f64) -> Result<Complex64> {
        let lam_nm = crate::hz_to_wavelength_nm(frequency_hz);
        let rf = self.front_mirror.reflectance(lam_nm)?;
        let rb = self.back_mirror.reflectance(lam_nm)?;
        let rho = (rf * rb).sqrt() * (1.0 - self.internal_loss_per_pass);
        let phi = self.round_trip_phase(frequency_hz)?;
        let t1t2 = ((1.0 - rf) * (1.0 - rb)).sqrt();
        let denom = Complex64::new(1.0, 0.0) - Complex64::from_polar(rho, phi);
        Ok(t1t2 * Complex64::from_polar(1.0, phi / 2.0) / denom)
    }

    /// Spectral filter seen by light generated inside the cavity and leaving
    /// through `port`: E = sqrt(1 - R_port) / (1 - rho e^{i phi}). Comb-shaped
    /// magnitude peaking at the cavity resonances.
    pub fn emission_amplitude(&self, frequency_hz: f64, port: Port) -> Result<Complex64> {
        let lam_nm = crate::hz_to_wavelength_nm(frequency_hz);
        let r_port = match port {
            Port::Front => self.front_mirror.reflectance(lam_nm)?,
            Port::Back => self.back_mirror.reflectance(lam_nm)?,
        };
        let rho = self.round_trip_magnitude(lam_nm)?;
        let phi = self.round_trip_phase(frequency_hz)?;
        let denom = Complex64::new(1.0, 0.0) - Complex64::from_polar(rho, phi);
        Ok((1.0 - r_port).sqrt() / denom)
    }

    /// Fraction of photons generated inside the cavity that eventually leave
    /// through `port`, from the per-round-trip branching between back-mirror
    /// escape, front-mirror escape and internal loss,
    /// (1 - R_port) / ((1 - R_b) + (1 - R_f) + loss). For equal mirrors this
    /// approaches one half from below.
    pub fn escape_fraction(&self, wavelength_nm: f64, port: Port) -> Result<f64> {
        let rf = self.front_mirror.reflectance(wavelength_nm)?;
        let rb = self.back_mirror.reflectance(wavelength_nm)?;
        let r_port = match port {
            Port::Front => rf,
            Port::Back => rb,
        };
        let denom = (1.0 - rf) + (1.0 - rb) + self.internal_loss_per_pass;
        if denom <= 0.0 {
            return Err(Error::Divergent { rho: 1.0 });
        }
        Ok((1.0 - r_port) / denom)
    }

    /// All resonance frequencies with wavelength inside [lo_nm, hi_nm],
    /// ascending in frequency. Brackets come from a grid scan at one twelfth of
    /// the free spectral range; each root is then bisected to 1 kHz. An empty
    /// or inverted interval yields an empty list.
    pub fn resonance_frequencies(&self, lo_nm: f64, hi_nm: f64) -> Result<Vec<f64>> {
        if !(hi_nm > lo_nm) {
            return Ok(Vec::new());
        }
        let nu_lo = crate::wavelength_nm_to_hz(hi_nm);
        let nu_hi = crate::wavelength_nm_to_hz(lo_nm);
        let step = self.fsr(lo_nm)?.min(self.fsr(hi_nm)?) / 12.0;
        let two_pi = 2.0 * std::f64::consts::PI;

        let mut brackets: Vec<(f64, f64, f64)> = Vec::new();
        let mut nu_a = nu_lo;
        let mut m_a = self.round_trip_phase(nu_a)? / two_pi;
        while nu_a < nu_hi {
            let nu_b = (nu_a + step).min(nu_hi);
            let m_b = self.round_trip_phase(nu_b)? / two_pi;
            let first = m_a.floor() as i64 + 1;
            let last = m_b.floor() as i64;
            for m in first..=last {
                brackets.push((nu_a, nu_b, m as f64 * two_pi));
            }
            nu_a = nu_b;
            m_a = m_b;
        }

        try_map_indexed(brackets.len(), |i| {
            let (a, b, target) = brackets[i];
            let g = |nu: f64| {
                self.round_trip_phase(nu)
                    .expect("bracket interior stays inside the model domain")
                    - target
            };
            if g(b) == 0.0 {
                return Ok(b);
            }
            if g(a) == 0.0 {
                return Ok(a);
            }
            bisect(g, a, b, 1e3, "resonance frequency")
        })
    }
}
