//! Unit conversions between the user-facing units (GHz, MHz, ns, us, all
//! frequencies quoted as ω/2π) and the internal system (rad/ns, ns).

use std::f64::consts::TAU;

pub fn ghz_to_rad_ns(f: f64) -> f64 {
    f * TAU
}

pub fn rad_ns_to_ghz(w: f64) -> f64 {
    w / TAU
}

pub fn mhz_to_rad_ns(f: f64) -> f64 {
    f * TAU / 1000.0
}

pub fn rad_ns_to_mhz(w: f64) -> f64 {
    w * 1000.0 / TAU
}

pub fn us_to_ns(t: f64) -> f64 {
    t * 1000.0
}

pub fn ns_to_us(t: f64) -> f64 {
    t / 1000.0
}

/// Frequency unit for input echo and output columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrequencyUnit {
    #[default]
    Ghz,
    RadNs,
}

impl FrequencyUnit {
    pub fn from_rad_ns(self, w: f64) -> f64 {
        match self {
            FrequencyUnit::Ghz => rad_ns_to_ghz(w),
            FrequencyUnit::RadNs => w,
        }
    }

    pub fn to_rad_ns(self, v: f64) -> f64 {
        match self {
            FrequencyUnit::Ghz => ghz_to_rad_ns(v),
            FrequencyUnit::RadNs => v,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            FrequencyUnit::Ghz => "ghz",
            FrequencyUnit::RadNs => "rad_ns",
        }
    }
}

impl std::str::FromStr for FrequencyUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ghz" => Ok(FrequencyUnit::Ghz),
            "rad_ns" => Ok(FrequencyUnit::RadNs),
            other => Err(format!(
                "unknown unit system `{other}` (expected ghz or rad_ns)"
            )),
        }
    }
}
