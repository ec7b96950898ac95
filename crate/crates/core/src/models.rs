//! Bundled example models and their default initial states.

use std::f64::consts::FRAC_PI_6;

pub const VAN_DER_POL: &str = include_str!("../models/vdp.model");
pub const PENDULUM: &str = include_str!("../models/pendulum.model");
pub const ORNSTEIN_UHLENBECK: &str = include_str!("../models/ou.model");

pub struct Bundled {
    pub name: &'static str,
    pub source: &'static str,
    pub x0: &'static [f64],
}

pub const BUNDLED: &[Bundled] = &[
    Bundled {
        name: "vdp",
        source: VAN_DER_POL,
        x0: &[0.1, 0.1],
    },
    Bundled {
        name: "pendulum",
        source: PENDULUM,
        x0: &[FRAC_PI_6, 0.0],
    },
    Bundled {
        name: "ou",
        source: ORNSTEIN_UHLENBECK,
        x0: &[1.0],
    },
];

/// Looks up a bundled model by name, with or without the `.model` suffix.
pub fn bundled(name: &str) -> Option<&'static Bundled> {
    let stem = name.strip_suffix(".model").unwrap_or(name);
    BUNDLED.iter().find(|b| b.name == stem)
}
