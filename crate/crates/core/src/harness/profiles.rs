use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ContinuumField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// `sin(2 pi x)`.
    Sine,
    /// `sin(2 pi x) sin(2 pi y)`.
    Sine2d,
    /// Smooth bump `exp(8 - 1/r - 1/(1/2 - r))` on `0 < r < 1/2`, zero
    /// elsewhere, with `r` the Euclidean norm of the coordinate in `[0,1)^d`.
    Bump,
}

impl Profile {
    pub fn name(&self) -> &'static str {
        match self {
            Profile::Sine => "sine",
            Profile::Sine2d => "sine2d",
            Profile::Bump => "bump",
        }
    }

    /// Default profile for dimension `d`.
    pub fn default_for(d: usize) -> Self {
        if d == 2 {
            Profile::Sine2d
        } else {
            Profile::Sine
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::Sine => (2.0 * PI * x[0]).sin(),
            Profile::Sine2d => (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(),
            Profile::Bump => bump(x.iter().map(|v| v * v).sum::<f64>().sqrt()),
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        if *self == Profile::Sine2d && d != 2 {
            return Err(Error::config("profile", "sine2d needs d = 2"));
        }
        Ok(())
    }

    /// Largest gradient magnitude of the profile, used to size tension
    /// tables.
    pub fn max_gradient(&self) -> f64 {
        match self {
            Profile::Sine | Profile::Sine2d => 2.0 * PI,
            Profile::Bump => BUMP_MAX_SLOPE,
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine" => Ok(Profile::Sine),
            "sine2d" => Ok(Profile::Sine2d),
            "bump" => Ok(Profile::Bump),
            other => Err(Error::usage(format!("unknown initial profile `{other}` (expected sine, sine2d or bump)"))),
        }
    }
}

/// Upper bound on `|bump'|` (the true maximum is about 10.72).
const BUMP_MAX_SLOPE: f64 = 11.0;

fn bump(r: f64) -> f64 {
    if r > 0.0 && r < 0.5 {
        (8.0 - 1.0 / r - 1.0 / (0.5 - r)).exp()
    } else {
        0.0
    }
}

/// Samples the named profile on the `d`-dimensional grid of side `m`.
pub fn initial_profile(name: &str, d: usize, m: usize) -> Result<ContinuumField> {
    let p: Profile = name.parse()?;
    p.check_dim(d)?;
    sample(p, d, m)
}

pub fn sample(p: Profile, d: usize, m: usize) -> Result<ContinuumField> {
    p.check_dim(d)?;
    ContinuumField::from_fn(d, m, |x| p.eval(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!((Profile::Sine.eval(&[0.25]) - 1.0).abs() < 1e-15);
        assert!((Profile::Bump.eval(&[0.25]) - 1.0).abs() < 1e-15);
        assert_eq!(Profile::Bump.eval(&[0.5]), 0.0);
        assert_eq!(Profile::Bump.eval(&[0.7]), 0.0);
        assert_eq!(Profile::Bump.eval(&[0.0]), 0.0);
        assert!(Profile::Bump.eval(&[0.499]) < 1e-100);
        assert!((Profile::Bump.eval(&[0.15, 0.2]) - 1.0).abs() < 1e-12);
        assert!(matches!(initial_profile("ramp", 1, 8), Err(Error::Usage(_))));
        assert!(initial_profile("sine2d", 1, 8).is_err());
    }

    #[test]
    fn bump_slope_bound() {
        let h = 1e-6;
        let worst = (1..50_000)
            .map(|i| i as f64 * 1e-5)
            .map(|r| ((bump(r + h) - bump(r - h)) / (2.0 * h)).abs())
            .fold(0.0, f64::max);
        assert!(worst < BUMP_MAX_SLOPE && worst > 0.95 * BUMP_MAX_SLOPE, "{worst}");
    }

    #[test]
    fn bump_support_in_lower_left_quadrant() {
        let f = initial_profile("bump", 2, 32).unwrap();
        for (k, v) in f.values().iter().enumerate() {
            let x = f.point(k);
            if x[0] >= 0.5 || x[1] >= 0.5 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(f.max() > 0.9);
    }
}
