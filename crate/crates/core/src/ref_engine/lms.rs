//! LMS z-score transform, its inverse and percent-predicted.
//!
//! The forward map is `z = ((v / M)^L - 1) / (L S)`. It is evaluated as
//! `expm1(L ln(v/M)) / (L S)` so that small `|L|` keeps full precision. Below
//! [`L_BRANCH_TOLERANCE`] the log-limit branch takes over, carrying the first
//! order term in `L` so both branches meet at the switch point.

use thiserror::Error;

/// `|L|` below which the log-limit branch is used.
pub const L_BRANCH_TOLERANCE: f64 = 1e-6;

/// z of the 5th percentile; the lower limit of normal sits here.
pub const LLN_Z: f64 = -1.6449;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LmsError {
    #[error("{name} must be a positive finite number, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("no volume maps to z = {z} (1 + L*S*z = {base} is not positive)")]
    PowerDomain { z: f64, base: f64 },
}

fn positive(name: &'static str, value: f64) -> Result<f64, LmsError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(LmsError::NonPositive { name, value })
    }
}

fn finite(name: &'static str, value: f64) -> Result<f64, LmsError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(LmsError::NonFinite { name, value })
    }
}

/// z-score of a measured volume against an LMS reference point.
pub fn z_score(measured: f64, median: f64, l_param: f64, s_param: f64) -> Result<f64, LmsError> {
    let measured = positive("measured", measured)?;
    let median = positive("median", median)?;
    let s = positive("S", s_param)?;
    let l = finite("L", l_param)?;

    let log_ratio = (measured / median).ln();
    if l.abs() < L_BRANCH_TOLERANCE {
        Ok(log_ratio / s * (1.0 + 0.5 * l * log_ratio))
    } else {
        Ok((l * log_ratio).exp_m1() / (l * s))
    }
}

/// Volume whose z-score is `z`; the exact inverse of [`z_score`] on each branch.
pub fn inverse_z(z: f64, median: f64, l_param: f64, s_param: f64) -> Result<f64, LmsError> {
    let z = finite("z", z)?;
    let median = positive("median", median)?;
    let s = positive("S", s_param)?;
    let l = finite("L", l_param)?;

    let log_ratio = if l.abs() < L_BRANCH_TOLERANCE {
        // Root of (L/2) u^2 + u - z S = 0 nearest u = z S.
        let disc = 1.0 + 2.0 * l * z * s;
        if disc < 0.0 {
            return Err(LmsError::PowerDomain { z, base: disc });
        }
        2.0 * z * s / (1.0 + disc.sqrt())
    } else {
        let arg = l * s * z;
        if arg <= -1.0 {
            return Err(LmsError::PowerDomain { z, base: 1.0 + arg });
        }
        arg.ln_1p() / l
    };
    Ok(median * log_ratio.exp())
}

/// Lower limit of normal at the given z cutoff.
pub fn lower_limit(median: f64, l_param: f64, s_param: f64, lln_z: f64) -> Result<f64, LmsError> {
    inverse_z(lln_z, median, l_param, s_param)
}

/// `100 * measured / median`.
pub fn percent_predicted(measured: f64, median: f64) -> Result<f64, LmsError> {
    let median = positive("median", median)?;
    let measured = finite("measured", measured)?;
    Ok(100.0 * measured / median)
}
