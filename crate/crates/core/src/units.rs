//! dB / linear power conversions.
//!
//! Map values are stored in dB relative to 1 mW.  Aggregation and basis
//! expansion happen in the linear domain; everything else (losses, metrics,
//! noise) works directly in dB.

/// Linear powers at or below this are clamped to [`DB_FLOOR`] when converted
/// to dB, so that empty cells and exact zeros stay finite.
pub const LINEAR_FLOOR: f64 = 1e-20;

/// dB value assigned to linear powers at or below [`LINEAR_FLOOR`].
pub const DB_FLOOR: f64 = -200.0;

/// Converts a dB value to linear power (mW).
#[inline]
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power (mW) to dB, clamping tiny and non-positive
/// values to [`DB_FLOOR`].
#[inline]
pub fn linear_to_db(linear: f64) -> f64 {
    if linear <= LINEAR_FLOOR {
        DB_FLOOR
    } else {
        10.0 * linear.log10()
    }
}
