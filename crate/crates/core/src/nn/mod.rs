//! Dense network substrate: matrices, MLPs with hand-derived backprop, Adam,
//! target blending and a finite-difference oracle.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;

pub use adam::AdamState;
pub use gradcheck::{grad_check, grad_check_mlp, numeric_gradient, relative_error};
pub use matrix::Matrix;
pub use mlp::{Activation, Backward, ForwardCache, Mlp};

use crate::error::{Error, Result};

/// `target ← (1 − τ)·target + τ·online`, elementwise.
pub fn polyak_blend(target: &mut [f64], online: &[f64], tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::InvalidSetting(format!(
            "target blend rate must lie in (0, 1], got {tau}"
        )));
    }
    if target.len() != online.len() {
        return Err(Error::Dimension(format!(
            "target has {} parameters, online has {}",
            target.len(),
            online.len()
        )));
    }
    if tau == 1.0 {
        target.copy_from_slice(online);
        return Ok(());
    }
    for (t, o) in target.iter_mut().zip(online) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}
