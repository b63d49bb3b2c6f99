//! Special functions, kick-kernel construction, random phase streams and
//! compensated summation shared by the simulation modules.

mod bessel;
mod kernel;
mod stream;
mod sum;

pub use bessel::{bessel_j, bessel_j_row};
pub use kernel::{build_kernel, KickKernel, MAX_HALF_WIDTH};
pub use stream::{RandomPhaseStream, MAX_STATE_INDEX};
pub use sum::{compensated_sum, CompensatedSum};
