//! Construction of the slowed map `G`, the density `kappa`, the coordinate change `phi`
//! and the Katok map `G~ = phi G phi^-1`.

mod flow;
mod map;
mod profile;

pub use flow::{SlowFlow, MAX_HALVINGS, PRODUCT_DRIFT_TOL};
pub use map::{IntegratorPanic, KatokMap, KatokTilde, LingerTime, OrbitCursor};
pub use profile::{gauss_legendre, smooth_step, SlowProfile};
