//! Adam, Glorot initialization and the plateau learning-rate schedule.

mod adam;
mod init;
mod schedule;

pub use adam::{adam_update, Adam, AdamConfig, Moments};
pub use init::{glorot_bound, glorot_init, rng_from_state, rng_state, seeded_rng, RNG_STATE_LEN};
pub use schedule::{PlateauSchedule, DEFAULT_FACTOR, DEFAULT_PATIENCE};
