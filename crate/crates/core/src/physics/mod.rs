//! Problem definition on the unit disk: scales, collocation, residual channels and the objective.

mod constants;
mod objective;
mod residual;
mod sampling;

pub use constants::{LossWeights, NonDimScheme, PhysicalConstants};
pub use objective::{batch_loss, batches, objective, record_batch, reduce, Batch, LossParts, Part};
pub use residual::{loss_bc, loss_pde, loss_total, residual_mixed, residual_potential, ResidualBundle, Where, UNIT_TOL};
pub use sampling::{sample_boundary, sample_interior, CollocationSet, ResamplePolicy};
