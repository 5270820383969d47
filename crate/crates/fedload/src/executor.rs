use fedload_core::federated::{ClientUpdate, UpdateExecutor};
use rayon::prelude::*;

/// Runs client updates on the rayon pool. Results come back in job order,
/// so aggregation is identical to [`fedload_core::federated::Sequential`].
#[derive(Debug, Clone, Copy, Default)]
pub struct RayonExecutor;

impl UpdateExecutor for RayonExecutor {
    fn execute(
        &self,
        jobs: usize,
        job: &(dyn Fn(usize) -> fedload_core::Result<ClientUpdate> + Sync),
    ) -> Vec<fedload_core::Result<ClientUpdate>> {
        (0..jobs).into_par_iter().map(job).collect()
    }
}
