use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clients selected for one round and their queue assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round_index: usize,
    pub selected_clients: Vec<usize>,
    pub queues: Vec<Vec<usize>>,
}

impl RoundPlan {
    pub fn queue_length(&self) -> usize {
        self.queues.first().map_or(0, Vec::len)
    }
}

/// Draws `n` distinct clients uniformly from `0..population`; the returned
/// order is the draw order.
pub fn subsample_clients<R: Rng + ?Sized>(population: usize, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 || n > population {
        return Err(Error::config(format!(
            "cannot select {n} clients from a population of {population}"
        )));
    }
    Ok(index::sample(rng, population, n).into_vec())
}

/// Splits the ordered selection into consecutive queues of length `l`.
pub fn make_queues(selected: &[usize], l: usize) -> Result<Vec<Vec<usize>>> {
    if l == 0 || !selected.len().is_multiple_of(l) {
        return Err(Error::config(format!(
            "queue length {l} must divide the {} selected clients",
            selected.len()
        )));
    }
    Ok(selected.chunks(l).map(<[usize]>::to_vec).collect())
}

pub fn plan_round<R: Rng + ?Sized>(
    round_index: usize,
    population: usize,
    n: usize,
    queue_length: usize,
    rng: &mut R,
) -> Result<RoundPlan> {
    let selected_clients = subsample_clients(population, n, rng)?;
    let queues = make_queues(&selected_clients, queue_length)?;
    Ok(RoundPlan {
        round_index,
        selected_clients,
        queues,
    })
}
