use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::{Rng, Scalar};

/// Removes each undirected edge independently with probability `p`.
///
/// Draws one uniform number per edge in [`Graph::edges`] order. Meant to be
/// called once per training epoch; the caller renormalises the result.
pub fn drop_edges<T: Scalar>(g: &Graph<T>, p: f64, rng: &mut Rng) -> Result<Graph<T>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("drop probability {p} not in [0, 1)")));
    }
    if p == 0.0 {
        return Ok(g.clone());
    }
    let kept: Vec<(usize, usize)> = g.edges().filter(|_| rng.gen::<f64>() >= p).collect();
    Ok(g.with_edges(&kept))
}
