//! Candidate-level parallel map; serial when the `parallel` feature is off.

#[cfg(feature = "parallel")]
pub(crate) fn map<A, B, F>(items: Vec<A>, f: F) -> Vec<B>
where
    A: Send,
    B: Send,
    F: Fn(A) -> B + Sync + Send,
{
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map<A, B, F>(items: Vec<A>, f: F) -> Vec<B>
where
    F: Fn(A) -> B,
{
    items.into_iter().map(f).collect()
}
