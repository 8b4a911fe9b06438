//! Order-preserving fan-out over independent work items.
//!
//! With the `parallel` feature (default) and more than one worker, items are
//! processed on a dedicated rayon pool. Otherwise a plain sequential loop is
//! used. Output order always follows input order, so results never depend on
//! the worker count.

use std::num::NonZeroUsize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Workers(NonZeroUsize);

impl Workers {
    pub const SEQUENTIAL: Workers = Workers(NonZeroUsize::MIN);

    pub fn new(n: usize) -> Self {
        Workers(NonZeroUsize::new(n).unwrap_or(NonZeroUsize::MIN))
    }

    /// One worker per available core.
    pub fn available() -> Self {
        Workers(std::thread::available_parallelism().unwrap_or(NonZeroUsize::MIN))
    }

    pub fn get(self) -> usize {
        self.0.get()
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::SEQUENTIAL
    }
}

/// Maps `f` over `items`; stops at the first error in input order.
pub fn try_map<T, R, E, F>(items: &[T], workers: Workers, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers.get() > 1 && items.len() > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.get())
            .build()
        {
            let results: Vec<Result<R, E>> = pool.install(|| items.par_iter().map(&f).collect());
            return results.into_iter().collect();
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = workers;
    items.iter().map(f).collect()
}

pub fn map<T, R, F>(items: &[T], workers: Workers, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match try_map::<_, _, std::convert::Infallible, _>(items, workers, |t| Ok(f(t))) {
        Ok(v) => v,
        Err(never) => match never {},
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let xs: Vec<u64> = (0..1000).collect();
        let seq = map(&xs, Workers::SEQUENTIAL, |x| x * x);
        let par = map(&xs, Workers::new(8), |x| x * x);
        assert_eq!(seq, par);
    }

    #[test]
    fn first_error_in_input_order() {
        let xs: Vec<i32> = (0..100).collect();
        let r: Result<Vec<i32>, i32> =
            try_map(&xs, Workers::new(4), |&x| if x % 10 == 7 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(7));
    }

    #[test]
    fn zero_workers_means_one() {
        assert_eq!(Workers::new(0).get(), 1);
    }
}
