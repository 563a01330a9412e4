//! Seed fan-out.
//!
//! With the `parallel` feature (default) independent seeds run on the rayon
//! pool; without it they run in order on the calling thread. Results are
//! always returned in seed order, so outputs are identical either way.

/// Runs `f` for every seed index in `0..seeds` and collects results in order.
pub fn map_seeds<T, F>(seeds: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_seeds_parallel(seeds, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seeds_sequential(seeds, f)
    }
}

pub fn map_seeds_sequential<T, F>(seeds: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..seeds).map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_seeds_parallel<T, F>(seeds: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..seeds).into_par_iter().map(f).collect()
}

/// Same as [`map_seeds`] over an arbitrary slice of work items.
pub fn map_items<I, T, F>(items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = map_seeds(50, |i| i * i);
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert_eq!(map_seeds_sequential(5, |i| i), vec![0, 1, 2, 3, 4]);
    }
}
