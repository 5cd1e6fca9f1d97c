//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the [`Exec::Parallel`] policy runs on
//! the rayon global pool. Without it every policy runs sequentially. Results
//! never depend on the policy: reductions are order-independent and searches
//! resolve to the lowest index.

use std::ops::Range;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Exec {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            Exec::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            Exec::Sequential
        }
    }
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        self != Exec::Sequential
    }

    /// `f(i)` for every `i` in `range`, collected in index order.
    pub fn map<R, F>(self, range: Range<usize>, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            Exec::Sequential => range.map(f).collect(),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                range.into_par_iter().map(f).collect()
            }
        }
    }

    /// Fallible map; the error of the lowest failing index is returned.
    pub fn try_map<R, E, F>(self, range: Range<usize>, f: F) -> Result<Vec<R>, E>
    where
        R: Send,
        E: Send,
        F: Fn(usize) -> Result<R, E> + Sync + Send,
    {
        self.map(range, f).into_iter().collect()
    }

    /// Smallest index `i` in `range` with `f(i) = Some(_)`.
    pub fn find_first<R, F>(self, range: Range<i128>, f: F) -> Option<R>
    where
        R: Send,
        F: Fn(i128) -> Option<R> + Sync + Send,
    {
        match self {
            Exec::Sequential => range.into_iter().find_map(f),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                let len = (range.end - range.start).max(0) as usize;
                let start = range.start;
                (0..len).into_par_iter().find_map_first(|i| f(start + i as i128))
            }
        }
    }

    /// Fills `out` in chunks of `chunk` elements; `f` receives the chunk index.
    pub fn fill_chunks<T, F>(self, out: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self {
            Exec::Sequential => out.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            #[cfg(feature = "parallel")]
            Exec::Parallel => {
                use rayon::prelude::*;
                out.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn find_first_is_lowest_index() {
        for exec in [Exec::Sequential, Exec::default()] {
            let hit = exec.find_first(-50..5000, |i| (i % 97 == 13).then_some(i));
            // Rust's % keeps the sign, so no negative index qualifies.
            assert_eq!(hit, Some(13));
        }
    }

    #[test]
    fn map_preserves_order() {
        let v = Exec::default().map(0..1000, |i| i * i);
        assert_eq!(v[999], 999 * 999);
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
}
