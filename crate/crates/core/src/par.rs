//! Data-parallel helpers with a sequential fallback.
//!
//! Every helper produces bit-identical results with and without the
//! `parallel` feature: work is split into fixed-size chunks and any
//! reduction is finished sequentially in chunk order.

/// Particles per work unit for the per-particle kernels.
pub const CHUNK: usize = 512;

/// Fill `out[i] = f(i, &input[i])`.
pub fn map_into<T, U, F>(input: &[T], out: &mut [U], f: F)
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync + Send,
{
    assert_eq!(input.len(), out.len());
    #[cfg(feature = "parallel")]
    {
        if input.len() > CHUNK {
            use rayon::prelude::*;
            out.par_chunks_mut(CHUNK)
                .zip(input.par_chunks(CHUNK))
                .enumerate()
                .for_each(|(c, (o, i))| {
                    let base = c * CHUNK;
                    for (k, (slot, item)) in o.iter_mut().zip(i).enumerate() {
                        *slot = f(base + k, item);
                    }
                });
            return;
        }
    }
    seq::map_into(input, out, f);
}

/// Fill row `i` of a row-major `input.len() x width` buffer with `f(i, &input[i], row)`.
pub fn fill_rows<T, F>(input: &[T], out: &mut [f64], width: usize, f: F)
where
    T: Sync,
    F: Fn(usize, &T, &mut [f64]) + Sync + Send,
{
    assert_eq!(input.len() * width, out.len());
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        if input.len() > CHUNK {
            use rayon::prelude::*;
            out.par_chunks_mut(CHUNK * width)
                .zip(input.par_chunks(CHUNK))
                .enumerate()
                .for_each(|(c, (o, i))| {
                    let base = c * CHUNK;
                    for (k, (row, item)) in o.chunks_mut(width).zip(i).enumerate() {
                        f(base + k, item, row);
                    }
                });
            return;
        }
    }
    seq::fill_rows(input, out, width, f);
}

/// Run `n` independent jobs and collect results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seq::map_indexed(n, f)
    }
}

/// Sum in fixed chunk order; identical in both execution modes.
pub fn chunked_sum(values: &[f64]) -> f64 {
    values
        .chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .fold(0.0, |acc, s| acc + s)
}

/// Always-sequential versions, kept public for benchmarking.
pub mod seq {
    pub fn map_into<T, U, F>(input: &[T], out: &mut [U], f: F)
    where
        F: Fn(usize, &T) -> U,
    {
        for (i, (slot, item)) in out.iter_mut().zip(input).enumerate() {
            *slot = f(i, item);
        }
    }

    pub fn fill_rows<T, F>(input: &[T], out: &mut [f64], width: usize, f: F)
    where
        F: Fn(usize, &T, &mut [f64]),
    {
        if width == 0 {
            return;
        }
        for (i, (row, item)) in out.chunks_mut(width).zip(input).enumerate() {
            f(i, item, row);
        }
    }

    pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
    where
        F: Fn(usize) -> R,
    {
        (0..n).map(f).collect()
    }
}
