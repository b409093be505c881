/// Resources and latency of one dense layer under a given reuse factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub multipliers: usize,
    pub cycles: u64,
}

/// A layer with `n_in * n_out` products and reuse factor `r` instantiates
/// `ceil(n_in * n_out / r)` multipliers and takes `r + pipeline_depth` cycles.
pub fn dense_layer_cost(
    n_in: usize,
    n_out: usize,
    reuse_factor: usize,
    pipeline_depth: u64,
) -> LayerCost {
    let r = reuse_factor.max(1);
    LayerCost {
        multipliers: (n_in * n_out).div_ceil(r),
        cycles: r as u64 + pipeline_depth,
    }
}

pub fn mlp_cycles(layer_sizes: &[usize], reuse_factor: usize, pipeline_depth: u64) -> u64 {
    layer_sizes
        .windows(2)
        .map(|w| dense_layer_cost(w[0], w[1], reuse_factor, pipeline_depth).cycles)
        .sum()
}

/// Streaming image kernels cost `alpha` cycles per pixel.
pub fn image_cycles(alpha: u64, pixels: usize) -> u64 {
    alpha * pixels as u64
}
