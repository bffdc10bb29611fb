/// Sinusoidal encoding of step `t`:
/// `sin(t / 10000^(i/dim))` at even `i`, `cos(t / 10000^((i-1)/dim))` at odd `i`.
pub fn temporal_encoding(t: usize, dim: usize) -> Vec<f64> {
    let t = t as f64;
    (0..dim)
        .map(|i| {
            let even = i - i % 2;
            let angle = t / 10000f64.powf(even as f64 / dim as f64);
            if i % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}
