//! Online-phase timing: median over repetitions with a warm cache, batching
//! very fast operations so each measurement stays above clock resolution.

use std::time::Instant;

/// Median wall-clock seconds of `reps` timed runs of `f`, after two warm-up
/// calls.  Calls faster than ~0.2 ms are batched until a batch takes at
/// least ~2 ms and the per-call time is the batch average, which keeps
/// sub-millisecond measurements stable.
pub fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    assert!(reps > 0);
    f();
    f();

    let probe = Instant::now();
    f();
    let single = probe.elapsed().as_secs_f64();
    let batch = if single < 2e-4 {
        ((2e-3 / single.max(1e-9)).ceil() as usize).clamp(1, 100_000)
    } else {
        1
    };

    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        for _ in 0..batch {
            f();
        }
        samples.push(t0.elapsed().as_secs_f64() / batch as f64);
    }
    samples.sort_by(f64::total_cmp);
    samples[samples.len() / 2]
}
