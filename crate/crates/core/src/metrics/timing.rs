use std::time::Instant;

/// Run `f` and return its result with the elapsed wall-clock seconds.
pub fn timing_capture<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
