/// Linear ramp from 0 to `peak` over `warmup` steps, constant afterwards.
pub fn lr_schedule(step: usize, peak: f64, warmup: usize) -> f64 {
    if warmup == 0 || step >= warmup {
        peak
    } else {
        peak * step as f64 / warmup as f64
    }
}
