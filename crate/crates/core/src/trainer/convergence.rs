/// Mean of the last `window` values (all of them if the series is shorter).
pub fn final_window_mean(series: &[f64], window: usize) -> f64 {
    let w = window.clamp(1, series.len().max(1));
    let tail = &series[series.len().saturating_sub(w)..];
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// First episode (1-based) from which every `window`-long mean starting there or
/// later stays within `tol * |final mean|` of the final window's mean.
pub fn detect_convergence(series: &[f64], window: usize, tol: f64) -> Option<usize> {
    if series.is_empty() {
        return None;
    }
    let w = window.clamp(1, series.len());
    let mean = |s: usize| series[s..s + w].iter().sum::<f64>() / w as f64;
    let starts = series.len() - w + 1;
    let target = mean(starts - 1);
    let band = tol * target.abs();
    let mut first = starts - 1;
    for s in (0..starts - 1).rev() {
        if (mean(s) - target).abs() > band {
            break;
        }
        first = s;
    }
    Some(first + 1)
}
