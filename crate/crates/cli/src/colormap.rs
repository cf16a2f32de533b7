//! Scalar-to-color ramp for heat images.

const STOPS: [[f64; 3]; 5] = [
    [0.0, 0.0, 0.02],
    [0.33, 0.06, 0.43],
    [0.73, 0.21, 0.33],
    [0.98, 0.55, 0.04],
    [0.99, 1.0, 0.64],
];

/// Maps `v` in `[0, 1]` (clamped) onto a dark-to-bright ramp.
pub fn heat_color(v: f64) -> [f64; 3] {
    let v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
    let x = v * (STOPS.len() - 1) as f64;
    let i = (x.floor() as usize).min(STOPS.len() - 2);
    let f = x - i as f64;
    std::array::from_fn(|c| STOPS[i][c] * (1.0 - f) + STOPS[i + 1][c] * f)
}

/// Colors for a field normalized by its largest value; negative ringing maps to the bottom of the ramp.
pub fn colorize(values: &[f64]) -> Vec<[f64; 3]> {
    let top = values.iter().fold(0.0f64, |a, &b| a.max(b));
    let scale = if top > 0.0 { 1.0 / top } else { 0.0 };
    values.iter().map(|&v| heat_color(v * scale)).collect()
}
