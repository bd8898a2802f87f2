//! Dynamics error metrics over frame-major `[frames, width]` arrays.

/// Mean absolute error per component, optionally divided by body mass.
pub fn mpje(pred: &[f64], target: &[f64], mass: Option<f64>) -> f64 {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return 0.0;
    }
    let s: f64 = pred.iter().zip(target).map(|(a, b)| (a - b).abs()).sum();
    s / pred.len() as f64 / mass.unwrap_or(1.0)
}

pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    assert_eq!(pred.len(), target.len());
    if pred.is_empty() {
        return 0.0;
    }
    let s: f64 = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / pred.len() as f64).sqrt()
}

/// Pearson correlation, or `None` when either signal has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    if a.is_empty() {
        return None;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Per-channel correlation over time.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelPcc {
    /// One value per channel; guarded channels report 0.
    pub values: Vec<f64>,
    /// Channels whose prediction or target is constant.
    pub guarded: Vec<usize>,
}

impl ChannelPcc {
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.values.iter().sum::<f64>() / self.values.len() as f64
        }
    }
}

pub fn pcc_channels(pred: &[f64], target: &[f64], width: usize) -> ChannelPcc {
    assert_eq!(pred.len(), target.len());
    assert!(width > 0 && pred.len() % width == 0);
    let column = |x: &[f64], c: usize| -> Vec<f64> { x.iter().skip(c).step_by(width).copied().collect() };
    let mut out = ChannelPcc {
        values: Vec::with_capacity(width),
        guarded: Vec::new(),
    };
    for c in 0..width {
        match pearson(&column(pred, c), &column(target, c)) {
            Some(r) => out.values.push(r),
            None => {
                out.values.push(0.0);
                out.guarded.push(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_prediction_is_error_free() {
        let t = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mpje(&t, &t, Some(70.0)), 0.0);
        assert_eq!(rmse(&t, &t), 0.0);
    }

    #[test]
    fn mass_divides_mpje() {
        assert_eq!(mpje(&[2.0, 4.0], &[0.0, 0.0], Some(3.0)), 1.0);
    }

    #[test]
    fn pearson_sign() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
    }
}
