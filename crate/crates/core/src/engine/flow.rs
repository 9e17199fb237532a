//! Fluid AIMD sender behind a single bottleneck.
//!
//! The sender works in rounds. A round lasts one RTT, or longer while the
//! window drains through the bottleneck queue, capped at RTT plus the queue
//! depth. The window overflows the queue when it exceeds `C·(RTT + buffer)`;
//! that round counts as a loss and halves the window.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowModel {
    pub mss_bytes: f64,
    pub initial_window_segments: f64,
    /// Bottleneck queue depth expressed as seconds of drain time.
    pub bottleneck_buffer_s: f64,
}

impl Default for FlowModel {
    fn default() -> Self {
        Self {
            mss_bytes: 1500.0,
            initial_window_segments: 2.0,
            bottleneck_buffer_s: 0.25,
        }
    }
}

impl FlowModel {
    pub fn mss_bits(&self) -> f64 {
        self.mss_bytes * 8.0
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.mss_bytes > 0.0 && self.mss_bytes.is_finite()) {
            return Err(format!(
                "mss_bytes must be positive, got {}",
                self.mss_bytes
            ));
        }
        if !(self.initial_window_segments >= 1.0 && self.initial_window_segments.is_finite()) {
            return Err(format!(
                "initial_window_segments must be at least 1, got {}",
                self.initial_window_segments
            ));
        }
        if !(self.bottleneck_buffer_s >= 0.0 && self.bottleneck_buffer_s.is_finite()) {
            return Err(format!(
                "bottleneck_buffer_s must be nonnegative, got {}",
                self.bottleneck_buffer_s
            ));
        }
        Ok(())
    }
}

/// What the sender sees of its path during one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathView {
    pub capacity_bit_s: f64,
    pub rtt_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Round {
    pub rate_bit_s: f64,
    pub duration_s: f64,
    pub loss: bool,
    /// Window bits that did not fit in the pipe plus the queue.
    pub overflow_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aimd {
    pub model: FlowModel,
    pub cwnd_bits: f64,
    pub slow_start: bool,
}

impl Aimd {
    pub fn new(model: FlowModel) -> Self {
        Self {
            cwnd_bits: model.initial_window_segments * model.mss_bits(),
            slow_start: true,
            model,
        }
    }

    pub fn cwnd_segments(&self) -> f64 {
        self.cwnd_bits / self.model.mss_bits()
    }

    /// Sends one window over `path` and applies the window update.
    pub fn round(&mut self, path: PathView) -> Round {
        let w = self.cwnd_bits;
        let c = path.capacity_bit_s.max(0.0);
        let r = path.rtt_s;
        let limit = c * (r + self.model.bottleneck_buffer_s);
        let loss = w > limit;
        let (rate, duration) = if c > 0.0 {
            (
                (w / r).min(c),
                (w / c).clamp(r, r + self.model.bottleneck_buffer_s),
            )
        } else {
            (0.0, r)
        };
        let mss = self.model.mss_bits();
        if loss {
            self.cwnd_bits = (w / 2.0).max(mss);
            self.slow_start = false;
        } else if self.slow_start {
            self.cwnd_bits = 2.0 * w;
        } else {
            self.cwnd_bits = w + mss;
        }
        Round {
            rate_bit_s: rate,
            duration_s: duration,
            loss,
            overflow_bits: if loss { w - limit } else { 0.0 },
        }
    }
}

/// Mean and coefficient of variation (population standard deviation over
/// mean). The CV of an empty or all-zero series is zero.
pub fn mean_and_cv(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return (0.0, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt() / mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view(c: f64, r: f64) -> PathView {
        PathView {
            capacity_bit_s: c,
            rtt_s: r,
        }
    }

    #[test]
    fn slow_start_doubles_until_loss_then_additive() {
        let mut a = Aimd::new(FlowModel::default());
        let mss = a.model.mss_bits();
        let mut prev = a.cwnd_bits;
        loop {
            let r = a.round(view(1e6, 0.1));
            if r.loss {
                break;
            }
            assert_eq!(a.cwnd_bits, 2.0 * prev);
            prev = a.cwnd_bits;
        }
        assert!(!a.slow_start);
        assert_eq!(a.cwnd_bits, (prev / 2.0).max(mss));
        let before = a.cwnd_bits;
        let r = a.round(view(1e6, 0.1));
        assert!(!r.loss);
        assert_eq!(a.cwnd_bits, before + mss);
    }

    #[test]
    fn rate_never_exceeds_capacity() {
        let mut a = Aimd::new(FlowModel::default());
        for i in 0..500 {
            let c = if i % 3 == 0 { 1e6 } else { 10e6 };
            let r = a.round(view(c, 0.05));
            assert!(r.rate_bit_s <= c);
            assert!(r.duration_s >= 0.05 && r.duration_s <= 0.05 + 0.25 + 1e-12);
        }
    }

    #[test]
    fn zero_capacity_sends_nothing() {
        let mut a = Aimd::new(FlowModel::default());
        for _ in 0..10 {
            let r = a.round(view(0.0, 0.1));
            assert_eq!(r.rate_bit_s, 0.0);
            assert!(r.loss);
        }
        assert_eq!(a.cwnd_segments(), 1.0);
    }

    #[test]
    fn cv_of_constant_is_zero() {
        assert_eq!(mean_and_cv(&[3.0, 3.0, 3.0]), (3.0, 0.0));
        let (m, cv) = mean_and_cv(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((cv - 0.5).abs() < 1e-15);
    }
}
