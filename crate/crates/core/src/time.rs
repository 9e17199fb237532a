//! Slot arithmetic shared by the schedule, topology and engine layers.

/// Relative slack when dividing durations, so that 200 s / 0.1 s is 2000
/// slots rather than 2001.
const SLOT_EPS: f64 = 1e-9;

/// Number of slots covering `duration_s`: `ceil(duration / slot)`, at least one.
pub fn slot_count(duration_s: f64, slot_duration_s: f64) -> usize {
    let ratio = duration_s / slot_duration_s;
    ((ratio - SLOT_EPS * ratio.max(1.0)).ceil() as usize).max(1)
}

/// Start time of slot `index`.
pub fn slot_start(index: usize, slot_duration_s: f64) -> f64 {
    index as f64 * slot_duration_s
}

/// Index of the slot containing `t_s` (slots are half-open `[start, next)`).
pub fn slot_of(t_s: f64, slot_duration_s: f64) -> usize {
    if t_s <= 0.0 {
        return 0;
    }
    let mut k = (t_s / slot_duration_s).floor() as usize;
    if slot_start(k + 1, slot_duration_s) <= t_s {
        k += 1;
    } else if k > 0 && slot_start(k, slot_duration_s) > t_s {
        k -= 1;
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(slot_count(200.0, 1.0), 200);
        assert_eq!(slot_count(200.0, 0.1), 2000);
        assert_eq!(slot_count(5.0, 10.0), 1);
        assert_eq!(slot_count(10.5, 1.0), 11);
    }

    #[test]
    fn slot_lookup_agrees_with_starts() {
        for k in 0..3000 {
            let t = slot_start(k, 0.1);
            assert_eq!(slot_of(t, 0.1), k);
            assert_eq!(slot_of(t + 0.05, 0.1), k);
        }
    }
}
