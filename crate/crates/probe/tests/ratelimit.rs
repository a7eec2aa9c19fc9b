use std::sync::Mutex;
use std::time::Duration;

use soundsquat_probe::clock::{Clock, SimClock};
use soundsquat_probe::ratelimit::TokenBucket;

/// Largest number of issue times inside any half-open one-second window.
fn max_per_second(times: &[Duration]) -> usize {
    let mut sorted = times.to_vec();
    sorted.sort();
    let mut best = 0;
    let mut lo = 0;
    for hi in 0..sorted.len() {
        while sorted[hi] - sorted[lo] >= Duration::from_secs(1) {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    best
}

fn achieved_rate(times: &[Duration]) -> f64 {
    let span = (*times.last().unwrap() - times[0]).as_secs_f64();
    (times.len() - 1) as f64 / span
}

#[test]
fn sequential_requests_stay_at_or_under_the_limit() {
    for rate in [1.0, 3.0, 7.5, 10.0, 50.0, 1000.0] {
        let bucket = TokenBucket::new(rate, 1).unwrap();
        let clock = SimClock::new();
        let times: Vec<Duration> = (0..500).map(|_| bucket.acquire(&clock)).collect();
        let achieved = achieved_rate(&times);
        assert!(achieved <= rate, "rate {rate}: achieved {achieved}");
        assert!(achieved >= 0.9 * rate, "rate {rate}: achieved {achieved}");
        assert!(max_per_second(&times) as f64 <= rate.ceil(), "rate {rate}");
    }
}

#[test]
fn concurrent_workers_share_one_schedule() {
    let bucket = TokenBucket::new(20.0, 1).unwrap();
    let clock = SimClock::new();
    let times = Mutex::new(Vec::new());
    std::thread::scope(|s| {
        for _ in 0..8 {
            s.spawn(|| {
                for _ in 0..50 {
                    let t = bucket.acquire(&clock);
                    times.lock().unwrap().push(t);
                }
            });
        }
    });
    let mut times = times.into_inner().unwrap();
    times.sort();
    assert_eq!(times.len(), 400);
    for w in times.windows(2) {
        assert!(w[1] - w[0] >= bucket.interval());
    }
    assert!(max_per_second(&times) <= 20);
    let achieved = achieved_rate(&times);
    assert!((18.0..=20.0).contains(&achieved), "{achieved}");
}

#[test]
fn burst_allows_back_to_back_requests_then_throttles() {
    let bucket = TokenBucket::new(2.0, 3).unwrap();
    let clock = SimClock::new();
    let times: Vec<Duration> = (0..5).map(|_| bucket.acquire(&clock)).collect();
    let ms: Vec<u128> = times.iter().map(|t| t.as_millis()).collect();
    assert_eq!(ms, [0, 0, 0, 500, 1000]);

    // An idle bucket refills up to the burst, never beyond it.
    clock.advance(Duration::from_secs(10));
    let t0 = clock.now();
    let after: Vec<Duration> = (0..4).map(|_| bucket.acquire(&clock) - t0).collect();
    assert_eq!(
        after,
        [
            Duration::ZERO,
            Duration::ZERO,
            Duration::ZERO,
            Duration::from_millis(500)
        ]
    );
}

#[test]
fn bad_rates_are_rejected() {
    assert!(TokenBucket::new(0.0, 1).is_err());
    assert!(TokenBucket::new(f64::NAN, 1).is_err());
    assert!(TokenBucket::new(5.0, 0).is_err());
}
