use crate::error::{Error, Result};
use crate::scalar::Real;

/// Product-limit survival estimate with its at-risk table.
#[derive(Debug, Clone, PartialEq)]
pub struct KaplanMeier<T> {
    /// Distinct observed times, ascending.
    pub times: Vec<T>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
    pub censored: Vec<usize>,
    /// `S(times[i])`, right-continuous.
    pub survival: Vec<T>,
}

impl<T: Real> KaplanMeier<T> {
    pub fn fit(times: &[T], events: &[bool]) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::Contract("Kaplan-Meier needs at least one subject".into()));
        }
        if times.len() != events.len() {
            return Err(Error::Contract("times and events differ in length".into()));
        }
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).expect("finite times"));
        let mut km = Self {
            times: Vec::new(),
            at_risk: Vec::new(),
            events: Vec::new(),
            censored: Vec::new(),
            survival: Vec::new(),
        };
        let mut s = T::one();
        let mut n = times.len();
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let (mut d, mut c) = (0usize, 0usize);
            while i < order.len() && times[order[i]] == t {
                if events[order[i]] {
                    d += 1;
                } else {
                    c += 1;
                }
                i += 1;
            }
            if d > 0 {
                s = s * (T::one() - T::from_count(d) / T::from_count(n));
            }
            km.times.push(t);
            km.at_risk.push(n);
            km.events.push(d);
            km.censored.push(c);
            km.survival.push(s);
            n -= d + c;
        }
        Ok(km)
    }

    /// Right-continuous `S(t)`.
    pub fn survival_at(&self, t: T) -> T {
        let k = self.times.partition_point(|&u| u <= t);
        if k == 0 {
            T::one()
        } else {
            self.survival[k - 1]
        }
    }

    /// Left limit `S(t-)`.
    pub fn survival_before(&self, t: T) -> T {
        let k = self.times.partition_point(|&u| u < t);
        if k == 0 {
            T::one()
        } else {
            self.survival[k - 1]
        }
    }

    /// Distinct times at which at least one event occurred.
    pub fn event_times(&self) -> impl Iterator<Item = T> + '_ {
        self.times
            .iter()
            .zip(&self.events)
            .filter(|(_, &d)| d > 0)
            .map(|(&t, _)| t)
    }
}
