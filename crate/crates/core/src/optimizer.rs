//! Run-to-run adaptation law: a compass pattern search over reduced
//! coordinates that consumes exactly one cost per switching operation.
//!
//! The caller alternates [`SearchState::ask`] and [`SearchState::tell`]. The
//! first operation evaluates the anchor; afterwards the search polls
//! `center ± delta * e_i` in ascending `i`, `+` before `-`, moves to the first
//! strictly better point and restarts the poll there. A full unsuccessful
//! poll contracts the mesh. Once the mesh falls below `delta_min` the best
//! known setting is returned indefinitely.

use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedforward::{ControlParams, ThetaBox};
use crate::model::N_PARAMS;
use crate::sensitivity::Reduction;

/// Step-size constants of the pattern search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub delta0: f64,
    pub shrink: f64,
    pub delta_min: f64,
    #[serde(rename = "box")]
    pub bounds: ThetaBox,
}

impl Default for SearchSettings {
    fn default() -> Self {
        SearchSettings {
            delta0: 0.05,
            shrink: 0.5,
            delta_min: 1e-4,
            bounds: ThetaBox::default(),
        }
    }
}

impl SearchSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Config(format!("shrink must be in (0, 1), got {}", self.shrink)));
        }
        if !(self.delta_min > 0.0 && self.delta_min < self.delta0) {
            return Err(Error::Config(format!(
                "need 0 < delta_min < delta0, got delta_min = {}, delta0 = {}",
                self.delta_min, self.delta0
            )));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub reduction: Arc<Reduction>,
    pub settings: SearchSettings,
}

impl SearchConfig {
    pub fn new(reduction: Arc<Reduction>, settings: SearchSettings) -> Result<Self> {
        settings.validate()?;
        Ok(SearchConfig { reduction, settings })
    }
}

/// A candidate handed to the device for the next operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub theta: ControlParams,
    /// Set when the box clamped the mapped multipliers.
    pub clamped: bool,
}

/// Outcome of one operation as reported to the search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    /// A measured cost.
    Valid(f64),
    /// Penalty for an operation that could not be evaluated; never preferred
    /// to a valid cost. Penalties are ranked among themselves by
    /// `shortfall`, lower being better.
    Penalty { cost: f64, shortfall: f64 },
}

impl Evaluation {
    pub fn cost(&self) -> f64 {
        match *self {
            Evaluation::Valid(c) | Evaluation::Penalty { cost: c, .. } => c,
        }
    }

    pub fn is_valid(&self) -> bool {
        matches!(self, Evaluation::Valid(_))
    }

    fn better_than(&self, other: &Evaluation) -> bool {
        match (*self, *other) {
            (Evaluation::Valid(a), Evaluation::Valid(b)) => a < b,
            (Evaluation::Valid(_), Evaluation::Penalty { .. }) => true,
            (Evaluation::Penalty { .. }, Evaluation::Valid(_)) => false,
            (Evaluation::Penalty { shortfall: a, .. }, Evaluation::Penalty { shortfall: b, .. }) => a < b,
        }
    }
}

impl From<f64> for Evaluation {
    fn from(c: f64) -> Self {
        Evaluation::Valid(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub theta: ControlParams,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    x: Vec<f64>,
    candidate: Candidate,
    is_poll: bool,
}

#[derive(Debug, Clone)]
pub struct SearchState {
    cfg: SearchConfig,
    center: Vec<f64>,
    center_eval: Option<Evaluation>,
    delta: f64,
    /// Next poll slot: coordinate `slot / 2`, sign `+` for even slots.
    slot: usize,
    pending: Option<Pending>,
    n: usize,
    history: Vec<HistoryEntry>,
}

pub fn new_search(cfg: SearchConfig) -> SearchState {
    let center = cfg.reduction.center();
    let delta = cfg.settings.delta0;
    SearchState {
        cfg,
        center,
        center_eval: None,
        delta,
        slot: 0,
        pending: None,
        n: 0,
        history: Vec::new(),
    }
}

impl SearchState {
    pub fn config(&self) -> &SearchConfig {
        &self.cfg
    }

    /// Operations completed so far.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn history(&self) -> &[HistoryEntry] {
        &self.history
    }

    pub fn is_exhausted(&self) -> bool {
        self.center_eval.is_some() && self.delta < self.cfg.settings.delta_min
    }

    fn map(&self, x: &[f64]) -> Candidate {
        let (theta, clamped) = self.cfg.reduction.theta_from_reduced(x, &self.cfg.settings.bounds);
        Candidate { theta, clamped }
    }

    /// Multipliers for the next operation. Repeated calls without a `tell`
    /// return the same candidate.
    pub fn ask(&mut self) -> Candidate {
        if let Some(p) = &self.pending {
            return p.candidate;
        }
        let (x, is_poll) = if self.center_eval.is_none() || self.is_exhausted() {
            (self.center.clone(), false)
        } else {
            let mut x = self.center.clone();
            let sign = if self.slot % 2 == 0 { 1.0 } else { -1.0 };
            x[self.slot / 2] += sign * self.delta;
            (x, true)
        };
        let candidate = self.map(&x);
        self.pending = Some(Pending { x, candidate, is_poll });
        candidate
    }

    /// Reports the outcome of the operation run with the last asked
    /// candidate.
    pub fn tell(&mut self, eval: impl Into<Evaluation>) -> Result<()> {
        let eval = eval.into();
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("tell without a matching ask".into()))?;
        self.n += 1;
        self.history.push(HistoryEntry {
            theta: pending.candidate.theta,
            cost: eval.cost(),
        });

        match self.center_eval {
            None => self.center_eval = Some(eval),
            Some(center) if pending.is_poll => {
                if eval.better_than(&center) {
                    self.center = pending.x;
                    self.center_eval = Some(eval);
                    self.slot = 0;
                } else {
                    self.slot += 1;
                    if self.slot == 2 * self.center.len() {
                        self.slot = 0;
                        self.delta *= self.cfg.settings.shrink;
                    }
                }
            }
            // re-running the exhausted center
            Some(_) => {}
        }
        Ok(())
    }

    /// Best multipliers found so far and their cost.
    pub fn best(&self) -> Option<(ControlParams, f64)> {
        self.center_eval.map(|e| (self.map(&self.center).theta, e.cost()))
    }

    /// History as CSV: `n,theta_1..theta_9,J`.
    pub fn write_history_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "n")?;
        for i in 1..=N_PARAMS {
            write!(w, ",theta_{i}")?;
        }
        writeln!(w, ",J")?;
        for (k, h) in self.history.iter().enumerate() {
            write!(w, "{}", k + 1)?;
            for v in h.theta.as_array() {
                write!(w, ",{v}")?;
            }
            writeln!(w, ",{}", h.cost)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::{make_orthogonal_reduction, EigenBasis, OrthogonalMap};

    fn subset(free: Vec<usize>) -> SearchState {
        let cfg = SearchConfig::new(Arc::new(Reduction::Subset { free }), SearchSettings::default()).unwrap();
        new_search(cfg)
    }

    fn quad(theta: &ControlParams, free: &[usize], target: f64) -> f64 {
        free.iter().map(|&i| (theta[i] - target).powi(2)).sum()
    }

    #[test]
    fn starts_at_anchor() {
        let mut s = subset(vec![0, 1, 2, 4]);
        assert_eq!(s.n(), 0);
        assert_eq!(s.center(), &[1.0; 4]);
        assert!(s.best().is_none());
        let c = s.ask();
        assert_eq!(c.theta, ControlParams::NOMINAL);
        assert!(!c.clamped);
    }

    #[test]
    fn orthogonal_starts_at_projected_anchor() {
        let mut vectors = [[0.0; 9]; 9];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        vectors[0][0] = h;
        vectors[0][1] = h;
        vectors[1][0] = h;
        vectors[1][1] = -h;
        for k in 2..9 {
            vectors[k][k] = 1.0;
        }
        let basis = EigenBasis { values: [1.0; 9], vectors };
        let red = make_orthogonal_reduction(&basis, 2, OrthogonalMap::Affine).unwrap();
        let cfg = SearchConfig::new(Arc::new(red), SearchSettings::default()).unwrap();
        let mut s = new_search(cfg);
        assert!((s.center()[0] - 2.0 * h).abs() < 1e-15);
        assert!(s.center()[1].abs() < 1e-15);
        for v in s.ask().theta.0 {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn poll_order_for_two_free_multipliers() {
        let mut s = subset(vec![1, 2]);
        s.ask();
        s.tell(1.0).unwrap();
        let mut seen = Vec::new();
        for _ in 0..4 {
            let c = s.ask();
            seen.push((c.theta[1], c.theta[2]));
            for i in [0, 3, 4, 5, 6, 7, 8] {
                assert_eq!(c.theta[i], 1.0);
            }
            s.tell(2.0).unwrap();
        }
        assert_eq!(seen, vec![(1.05, 1.0), (0.95, 1.0), (1.0, 1.05), (1.0, 0.95)]);
        assert_eq!(s.delta(), 0.025);
    }

    #[test]
    fn hand_traced_quadratic() {
        // f(x) = sum (x_i - 1.1)^2 over theta_2, theta_3, from (1, 1), delta 0.05
        let free = [1, 2];
        let mut s = subset(free.to_vec());
        let expected: [(f64, f64); 12] = [
            (1.0, 1.0),   // anchor, f = 0.02
            (1.05, 1.0),  // 0.0125, move
            (1.10, 1.0),  // 0.01, move
            (1.15, 1.0),  // 0.0125
            (1.05, 1.0),  // 0.0125
            (1.10, 1.05), // 0.0025, move
            (1.15, 1.05), // 0.005
            (1.05, 1.05), // 0.005
            (1.10, 1.10), // 0, move
            (1.15, 1.10), // 0.0025
            (1.05, 1.10), // 0.0025
            (1.10, 1.15), // 0.0025
        ];
        let mut costs = Vec::new();
        for (k, (a, b)) in expected.iter().enumerate() {
            let c = s.ask();
            assert!((c.theta[1] - a).abs() < 1e-12 && (c.theta[2] - b).abs() < 1e-12, "op {}: {:?}", k + 1, c.theta);
            let f = quad(&c.theta, &free, 1.1);
            costs.push(f);
            s.tell(f).unwrap();
        }
        assert!((costs[0] - 0.02).abs() < 1e-15);
        assert!((costs[1] - 0.0125).abs() < 1e-15);
        // (1.10, 1.05) is the last poll of the cycle around (1.1, 1.1)
        let c = s.ask();
        assert!((c.theta[1] - 1.10).abs() < 1e-12 && (c.theta[2] - 1.05).abs() < 1e-12);
        s.tell(quad(&c.theta, &free, 1.1)).unwrap();
        assert_eq!(s.delta(), 0.025);
        let (best, cost) = s.best().unwrap();
        assert!(cost < 1e-28);
        assert!((best[1] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn protocol_error_without_ask() {
        let mut s = subset(vec![0]);
        assert!(matches!(s.tell(1.0), Err(Error::Protocol(_))));
        s.ask();
        s.tell(1.0).unwrap();
        assert!(s.tell(1.0).is_err());
    }

    #[test]
    fn repeated_ask_is_idempotent() {
        let mut s = subset(vec![0, 1]);
        s.ask();
        s.tell(3.0).unwrap();
        let a = s.ask();
        assert_eq!(a, s.ask());
        s.tell(4.0).unwrap();
        assert_eq!(s.n(), 2);
    }

    #[test]
    fn best_after_one_tell_and_idempotent() {
        let mut s = subset(vec![0, 1]);
        let c = s.ask();
        s.tell(0.7).unwrap();
        assert_eq!(s.best(), Some((c.theta, 0.7)));
        assert_eq!(s.best(), s.best());
        for k in 0..30 {
            s.ask();
            s.tell(0.5 + 0.01 * ((k * 7) % 11) as f64).unwrap();
        }
        let min = s.history().iter().map(|h| h.cost).fold(f64::INFINITY, f64::min);
        assert_eq!(s.best().unwrap().1, min);
    }

    #[test]
    fn penalties_lose_to_valid_costs() {
        let mut s = subset(vec![0]);
        s.ask();
        s.tell(Evaluation::Penalty { cost: 0.1, shortfall: 1.0 }).unwrap();
        s.ask();
        s.tell(Evaluation::Valid(5.0)).unwrap();
        assert_eq!(s.best().unwrap().1, 5.0);
        s.ask();
        s.tell(Evaluation::Penalty { cost: 0.01, shortfall: 0.0 }).unwrap();
        assert_eq!(s.best().unwrap().1, 5.0);
    }

    #[test]
    fn penalties_ranked_by_shortfall() {
        let mut s = subset(vec![0]);
        let c0 = s.ask().theta;
        s.tell(Evaluation::Penalty { cost: 4.0, shortfall: 0.8 }).unwrap();
        let c1 = s.ask().theta;
        assert_ne!(c0, c1);
        s.tell(Evaluation::Penalty { cost: 4.0, shortfall: 0.3 }).unwrap();
        assert_eq!(s.best().unwrap().0, c1);
        s.ask();
        s.tell(Evaluation::Penalty { cost: 4.0, shortfall: 0.3 }).unwrap();
        assert_eq!(s.best().unwrap().0, c1);
    }

    #[test]
    fn exhausted_search_repeats_best() {
        let settings = SearchSettings {
            delta0: 0.05,
            shrink: 0.5,
            delta_min: 0.03,
            ..SearchSettings::default()
        };
        let cfg = SearchConfig::new(Arc::new(Reduction::Subset { free: vec![0] }), settings).unwrap();
        let mut s = new_search(cfg);
        s.ask();
        s.tell(1.0).unwrap();
        s.ask();
        s.tell(2.0).unwrap();
        s.ask();
        s.tell(2.0).unwrap();
        assert!(s.is_exhausted());
        for _ in 0..5 {
            assert_eq!(s.ask().theta, ControlParams::NOMINAL);
            s.tell(1.0).unwrap();
        }
        assert_eq!(s.n(), 8);
    }

    #[test]
    fn invalid_settings_rejected() {
        let red = Arc::new(Reduction::Subset { free: vec![0] });
        let bad = [
            SearchSettings { shrink: 1.0, ..SearchSettings::default() },
            SearchSettings { delta_min: 0.1, ..SearchSettings::default() },
            SearchSettings { delta_min: 0.0, ..SearchSettings::default() },
        ];
        for s in bad {
            assert!(SearchConfig::new(red.clone(), s).is_err());
        }
    }

    #[test]
    fn history_csv() {
        let mut s = subset(vec![0]);
        s.ask();
        s.tell(0.5).unwrap();
        let mut buf = Vec::new();
        s.write_history_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,theta_1,theta_2,theta_3,theta_4,theta_5,theta_6,theta_7,theta_8,theta_9,J"
        );
        assert_eq!(lines.next().unwrap(), "1,1,1,1,1,1,1,1,1,1,0.5");
    }

    fn converge(free: Vec<usize>, target: &[f64]) -> SearchState {
        let mut s = subset(free.clone());
        for _ in 0..2000 {
            if s.is_exhausted() {
                break;
            }
            let c = s.ask();
            let f: f64 = free
                .iter()
                .zip(target)
                .enumerate()
                .map(|(k, (&i, t))| (k + 1) as f64 * (c.theta[i] - t).powi(2))
                .sum();
            s.tell(f).unwrap();
        }
        s
    }

    #[test]
    fn separable_quadratic_converges() {
        for r in [1usize, 2, 4] {
            let target: Vec<f64> = (0..r).map(|k| 1.0 + 0.037 * (k as f64 + 1.0) * if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
            let s = converge((0..r).collect(), &target);
            assert!(s.is_exhausted(), "r = {r}");
            let (best, _) = s.best().unwrap();
            for (k, t) in target.iter().enumerate() {
                assert!((best[k] - t).abs() <= 1e-4, "r = {r}, coord {k}: {} vs {t}", best[k]);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn best_so_far_non_increasing(costs in proptest::collection::vec(0.0f64..10.0, 1..80)) {
                let mut s = subset(vec![0, 3, 5]);
                let mut prev = f64::INFINITY;
                for c in costs {
                    if s.is_exhausted() {
                        break;
                    }
                    s.ask();
                    s.tell(c).unwrap();
                    let b = s.best().unwrap().1;
                    prop_assert!(b <= prev);
                    let min = s.history().iter().map(|h| h.cost).fold(f64::INFINITY, f64::min);
                    prop_assert_eq!(b, min);
                    prev = b;
                }
            }

            #[test]
            fn polls_differ_from_center_in_one_coordinate(costs in proptest::collection::vec(0.0f64..10.0, 2..60)) {
                let free = vec![0, 2, 4, 6];
                let mut s = subset(free.clone());
                for c in costs {
                    let before = s.best();
                    let cand = s.ask();
                    if let Some((center, _)) = before {
                        if !s.is_exhausted() {
                            let diffs = (0..9).filter(|&i| cand.theta[i] != center[i]).count();
                            prop_assert_eq!(diffs, 1);
                        }
                    }
                    for i in [1, 3, 5, 7, 8] {
                        prop_assert_eq!(cand.theta[i], 1.0);
                    }
                    s.tell(c).unwrap();
                }
            }
        }
    }
}
