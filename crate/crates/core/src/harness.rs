//! The online protocol: reveal `x_t`, forecast, reveal `y_t`, suffer the
//! squared loss. Regret against each comparator is the forecaster's
//! cumulative loss minus the comparator's.

use std::io::Write;
use std::sync::Arc;

use crate::adversary::{Comparator, Stream};
use crate::error::{Error, Result};
use crate::ewa::{ewa_predict, ewa_update, ExpertNet};
use crate::kaar::{clip, Extension, KaarState};
use crate::stats::{log_log_fit, KahanSum, LineFit};

/// An online forecaster. `predict(x_t)` must precede `update(x_t, y_t)`.
pub trait Forecaster {
    fn name(&self) -> &str;
    fn predict(&mut self, x: &[f64]) -> Result<f64>;
    fn update(&mut self, x: &[f64], y: f64) -> Result<()>;
    /// Forecast before clipping for the last `predict`, when clipping applies.
    fn last_raw(&self) -> Option<f64> {
        None
    }
}

/// Always forecasts 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroForecaster;

impl Forecaster for ZeroForecaster {
    fn name(&self) -> &str {
        "zero"
    }

    fn predict(&mut self, _x: &[f64]) -> Result<f64> {
        Ok(0.0)
    }

    fn update(&mut self, _x: &[f64], _y: f64) -> Result<()> {
        Ok(())
    }
}

/// Forecasts the comparator's own value.
pub struct OracleForecaster {
    f: Arc<dyn Comparator>,
}

impl OracleForecaster {
    pub fn new(f: Arc<dyn Comparator>) -> Self {
        OracleForecaster { f }
    }
}

impl Forecaster for OracleForecaster {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.f.eval(x))
    }

    fn update(&mut self, _x: &[f64], _y: f64) -> Result<()> {
        Ok(())
    }
}

/// KAAR; the provisional factor column computed by `predict` is reused by
/// `update` for the same point.
#[derive(Debug, Clone)]
pub struct KaarForecaster {
    state: KaarState,
    clipped: bool,
    pending: Option<Extension>,
    last_raw: Option<f64>,
}

impl KaarForecaster {
    /// Clipping requires the state to carry a clip level.
    pub fn new(state: KaarState, clipped: bool) -> Result<Self> {
        if clipped && state.clip_m().is_none() {
            return Err(Error::InvalidParams("clipped KAAR requires a clip level".into()));
        }
        Ok(KaarForecaster { state, clipped, pending: None, last_raw: None })
    }

    pub fn state(&self) -> &KaarState {
        &self.state
    }
}

impl Forecaster for KaarForecaster {
    fn name(&self) -> &str {
        if self.clipped {
            "kaar_clipped"
        } else {
            "kaar"
        }
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        let ext = self.state.extend(x)?;
        let raw = ext.prediction();
        self.pending = Some(ext);
        self.last_raw = Some(raw);
        Ok(match (self.clipped, self.state.clip_m()) {
            (true, Some(m)) => clip(raw, m),
            _ => raw,
        })
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        match self.pending.take() {
            Some(ext) if ext.point() == x => self.state.commit(ext, y),
            _ => self.state.update(x, y),
        }
    }

    fn last_raw(&self) -> Option<f64> {
        self.last_raw
    }
}

/// Exponentially weighted average over an expert net.
#[derive(Debug, Clone)]
pub struct EwaForecaster {
    net: ExpertNet,
}

impl EwaForecaster {
    pub fn new(net: ExpertNet) -> Self {
        EwaForecaster { net }
    }

    pub fn net(&self) -> &ExpertNet {
        &self.net
    }
}

impl Forecaster for EwaForecaster {
    fn name(&self) -> &str {
        "ewa"
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        ewa_predict(&self.net, x)
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        ewa_update(&mut self.net, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    AwaitPredict,
    AwaitUpdate,
}

/// Wraps a forecaster and rejects any update that is not preceded by a
/// prediction for the same round.
pub struct ProtocolGuard<F> {
    inner: F,
    phase: Phase,
    round: usize,
}

impl<F: Forecaster> ProtocolGuard<F> {
    pub fn new(inner: F) -> Self {
        ProtocolGuard { inner, phase: Phase::AwaitPredict, round: 1 }
    }

    pub fn into_inner(self) -> F {
        self.inner
    }

    pub fn round(&self) -> usize {
        self.round
    }
}

impl<F: Forecaster> Forecaster for ProtocolGuard<F> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn predict(&mut self, x: &[f64]) -> Result<f64> {
        if self.phase != Phase::AwaitPredict {
            return Err(Error::Protocol(format!("second prediction in round {}", self.round)));
        }
        let v = self.inner.predict(x)?;
        self.phase = Phase::AwaitUpdate;
        Ok(v)
    }

    fn update(&mut self, x: &[f64], y: f64) -> Result<()> {
        if self.phase != Phase::AwaitUpdate {
            return Err(Error::Protocol(format!("label revealed before prediction in round {}", self.round)));
        }
        self.inner.update(x, y)?;
        self.phase = Phase::AwaitPredict;
        self.round += 1;
        Ok(())
    }

    fn last_raw(&self) -> Option<f64> {
        self.inner.last_raw()
    }
}

/// Regret snapshot after round `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub t: usize,
    pub forecaster_loss: f64,
    pub comparator_losses: Vec<f64>,
    pub regrets: Vec<f64>,
}

/// Full record of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    pub forecaster: String,
    pub comparator_ids: Vec<String>,
    pub y: Vec<f64>,
    pub yhat: Vec<f64>,
    /// Unclipped forecasts; equal to `yhat` for forecasters that do not clip.
    pub yhat_raw: Vec<f64>,
    pub loss: Vec<f64>,
    pub cum_loss: Vec<f64>,
    /// `regrets[c][t - 1]` is the regret against comparator `c` after round `t`.
    pub regrets: Vec<Vec<f64>>,
    pub cumulative_forecaster_loss: f64,
    pub comparator_losses: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

impl GameTrace {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Final regret against comparator `c`.
    pub fn regret(&self, c: usize) -> f64 {
        self.cumulative_forecaster_loss - self.comparator_losses[c]
    }

    /// Per-round CSV: `t,y,yhat,loss,cum_loss,regret_<id>..`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "t,y,yhat,loss,cum_loss")?;
        for id in &self.comparator_ids {
            write!(w, ",regret_{id}")?;
        }
        writeln!(w)?;
        for i in 0..self.len() {
            write!(w, "{},{},{},{},{}", i + 1, self.y[i], self.yhat[i], self.loss[i], self.cum_loss[i])?;
            for r in &self.regrets {
                write!(w, ",{}", r[i])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Plays `stream` against `forecaster`, recording regret against every
/// comparator at each round and at the given checkpoints.
pub fn play<F: Forecaster>(
    forecaster: F,
    stream: &Stream,
    comparators: &[&dyn Comparator],
    checkpoints: &[usize],
) -> Result<GameTrace> {
    let mut f = ProtocolGuard::new(forecaster);
    let n = stream.len();
    let c = comparators.len();
    let mut trace = GameTrace {
        forecaster: f.name().to_string(),
        comparator_ids: comparators.iter().map(|g| g.id().to_string()).collect(),
        y: Vec::with_capacity(n),
        yhat: Vec::with_capacity(n),
        yhat_raw: Vec::with_capacity(n),
        loss: Vec::with_capacity(n),
        cum_loss: Vec::with_capacity(n),
        regrets: vec![Vec::with_capacity(n); c],
        cumulative_forecaster_loss: 0.0,
        comparator_losses: vec![0.0; c],
        checkpoints: Vec::new(),
    };
    let mut own = KahanSum::new();
    let mut theirs = vec![KahanSum::new(); c];
    let mut next_cp = checkpoints.iter().peekable();
    for (i, (x, &y)) in stream.inputs().iter().zip(stream.labels()).enumerate() {
        let t = i + 1;
        let at = |e: Error| Error::AtRound { round: t, source: Box::new(e) };
        // Reveal x_t, forecast, then reveal y_t.
        let yhat = f.predict(x).map_err(at)?;
        let raw = f.last_raw().unwrap_or(yhat);
        f.update(x, y).map_err(at)?;
        let loss = (y - yhat) * (y - yhat);
        own.add(loss);
        trace.y.push(y);
        trace.yhat.push(yhat);
        trace.yhat_raw.push(raw);
        trace.loss.push(loss);
        trace.cum_loss.push(own.value());
        for (k, g) in comparators.iter().enumerate() {
            let v = g.eval(x);
            theirs[k].add((y - v) * (y - v));
            trace.regrets[k].push(own.value() - theirs[k].value());
        }
        while next_cp.peek().is_some_and(|&&cp| cp <= t) {
            let cp = *next_cp.next().unwrap();
            if cp == t {
                let cl: Vec<f64> = theirs.iter().map(|s| s.value()).collect();
                trace.checkpoints.push(Checkpoint {
                    t,
                    forecaster_loss: own.value(),
                    regrets: cl.iter().map(|l| own.value() - l).collect(),
                    comparator_losses: cl,
                });
            }
        }
    }
    trace.cumulative_forecaster_loss = own.value();
    trace.comparator_losses = theirs.iter().map(|s| s.value()).collect();
    Ok(trace)
}

/// Log-log regret growth fit with flags for floored checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `floored[i]` is set when the regret at checkpoint `i` was `<= 0`.
    pub floored: Vec<bool>,
}

impl ExponentFit {
    pub fn any_floored(&self) -> bool {
        self.floored.iter().any(|&f| f)
    }
}

/// OLS of `log max(R_n, floor)` on `log n`.
pub fn estimate_exponent(ns: &[usize], regrets: &[f64], floor: f64) -> Result<ExponentFit> {
    if ns.len() != regrets.len() {
        return Err(Error::DimensionMismatch { expected: ns.len(), got: regrets.len() });
    }
    if ns.len() < 4 {
        return Err(Error::InvalidParams(format!("exponent fit needs at least 4 checkpoints, got {}", ns.len())));
    }
    if !(floor > 0.0) {
        return Err(Error::InvalidParams("regret floor must be positive".into()));
    }
    if regrets.iter().all(|&r| r <= 0.0) {
        return Err(Error::InvalidParams("regret is nonpositive at every checkpoint".into()));
    }
    let floored: Vec<bool> = regrets.iter().map(|&r| r <= 0.0).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = regrets.iter().map(|&r| r.max(floor)).collect();
    let LineFit { slope, intercept, r_squared } = log_log_fit(&xs, &ys)?;
    Ok(ExponentFit { slope, intercept, r_squared, floored })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{RepresenterComparator, ZeroComparator};
    use crate::kernel::KernelParams;

    fn toy_stream(n: usize) -> Stream {
        let xs: Vec<Vec<f64>> = (0..n).map(|i| vec![((i * 37) % 101) as f64 / 50.0 - 1.0]).collect();
        let ys: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.7).sin() * 0.8).collect();
        Stream::new(1, xs, ys).unwrap()
    }

    #[test]
    fn zero_versus_zero_has_no_regret() {
        let s = toy_stream(40);
        let z = ZeroComparator { d: 1 };
        let tr = play(ZeroForecaster, &s, &[&z], &[1, 2, 4, 8, 16, 32]).unwrap();
        assert!(tr.checkpoints.iter().all(|c| c.regrets[0] == 0.0));
        assert_eq!(tr.checkpoints.len(), 6);
    }

    #[test]
    fn oracle_has_no_regret() {
        let p = KernelParams::new(1, 1.0).unwrap();
        let f = Arc::new(RepresenterComparator::random(p, 3, 1.0, 2).unwrap());
        let s = toy_stream(30);
        let tr = play(OracleForecaster::new(f.clone()), &s, &[f.as_ref()], &[30]).unwrap();
        assert_eq!(tr.regret(0), 0.0);
    }

    #[test]
    fn kaar_reuse_matches_plain_updates() {
        let p = KernelParams::new(1, 1.0).unwrap();
        let s = toy_stream(60);
        let st = KaarState::new(p, 2.0, Some(1.0)).unwrap();
        let tr = play(KaarForecaster::new(st.clone(), false).unwrap(), &s, &[], &[]).unwrap();
        let mut plain = st;
        for (i, (x, &y)) in s.inputs().iter().zip(s.labels()).enumerate() {
            assert!((plain.predict(x).unwrap() - tr.yhat[i]).abs() < 1e-13);
            plain.update(x, y).unwrap();
        }
    }

    #[test]
    fn guard_rejects_out_of_order_calls() {
        let mut g = ProtocolGuard::new(ZeroForecaster);
        assert!(matches!(g.update(&[0.0], 1.0), Err(Error::Protocol(_))));
        g.predict(&[0.0]).unwrap();
        assert!(matches!(g.predict(&[0.0]), Err(Error::Protocol(_))));
        g.update(&[0.0], 1.0).unwrap();
        assert_eq!(g.round(), 2);
    }

    #[test]
    fn errors_carry_the_round() {
        let p = KernelParams::new(2, 2.0).unwrap();
        let st = KaarState::new(p, 1.0, None).unwrap();
        let s = toy_stream(3);
        let err = play(KaarForecaster::new(st, false).unwrap(), &s, &[], &[]).unwrap_err();
        assert!(matches!(err, Error::AtRound { round: 1, .. }));
    }

    #[test]
    fn trace_csv_header() {
        let s = toy_stream(3);
        let z = ZeroComparator { d: 1 };
        let tr = play(ZeroForecaster, &s, &[&z], &[]).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,y,yhat,loss,cum_loss,regret_zero\n1,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn exponent_examples() {
        let ns = [16, 32, 64, 128, 256];
        let r: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(0.4)).collect();
        let fit = estimate_exponent(&ns, &r, 1e-9).unwrap();
        assert!((fit.slope - 0.4).abs() < 1e-13 && (fit.r_squared - 1.0).abs() < 1e-13);
        let flat = estimate_exponent(&ns, &[7.0; 5], 1e-9).unwrap();
        assert!(flat.slope.abs() < 1e-14);
        let mixed = estimate_exponent(&ns, &[-1.0, 2.0, 3.0, 4.0, 5.0], 1e-3).unwrap();
        assert!(mixed.any_floored() && mixed.floored[0]);
        assert!(estimate_exponent(&ns, &[0.0; 5], 1e-9).is_err());
        assert!(estimate_exponent(&ns[..3], &r[..3], 1e-9).is_err());
    }
}
