//! Exponentially weighted average forecaster over a finite sup-norm net of a
//! one-dimensional Hölder ball.
//!
//! The net for `(beta, M, eps)` on `[-1, 1]` uses `m = ceil((2M/eps)^{1/beta})`
//! equal cells. A Hölder function moves by at most `M (1/m)^beta <= eps/2`
//! between a cell's center and any point of the cell, and rounding the center
//! value to the grid `eps Z` costs another `eps/2`. Adjacent centers are
//! `2/m` apart, so their values differ by at most `eps` when `beta <= 1`,
//! and `floor(v/eps + 1/2)` is monotone and shift-equivariant: rounded
//! indices of adjacent cells differ by at most one. The net therefore holds
//! every grid-valued piecewise constant with unit index steps, and every
//! Hölder(beta, M) function is within `eps` of one of them.

use crate::error::{Error, Result};

/// Refuse nets larger than this unless the caller raises the cap.
pub const DEFAULT_MAX_EXPERTS: usize = 1 << 20;

/// Expert values plus exponential weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertNet {
    n_experts: usize,
    cells: usize,
    // values[cell * n_experts + i]: expert i on `cell`.
    values: Vec<f64>,
    log_weights: Vec<f64>,
    weights: Vec<f64>,
    epsilon: f64,
    eta: f64,
    m: f64,
}

/// Exp-concavity rate of the squared loss on `[-M, M]`.
pub fn default_eta(m: f64) -> f64 {
    1.0 / (8.0 * m * m)
}

/// Net scale `n^{-beta/(beta+d)}` that balances `n eps` against the log-cardinality.
pub fn balanced_epsilon(n: usize, beta: f64, d: usize) -> f64 {
    (n as f64).powf(-beta / (beta + d as f64))
}

/// Number of cells `ceil((2M/eps)^{1/beta})`, guarded against roundoff just
/// above an integer.
pub fn cell_count(beta: f64, m: f64, epsilon: f64) -> usize {
    let raw = (2.0 * m / epsilon).powf(1.0 / beta);
    (raw - 1e-9).ceil().max(1.0) as usize
}

/// Builds the net with `eta = 1/(8 M^2)` and uniform weights.
pub fn build_net(beta: f64, m: f64, epsilon: f64, d: usize) -> Result<ExpertNet> {
    build_net_capped(beta, m, epsilon, d, DEFAULT_MAX_EXPERTS)
}

pub fn build_net_capped(beta: f64, m: f64, epsilon: f64, d: usize, max_experts: usize) -> Result<ExpertNet> {
    if d != 1 {
        return Err(Error::Unsupported(format!("the expert net is implemented for d = 1 only, got d = {d}")));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidParams(format!("net requires beta in (0, 1], got {beta}")));
    }
    if !(m > 0.0) || !m.is_finite() || !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParams(format!(
            "net requires positive finite M and epsilon, got M={m}, epsilon={epsilon}"
        )));
    }
    let eta = default_eta(m);
    if epsilon >= m {
        // The constant 0 is within M <= eps of every function in the ball.
        return Ok(ExpertNet::from_columns(1, 1, vec![0.0], epsilon, eta, m));
    }
    let cells = cell_count(beta, m, epsilon);
    let levels = grid_levels(m, epsilon);
    let count = path_count(levels.len(), cells, max_experts).ok_or_else(|| {
        Error::InvalidParams(format!(
            "net with {cells} cells and {} levels exceeds {max_experts} experts; raise epsilon",
            levels.len()
        ))
    })?;
    let mut values = vec![0.0; count * cells];
    let mut path = vec![0usize; cells];
    let mut next = 0;
    enumerate(&levels, &mut path, 0, &mut |p| {
        for (c, &k) in p.iter().enumerate() {
            values[c * count + next] = levels[k];
        }
        next += 1;
    });
    debug_assert_eq!(next, count);
    Ok(ExpertNet::from_columns(count, cells, values, epsilon, eta, m))
}

// {clamp(k eps, -M, M) : |k| <= ceil(M/eps)}, ascending and deduplicated.
fn grid_levels(m: f64, epsilon: f64) -> Vec<f64> {
    let kmax = (m / epsilon - 1e-9).ceil() as i64;
    let mut levels: Vec<f64> = (-kmax..=kmax).map(|k| (k as f64 * epsilon).clamp(-m, m)).collect();
    levels.dedup();
    levels
}

// Number of index paths of length `cells` over `levels` values with unit steps,
// or None above `cap`.
fn path_count(levels: usize, cells: usize, cap: usize) -> Option<usize> {
    let mut ways = vec![1usize; levels];
    for _ in 1..cells {
        let mut next = vec![0usize; levels];
        for k in 0..levels {
            let mut s = ways[k];
            if k > 0 {
                s = s.checked_add(ways[k - 1])?;
            }
            if k + 1 < levels {
                s = s.checked_add(ways[k + 1])?;
            }
            next[k] = s.min(cap.saturating_add(1));
        }
        ways = next;
    }
    let total = ways.iter().try_fold(0usize, |a, &w| a.checked_add(w))?;
    (total <= cap).then_some(total)
}

fn enumerate(levels: &[f64], path: &mut [usize], depth: usize, emit: &mut impl FnMut(&[usize])) {
    if depth == path.len() {
        emit(path);
        return;
    }
    let (lo, hi) = if depth == 0 {
        (0, levels.len() - 1)
    } else {
        let prev = path[depth - 1];
        (prev.saturating_sub(1), (prev + 1).min(levels.len() - 1))
    };
    for k in lo..=hi {
        path[depth] = k;
        enumerate(levels, path, depth + 1, emit);
    }
}

impl ExpertNet {
    fn from_columns(n: usize, cells: usize, values: Vec<f64>, epsilon: f64, eta: f64, m: f64) -> Self {
        let w = 1.0 / n as f64;
        ExpertNet { n_experts: n, cells, values, log_weights: vec![0.0; n], weights: vec![w; n], epsilon, eta, m }
    }

    /// Net of constant experts, for tests and toy games.
    pub fn constants(levels: &[f64], m: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Empty("an expert net needs at least one expert"));
        }
        if levels.iter().any(|v| !(v.abs() <= m)) {
            return Err(Error::InvalidParams("constant experts must lie in [-M, M]".into()));
        }
        Ok(Self::from_columns(levels.len(), 1, levels.to_vec(), 0.0, default_eta(m), m))
    }

    /// Replaces the learning rate.
    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParams(format!("eta must be positive, got {eta}")));
        }
        self.eta = eta;
        Ok(self)
    }

    /// Replaces the weights, which must be a probability vector.
    pub fn with_weights(mut self, weights: &[f64]) -> Result<Self> {
        if weights.len() != self.n_experts {
            return Err(Error::DimensionMismatch { expected: self.n_experts, got: weights.len() });
        }
        let total: f64 = weights.iter().sum();
        if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams("weights must be a probability vector".into()));
        }
        self.weights = weights.to_vec();
        self.log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.n_experts
    }

    pub fn is_empty(&self) -> bool {
        self.n_experts == 0
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn label_bound(&self) -> f64 {
        self.m
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `ln N / eta`, the regret of the weighted average against the best expert.
    pub fn aggregation_bound(&self) -> f64 {
        (self.n_experts as f64).ln() / self.eta
    }

    /// Cell of `x`; points outside `[-1, 1]` use the nearest boundary cell.
    pub fn cell_of(&self, x: f64) -> usize {
        let u = ((x + 1.0) * 0.5 * self.cells as f64).floor();
        if u.is_nan() || u < 0.0 {
            0
        } else {
            (u as usize).min(self.cells - 1)
        }
    }

    fn column(&self, x: &[f64]) -> Result<&[f64]> {
        crate::error::check_dim(1, x.len())?;
        let c = self.cell_of(x[0]);
        Ok(&self.values[c * self.n_experts..(c + 1) * self.n_experts])
    }

    /// Value of expert `i` at `x`.
    pub fn expert_value(&self, i: usize, x: f64) -> f64 {
        self.values[self.cell_of(x) * self.n_experts + i]
    }

    /// Values of all experts at `x`.
    pub fn expert_values(&self, x: &[f64]) -> Result<&[f64]> {
        self.column(x)
    }
}

/// Weighted-average forecast `sum_i w_i f_i(x)`.
pub fn ewa_predict(net: &ExpertNet, x: &[f64]) -> Result<f64> {
    let col = net.column(x)?;
    Ok(col.iter().zip(&net.weights).map(|(v, w)| v * w).sum())
}

/// `w_i <- w_i exp(-eta (y - f_i(x))^2)`, renormalized in log space.
pub fn ewa_update(net: &mut ExpertNet, x: &[f64], y: f64) -> Result<()> {
    if !y.is_finite() {
        return Err(Error::InvalidParams(format!("label must be finite, got {y}")));
    }
    let n = net.n_experts;
    crate::error::check_dim(1, x.len())?;
    let c = net.cell_of(x[0]);
    let col = &net.values[c * n..(c + 1) * n];
    let eta = net.eta;
    for (lw, v) in net.log_weights.iter_mut().zip(col) {
        *lw -= eta * (y - v) * (y - v);
    }
    let top = net.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (w, lw) in net.weights.iter_mut().zip(net.log_weights.iter_mut()) {
        *lw -= top;
        *w = lw.exp();
        total += *w;
    }
    let log_total = total.ln();
    for (w, lw) in net.weights.iter_mut().zip(net.log_weights.iter_mut()) {
        *w /= total;
        *lw -= log_total;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_scale_gives_one_expert() {
        let net = build_net(1.0, 1.0, 2.0, 1).unwrap();
        assert_eq!(net.len(), 1);
        assert_eq!(ewa_predict(&net, &[0.3]).unwrap(), 0.0);
        assert_eq!(net.aggregation_bound(), 0.0);
    }

    #[test]
    fn half_scale_cardinality() {
        let net = build_net(1.0, 1.0, 0.5, 1).unwrap();
        assert_eq!(net.cells(), 4);
        let log_n = (net.len() as f64).ln();
        assert!((0.5..=8.0).contains(&log_n), "N = {}", net.len());
    }

    #[test]
    fn rejects_unsupported() {
        assert!(matches!(build_net(1.0, 1.0, 0.5, 2), Err(Error::Unsupported(_))));
        assert!(build_net(1.5, 1.0, 0.5, 1).is_err());
        assert!(build_net(1.0, 1.0, 0.0, 1).is_err());
        assert!(build_net_capped(1.0, 1.0, 0.05, 1, 1000).is_err());
    }

    #[test]
    fn predict_examples() {
        let net = ExpertNet::constants(&[1.0, -1.0], 1.0).unwrap();
        assert_eq!(ewa_predict(&net, &[0.0]).unwrap(), 0.0);
        let single = ExpertNet::constants(&[0.3], 1.0).unwrap();
        assert_eq!(ewa_predict(&single, &[0.9]).unwrap(), 0.3);
        let skew = net.with_weights(&[0.75, 0.25]).unwrap();
        assert_eq!(ewa_predict(&skew, &[0.0]).unwrap(), 0.5);
    }

    #[test]
    fn update_examples() {
        let mut same = ExpertNet::constants(&[0.2, 0.2, 0.2], 1.0).unwrap();
        ewa_update(&mut same, &[0.0], 1.0).unwrap();
        assert!(same.weights().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));

        let mut two = ExpertNet::constants(&[0.0, 1.0], 1.0).unwrap();
        ewa_update(&mut two, &[0.0], 1.0).unwrap();
        let ratio = two.weights()[0] / two.weights()[1];
        assert!((ratio - (-0.125f64).exp()).abs() < 1e-15);
        assert!(ewa_update(&mut two, &[0.0], f64::NAN).is_err());
    }

    #[test]
    fn levels_are_clamped_and_unique() {
        assert_eq!(grid_levels(1.0, 0.5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(grid_levels(1.0, 0.4), vec![-1.0, -0.8, -0.4, 0.0, 0.4, 0.8, 1.0]);
    }

    #[test]
    fn path_count_matches_enumeration() {
        let levels = grid_levels(1.0, 0.5);
        let mut seen = 0;
        enumerate(&levels, &mut [0; 4], 0, &mut |_| seen += 1);
        assert_eq!(Some(seen), path_count(levels.len(), 4, usize::MAX));
    }

    #[test]
    fn cell_lookup_boundaries() {
        let net = build_net(1.0, 1.0, 0.5, 1).unwrap();
        assert_eq!(net.cell_of(-1.0), 0);
        assert_eq!(net.cell_of(1.0), 3);
        assert_eq!(net.cell_of(-0.5), 1);
        assert_eq!(net.cell_of(7.0), 3);
    }
}
