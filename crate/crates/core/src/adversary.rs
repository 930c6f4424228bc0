//! Comparator functions and data streams for the online game.
//!
//! Two comparator families come with the crate: finite kernel expansions with
//! exact RKHS norms, and the bump class of `2 n^{1/d}` disjoint smooth bumps
//! per axis used to build hard label sequences.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Mutex, OnceLock};

use crate::error::{check_dim, Error, Result};
use crate::kernel::{distance, gram, KernelParams};
use crate::linalg::dot;
use crate::rng::{streams, StreamRng};

/// A fixed function the forecaster is measured against.
pub trait Comparator: Send + Sync {
    /// Short name used in CSV column headers.
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// `f(x)`; `x` must have length [`Comparator::dim`].
    fn eval(&self, x: &[f64]) -> f64;
    /// Squared RKHS norm when it is known exactly.
    fn norm_sq(&self) -> Option<f64> {
        None
    }
}

/// `f = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroComparator {
    pub d: usize,
}

impl Comparator for ZeroComparator {
    fn id(&self) -> &str {
        "zero"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn norm_sq(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(x) = sum_i c_i k(z_i, x)` with `|f|^2 = c^T K c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresenterComparator {
    params: KernelParams,
    centers: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    norm_sq: f64,
}

impl RepresenterComparator {
    pub fn new(params: KernelParams, centers: Vec<Vec<f64>>, coeffs: Vec<f64>) -> Result<Self> {
        check_dim(centers.len(), coeffs.len())?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("non-finite coefficient".into()));
        }
        let k = gram(&params, &centers)?;
        let n = centers.len();
        let norm_sq = (0..n).map(|i| coeffs[i] * dot(&k.entries()[i * n..(i + 1) * n], &coeffs)).sum::<f64>().max(0.0);
        Ok(RepresenterComparator { params, centers, coeffs, norm_sq })
    }

    /// `n_centers` uniform centers in `[-1, 1]^d` with Gaussian coefficients,
    /// rescaled to `|f|^2 = norm_sq`.
    pub fn random(params: KernelParams, n_centers: usize, norm_sq: f64, seed: u64) -> Result<Self> {
        if !(norm_sq >= 0.0) || !norm_sq.is_finite() {
            return Err(Error::InvalidParams(format!("target norm must be nonnegative, got {norm_sq}")));
        }
        let mut rng = StreamRng::new(seed, streams::COMPARATOR);
        let centers: Vec<Vec<f64>> = (0..n_centers).map(|_| rng.cube_point(params.d())).collect();
        let coeffs: Vec<f64> = (0..n_centers).map(|_| rng.normal()).collect();
        let f = Self::new(params, centers, coeffs)?;
        f.rescaled_to(norm_sq)
    }

    /// Same centers with coefficients scaled so that `|f|^2 = norm_sq`.
    pub fn rescaled_to(&self, norm_sq: f64) -> Result<Self> {
        if self.norm_sq == 0.0 {
            return if norm_sq == 0.0 {
                Ok(self.clone())
            } else {
                Err(Error::InvalidParams("cannot rescale a zero expansion".into()))
            };
        }
        let scale = (norm_sq / self.norm_sq).sqrt();
        let coeffs = self.coeffs.iter().map(|c| c * scale).collect();
        Self::new(self.params, self.centers.clone(), coeffs)
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `|f|_inf <= |f| kappa` by the reproducing property.
    pub fn sup_bound(&self) -> f64 {
        (self.norm_sq * self.params.kappa_sq()).sqrt()
    }
}

impl Comparator for RepresenterComparator {
    fn id(&self) -> &str {
        "representer"
    }

    fn dim(&self) -> usize {
        self.params.d()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.centers.iter().zip(&self.coeffs).map(|(z, c)| c * self.params.radial(distance(z, x))).sum()
    }

    fn norm_sq(&self) -> Option<f64> {
        Some(self.norm_sq)
    }
}

const BUMP_OUTER: f64 = 0.5;
const BUMP_INNER: f64 = 0.25;

fn h(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / (t * t)).exp()
    } else {
        0.0
    }
}

// Smooth step: 0 for t <= 0, 1 for t >= 1.
fn smooth_step(t: f64) -> f64 {
    let a = h(t);
    let b = h(1.0 - t);
    if a == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Radial profile `G(r)` of the mollifier: `1/2` on `r <= 1/4`, `0` on `r >= 1/2`.
pub fn mollifier_profile(r: f64) -> f64 {
    let a2 = BUMP_INNER * BUMP_INNER;
    let c2 = BUMP_OUTER * BUMP_OUTER;
    0.5 * (1.0 - smooth_step((r * r - a2) / (c2 - a2)))
}

/// `g(x) = 1/2 (1 - sigma((|x|^2 - a^2) / (c^2 - a^2)))` with `a = 1/4`, `c = 1/2`.
pub fn mollifier_g(x: &[f64]) -> f64 {
    mollifier_profile(x.iter().map(|v| v * v).sum::<f64>().sqrt())
}

// Step of the finite-difference grid for the mollifier norm.
const NORM_STEP: f64 = 2.5e-5;
// Points per unit length for the Hölder-quotient pair search.
const QUOTIENT_DENSITY: f64 = 1000.0;

/// Numerical estimate of `|g|_{W^beta_inf}` for `0 < beta <= 2`.
///
/// Maximum of the sup norms of all partial derivatives of order `<= floor(beta)`
/// and, for fractional `beta`, the Hölder quotient of the top-order derivative
/// with exponent `beta - floor(beta)` over sampled pairs on a line through the
/// origin. Derivatives come from central differences of the radial profile;
/// for a radial function the order-two partials are
/// `G'' u_i u_j + G'/r (delta_ij - u_i u_j)` with `|u| = 1`. Cached per `(d, beta)`.
pub fn g_norm(d: usize, beta: f64) -> Result<f64> {
    if d == 0 || !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::Unsupported(format!(
            "mollifier norm is estimated for d >= 1 and 0 < beta <= 2, got d={d}, beta={beta}"
        )));
    }
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (d, beta.to_bits());
    if let Some(&v) = cache.lock().expect("cache poisoned").get(&key) {
        return Ok(v);
    }
    let v = estimate_g_norm(d, beta);
    cache.lock().expect("cache poisoned").insert(key, v);
    Ok(v)
}

fn estimate_g_norm(d: usize, beta: f64) -> f64 {
    let h = NORM_STEP;
    let steps = (0.55 / h).ceil() as usize;
    let g = |r: f64| mollifier_profile(r.abs());
    let d1 = |r: f64| (g(r + h) - g(r - h)) / (2.0 * h);
    let d2 = |r: f64| (g(r + h) - 2.0 * g(r) + g(r - h)) / (h * h);
    let order = beta.floor() as usize;
    let frac = beta - order as f64;

    let mut norm = mollifier_profile(0.0);
    if order >= 1 {
        for i in 1..=steps {
            norm = norm.max(d1(i as f64 * h).abs());
        }
    }
    if order >= 2 {
        for i in 1..=steps {
            let r = i as f64 * h;
            let (gp, gpp) = (d1(r), d2(r));
            let mut v = gpp.abs().max((gp / r).abs());
            if d >= 2 {
                v = v.max(0.5 * (gpp - gp / r).abs());
            }
            norm = norm.max(v);
        }
    }
    if frac > 0.0 {
        // Top-order derivative along the line x = s e_1, s in [-0.6, 0.6].
        let top = |s: f64| if order == 0 { g(s) } else { d1(s) };
        let m = (1.2 * QUOTIENT_DENSITY) as usize;
        let pts: Vec<(f64, f64)> = (0..=m)
            .map(|i| {
                let s = -0.6 + 1.2 * i as f64 / m as f64;
                (s, top(s))
            })
            .collect();
        for (i, &(s1, v1)) in pts.iter().enumerate() {
            for &(s2, v2) in &pts[i + 1..] {
                norm = norm.max((v1 - v2).abs() / (s2 - s1).powf(frac));
            }
        }
    }
    norm
}

/// Cells per axis `floor(2 n^{1/d})`, guarded against roundoff below an integer.
pub fn cells_per_axis(n_grid: usize, d: usize) -> usize {
    (2.0 * (n_grid as f64).powf(1.0 / d as f64) + 1e-9).floor() as usize
}

/// `f(x) = A sum_t c_t g(n^{1/d} (x - a_t))` with `A = M n^{-beta/d} / (4 |g|_{W^beta_inf})`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpComparator {
    n_grid: usize,
    d: usize,
    beta: f64,
    m: f64,
    signs: Vec<f64>,
    g_norm: f64,
    per_axis: usize,
    cell: f64,
    amplitude: f64,
}

/// Builds the bump comparator; `signs` has one `+-1` entry per cube.
pub fn bump_comparator(n_grid: usize, d: usize, beta: f64, m: f64, signs: Vec<f64>) -> Result<BumpComparator> {
    if n_grid == 0 || d == 0 {
        return Err(Error::InvalidParams("bump class needs n_grid >= 1 and d >= 1".into()));
    }
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::InvalidParams(format!("label bound must be positive, got {m}")));
    }
    let per_axis = cells_per_axis(n_grid, d);
    let count = per_axis.checked_pow(d as u32).ok_or_else(|| Error::InvalidParams("too many cubes".into()))?;
    check_dim(count, signs.len())?;
    if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(Error::InvalidParams("bump signs must be +1 or -1".into()));
    }
    let g_norm = g_norm(d, beta)?;
    let nf = n_grid as f64;
    let amplitude = m * nf.powf(-beta / d as f64) / (4.0 * g_norm);
    Ok(BumpComparator { n_grid, d, beta, m, signs, g_norm, per_axis, cell: nf.powf(-1.0 / d as f64), amplitude })
}

impl BumpComparator {
    pub fn n_grid(&self) -> usize {
        self.n_grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn label_bound(&self) -> f64 {
        self.m
    }

    pub fn signs(&self) -> &[f64] {
        &self.signs
    }

    pub fn g_norm(&self) -> f64 {
        self.g_norm
    }

    /// Prefactor `A` in front of the bump sum.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Number of cubes `N = floor(2 n^{1/d})^d`.
    pub fn n_cubes(&self) -> usize {
        self.signs.len()
    }

    /// Cube side `n^{-1/d}`.
    pub fn cell(&self) -> f64 {
        self.cell
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// Center of cube `t` in lexicographic order, first axis most significant.
    pub fn center(&self, t: usize) -> Vec<f64> {
        let mut idx = vec![0usize; self.d];
        let mut rest = t;
        for slot in idx.iter_mut().rev() {
            *slot = rest % self.per_axis;
            rest /= self.per_axis;
        }
        idx.iter().map(|&k| self.cell * (0.5 + k as f64) - 1.0).collect()
    }

    /// Cube containing `x`, or `None` outside the union.
    pub fn cube_of(&self, x: &[f64]) -> Option<usize> {
        let mut t = 0usize;
        for &xi in x {
            let u = ((xi + 1.0) / self.cell).floor();
            if !(u >= 0.0 && u < self.per_axis as f64) {
                return None;
            }
            t = t * self.per_axis + u as usize;
        }
        Some(t)
    }
}

impl Comparator for BumpComparator {
    fn id(&self) -> &str {
        "bump"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64]) -> f64 {
        // Each bump is supported in the open ball inscribed in its own cube.
        let Some(t) = self.cube_of(x) else { return 0.0 };
        let a = self.center(t);
        let r = distance(x, &a) / self.cell;
        self.amplitude * self.signs[t] * mollifier_profile(r)
    }
}

/// A finite sequence of rounds `(x_t, y_t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    d: usize,
    inputs: Vec<Vec<f64>>,
    labels: Vec<f64>,
}

impl Stream {
    pub fn new(d: usize, inputs: Vec<Vec<f64>>, labels: Vec<f64>) -> Result<Self> {
        check_dim(inputs.len(), labels.len())?;
        for x in &inputs {
            check_dim(d, x.len())?;
        }
        if labels.iter().chain(inputs.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("stream contains a non-finite value".into()));
        }
        Ok(Stream { d, inputs, labels })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// First `n` rounds.
    pub fn prefix(&self, n: usize) -> Stream {
        let n = n.min(self.len());
        Stream { d: self.d, inputs: self.inputs[..n].to_vec(), labels: self.labels[..n].to_vec() }
    }

    /// CSV with header `t,x_1,..,x_d,y` and 1-based `t`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let cols: Vec<String> = (1..=self.d).map(|i| format!("x_{i}")).collect();
        writeln!(w, "t,{},y", cols.join(","))?;
        for (t, (x, y)) in self.inputs.iter().zip(&self.labels).enumerate() {
            let xs: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{},{}", t + 1, xs.join(","), y)?;
        }
        Ok(())
    }

    /// Parses the format written by [`Stream::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Stream> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(Error::Empty("stream CSV has no header"))??;
        let fields: Vec<&str> = header.trim().split(',').collect();
        let d = fields.len().saturating_sub(2);
        let valid = fields.len() >= 3
            && fields[0] == "t"
            && fields[fields.len() - 1] == "y"
            && (1..=d).all(|i| fields[i] == format!("x_{i}"));
        if !valid {
            return Err(Error::Config(format!("unexpected stream header {header:?}")));
        }
        let (mut inputs, mut labels) = (Vec::new(), Vec::new());
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .skip(1)
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("stream line {}: {e}", lineno + 2)))?;
            if vals.len() != d + 1 {
                return Err(Error::Config(format!("stream line {} has {} values", lineno + 2, vals.len())));
            }
            labels.push(vals[d]);
            inputs.push(vals[..d].to_vec());
        }
        Stream::new(d, inputs, labels)
    }
}

/// Centers of the bump cubes in order, labelled `+-M` by random signs, with
/// the bump comparator carrying the same signs.
pub fn shattering_stream(n_grid: usize, d: usize, m: f64, beta: f64, seed: u64) -> Result<(Stream, BumpComparator)> {
    let per_axis = cells_per_axis(n_grid, d);
    let count = per_axis.checked_pow(d as u32).ok_or_else(|| Error::InvalidParams("too many cubes".into()))?;
    let mut rng = StreamRng::new(seed, streams::LABELS);
    let signs: Vec<f64> = (0..count).map(|_| rng.sign()).collect();
    let f = bump_comparator(n_grid, d, beta, m, signs)?;
    let inputs: Vec<Vec<f64>> = (0..count).map(|t| f.center(t)).collect();
    let labels: Vec<f64> = f.signs().iter().map(|s| s * m).collect();
    Ok((Stream::new(d, inputs, labels)?, f))
}

/// `x_t ~ U[-1, 1]^d`, `y_t = clamp(f(x_t) + N(0, sd^2), -M, M)`.
pub fn iid_stream(f: &dyn Comparator, noise_sd: f64, n: usize, m: f64, seed: u64) -> Result<Stream> {
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidParams(format!("noise sd must be nonnegative, got {noise_sd}")));
    }
    if !(m > 0.0) {
        return Err(Error::InvalidParams(format!("label bound must be positive, got {m}")));
    }
    let d = f.dim();
    let mut xr = StreamRng::new(seed, streams::INPUTS);
    let mut nr = StreamRng::new(seed, streams::NOISE);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| xr.cube_point(d)).collect();
    let labels = inputs
        .iter()
        .map(|x| {
            let noise = if noise_sd > 0.0 { noise_sd * nr.normal() } else { 0.0 };
            (f.eval(x) + noise).clamp(-m, m)
        })
        .collect();
    Stream::new(d, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_examples() {
        assert_eq!(mollifier_g(&[0.0]), 0.5);
        assert_eq!(mollifier_g(&[0.6]), 0.0);
        assert_eq!(mollifier_g(&[0.0, 0.6, 0.0]), 0.0);
        assert_eq!(mollifier_g(&[0.25]), 0.5);
        let mid = mollifier_g(&[0.4]);
        assert!(mid > 0.0 && mid < 0.5);
    }

    #[test]
    fn mollifier_is_monotone_in_radius() {
        let mut prev = 0.5;
        for i in 0..=600 {
            let v = mollifier_profile(i as f64 * 0.001);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
    }

    #[test]
    fn representer_unit_coefficient() {
        let p = KernelParams::new(2, 2.0).unwrap();
        let f = RepresenterComparator::new(p, vec![vec![0.1, 0.2]], vec![1.0]).unwrap();
        assert_eq!(f.norm_sq(), Some(p.kappa_sq()));
        assert_eq!(f.eval(&[0.1, 0.2]), p.kappa_sq());
    }

    #[test]
    fn random_representer_hits_target_norm() {
        let p = KernelParams::new(1, 1.0).unwrap();
        let f = RepresenterComparator::random(p, 6, 3.5, 11).unwrap();
        assert!((f.norm_sq().unwrap() - 3.5).abs() < 1e-12);
        for i in 0..50 {
            let x = [-1.0 + 0.04 * i as f64];
            assert!(f.eval(&x).abs() <= f.sup_bound() + 1e-12);
        }
    }

    #[test]
    fn bump_geometry() {
        let n = 16;
        assert_eq!(cells_per_axis(n, 2), 8);
        assert_eq!(cells_per_axis(64, 1), 128);
        assert_eq!(cells_per_axis(1000, 3), 20);
        let f = bump_comparator(n, 2, 1.0, 2.0, vec![1.0; 64]).unwrap();
        assert_eq!(f.center(0), vec![-0.875, -0.875]);
        assert_eq!(f.center(1), vec![-0.875, -0.625]);
        assert_eq!(f.center(8), vec![-0.625, -0.875]);
        assert_eq!(f.cube_of(&f.center(37)), Some(37));
        assert!(bump_comparator(n, 2, 1.0, 2.0, vec![1.0; 63]).is_err());
    }

    #[test]
    fn bump_center_value_and_support() {
        let signs: Vec<f64> = (0..128).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let f = bump_comparator(64, 1, 0.5, 1.0, signs).unwrap();
        for t in [0, 1, 5, 127] {
            let expect = f.signs()[t] * f.amplitude() * 0.5;
            assert!((f.eval(&f.center(t)) - expect).abs() < 1e-15);
        }
        // Cube boundaries lie outside every support ball.
        assert_eq!(f.eval(&[-1.0 + f.cell()]), 0.0);
        assert_eq!(f.eval(&[1.5]), 0.0);
    }

    #[test]
    fn amplitude_scaling_under_refinement() {
        let a = bump_comparator(16, 2, 1.0, 1.0, vec![1.0; 64]).unwrap();
        let b = bump_comparator(32, 2, 1.0, 1.0, vec![1.0; cells_per_axis(32, 2).pow(2)]).unwrap();
        let ratio = b.amplitude() / a.amplitude();
        assert!((ratio - 2f64.powf(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn g_norm_reasonable() {
        let n0 = g_norm(1, 0.5).unwrap();
        let n1 = g_norm(1, 1.0).unwrap();
        let n2 = g_norm(2, 2.0).unwrap();
        assert!(n0 >= 0.5 && n1 > n0 && n2 > n1, "{n0} {n1} {n2}");
        assert_eq!(g_norm(1, 1.0).unwrap(), n1);
        assert!(g_norm(1, 2.5).is_err());
    }

    #[test]
    fn shattering_stream_shape() {
        let (s, f) = shattering_stream(64, 1, 1.0, 0.5, 3).unwrap();
        assert_eq!(s.len(), 128);
        assert!(s.inputs().iter().flatten().all(|v| v.abs() <= 1.0));
        let comp: f64 = s.inputs().iter().zip(s.labels()).map(|(x, y)| (y - f.eval(x)).powi(2)).sum();
        let zero: f64 = s.labels().iter().map(|y| y * y).sum();
        assert!(comp < zero);
    }

    #[test]
    fn iid_stream_noise_free_and_reproducible() {
        let p = KernelParams::new(1, 1.0).unwrap();
        let f = RepresenterComparator::random(p, 4, 0.2, 5).unwrap();
        let s = iid_stream(&f, 0.0, 50, 1.0, 9).unwrap();
        for (x, y) in s.inputs().iter().zip(s.labels()) {
            assert_eq!(*y, f.eval(x));
        }
        assert_eq!(iid_stream(&f, 0.1, 50, 1.0, 9).unwrap(), iid_stream(&f, 0.1, 50, 1.0, 9).unwrap());
        let zero = iid_stream(&ZeroComparator { d: 2 }, 0.0, 10, 1.0, 1).unwrap();
        assert!(zero.labels().iter().all(|&y| y == 0.0));
    }

    #[test]
    fn stream_csv_round_trip() {
        let s = Stream::new(2, vec![vec![0.1, -0.3], vec![1.0 / 3.0, 0.0]], vec![0.5, -1.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_1,x_2,y\n1,0.1,-0.3,0.5\n"));
        assert_eq!(Stream::read_csv(&buf[..]).unwrap(), s);
        assert!(Stream::read_csv(&b"a,b\n"[..]).is_err());
    }
}
