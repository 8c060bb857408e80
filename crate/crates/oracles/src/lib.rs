//! Slow, direct reference implementations for cross-checking `uhdiqa-core`.
//!
//! Nothing here calls into the production code paths it is compared with:
//! ranks are counted pairwise, correlations use textbook sums, resampling is
//! evaluated one output value at a time and fragments are located by
//! exhaustive search. Core types are used only as data containers.
//!
//! Recorded outputs live in `golden/`; see `golden/README.md` for the
//! schemas.

use std::fmt;

use uhdiqa_core::loss::Objective;
use uhdiqa_core::{BranchInputs, Error, Image, PreprocessConfig, QualityModel};

/// Outcome of one oracle comparison campaign.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub cases: usize,
    pub pass: bool,
    /// Description of the first case outside tolerance.
    pub first_failure: Option<String>,
}

impl OracleReport {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            max_abs_err: 0.0,
            max_rel_err: 0.0,
            cases: 0,
            pass: true,
            first_failure: None,
        }
    }

    /// Records a comparison; `ok` decides pass/fail for this case.
    pub fn record(&mut self, abs_err: f64, rel_err: f64, ok: bool, describe: impl FnOnce() -> String) {
        self.cases += 1;
        self.max_abs_err = self.max_abs_err.max(abs_err);
        self.max_rel_err = self.max_rel_err.max(rel_err);
        if !ok {
            self.pass = false;
            if self.first_failure.is_none() {
                self.first_failure = Some(describe());
            }
        }
    }

    /// Compares against a tolerance on absolute error.
    pub fn compare(&mut self, expected: f64, actual: f64, tol: f64, what: impl FnOnce() -> String) {
        let abs = (expected - actual).abs();
        let rel = abs / expected.abs().max(f64::MIN_POSITIVE);
        let ok = abs <= tol || (expected.is_nan() && actual.is_nan());
        self.record(abs, rel, ok, || format!("{}: expected {expected}, got {actual}", what()));
    }

    pub fn merge(&mut self, other: &OracleReport) {
        self.cases += other.cases;
        self.max_abs_err = self.max_abs_err.max(other.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(other.max_rel_err);
        if !other.pass {
            self.pass = false;
            if self.first_failure.is_none() {
                self.first_failure = other.first_failure.clone();
            }
        }
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} cases={} max_abs={:.3e} max_rel={:.3e}",
            self.name,
            if self.pass { "pass" } else { "FAIL" },
            self.cases,
            self.max_abs_err,
            self.max_rel_err
        )?;
        if let Some(msg) = &self.first_failure {
            write!(f, " first failure: {msg}")?;
        }
        Ok(())
    }
}

fn cell_bounds(len: usize, n: usize, i: usize) -> (usize, usize) {
    let start = (i as u128 * len as u128 / n as u128) as usize;
    let end = ((i + 1) as u128 * len as u128 / n as u128) as usize;
    (start, end)
}

fn block_matches(img: &Image, frag: &Image, top: usize, left: usize, fr: usize, fc: usize, p: usize) -> bool {
    for r in 0..p {
        for c in 0..p {
            if img.pixel(top + r, left + c) != frag.pixel(fr + r, fc + c) {
                return false;
            }
        }
    }
    true
}

/// Exhaustively looks for every `mini_patch` block of `fragment` inside its
/// own grid cell of `img`. One case per block.
pub fn oracle_fragment_check_view(img: &Image, fragment: &Image, cfg: &PreprocessConfig) -> OracleReport {
    let mut report = OracleReport::new("fragment");
    let (n, p) = (cfg.grid_n, cfg.mini_patch);
    if fragment.dims() != (n * p, n * p) {
        report.record(f64::INFINITY, f64::INFINITY, false, || {
            format!("fragment is {}x{}, expected {}x{}", fragment.height(), fragment.width(), n * p, n * p)
        });
        return report;
    }
    for i in 0..n {
        let (r0, r1) = cell_bounds(img.height(), n, i);
        for j in 0..n {
            let (c0, c1) = cell_bounds(img.width(), n, j);
            let mut found = false;
            'search: for top in r0..=r1.saturating_sub(p) {
                for left in c0..=c1.saturating_sub(p) {
                    if top + p <= r1 && left + p <= c1 && block_matches(img, fragment, top, left, i * p, j * p, p) {
                        found = true;
                        break 'search;
                    }
                }
            }
            let err = if found { 0.0 } else { 1.0 };
            report.record(err, err, found, || format!("block ({i}, {j}) not found in cell rows {r0}..{r1} cols {c0}..{c1}"));
        }
    }
    report
}

/// Builds the fragment with the production code and checks it.
pub fn oracle_fragment_check(img: &Image, cfg: &PreprocessConfig, seed: u64) -> OracleReport {
    use uhdiqa_core::preprocess::fragment_view;
    match fragment_view(img, cfg, uhdiqa_core::SampleMode::Train { seed }) {
        Ok(frag) => oracle_fragment_check_view(img, &frag, cfg),
        Err(e) => {
            let mut r = OracleReport::new("fragment");
            r.record(f64::INFINITY, f64::INFINITY, false, || format!("fragment construction failed: {e}"));
            r
        }
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), Error> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!("{} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::DegenerateBatch(x.len()));
    }
    Ok(())
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall tau-b by counting all `n(n-1)/2` pairs.
pub fn oracle_tau_b(x: &[f64], y: &[f64]) -> Result<f64, Error> {
    check_pair(x, y)?;
    let n = x.len();
    let (mut s, mut untied_x, mut untied_y) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let a = sign(x[i] - x[j]);
            let b = sign(y[i] - y[j]);
            s += a * b;
            untied_x += a.abs();
            untied_y += b.abs();
        }
    }
    if untied_x == 0 || untied_y == 0 {
        return Err(Error::UndefinedCorrelation("all values tied".into()));
    }
    Ok(s as f64 / ((untied_x as f64) * (untied_y as f64)).sqrt())
}

/// Average rank (1-based) of every value, by counting smaller and equal values.
pub fn oracle_ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation as covariance over the product of standard deviations.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> Result<f64, Error> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance".into()));
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Spearman correlation: Pearson on average ranks.
pub fn oracle_srcc(x: &[f64], y: &[f64]) -> Result<f64, Error> {
    check_pair(x, y)?;
    oracle_pearson(&oracle_ranks(x), &oracle_ranks(y))
}

/// Standard normal CDF from its power series (`|z| < 6`) or a continued
/// fraction for the tails, in double-double accumulation.
pub fn oracle_phi(z: f64) -> f64 {
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    if z.abs() < 6.0 {
        // Φ(z) = ½ + φ(z) Σ z^(2k+1) / (1·3·…·(2k+1))
        let (mut term, mut sum, mut comp) = (z, z, 0.0f64);
        let mut k = 1.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            term *= z * z / (2.0 * k + 1.0);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            k += 1.0;
        }
        0.5 + pdf * sum
    } else {
        // Laplace continued fraction for the upper tail Q(|z|)
        let x = z.abs();
        let mut frac = x;
        for k in (1..200).rev() {
            frac = x + k as f64 / frac;
        }
        let tail = pdf / frac;
        if z > 0.0 {
            1.0 - tail
        } else {
            tail
        }
    }
}

/// Bilinear resampling, half-pixel centers, source coordinates clamped to
/// the image. Returns values in row-major, channel-minor order.
pub fn oracle_bilinear(img: &Image, out_h: usize, out_w: usize) -> Vec<f64> {
    let (h, w) = img.dims();
    let mut out = Vec::with_capacity(out_h * out_w * 3);
    for i in 0..out_h {
        let sy = ((i as f64 + 0.5) * (h as f64 / out_h as f64) - 0.5).clamp(0.0, (h - 1) as f64);
        for j in 0..out_w {
            let sx = ((j as f64 + 0.5) * (w as f64 / out_w as f64) - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for ch in 0..3 {
                let p = |r: usize, c: usize| img.pixel(r, c)[ch] as f64;
                out.push(
                    (1.0 - fy) * ((1.0 - fx) * p(y0, x0) + fx * p(y0, x1)) + fy * ((1.0 - fx) * p(y1, x0) + fx * p(y1, x1)),
                );
            }
        }
    }
    out
}

/// A model, its batch and the pair list a finite-difference check runs on.
pub struct GradProblem<'a> {
    pub model: &'a QualityModel<f64>,
    pub inputs: &'a [BranchInputs],
    pub mos: &'a [f64],
    pub pairs: &'a [(usize, usize)],
    pub objective: Objective,
}

/// Mean pair loss recomputed from scalar predictions.
fn loss_at(problem: &GradProblem<'_>, params: &[f64]) -> f64 {
    let model = QualityModel::from_params(*problem.model.spec(), params.to_vec()).expect("same architecture");
    let scores: Vec<f64> = problem.inputs.iter().map(|x| model.predict(x).expect("valid input")).collect();
    let (alpha, beta) = (problem.objective.weights.alpha, problem.objective.weights.beta);
    let mut total = 0.0;
    for &(a, b) in problem.pairs {
        let (qx, qy, px, py) = (problem.mos[a], problem.mos[b], scores[a], scores[b]);
        let label = match problem.objective.ties {
            uhdiqa_core::loss::TiePolicy::Soft { eps } if (qx - qy).abs() < eps => 0.5,
            _ if qx >= qy => 0.0,
            _ => 1.0,
        };
        // probability that y is preferred
        let p_hat = oracle_phi((py - px) / std::f64::consts::SQRT_2).clamp(1e-12, 1.0 - 1e-12);
        let fidelity = 1.0 - (label * p_hat).sqrt() - ((1.0 - label) * (1.0 - p_hat)).sqrt();
        let mse = (qx - px).powi(2) + (qy - py).powi(2);
        total += alpha * fidelity + beta * mse;
    }
    total / problem.pairs.len() as f64
}

/// Central difference `(L(θ+h) − L(θ−h)) / 2h` for each listed coordinate.
pub fn oracle_grad(problem: &GradProblem<'_>, coords: &[usize], step: f64) -> Vec<f64> {
    let mut params = problem.model.params().to_vec();
    coords
        .iter()
        .map(|&k| {
            let orig = params[k];
            params[k] = orig + step;
            let up = loss_at(problem, &params);
            params[k] = orig - step;
            let down = loss_at(problem, &params);
            params[k] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// The loss the gradient oracle differentiates.
pub fn oracle_loss(problem: &GradProblem<'_>) -> f64 {
    loss_at(problem, problem.model.params())
}

/// Parses a golden CSV (header row, numeric fields).
pub fn read_golden(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().parse::<f64>().expect("numeric golden field")).collect())
        .collect()
}
