//! Evaluation criteria: SRCC, PLCC, KRCC (tau-b), RMSE and MAE.
//!
//! PLCC is computed on raw scores, with no logistic remapping. Correlations
//! of a constant vector are reported as [`Error::UndefinedCorrelation`]
//! rather than as zero.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

/// Paired predictions and ground-truth labels.
#[derive(Debug, Clone, Copy)]
pub struct PredictionSet<'a> {
    predictions: &'a [f64],
    labels: &'a [f64],
}

impl<'a> PredictionSet<'a> {
    pub fn new(predictions: &'a [f64], labels: &'a [f64]) -> Result<Self> {
        if predictions.len() != labels.len() {
            return Err(Error::LengthMismatch(format!(
                "{} predictions vs {} labels",
                predictions.len(),
                labels.len()
            )));
        }
        if predictions.is_empty() {
            return Err(Error::LengthMismatch("empty prediction set".into()));
        }
        if predictions.iter().chain(labels).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite prediction or label".into()));
        }
        Ok(Self { predictions, labels })
    }

    pub fn predictions(&self) -> &'a [f64] {
        self.predictions
    }

    pub fn labels(&self) -> &'a [f64] {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    fn need_pairs(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::UndefinedCorrelation(format!("{} sample(s)", self.len())));
        }
        Ok(())
    }
}

/// 1-based ranks; ties share the mean of the positions they occupy.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64], what: &str) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation(format!("{what}: constant input")));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

pub fn srcc(ps: &PredictionSet<'_>) -> Result<f64> {
    ps.need_pairs()?;
    pearson(&average_ranks(ps.predictions), &average_ranks(ps.labels), "srcc")
}

pub fn plcc(ps: &PredictionSet<'_>) -> Result<f64> {
    ps.need_pairs()?;
    pearson(ps.predictions, ps.labels, "plcc")
}

/// Number of tied pairs `Σ t(t−1)/2` over runs of equal keys in sorted order.
fn tied_pairs<K: PartialEq>(sorted: impl Iterator<Item = K>) -> u64 {
    let mut total = 0u64;
    let mut run = 0u64;
    let mut prev: Option<K> = None;
    for k in sorted {
        if prev.as_ref() == Some(&k) {
            run += 1;
        } else {
            total += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(k);
    }
    total + run * (run + 1) / 2
}

/// Sorts `v` ascending and returns the number of inversions removed.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall tau-b in `O(n log n)` (Knight's merge-sort formulation).
pub fn krcc(ps: &PredictionSet<'_>) -> Result<f64> {
    ps.need_pairs()?;
    let n = ps.len();
    let mut pairs: Vec<(f64, f64)> = ps.predictions.iter().copied().zip(ps.labels.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let tie_x = tied_pairs(pairs.iter().map(|p| p.0));
    let tie_xy = tied_pairs(pairs.iter().copied());
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let tie_y = tied_pairs(ys.iter().copied());
    if tie_x == n0 || tie_y == n0 {
        return Err(Error::UndefinedCorrelation("krcc: constant input".into()));
    }
    // concordant - discordant
    let s = n0 as i128 - tie_x as i128 - tie_y as i128 + tie_xy as i128 - 2 * swaps as i128;
    let denom = libm::sqrt((n0 - tie_x) as f64) * libm::sqrt((n0 - tie_y) as f64);
    Ok((s as f64 / denom).clamp(-1.0, 1.0))
}

pub fn rmse(ps: &PredictionSet<'_>) -> f64 {
    let sq = ps.predictions.iter().zip(ps.labels).map(|(p, l)| (p - l) * (p - l)).sum::<f64>();
    libm::sqrt(sq / ps.len() as f64)
}

pub fn mae(ps: &PredictionSet<'_>) -> f64 {
    ps.predictions.iter().zip(ps.labels).map(|(p, l)| (p - l).abs()).sum::<f64>() / ps.len() as f64
}

/// The five criteria. Correlations are `NaN` only in reports built with
/// [`MetricsReport::errors_only`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricsReport {
    pub srcc: f64,
    pub plcc: f64,
    pub krcc: f64,
    pub rmse: f64,
    pub mae: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "srcc,plcc,krcc,rmse,mae";

    pub fn compute(ps: &PredictionSet<'_>) -> Result<Self> {
        Ok(Self {
            srcc: srcc(ps)?,
            plcc: plcc(ps)?,
            krcc: krcc(ps)?,
            rmse: rmse(ps),
            mae: mae(ps),
        })
    }

    /// Error metrics with undefined correlations, for degenerate predictors.
    pub fn errors_only(ps: &PredictionSet<'_>) -> Self {
        Self {
            srcc: f64::NAN,
            plcc: f64::NAN,
            krcc: f64::NAN,
            rmse: rmse(ps),
            mae: mae(ps),
        }
    }

    pub fn correlations_defined(&self) -> bool {
        !(self.srcc.is_nan() || self.plcc.is_nan() || self.krcc.is_nan())
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.srcc, self.plcc, self.krcc, self.rmse, self.mae)
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "srcc={}\nplcc={}\nkrcc={}\nrmse={}\nmae={}\n",
            self.srcc, self.plcc, self.krcc, self.rmse, self.mae
        )
    }

    /// Orders reports by SRCC; undefined SRCC sorts below every defined value.
    pub fn srcc_cmp(&self, other: &Self) -> Ordering {
        match (self.srcc.is_nan(), other.srcc.is_nan()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.srcc.total_cmp(&other.srcc),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set<'a>(p: &'a [f64], l: &'a [f64]) -> PredictionSet<'a> {
        PredictionSet::new(p, l).unwrap()
    }

    #[test]
    fn rank_examples() {
        assert_eq!(average_ranks(&[10.0, 20.0, 30.0]), vec![1.0, 2.0, 3.0]);
        assert_eq!(average_ranks(&[5.0, 5.0]), vec![1.5, 1.5]);
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn srcc_examples() {
        let x = [0.1, 0.5, 0.3, 0.9];
        assert!((srcc(&set(&x, &x)).unwrap() - 1.0).abs() < 1e-15);
        let rev = [0.9, 0.5, 0.7, 0.1];
        assert!((srcc(&set(&rev, &x)).unwrap() + 1.0).abs() < 1e-15);
        let labels = [1.0, 3.0, 2.0, 4.0];
        assert!((srcc(&set(&[0.1, 0.4, 0.2, 0.9], &labels)).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(srcc(&set(&[1.0, 1.0], &[1.0, 2.0])), Err(Error::UndefinedCorrelation(_))));
    }

    #[test]
    fn plcc_examples() {
        let x = [0.1, 0.7, 0.3, 0.2];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 3.0).collect();
        assert!((plcc(&set(&x, &y)).unwrap() - 1.0).abs() < 1e-12);
        let z: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((plcc(&set(&x, &z)).unwrap() + 1.0).abs() < 1e-12);
        assert!(plcc(&set(&[0.3, 0.3, 0.3], &x[..3])).is_err());
    }

    #[test]
    fn krcc_examples() {
        assert_eq!(krcc(&set(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])).unwrap(), 1.0);
        assert_eq!(krcc(&set(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap(), -1.0);
        // hand count: 5 concordant, 0 discordant, one tie in x; tau-b = 5 / sqrt(5 * 6)
        let v = krcc(&set(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0])).unwrap();
        assert!((v - 5.0 / libm::sqrt(30.0)).abs() < 1e-15);
        assert!(krcc(&set(&[1.0, 2.0], &[4.0, 4.0])).is_err());
    }

    #[test]
    fn error_examples() {
        let l = [0.2, 0.4, 0.6];
        let ps = set(&l, &l);
        assert_eq!((rmse(&ps), mae(&ps)), (0.0, 0.0));
        let ps = set(&[0.6, 0.4], &[0.5, 0.5]);
        assert!((rmse(&ps) - 0.1).abs() < 1e-12 && (mae(&ps) - 0.1).abs() < 1e-12);
        let ps = set(&[0.8, 0.5, 0.1], &[0.5, 0.5, 0.1]);
        assert!((rmse(&ps) - 0.173_205_080_756_887_7).abs() < 1e-12);
        assert!((mae(&ps) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn set_validation() {
        assert!(matches!(PredictionSet::new(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch(_))));
        assert!(PredictionSet::new(&[f64::NAN], &[1.0]).is_err());
        let one = set(&[0.5], &[0.4]);
        assert!(srcc(&one).is_err());
        assert!((rmse(&one) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn report_formats() {
        let r = MetricsReport { srcc: 0.5, plcc: 0.25, krcc: 0.125, rmse: 0.1, mae: 0.05 };
        assert_eq!(r.csv_row(), "0.5,0.25,0.125,0.1,0.05");
        assert!(r.to_kv().starts_with("srcc=0.5\n"));
        let undefined = MetricsReport { srcc: f64::NAN, ..r };
        assert_eq!(undefined.srcc_cmp(&r), Ordering::Less);
    }

    proptest! {
        #[test]
        fn rank_metrics_ignore_monotone_transforms(xs in proptest::collection::vec(-3.0f64..3.0, 2..40), ys in proptest::collection::vec(-3.0f64..3.0, 40)) {
            let n = xs.len();
            let ys = &ys[..n];
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            prop_assume!(sorted.len() == n);
            let mut sy = ys.to_vec();
            sy.sort_by(f64::total_cmp);
            sy.dedup();
            prop_assume!(sy.len() == n);
            let base = set(&xs, ys);
            let s0 = srcc(&base).unwrap();
            let k0 = krcc(&base).unwrap();
            for f in [|v: f64| v * v * v + v, |v: f64| v.exp(), |v: f64| 5.0 * v + 2.0] {
                let fx: Vec<f64> = xs.iter().map(|&v| f(v)).collect();
                let t = set(&fx, ys);
                prop_assert!((srcc(&t).unwrap() - s0).abs() < 1e-12);
                prop_assert!((krcc(&t).unwrap() - k0).abs() < 1e-12);
            }
            let ax: Vec<f64> = xs.iter().map(|&v| 3.0 * v - 1.0).collect();
            prop_assert!((plcc(&set(&ax, ys)).unwrap() - plcc(&base).unwrap()).abs() < 1e-12);
            prop_assert!((srcc(&set(ys, &xs)).unwrap() - s0).abs() < 1e-12);
            prop_assert!((krcc(&set(ys, &xs)).unwrap() - k0).abs() < 1e-12);
            prop_assert!(rmse(&base) >= mae(&base));
        }
    }
}
