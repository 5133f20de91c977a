//! Partitioning observations by the response and per-slice moments.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdrError};
use crate::linalg::{Matrix, SymMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceMode {
    EqualCount,
    Discrete,
}

/// Disjoint slices of observation indices, ordered by response.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceAssignment {
    slices: Vec<Vec<usize>>,
    mode: SliceMode,
    n: usize,
}

impl SliceAssignment {
    pub fn slices(&self) -> &[Vec<usize>] {
        &self.slices
    }

    pub fn mode(&self) -> SliceMode {
        self.mode
    }

    /// Number of slices H.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn counts(&self) -> Vec<usize> {
        self.slices.iter().map(Vec::len).collect()
    }

    /// Nominal slice size `c = floor(n/H)`.
    pub fn nominal_size(&self) -> usize {
        self.n / self.slices.len()
    }
}

fn sorted_order(y: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    // stable: ties keep original index order
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    order
}

/// Sorts by response and cuts into `h` consecutive groups of
/// `c = floor(n/h)`; the last group takes whatever remains.
pub fn slice_equal_count(y: &[f64], h: usize) -> Result<SliceAssignment> {
    let n = y.len();
    if h == 0 || n < 2 * h {
        return Err(SdrError::TooManySlices { n, slices: h });
    }
    let order = sorted_order(y);
    let c = n / h;
    let mut slices: Vec<Vec<usize>> = order.chunks(c).take(h - 1).map(<[usize]>::to_vec).collect();
    slices.push(order[(h - 1) * c..].to_vec());
    Ok(SliceAssignment {
        slices,
        mode: SliceMode::EqualCount,
        n,
    })
}

/// One slice per distinct response value, in ascending value order.
pub fn slice_discrete(y: &[f64]) -> Result<SliceAssignment> {
    let order = sorted_order(y);
    let mut slices: Vec<Vec<usize>> = Vec::new();
    let mut last: Option<f64> = None;
    for i in order {
        if last == Some(y[i]) {
            slices.last_mut().expect("started").push(i);
        } else {
            slices.push(vec![i]);
            last = Some(y[i]);
        }
    }
    if slices.len() < 2 {
        return Err(SdrError::DegenerateResponse {
            distinct: slices.len(),
        });
    }
    if let Some((h, s)) = slices.iter().enumerate().find(|(_, s)| s.len() < 2) {
        return Err(SdrError::SingletonSlice {
            slice: h,
            value: Some(y[s[0]]),
        });
    }
    Ok(SliceAssignment {
        slices,
        mode: SliceMode::Discrete,
        n: y.len(),
    })
}

/// Normalizer for within-slice covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Divisor {
    /// `1/c`
    #[serde(rename = "c")]
    Count,
    /// `1/(c−1)`
    #[default]
    #[serde(rename = "c-1")]
    CountMinusOne,
}

impl Divisor {
    pub fn apply(self, count: usize) -> f64 {
        match self {
            Divisor::Count => count as f64,
            Divisor::CountMinusOne => count as f64 - 1.0,
        }
    }
}

impl std::str::FromStr for Divisor {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "c" => Ok(Divisor::Count),
            "c-1" => Ok(Divisor::CountMinusOne),
            other => Err(format!("unknown divisor '{other}', expected 'c' or 'c-1'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStat {
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    /// `c_h / n`
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceStats {
    pub slices: Vec<SliceStat>,
    pub divisor: Divisor,
    pub n: usize,
    pub p: usize,
}

impl SliceStats {
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    /// `Σ_h p̂_h Σ̂(h)`
    pub fn pooled_cov(&self) -> SymMatrix {
        self.slices
            .iter()
            .fold(SymMatrix::zeros(self.p), |acc, s| acc.lin_comb(1.0, &s.cov, s.weight))
    }
}

/// Slice mean and within-slice covariance of the rows of `z` listed in `idx`.
pub(crate) fn slice_moments(z: &Matrix, idx: &[usize], divisor: Divisor) -> (Vec<f64>, SymMatrix) {
    let p = z.cols();
    let c = idx.len();
    let mut mean = vec![0.0; p];
    for &i in idx {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= c as f64);
    let mut cov = SymMatrix::zeros(p);
    let mut dev = vec![0.0; p];
    let inv = 1.0 / divisor.apply(c);
    for &i in idx {
        for ((d, v), m) in dev.iter_mut().zip(z.row(i)).zip(&mean) {
            *d = v - m;
        }
        cov.add_outer(inv, &dev);
    }
    cov.mirror_upper();
    (mean, cov)
}

pub fn slice_stats(z: &Matrix, a: &SliceAssignment, divisor: Divisor) -> Result<SliceStats> {
    if a.n() != z.rows() {
        return Err(SdrError::DimensionMismatch(format!(
            "assignment covers {} observations, data has {} rows",
            a.n(),
            z.rows()
        )));
    }
    let n = z.rows();
    let mut slices = Vec::with_capacity(a.len());
    for (h, idx) in a.slices().iter().enumerate() {
        if idx.len() < 2 {
            return Err(SdrError::SingletonSlice { slice: h, value: None });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(SdrError::DimensionMismatch(format!(
                "slice {h} references row {bad} of {n}"
            )));
        }
        let (mean, cov) = slice_moments(z, idx, divisor);
        slices.push(SliceStat {
            count: idx.len(),
            mean,
            cov,
            weight: idx.len() as f64 / n as f64,
        });
    }
    Ok(SliceStats {
        slices,
        divisor,
        n,
        p: z.cols(),
    })
}
