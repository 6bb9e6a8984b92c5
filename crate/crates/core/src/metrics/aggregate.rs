use nalgebra::{DMatrix, DVector};

use crate::error::{FilterError, Result};
use crate::linalg;

/// Monte Carlo population of estimates against truth, indexed `[run][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct McAggregate {
    estimates: Vec<Vec<DVector<f64>>>,
    truths: Vec<Vec<DVector<f64>>>,
    covs: Option<Vec<Vec<DMatrix<f64>>>>,
}

impl McAggregate {
    pub fn new(
        estimates: Vec<Vec<DVector<f64>>>,
        truths: Vec<Vec<DVector<f64>>>,
        covs: Option<Vec<Vec<DMatrix<f64>>>>,
    ) -> Result<Self> {
        if estimates.is_empty() {
            return Err(FilterError::InvalidArgument("aggregate needs at least one run".into()));
        }
        let steps = estimates[0].len();
        let dim = estimates[0].first().map_or(0, |v| v.len());
        if truths.len() != estimates.len() {
            return Err(FilterError::Dimension {
                context: "aggregate truth runs",
                expected: estimates.len(),
                actual: truths.len(),
            });
        }
        for (e, t) in estimates.iter().zip(&truths) {
            for (context, len) in [("aggregate estimate steps", e.len()), ("aggregate truth steps", t.len())] {
                if len != steps {
                    return Err(FilterError::Dimension {
                        context,
                        expected: steps,
                        actual: len,
                    });
                }
            }
            if let Some(bad) = e.iter().chain(t).find(|v| v.len() != dim) {
                return Err(FilterError::Dimension {
                    context: "aggregate state",
                    expected: dim,
                    actual: bad.len(),
                });
            }
        }
        if let Some(c) = &covs {
            if c.len() != estimates.len() || c.iter().any(|r| r.len() != steps) {
                return Err(FilterError::InvalidArgument("covariance table shape differs from estimates".into()));
            }
            if c.iter().flatten().any(|p| p.nrows() != dim || p.ncols() != dim) {
                return Err(FilterError::Dimension {
                    context: "aggregate covariance",
                    expected: dim,
                    actual: 0,
                });
            }
        }
        Ok(Self {
            estimates,
            truths,
            covs,
        })
    }

    pub fn runs(&self) -> usize {
        self.estimates.len()
    }

    pub fn steps(&self) -> usize {
        self.estimates[0].len()
    }

    pub fn dim(&self) -> usize {
        self.estimates[0].first().map_or(0, |v| v.len())
    }

    pub fn estimates(&self) -> &[Vec<DVector<f64>>] {
        &self.estimates
    }

    pub fn truths(&self) -> &[Vec<DVector<f64>>] {
        &self.truths
    }

    pub fn covs(&self) -> Option<&[Vec<DMatrix<f64>>]> {
        self.covs.as_deref()
    }

    /// `x̃ = estimate − truth` for run `m` at step index `k`.
    pub fn error(&self, m: usize, k: usize) -> DVector<f64> {
        &self.estimates[m][k] - &self.truths[m][k]
    }

    /// `M̂_k = (1/M) Σ_m x̃ x̃ᵀ`.
    pub fn sample_mse(&self, k: usize) -> DMatrix<f64> {
        let n = self.dim();
        let mut acc = DMatrix::zeros(n, n);
        for m in 0..self.runs() {
            let e = self.error(m, k);
            acc += &e * e.transpose();
        }
        acc / self.runs() as f64
    }
}

/// `RMSE_k = √((1/M) Σ_m ‖x̃_{m,k}‖²)`.
pub fn rmse_per_step(agg: &McAggregate) -> Vec<f64> {
    (0..agg.steps())
        .map(|k| {
            let total: f64 = (0..agg.runs()).map(|m| agg.error(m, k).norm_squared()).sum();
            (total / agg.runs() as f64).sqrt()
        })
        .collect()
}

/// `(1/k) Σ_{s≤k} v_s`.
pub fn running_mean(values: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            total += v;
            total / (i + 1) as f64
        })
        .collect()
}

/// Running mean of the per-step RMSE.
pub fn time_averaged_rmse(agg: &McAggregate) -> Vec<f64> {
    running_mean(&rmse_per_step(agg))
}

/// Non-credibility index in dB:
/// `NCI_k = (10/M) Σ_m [log₁₀(x̃ᵀP⁻¹x̃) − log₁₀(x̃ᵀM̂_k⁻¹x̃)]`.
///
/// Positive values mean the reported covariances are too small.
pub fn nci(agg: &McAggregate) -> Result<Vec<f64>> {
    nci_inner(agg, false).map(|s| s.values)
}

/// NCI values together with the number of runs left out at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct NciSeries {
    pub values: Vec<f64>,
    pub skipped: Vec<usize>,
}

/// [`nci`] that leaves out runs whose reported covariance is singular or so
/// small that the quadratic form overflows (a particle ensemble collapsed
/// onto one point), averaging over the rest.
/// A step where every run is left out is NaN.
pub fn nci_skipping_singular(agg: &McAggregate) -> Result<NciSeries> {
    nci_inner(agg, true)
}

fn nci_inner(agg: &McAggregate, skip_singular: bool) -> Result<NciSeries> {
    let covs = agg
        .covs()
        .ok_or_else(|| FilterError::InvalidArgument("NCI needs reported covariances".into()))?;
    if agg.runs() < 2 {
        return Err(FilterError::InvalidArgument("NCI needs at least two runs".into()));
    }
    let mut values = Vec::with_capacity(agg.steps());
    let mut skipped = Vec::with_capacity(agg.steps());
    for k in 0..agg.steps() {
        let mse_inv = linalg::inverse(&agg.sample_mse(k), "sample MSE").map_err(|_| FilterError::SingularAt {
            context: "sample MSE",
            run: 0,
            time: k + 1,
        })?;
        let mut total = 0.0;
        let mut used = 0usize;
        for (m, run) in covs.iter().enumerate() {
            let p_inv = match linalg::inverse(&run[k], "reported covariance") {
                Ok(p) => p,
                Err(_) if skip_singular => continue,
                Err(_) => {
                    return Err(FilterError::SingularAt {
                        context: "reported covariance",
                        run: m,
                        time: k + 1,
                    })
                }
            };
            let e = agg.error(m, k);
            let reported = (e.transpose() * &p_inv * &e)[(0, 0)];
            let actual = (e.transpose() * &mse_inv * &e)[(0, 0)];
            let term = reported.log10() - actual.log10();
            if !term.is_finite() {
                if skip_singular {
                    continue;
                }
                return Err(FilterError::SingularAt {
                    context: "reported covariance",
                    run: m,
                    time: k + 1,
                });
            }
            total += term;
            used += 1;
        }
        values.push(if used == 0 { f64::NAN } else { 10.0 * total / used as f64 });
        skipped.push(agg.runs() - used);
    }
    Ok(NciSeries { values, skipped })
}

/// `rel_k = (1/M) Σ_m |p̂ − p| / |p|` on component `index`.
pub fn relative_position_error(agg: &McAggregate, index: usize) -> Result<Vec<f64>> {
    if index >= agg.dim() {
        return Err(FilterError::Dimension {
            context: "position index",
            expected: agg.dim(),
            actual: index,
        });
    }
    (0..agg.steps())
        .map(|k| {
            let mut total = 0.0;
            for m in 0..agg.runs() {
                let p = agg.truths[m][k][index];
                if p.abs() < 1e-9 {
                    return Err(FilterError::InvalidArgument(format!(
                        "true position {p} too close to zero in run {m} at time {}",
                        k + 1
                    )));
                }
                total += (agg.estimates[m][k][index] - p).abs() / p.abs();
            }
            Ok(total / agg.runs() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, RngStream};
    use rand::Rng;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    fn scalar_table(errors: &[Vec<f64>]) -> McAggregate {
        let est = errors.iter().map(|r| r.iter().map(|&e| s(e)).collect()).collect();
        let truth = errors.iter().map(|r| vec![s(0.0); r.len()]).collect();
        McAggregate::new(est, truth, None).unwrap()
    }

    #[test]
    fn constant_error() {
        let agg = scalar_table(&vec![vec![0.7; 6]; 4]);
        for v in time_averaged_rmse(&agg) {
            assert!((v - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn two_runs_one_step() {
        let agg = scalar_table(&[vec![3.0], vec![4.0]]);
        assert!((rmse_per_step(&agg)[0] - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((rmse_per_step(&agg)[0] - 3.53553).abs() < 1e-5);
    }

    #[test]
    fn rmse_matches_double_loop() {
        let mut rng = RngStream::new(1).run(0).rng(0, 0, Purpose::Study);
        let table: Vec<Vec<f64>> = (0..5).map(|_| (0..10).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let agg = scalar_table(&table);
        let got = time_averaged_rmse(&agg);
        let mut raw = vec![0.0; 10];
        for k in 0..10 {
            let mut acc = 0.0;
            for m in 0..5 {
                acc += table[m][k] * table[m][k];
            }
            raw[k] = (acc / 5.0).sqrt();
        }
        for k in 0..10 {
            let mut acc = 0.0;
            for s in 0..=k {
                acc += raw[s];
            }
            assert!((got[k] - acc / (k + 1) as f64).abs() < 1e-12);
        }
    }

    fn random_pd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    fn vector_table(rng: &mut impl Rng, runs: usize, steps: usize, n: usize) -> (Vec<Vec<DVector<f64>>>, Vec<Vec<DVector<f64>>>) {
        let est = (0..runs)
            .map(|_| (0..steps).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))).collect())
            .collect();
        let truth = (0..runs)
            .map(|_| (0..steps).map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))).collect())
            .collect();
        (est, truth)
    }

    #[test]
    fn nci_of_matching_and_scaled_covariances() {
        let mut rng = RngStream::new(2).run(0).rng(0, 0, Purpose::Study);
        let (est, truth) = vector_table(&mut rng, 6, 3, 2);
        let probe = McAggregate::new(est.clone(), truth.clone(), None).unwrap();
        let mse: Vec<DMatrix<f64>> = (0..3).map(|k| probe.sample_mse(k)).collect();
        let same = vec![mse.clone(); 6];
        let agg = McAggregate::new(est.clone(), truth.clone(), Some(same)).unwrap();
        for v in nci(&agg).unwrap() {
            assert!(v.abs() < 1e-12, "{v}");
        }
        let scaled = vec![mse.iter().map(|m| m * 10.0).collect::<Vec<_>>(); 6];
        let agg = McAggregate::new(est, truth, Some(scaled)).unwrap();
        for v in nci(&agg).unwrap() {
            assert!((v + 10.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn nci_matches_quadratic_form_oracle() {
        let mut rng = RngStream::new(3).run(0).rng(0, 0, Purpose::Study);
        let (est, truth) = vector_table(&mut rng, 3, 2, 2);
        let covs: Vec<Vec<DMatrix<f64>>> = (0..3).map(|_| (0..2).map(|_| random_pd(&mut rng, 2)).collect()).collect();
        let agg = McAggregate::new(est.clone(), truth.clone(), Some(covs.clone())).unwrap();
        let got = nci(&agg).unwrap();
        for k in 0..2 {
            let errs: Vec<[f64; 2]> = (0..3).map(|m| [est[m][k][0] - truth[m][k][0], est[m][k][1] - truth[m][k][1]]).collect();
            let mut mh = [[0.0; 2]; 2];
            for e in &errs {
                for i in 0..2 {
                    for j in 0..2 {
                        mh[i][j] += e[i] * e[j] / 3.0;
                    }
                }
            }
            let quad = |m: [[f64; 2]; 2], e: [f64; 2]| {
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                (m[1][1] * e[0] * e[0] - (m[0][1] + m[1][0]) * e[0] * e[1] + m[0][0] * e[1] * e[1]) / det
            };
            let mut total = 0.0;
            for m in 0..3 {
                let p = &covs[m][k];
                let pa = [[p[(0, 0)], p[(0, 1)]], [p[(1, 0)], p[(1, 1)]]];
                total += quad(pa, errs[m]).log10() - quad(mh, errs[m]).log10();
            }
            assert!((got[k] - 10.0 * total / 3.0).abs() < 1e-10);
        }
    }

    #[test]
    fn nci_names_singular_run() {
        let est = vec![vec![s(1.0)], vec![s(2.0)]];
        let truth = vec![vec![s(0.0)], vec![s(0.0)]];
        let covs = vec![vec![DMatrix::from_element(1, 1, 1.0)], vec![DMatrix::zeros(1, 1)]];
        let agg = McAggregate::new(est, truth, Some(covs)).unwrap();
        assert_eq!(
            nci(&agg).unwrap_err(),
            FilterError::SingularAt {
                context: "reported covariance",
                run: 1,
                time: 1
            }
        );
    }

    #[test]
    fn skipping_singular_averages_the_rest() {
        let est = vec![vec![s(1.0)], vec![s(2.0)], vec![s(-1.0)]];
        let truth = vec![vec![s(0.0)]; 3];
        let mse = (1.0 + 4.0 + 1.0) / 3.0;
        let covs = vec![vec![DMatrix::from_element(1, 1, mse)], vec![DMatrix::zeros(1, 1)], vec![DMatrix::from_element(1, 1, mse)]];
        let agg = McAggregate::new(est, truth, Some(covs)).unwrap();
        let out = nci_skipping_singular(&agg).unwrap();
        assert_eq!(out.skipped, vec![1]);
        assert!(out.values[0].abs() < 1e-12);
    }

    #[test]
    fn relative_error_cases() {
        let perfect = McAggregate::new(vec![vec![s(5.0)]], vec![vec![s(5.0)]], None).unwrap();
        assert_eq!(relative_position_error(&perfect, 0).unwrap(), vec![0.0]);
        let one = McAggregate::new(vec![vec![s(101.0)]], vec![vec![s(100.0)]], None).unwrap();
        assert!((relative_position_error(&one, 0).unwrap()[0] - 0.01).abs() < 1e-15);
        let zero = McAggregate::new(vec![vec![s(1.0)]], vec![vec![s(0.0)]], None).unwrap();
        assert!(relative_position_error(&zero, 0).is_err());
    }

    #[test]
    fn relative_error_matches_loop() {
        let mut rng = RngStream::new(4).run(0).rng(0, 0, Purpose::Study);
        let est: Vec<Vec<DVector<f64>>> = (0..4)
            .map(|_| (0..7).map(|_| DVector::from_vec(vec![rng.random_range(50.0..90.0), rng.random_range(0.0..2.0)])).collect())
            .collect();
        let truth: Vec<Vec<DVector<f64>>> = (0..4)
            .map(|_| (0..7).map(|_| DVector::from_vec(vec![rng.random_range(50.0..90.0), rng.random_range(0.0..2.0)])).collect())
            .collect();
        let agg = McAggregate::new(est.clone(), truth.clone(), None).unwrap();
        let got = relative_position_error(&agg, 0).unwrap();
        for k in 0..7 {
            let mut acc = 0.0;
            for m in 0..4 {
                acc += (est[m][k][0] - truth[m][k][0]).abs() / truth[m][k][0].abs();
            }
            assert!((got[k] - acc / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_checks() {
        assert!(McAggregate::new(vec![], vec![], None).is_err());
        assert!(McAggregate::new(vec![vec![s(1.0)]], vec![vec![s(1.0), s(2.0)]], None).is_err());
    }
}
