//! Lag-window feature construction: turns an hourly frame into a supervised
//! next-hour regression dataset and splits it chronologically.

use crate::data::TimeSeriesFrame;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix { data: vec![0.0; rows * cols], rows, cols }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Lag-window settings: how many past hours feed each prediction, and
/// whether exogenous columns are included alongside the demand lags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagConfig {
    pub s: usize,
    pub multivariate: bool,
}

impl LagConfig {
    pub fn univariate(s: usize) -> LagConfig {
        LagConfig { s, multivariate: false }
    }

    pub fn multivariate(s: usize) -> LagConfig {
        LagConfig { s, multivariate: true }
    }
}

/// Which predictor set a run uses: demand lags only, or demand lags plus
/// lagged exogenous columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variate {
    Univariate,
    Multivariate,
}

impl Variate {
    pub const ALL: [Variate; 2] = [Variate::Univariate, Variate::Multivariate];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variate::Univariate => "univariate",
            Variate::Multivariate => "multivariate",
        }
    }

    pub fn parse(s: &str) -> Result<Variate> {
        match s {
            "univariate" => Ok(Variate::Univariate),
            "multivariate" => Ok(Variate::Multivariate),
            other => Err(Error::Config(format!(
                "unknown variate '{other}' (univariate|multivariate)"
            ))),
        }
    }

    pub fn lag_config(&self, s: usize) -> LagConfig {
        LagConfig { s, multivariate: *self == Variate::Multivariate }
    }
}

impl std::fmt::Display for Variate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Supervised next-hour dataset: row `i` predicts `y[i]` from the `p`
/// predictors in `x.row(i)`, all strictly earlier in time.
#[derive(Debug, Clone)]
pub struct SupervisedDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub feature_names: Vec<String>,
}

impl SupervisedDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Chronological train/test partition.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: SupervisedDataset,
    pub test: SupervisedDataset,
    pub split_index: usize,
}

/// Builds the lag-window dataset: each target hour gets the `S` preceding
/// demand values, plus (in multivariate mode) the `S` preceding values of
/// every exogenous column, so `p = S` or `p = S * (1 + D_exog)`.
///
/// Within each block, lags are ordered oldest to newest.
pub fn make_supervised(frame: &TimeSeriesFrame, cfg: &LagConfig) -> Result<SupervisedDataset> {
    let n = frame.len();
    let s = cfg.s;
    if s == 0 {
        return Err(Error::Config("lag window S must be at least 1".into()));
    }
    if n <= s {
        return Err(Error::InsufficientHistory { rows: n, lag: s });
    }
    let d_exog = if cfg.multivariate { frame.n_features() } else { 0 };
    let m = n - s;
    let p = s * (1 + d_exog);

    let mut feature_names = Vec::with_capacity(p);
    for j in 0..s {
        feature_names.push(format!("y_lag{}", s - j));
    }
    for col in 0..d_exog {
        for j in 0..s {
            feature_names.push(format!("{}_lag{}", frame.feature_names[col], s - j));
        }
    }

    let mut x = Matrix::zeros(m, p);
    let mut y = Vec::with_capacity(m);
    for i in 0..m {
        // Predictors cover source hours i..i+S-1; the target sits at i+S.
        for j in 0..s {
            x.set(i, j, frame.target[i + j]);
        }
        for col in 0..d_exog {
            for j in 0..s {
                x.set(i, s * (1 + col) + j, frame.feature(i + j, col));
            }
        }
        y.push(frame.target[i + s]);
    }

    Ok(SupervisedDataset { x, y, feature_names })
}

fn slice_dataset(ds: &SupervisedDataset, range: std::ops::Range<usize>) -> SupervisedDataset {
    let p = ds.x.cols;
    SupervisedDataset {
        x: Matrix {
            data: ds.x.data[range.start * p..range.end * p].to_vec(),
            rows: range.end - range.start,
            cols: p,
        },
        y: ds.y[range.clone()].to_vec(),
        feature_names: ds.feature_names.clone(),
    }
}

/// Splits off the last `ceil(m * test_fraction)` rows as the test set.
pub fn chrono_split(ds: &SupervisedDataset, test_fraction: f64) -> Result<SplitPair> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction == 0.0 {
        return Err(Error::Split(format!("test fraction {test_fraction} outside (0,1)")));
    }
    let m = ds.len();
    let test_len = (m as f64 * test_fraction).ceil() as usize;
    if test_len == 0 || test_len >= m {
        return Err(Error::Split(format!(
            "fraction {test_fraction} leaves an empty partition for {m} rows"
        )));
    }
    let split_index = m - test_len;
    Ok(SplitPair {
        train: slice_dataset(ds, 0..split_index),
        test: slice_dataset(ds, split_index..m),
        split_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_demand;
    use chrono::NaiveDateTime;

    fn plain_frame(target: Vec<f64>) -> TimeSeriesFrame {
        let start =
            NaiveDateTime::parse_from_str("2020-01-01 00:00:00", "%Y-%m-%d %H:%M:%S").unwrap();
        let n = target.len();
        TimeSeriesFrame {
            timestamps: (0..n).map(|i| start + chrono::Duration::hours(i as i64)).collect(),
            target,
            features: Vec::new(),
            feature_names: Vec::new(),
            target_name: "nat_demand".into(),
            scaling: None,
        }
    }

    fn frame_with_exog(target: Vec<f64>, exog: Vec<f64>) -> TimeSeriesFrame {
        let mut frame = plain_frame(target);
        frame.features = exog;
        frame.feature_names = vec!["T2M_toc".into()];
        frame
    }

    #[test]
    fn univariate_window_matches_hand_layout() {
        let frame = plain_frame(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let ds = make_supervised(&frame, &LagConfig::univariate(2)).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.x.row(0), &[1.0, 2.0]);
        assert_eq!(ds.x.row(1), &[2.0, 3.0]);
        assert_eq!(ds.x.row(2), &[3.0, 4.0]);
        assert_eq!(ds.y, vec![3.0, 4.0, 5.0]);
        assert_eq!(ds.feature_names, vec!["y_lag2", "y_lag1"]);
    }

    #[test]
    fn window_equal_to_history_minus_one_leaves_one_row() {
        let frame = plain_frame(vec![1.0, 2.0, 3.0, 4.0]);
        let ds = make_supervised(&frame, &LagConfig::univariate(3)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.x.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.y, vec![4.0]);
    }

    #[test]
    fn window_not_shorter_than_history_is_rejected() {
        let frame = plain_frame(vec![1.0, 2.0, 3.0]);
        let err = make_supervised(&frame, &LagConfig::univariate(3)).unwrap_err();
        assert!(matches!(err, Error::InsufficientHistory { rows: 3, lag: 3 }));
    }

    #[test]
    fn multivariate_appends_lagged_exogenous_blocks() {
        let frame =
            frame_with_exog(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![10.0, 20.0, 30.0, 40.0, 50.0]);
        let ds = make_supervised(&frame, &LagConfig::multivariate(2)).unwrap();
        // p = S * (1 + D_exog) = 2 * 2
        assert_eq!(ds.x.cols, 4);
        assert_eq!(ds.x.row(0), &[1.0, 2.0, 10.0, 20.0]);
        assert_eq!(ds.x.row(2), &[3.0, 4.0, 30.0, 40.0]);
        assert_eq!(
            ds.feature_names,
            vec!["y_lag2", "y_lag1", "T2M_toc_lag2", "T2M_toc_lag1"]
        );
    }

    #[test]
    fn predictor_counts_follow_the_window_formula() {
        let frame = synth_demand(100, 1).unwrap(); // 3 exogenous columns
        for s in [1, 6, 24] {
            let uni = make_supervised(&frame, &LagConfig::univariate(s)).unwrap();
            assert_eq!(uni.x.cols, s);
            let multi = make_supervised(&frame, &LagConfig::multivariate(s)).unwrap();
            assert_eq!(multi.x.cols, s * 4);
            assert_eq!(uni.len(), 100 - s);
            assert_eq!(multi.len(), 100 - s);
        }
    }

    #[test]
    fn no_leakage_future_values_never_enter_predictors() {
        // Perturbing y at index j (source hour j+S) must leave every
        // predictor row with target index <= j unchanged.
        let base = synth_demand(60, 9).unwrap();
        let cfg = LagConfig::multivariate(5);
        let ds0 = make_supervised(&base, &cfg).unwrap();
        for j in [0usize, 10, 54] {
            let mut bumped = base.clone();
            bumped.target[j + 5] += 1000.0;
            let ds1 = make_supervised(&bumped, &cfg).unwrap();
            for i in 0..=j {
                assert_eq!(ds0.x.row(i), ds1.x.row(i), "row {i} changed by bump at {j}");
            }
        }
    }

    #[test]
    fn strictly_increasing_series_gives_strictly_increasing_targets() {
        let frame = plain_frame((0..40).map(|i| i as f64 * 1.5 + 3.0).collect());
        let ds = make_supervised(&frame, &LagConfig::univariate(7)).unwrap();
        assert!(ds.y.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn chrono_split_sizes_and_ordering() {
        let frame = plain_frame((0..14).map(f64::from).collect());
        let ds = make_supervised(&frame, &LagConfig::univariate(4)).unwrap();
        assert_eq!(ds.len(), 10);
        let pair = chrono_split(&ds, 0.2).unwrap();
        assert_eq!(pair.train.len(), 8);
        assert_eq!(pair.test.len(), 2);
        assert_eq!(pair.split_index, 8);
        // Train rows all precede test rows.
        let max_train = pair.train.y.iter().cloned().fold(f64::MIN, f64::max);
        let min_test = pair.test.y.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max_train < min_test);
        // Partition is exact: concatenation reproduces the whole.
        let mut rebuilt = pair.train.y.clone();
        rebuilt.extend_from_slice(&pair.test.y);
        assert_eq!(rebuilt, ds.y);
    }

    #[test]
    fn chrono_split_two_rows_half_and_half() {
        let frame = plain_frame(vec![1.0, 2.0, 3.0]);
        let ds = make_supervised(&frame, &LagConfig::univariate(1)).unwrap();
        let pair = chrono_split(&ds, 0.5).unwrap();
        assert_eq!((pair.train.len(), pair.test.len()), (1, 1));
    }

    #[test]
    fn chrono_split_rejects_degenerate_fractions() {
        let frame = plain_frame(vec![1.0, 2.0, 3.0]);
        let ds = make_supervised(&frame, &LagConfig::univariate(1)).unwrap();
        assert!(chrono_split(&ds, 0.0).is_err());
        assert!(chrono_split(&ds, 1.0).is_err());
        // ceil(2 * 0.99) = 2 rows of 2 would empty the training side.
        assert!(chrono_split(&ds, 0.99).is_err());
    }
}
