//! Trailing-window statistics over an hourly series.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Delta1,
    Delta2,
    Variance,
    Slope,
    Energy,
    Mean,
    Min,
    Max,
    Median,
}

impl Statistic {
    pub const DEFAULT: [Statistic; 5] = [
        Statistic::Delta1,
        Statistic::Delta2,
        Statistic::Variance,
        Statistic::Slope,
        Statistic::Energy,
    ];

    const ALL: [Statistic; 9] = [
        Statistic::Delta1,
        Statistic::Delta2,
        Statistic::Variance,
        Statistic::Slope,
        Statistic::Energy,
        Statistic::Mean,
        Statistic::Min,
        Statistic::Max,
        Statistic::Median,
    ];

    /// Column-name prefix, e.g. `var_` for variance.
    pub fn prefix(self) -> &'static str {
        match self {
            Self::Delta1 => "delta1_",
            Self::Delta2 => "delta2_",
            Self::Variance => "var_",
            Self::Slope => "slope_",
            Self::Energy => "energy_",
            Self::Mean => "wmean_",
            Self::Min => "wmin_",
            Self::Max => "wmax_",
            Self::Median => "wmedian_",
        }
    }

    pub fn column_name(self, feature: &str) -> String {
        format!("{}{feature}", self.prefix())
    }

    /// Splits a statistic column name back into (statistic, feature).
    pub fn parse_column(name: &str) -> Option<(Statistic, &str)> {
        Self::ALL
            .iter()
            .find_map(|s| name.strip_prefix(s.prefix()).map(|f| (*s, f)))
            .filter(|(_, f)| !f.is_empty())
    }

    /// Needs at least two observed points in the window.
    pub fn needs_spread(self) -> bool {
        matches!(self, Self::Variance | Self::Slope | Self::Energy)
    }

    fn as_str(self) -> &'static str {
        match self {
            Self::Delta1 => "delta1",
            Self::Delta2 => "delta2",
            Self::Variance => "variance",
            Self::Slope => "slope",
            Self::Energy => "energy",
            Self::Mean => "mean",
            Self::Min => "min",
            Self::Max => "max",
            Self::Median => "median",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Statistic {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "var" => Ok(Self::Variance),
            _ => Self::ALL
                .iter()
                .copied()
                .find(|x| x.as_str() == s)
                .ok_or_else(|| FeatureError::UnknownStatistic(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowSpec {
    pub window_hours: usize,
    pub statistics: Vec<Statistic>,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_hours: 6,
            statistics: Statistic::DEFAULT.to_vec(),
        }
    }
}

impl WindowSpec {
    pub fn from_names(window_hours: usize, names: &[impl AsRef<str>]) -> Result<Self, FeatureError> {
        let statistics = names.iter().map(|n| n.as_ref().parse()).collect::<Result<_, _>>()?;
        let spec = Self { window_hours, statistics };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.window_hours == 0 {
            return Err(FeatureError::InvalidWindow("window_hours must be positive".into()));
        }
        if self.window_hours < 2 && self.statistics.iter().any(|s| s.needs_spread()) {
            return Err(FeatureError::InvalidWindow(
                "variance, slope and energy need window_hours >= 2".into(),
            ));
        }
        let mut seen = self.statistics.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.statistics.len() {
            return Err(FeatureError::InvalidWindow("duplicate statistic".into()));
        }
        Ok(())
    }

    /// Candidate statistic column names for the given base features, grouped
    /// by statistic.
    pub fn candidate_names(&self, features: &[String]) -> Vec<String> {
        self.statistics
            .iter()
            .flat_map(|s| features.iter().map(move |f| s.column_name(f)))
            .collect()
    }
}

fn lag<T: Scalar>(x: &[T], k: usize) -> Vec<T> {
    (0..x.len())
        .map(|t| if t < k { T::missing() } else { x[t] - x[t - k] })
        .collect()
}

fn window_stat<T: Scalar>(stat: Statistic, pts: &mut [(T, T)]) -> T {
    let n = pts.len();
    if n == 0 || (stat.needs_spread() && n < 2) {
        return T::missing();
    }
    let nf = T::of_usize(n);
    let mean = pts.iter().map(|p| p.1).sum::<T>() / nf;
    match stat {
        Statistic::Variance => pts.iter().map(|p| (p.1 - mean) * (p.1 - mean)).sum::<T>() / nf,
        Statistic::Energy => pts.iter().map(|p| p.1 * p.1).sum::<T>() / nf,
        Statistic::Slope => {
            let km = pts.iter().map(|p| p.0).sum::<T>() / nf;
            let sxy: T = pts.iter().map(|p| (p.0 - km) * (p.1 - mean)).sum();
            let sxx: T = pts.iter().map(|p| (p.0 - km) * (p.0 - km)).sum();
            sxy / sxx
        }
        Statistic::Mean => mean,
        Statistic::Min => pts.iter().map(|p| p.1).fold(T::infinity(), T::min),
        Statistic::Max => pts.iter().map(|p| p.1).fold(T::neg_infinity(), T::max),
        Statistic::Median => {
            pts.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("observed values"));
            if n % 2 == 1 {
                pts[n / 2].1
            } else {
                (pts[n / 2 - 1].1 + pts[n / 2].1) / T::of(2.0)
            }
        }
        Statistic::Delta1 | Statistic::Delta2 => unreachable!("lag statistics"),
    }
}

/// One statistic over one series. Row `t` depends on rows `<= t` only.
pub fn window_statistic<T: Scalar>(x: &[T], stat: Statistic, window_hours: usize) -> Vec<T> {
    match stat {
        Statistic::Delta1 => lag(x, 1),
        Statistic::Delta2 => lag(x, 2),
        _ => {
            let mut pts = Vec::with_capacity(window_hours);
            (0..x.len())
                .map(|t| {
                    let start = (t + 1).saturating_sub(window_hours);
                    pts.clear();
                    pts.extend(
                        (start..=t)
                            .filter(|&k| !x[k].is_missing())
                            .map(|k| (T::of_usize(k - start), x[k])),
                    );
                    window_stat(stat, &mut pts)
                })
                .collect()
        }
    }
}

/// All configured statistics for one feature of one series, as
/// `(column name, values)` in spec order.
pub fn windowed_stats<T: Scalar>(x: &[T], feature: &str, spec: &WindowSpec) -> Result<Vec<(String, Vec<T>)>, FeatureError> {
    spec.validate()?;
    Ok(spec
        .statistics
        .iter()
        .map(|&s| (s.column_name(feature), window_statistic(x, s, spec.window_hours)))
        .collect())
}
