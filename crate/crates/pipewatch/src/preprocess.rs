//! STL decomposition of the historical year and online residualization of
//! arriving points.
//!
//! The decomposition is additive Cleveland STL with the "periodic" seasonal
//! simplification (robustness-weighted per-phase means, exactly periodic)
//! and a degree-1 tricube loess trend. Two inner iterations and one outer
//! robustness pass.

use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone)]
pub struct StlParams {
    pub period: usize,
    pub inner_iterations: usize,
    pub robustness_iterations: usize,
    /// Loess span for the trend pass; defaults to the next odd integer
    /// at or above 1.5 x period.
    pub trend_window: Option<usize>,
}

impl StlParams {
    pub fn new(period: usize) -> StlParams {
        StlParams {
            period,
            inner_iterations: 2,
            robustness_iterations: 1,
            trend_window: None,
        }
    }

    fn effective_trend_window(&self) -> usize {
        self.trend_window.unwrap_or_else(|| {
            let w = (1.5 * self.period as f64).ceil() as usize;
            if w % 2 == 0 {
                w + 1
            } else {
                w
            }
        })
    }
}

/// Additive decomposition: `trend + seasonal + residual` reconstructs the
/// input exactly, and the seasonal component is exactly periodic with zero
/// mean over any full period.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub residual: Vec<f64>,
    pub period: usize,
}

/// Decompose with default parameters for the given period.
pub fn stl_decompose(series: &[f64], period: usize) -> Result<Decomposition> {
    stl_decompose_with(series, &StlParams::new(period))
}

pub fn stl_decompose_with(series: &[f64], params: &StlParams) -> Result<Decomposition> {
    let n = series.len();
    let period = params.period;
    if period < 2 {
        return Err(Error::InvalidConfig(format!("STL period {period} < 2")));
    }
    if n < 2 * period {
        return Err(Error::SeriesTooShort { len: n, period });
    }

    let trend_window = params.effective_trend_window();
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robust = vec![1.0; n];
    let mut detrended = vec![0.0; n];
    let mut deseason = vec![0.0; n];

    for outer in 0..=params.robustness_iterations {
        for _ in 0..params.inner_iterations {
            for i in 0..n {
                detrended[i] = series[i] - trend[i];
            }
            periodic_seasonal(&detrended, &robust, period, &mut seasonal);
            for i in 0..n {
                deseason[i] = series[i] - seasonal[i];
            }
            loess(&deseason, &robust, trend_window, &mut trend);
        }
        if outer < params.robustness_iterations {
            let residuals: Vec<f64> = (0..n)
                .map(|i| series[i] - trend[i] - seasonal[i])
                .collect();
            bisquare_weights(&residuals, &mut robust);
        }
    }

    let residual = (0..n).map(|i| series[i] - trend[i] - seasonal[i]).collect();
    Ok(Decomposition {
        trend,
        seasonal,
        residual,
        period,
    })
}

/// Weighted per-phase means, centred so each full period sums to zero.
fn periodic_seasonal(detrended: &[f64], weights: &[f64], period: usize, seasonal: &mut [f64]) {
    let mut phase_mean = vec![0.0; period];
    for phase in 0..period {
        let mut sw = 0.0;
        let mut swy = 0.0;
        let mut count = 0.0;
        let mut sum = 0.0;
        let mut i = phase;
        while i < detrended.len() {
            sw += weights[i];
            swy += weights[i] * detrended[i];
            count += 1.0;
            sum += detrended[i];
            i += period;
        }
        phase_mean[phase] = if sw > 1e-12 { swy / sw } else { sum / count };
    }
    let centre = phase_mean.iter().sum::<f64>() / period as f64;
    for (i, s) in seasonal.iter_mut().enumerate() {
        *s = phase_mean[i % period] - centre;
    }
}

/// Degree-1 loess over equally spaced points with tricube neighbourhood
/// weights multiplied by per-point robustness weights.
fn loess(y: &[f64], robust: &[f64], window: usize, out: &mut [f64]) {
    let n = y.len();
    let q = window.min(n).max(2);
    let half = (q - 1) / 2;
    for i in 0..n {
        let lo = i.saturating_sub(half).min(n - q);
        let hi = lo + q;
        let d_max = (i - lo).max(hi - 1 - i) as f64;
        let mut sw = 0.0;
        let mut swx = 0.0;
        let mut swx2 = 0.0;
        let mut swy = 0.0;
        let mut swxy = 0.0;
        for j in lo..hi {
            let dist = (j as f64 - i as f64).abs();
            let u = if d_max > 0.0 { dist / d_max } else { 0.0 };
            if u >= 1.0 && dist > 0.0 && q > 2 {
                continue;
            }
            let tri = {
                let v = 1.0 - u * u * u;
                v * v * v
            };
            let w = tri.max(0.0) * robust[j];
            if w <= 0.0 {
                continue;
            }
            let x = j as f64 - i as f64;
            sw += w;
            swx += w * x;
            swx2 += w * x * x;
            swy += w * y[j];
            swxy += w * x * y[j];
        }
        if sw <= 0.0 {
            out[i] = y[i];
            continue;
        }
        let denom = sw * swx2 - swx * swx;
        out[i] = if denom.abs() > 1e-12 * sw * swx2.max(1.0) {
            (swx2 * swy - swx * swxy) / denom
        } else {
            swy / sw
        };
    }
}

/// Cleveland robustness weights: bisquare of residuals scaled by six
/// times their median magnitude. A near-perfect fit keeps all weights at 1.
fn bisquare_weights(residuals: &[f64], out: &mut [f64]) {
    let mut mags: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    mags.sort_by(|a, b| a.total_cmp(b));
    let median = mags[mags.len() / 2];
    let h = 6.0 * median;
    if h < 1e-12 {
        out.fill(1.0);
        return;
    }
    for (w, r) in out.iter_mut().zip(residuals) {
        let u = r.abs() / h;
        *w = if u < 1.0 {
            let v = 1.0 - u * u;
            v * v
        } else {
            0.0
        };
    }
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// Subtract the historical trend and residual at the wrapped step
    /// index, preserving seasonality. A live stream identical to the
    /// historical one maps exactly onto the seasonal component.
    pub fn residualize(&self, x: f64, step_index: usize) -> f64 {
        let i = step_index % self.len();
        x - self.trend[i] - self.residual[i]
    }

    /// Variant that subtracts the trend only, leaving live noise in place.
    pub fn residualize_trend_only(&self, x: f64, step_index: usize) -> f64 {
        let i = step_index % self.len();
        x - self.trend[i]
    }

    /// `step,trend,seasonal,residual` cache file.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "step,trend,seasonal,residual")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                i, self.trend[i], self.seasonal[i], self.residual[i]
            )?;
        }
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv(r: impl BufRead, period: usize) -> Result<Decomposition> {
        let mut dec = Decomposition {
            trend: Vec::new(),
            seasonal: Vec::new(),
            residual: Vec::new(),
            period,
        };
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if k == 0 || line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(Error::MalformedData(format!(
                    "decomposition row has {} fields",
                    f.len()
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::MalformedData(format!("bad float `{s}`")))
            };
            dec.trend.push(parse(f[1])?);
            dec.seasonal.push(parse(f[2])?);
            dec.residual.push(parse(f[3])?);
        }
        Ok(dec)
    }

    pub fn read_csv_file(path: impl AsRef<Path>, period: usize) -> Result<Decomposition> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(f), period)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    const PERIOD: usize = 336;

    #[test]
    fn rejects_short_series() {
        let s = vec![1.0; 400];
        assert!(matches!(
            stl_decompose(&s, PERIOD),
            Err(Error::SeriesTooShort { .. })
        ));
        assert!(stl_decompose(&s, 1).is_err());
    }

    #[test]
    fn constant_series_decomposes_to_trend() {
        let c = 57.25;
        let s = vec![c; 4 * PERIOD];
        let d = stl_decompose(&s, PERIOD).unwrap();
        let tol = 1e-6 * c.abs() + 1e-9;
        for i in 0..s.len() {
            assert!((d.trend[i] - c).abs() < tol, "trend[{i}] = {}", d.trend[i]);
            assert!(d.seasonal[i].abs() < tol);
            assert!(d.residual[i].abs() < tol);
        }
    }

    #[test]
    fn sinusoid_lands_in_seasonal() {
        let amp = 2.5;
        let n = 10 * PERIOD;
        let s: Vec<f64> = (0..n)
            .map(|i| amp * (TAU * i as f64 / PERIOD as f64).sin())
            .collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        for i in PERIOD..n - PERIOD {
            assert!(
                (d.seasonal[i] - s[i]).abs() <= 0.05 * amp,
                "seasonal[{i}] = {} vs {}",
                d.seasonal[i],
                s[i]
            );
            assert!(d.trend[i].abs() <= 0.05 * amp);
        }
    }

    #[test]
    fn ramp_plus_sinusoid_separates() {
        let amp = 2.0;
        let slope = 0.01;
        let n = 10 * PERIOD;
        let s: Vec<f64> = (0..n)
            .map(|i| slope * i as f64 + amp * (TAU * i as f64 / PERIOD as f64).sin())
            .collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        for i in PERIOD..n - PERIOD {
            assert!((d.seasonal[i] - amp * (TAU * i as f64 / PERIOD as f64).sin()).abs()
                <= 0.05 * amp);
        }
        // Interior trend slope within 5% of the generating slope.
        let (lo, hi) = (PERIOD, n - PERIOD);
        let fitted_slope = (d.trend[hi] - d.trend[lo]) / (hi - lo) as f64;
        assert!(
            (fitted_slope - slope).abs() <= 0.05 * slope,
            "slope {fitted_slope}"
        );
    }

    #[test]
    fn reconstruction_identity_and_seasonal_balance() {
        // Noisy mixed series; identity must hold to 1e-9 and the seasonal
        // component must cancel over every aligned period window.
        let n = 5 * PERIOD;
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64;
                40.0 + 0.002 * t
                    + 1.5 * (TAU * t / PERIOD as f64).sin()
                    + 0.3 * (t * 0.7).sin()
            })
            .collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        let scale = s.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for i in 0..n {
            let r = (d.trend[i] + d.seasonal[i] + d.residual[i] - s[i]).abs();
            assert!(r <= 1e-9, "reconstruction error {r} at {i}");
        }
        for w in 0..n / PERIOD {
            let m: f64 =
                d.seasonal[w * PERIOD..(w + 1) * PERIOD].iter().sum::<f64>() / PERIOD as f64;
            assert!(m.abs() <= 1e-6 * scale, "window {w} seasonal mean {m}");
        }
    }

    #[test]
    fn decomposition_is_deterministic() {
        let s: Vec<f64> = (0..3 * PERIOD).map(|i| (i as f64 * 0.13).sin() * 3.0).collect();
        let a = stl_decompose(&s, PERIOD).unwrap();
        let b = stl_decompose(&s, PERIOD).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn residualize_recovers_seasonal_on_identical_stream() {
        let n = 3 * PERIOD;
        let s: Vec<f64> = (0..n)
            .map(|i| 10.0 + (TAU * i as f64 / PERIOD as f64).sin() + (i as f64 * 0.31).cos() * 0.2)
            .collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        for (i, &x) in s.iter().enumerate() {
            assert!((d.residualize(x, i) - d.seasonal[i]).abs() < 1e-12);
        }
        // Wraps past the historical horizon.
        assert_eq!(d.residualize(s[5], n + 5), d.residualize(s[5], 5));
    }

    #[test]
    fn residualize_is_linear_in_x() {
        let s: Vec<f64> = (0..2 * PERIOD).map(|i| (i % 7) as f64).collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        for i in [0, 17, 500] {
            let base = d.residualize(2.0, i);
            assert!((d.residualize(2.0 + 5.0, i) - (base + 5.0)).abs() < 1e-12);
        }
        assert!((d.residualize_trend_only(3.0, 9) - (3.0 - d.trend[9])).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip() {
        let s: Vec<f64> = (0..2 * PERIOD).map(|i| (i as f64).sqrt()).collect();
        let d = stl_decompose(&s, PERIOD).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = Decomposition::read_csv(std::io::Cursor::new(buf), PERIOD).unwrap();
        assert_eq!(d, back);
    }
}

#[cfg(test)]
mod property_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn reconstruction_is_exact_on_arbitrary_series(
            values in proptest::collection::vec(-100.0f64..100.0, 48..200),
        ) {
            let d = stl_decompose(&values, 12).unwrap();
            for i in 0..values.len() {
                let err = (d.trend[i] + d.seasonal[i] + d.residual[i] - values[i]).abs();
                prop_assert!(err <= 1e-9);
            }
        }

        #[test]
        fn residualize_shifts_additively(
            values in proptest::collection::vec(-50.0f64..50.0, 48..96),
            x in -100.0f64..100.0,
            shift in -100.0f64..100.0,
            idx in 0usize..400,
        ) {
            let d = stl_decompose(&values, 12).unwrap();
            let base = d.residualize(x, idx);
            let moved = d.residualize(x + shift, idx);
            prop_assert!((moved - (base + shift)).abs() <= 1e-9);
        }
    }
}
