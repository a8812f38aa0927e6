//! Uniform dispatch over the available estimators.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{fit_lad, fit_ls_guarded, fit_penalized};
use crate::distribution::TruncationRule;
use crate::em::{default_initial_channels, fit_mkc_em, EmIteration};
use crate::error::{Error, Result};
use crate::solver::fit_mkc;
use crate::types::{channel_column, residuals, ChannelParams, Dataset, PrecisionSpec, RegressionResult, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Ls,
    Wls,
    Ridge,
    Lad,
    Mkc,
    MkcEm,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Ls, Method::Wls, Method::Ridge, Method::Lad, Method::Mkc, Method::MkcEm];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Wls => "wls",
            Method::Ridge => "ridge",
            Method::Lad => "lad",
            Method::Mkc => "mkc",
            Method::MkcEm => "mkc-em",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Input(format!("unknown method '{s}' (expected ls, wls, ridge, lad, mkc or mkc-em)")))
    }
}

/// Bandwidth used by `mkc` when none is given.
pub const DEFAULT_MKC_SIGMA: f64 = 0.5;

/// Per-method tuning. Missing `d` means unit scales for `wls`/`ridge` and
/// least-squares residual standard deviations for `mkc`/`mkc-em`. Missing
/// `sigma` means 0.5 for `mkc` and 20 for the EM start.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSettings {
    pub d: Option<Vec<f64>>,
    pub sigma: Option<Vec<f64>>,
    pub ridge_lambda: f64,
    pub config: SolverConfig,
}

impl Default for MethodSettings {
    fn default() -> Self {
        Self { d: None, sigma: None, ridge_lambda: 1.0, config: SolverConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodFit {
    pub method: Method,
    pub result: RegressionResult,
    /// Kernel parameters in effect at the end of the fit.
    pub channels: Option<Vec<ChannelParams>>,
    pub em_trace: Option<Vec<EmIteration>>,
}

fn broadcast(values: &[f64], m: usize, name: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; m]),
        n if n == m => Ok(values.to_vec()),
        n => Err(Error::Input(format!("--{name} has {n} entries, dataset has {m} outputs"))),
    }
}

impl MethodSettings {
    fn precision(&self, m: usize) -> Result<PrecisionSpec> {
        match &self.d {
            Some(d) => PrecisionSpec::new(broadcast(d, m, "d")?),
            None => Ok(PrecisionSpec::unit(m)),
        }
    }

    /// Starting channels for the kernel-based methods.
    pub fn channels(&self, data: &Dataset, default_sigma: f64) -> Result<Vec<ChannelParams>> {
        let m = data.outputs();
        let mut channels = default_initial_channels(data, &self.config)?;
        let d = self.d.as_deref().map(|d| broadcast(d, m, "d")).transpose()?;
        let sigma = match &self.sigma {
            Some(s) => broadcast(s, m, "sigma")?,
            None => vec![default_sigma; m],
        };
        let res = residuals(data, &fit_ls_guarded(data, self.config.ridge_guard)?.theta)?;
        let rule = TruncationRule::default();
        for (i, ch) in channels.iter_mut().enumerate() {
            let di = d.as_ref().map_or(ch.d(), |d| d[i]);
            let col = channel_column(&res, i);
            *ch = ChannelParams::new(sigma[i], di, rule.half_width(&col, di))?;
        }
        Ok(channels)
    }
}

pub fn fit_method(data: &Dataset, method: Method, settings: &MethodSettings) -> Result<MethodFit> {
    settings.config.validate()?;
    let m = data.outputs();
    let plain = |result| MethodFit { method, result, channels: None, em_trace: None };
    Ok(match method {
        Method::Ls => plain(fit_ls_guarded(data, settings.config.ridge_guard)?),
        Method::Wls => plain(fit_penalized(data, &settings.precision(m)?, 0.0, settings.config.ridge_guard)?),
        Method::Ridge => {
            if !(settings.ridge_lambda.is_finite() && settings.ridge_lambda >= 0.0) {
                return Err(Error::Input(format!("ridge penalty must be nonnegative, got {}", settings.ridge_lambda)));
            }
            plain(fit_penalized(data, &settings.precision(m)?, settings.ridge_lambda, settings.config.ridge_guard)?)
        }
        Method::Lad => plain(fit_lad(data, &settings.config)?),
        Method::Mkc => {
            let channels = settings.channels(data, DEFAULT_MKC_SIGMA)?;
            let result = fit_mkc(data, &PrecisionSpec::from_channels(&channels), &channels, &settings.config, None)?;
            MethodFit { method, result, channels: Some(channels), em_trace: None }
        }
        Method::MkcEm => {
            let init = settings.channels(data, crate::em::DEFAULT_INITIAL_SIGMA)?;
            let fit = fit_mkc_em(data, &init, &settings.config)?;
            MethodFit { method, result: fit.result, channels: Some(fit.channels), em_trace: Some(fit.trace) }
        }
    })
}
