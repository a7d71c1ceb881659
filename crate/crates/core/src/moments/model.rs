use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// A slowly varying factor `L` of a power-law correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SlowlyVarying {
    /// `L(x) = c`.
    Const { c: f64 },
    /// `L(x) = ln(x + offset)`, `offset >= 1`.
    Log { offset: f64 },
    /// `L(x) = ln(e + x)^exponent`.
    PowerOfLog { exponent: f64 },
    /// `L(x) = ln(e + ln(1 + x))`.
    IteratedLog,
}

impl SlowlyVarying {
    pub fn one() -> Self {
        SlowlyVarying::Const { c: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            SlowlyVarying::Const { c } if !(c > 0.0 && c.is_finite()) => {
                Err(Error::Model(format!("constant slowly varying factor must be positive, got {c}")))
            }
            SlowlyVarying::Log { offset } if !(offset >= 1.0 && offset.is_finite()) => {
                Err(Error::Model(format!("log offset must be >= 1, got {offset}")))
            }
            SlowlyVarying::PowerOfLog { exponent } if !exponent.is_finite() => {
                Err(Error::Model("log exponent must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SlowlyVarying::Const { c } => c,
            SlowlyVarying::Log { offset } => (x + offset).ln(),
            SlowlyVarying::PowerOfLog { exponent } => (std::f64::consts::E + x).ln().powf(exponent),
            SlowlyVarying::IteratedLog => (std::f64::consts::E + x.ln_1p()).ln(),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, SlowlyVarying::Const { .. })
    }
}

impl fmt::Display for SlowlyVarying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SlowlyVarying::Const { c } if c == 1.0 => f.write_str("const"),
            SlowlyVarying::Const { c } => write!(f, "const:{c}"),
            SlowlyVarying::Log { offset } if offset == 1.0 => f.write_str("log"),
            SlowlyVarying::Log { offset } => write!(f, "log:{offset}"),
            SlowlyVarying::PowerOfLog { exponent } => write!(f, "logpow:{exponent}"),
            SlowlyVarying::IteratedLog => f.write_str("loglog"),
        }
    }
}

impl FromStr for SlowlyVarying {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, arg) = match s.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (s, None),
        };
        let num = |a: &str| a.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{a}` in L={s}")));
        let l = match (head, arg) {
            ("const", None) => SlowlyVarying::one(),
            ("const", Some(a)) => SlowlyVarying::Const { c: num(a)? },
            ("log", None) => SlowlyVarying::Log { offset: 1.0 },
            ("log", Some(a)) => SlowlyVarying::Log { offset: num(a)? },
            ("logpow", Some(a)) => SlowlyVarying::PowerOfLog { exponent: num(a)? },
            ("loglog", None) => SlowlyVarying::IteratedLog,
            _ => return Err(Error::Parse(format!("unknown slowly varying factor `{s}` (expected const[:c]|log[:offset]|logpow:<e>|loglog)"))),
        };
        l.validate()?;
        Ok(l)
    }
}

/// A symmetric correlation kernel `ρ` on the integers with `ρ(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovarianceModel {
    /// `ρ(k) = 1{k = 0}`.
    Delta,
    /// `ρ(k) = a^{|k|}`.
    Geometric { a: f64 },
    /// `ρ(k) = |k|^{-D} L(|k|)` for `k != 0`.
    PowerLaw { d: f64, l: SlowlyVarying },
    /// `ρ(k) = values[|k|]`, zero beyond the table.
    Table { values: Vec<f64> },
    /// Fractional Gaussian noise, `ρ(k) = ½(|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H})`.
    FractionalNoise { h: f64 },
}

impl CovarianceModel {
    pub fn geometric(a: f64) -> Result<Self> {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Model(format!("geometric ratio must lie in (0,1), got {a}")));
        }
        Ok(CovarianceModel::Geometric { a })
    }

    pub fn power_law(d: f64, l: SlowlyVarying) -> Result<Self> {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::Model(format!("power-law exponent D must lie in (0,1), got {d}")));
        }
        l.validate()?;
        Ok(CovarianceModel::PowerLaw { d, l })
    }

    pub fn fractional_noise(h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Model(format!("fractional noise needs H in (0,1), got {h}")));
        }
        Ok(CovarianceModel::FractionalNoise { h })
    }

    pub fn table(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            Some(&v) if v == 1.0 => {}
            Some(&v) => return Err(Error::Model(format!("table correlation must have rho(0) = 1, got {v}"))),
            None => return Err(Error::Model("empty correlation table".into())),
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("correlation table has non-finite values".into()));
        }
        Ok(CovarianceModel::Table { values })
    }

    /// Parses a `lag,value` table; negative lags must agree with their mirror
    /// image and lags that are not listed have correlation zero.
    pub fn table_from_csv(text: &str) -> Result<Self> {
        let mut entries: Vec<(i64, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse(format!("line {}: expected `lag,value`", lineno + 1)));
            };
            match (a.parse::<i64>(), b.parse::<f64>()) {
                (Ok(lag), Ok(v)) => entries.push((lag, v)),
                _ if entries.is_empty() && lineno == 0 => continue, // header
                _ => return Err(Error::Parse(format!("line {}: cannot parse `{line}`", lineno + 1))),
            }
        }
        let max = entries.iter().map(|(k, _)| k.unsigned_abs()).max().unwrap_or(0) as usize;
        let mut values: Vec<Option<f64>> = vec![None; max + 1];
        for (lag, v) in entries {
            let slot = &mut values[lag.unsigned_abs() as usize];
            match slot {
                Some(old) if *old != v => {
                    return Err(Error::Model(format!("table is not symmetric at lag {}: {old} vs {v}", lag.abs())))
                }
                _ => *slot = Some(v),
            }
        }
        if values[0].is_none() {
            return Err(Error::Model("table does not list lag 0".into()));
        }
        Self::table(values.into_iter().map(|v| v.unwrap_or(0.0)).collect())
    }

    pub fn rho(&self, k: i64) -> f64 {
        let k = k.unsigned_abs();
        if k == 0 {
            return 1.0;
        }
        match self {
            CovarianceModel::Delta => 0.0,
            CovarianceModel::Geometric { a } => a.powf(k as f64),
            CovarianceModel::PowerLaw { d, l } => {
                let x = k as f64;
                x.powf(-d) * l.eval(x)
            }
            CovarianceModel::Table { values } => values.get(k as usize).copied().unwrap_or(0.0),
            CovarianceModel::FractionalNoise { h } => {
                let x = k as f64;
                let e = 2.0 * h;
                0.5 * ((x + 1.0).powf(e) - 2.0 * x.powf(e) + (x - 1.0).powf(e))
            }
        }
    }

    /// `(D, L)` with `ρ(k) ~ k^{-D} L(k)` for models with a power-law tail.
    /// Fractional noise with `H > 1/2` has `D = 2 - 2H` and `L → H(2H - 1)`.
    pub fn power_tail(&self) -> Option<(f64, SlowlyVarying)> {
        match *self {
            CovarianceModel::PowerLaw { d, l } => Some((d, l)),
            CovarianceModel::FractionalNoise { h } if h > 0.5 => {
                Some((2.0 - 2.0 * h, SlowlyVarying::Const { c: h * (2.0 * h - 1.0) }))
            }
            _ => None,
        }
    }

    /// `ρ(0), ..., ρ(len - 1)`.
    pub fn lags(&self, len: usize) -> Vec<f64> {
        (0..len as i64).map(|k| self.rho(k)).collect()
    }

    /// Whether every `|ρ(k)| <= 1` for `|k| < len`.
    pub fn bounded_on(&self, len: usize) -> bool {
        (0..len as i64).all(|k| self.rho(k).abs() <= 1.0)
    }

    pub fn parse_spec(spec: &str) -> Result<Self> {
        spec.parse()
    }
}

impl fmt::Display for CovarianceModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CovarianceModel::Delta => f.write_str("delta"),
            CovarianceModel::Geometric { a } => write!(f, "geometric:a={a}"),
            CovarianceModel::PowerLaw { d, l } => write!(f, "powerlaw:D={d},L={l}"),
            CovarianceModel::Table { values } => write!(f, "table[{} lags]", values.len()),
            CovarianceModel::FractionalNoise { h } => write!(f, "fgn:H={h}"),
        }
    }
}

impl FromStr for CovarianceModel {
    type Err = Error;

    /// `delta`, `geometric:a=<a>`, `powerlaw:D=<d>[,L=<factor>]`, `fgn:H=<h>`, `table:<path>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "delta" {
            return Ok(CovarianceModel::Delta);
        }
        if let Some(rest) = s.strip_prefix("geometric:") {
            let a = rest
                .strip_prefix("a=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("expected geometric:a=<float>, got `{s}`")))?;
            return Self::geometric(a);
        }
        if let Some(rest) = s.strip_prefix("powerlaw:") {
            let mut d = None;
            let mut l = SlowlyVarying::one();
            for part in rest.split(',') {
                if let Some(v) = part.strip_prefix("D=") {
                    d = Some(v.parse::<f64>().map_err(|_| Error::Parse(format!("bad exponent `{v}`")))?);
                } else if let Some(v) = part.strip_prefix("L=") {
                    l = v.parse()?;
                } else {
                    return Err(Error::Parse(format!("unexpected `{part}` in `{s}`")));
                }
            }
            let d = d.ok_or_else(|| Error::Parse(format!("missing D= in `{s}`")))?;
            return Self::power_law(d, l);
        }
        if let Some(rest) = s.strip_prefix("fgn:") {
            let h = rest
                .strip_prefix("H=")
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse(format!("expected fgn:H=<float>, got `{s}`")))?;
            return Self::fractional_noise(h);
        }
        if let Some(path) = s.strip_prefix("table:") {
            let text = std::fs::read_to_string(Path::new(path))
                .map_err(|e| Error::Io(format!("cannot read table `{path}`: {e}")))?;
            return Self::table_from_csv(&text);
        }
        Err(Error::Parse(format!(
            "unknown covariance model `{s}` (expected delta|geometric:a=..|powerlaw:D=..[,L=..]|fgn:H=..|table:<path>)"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar() {
        assert_eq!("delta".parse::<CovarianceModel>().unwrap(), CovarianceModel::Delta);
        assert_eq!("geometric:a=0.5".parse::<CovarianceModel>().unwrap(), CovarianceModel::Geometric { a: 0.5 });
        let m: CovarianceModel = "powerlaw:D=0.3,L=log".parse().unwrap();
        assert_eq!(m, CovarianceModel::PowerLaw { d: 0.3, l: SlowlyVarying::Log { offset: 1.0 } });
        let m: CovarianceModel = "powerlaw:D=0.3,L=const:2".parse().unwrap();
        assert_eq!(m.rho(1), 2.0);
        let m: CovarianceModel = "powerlaw:D=0.2,L=loglog".parse().unwrap();
        assert!(matches!(m, CovarianceModel::PowerLaw { l: SlowlyVarying::IteratedLog, .. }));
        assert!("geometric:a=1.5".parse::<CovarianceModel>().is_err());
        assert!("powerlaw:L=log".parse::<CovarianceModel>().is_err());
        assert!("cauchy".parse::<CovarianceModel>().is_err());
        assert!(matches!("table:/nonexistent/x.csv".parse::<CovarianceModel>(), Err(Error::Io(_))));
    }

    #[test]
    fn display_round_trip() {
        for s in ["delta", "geometric:a=0.25", "fgn:H=0.8", "powerlaw:D=0.3,L=const", "powerlaw:D=0.4,L=log:2", "powerlaw:D=0.1,L=logpow:1.5"] {
            let m: CovarianceModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
    }

    #[test]
    fn symmetric_and_unit_at_zero() {
        let models = [
            CovarianceModel::Delta,
            CovarianceModel::geometric(0.3).unwrap(),
            CovarianceModel::power_law(0.3, SlowlyVarying::Log { offset: 2.0 }).unwrap(),
            CovarianceModel::table(vec![1.0, -0.4, 0.1]).unwrap(),
            CovarianceModel::fractional_noise(0.8).unwrap(),
        ];
        for m in &models {
            assert_eq!(m.rho(0), 1.0);
            for k in 1..20 {
                assert_eq!(m.rho(k), m.rho(-k));
            }
        }
        assert_eq!(models[3].rho(7), 0.0);
    }

    #[test]
    fn fractional_noise_tail() {
        let m = CovarianceModel::fractional_noise(0.8).unwrap();
        let (d, l) = m.power_tail().unwrap();
        assert!((d - 0.4).abs() < 1e-15);
        let k = 10_000.0f64;
        assert!((m.rho(10_000) / (k.powf(-d) * l.eval(k)) - 1.0).abs() < 1e-3);
        assert_eq!(CovarianceModel::fractional_noise(0.5).unwrap().rho(3), 0.0);
        assert!(CovarianceModel::fractional_noise(0.3).unwrap().power_tail().is_none());
        assert!(CovarianceModel::fractional_noise(0.3).unwrap().rho(1) < 0.0);
        assert!(CovarianceModel::fractional_noise(1.0).is_err());
    }

    #[test]
    fn table_csv() {
        let m = CovarianceModel::table_from_csv("lag,value\n0,1\n1,0.5\n-1,0.5\n3,0.1\n").unwrap();
        assert_eq!(m, CovarianceModel::Table { values: vec![1.0, 0.5, 0.0, 0.1] });
        assert!(CovarianceModel::table_from_csv("0,1\n1,0.5\n-1,0.4\n").is_err());
        assert!(CovarianceModel::table_from_csv("0,0.9\n").is_err());
        assert!(CovarianceModel::table_from_csv("1,0.5\n").is_err());
    }

    #[test]
    fn slowly_varying_ratio() {
        for l in [
            SlowlyVarying::one(),
            SlowlyVarying::Log { offset: 1.0 },
            SlowlyVarying::PowerOfLog { exponent: 0.5 },
            SlowlyVarying::IteratedLog,
        ] {
            let x = 1e6;
            assert!(l.eval(1.0) > 0.0);
            assert!((l.eval(2.0 * x) / l.eval(x) - 1.0).abs() < 0.11, "{l}");
            assert!((l.eval(1.1 * x) / l.eval(x) - 1.0).abs() < 0.01, "{l}");
        }
    }
}
