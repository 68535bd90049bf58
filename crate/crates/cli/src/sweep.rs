use std::fmt;
use std::path::Path;
use std::str::FromStr;

use infoval_core::scenario::{run_scenario, ScenarioConfig};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{create_out_dir, load_config, write_file, Failure, SweepArgs, SWEEP_FILE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Epsilon,
    Strike,
    Sigma,
    Atoms,
    Steps,
}

impl FromStr for SweepParam {
    type Err = Failure;

    fn from_str(s: &str) -> Result<Self, Failure> {
        match s {
            "epsilon" => Ok(SweepParam::Epsilon),
            "strike" => Ok(SweepParam::Strike),
            "sigma" => Ok(SweepParam::Sigma),
            "atoms" => Ok(SweepParam::Atoms),
            "steps" => Ok(SweepParam::Steps),
            other => Err(Failure::Config(format!(
                "unknown sweep parameter '{other}' (expected epsilon, strike, sigma, atoms or steps)"
            ))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::Strike => "strike",
            SweepParam::Sigma => "sigma",
            SweepParam::Atoms => "atoms",
            SweepParam::Steps => "steps",
        })
    }
}

impl SweepParam {
    /// Copy of `base` with the parameter set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, Failure> {
        let mut c = base.clone();
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Failure::Config(format!("{self} must be a positive integer, got {value}")))
            }
        };
        match self {
            SweepParam::Epsilon => c.info.epsilon = value,
            SweepParam::Strike => c.payoff.strike = value,
            SweepParam::Sigma => c.market.sigma = value,
            SweepParam::Atoms => c.info.atoms = count()?,
            SweepParam::Steps => c.numerics.n_steps = count()?,
        }
        c.validate()?;
        Ok(c)
    }
}

/// Parses `PARAM=V1,V2,...`.
pub fn parse_sweep(spec: &str) -> Result<(SweepParam, Vec<f64>), Failure> {
    let Some((name, values)) = spec.split_once('=') else {
        return Err(Failure::Config(format!("sweep '{spec}' is not of the form PARAM=V1,V2,...")));
    };
    let param: SweepParam = name.trim().parse()?;
    let values = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Config(format!("bad {param} value '{v}'")))
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    if values.is_empty() {
        return Err(Failure::Config("empty sweep".into()));
    }
    Ok((param, values))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub base_value: f64,
    pub base_std_error: f64,
    pub projection_value: f64,
    pub expected_cei: f64,
    pub cei_std_error: f64,
}

pub fn sweep(args: &SweepArgs, out: &Path, manifest: &mut RunManifest) -> Result<(), Failure> {
    let base = load_config(&args.base.config, args.base.seed)?;
    manifest.seed = Some(base.numerics.seed);
    let (param, values) = parse_sweep(&args.sweep)?;
    // validate every point before spending time on any of them
    let configs = values
        .iter()
        .map(|&v| param.apply(&base, v))
        .collect::<Result<Vec<_>, _>>()?;
    create_out_dir(out)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    println!("{param:>10} {:>12} {:>12} {:>12}", "base", "E[CEI]", "std err");
    for (value, config) in values.iter().zip(&configs) {
        let r = run_scenario(config)?;
        let row = SweepRow {
            parameter: param.to_string(),
            value: *value,
            base_value: r.base_value,
            base_std_error: r.base_std_error,
            projection_value: r.projection_value,
            expected_cei: r.expected_cei.mean,
            cei_std_error: r.expected_cei.std_error,
        };
        println!(
            "{:>10} {:>12.6} {:>12.6} {:>12.6}",
            value, row.base_value, row.expected_cei, row.cei_std_error
        );
        csv.serialize(&row).map_err(|e| Failure::Solver(e.to_string()))?;
    }
    let bytes = csv.into_inner().map_err(|e| Failure::Solver(e.to_string()))?;
    write_file(out, SWEEP_FILE, &bytes, manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sweeps() {
        let (p, v) = parse_sweep("epsilon=0.1, 1,10").unwrap();
        assert_eq!(p, SweepParam::Epsilon);
        assert_eq!(v, vec![0.1, 1.0, 10.0]);
        assert!(matches!(parse_sweep("rho=1,2"), Err(Failure::Config(_))));
        assert!(matches!(parse_sweep("epsilon"), Err(Failure::Config(_))));
        assert!(matches!(parse_sweep("atoms=8,x"), Err(Failure::Config(_))));
    }
}
