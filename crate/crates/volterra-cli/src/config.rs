// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat key-value experiment configuration.
//!
//! A config file is plain text with `[section]` headers, `key = value`
//! lines, and `#` comments:
//!
//! ```text
//! command = solve
//!
//! [kernel]
//! name = fractional
//! gamma = 0.25
//!
//! [driver]
//! kind = smooth
//! d = 1
//! cells = 256
//! t_end = 1.0
//!
//! [solve]
//! y0 = 0.4
//! field.0 = zero
//! field.1 = sin
//! ```
//!
//! Keys are stored flat as `section.key` (top-level keys keep their bare
//! name).  Unknown keys are validation errors: configs are meant to be
//! diffable and typo-proof.  The raw file bytes feed the config hash in
//! the run manifest, so byte-identical configs reproduce byte-identical
//! outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use volterra_rough::{Error, Result, VectorField, VolterraKernel};

/// Keys accepted in a config file.  `field.*` and `weight.*` families are
/// matched by prefix.
const KNOWN_KEYS: &[&str] = &[
    "command",
    "kernel.name",
    "kernel.gamma",
    "kernel.lambda",
    "driver.kind",
    "driver.d",
    "driver.cells",
    "driver.t_end",
    "driver.seed",
    "driver.hurst",
    "driver.path",
    "driver.amplitude",
    "exponents.alpha",
    "exponents.gamma",
    "exponents.beta",
    "truncation.order",
    "truncation.level",
    "grid.refine",
    "grid.quad_refine",
    "grid.levels",
    "tolerances.sewing",
    "tolerances.solver",
    "tolerances.max_levels",
    "solve.y0",
    "solve.window",
    "solve.max_picard",
    "solve.theta_max",
    "integrate.label",
    "integrate.y0",
    "integrate.tau",
    "coproduct.tree",
    "enumerate.max_grade",
    "enumerate.max_label",
    "convergence.label",
    "convergence.tau",
    "chen.grade",
    "chen.s",
    "chen.u",
    "chen.t",
    "chen.tau",
    "verify.samples",
    "verify.seed",
    "verify.gamma",
    "output.dir",
];

const KNOWN_PREFIXES: &[&str] = &["solve.field.", "integrate.weight."];

/// Parsed experiment configuration: the raw text (for hashing) plus the
/// flattened key-value map.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    raw: String,
    entries: BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Parses config text.  Duplicate or unknown keys are validation
    /// errors.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::validation(format!(
                        "config line {}: empty section name",
                        lineno + 1
                    )));
                }
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::validation(format!(
                    "config line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{section}.{}", key.trim())
            };
            let known = KNOWN_KEYS.contains(&key.as_str())
                || KNOWN_PREFIXES.iter().any(|p| key.starts_with(p));
            if !known {
                return Err(Error::validation(format!(
                    "config line {}: unknown key `{key}`",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::validation(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }
        Ok(ExperimentConfig { raw: text.to_string(), entries })
    }

    /// Reads and parses a config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        ExperimentConfig::parse(&text)
    }

    /// An empty configuration (all defaults).
    pub fn empty() -> ExperimentConfig {
        ExperimentConfig { raw: String::new(), entries: BTreeMap::new() }
    }

    /// The raw config text (hash input).
    pub fn raw(&self) -> &str {
        &self.raw
    }

    /// Raw string value of a key.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn parse_as<T: FromStr>(&self, key: &str, value: &str) -> Result<T>
    where
        T::Err: Display,
    {
        value.parse::<T>().map_err(|e| {
            Error::validation(format!("config key `{key}` = `{value}`: {e}"))
        })
    }

    /// Typed value with a default.
    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(key) {
            Some(v) => self.parse_as(key, v),
            None => Ok(default),
        }
    }

    /// Typed optional value.
    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.get(key) {
            Some(v) => Ok(Some(self.parse_as(key, v)?)),
            None => Ok(None),
        }
    }

    /// Typed required value.
    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        match self.get(key) {
            Some(v) => self.parse_as(key, v),
            None => Err(Error::validation(format!("config key `{key}` is required"))),
        }
    }

    /// Comma-separated list value with a default.
    pub fn get_list_or(&self, key: &str, default: &[usize]) -> Result<Vec<usize>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim().parse::<usize>().map_err(|e| {
                        Error::validation(format!("config key `{key}` entry `{part}`: {e}"))
                    })
                })
                .collect(),
        }
    }

    /// The declared command name, if any; when present it must match the
    /// invoked subcommand.
    pub fn command(&self) -> Option<&str> {
        self.get("command")
    }

    /// Output directory: `[output] dir`, overridable by the caller.
    pub fn output_dir(&self, cli_override: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_override {
            return p.to_path_buf();
        }
        PathBuf::from(self.get("output.dir").unwrap_or("out"))
    }

    /// The kernel described by the `[kernel]` section.
    pub fn kernel(&self) -> Result<VolterraKernel> {
        match self.get("kernel.name").unwrap_or("fractional") {
            "fractional" => VolterraKernel::fractional(self.get_or("kernel.gamma", 0.25)?),
            "exponential" => VolterraKernel::exponential(self.get_or("kernel.lambda", 1.0)?),
            "constant" => Ok(VolterraKernel::constant()),
            other => Err(Error::validation(format!(
                "unknown kernel name `{other}` (expected fractional, exponential, or constant)"
            ))),
        }
    }

    /// Declared regularity exponent of the driver.
    pub fn alpha(&self) -> Result<f64> {
        self.get_or("exponents.alpha", 1.0)
    }

    /// Kernel singularity order used by analysis (defaults to the
    /// kernel's own order).
    pub fn gamma(&self) -> Result<f64> {
        match self.get_opt::<f64>("exponents.gamma")? {
            Some(g) => Ok(g),
            None => Ok(self.kernel()?.gamma()),
        }
    }

    /// Vector fields for a solve: one per driver component including the
    /// drift slot, from keys `solve.field.0 .. solve.field.d`.
    ///
    /// Accepted forms: `zero`, `sin`, `constant:<c>`, `linear:<a>,<b>`
    /// (meaning `a*x + b`), `power:<k>`.  Derivative tables carry
    /// `orders` entries.
    pub fn fields(&self, dim: usize, orders: usize) -> Result<Vec<VectorField<'static>>> {
        let mut out = Vec::with_capacity(dim + 1);
        for i in 0..=dim {
            let key = format!("solve.field.{i}");
            let spec = self.get(&key).unwrap_or("zero");
            out.push(parse_field(&key, spec, orders)?);
        }
        Ok(out)
    }
}

fn parse_field(key: &str, spec: &str, orders: usize) -> Result<VectorField<'static>> {
    let (name, args) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), a.trim()),
        None => (spec.trim(), ""),
    };
    let one = |args: &str| -> Result<f64> {
        args.parse::<f64>()
            .map_err(|e| Error::validation(format!("config key `{key}` = `{spec}`: {e}")))
    };
    match name {
        "zero" => Ok(VectorField::zero(orders)),
        "sin" => Ok(VectorField::sine(orders)),
        "constant" => Ok(VectorField::constant(one(args)?, orders)),
        "power" => {
            let k = args.parse::<u32>().map_err(|e| {
                Error::validation(format!("config key `{key}` = `{spec}`: {e}"))
            })?;
            Ok(VectorField::power(k, orders))
        }
        "linear" => {
            let Some((a, b)) = args.split_once(',') else {
                return Err(Error::validation(format!(
                    "config key `{key}` = `{spec}`: linear needs `linear:<a>,<b>`"
                )));
            };
            Ok(VectorField::linear(one(a.trim())?, one(b.trim())?, orders))
        }
        other => Err(Error::validation(format!(
            "config key `{key}`: unknown field form `{other}` \
             (expected zero, sin, constant:<c>, linear:<a>,<b>, power:<k>)"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_flatten_and_defaults_apply() {
        let cfg = ExperimentConfig::parse(
            "command = solve\n\n[kernel]\nname = fractional\ngamma = 0.5 # comment\n\
             \n[driver]\nkind = smooth\ncells = 64\n",
        )
        .unwrap();
        assert_eq!(cfg.command(), Some("solve"));
        assert_eq!(cfg.get("kernel.gamma"), Some("0.5"));
        assert_eq!(cfg.get_or("driver.cells", 0usize).unwrap(), 64);
        assert_eq!(cfg.get_or("driver.t_end", 1.0).unwrap(), 1.0);
        assert_eq!(cfg.kernel().unwrap().gamma(), 0.5);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        assert!(matches!(
            ExperimentConfig::parse("[kernel]\nnom = fractional\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("[kernel]\nname = a\nname = b\n"),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("just words\n"),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn field_specs_cover_the_named_families() {
        let cfg = ExperimentConfig::parse(
            "[solve]\nfield.0 = constant:0.5\nfield.1 = linear:2.0,1.0\n",
        )
        .unwrap();
        let fields = cfg.fields(1, 2).unwrap();
        assert_eq!(fields[0].eval(3.0), 0.5);
        assert_eq!(fields[1].eval(3.0), 7.0);
        assert!(matches!(
            parse_field("k", "mystery", 2),
            Err(Error::Validation(_))
        ));
    }
}
