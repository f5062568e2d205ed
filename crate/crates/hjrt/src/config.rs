//! Flat key-value run configuration.
//!
//! The format is deliberately plain: one `section.key = value` per line, `#`
//! comments, comma-separated per-dimension lists. Example:
//!
//! ```text
//! scenario.name = linear2d
//! grid.lo = -2, -2
//! grid.hi = 2, 2
//! grid.counts = 251, 251
//! solve.mode = improved
//! solve.costs = 0.25, 0.5, 0.75, 1
//! solve.horizon = 1.2
//! output.field = linear2d.hjrt
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::grid::Grid;
use crate::scenario::{builtin_linear2d, builtin_pursuit_params, Scenario};
use crate::solver::{SolveMode, DEFAULT_CFL};

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { line, message: message.into() })
}

/// Which built-in problem the run solves.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioSpec {
    Linear2d,
    Pursuit { lambda: f64, speed: f64, radius: f64 },
}

impl ScenarioSpec {
    pub fn build(&self) -> Scenario {
        match self {
            ScenarioSpec::Linear2d => builtin_linear2d(),
            ScenarioSpec::Pursuit { lambda, speed, radius } => {
                builtin_pursuit_params(*lambda, *speed, *radius)
            }
        }
    }

    fn state_dim(&self) -> usize {
        match self {
            ScenarioSpec::Linear2d => 2,
            ScenarioSpec::Pursuit { .. } => 3,
        }
    }

    fn default_periodic(&self) -> Vec<bool> {
        match self {
            ScenarioSpec::Linear2d => vec![false, false],
            ScenarioSpec::Pursuit { .. } => vec![false, false, true],
        }
    }
}

/// Everything a `run` invocation needs.
#[derive(Debug)]
pub struct RunSpec {
    pub scenario: ScenarioSpec,
    pub grid: Arc<Grid>,
    pub mode: SolveMode,
    /// Admissible costs (improved mode).
    pub costs: Vec<f64>,
    /// Tube horizons (classical mode).
    pub horizons: Vec<f64>,
    pub epsilon: Option<f64>,
    pub cfl: f64,
    /// Explicit solve horizon, overriding the cost-derived one.
    pub horizon_override: Option<f64>,
    pub snapshots: Vec<f64>,
    pub field_name: String,
    pub write_masks: bool,
}

pub fn load_run_spec(path: &Path) -> Result<RunSpec, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { line: 0, message: format!("{}: {e}", path.display()) })?;
    parse_run_spec(&text)
}

pub fn parse_run_spec(text: &str) -> Result<RunSpec, ConfigError> {
    let entries = parse_entries(text)?;
    build_run_spec(entries)
}

type Entries = BTreeMap<String, (String, usize)>;

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let mut out = Entries::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return err(lineno, format!("expected `key = value`, got `{line}`"));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() {
            return err(lineno, "empty key");
        }
        if let Some((_, prev)) = out.get(&key).map(|(v, l)| (v.clone(), *l)) {
            return err(lineno, format!("duplicate key `{key}` (first set on line {prev})"));
        }
        out.insert(key, (value, lineno));
    }
    Ok(out)
}

struct Taker {
    entries: Entries,
}

impl Taker {
    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn scalar<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError { line, message: format!("cannot parse `{key}` from `{v}`") }),
        }
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => {
                let items: Result<Vec<T>, _> =
                    v.split(',').map(|t| t.trim().parse::<T>()).collect();
                items.map(Some).map_err(|_| ConfigError {
                    line,
                    message: format!("cannot parse `{key}` list from `{v}`"),
                })
            }
        }
    }
}

fn build_run_spec(entries: Entries) -> Result<RunSpec, ConfigError> {
    let mut t = Taker { entries };

    let (name, name_line) = t
        .take("scenario.name")
        .ok_or(ConfigError { line: 0, message: "missing `scenario.name`".into() })?;
    let scenario = match name.as_str() {
        "linear2d" => ScenarioSpec::Linear2d,
        "pursuit" => ScenarioSpec::Pursuit {
            lambda: t.scalar("scenario.lambda")?.unwrap_or(0.0),
            speed: t.scalar("scenario.speed")?.unwrap_or(5.0),
            radius: t.scalar("scenario.radius")?.unwrap_or(5.0),
        },
        other => return err(name_line, format!("unknown scenario `{other}`")),
    };

    let lo: Vec<f64> = t
        .list("grid.lo")?
        .ok_or(ConfigError { line: 0, message: "missing `grid.lo`".into() })?;
    let hi_line = t.entries.get("grid.hi").map(|(_, l)| *l).unwrap_or(0);
    let hi: Vec<f64> = t
        .list("grid.hi")?
        .ok_or(ConfigError { line: 0, message: "missing `grid.hi`".into() })?;
    let counts: Vec<usize> = t
        .list("grid.counts")?
        .ok_or(ConfigError { line: 0, message: "missing `grid.counts`".into() })?;
    let periodic: Vec<bool> = t
        .list("grid.periodic")?
        .unwrap_or_else(|| scenario.default_periodic());
    if lo.len() != scenario.state_dim() {
        return err(
            hi_line,
            format!(
                "grid has {} dimensions but scenario `{name}` has {}",
                lo.len(),
                scenario.state_dim()
            ),
        );
    }
    let grid = Grid::new(lo, hi, counts, periodic)
        .map_err(|e| ConfigError { line: hi_line, message: e.to_string() })?;

    let mode = match t.take("solve.mode") {
        None => SolveMode::Improved,
        Some((v, line)) => match v.as_str() {
            "improved" => SolveMode::Improved,
            "classical" => SolveMode::Classical,
            other => return err(line, format!("unknown solve mode `{other}`")),
        },
    };
    let costs: Vec<f64> = t.list("solve.costs")?.unwrap_or_default();
    let horizons: Vec<f64> = t.list("solve.horizons")?.unwrap_or_default();
    let epsilon = t.scalar("solve.epsilon")?;
    let cfl = t.scalar("solve.cfl")?.unwrap_or(DEFAULT_CFL);
    let horizon_override = t.scalar("solve.horizon")?;
    let snapshots: Vec<f64> = t.list("solve.snapshots")?.unwrap_or_default();
    let field_name = t
        .scalar::<String>("output.field")?
        .unwrap_or_else(|| "field.hjrt".into());
    let write_masks = t.scalar("output.masks")?.unwrap_or(true);

    match mode {
        SolveMode::Improved if costs.is_empty() => {
            return err(0, "improved mode needs a nonempty `solve.costs` list");
        }
        SolveMode::Classical if horizons.is_empty() => {
            return err(0, "classical mode needs a nonempty `solve.horizons` list");
        }
        _ => {}
    }

    if let Some((key, (_, line))) = t.entries.iter().next() {
        return err(*line, format!("unknown key `{key}`"));
    }

    Ok(RunSpec {
        scenario,
        grid: Arc::new(grid),
        mode,
        costs,
        horizons,
        epsilon,
        cfl,
        horizon_override,
        snapshots,
        field_name,
        write_masks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
# Horizon-1 tube study
scenario.name = linear2d
grid.lo = -2, -2
grid.hi = 2, 2
grid.counts = 51, 51
solve.costs = 0.25, 0.5, 0.75, 1
solve.horizon = 1.2
output.field = tubes.hjrt
";

    #[test]
    fn parses_a_complete_config() {
        let spec = parse_run_spec(GOOD).unwrap();
        assert_eq!(spec.scenario, ScenarioSpec::Linear2d);
        assert_eq!(spec.grid.counts(), &[51, 51]);
        assert_eq!(spec.costs, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(spec.horizon_override, Some(1.2));
        assert_eq!(spec.cfl, DEFAULT_CFL);
        assert_eq!(spec.field_name, "tubes.hjrt");
        assert!(spec.write_masks);
    }

    #[test]
    fn pursuit_defaults_to_periodic_heading() {
        let text = "\
scenario.name = pursuit
scenario.lambda = 0.1
grid.lo = -5, -10, 0
grid.hi = 20, 10, 6.283185307179586
grid.counts = 11, 11, 11
solve.costs = 0.5, 1, 1.5, 2
";
        let spec = parse_run_spec(text).unwrap();
        assert_eq!(spec.grid.periodic(), &[false, false, true]);
        assert_eq!(
            spec.scenario,
            ScenarioSpec::Pursuit { lambda: 0.1, speed: 5.0, radius: 5.0 }
        );
    }

    #[test]
    fn empty_cost_list_is_a_config_error() {
        let text = GOOD.replace("solve.costs = 0.25, 0.5, 0.75, 1\n", "");
        let e = parse_run_spec(&text).unwrap_err();
        assert!(e.message.contains("solve.costs"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = GOOD.replace("grid.counts = 51, 51", "grid.counts = fifty, 51");
        let e = parse_run_spec(&text).unwrap_err();
        assert_eq!(e.line, 5);
        let text = format!("{GOOD}bogus.key = 1\n");
        let e = parse_run_spec(&text).unwrap_err();
        assert!(e.message.contains("bogus.key"));
        let e = parse_run_spec("scenario.name = warp_drive\n").unwrap_err();
        assert_eq!(e.line, 1);
        assert!(e.message.contains("warp_drive"));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = format!("{GOOD}solve.horizon = 2.0\n");
        let e = parse_run_spec(&text).unwrap_err();
        assert!(e.message.contains("duplicate"));
    }

    #[test]
    fn grid_dimension_must_match_scenario() {
        let text = GOOD
            .replace("grid.lo = -2, -2", "grid.lo = -2, -2, 0")
            .replace("grid.hi = 2, 2", "grid.hi = 2, 2, 1")
            .replace("grid.counts = 51, 51", "grid.counts = 11, 11, 11");
        assert!(parse_run_spec(&text).is_err());
    }
}
