//! Flat `key = value` configuration files. Unknown keys, malformed lines
//! and out-of-range values are rejected with the offending line number.

use std::path::Path;

use mktsim::harness::ExperimentConfig;
use mktsim::prsh::MutationKind;

/// Parses a config file into an [`ExperimentConfig`], starting from the
/// defaults. Blank lines and `#` comments are ignored.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config `{}`: {e}", path.display()))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, String> {
    let mut cfg = ExperimentConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {line_no}: expected `key = value`, got `{raw}`"))?;
        apply(&mut cfg, key.trim(), value.trim()).map_err(|e| format!("line {line_no}: {e}"))?;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "duration" => cfg.duration_s = parse_in(key, value, 1, 1_000_000)?,
        "ticks_per_second" => cfg.ticks_per_second = parse_in(key, value, 1, 1000)?,
        "lambda" => cfg.lambda = parse_float(key, value, 0.000_001, 10_000.0)?,
        "pop.gvwy" => cfg.pop.gvwy = parse_in(key, value, 0, 10_000)?,
        "pop.zic" => cfg.pop.zic = parse_in(key, value, 0, 10_000)?,
        "pop.zip" => cfg.pop.zip = parse_in(key, value, 0, 10_000)?,
        "pop.snpr" => cfg.pop.snpr = parse_in(key, value, 0, 10_000)?,
        "pop.shvr" => cfg.pop.shvr = parse_in(key, value, 0, 10_000)?,
        "pop.prsh" => cfg.pop.prsh = parse_in(key, value, 0, 10_000)?,
        "pop.prb" => cfg.pop.prb = parse_in(key, value, 0, 10_000)?,
        "prsh.k" => cfg.prsh.k = parse_in(key, value, 2, 64)? as usize,
        "prsh.v" => cfg.prsh.v = parse_in(key, value, 1, 1_000_000)?,
        "prsh.m" => cfg.prsh.mutation = parse_mutation(value)?,
        "prsh.elitism" => cfg.prsh.elitism = parse_bool(key, value)?,
        "prb.k" => cfg.prb.k = parse_in(key, value, 2, 64)? as usize,
        "prb.v" => cfg.prb.v = parse_in(key, value, 1, 1_000_000)?,
        "gp.noise" => cfg.gp_noise = parse_float(key, value, 0.0, 100.0)?,
        "gp.cap" => cfg.gp_cap = parse_in(key, value, 1, 100_000)? as usize,
        "snpr.window" => cfg.snpr_window = parse_float(key, value, 0.0, 1.0)?,
        "zip.beta_min" => cfg.zip.beta_min = parse_float(key, value, 0.0, 10.0)?,
        "zip.beta_max" => cfg.zip.beta_max = parse_float(key, value, 0.0, 10.0)?,
        "zip.gamma_min" => cfg.zip.gamma_min = parse_float(key, value, 0.0, 1.0)?,
        "zip.gamma_max" => cfg.zip.gamma_max = parse_float(key, value, 0.0, 1.0)?,
        "zip.ca" => cfg.zip.ca = parse_float(key, value, 0.000_001, 1000.0)?,
        "zip.cr" => cfg.zip.cr = parse_float(key, value, 0.000_001, 1.0)?,
        "sweep.runs" => cfg.sweep_runs = parse_in(key, value, 1, 100_000)? as usize,
        "sweep.prsh.k" => {
            cfg.sweep_prsh_k =
                parse_list(key, value, |v| parse_in(key, v, 2, 64).map(|x| x as usize))?
        }
        "sweep.prsh.v" => {
            cfg.sweep_prsh_v = parse_list(key, value, |v| parse_in(key, v, 1, 1_000_000))?
        }
        "sweep.prsh.m" => cfg.sweep_prsh_m = parse_list(key, value, parse_mutation)?,
        "sweep.prb.k" => {
            cfg.sweep_prb_k =
                parse_list(key, value, |v| parse_in(key, v, 2, 64).map(|x| x as usize))?
        }
        "sweep.prb.v" => {
            cfg.sweep_prb_v = parse_list(key, value, |v| parse_in(key, v, 1, 1_000_000))?
        }
        other => return Err(format!("unknown config key `{other}`")),
    }
    Ok(())
}

fn validate(cfg: &ExperimentConfig) -> Result<(), String> {
    if cfg.zip.beta_min > cfg.zip.beta_max {
        return Err("zip.beta_min exceeds zip.beta_max".to_string());
    }
    if cfg.zip.gamma_min > cfg.zip.gamma_max {
        return Err("zip.gamma_min exceeds zip.gamma_max".to_string());
    }
    for (key, lists) in [
        ("sweep.prsh.k", cfg.sweep_prsh_k.is_empty()),
        ("sweep.prsh.v", cfg.sweep_prsh_v.is_empty()),
        ("sweep.prsh.m", cfg.sweep_prsh_m.is_empty()),
        ("sweep.prb.k", cfg.sweep_prb_k.is_empty()),
        ("sweep.prb.v", cfg.sweep_prb_v.is_empty()),
    ] {
        if lists {
            return Err(format!("{key} must list at least one value"));
        }
    }
    Ok(())
}

fn parse_in(key: &str, value: &str, min: u64, max: u64) -> Result<u32, String> {
    let v: u64 = value
        .parse()
        .map_err(|_| format!("{key}: `{value}` is not an integer"))?;
    if !(min..=max).contains(&v) {
        return Err(format!("{key}: {v} out of range [{min}, {max}]"));
    }
    Ok(v as u32)
}

fn parse_float(key: &str, value: &str, min: f64, max: f64) -> Result<f64, String> {
    let v: f64 = value
        .parse()
        .map_err(|_| format!("{key}: `{value}` is not a number"))?;
    if !v.is_finite() || !(min..=max).contains(&v) {
        return Err(format!("{key}: {v} out of range [{min}, {max}]"));
    }
    Ok(v)
}

fn parse_bool(key: &str, value: &str) -> Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("{key}: `{other}` is not true/false")),
    }
}

fn parse_mutation(value: &str) -> Result<MutationKind, String> {
    value.parse()
}

fn parse_list<T>(
    key: &str,
    value: &str,
    item: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, String> {
    let parts: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if parts.is_empty() {
        return Err(format!("{key}: empty list"));
    }
    parts.into_iter().map(item).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.duration_s, 1000);
        assert_eq!(cfg.lambda, 2.0);
        assert_eq!(cfg.pop.gvwy, 20);
    }

    #[test]
    fn best_cell_config() {
        let cfg = parse_config("prsh.k = 6\nprsh.v = 128\nprsh.m = m3\n").unwrap();
        assert_eq!(cfg.prsh.k, 6);
        assert_eq!(cfg.prsh.v, 128);
        assert_eq!(cfg.prsh.mutation, MutationKind::M3);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = parse_config("prb.k = 0\n").unwrap_err();
        assert!(err.contains("prb.k"), "{err}");
        assert!(err.contains("out of range"), "{err}");
    }

    #[test]
    fn rejects_unknown_key() {
        let err = parse_config("duration = 10\nnot.a.key = 3\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(err.contains("not.a.key"), "{err}");
    }

    #[test]
    fn rejects_malformed_line() {
        let err = parse_config("duration 10\n").unwrap_err();
        assert!(err.contains("line 1"), "{err}");
    }

    #[test]
    fn comments_and_lists() {
        let text = "
# reduced sweep
sweep.prsh.k = 2, 6, 16
sweep.prsh.v = 32,128
sweep.prsh.m = m1, m3
sweep.prb.k = 2,4
sweep.runs = 20   # per cell
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sweep_prsh_k, vec![2, 6, 16]);
        assert_eq!(cfg.sweep_prsh_v, vec![32, 128]);
        assert_eq!(cfg.sweep_prsh_m, vec![MutationKind::M1, MutationKind::M3]);
        assert_eq!(cfg.sweep_prb_k, vec![2, 4]);
        assert_eq!(cfg.sweep_runs, 20);
    }

    #[test]
    fn rejects_bad_mutation() {
        let err = parse_config("prsh.m = m9\n").unwrap_err();
        assert!(err.contains("m9"), "{err}");
    }
}
