//! Rendering of simulation results. The echoed configuration omits the
//! thread count so output is identical however the work is scheduled.

use bclr_core::sim::{MethodSummary, SimConfig, SimResult};

use crate::error::{CliError, CliResult};

pub const CSV_HEADER: &str = "method,n_sim,n_failed,power_or_size,mse,coverage,mc_se,power_failed_as_retain";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn list(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

/// Fully resolved configuration as `(key, value)` pairs.
pub fn config_echo(cfg: &SimConfig) -> Vec<(&'static str, String)> {
    let s = &cfg.sampler;
    vec![
        ("n_total", cfg.n_total.to_string()),
        ("p", cfg.p.to_string()),
        ("covariates_observed", cfg.covariates_observed.to_string()),
        ("model", cfg.response_model.to_string()),
        ("beta_w", cfg.beta_w_true.to_string()),
        ("beta0", cfg.beta0.to_string()),
        ("beta", list(&cfg.beta_true)),
        ("noise_sd", cfg.noise_sd.to_string()),
        ("n_sim", cfg.n_sim.to_string()),
        ("alpha", cfg.alpha.to_string()),
        ("methods", cfg.methods.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")),
        ("seed", cfg.master_seed.to_string()),
        ("test", cfg.test_method.to_string()),
        ("tau2", cfg.tau2.to_string()),
        ("chains", s.chains.to_string()),
        ("warmup", s.warmup.to_string()),
        ("draws", s.draws_per_chain.to_string()),
        ("target_accept", s.target_accept.to_string()),
        ("max_leapfrog", s.max_leapfrog.to_string()),
        ("init_jitter", s.init_jitter.to_string()),
    ]
}

fn row(m: &MethodSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        m.method,
        m.n_sim,
        m.n_failed,
        opt(m.power_or_size),
        opt(m.mse),
        opt(m.coverage),
        opt(m.mc_se),
        m.power_failed_as_retain
    )
}

pub fn to_csv(cfg: &SimConfig, result: &SimResult) -> String {
    let mut out = String::new();
    for (k, v) in config_echo(cfg) {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for m in &result.methods {
        out.push_str(&row(m));
        out.push('\n');
    }
    out
}

pub fn to_json(cfg: &SimConfig, result: &SimResult) -> CliResult<String> {
    let mut cfg_json = serde_json::to_value(cfg).map_err(|e| CliError::io(e.to_string()))?;
    if let Some(sampler) = cfg_json.get_mut("sampler").and_then(|v| v.as_object_mut()) {
        // per-iteration seeds derive from master_seed
        sampler.remove("seed");
    }
    let doc = serde_json::json!({ "config": cfg_json, "results": result.methods });
    serde_json::to_string_pretty(&doc).map_err(|e| CliError::io(e.to_string()))
}

/// Reads the metric rows of a CSV produced by [`to_csv`].
pub fn parse_csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).skip(1).map(|l| l.split(',').map(str::to_owned).collect()).collect()
}
