//! `--set key=value` overrides for solver, sweep and verification settings.

use pf_core::dca::{DcaConfig, InnerKind};
use pf_core::diagnostics::VerifyConfig;
use pf_core::sweep::SweepConfig;

/// An override that names an unknown key or carries an unparsable value.
#[derive(Debug)]
pub struct BadOverride(pub String);

pub fn split(raw: &str) -> Result<(&str, &str), BadOverride> {
    raw.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| BadOverride(format!("override {raw:?} is not key=value")))
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, BadOverride> {
    value
        .parse()
        .map_err(|_| BadOverride(format!("cannot parse {value:?} for {key}")))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, BadOverride> {
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

pub fn parse_q(value: &str) -> Result<InnerKind, BadOverride> {
    parse::<u8>("q", value)
        .ok()
        .and_then(InnerKind::from_q)
        .ok_or_else(|| BadOverride(format!("q must be 1 or 2, got {value:?}")))
}

/// Keys of [`DcaConfig`]; `card_z` lives alongside it for `solve`.
pub fn apply_dca(
    cfg: &mut DcaConfig,
    card_z: &mut usize,
    key: &str,
    value: &str,
) -> Result<(), BadOverride> {
    match key {
        "beta" => cfg.beta = parse(key, value)?,
        "alpha" => cfg.alpha = parse(key, value)?,
        "q" | "inner_kind" => cfg.inner_kind = parse_q(value)?,
        "outer_tol" | "tol" => cfg.outer_tol = parse(key, value)?,
        "outer_max_iter" | "max_iter" => cfg.outer_max_iter = parse(key, value)?,
        "inner_tol" => cfg.inner_tol = parse(key, value)?,
        "inner_max_iter" => cfg.inner_max_iter = parse(key, value)?,
        "box_m" => cfg.box_min = parse(key, value)?,
        "box_M" => cfg.box_max = parse(key, value)?,
        "log_clamp" => cfg.log_clamp = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "pinv_rcond" => cfg.pinv_rcond = parse(key, value)?,
        "min_rank" => cfg.min_rank = Some(parse(key, value)?),
        "card_z" => *card_z = parse(key, value)?,
        _ => return Err(BadOverride(format!("unknown override key {key:?}"))),
    }
    Ok(())
}

pub fn apply_sweep(cfg: &mut SweepConfig, key: &str, value: &str) -> Result<(), BadOverride> {
    match key {
        "beta_grid" => cfg.beta_grid = parse_list(key, value)?,
        "alpha_grid" => cfg.alpha_grid = parse_list(key, value)?,
        "card_z" | "card_z_values" => cfg.card_z_values = parse_list(key, value)?,
        "restarts" => cfg.restarts = parse(key, value)?,
        "q" | "inner_kind" => cfg.inner_kind = parse_q(value)?,
        "seed" | "base_seed" => cfg.base_seed = parse(key, value)?,
        "outer_tol" | "tol" => cfg.outer_tol = parse(key, value)?,
        "outer_max_iter" | "max_iter" => cfg.outer_max_iter = parse(key, value)?,
        _ => return Err(BadOverride(format!("unknown override key {key:?}"))),
    }
    Ok(())
}

pub fn apply_verify(cfg: &mut VerifyConfig, key: &str, value: &str) -> Result<(), BadOverride> {
    match key {
        "seed" => cfg.seed = parse(key, value)?,
        "tol" | "tolerance" => cfg.tolerance = Some(parse(key, value)?),
        "gradient_samples" => cfg.gradient_samples = parse(key, value)?,
        "identity_samples" => cfg.identity_samples = parse(key, value)?,
        "lemma1_pairs" => cfg.lemma1_pairs = parse(key, value)?,
        "lemma1_betas" => cfg.lemma1_betas = parse_list(key, value)?,
        "gradient_beta" => cfg.gradient_beta = parse(key, value)?,
        _ => return Err(BadOverride(format!("unknown override key {key:?}"))),
    }
    Ok(())
}
