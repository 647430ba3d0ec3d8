//! TOML run configuration with sections `[dgp]`, `[prior]` and `[sampler]`.
//!
//! ```toml
//! [dgp]
//! n = 500
//! seed = 7
//!
//! [sampler]
//! n_chains = 4
//! theta_update = "marginal_mh"
//! ```
//!
//! Every section is optional and every key except `dgp.n` and `dgp.seed`
//! has a default. `dgp` coefficient defaults depend on `dgp.p` (default 1).
//! Unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::gibbs::SamplerConfig;
use crate::model::PriorSpec;
use crate::simulate::DgpConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Config {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dgp: Option<DgpConfig>,
    pub prior: PriorSpec,
    pub sampler: SamplerConfig,
}

const DGP_KEYS: [&str; 10] = [
    "n",
    "p",
    "compliance_probs",
    "assignment_probs",
    "intermediate_coeffs",
    "sigma_x",
    "outcome_coeffs",
    "sigma_y",
    "all_cells",
    "seed",
];
const PRIOR_KEYS: [&str; 3] = ["tau", "a0", "b0"];
const SAMPLER_KEYS: [&str; 7] = [
    "n_chains",
    "n_warmup",
    "n_draws",
    "theta_update",
    "mh_step_scale",
    "seed",
    "contrast",
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn section<'a>(root: &'a Table, name: &str, allowed: &[&str]) -> Result<Option<&'a Table>> {
    let Some(v) = root.get(name) else {
        return Ok(None);
    };
    let table = v.as_table().ok_or_else(|| Error::Parse {
        line: None,
        message: format!("`{name}` must be a section"),
    })?;
    if let Some(key) = table.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::UnknownKey {
            key: format!("{name}.{key}"),
        });
    }
    Ok(Some(table))
}

fn typed<T: serde::de::DeserializeOwned>(name: &str, table: Table) -> Result<T> {
    Value::Table(table).try_into().map_err(|e: toml::de::Error| Error::Parse {
        line: None,
        message: format!("[{name}] {}", e.message()),
    })
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidConfig { field, reason } if !field.contains('.') => Error::InvalidConfig {
            field: format!("{section}.{field}"),
            reason,
        },
        other => other,
    }
}

fn required_int(table: &Table, section: &str, key: &str) -> Result<i64> {
    match table.get(key) {
        Some(Value::Integer(v)) => Ok(*v),
        Some(_) => Err(Error::Parse {
            line: None,
            message: format!("{section}.{key} must be an integer"),
        }),
        None => Err(Error::config(format!("{section}.{key}"), "is required")),
    }
}

fn dgp_from(table: &Table) -> Result<DgpConfig> {
    let n = required_int(table, "dgp", "n")?;
    let seed = required_int(table, "dgp", "seed")?;
    let p = match table.get("p") {
        None => 1,
        Some(_) => required_int(table, "dgp", "p")?,
    };
    if n <= 0 {
        return Err(Error::config("dgp.n", "must be positive"));
    }
    if seed < 0 {
        return Err(Error::config("dgp.seed", "must be non-negative"));
    }
    if p < 0 {
        return Err(Error::config("dgp.p", "must be non-negative"));
    }
    let defaults = DgpConfig::with_defaults(n as usize, p as usize, seed as u64);
    let mut merged = Table::try_from(&defaults).map_err(|e| Error::Parse {
        line: None,
        message: e.to_string(),
    })?;
    for (k, v) in table {
        merged.insert(k.clone(), v.clone());
    }
    let cfg: DgpConfig = typed("dgp", merged)?;
    cfg.validate().map_err(|e| prefixed("dgp", e))?;
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let root: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    if let Some(key) = root
        .keys()
        .find(|k| !["dgp", "prior", "sampler"].contains(&k.as_str()))
    {
        return Err(Error::UnknownKey { key: key.clone() });
    }
    let dgp = section(&root, "dgp", &DGP_KEYS)?.map(dgp_from).transpose()?;
    let prior: PriorSpec = match section(&root, "prior", &PRIOR_KEYS)? {
        Some(t) => typed("prior", t.clone())?,
        None => PriorSpec::default(),
    };
    prior.validate()?;
    let sampler: SamplerConfig = match section(&root, "sampler", &SAMPLER_KEYS)? {
        Some(t) => typed("sampler", t.clone())?,
        None => SamplerConfig::default(),
    };
    sampler.validate()?;
    Ok(Config {
        dgp,
        prior,
        sampler,
    })
}

pub fn parse_config(path: &Path) -> Result<Config> {
    parse_config_str(&std::fs::read_to_string(path)?)
}

impl Config {
    /// The effective configuration with every default written out.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            line: None,
            message: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::ThetaUpdate;
    use crate::simulate::{AssignmentSpec, ComplianceSpec};

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config_str("[dgp]\nn = 100\nseed = 3\n").unwrap();
        assert_eq!(c.dgp, Some(DgpConfig::with_defaults(100, 1, 3)));
        assert_eq!(c.prior, PriorSpec::default());
        assert_eq!(c.sampler, SamplerConfig::default());
        let empty = parse_config_str("").unwrap();
        assert!(empty.dgp.is_none());
    }

    #[test]
    fn negative_sigma_names_field() {
        let err = parse_config_str("[dgp]\nn = 10\nseed = 1\nsigma_x = -1.0\n").unwrap_err();
        match err {
            Error::InvalidConfig { field, .. } => assert_eq!(field, "dgp.sigma_x"),
            other => panic!("{other:?}"),
        }
        let err = parse_config_str("[dgp]\nn = 10\nseed = 1\nsigma_x = -1\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in [
            "[dgp]\nn = 1\nseed = 1\nbogus = 2\n",
            "[sampler]\nchains = 2\n",
            "[extra]\n",
            "top = 1\n",
        ] {
            assert!(matches!(parse_config_str(text), Err(Error::UnknownKey { .. })), "{text}");
        }
    }

    #[test]
    fn syntax_error_has_line() {
        match parse_config_str("[sampler]\nn_chains = 2\nn_draws = = 3\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, Some(3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_required_dgp_key() {
        assert!(matches!(
            parse_config_str("[dgp]\nn = 10\n"),
            Err(Error::InvalidConfig { field, .. }) if field == "dgp.seed"
        ));
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
[dgp]
n = 20
p = 2
seed = 9
compliance_probs = [0.0, 1.0, 0.0]
assignment_probs = { z1 = [0.0, 1.0, 0.0], z2 = [0.0, 0.0, 0.0, 1.0] }

[prior]
tau = 1.0

[sampler]
theta_update = "marginal_mh"
n_chains = 2
contrast = [[1, 0], [0, 0]]
"#;
        let c = parse_config_str(text).unwrap();
        let d = c.dgp.as_ref().unwrap();
        assert_eq!(d.p, 2);
        assert_eq!(d.intermediate_coeffs.len(), 6);
        assert_eq!(d.compliance_probs, ComplianceSpec::Constant([0.0, 1.0, 0.0]));
        assert!(matches!(d.assignment_probs, AssignmentSpec::Logistic { .. }));
        assert_eq!(c.prior.tau, 1.0);
        assert_eq!(c.sampler.theta_update, ThetaUpdate::MarginalMh);
        assert_eq!(c.sampler.n_chains, 2);
        assert_eq!(c.sampler.contrast.to_string(), "(1,0) vs (0,0)");
    }

    #[test]
    fn effective_config_round_trips() {
        let text = "[dgp]\nn = 50\np = 2\nseed = 4\n[sampler]\nn_draws = 10\nseed = 8\n";
        let c = parse_config_str(text).unwrap();
        let emitted = c.to_toml_string().unwrap();
        let back = parse_config_str(&emitted).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string().unwrap(), emitted);
    }
}
