//! Experiment configuration: a flat-sectioned key-value text file, strictly
//! validated. Unknown sections or keys are rejected, and every value is run
//! through the engine's own constructors before any computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use reserve_core::{
    BasisSet, ContractSpec, IntensityModel, Matrix, RandomWalkParams, SimConfig,
};

/// Configuration or input-schema error; maps to exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// PDE solver settings.
#[derive(Debug, Clone)]
pub struct PdeConfig {
    pub dz: f64,
    pub dt: f64,
    pub k_sigma: f64,
    pub moments: u32,
}

/// Portfolio report settings.
#[derive(Debug, Clone)]
pub struct PortfolioConfig {
    pub active: usize,
    pub quantiles: Vec<f64>,
}

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub model: Option<IntensityModel>,
    pub contract: Option<ContractSpec>,
    pub mc: Option<SimConfig>,
    pub pde: Option<PdeConfig>,
    pub portfolio: Option<PortfolioConfig>,
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let sections = split_sections(text)?;
        for name in sections.keys() {
            if !["model", "contract", "mc", "pde", "portfolio", "io"].contains(&name.as_str()) {
                return err(format!("unknown section [{name}]"));
            }
        }

        let model = sections
            .get("model")
            .map(|s| parse_model(s))
            .transpose()?;
        let contract = sections
            .get("contract")
            .map(|s| parse_contract(s))
            .transpose()?;
        let mc = sections.get("mc").map(|s| parse_mc(s)).transpose()?;
        let pde = sections.get("pde").map(|s| parse_pde(s)).transpose()?;
        let portfolio = sections
            .get("portfolio")
            .map(|s| parse_portfolio(s))
            .transpose()?;
        let out_dir = match sections.get("io") {
            Some(s) => {
                let mut keys = Keys::new("io", s);
                let dir = keys.optional_string("out_dir")?;
                keys.finish()?;
                dir
            }
            None => None,
        };

        Ok(ExperimentConfig {
            model,
            contract,
            mc,
            pde,
            portfolio,
            out_dir,
        })
    }

    pub fn require_model(&self) -> Result<&IntensityModel, ConfigError> {
        self.model
            .as_ref()
            .ok_or_else(|| ConfigError("missing [model] section".into()))
    }

    pub fn require_contract(&self) -> Result<&ContractSpec, ConfigError> {
        self.contract
            .as_ref()
            .ok_or_else(|| ConfigError("missing [contract] section".into()))
    }

    pub fn require_mc(&self) -> Result<&SimConfig, ConfigError> {
        self.mc
            .as_ref()
            .ok_or_else(|| ConfigError("missing [mc] section".into()))
    }

    pub fn require_pde(&self) -> Result<&PdeConfig, ConfigError> {
        self.pde
            .as_ref()
            .ok_or_else(|| ConfigError("missing [pde] section".into()))
    }

    pub fn require_portfolio(&self) -> Result<&PortfolioConfig, ConfigError> {
        self.portfolio
            .as_ref()
            .ok_or_else(|| ConfigError("missing [portfolio] section".into()))
    }
}

fn split_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>, ConfigError> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| ConfigError(format!("line {}: malformed section header", lineno + 1)))?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return err(format!("line {}: duplicate section [{name}]", lineno + 1));
            }
            sections.insert(name.clone(), BTreeMap::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
        let section = current
            .as_ref()
            .ok_or_else(|| ConfigError(format!("line {}: key outside any section", lineno + 1)))?;
        let entry = sections.get_mut(section).unwrap();
        let key = key.trim().to_string();
        if entry.contains_key(&key) {
            return err(format!("line {}: duplicate key {section}.{key}", lineno + 1));
        }
        entry.insert(key, value.trim().to_string());
    }
    Ok(sections)
}

/// Tracks which keys of a section were consumed so leftovers are rejected.
struct Keys<'a> {
    section: &'a str,
    map: &'a BTreeMap<String, String>,
    used: Vec<&'a str>,
}

impl<'a> Keys<'a> {
    fn new(section: &'a str, map: &'a BTreeMap<String, String>) -> Self {
        Keys {
            section,
            map,
            used: Vec::new(),
        }
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a str> {
        self.used.push(key);
        self.map.get(key).map(|s| s.as_str())
    }

    fn required(&mut self, key: &'a str) -> Result<&'a str, ConfigError> {
        self.raw(key)
            .ok_or_else(|| ConfigError(format!("missing key {}.{key}", self.section)))
    }

    fn required_f64(&mut self, key: &'a str) -> Result<f64, ConfigError> {
        let section = self.section;
        self.required(key)?
            .parse()
            .map_err(|_| ConfigError(format!("{section}.{key}: not a number")))
    }

    fn optional_f64(&mut self, key: &'a str, default: f64) -> Result<f64, ConfigError> {
        let section = self.section;
        match self.raw(key) {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError(format!("{section}.{key}: not a number"))),
            None => Ok(default),
        }
    }

    fn required_usize(&mut self, key: &'a str) -> Result<usize, ConfigError> {
        let section = self.section;
        self.required(key)?
            .parse()
            .map_err(|_| ConfigError(format!("{section}.{key}: not a non-negative integer")))
    }

    fn optional_string(&mut self, key: &'a str) -> Result<Option<String>, ConfigError> {
        Ok(self.raw(key).map(|s| s.to_string()))
    }

    fn required_vec(&mut self, key: &'a str) -> Result<Vec<f64>, ConfigError> {
        let section = self.section;
        parse_vec(self.required(key)?)
            .map_err(|e| ConfigError(format!("{section}.{key}: {e}")))
    }

    fn optional_vec(&mut self, key: &'a str) -> Result<Option<Vec<f64>>, ConfigError> {
        let section = self.section;
        self.raw(key)
            .map(|v| parse_vec(v).map_err(|e| ConfigError(format!("{section}.{key}: {e}"))))
            .transpose()
    }

    fn optional_matrix(&mut self, key: &'a str) -> Result<Option<Vec<Vec<f64>>>, ConfigError> {
        let section = self.section;
        self.raw(key)
            .map(|v| parse_matrix(v).map_err(|e| ConfigError(format!("{section}.{key}: {e}"))))
            .transpose()
    }

    fn finish(self) -> Result<(), ConfigError> {
        for key in self.map.keys() {
            if !self.used.contains(&key.as_str()) {
                return err(format!("unknown key {}.{key}", self.section));
            }
        }
        Ok(())
    }
}

fn parse_vec(text: &str) -> Result<Vec<f64>, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or("expected a bracketed list like [1, 2, 3]")?;
    let inner = inner.trim();
    if inner.is_empty() {
        return Err("empty list".into());
    }
    inner
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number '{}'", tok.trim()))
        })
        .collect()
}

fn parse_matrix(text: &str) -> Result<Vec<Vec<f64>>, String> {
    let inner = text
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or("expected a bracketed list of rows like [[1, 0], [0, 1]]")?;
    let mut rows = Vec::new();
    let mut depth = 0usize;
    let mut start = None;
    for (i, c) in inner.char_indices() {
        match c {
            '[' => {
                if depth == 0 {
                    start = Some(i + 1);
                }
                depth += 1;
            }
            ']' => {
                depth = depth.checked_sub(1).ok_or("unbalanced brackets")?;
                if depth == 0 {
                    let row_text = &inner[start.take().ok_or("unbalanced brackets")?..i];
                    rows.push(parse_vec(&format!("[{row_text}]"))?);
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err("unbalanced brackets".into());
    }
    if rows.is_empty() {
        return Err("empty matrix".into());
    }
    Ok(rows)
}

fn parse_model(map: &BTreeMap<String, String>) -> Result<IntensityModel, ConfigError> {
    let mut keys = Keys::new("model", map);
    let basis = match keys.required("basis")? {
        "linear" => BasisSet::linear(),
        "exp3" => BasisSet::exp3(),
        other => return err(format!("model.basis: unknown basis '{other}' (linear or exp3)")),
    };
    let x = keys.required_f64("x")?;
    let delta_d = keys.optional_f64("delta_d", 1.0)?;
    let nu0 = keys.required_vec("nu0")?;
    let dim = basis.dim();
    if nu0.len() != dim {
        return err(format!(
            "model.nu0: expected {dim} entries for this basis, got {}",
            nu0.len()
        ));
    }
    let mu = keys.optional_vec("mu")?.unwrap_or_else(|| vec![0.0; dim]);
    if mu.len() != dim {
        return err(format!(
            "model.mu: expected {dim} entries, got {}",
            mu.len()
        ));
    }
    let sigma = match keys.optional_matrix("sigma")? {
        Some(rows) => {
            if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                return err(format!("model.sigma: expected a {dim}x{dim} matrix"));
            }
            Matrix::from_rows(&rows).map_err(|e| ConfigError(format!("model.sigma: {e}")))?
        }
        None => Matrix::zeros(dim, dim),
    };
    keys.finish()?;
    let params = RandomWalkParams::new(nu0, mu, sigma)
        .map_err(|e| ConfigError(format!("model.sigma: {e}")))?;
    IntensityModel::new(basis, x, delta_d, params)
        .map_err(|e| ConfigError(format!("model: {e}")))
}

fn parse_contract(map: &BTreeMap<String, String>) -> Result<ContractSpec, ConfigError> {
    let mut keys = Keys::new("contract", map);
    let horizon = keys.required_f64("T")?;
    let rate = keys.required_f64("r")?;
    let g_const = keys.optional_f64("g_const", 1.0)?;
    let g_growth = keys.optional_f64("g_growth", 0.0)?;
    keys.finish()?;
    ContractSpec::new(horizon, rate, g_const, g_growth)
        .map_err(|e| ConfigError(format!("contract: {e}")))
}

fn parse_mc(map: &BTreeMap<String, String>) -> Result<SimConfig, ConfigError> {
    let mut keys = Keys::new("mc", map);
    let paths = keys.required_usize("paths")?;
    let dt = keys.required_f64("dt")?;
    let seed = {
        let section = "mc";
        keys.required("seed")?
            .parse::<u64>()
            .map_err(|_| ConfigError(format!("{section}.seed: not a 64-bit unsigned integer")))?
    };
    let t0 = keys.optional_f64("t0", 0.0)?;
    keys.finish()?;
    let mut cfg =
        SimConfig::new(paths, dt, seed).map_err(|e| ConfigError(format!("mc: {e}")))?;
    cfg.t0 = t0;
    Ok(cfg)
}

fn parse_pde(map: &BTreeMap<String, String>) -> Result<PdeConfig, ConfigError> {
    let mut keys = Keys::new("pde", map);
    let dz = keys.required_f64("dz")?;
    let dt = keys.required_f64("dt")?;
    let k_sigma = keys.optional_f64("k_sigma", 6.0)?;
    let moments = keys.required_usize("moments")? as u32;
    keys.finish()?;
    if !(dz > 0.0) || !(dt > 0.0) {
        return err("pde.dz and pde.dt must be positive");
    }
    if moments < 1 {
        return err("pde.moments must be at least 1");
    }
    if !(k_sigma > 0.0) {
        return err("pde.k_sigma must be positive");
    }
    Ok(PdeConfig {
        dz,
        dt,
        k_sigma,
        moments,
    })
}

fn parse_portfolio(map: &BTreeMap<String, String>) -> Result<PortfolioConfig, ConfigError> {
    let mut keys = Keys::new("portfolio", map);
    let active = keys.required_usize("active")?;
    let quantiles = keys.required_vec("quantiles")?;
    keys.finish()?;
    for &p in &quantiles {
        if !(p > 0.0 && p <= 1.0) {
            return err(format!(
                "portfolio.quantiles: level {p} outside (0, 1]"
            ));
        }
    }
    Ok(PortfolioConfig { active, quantiles })
}
