//! Flat key-value experiment configuration.
//!
//! The format is plain text with `[section]` headers and `key = value`
//! lines; `#` starts a comment. Keys are flattened to `section.key`. Every
//! experiment requires an explicit seed; there is no wall-clock seeding.

use crate::covariance::CovarianceModel;
use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::sparse::{NeighborRule, OrderingRule};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// Experiment selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentTag {
    Bridge,
    Field,
    Mle,
    MpcgpCompare,
    TheoremProbe,
}

impl ExperimentTag {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "bb" => ExperimentTag::Bridge,
            "field" => ExperimentTag::Field,
            "mle" => ExperimentTag::Mle,
            "mpcgp-compare" => ExperimentTag::MpcgpCompare,
            "theorem-probe" => ExperimentTag::TheoremProbe,
            other => {
                return Err(Error::Config(format!(
                    "unknown experiment tag '{other}' (expected bb, field, mle, mpcgp-compare or theorem-probe)"
                )))
            }
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentTag::Bridge => "bb",
            ExperimentTag::Field => "field",
            ExperimentTag::Mle => "mle",
            ExperimentTag::MpcgpCompare => "mpcgp-compare",
            ExperimentTag::TheoremProbe => "theorem-probe",
        }
    }
}

/// Raw flattened key-value pairs.
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw_line) in text.lines().enumerate() {
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') || line.len() < 3 {
                    return Err(Error::Config(format!("line {}: bad section '{line}'", lineno + 1)));
                }
                section = line[1..line.len() - 1].trim().to_string();
                continue;
            }
            let Some(eq) = line.find('=') else {
                return Err(Error::Config(format!("line {}: expected key = value", lineno + 1)));
            };
            let key = line[..eq].trim();
            let value = line[eq + 1..].trim();
            if key.is_empty() {
                return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
            }
            let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
            if entries.insert(full.clone(), value.to_string()).is_some() {
                return Err(Error::Config(format!("duplicate key '{full}'")));
            }
        }
        Ok(RawConfig { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: String) {
        self.entries.insert(key.to_string(), value);
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::Config(format!("missing key '{key}'")))
    }

    fn parse_with<T, F: Fn(&str) -> Option<T>>(&self, key: &str, f: F) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(s) => f(s)
                .map(Some)
                .ok_or_else(|| Error::Config(format!("key '{key}': cannot parse '{s}'"))),
        }
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.parse_with(key, |s| s.parse::<f64>().ok())
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.parse_with(key, |s| s.parse::<usize>().ok())
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.usize_opt(key)?.unwrap_or(default))
    }

    fn u64_req(&self, key: &str) -> Result<u64> {
        self.require(key)?
            .parse::<u64>()
            .map_err(|_| Error::Config(format!("key '{key}' must be an unsigned integer")))
    }

    fn usize_req(&self, key: &str) -> Result<usize> {
        self.require(key)?
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("key '{key}' must be a count")))
    }

    fn list_f64(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.parse_with(key, |s| {
            s.split(',').map(|p| p.trim().parse::<f64>().ok()).collect::<Option<Vec<_>>>()
        })
    }

    fn list_usize(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.parse_with(key, |s| {
            s.split(',').map(|p| p.trim().parse::<usize>().ok()).collect::<Option<Vec<_>>>()
        })
    }
}

/// Fully validated experiment configuration.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub tag: ExperimentTag,
    pub seed: u64,
    pub replications: usize,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub domain: Domain,
    pub covariance: CovarianceModel,
    pub reference_count: usize,
    pub ordering: OrderingRule,
    pub reference_rule: NeighborRule,
    pub target_rule: NeighborRule,
    pub neighbor_count: usize,
    pub partition_counts: Vec<usize>,
    pub m_region: usize,
    pub cell_cap: usize,
    pub mixture_size: usize,
    pub grid_sizes: Vec<usize>,
    pub levels: Vec<usize>,
    pub schedule_base: Vec<usize>,
    pub full_gp_size: usize,
    pub models: Vec<String>,
    pub mle_n_list: Vec<usize>,
    pub mle_window: usize,
    pub mle_generator_reps: usize,
    pub mle_per_cell: usize,
    pub mle_reference_count: usize,
    /// Raw entries echoed into the manifest.
    pub raw: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let tag = ExperimentTag::parse(raw.require("experiment.tag")?)?;
        let seed = raw.u64_req("experiment.seed")?;
        let replications = raw.usize_req("experiment.replications")?;
        if replications < 2 {
            return Err(Error::Config("experiment.replications must be at least 2".into()));
        }
        let threads = raw.usize_or("experiment.threads", 0)?;
        let out_dir = PathBuf::from(
            raw.get("experiment.out").unwrap_or(&format!("out/{}", tag.as_str())).to_string(),
        );

        let dim = raw.usize_or("domain.dim", if tag == ExperimentTag::Bridge { 1 } else { 2 })?;
        let default_bounds = |v: f64| vec![v; dim];
        let lower = raw
            .list_f64("domain.lower")?
            .unwrap_or_else(|| default_bounds(0.0));
        let upper = raw.list_f64("domain.upper")?.unwrap_or_else(|| {
            default_bounds(if tag == ExperimentTag::Bridge { 1.0 } else { 10.0 })
        });
        if lower.len() != dim || upper.len() != dim {
            return Err(Error::Config("domain bounds do not match domain.dim".into()));
        }
        let domain = Domain::new(lower, upper).map_err(|e| Error::Config(e.to_string()))?;

        let family = raw
            .get("covariance.family")
            .unwrap_or(if tag == ExperimentTag::Bridge {
                "brownian_bridge"
            } else {
                "powered_exponential"
            })
            .to_string();
        let mu = raw.f64_or("covariance.mu", 0.0)?;
        let sigma2 = raw.f64_or("covariance.sigma2", 1.0)?;
        let covariance = match family.as_str() {
            "brownian_bridge" => {
                if dim != 1 {
                    return Err(Error::Config("brownian_bridge needs a 1-D domain".into()));
                }
                let mut m = CovarianceModel::brownian_bridge();
                m.mean = mu;
                m.variance = sigma2;
                m
            }
            "powered_exponential" => {
                let nu = raw.f64_or("covariance.nu", 1.9)?;
                match (raw.f64_opt("covariance.phi")?, raw.f64_opt("covariance.phi_pow_nu")?) {
                    (Some(_), Some(_)) => {
                        return Err(Error::Config(
                            "give covariance.phi or covariance.phi_pow_nu, not both".into(),
                        ))
                    }
                    (Some(phi), None) => CovarianceModel::new(
                        mu,
                        sigma2,
                        crate::covariance::Kernel::PoweredExponential { phi, nu },
                    )
                    .map_err(|e| Error::Config(e.to_string()))?,
                    (None, pow) => CovarianceModel::powered_exponential_phi_pow(
                        mu,
                        sigma2,
                        pow.unwrap_or(4.0),
                        nu,
                    )
                    .map_err(|e| Error::Config(e.to_string()))?,
                }
            }
            other => return Err(Error::Config(format!("unknown covariance family '{other}'"))),
        };

        let reference_count =
            raw.usize_or("reference.r", if tag == ExperimentTag::Bridge { 5 } else { 1000 })?;
        if reference_count == 0 {
            return Err(Error::Config("reference.r must be positive".into()));
        }
        let ordering = match raw.get("reference.ordering").unwrap_or("sorted") {
            "sorted" => OrderingRule::SortedCoordinate,
            "as_given" => OrderingRule::AsGiven,
            "random" => OrderingRule::Random(seed ^ 0x5eed_02de),
            other => return Err(Error::Config(format!("unknown ordering '{other}'"))),
        };
        let neighbor_count =
            raw.usize_or("reference.m", if tag == ExperimentTag::Bridge { 2 } else { 15 })?;
        let rule_name = raw.get("reference.rule").unwrap_or(if tag == ExperimentTag::Bridge {
            "full"
        } else {
            "nearest"
        });
        let (reference_rule, target_rule) = match rule_name {
            "nearest" => (
                NeighborRule::NearestM(neighbor_count),
                NeighborRule::NearestM(neighbor_count),
            ),
            "full" => (
                NeighborRule::Full,
                NeighborRule::NearestM(neighbor_count.max(1)),
            ),
            "radius" => {
                let radius = raw
                    .f64_opt("reference.radius")?
                    .ok_or_else(|| Error::Config("radius rule needs reference.radius".into()))?;
                if !(radius > 0.0) {
                    return Err(Error::Config("reference.radius must be positive".into()));
                }
                (NeighborRule::Radius(radius), NeighborRule::Radius(radius))
            }
            other => return Err(Error::Config(format!("unknown neighbour rule '{other}'"))),
        };

        let partition_counts = raw.list_usize("pcgp.partition")?.unwrap_or_else(|| {
            if tag == ExperimentTag::Bridge {
                vec![reference_count + 1]
            } else {
                vec![16; dim]
            }
        });
        if partition_counts.len() != dim || partition_counts.iter().any(|&c| c == 0) {
            return Err(Error::Config("pcgp.partition must give a positive count per axis".into()));
        }
        let m_region = raw.usize_or("pcgp.m_region", neighbor_count)?;
        let cell_cap = raw.usize_or("pcgp.cell_cap", crate::pcgp::DEFAULT_CELL_CAP)?;
        let mixture_size = raw.usize_or(
            "pcgp.g",
            if tag == ExperimentTag::MpcgpCompare { 4 } else { 1 },
        )?;

        let grid_sizes = raw.list_usize("grids.sizes")?.unwrap_or_else(|| {
            vec![625, 2500, 10_000]
        });
        let levels = raw
            .list_usize("grids.levels")?
            .unwrap_or_else(|| if tag == ExperimentTag::Bridge { vec![3, 6, 9] } else { vec![0, 1, 2] });
        if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("grids.levels must be strictly ascending".into()));
        }
        let schedule_base = raw.list_usize("grids.base")?.unwrap_or_else(|| vec![24; dim]);
        if schedule_base.len() != dim || schedule_base.iter().any(|&c| c == 0) {
            return Err(Error::Config("grids.base must give a positive count per axis".into()));
        }
        let full_gp_size = raw.usize_or("grids.full_gp_size", 0)?;

        let models = raw
            .get("experiment.models")
            .map(|s| s.split(',').map(|p| p.trim().to_string()).collect())
            .unwrap_or_else(|| vec!["nngp".to_string(), "pcgp".to_string()]);
        for m in &models {
            if !["nngp", "rngp", "pcgp", "mpcgp", "full_gp"].contains(&m.as_str()) {
                return Err(Error::Config(format!("unknown model '{m}' in experiment.models")));
            }
        }

        let mle_n_list = raw.list_usize("mle.n_list")?.unwrap_or_else(|| vec![2000, 5000, 10_000]);
        let mle_window = raw.usize_or("mle.window", 200)?;
        let mle_generator_reps = raw.usize_or("mle.generator_reps", 10)?;
        let mle_per_cell = raw.usize_or("mle.per_cell", 500)?;
        let mle_reference_count = raw.usize_or("mle.r", 1000)?;

        Ok(ExperimentConfig {
            tag,
            seed,
            replications,
            threads,
            out_dir,
            domain,
            covariance,
            reference_count,
            ordering,
            reference_rule,
            target_rule,
            neighbor_count,
            partition_counts,
            m_region,
            cell_cap,
            mixture_size,
            grid_sizes,
            levels,
            schedule_base,
            full_gp_size,
            models,
            mle_n_list,
            mle_window,
            mle_generator_reps,
            mle_per_cell,
            mle_reference_count,
            raw: raw.entries().clone(),
        })
    }

    /// Uniformly scale replication counts and cap grid sizes; `--scale 0.1`
    /// divides replications by ten and caps grids at 2,500 points.
    pub fn apply_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale {scale} must be positive")));
        }
        if (scale - 1.0).abs() < 1e-12 {
            return Ok(());
        }
        let point_cap = ((25_000.0 * scale).round() as usize).max(64);
        self.replications = ((self.replications as f64 * scale).round() as usize).max(2);
        self.mle_generator_reps =
            ((self.mle_generator_reps as f64 * scale).round() as usize).max(2);

        let smallest = self.grid_sizes.iter().copied().min();
        self.grid_sizes.retain(|&m| m <= point_cap);
        if self.grid_sizes.is_empty() {
            if let Some(s) = smallest {
                self.grid_sizes.push(s);
            }
        }
        if self.full_gp_size > point_cap {
            self.full_gp_size = point_cap;
        }
        // bridge levels: 2^n - 1 points per cell across the partition
        if self.tag == ExperimentTag::Bridge {
            let cells = self.partition_counts[0];
            let first = self.levels[0];
            self.levels.retain(|&n| cells * ((1usize << n) - 1) <= point_cap);
            if self.levels.is_empty() {
                self.levels.push(first);
            }
        }
        if self.tag == ExperimentTag::TheoremProbe {
            let base: usize = self.schedule_base.iter().map(|k| k + 1).product();
            let first = self.levels[0];
            self.levels.retain(|&n| {
                let per_axis: usize = self
                    .schedule_base
                    .iter()
                    .map(|k| (k << n) + 1)
                    .product();
                per_axis <= point_cap.max(base)
            });
            if self.levels.is_empty() {
                self.levels.push(first);
            }
        }
        self.mle_n_list = self
            .mle_n_list
            .iter()
            .map(|&n| ((n as f64 * scale).round() as usize).max(200))
            .collect();
        Ok(())
    }
}
