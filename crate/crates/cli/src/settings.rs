//! Run settings from flags and an optional `key = value` config file.
//!
//! Keys are the long flag names without the leading dashes, e.g. `grid-size = 256`.
//! Blank lines and lines starting with `#` are ignored. Flags win over the file.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use clap::Args;
use distgp::{Error, KernelFamily, NuggetMode, Result};

const KEYS: &[&str] = &[
    "grid-size",
    "kernel",
    "order",
    "nugget",
    "starts",
    "seed",
    "threads",
    "center-targets",
    "n-train",
    "n-test",
    "samples",
    "configs",
];

#[derive(Debug, Clone, Default, Args)]
pub struct SettingFlags {
    /// Key-value settings file; flags override its entries
    #[arg(long, global = true)]
    pub config: Option<std::path::PathBuf>,
    /// Quantile grid size m
    #[arg(long, global = true)]
    pub grid_size: Option<usize>,
    /// Kernel family: powexp, fbm, legendre or pca
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Projection order for legendre and pca
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Nugget handling: fit, fixed:<value> or off
    #[arg(long, global = true)]
    pub nugget: Option<String>,
    /// Optimizer starts
    #[arg(long, global = true)]
    pub starts: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Subtract the training mean before fitting: on or off
    #[arg(long, global = true)]
    pub center_targets: Option<String>,
    /// Training set size for benchmarks
    #[arg(long, global = true)]
    pub n_train: Option<usize>,
    /// Test set size for benchmarks
    #[arg(long, global = true)]
    pub n_test: Option<usize>,
    /// Samples per distribution for sampled-input benchmarks
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Random configurations for diagnostics
    #[arg(long, global = true)]
    pub configs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    /// `None` keeps each command's own default.
    pub grid_size: Option<usize>,
    pub kernel: KernelFamily,
    pub order: usize,
    pub nugget: NuggetMode,
    pub starts: usize,
    pub seed: u64,
    pub threads: usize,
    pub center_targets: bool,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub samples: Option<usize>,
    pub configs: usize,
}

fn parse_switch(s: &str) -> Result<bool> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::InvalidInput(format!("expected on or off, found '{s}'"))),
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let at = |msg: String| Error::InvalidInput(format!("{}:{}: {msg}", path.display(), k + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| at(format!("expected 'key = value', found '{line}'")))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(at(format!("unknown setting '{key}'")));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

impl SettingFlags {
    pub fn resolve(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(p) => read_config(p)?,
            None => BTreeMap::new(),
        };
        let origin = self
            .config
            .as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default();
        fn pick<T: FromStr>(
            flag: Option<T>,
            file: &BTreeMap<String, String>,
            key: &str,
            origin: &str,
        ) -> Result<Option<T>>
        where
            T::Err: std::fmt::Display,
        {
            if flag.is_some() {
                return Ok(flag);
            }
            file.get(key)
                .map(|raw| {
                    raw.parse::<T>()
                        .map_err(|e| Error::InvalidInput(format!("{origin}: {key} = '{raw}': {e}")))
                })
                .transpose()
        }
        let kernel = pick(self.kernel.clone(), &file, "kernel", &origin)?.unwrap_or_else(|| "powexp".into());
        let nugget = pick(self.nugget.clone(), &file, "nugget", &origin)?.unwrap_or_else(|| "off".into());
        let center =
            pick(self.center_targets.clone(), &file, "center-targets", &origin)?.unwrap_or_else(|| "on".into());
        Ok(Settings {
            grid_size: pick(self.grid_size, &file, "grid-size", &origin)?,
            kernel: kernel.parse()?,
            order: pick(self.order, &file, "order", &origin)?.unwrap_or(5),
            nugget: nugget.parse()?,
            starts: pick(self.starts, &file, "starts", &origin)?.unwrap_or(10),
            seed: pick(self.seed, &file, "seed", &origin)?.unwrap_or(2024),
            threads: pick(self.threads, &file, "threads", &origin)?.unwrap_or(0),
            center_targets: parse_switch(&center)?,
            n_train: pick(self.n_train, &file, "n-train", &origin)?,
            n_test: pick(self.n_test, &file, "n-test", &origin)?,
            samples: pick(self.samples, &file, "samples", &origin)?,
            configs: pick(self.configs, &file, "configs", &origin)?.unwrap_or(50),
        })
    }
}

impl Settings {
    pub fn grid(&self) -> usize {
        self.grid_size.unwrap_or(distgp::DEFAULT_GRID_SIZE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn config(body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn defaults() {
        let s = SettingFlags::default().resolve().unwrap();
        assert_eq!(s.kernel, KernelFamily::Powexp);
        assert_eq!(s.nugget, NuggetMode::Off);
        assert!(s.center_targets);
        assert_eq!(s.grid(), 512);
    }

    #[test]
    fn flags_override_file() {
        let f = config("# run\nkernel = fbm\nseed=9\ngrid_size = 64\nnugget = fixed:0.5\n");
        let flags = SettingFlags {
            config: Some(f.path().into()),
            seed: Some(3),
            ..Default::default()
        };
        let s = flags.resolve().unwrap();
        assert_eq!((s.kernel, s.seed, s.grid()), (KernelFamily::Fbm, 3, 64));
        assert_eq!(s.nugget, NuggetMode::Fixed(0.5));
    }

    #[test]
    fn bad_lines_are_located() {
        let f = config("kernel = powexp\ncolour = blue\n");
        let flags = SettingFlags {
            config: Some(f.path().into()),
            ..Default::default()
        };
        assert!(flags.resolve().unwrap_err().to_string().contains(":2:"));
        let flags = SettingFlags {
            center_targets: Some("maybe".into()),
            ..Default::default()
        };
        assert!(flags.resolve().is_err());
    }
}
