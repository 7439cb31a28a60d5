use std::path::{Path, PathBuf};

use infnote_core::nodekit::NodeConfig;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "INFNOTE_CONFIG";
pub const LOCAL_CONFIG: &str = "infnote.toml";

/// Picks the config file: the flag, then `INFNOTE_CONFIG`, then
/// `./infnote.toml` when it exists.
pub fn config_path(flag: Option<&Path>, env: Option<&str>, cwd: &Path) -> Option<PathBuf> {
    if let Some(p) = flag {
        return Some(p.to_path_buf());
    }
    if let Some(p) = env.filter(|p| !p.is_empty()) {
        return Some(PathBuf::from(p));
    }
    let local = cwd.join(LOCAL_CONFIG);
    local.is_file().then_some(local)
}

/// File (or defaults), then `INFNOTE_*` variables, then `--data-dir`.
pub fn resolve_config(
    flag: Option<&Path>,
    data_dir: Option<&Path>,
    vars: &[(String, String)],
    cwd: &Path,
) -> Result<NodeConfig, CliError> {
    let env = vars.iter().find(|(k, _)| k == CONFIG_ENV).map(|(_, v)| v.as_str());
    let mut config = match config_path(flag, env, cwd) {
        Some(path) => {
            NodeConfig::load(&path).map_err(|e| CliError::new("config", format!("{}: {e}", path.display())))?
        }
        None => NodeConfig::default(),
    };
    config.apply_env(vars.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    if let Some(dir) = data_dir {
        config.data_dir = dir.to_path_buf();
    }
    Ok(config)
}
