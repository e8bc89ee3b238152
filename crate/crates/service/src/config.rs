use std::net::SocketAddr;
use std::path::PathBuf;

pub const LISTEN_ENV: &str = "CURTAIL_LISTEN";
pub const DATA_DIR_ENV: &str = "CURTAIL_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Config {
    pub listen: SocketAddr,
    pub data_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config { listen: SocketAddr::from(([127, 0, 0, 1], 8080)), data_dir: PathBuf::from("curtail-data") }
    }
}

impl Config {
    /// Defaults overridden by `CURTAIL_LISTEN` and `CURTAIL_DATA_DIR`.
    pub fn from_env() -> Result<Self, String> {
        let mut config = Config::default();
        if let Ok(addr) = std::env::var(LISTEN_ENV) {
            config.listen = addr.parse().map_err(|e| format!("{LISTEN_ENV}={addr}: {e}"))?;
        }
        if let Some(dir) = std::env::var_os(DATA_DIR_ENV) {
            config.data_dir = dir.into();
        }
        Ok(config)
    }
}
