//! Service settings: flag, then `SYMBIOT_*` environment, then config file.

use std::net::SocketAddr;
use std::path::Path;

use anyhow::Context;
use serde::Deserialize;
use symbiot_core::twin::{HubConfig, DEFAULT_BUFFER};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub listen: Option<String>,
    pub tcp_listen: Option<String>,
    pub token: Option<String>,
    pub buffer_size: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: Option<SocketAddr>,
    pub tcp_listen: Option<SocketAddr>,
    pub hub: HubConfig,
}

fn addr(s: Option<String>, what: &str) -> anyhow::Result<Option<SocketAddr>> {
    s.map(|s| s.parse().with_context(|| format!("bad {what} address {s:?}")))
        .transpose()
}

/// Merges already env-resolved flags over the file values.
pub fn resolve(
    file: FileConfig,
    listen: Option<String>,
    tcp_listen: Option<String>,
    token: Option<String>,
    buffer_size: Option<usize>,
) -> anyhow::Result<ServiceConfig> {
    let buffer = buffer_size.or(file.buffer_size).unwrap_or(DEFAULT_BUFFER);
    anyhow::ensure!(buffer > 0, "buffer size must be positive");
    Ok(ServiceConfig {
        listen: addr(listen.or(file.listen), "listen")?,
        tcp_listen: addr(tcp_listen.or(file.tcp_listen), "tcp")?,
        hub: HubConfig {
            token: token.or(file.token).unwrap_or_default(),
            buffer,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file() -> FileConfig {
        toml::from_str("listen = \"127.0.0.1:7000\"\ntoken = \"from-file\"\nbuffer_size = 64\n").unwrap()
    }

    #[test]
    fn flags_override_the_file() {
        let c = resolve(file(), None, Some("127.0.0.1:7001".into()), Some("flag".into()), None).unwrap();
        assert_eq!(c.listen, Some("127.0.0.1:7000".parse().unwrap()));
        assert_eq!(c.tcp_listen, Some("127.0.0.1:7001".parse().unwrap()));
        assert_eq!(c.hub.token, "flag");
        assert_eq!(c.hub.buffer, 64);
    }

    #[test]
    fn defaults_when_nothing_is_set() {
        let c = resolve(FileConfig::default(), None, None, None, None).unwrap();
        assert!(c.listen.is_none() && c.tcp_listen.is_none());
        assert_eq!(c.hub.buffer, DEFAULT_BUFFER);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(resolve(FileConfig::default(), None, None, None, Some(0)).is_err());
        assert!(resolve(FileConfig::default(), Some("nowhere".into()), None, None, None).is_err());
        assert!(toml::from_str::<FileConfig>("buffer = 3").is_err());
    }
}
