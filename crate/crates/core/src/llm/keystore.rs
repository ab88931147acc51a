use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};

use crate::error::{Error, Result};

pub const KEYSTORE_ENV: &str = "ABSCREEN_KEYSTORE";
const SECRET_FILE: &str = "secret.key";
const KEYS_FILE: &str = "keys.json";

/// API keys encrypted at rest with a locally generated secret. Lives in the
/// user config directory, never inside a project.
#[derive(Debug, Clone)]
pub struct Keystore {
    dir: PathBuf,
}

fn random<const N: usize>() -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    getrandom::fill(&mut buf).map_err(|e| Error::Keystore(format!("no randomness available: {e}")))?;
    Ok(buf)
}

#[cfg(unix)]
fn restrict(path: &Path) -> Result<()> {
    use std::os::unix::fs::PermissionsExt;
    fs::set_permissions(path, fs::Permissions::from_mode(0o600))?;
    Ok(())
}

#[cfg(not(unix))]
fn restrict(_path: &Path) -> Result<()> {
    Ok(())
}

impl Keystore {
    pub fn open(dir: impl AsRef<Path>) -> Self {
        Keystore {
            dir: dir.as_ref().to_path_buf(),
        }
    }

    /// `$ABSCREEN_KEYSTORE`, else `<user config dir>/abscreen`.
    pub fn default_location() -> Result<Self> {
        if let Some(dir) = std::env::var_os(KEYSTORE_ENV) {
            return Ok(Self::open(dir));
        }
        dirs::config_dir()
            .map(|d| Self::open(d.join("abscreen")))
            .ok_or_else(|| Error::Keystore("no user config directory; set ABSCREEN_KEYSTORE".into()))
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn cipher(&self) -> Result<ChaCha20Poly1305> {
        let path = self.dir.join(SECRET_FILE);
        let secret = match fs::read(&path) {
            Ok(bytes) if bytes.len() == 32 => bytes,
            Ok(_) => return Err(Error::Keystore(format!("{} is not a 32-byte secret", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                fs::create_dir_all(&self.dir)?;
                let secret = random::<32>()?;
                fs::write(&path, secret)?;
                restrict(&path)?;
                secret.to_vec()
            }
            Err(e) => return Err(e.into()),
        };
        Ok(ChaCha20Poly1305::new(Key::from_slice(&secret)))
    }

    fn load(&self) -> Result<BTreeMap<String, String>> {
        match fs::read_to_string(self.dir.join(KEYS_FILE)) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(e.into()),
        }
    }

    fn save(&self, entries: &BTreeMap<String, String>) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.dir.join(KEYS_FILE);
        let tmp = self.dir.join(format!("{KEYS_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_string_pretty(entries)?)?;
        restrict(&tmp)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn set(&self, name: &str, api_key: &str) -> Result<()> {
        let cipher = self.cipher()?;
        let nonce = random::<12>()?;
        let sealed = cipher
            .encrypt(Nonce::from_slice(&nonce), api_key.as_bytes())
            .map_err(|_| Error::Keystore("encryption failed".into()))?;
        let mut entries = self.load()?;
        let mut blob = nonce.to_vec();
        blob.extend(sealed);
        entries.insert(name.to_string(), hex::encode(blob));
        self.save(&entries)
    }

    pub fn get(&self, name: &str) -> Result<String> {
        let entries = self.load()?;
        let blob = entries.get(name).ok_or_else(|| Error::not_found("api key", name))?;
        let blob = hex::decode(blob).map_err(|_| Error::Keystore(format!("entry {name:?} is not hex")))?;
        if blob.len() < 12 {
            return Err(Error::Keystore(format!("entry {name:?} is truncated")));
        }
        let (nonce, sealed) = blob.split_at(12);
        let plain = self
            .cipher()?
            .decrypt(Nonce::from_slice(nonce), sealed)
            .map_err(|_| Error::Keystore(format!("entry {name:?} failed authentication")))?;
        String::from_utf8(plain).map_err(|_| Error::Keystore(format!("entry {name:?} is not UTF-8")))
    }

    pub fn remove(&self, name: &str) -> Result<bool> {
        let mut entries = self.load()?;
        let removed = entries.remove(name).is_some();
        if removed {
            self.save(&entries)?;
        }
        Ok(removed)
    }

    pub fn names(&self) -> Result<Vec<String>> {
        Ok(self.load()?.into_keys().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_nothing_in_clear() {
        let dir = tempfile::tempdir().unwrap();
        let ks = Keystore::open(dir.path());
        ks.set("gemini", "AIzaSy-secret-value-123").unwrap();
        assert_eq!(ks.get("gemini").unwrap(), "AIzaSy-secret-value-123");
        let on_disk = fs::read_to_string(dir.path().join(KEYS_FILE)).unwrap();
        assert!(!on_disk.contains("secret-value"));
        assert_eq!(ks.names().unwrap(), vec!["gemini"]);
        assert!(ks.remove("gemini").unwrap());
        assert!(matches!(ks.get("gemini"), Err(Error::NotFound { .. })));
    }

    #[test]
    fn tampering_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let ks = Keystore::open(dir.path());
        ks.set("k", "value").unwrap();
        let mut entries = ks.load().unwrap();
        let mut blob = hex::decode(&entries["k"]).unwrap();
        let last = blob.len() - 1;
        blob[last] ^= 1;
        entries.insert("k".into(), hex::encode(blob));
        ks.save(&entries).unwrap();
        assert!(matches!(ks.get("k"), Err(Error::Keystore(_))));
    }
}
