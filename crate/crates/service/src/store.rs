//! In-memory session table with idle expiry and optional write-through to a
//! directory (`<dir>/<id>/image.sgrid`, `session.json`, `masks/round-K.sgrid`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use interseg_core::io::{decode_sgrid, encode_mask_sgrid, encode_sgrid, Dtype};

use crate::session::{Session, SessionError, SessionRecord, SessionResult};

pub struct Entry {
    pub session: Arc<tokio::sync::Mutex<Session>>,
    last_access: Mutex<Instant>,
}

impl Entry {
    fn new(s: Session) -> Arc<Self> {
        Arc::new(Entry {
            session: Arc::new(tokio::sync::Mutex::new(s)),
            last_access: Mutex::new(Instant::now()),
        })
    }

    fn touch(&self) {
        *self.last_access.lock().unwrap() = Instant::now();
    }
}

pub struct Store {
    sessions: RwLock<HashMap<String, Arc<Entry>>>,
    dir: Option<PathBuf>,
    ttl: Duration,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)
}

fn mask_path(dir: &Path, round: usize) -> PathBuf {
    dir.join("masks").join(format!("round-{round}.sgrid"))
}

impl Store {
    pub fn new(dir: Option<PathBuf>, ttl: Duration) -> Self {
        Store {
            sessions: RwLock::new(HashMap::new()),
            dir,
            ttl,
        }
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, s: Session) -> SessionResult<()> {
        self.persist_image(&s)?;
        self.persist(&s)?;
        self.sessions.write().unwrap().insert(s.id.clone(), Entry::new(s));
        Ok(())
    }

    pub fn get(&self, id: &str) -> SessionResult<Arc<Entry>> {
        let e = self
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(format!("unknown session {id}")))?;
        e.touch();
        Ok(e)
    }

    /// Drop sessions idle longer than the TTL, skipping any in use.
    pub fn evict_expired(&self) -> usize {
        let now = Instant::now();
        let mut map = self.sessions.write().unwrap();
        let expired: Vec<String> = map
            .iter()
            .filter(|(_, e)| {
                now.duration_since(*e.last_access.lock().unwrap()) > self.ttl && e.session.try_lock().is_ok()
            })
            .map(|(k, _)| k.clone())
            .collect();
        for id in &expired {
            map.remove(id);
            if let Some(d) = &self.dir {
                let _ = fs::remove_dir_all(d.join(id));
            }
        }
        expired.len()
    }

    fn session_dir(&self, id: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(id))
    }

    fn persist_image(&self, s: &Session) -> SessionResult<()> {
        if let Some(d) = self.session_dir(&s.id) {
            fs::create_dir_all(d.join("masks")).map_err(interseg_core::Error::from)?;
            write_atomic(&d.join("image.sgrid"), &encode_sgrid(s.image(), Dtype::F32))
                .map_err(interseg_core::Error::from)?;
        }
        Ok(())
    }

    /// Write the session record and bring the mask files in line with the
    /// mask history.
    pub fn persist(&self, s: &Session) -> SessionResult<()> {
        let Some(d) = self.session_dir(&s.id) else {
            return Ok(());
        };
        let io = |e: std::io::Error| SessionError::from(interseg_core::Error::from(e));
        let masks = s.mask_history();
        if let Some(last) = masks.last() {
            write_atomic(&mask_path(&d, masks.len() - 1), &encode_mask_sgrid(last, s.image().spacing()))
                .map_err(io)?;
        }
        let mut k = masks.len();
        while mask_path(&d, k).exists() {
            fs::remove_file(mask_path(&d, k)).map_err(io)?;
            k += 1;
        }
        let json = serde_json::to_vec_pretty(&s.record()).map_err(interseg_core::Error::from)?;
        write_atomic(&d.join("session.json"), &json).map_err(io)
    }

    /// Reload every session found in the directory by replaying its record.
    /// Sessions whose replayed masks differ from the stored ones are skipped.
    pub fn load_all(&self) -> Vec<(String, SessionError)> {
        let Some(dir) = &self.dir else {
            return Vec::new();
        };
        let Ok(read) = fs::read_dir(dir) else {
            return Vec::new();
        };
        let mut failures = Vec::new();
        for entry in read.flatten() {
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            match load_one(&path) {
                Ok(s) => {
                    self.sessions.write().unwrap().insert(s.id.clone(), Entry::new(s));
                }
                Err(e) => failures.push((name, e)),
            }
        }
        failures
    }
}

pub fn load_one(path: &Path) -> SessionResult<Session> {
    let image = decode_sgrid(&fs::read(path.join("image.sgrid")).map_err(interseg_core::Error::from)?)?;
    let rec: SessionRecord =
        serde_json::from_slice(&fs::read(path.join("session.json")).map_err(interseg_core::Error::from)?)
            .map_err(interseg_core::Error::from)?;
    let s = Session::replay(image, &rec)?;
    for (k, m) in s.mask_history().iter().enumerate() {
        let stored = fs::read(mask_path(path, k)).map_err(interseg_core::Error::from)?;
        if stored != encode_mask_sgrid(m, s.image().spacing()) {
            return Err(interseg_core::Error::Format(format!("replayed mask {k} differs from stored mask")).into());
        }
    }
    Ok(s)
}
