use std::collections::HashMap;
use std::sync::Mutex;

use super::{Classification, ScoreMode};

/// Cache key: the exact text bytes under one backend and score mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    backend: String,
    mode: ScoreMode,
    text: String,
}

impl CacheKey {
    pub fn new(backend: &str, mode: ScoreMode, text: &str) -> Self {
        Self {
            backend: backend.to_string(),
            mode,
            text: text.to_string(),
        }
    }
}

/// Thread-safe memo of classifier replies. Only successes are stored.
#[derive(Debug, Default)]
pub struct ResponseCache {
    entries: Mutex<HashMap<CacheKey, Classification>>,
}

impl ResponseCache {
    pub fn get(&self, key: &CacheKey) -> Option<Classification> {
        self.entries.lock().expect("cache lock").get(key).cloned()
    }

    pub fn insert(&self, key: CacheKey, value: Classification) {
        self.entries.lock().expect("cache lock").insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&self) {
        self.entries.lock().expect("cache lock").clear();
    }
}
