//! On-disk store of enrolled user models.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sigsel_core::UserModel;

use crate::error::{CliError, CliResult};

pub const KB_VERSION: &str = "1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knowledgebase {
    pub version: String,
    /// RFC 3339 creation time.
    pub created: String,
    /// Parameters the models were enrolled with.
    #[serde(default)]
    pub config: serde_json::Value,
    pub models: Vec<UserModel>,
}

impl Knowledgebase {
    pub fn new(created: String, config: serde_json::Value, models: Vec<UserModel>) -> Self {
        Knowledgebase {
            version: KB_VERSION.to_string(),
            created,
            config,
            models,
        }
    }

    pub fn model(&self, user_id: &str) -> Option<&UserModel> {
        self.models.iter().find(|m| m.user_id == user_id)
    }

    /// Unique user ids and valid models.
    pub fn check(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for m in &self.models {
            if !seen.insert(m.user_id.as_str()) {
                return Err(format!("user {} appears twice", m.user_id));
            }
            m.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

pub fn save_knowledgebase(kb: &Knowledgebase, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(kb).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_knowledgebase(path: &Path) -> CliResult<Knowledgebase> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let json = |source| CliError::Json {
        path: path.to_path_buf(),
        source,
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(json)?;
    // check the version before the schema so old files fail clearly
    let found = value.get("version").and_then(|v| v.as_str()).unwrap_or("");
    if found != KB_VERSION {
        return Err(CliError::Version {
            path: path.to_path_buf(),
            found: found.to_string(),
            expected: KB_VERSION,
        });
    }
    let kb: Knowledgebase = serde_json::from_value(value).map_err(json)?;
    kb.check().map_err(|message| CliError::Corrupt {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(kb)
}
