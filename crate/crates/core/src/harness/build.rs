use std::collections::VecDeque;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::vcs::CheckoutPath;

const GRADLE_FILES: [&str; 2] = ["build.gradle", "build.gradle.kts"];
const MAVEN_FILE: &str = "pom.xml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildKind {
    Gradle,
    Maven,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSystem {
    pub kind: BuildKind,
    /// Repo-relative path of the build file; empty when `kind` is `None`.
    pub manifest_path: String,
}

impl BuildSystem {
    pub fn none() -> Self {
        BuildSystem { kind: BuildKind::None, manifest_path: String::new() }
    }

    /// Shell command performing a clean build of the detected project, with
    /// paths resolved against `root`.
    pub fn build_command(&self, root: &Path) -> Option<String> {
        let manifest = root.join(&self.manifest_path);
        match self.kind {
            BuildKind::Maven => Some(format!("mvn -q -f {} clean compile", shell_quote(&manifest.to_string_lossy()))),
            BuildKind::Gradle => {
                let dir = manifest.parent().unwrap_or(root);
                let wrapper = dir.join("gradlew");
                let program =
                    if wrapper.is_file() { shell_quote(&wrapper.to_string_lossy()) } else { "gradle".to_string() };
                Some(format!("{program} -p {} clean build -x test", shell_quote(&dir.to_string_lossy())))
            }
            BuildKind::None => None,
        }
    }
}

pub(crate) fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Breadth-first search for a build file. The shallowest match wins; at equal
/// depth Gradle beats Maven, then the lexicographically smaller path.
pub fn detect_build_system(checkout: &CheckoutPath) -> BuildSystem {
    let mut level = VecDeque::from([String::new()]);
    while !level.is_empty() {
        let mut gradle: Option<String> = None;
        let mut maven: Option<String> = None;
        let mut next = VecDeque::new();
        for rel_dir in level.drain(..) {
            let dir = if rel_dir.is_empty() { checkout.root.clone() } else { checkout.root.join(&rel_dir) };
            let Ok(entries) = fs::read_dir(&dir) else { continue };
            let mut entries: Vec<_> = entries.flatten().collect();
            entries.sort_by_key(|e| e.file_name());
            for entry in entries {
                let name = entry.file_name().to_string_lossy().into_owned();
                let rel = if rel_dir.is_empty() { name.clone() } else { format!("{rel_dir}/{name}") };
                let Ok(ty) = entry.file_type() else { continue };
                if ty.is_dir() {
                    if name != ".git" {
                        next.push_back(rel);
                    }
                } else if GRADLE_FILES.contains(&name.as_str()) {
                    if gradle.as_ref().is_none_or(|g| rel < *g) {
                        gradle = Some(rel);
                    }
                } else if name == MAVEN_FILE && maven.as_ref().is_none_or(|m| rel < *m) {
                    maven = Some(rel);
                }
            }
        }
        if let Some(path) = gradle {
            return BuildSystem { kind: BuildKind::Gradle, manifest_path: path };
        }
        if let Some(path) = maven {
            return BuildSystem { kind: BuildKind::Maven, manifest_path: path };
        }
        level = next;
    }
    BuildSystem::none()
}
