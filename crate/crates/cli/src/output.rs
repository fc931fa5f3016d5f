use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// An output directory that refuses to clobber files unless forced.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub dir: PathBuf,
    force: bool,
}

impl OutDir {
    /// Creates the directory and fails early if any of `names` exists.
    pub fn claim(dir: &Path, force: bool, names: &[String]) -> Result<Self> {
        if !force {
            let taken: Vec<&String> = names.iter().filter(|n| dir.join(n).exists()).collect();
            if !taken.is_empty() {
                bail!(
                    "{} already contains {} (pass --force to overwrite)",
                    dir.display(),
                    taken.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
                );
            }
        }
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            force,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn check(&self, name: &str) -> Result<PathBuf> {
        let p = self.path(name);
        if p.exists() && !self.force {
            bail!("{} exists (pass --force to overwrite)", p.display());
        }
        Ok(p)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let p = self.check(name)?;
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Streams through `f` into `name`.
    pub fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<PathBuf> {
        let p = self.check(name)?;
        let file = fs::File::create(&p).with_context(|| format!("creating {}", p.display()))?;
        let mut w = BufWriter::new(file);
        f(&mut w).with_context(|| format!("writing {}", p.display()))?;
        std::io::Write::flush(&mut w)?;
        Ok(p)
    }
}
