//! Emits a matplotlib script for the CSV artifacts of a run. Nothing is executed.

use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

fn header(path: &Path) -> Result<String> {
    let file = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
    let mut line = String::new();
    std::io::BufReader::new(file).read_line(&mut line)?;
    Ok(line.trim().to_string())
}

/// Script text plotting every given CSV according to its header.
pub fn emit_plot_script(files: &[PathBuf]) -> Result<String> {
    if files.is_empty() {
        return Err(Error::MissingFile(PathBuf::from("<no csv files>")));
    }
    let mut script = String::from(
        "import os\nimport pandas as pd\nimport matplotlib.pyplot as plt\n\nhere = os.path.dirname(os.path.abspath(__file__))\n",
    );
    let mut profiles = Vec::new();
    for path in files {
        if !path.exists() {
            return Err(Error::MissingFile(path.clone()));
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match header(path)?.as_str() {
            "t,energy,cum_dissipation,dist_plus,dist_minus,mass" => {
                let _ = write!(
                    script,
                    "\nd = pd.read_csv(os.path.join(here, {name:?}))\n\
                     fig, ax = plt.subplots(1, 2, figsize=(10, 4))\n\
                     ax[0].plot(d['t'], d['energy'], label='energy')\n\
                     ax[0].plot(d['t'], d['energy'].iloc[0] - d['cum_dissipation'], '--', label='E0 - dissipation')\n\
                     ax[0].set_xlabel('t')\n\
                     ax[0].legend()\n\
                     ax[1].semilogy(d['t'], d['dist_plus'], label='dist_plus')\n\
                     ax[1].semilogy(d['t'], d['dist_minus'], label='dist_minus')\n\
                     ax[1].set_xlabel('t')\n\
                     ax[1].legend()\n\
                     fig.savefig(os.path.join(here, {:?}))\n",
                    format!("{}.png", name.trim_end_matches(".csv"))
                );
            }
            "tau,energy,bound" => {
                let _ = write!(
                    script,
                    "\nd = pd.read_csv(os.path.join(here, {name:?}))\n\
                     fig, ax = plt.subplots()\n\
                     ax.plot(d['tau'], d['energy'], label='energy')\n\
                     ax.plot(d['tau'], d['bound'], '--', label='bound')\n\
                     ax.set_xlabel('tau')\n\
                     ax.legend()\n\
                     fig.savefig(os.path.join(here, {:?}))\n",
                    format!("{}.png", name.trim_end_matches(".csv"))
                );
            }
            "image,energy" => {
                let _ = write!(
                    script,
                    "\nd = pd.read_csv(os.path.join(here, {name:?}))\n\
                     fig, ax = plt.subplots()\n\
                     ax.plot(d['image'], d['energy'], 'o-')\n\
                     ax.set_xlabel('image')\n\
                     fig.savefig(os.path.join(here, 'string.png'))\n"
                );
            }
            "x,value" => profiles.push(name),
            _ => {}
        }
    }
    if !profiles.is_empty() {
        script.push_str("\nfig, ax = plt.subplots()\n");
        for name in &profiles {
            let _ = writeln!(
                script,
                "d = pd.read_csv(os.path.join(here, {name:?}))\nax.plot(d['x'], d['value'], label={:?})",
                name.trim_end_matches(".csv")
            );
        }
        if profiles.len() <= 12 {
            script.push_str("ax.legend()\n");
        }
        script.push_str("ax.set_xlabel('x')\nfig.savefig(os.path.join(here, 'profiles.png'))\n");
    }
    Ok(script)
}

/// Writes `plot.py` for every CSV in `dir`.
pub fn emit_plot_script_for_dir(dir: &Path) -> Result<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|_| Error::MissingFile(dir.to_path_buf()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    let script = emit_plot_script(&files)?;
    let path = dir.join("plot.py");
    super::write_atomic(&path, script.as_bytes())?;
    Ok(path)
}
