//! CSV tables on stdout and, optionally, files plus a manifest in an
//! output directory.

use std::io::Write;
use std::path::PathBuf;

use bcev::studies::Table;

use crate::config::RawConfig;
use crate::error::{CliError, CliResult};

pub struct Output {
    dir: Option<PathBuf>,
}

impl Output {
    pub fn new(dir: Option<PathBuf>) -> CliResult<Self> {
        if let Some(d) = &dir {
            std::fs::create_dir_all(d)
                .map_err(|e| CliError::Output(format!("cannot create {}: {e}", d.display())))?;
        }
        Ok(Self { dir })
    }

    pub fn print(&self, table: &Table) -> CliResult<()> {
        let stdout = std::io::stdout();
        write_table(stdout.lock(), table)
    }

    pub fn save(&self, table: &Table) -> CliResult<()> {
        if let Some(d) = &self.dir {
            let path = d.join(format!("{}.csv", table.name));
            let file = std::fs::File::create(&path)
                .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
            write_table(std::io::BufWriter::new(file), table)?;
        }
        Ok(())
    }

    pub fn manifest(&self, name: &str, raw: &RawConfig) -> CliResult<()> {
        if let Some(d) = &self.dir {
            let path = d.join(format!("{name}.manifest"));
            std::fs::write(&path, raw.to_ini_string())
                .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
        }
        Ok(())
    }
}

pub fn write_table<W: Write>(w: W, table: &Table) -> CliResult<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(&table.header)?;
    for row in &table.rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn table(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Table {
    Table {
        name: name.to_string(),
        header: header.iter().map(|h| h.to_string()).collect(),
        rows,
    }
}
