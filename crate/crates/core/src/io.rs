//! CSV readers and writers for subject data, posterior draws and results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! file reads back to the same bits. Files are written atomically.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::estimands::{Cell, Estimand, EstimandGrid, Summary};
use crate::imputation::ImputedDraw;
use crate::model::{Arm, ModelParams, NonterminalTime, ParamLayout, PotentialOutcomeSet, SubjectRecord};
use crate::sampler::PosteriorDraws;

pub const SUBJECT_COLUMNS: [&str; 6] = ["id", "z", "y_r", "delta_r", "y_t", "delta_t"];

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

fn csv_bytes(header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn parse_f64(field: &str, col: &str, line: u64, path: &Path) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| Error::data(format!("{}:{line}: column '{col}' holds '{field}', not a number", path.display())))
}

fn parse_flag(field: &str, col: &str, line: u64, path: &Path) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::data(format!("{}:{line}: column '{col}' must be 0 or 1, found '{field}'", path.display()))),
    }
}

/// Reads subject records. With `covariates = None` every column after the
/// six fixed ones is a covariate.
pub fn read_subjects(path: &Path, covariates: Option<&[String]>) -> Result<(Vec<SubjectRecord>, Vec<String>)> {
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let col = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::data(format!("{}: missing column '{name}'", path.display())))
    };
    let fixed: Vec<usize> = SUBJECT_COLUMNS.iter().map(|c| col(c)).collect::<Result<_>>()?;
    let cov_names: Vec<String> = match covariates {
        Some(c) => c.to_vec(),
        None => header.iter().filter(|h| !SUBJECT_COLUMNS.contains(&h.as_str())).cloned().collect(),
    };
    let cov_idx: Vec<usize> = cov_names.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let get = |i: usize| rec.get(i).unwrap_or("");
        let z = match get(fixed[1]) {
            "0" => Arm::Control,
            "1" => Arm::Treated,
            other => {
                return Err(Error::data(format!("{}:{line}: column 'z' must be 0 or 1, found '{other}'", path.display())))
            }
        };
        let s = SubjectRecord {
            id: get(fixed[0]).to_string(),
            z,
            y_r: parse_f64(get(fixed[2]), "y_r", line, path)?,
            delta_r: parse_flag(get(fixed[3]), "delta_r", line, path)?,
            y_t: parse_f64(get(fixed[4]), "y_t", line, path)?,
            delta_t: parse_flag(get(fixed[5]), "delta_t", line, path)?,
            x: cov_idx
                .iter()
                .zip(&cov_names)
                .map(|(&i, n)| parse_f64(get(i), n, line, path))
                .collect::<Result<_>>()?,
        };
        s.validate().map_err(|e| Error::data(format!("{}:{line}: {e}", path.display())))?;
        out.push(s);
    }
    if out.is_empty() {
        return Err(Error::data(format!("{}: no data rows", path.display())));
    }
    Ok((out, cov_names))
}

pub fn write_subjects(path: &Path, records: &[SubjectRecord], covariates: &[String]) -> Result<()> {
    let mut header: Vec<String> = SUBJECT_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(covariates.iter().cloned());
    let rows = records.iter().map(|s| {
        let mut r = vec![
            s.id.clone(),
            s.z.index().to_string(),
            fmt(s.y_r),
            (s.delta_r as u8).to_string(),
            fmt(s.y_t),
            (s.delta_t as u8).to_string(),
        ];
        r.extend(s.x.iter().map(|v| fmt(*v)));
        r
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Posterior draws on the natural scale: chain, iter, log_post, divergent, then parameters.
pub fn write_draws(path: &Path, draws: &PosteriorDraws, covariates: &[String]) -> Result<()> {
    let layout = ParamLayout::new((draws.dim - 13) / 6);
    let mut header: Vec<String> = ["chain", "iter", "log_post", "divergent"].iter().map(|s| s.to_string()).collect();
    header.extend(layout.natural_names(covariates));
    let rows = (0..draws.n_draws()).map(|i| {
        let mut r = vec![
            draws.chain_id[i].to_string(),
            draws.iter[i].to_string(),
            fmt(draws.log_post[i]),
            (draws.divergent[i] as u8).to_string(),
        ];
        r.extend(layout.natural_values(draws.row(i)).into_iter().map(fmt));
        r
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawTable {
    pub chain: Vec<usize>,
    pub iter: Vec<usize>,
    pub log_post: Vec<f64>,
    pub divergent: Vec<bool>,
    pub params: Vec<ModelParams>,
    pub covariates: Vec<String>,
}

pub fn read_draws(path: &Path) -> Result<DrawTable> {
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.len() < 4 + 13 || (header.len() - 4 - 13) % 6 != 0 || header[..4] != ["chain", "iter", "log_post", "divergent"] {
        return Err(Error::data(format!("{}: not a draws file", path.display())));
    }
    let p = (header.len() - 17) / 6;
    let layout = ParamLayout::new(p);
    let prefix = "beta_z0_j1_";
    let covariates: Vec<String> = (0..p)
        .map(|k| header[4 + layout.beta(crate::model::Arm::Control, crate::model::Transition::Nonterminal, k)]
            .strip_prefix(prefix)
            .unwrap_or("")
            .to_string())
        .collect();
    if layout.natural_names(&covariates) != header[4..] {
        return Err(Error::data(format!("{}: unexpected parameter columns", path.display())));
    }
    let mut t = DrawTable {
        chain: vec![],
        iter: vec![],
        log_post: vec![],
        divergent: vec![],
        params: vec![],
        covariates,
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let num = |i: usize| parse_f64(rec.get(i).unwrap_or(""), &header[i], line, path);
        let int = |i: usize| {
            rec.get(i)
                .unwrap_or("")
                .parse::<usize>()
                .map_err(|_| Error::data(format!("{}:{line}: column '{}' must be an integer", path.display(), header[i])))
        };
        t.chain.push(int(0)?);
        t.iter.push(int(1)?);
        t.log_post.push(num(2)?);
        t.divergent.push(parse_flag(rec.get(3).unwrap_or(""), "divergent", line, path)?);
        let values: Vec<f64> = (4..header.len()).map(num).collect::<Result<_>>()?;
        t.params
            .push(layout.params_from_natural(&values).map_err(|e| Error::data(format!("{}:{line}: {e}", path.display())))?);
    }
    if t.params.is_empty() {
        return Err(Error::data(format!("{}: no draws", path.display())));
    }
    Ok(t)
}

fn fmt_r(r: NonterminalTime) -> String {
    r.time().map(fmt).unwrap_or_default()
}

/// `b, id, r0, t0, r1, t1`; an undefined nonterminal time is an empty field.
pub fn write_potential_outcomes(path: &Path, draws: &[ImputedDraw], ids: &[String]) -> Result<()> {
    let header: Vec<String> = ["b", "id", "r0", "t0", "r1", "t1", "gamma"].iter().map(|s| s.to_string()).collect();
    let rows = draws.iter().flat_map(|d| {
        d.outcomes.iter().zip(&d.gamma).zip(ids).map(move |((po, g), id)| {
            vec![
                d.draw.to_string(),
                id.clone(),
                fmt_r(po.r0),
                fmt(po.t0),
                fmt_r(po.r1),
                fmt(po.t1),
                fmt(*g),
            ]
        })
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

pub fn write_truth(path: &Path, ids: &[String], truth: &[PotentialOutcomeSet], gamma: &[f64]) -> Result<()> {
    let header: Vec<String> = ["id", "r0", "t0", "r1", "t1", "gamma"].iter().map(|s| s.to_string()).collect();
    let rows = ids
        .iter()
        .zip(truth)
        .zip(gamma)
        .map(|((id, po), g)| vec![id.clone(), fmt_r(po.r0), fmt(po.t0), fmt_r(po.r1), fmt(po.t1), fmt(*g)]);
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Reads `truth.csv` back into potential outcomes and frailties.
pub fn read_truth(path: &Path) -> Result<(Vec<String>, Vec<PotentialOutcomeSet>, Vec<f64>)> {
    let mut rdr = open_csv(path)?;
    let (mut ids, mut po, mut g) = (vec![], vec![], vec![]);
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let f = |i: usize, c: &str| parse_f64(rec.get(i).unwrap_or(""), c, line, path);
        let r = |i: usize, c: &str| -> Result<NonterminalTime> {
            match rec.get(i).unwrap_or("") {
                "" => Ok(NonterminalTime::Undefined),
                _ => Ok(NonterminalTime::At(f(i, c)?)),
            }
        };
        ids.push(rec.get(0).unwrap_or("").to_string());
        po.push(PotentialOutcomeSet {
            r0: r(1, "r0")?,
            t0: f(2, "t0")?,
            r1: r(3, "r1")?,
            t1: f(4, "t1")?,
        });
        g.push(f(5, "gamma")?);
    }
    Ok((ids, po, g))
}

fn summary_fields(s: Option<&Summary>) -> Vec<String> {
    match s {
        Some(s) => vec![fmt(s.mean), fmt(s.median), fmt(s.lo95), fmt(s.hi95), s.n_draws_defined.to_string()],
        None => vec![String::new(), String::new(), String::new(), String::new(), "0".into()],
    }
}

/// `estimand, r, t, mean, median, lo95, hi95, n_draws_defined`.
pub fn write_estimands(path: &Path, grid: &EstimandGrid) -> Result<()> {
    let header: Vec<String> = ["estimand", "r", "t", "mean", "median", "lo95", "hi95", "n_draws_defined"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = grid.cells.iter().map(|c| {
        let mut r = vec![c.estimand.name().to_string(), fmt(c.r), fmt(c.t)];
        r.extend(summary_fields(c.summary.as_ref()));
        r
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Posterior mean and 95% interval of each principal state proportion per `t`.
pub fn write_states(path: &Path, grid: &EstimandGrid) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for s in ["aa", "tk", "ck", "dd"] {
        header.push(format!("p_{s}"));
        header.push(format!("p_{s}_lo95"));
        header.push(format!("p_{s}_hi95"));
    }
    let rows = grid.states.iter().map(|st| {
        let mut r = vec![fmt(st.t)];
        for s in &st.states {
            r.extend([fmt(s.mean), fmt(s.lo95), fmt(s.hi95)]);
        }
        r
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Posterior mean and 95% interval of each arm's alive fraction per `t`.
pub fn write_survival(path: &Path, grid: &EstimandGrid) -> Result<()> {
    let header: Vec<String> = ["t", "s0", "s0_lo95", "s0_hi95", "s1", "s1_lo95", "s1_hi95"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let rows = grid.times.iter().zip(&grid.survival).map(|(t, s)| {
        vec![fmt(*t), fmt(s[0].mean), fmt(s[0].lo95), fmt(s[0].hi95), fmt(s[1].mean), fmt(s[1].lo95), fmt(s[1].hi95)]
    });
    atomic_write(path, &csv_bytes(&header, rows)?)
}

/// Generic numeric table writer for plot-ready outputs.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<Option<f64>>>) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    atomic_write(path, &csv_bytes(&header, rows.into_iter().map(|r| r.into_iter().map(fmt_opt).collect()))?)
}

/// Reads a numeric table written by [`write_table`], [`write_states`] or
/// [`write_survival`]; empty fields are `None`.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<Option<f64>>>)> {
    let mut rdr = open_csv(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let row = rec
            .iter()
            .zip(&header)
            .map(|(f, c)| if f.is_empty() { Ok(None) } else { parse_f64(f, c, line, path).map(Some) })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads `estimands.csv` back into grid cells.
pub fn read_estimands(path: &Path) -> Result<Vec<Cell>> {
    let mut rdr = open_csv(path)?;
    let mut cells = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let get = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize, c: &str| parse_f64(get(i), c, line, path);
        let estimand = match get(0) {
            "tv_sace" => Estimand::TvSace,
            "rm_sace" => Estimand::RmSace,
            other => return Err(Error::data(format!("{}:{line}: unknown estimand '{other}'", path.display()))),
        };
        let n_draws_defined: usize = get(7)
            .parse()
            .map_err(|_| Error::data(format!("{}:{line}: column 'n_draws_defined' must be an integer", path.display())))?;
        let summary = if get(3).is_empty() {
            None
        } else {
            Some(Summary {
                mean: num(3, "mean")?,
                median: num(4, "median")?,
                lo95: num(5, "lo95")?,
                hi95: num(6, "hi95")?,
                n_draws_defined,
            })
        };
        cells.push(Cell { estimand, r: num(1, "r")?, t: num(2, "t")?, summary });
    }
    Ok(cells)
}

/// Reads `potential_outcomes.csv`, grouping rows by draw in file order.
pub fn read_potential_outcomes(path: &Path) -> Result<(Vec<String>, Vec<ImputedDraw>)> {
    let mut rdr = open_csv(path)?;
    let mut ids: Vec<String> = Vec::new();
    let mut draws: Vec<ImputedDraw> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        let line = line_of(&rec);
        let get = |i: usize| rec.get(i).unwrap_or("");
        let f = |i: usize, c: &str| parse_f64(get(i), c, line, path);
        let r = |i: usize, c: &str| -> Result<NonterminalTime> {
            match get(i) {
                "" => Ok(NonterminalTime::Undefined),
                _ => Ok(NonterminalTime::At(f(i, c)?)),
            }
        };
        let b: usize = get(0)
            .parse()
            .map_err(|_| Error::data(format!("{}:{line}: column 'b' must be an integer", path.display())))?;
        if draws.last().is_none_or(|d| d.draw != b) {
            draws.push(ImputedDraw { draw: b, gamma: vec![], outcomes: vec![] });
        }
        if draws.len() == 1 {
            ids.push(get(1).to_string());
        }
        let d = draws.last_mut().expect("pushed above");
        d.outcomes.push(PotentialOutcomeSet { r0: r(2, "r0")?, t0: f(3, "t0")?, r1: r(4, "r1")?, t1: f(5, "t1")? });
        d.gamma.push(f(6, "gamma")?);
    }
    if draws.iter().any(|d| d.outcomes.len() != ids.len()) {
        return Err(Error::data(format!("{}: draws cover different subjects", path.display())));
    }
    Ok((ids, draws))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn rec(id: &str, z: Arm, y_r: f64, dr: bool, y_t: f64, dt: bool, x: Vec<f64>) -> SubjectRecord {
        SubjectRecord { id: id.into(), z, y_r, delta_r: dr, y_t, delta_t: dt, x }
    }

    #[test]
    fn subjects_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let data = vec![
            rec("a", Arm::Treated, 0.1 + 0.2, true, 1.0 / 3.0, false, vec![1e-300, -2.5]),
            rec("b", Arm::Control, 2.0, false, 2.0, true, vec![std::f64::consts::PI, 0.0]),
        ];
        let names = vec!["age".to_string(), "los".to_string()];
        write_subjects(&path, &data, &names).unwrap();
        let (back, cov) = read_subjects(&path, None).unwrap();
        assert_eq!(back, data);
        assert_eq!(cov, names);
        let (sub, _) = read_subjects(&path, Some(&["los".to_string()])).unwrap();
        assert_eq!(sub[0].x, vec![-2.5]);
        assert!(read_subjects(&path, Some(&["missing".to_string()])).is_err());
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "id,z,y_r,delta_r,y_t,delta_t,x1").unwrap();
        writeln!(f, "1,0,1.0,1,2.0,0,0.5").unwrap();
        writeln!(f, "2,1,abc,1,2.0,0,0.5").unwrap();
        drop(f);
        let msg = read_subjects(&path, None).unwrap_err().to_string();
        assert!(msg.contains(":3:") && msg.contains("y_r"), "{msg}");

        let mut f = fs::File::create(&path).unwrap();
        writeln!(f, "id,z,y_r,delta_r,y_t,delta_t").unwrap();
        writeln!(f, "1,0,3.0,1,2.0,0").unwrap();
        drop(f);
        let msg = read_subjects(&path, None).unwrap_err().to_string();
        assert!(msg.contains(":2:"), "{msg}");
    }

    #[test]
    fn truth_round_trip_keeps_undefined() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let po = vec![PotentialOutcomeSet {
            r0: NonterminalTime::Undefined,
            t0: 1.25,
            r1: NonterminalTime::At(0.1),
            t1: 7.0,
        }];
        write_truth(&path, &["s".into()], &po, &[0.7]).unwrap();
        let (ids, back, g) = read_truth(&path).unwrap();
        assert_eq!((ids, back, g), (vec!["s".to_string()], po, vec![0.7]));
    }

    #[test]
    fn result_tables_round_trip() {
        use crate::estimands::{summarize_grid, TimeGrid};
        let dir = tempfile::tempdir().unwrap();
        let mut outcomes = Vec::new();
        for i in 0..6 {
            let a = 0.37 * (i + 1) as f64;
            outcomes.push(PotentialOutcomeSet {
                r0: if i % 2 == 0 { NonterminalTime::At(a / 3.0) } else { NonterminalTime::Undefined },
                t0: a,
                r1: NonterminalTime::At(a / 7.0),
                t1: a * 1.1,
            });
        }
        let draws: Vec<ImputedDraw> = (0..3)
            .map(|b| ImputedDraw { draw: b * 4, gamma: vec![0.1 + b as f64 / 3.0; 6], outcomes: outcomes.clone() })
            .collect();
        let grid = TimeGrid::new(vec![0.3, 0.9, 2.5], None).unwrap();
        let (_, est) = summarize_grid(&draws, &grid).unwrap();

        let p = dir.path().join("estimands.csv");
        write_estimands(&p, &est).unwrap();
        assert_eq!(read_estimands(&p).unwrap(), est.cells);
        assert!(est.cells.iter().any(|c| c.summary.is_none()));

        let p = dir.path().join("survival.csv");
        write_survival(&p, &est).unwrap();
        let (header, rows) = read_table(&p).unwrap();
        assert_eq!(header[0], "t");
        for (row, (t, s)) in rows.iter().zip(est.times.iter().zip(&est.survival)) {
            assert_eq!(row[..4], [Some(*t), Some(s[0].mean), Some(s[0].lo95), Some(s[0].hi95)]);
        }

        let p = dir.path().join("states.csv");
        write_states(&p, &est).unwrap();
        let (_, rows) = read_table(&p).unwrap();
        assert_eq!(rows[2][10], Some(est.states[2].states[3].mean));

        let p = dir.path().join("po.csv");
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        write_potential_outcomes(&p, &draws, &ids).unwrap();
        assert_eq!(read_potential_outcomes(&p).unwrap(), (ids, draws));

        let p = dir.path().join("plot.csv");
        write_table(&p, &["a", "b"], vec![vec![Some(1.0 / 3.0), None], vec![Some(-0.0), Some(1e-310)]]).unwrap();
        let (_, rows) = read_table(&p).unwrap();
        assert_eq!(rows[0], vec![Some(1.0 / 3.0), None]);
        assert_eq!(rows[1][1].unwrap().to_bits(), 1e-310f64.to_bits());
    }
}
