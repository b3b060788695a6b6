//! Subgroup CSV ingest.
//!
//! Layout: a header row, then one observation per row as
//! `subgroup_id, x1, …, xp`. Rows of one subgroup must be contiguous and
//! every subgroup must have the same size. Malformed input is rejected with
//! the offending line number.

use std::io::Read;
use std::path::Path;

use crate::cloud::PointCloud;
use crate::error::{Result, SpcError};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub ids: Vec<i64>,
    pub subgroups: Vec<PointCloud>,
}

impl Dataset {
    pub fn subgroup_size(&self) -> usize {
        self.subgroups.first().map_or(0, PointCloud::len)
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> SpcError {
    SpcError::Parse { line, message: message.into() }
}

pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| parse_error(1, e.to_string()))?.clone();
    if header.len() < 2 {
        return Err(parse_error(1, "header needs a subgroup id column and at least one value column"));
    }
    let dim = header.len() - 1;

    let mut ids: Vec<i64> = Vec::new();
    let mut groups: Vec<Vec<f64>> = Vec::new();
    let mut group_start: Vec<u64> = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(parse_error(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id: i64 = record[0]
            .parse()
            .map_err(|_| parse_error(line, format!("bad subgroup id {:?}", &record[0])))?;
        let mut values = Vec::with_capacity(dim);
        for field in record.iter().skip(1) {
            let v: f64 =
                field.parse().map_err(|_| parse_error(line, format!("bad number {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(line, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        if ids.last() != Some(&id) {
            if ids.contains(&id) {
                return Err(parse_error(line, format!("subgroup {id} is not contiguous")));
            }
            ids.push(id);
            groups.push(Vec::new());
            group_start.push(line);
        }
        groups.last_mut().expect("group pushed").extend(values);
    }
    if groups.is_empty() {
        return Err(SpcError::InsufficientData("no observations".into()));
    }
    let expected = groups[0].len() / dim;
    for (k, g) in groups.iter().enumerate() {
        if g.len() / dim != expected {
            return Err(SpcError::RaggedSubgroup { id: ids[k], expected, found: g.len() / dim });
        }
    }
    let subgroups = groups
        .into_iter()
        .map(|g| PointCloud::new(dim, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { dim, ids, subgroups })
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| SpcError::Io(format!("{}: {e}", path.display())))?;
    read_dataset(std::io::BufReader::new(file))
}

/// Write subgroups in the ingest layout, numbering them from 1.
pub fn write_dataset<W: std::io::Write>(subgroups: &[PointCloud], writer: W) -> Result<()> {
    let dim = subgroups.first().map_or(1, PointCloud::dim);
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["subgroup_id".to_string()];
    header.extend((1..=dim).map(|j| format!("x{j}")));
    w.write_record(&header).map_err(|e| SpcError::Io(e.to_string()))?;
    for (k, g) in subgroups.iter().enumerate() {
        for p in g.points() {
            let mut row = vec![(k + 1).to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| SpcError::Io(e.to_string()))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_bivariate() {
        let text = "subgroup_id,x,y\n1,0.5,1\n1,2,3\n2,4,5\n2,6,7\n";
        let d = read_dataset(text.as_bytes()).unwrap();
        assert_eq!(d.dim, 2);
        assert_eq!(d.ids, vec![1, 2]);
        assert_eq!(d.subgroups[1].point(1), &[6.0, 7.0]);
    }

    #[test]
    fn ragged_subgroup_names_the_group() {
        let text = "id,x\n1,1\n1,2\n2,3\n";
        assert_eq!(
            read_dataset(text.as_bytes()),
            Err(SpcError::RaggedSubgroup { id: 2, expected: 2, found: 1 })
        );
    }

    #[test]
    fn bad_number_reports_line() {
        let text = "id,x\n1,1\n1,abc\n";
        match read_dataset(text.as_bytes()) {
            Err(SpcError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let nan = "id,x\n1,1\n1,NaN\n";
        assert!(matches!(read_dataset(nan.as_bytes()), Err(SpcError::Parse { line: 3, .. })));
        let short = "id,x,y\n1,1,2\n1,2\n";
        assert!(matches!(read_dataset(short.as_bytes()), Err(SpcError::Parse { line: 3, .. })));
        let split = "id,x\n1,1\n2,2\n1,3\n";
        assert!(matches!(read_dataset(split.as_bytes()), Err(SpcError::Parse { line: 4, .. })));
    }

    #[test]
    fn round_trip() {
        let groups = vec![
            PointCloud::from_points(&[[0.1, 2.0], [3.0, -4.5]]).unwrap(),
            PointCloud::from_points(&[[1e-300, 7.0], [8.25, 9.0]]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_dataset(&groups, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap().subgroups, groups);
    }
}
