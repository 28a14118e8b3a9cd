use std::io::{Read, Write};

use sigfp::sigkit::{features, FeatureKind, SignatureStream};
use sigfp::{Error, Result};

/// Read `(t, x_1, .., x_q)` rows and write the features of every prefix
/// `[t_0, t_i]`, one row each, prefixed by `t_i`.
pub fn prefix_features<R: Read, W: Write>(input: R, output: W, depth: usize, kind: FeatureKind, time_augment: bool) -> Result<usize> {
    if depth == 0 {
        return Err(Error::Config("--depth must be at least 1".into()));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(input);
    let mut writer = csv::Writer::from_writer(output);
    let mut stream: Option<SignatureStream> = None;
    let mut last_t = f64::NEG_INFINITY;
    let mut width = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let values = record
            .iter()
            .enumerate()
            .map(|(i, field)| {
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Data(format!("line {line}: column {} is not a finite number: `{field}`", i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 2 {
            return Err(Error::Data(format!("line {line}: need a time and at least one value")));
        }
        if *width.get_or_insert(values.len()) != values.len() {
            return Err(Error::Data(format!("line {line}: expected {} columns, found {}", width.unwrap_or(0), values.len())));
        }
        let t = values[0];
        if t <= last_t {
            return Err(Error::Data(format!("line {line}: time {t} does not increase (previous {last_t})")));
        }
        last_t = t;
        let mut node = Vec::with_capacity(values.len());
        if time_augment {
            node.push(t);
        }
        node.extend_from_slice(&values[1..]);
        match stream.as_mut() {
            None => {
                let s = SignatureStream::new(&node, depth);
                let header: Vec<String> = std::iter::once("t".to_string())
                    .chain((0..features(s.signature(), kind)?.len()).map(|k| format!("f{k}")))
                    .collect();
                writer.write_record(&header)?;
                stream = Some(s);
            }
            Some(s) => s.push(&node)?,
        }
        let f = features(stream.as_ref().expect("initialised").signature(), kind)?;
        writer.write_record(std::iter::once(t.to_string()).chain(f.iter().map(f64::to_string)))?;
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Data("input has no data rows".into()));
    }
    writer.flush()?;
    Ok(rows)
}
