//! SUMO floating car data, as the XML `fcd-export` or a flat CSV with
//! columns `time,id,x,y,angle,speed` and an optional `type`.
//!
//! Traces are read tick by tick so day-long exports never have to fit in
//! memory; [`load_fcd`] collects everything for small inputs.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event as XmlEvent};

use super::scenario::{IdentityAllocator, Scenario, Tick, VehicleIdentity, VehicleState};
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcdFormat {
    Xml,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcdOptions {
    pub seed: u64,
    /// Keep only passenger cars; rows without a type are kept.
    pub sedans_only: bool,
    /// Ticks before this time are skipped.
    pub begin_ms: Option<u64>,
    /// Ticks at or after this time end the trace.
    pub end_ms: Option<u64>,
}

impl Default for FcdOptions {
    fn default() -> Self {
        Self {
            seed: super::DEFAULT_SEED,
            sedans_only: true,
            begin_ms: None,
            end_ms: None,
        }
    }
}

/// SUMO's default type and anything named like a passenger car.
pub fn is_sedan(vtype: Option<&str>) -> bool {
    match vtype {
        None => true,
        Some(t) => {
            let t = t.to_ascii_lowercase();
            t.is_empty() || t == "default_vehtype" || t.contains("passenger") || t.contains("sedan")
        }
    }
}

fn seconds_to_ms(text: &str, line: usize) -> Result<u64, SimError> {
    let s: f64 = text.trim().parse().map_err(|_| SimError::Parse {
        line,
        context: format!("bad time {text:?}"),
    })?;
    if !s.is_finite() || s < 0.0 {
        return Err(SimError::Parse {
            line,
            context: format!("bad time {text:?}"),
        });
    }
    Ok((s * 1000.0).round() as u64)
}

fn number(text: &str, what: &str, line: usize) -> Result<f64, SimError> {
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| SimError::Parse {
            line,
            context: format!("bad {what} {text:?}"),
        })
}

fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

struct Row {
    time_ms: u64,
    id: String,
    x: f64,
    y: f64,
    angle: f64,
    speed: f64,
    vtype: Option<String>,
    line: usize,
}

enum Source<R: BufRead> {
    Xml(XmlSource<R>),
    Csv(CsvSource<R>),
}

/// Incremental FCD reader. Identities are drawn the first time a trace id
/// appears, so they match [`load_fcd`] for the same seed.
pub struct FcdReader<R: BufRead> {
    source: Source<R>,
    opts: FcdOptions,
    ids: IdentityAllocator,
    last_time: Option<u64>,
    dropped_rows: usize,
    done: bool,
}

impl<R: BufRead> FcdReader<R> {
    /// Sniffs the format from the first non-blank byte of the first buffered
    /// chunk: `<` means XML, anything else CSV.
    pub fn new(mut reader: R, opts: FcdOptions) -> Result<Self, SimError> {
        let buf = reader.fill_buf()?;
        let format = match buf.iter().find(|b| !b.is_ascii_whitespace()) {
            Some(b'<') => FcdFormat::Xml,
            _ => FcdFormat::Csv,
        };
        Self::with_format(reader, format, opts)
    }

    pub fn with_format(reader: R, format: FcdFormat, opts: FcdOptions) -> Result<Self, SimError> {
        let source = match format {
            FcdFormat::Xml => Source::Xml(XmlSource::new(reader)),
            FcdFormat::Csv => Source::Csv(CsvSource::new(reader)?),
        };
        Ok(Self {
            source,
            opts,
            ids: IdentityAllocator::new(opts.seed),
            last_time: None,
            dropped_rows: 0,
            done: false,
        })
    }

    pub fn vehicles(&self) -> &[VehicleIdentity] {
        self.ids.vehicles()
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    fn next_raw(&mut self) -> Result<Option<(u64, usize, Vec<Row>)>, SimError> {
        match &mut self.source {
            Source::Xml(s) => s.next_timestep(),
            Source::Csv(s) => s.next_group(),
        }
    }

    /// The next tick in the time window, or `None` at the end of the trace.
    pub fn next_tick(&mut self) -> Result<Option<Tick>, SimError> {
        while !self.done {
            let Some((time_ms, line, rows)) = self.next_raw()? else {
                self.done = true;
                break;
            };
            if let Some(prev) = self.last_time {
                if time_ms <= prev {
                    return Err(SimError::NonMonotonicTime {
                        line,
                        previous_ms: prev,
                        time_ms,
                    });
                }
            }
            self.last_time = Some(time_ms);
            if self.opts.begin_ms.is_some_and(|b| time_ms < b) {
                continue;
            }
            if self.opts.end_ms.is_some_and(|e| time_ms >= e) {
                self.done = true;
                break;
            }
            let mut seen = HashSet::new();
            let mut states = Vec::with_capacity(rows.len());
            for row in rows {
                if !seen.insert(row.id.clone()) {
                    return Err(SimError::Parse {
                        line: row.line,
                        context: format!(
                            "vehicle {:?} appears twice at {} ms",
                            row.id, row.time_ms
                        ),
                    });
                }
                if self.opts.sedans_only && !is_sedan(row.vtype.as_deref()) {
                    self.dropped_rows += 1;
                    continue;
                }
                states.push(VehicleState {
                    vehicle: self.ids.intern(&row.id),
                    x_m: row.x,
                    y_m: row.y,
                    heading_deg: normalize_heading(row.angle),
                    speed_mps: row.speed,
                });
            }
            return Ok(Some(Tick { time_ms, states }));
        }
        Ok(None)
    }

    pub fn into_scenario(mut self) -> Result<Scenario, SimError> {
        let mut ticks = Vec::new();
        while let Some(t) = self.next_tick()? {
            ticks.push(t);
        }
        Ok(Scenario {
            vehicles: self.ids.into_vehicles(),
            ticks,
            dropped_rows: self.dropped_rows,
        })
    }
}

/// Reads a whole FCD trace (XML or CSV, detected from the content).
pub fn load_fcd<R: BufRead>(reader: R, opts: FcdOptions) -> Result<Scenario, SimError> {
    FcdReader::new(reader, opts)?.into_scenario()
}

struct XmlSource<R: BufRead> {
    reader: quick_xml::Reader<R>,
    buf: Vec<u8>,
    line: usize,
    finished: bool,
}

impl<R: BufRead> XmlSource<R> {
    fn new(reader: R) -> Self {
        Self {
            reader: quick_xml::Reader::from_reader(reader),
            buf: Vec::new(),
            line: 1,
            finished: false,
        }
    }

    fn attrs(e: &BytesStart<'_>, line: usize) -> Result<Vec<(String, String)>, SimError> {
        e.attributes()
            .map(|a| {
                let a = a.map_err(|err| SimError::Parse {
                    line,
                    context: err.to_string(),
                })?;
                let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
                let value = a
                    .unescape_value()
                    .map_err(|err| SimError::Parse {
                        line,
                        context: err.to_string(),
                    })?
                    .into_owned();
                Ok((key, value))
            })
            .collect()
    }

    fn vehicle_row(e: &BytesStart<'_>, time_ms: u64, line: usize) -> Result<Row, SimError> {
        let attrs = Self::attrs(e, line)?;
        let get = |name: &str| -> Result<&str, SimError> {
            attrs
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| SimError::Parse {
                    line,
                    context: format!("<vehicle> without {name}"),
                })
        };
        Ok(Row {
            time_ms,
            id: get("id")?.to_owned(),
            x: number(get("x")?, "x", line)?,
            y: number(get("y")?, "y", line)?,
            angle: number(get("angle")?, "angle", line)?,
            speed: number(get("speed")?, "speed", line)?,
            vtype: attrs
                .iter()
                .find(|(k, _)| k == "type")
                .map(|(_, v)| v.clone()),
            line,
        })
    }

    fn next_timestep(&mut self) -> Result<Option<(u64, usize, Vec<Row>)>, SimError> {
        let mut current: Option<(u64, usize, Vec<Row>)> = None;
        while !self.finished {
            self.buf.clear();
            let event =
                self.reader
                    .read_event_into(&mut self.buf)
                    .map_err(|e| SimError::Parse {
                        line: self.line,
                        context: e.to_string(),
                    })?;
            let newlines = match &event {
                XmlEvent::Start(e) | XmlEvent::Empty(e) => bytecount(e.as_ref()),
                XmlEvent::End(e) => bytecount(e.as_ref()),
                XmlEvent::Text(e) => bytecount(e.as_ref()),
                XmlEvent::CData(e) => bytecount(e.as_ref()),
                XmlEvent::Comment(e) => bytecount(e.as_ref()),
                XmlEvent::Decl(e) => bytecount(e.as_ref()),
                XmlEvent::PI(e) => bytecount(e.as_ref()),
                XmlEvent::DocType(e) => bytecount(e.as_ref()),
                XmlEvent::Eof => 0,
            };
            match event {
                XmlEvent::Start(ref e) | XmlEvent::Empty(ref e) => {
                    let empty = matches!(event, XmlEvent::Empty(_));
                    match e.local_name().as_ref() {
                        b"timestep" => {
                            if current.is_some() {
                                return Err(SimError::Parse {
                                    line: self.line,
                                    context: "nested <timestep>".into(),
                                });
                            }
                            let attrs = Self::attrs(e, self.line)?;
                            let time =
                                attrs.iter().find(|(k, _)| k == "time").ok_or_else(|| {
                                    SimError::Parse {
                                        line: self.line,
                                        context: "<timestep> without time".into(),
                                    }
                                })?;
                            let t = seconds_to_ms(&time.1, self.line)?;
                            if empty {
                                self.line += newlines;
                                return Ok(Some((t, self.line, Vec::new())));
                            }
                            current = Some((t, self.line, Vec::new()));
                        }
                        b"vehicle" => {
                            let Some((t, _, rows)) = current.as_mut() else {
                                return Err(SimError::Parse {
                                    line: self.line,
                                    context: "<vehicle> outside <timestep>".into(),
                                });
                            };
                            let row = Self::vehicle_row(e, *t, self.line)?;
                            rows.push(row);
                        }
                        _ => {}
                    }
                }
                XmlEvent::End(ref e) if e.local_name().as_ref() == b"timestep" => {
                    self.line += newlines;
                    return match current {
                        Some(c) => Ok(Some(c)),
                        None => Err(SimError::Parse {
                            line: self.line,
                            context: "unmatched </timestep>".into(),
                        }),
                    };
                }
                XmlEvent::Eof => {
                    self.finished = true;
                    if current.is_some() {
                        return Err(SimError::Parse {
                            line: self.line,
                            context: "unterminated <timestep>".into(),
                        });
                    }
                }
                _ => {}
            }
            self.line += newlines;
        }
        Ok(None)
    }
}

fn bytecount(bytes: &[u8]) -> usize {
    bytes.iter().filter(|&&b| b == b'\n').count()
}

struct CsvColumns {
    time: usize,
    id: usize,
    x: usize,
    y: usize,
    angle: usize,
    speed: usize,
    vtype: Option<usize>,
}

struct CsvSource<R: BufRead> {
    records: csv::StringRecordsIntoIter<R>,
    cols: CsvColumns,
    pending: Option<Row>,
}

impl<R: BufRead> CsvSource<R> {
    fn new(reader: R) -> Result<Self, SimError> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(reader);
        let headers = rdr.headers().map_err(csv_error)?.clone();
        let find = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
        let need = |name: &str| {
            find(name).ok_or_else(|| SimError::Parse {
                line: 1,
                context: format!("missing column {name:?}"),
            })
        };
        let cols = CsvColumns {
            time: need("time")?,
            id: need("id")?,
            x: need("x")?,
            y: need("y")?,
            angle: need("angle")?,
            speed: need("speed")?,
            vtype: find("type"),
        };
        Ok(Self {
            records: rdr.into_records(),
            cols,
            pending: None,
        })
    }

    fn read_row(&mut self) -> Result<Option<Row>, SimError> {
        let Some(rec) = self.records.next() else {
            return Ok(None);
        };
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let c = &self.cols;
        Ok(Some(Row {
            time_ms: seconds_to_ms(field(c.time), line)?,
            id: field(c.id).to_owned(),
            x: number(field(c.x), "x", line)?,
            y: number(field(c.y), "y", line)?,
            angle: number(field(c.angle), "angle", line)?,
            speed: number(field(c.speed), "speed", line)?,
            vtype: c.vtype.map(|i| field(i).to_owned()),
            line,
        }))
    }

    fn next_group(&mut self) -> Result<Option<(u64, usize, Vec<Row>)>, SimError> {
        let first = match self.pending.take() {
            Some(r) => r,
            None => match self.read_row()? {
                Some(r) => r,
                None => return Ok(None),
            },
        };
        let (time_ms, line) = (first.time_ms, first.line);
        let mut rows = vec![first];
        while let Some(row) = self.read_row()? {
            if row.time_ms != time_ms {
                self.pending = Some(row);
                break;
            }
            rows.push(row);
        }
        Ok(Some((time_ms, line, rows)))
    }
}

fn csv_error(e: csv::Error) -> SimError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    SimError::Parse {
        line,
        context: e.to_string(),
    }
}

/// Writes a scenario back out as FCD. Numbers use the shortest exact
/// decimal form, so reading the file back reproduces every state.
pub fn write_fcd<W: Write>(s: &Scenario, format: FcdFormat, mut w: W) -> Result<(), SimError> {
    let seconds = |ms: u64| format!("{}.{:03}", ms / 1000, ms % 1000);
    match format {
        FcdFormat::Xml => {
            writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
            writeln!(w, "<fcd-export>")?;
            for tick in &s.ticks {
                writeln!(w, r#"    <timestep time="{}">"#, seconds(tick.time_ms))?;
                for v in &tick.states {
                    writeln!(
                        w,
                        r#"        <vehicle id="{}" x="{}" y="{}" angle="{}" type="passenger" speed="{}"/>"#,
                        escape(s.identity(v).key.as_str()),
                        v.x_m,
                        v.y_m,
                        v.heading_deg,
                        v.speed_mps
                    )?;
                }
                writeln!(w, "    </timestep>")?;
            }
            writeln!(w, "</fcd-export>")?;
        }
        FcdFormat::Csv => {
            let mut out = csv::Writer::from_writer(w);
            let csv_err = |e: csv::Error| SimError::Internal(e.to_string());
            out.write_record(["time", "id", "x", "y", "angle", "speed", "type"])
                .map_err(csv_err)?;
            for tick in &s.ticks {
                let t = seconds(tick.time_ms);
                for v in &tick.states {
                    out.write_record([
                        t.as_str(),
                        s.identity(v).key.as_str(),
                        &v.x_m.to_string(),
                        &v.y_m.to_string(),
                        &v.heading_deg.to_string(),
                        &v.speed_mps.to_string(),
                        "passenger",
                    ])
                    .map_err(csv_err)?;
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}
