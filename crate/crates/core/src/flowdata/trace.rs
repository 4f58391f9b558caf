use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use super::{csv_io, parse_err, Direction, FlowKey, FlowTrace, PacketRecord, TcpFlags};
use crate::Result;

pub const TRACE_HEADER: [&str; 11] = [
    "flow_id", "src", "dst", "sport", "dport", "proto", "ts_us", "size", "flags", "dir", "label",
];

/// Supported on-disk trace formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TraceFormat {
    /// One row per packet with header
    /// `flow_id,src,dst,sport,dport,proto,ts_us,size,flags,dir,label`.
    #[default]
    Csv,
}

pub fn ingest_trace_file(path: &Path, format: TraceFormat) -> Result<Vec<FlowTrace>> {
    match format {
        TraceFormat::Csv => read_trace(BufReader::new(File::open(path)?), path),
    }
}

/// Parses a packet CSV and groups rows into flows by `flow_id`.
///
/// Returned flows are ordered by id with packets sorted by timestamp (stable
/// for equal timestamps). An empty input yields no flows.
pub fn read_trace<R: Read>(reader: R, origin: &Path) -> Result<Vec<FlowTrace>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => return Ok(Vec::new()),
        Some(header) => {
            let header = header.map_err(|e| parse_err(origin, 1, e))?;
            if !header.iter().eq(TRACE_HEADER.iter().copied()) {
                return Err(parse_err(
                    origin,
                    1,
                    format!("expected header `{}`", TRACE_HEADER.join(",")),
                ));
            }
        }
    }

    let mut flows: BTreeMap<u64, FlowTrace> = BTreeMap::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(origin, line, e)
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |msg: String| parse_err(origin, line, msg);
        if rec.len() != TRACE_HEADER.len() {
            return Err(err(format!("expected {} fields, got {}", TRACE_HEADER.len(), rec.len())));
        }
        fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> std::result::Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            rec[i]
                .parse::<T>()
                .map_err(|e| format!("{}: {e} (`{}`)", TRACE_HEADER[i], &rec[i]))
        }

        let flow_id: u64 = field(&rec, 0).map_err(err)?;
        let key = FlowKey {
            src: field(&rec, 1).map_err(err)?,
            dst: field(&rec, 2).map_err(err)?,
            sport: field(&rec, 3).map_err(err)?,
            dport: field(&rec, 4).map_err(err)?,
            proto: field(&rec, 5).map_err(err)?,
        };
        let size: u32 = field(&rec, 7).map_err(err)?;
        if size == 0 {
            return Err(err("size must be positive".into()));
        }
        let flags = TcpFlags::parse(&rec[8]).ok_or_else(|| err(format!("bad flags `{}`", &rec[8])))?;
        let dir = match &rec[9] {
            "fwd" => Direction::Fwd,
            "bwd" => Direction::Bwd,
            other => return Err(err(format!("dir must be fwd or bwd, got `{other}`"))),
        };
        let packet = PacketRecord {
            ts_us: field(&rec, 6).map_err(err)?,
            size,
            flags,
            dir,
        };
        let label = field(&rec, 10).map_err(err)?;

        let flow = flows.entry(flow_id).or_insert_with(|| FlowTrace {
            flow_id,
            key,
            packets: Vec::new(),
            label,
        });
        if flow.key != key {
            return Err(err(format!("flow {flow_id}: 5-tuple differs from earlier rows")));
        }
        if flow.label != label {
            return Err(err(format!("flow {flow_id}: label differs from earlier rows")));
        }
        flow.packets.push(packet);
    }

    let mut out: Vec<FlowTrace> = flows.into_values().collect();
    for f in &mut out {
        f.packets.sort_by_key(|p| p.ts_us);
    }
    Ok(out)
}

/// Writes flows in the packet CSV format, flow by flow.
pub fn write_trace<W: Write>(flows: &[FlowTrace], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(TRACE_HEADER).map_err(csv_io)?;
    for f in flows {
        for p in &f.packets {
            wtr.write_record([
                f.flow_id.to_string(),
                f.key.src.to_string(),
                f.key.dst.to_string(),
                f.key.sport.to_string(),
                f.key.dport.to_string(),
                f.key.proto.to_string(),
                p.ts_us.to_string(),
                p.size.to_string(),
                p.flags.to_string(),
                p.dir.as_str().to_string(),
                f.label.to_string(),
            ])
            .map_err(csv_io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
