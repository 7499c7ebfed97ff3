//! On-disk formats: code images, data images, traces and sample scripts.
//!
//! * `.bin`: the code image, one little-endian `u16` per instruction.
//! * `.dat`: `u32` word count, `u32` base address, then the words, all
//!   little-endian.
//! * trace CSV: `cycle,event,partition,addr,value`, empty fields for absent
//!   values, addresses in hex.
//! * sample CSV: `cycle,port,value`.

use std::io::{Read, Write};

use aero_core::cpu::Sample;
use aero_core::{DataImage, Event, EventKind, PartitionId, Trace, TraceLevel};
use anyhow::{bail, Context, Result};
use serde::Deserialize;

pub fn write_bin(code: &[u16], out: &mut impl Write) -> std::io::Result<()> {
    let bytes: Vec<u8> = code.iter().flat_map(|w| w.to_le_bytes()).collect();
    out.write_all(&bytes)
}

pub fn read_bin(input: &mut impl Read) -> Result<Vec<u16>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() % 2 != 0 {
        bail!("code image has an odd number of bytes ({})", bytes.len());
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect())
}

pub fn write_dat(data: &DataImage, out: &mut impl Write) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(8 + 4 * data.words.len());
    bytes.extend((data.words.len() as u32).to_le_bytes());
    bytes.extend((data.base as u32).to_le_bytes());
    for w in &data.words {
        bytes.extend(w.to_le_bytes());
    }
    out.write_all(&bytes)
}

pub fn read_dat(input: &mut impl Read) -> Result<DataImage> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let word = |i: usize| -> Option<u32> {
        let b = bytes.get(4 * i..4 * i + 4)?;
        Some(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    let (Some(count), Some(base)) = (word(0), word(1)) else {
        bail!("data image is shorter than its 8-byte header");
    };
    if bytes.len() != 8 + 4 * count as usize {
        bail!(
            "data image header announces {count} words but the file holds {} bytes",
            bytes.len()
        );
    }
    let base = u16::try_from(base).context("data image base address out of range")?;
    let words = (0..count as usize).map(|i| word(2 + i).unwrap()).collect();
    Ok(DataImage { base, words })
}

pub const TRACE_HEADER: &str = "cycle,event,partition,addr,value";

pub fn write_trace(trace: &Trace, out: &mut impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER.split(','))?;
    for e in &trace.events {
        w.write_record([
            e.cycle.to_string(),
            e.kind.name().to_string(),
            e.partition.map(|p| p.to_string()).unwrap_or_default(),
            e.addr.map(|a| format!("{a:#05x}")).unwrap_or_default(),
            e.value.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct TraceRow {
    cycle: u64,
    event: String,
    partition: Option<u8>,
    addr: Option<String>,
    value: Option<u32>,
}

pub fn read_trace(input: impl Read) -> Result<Trace> {
    let mut trace = Trace::new(TraceLevel::Pipeline);
    for (i, row) in csv::Reader::from_reader(input).deserialize().enumerate() {
        let line = i + 2;
        let row: TraceRow = row.with_context(|| format!("trace line {line}"))?;
        let kind = EventKind::from_name(&row.event)
            .with_context(|| format!("trace line {line}: unknown event `{}`", row.event))?;
        let partition = match row.partition {
            Some(p) => Some(
                PartitionId::new(p).with_context(|| format!("trace line {line}: partition {p}"))?,
            ),
            None => None,
        };
        let addr = match row.addr.as_deref() {
            None | Some("") => None,
            Some(a) => {
                Some(parse_u16(a).with_context(|| format!("trace line {line}: address `{a}`"))?)
            }
        };
        trace.events.push(Event {
            cycle: row.cycle,
            kind,
            partition,
            addr,
            value: row.value,
        });
    }
    Ok(trace)
}

fn parse_u16(text: &str) -> Result<u16> {
    Ok(match text.strip_prefix("0x") {
        Some(hex) => u16::from_str_radix(hex, 16)?,
        None => text.parse()?,
    })
}

#[derive(Deserialize)]
struct SampleRow {
    cycle: u64,
    port: usize,
    value: u32,
}

pub fn read_samples(input: impl Read) -> Result<Vec<Sample>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input)
        .deserialize()
        .enumerate()
        .map(|(i, row)| {
            let row: SampleRow = row.with_context(|| format!("sample line {}", i + 2))?;
            Ok(Sample {
                cycle: row.cycle,
                port: row.port,
                value: row.value,
            })
        })
        .collect()
}
