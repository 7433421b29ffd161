//! CAN 2.0A base frames: CRC-15, bit stuffing, wire image and radiation schedule.
//!
//! Bits are `0` = dominant, `1` = recessive.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::campaign::{count_dominant_groups, MessageSpec};
use crate::error::{param, structural, Result};

pub const CRC15_POLY: u16 = 0x4599;
pub const MAX_ID: u16 = 0x7FF;
const STUFF_RUN: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanFrame {
    pub id: u16,
    pub dlc: u8,
    pub data: Vec<u8>,
    pub crc: u16,
}

impl CanFrame {
    pub fn new(id: u16, dlc: u8, data: Vec<u8>) -> Result<Self> {
        if id > MAX_ID {
            return Err(structural(format!(
                "identifier {id:#x} does not fit in 11 bits"
            )));
        }
        if dlc > 8 {
            return Err(structural(format!("dlc {dlc} exceeds 8")));
        }
        if data.len() != dlc as usize {
            return Err(structural(format!(
                "dlc {dlc} but {} data bytes",
                data.len()
            )));
        }
        let mut f = Self {
            id,
            dlc,
            data,
            crc: 0,
        };
        f.crc = crc15(&crc_input(&f));
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Field {
    Sof,
    Id,
    Rtr,
    Ide,
    R0,
    Dlc,
    Data,
    Crc,
    CrcDel,
    Ack,
    AckDel,
    Eof,
    Stuff,
}

/// Level of the ACK slot in the produced stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckSlot {
    /// Wire image of an acknowledged frame.
    #[default]
    Dominant,
    /// As driven by the transmitter alone.
    Recessive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitStream {
    pub bits: Vec<u8>,
    pub annotations: Vec<Field>,
}

impl BitStream {
    /// Stuffed region: SOF up to and including the last CRC bit or stuff bit.
    pub fn stuffed_region(&self) -> &[u8] {
        let end = self
            .annotations
            .iter()
            .position(|f| *f == Field::CrcDel)
            .unwrap_or(self.bits.len());
        &self.bits[..end]
    }
}

impl fmt::Display for BitStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.bits
            .iter()
            .try_for_each(|b| f.write_str(if *b == 0 { "0" } else { "1" }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSchedule {
    /// `[start, end)` in seconds.
    pub intervals: Vec<(f64, f64)>,
    pub bit_time: f64,
}

/// CAN CRC-15 with zero initial register.
pub fn crc15(bits: &[u8]) -> u16 {
    bits.iter().fold(0u16, |crc, &b| {
        let next = (b & 1) as u16 ^ ((crc >> 14) & 1);
        let crc = (crc << 1) & 0x7FFF;
        if next != 0 {
            crc ^ CRC15_POLY
        } else {
            crc
        }
    })
}

fn push_bits(out: &mut Vec<(u8, Field)>, value: u32, width: u32, field: Field) {
    for i in (0..width).rev() {
        out.push((((value >> i) & 1) as u8, field));
    }
}

fn header_and_data(f: &CanFrame) -> Vec<(u8, Field)> {
    let mut v = Vec::with_capacity(19 + 8 * f.data.len());
    v.push((0, Field::Sof));
    push_bits(&mut v, f.id as u32, 11, Field::Id);
    v.push((0, Field::Rtr));
    v.push((0, Field::Ide));
    v.push((0, Field::R0));
    push_bits(&mut v, f.dlc as u32, 4, Field::Dlc);
    for &byte in &f.data {
        push_bits(&mut v, byte as u32, 8, Field::Data);
    }
    v
}

fn crc_input(f: &CanFrame) -> Vec<u8> {
    header_and_data(f).into_iter().map(|(b, _)| b).collect()
}

/// Unstuffed bits from SOF through the end of the CRC field.
pub fn unstuffed_bits(f: &CanFrame) -> Vec<u8> {
    let mut v = crc_input(f);
    for i in (0..15).rev() {
        v.push(((f.crc >> i) & 1) as u8);
    }
    v
}

fn stuff(bits: &[(u8, Field)]) -> Vec<(u8, Field)> {
    let mut out = Vec::with_capacity(bits.len() + bits.len() / 4);
    let mut last = 2u8;
    let mut run = 0;
    for &(b, field) in bits {
        out.push((b, field));
        if b == last {
            run += 1;
        } else {
            last = b;
            run = 1;
        }
        if run == STUFF_RUN {
            last = 1 - b;
            run = 1;
            out.push((last, Field::Stuff));
        }
    }
    out
}

/// Remove stuff bits; fails if a stuff bit has the wrong polarity.
pub fn destuff(stuffed: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(stuffed.len());
    let mut last = 2u8;
    let mut run = 0;
    let mut expect_stuff = false;
    for (i, &b) in stuffed.iter().enumerate() {
        if expect_stuff {
            if b == last {
                return Err(structural(format!("stuff error at bit {i}")));
            }
            expect_stuff = false;
            last = b;
            run = 1;
            continue;
        }
        out.push(b);
        if b == last {
            run += 1;
        } else {
            last = b;
            run = 1;
        }
        expect_stuff = run == STUFF_RUN;
    }
    Ok(out)
}

/// Wire image with a dominant ACK slot.
pub fn encode_frame(f: &CanFrame) -> Result<BitStream> {
    encode_frame_with(f, AckSlot::Dominant)
}

pub fn encode_frame_with(f: &CanFrame, ack: AckSlot) -> Result<BitStream> {
    let checked = CanFrame::new(f.id, f.dlc, f.data.clone())?;
    if checked.crc != f.crc {
        return Err(structural(format!(
            "stored crc {:#06x} does not match computed {:#06x}",
            f.crc, checked.crc
        )));
    }
    let mut raw = header_and_data(f);
    push_bits(&mut raw, f.crc as u32, 15, Field::Crc);
    let mut out = stuff(&raw);
    out.push((1, Field::CrcDel));
    out.push((u8::from(ack == AckSlot::Recessive), Field::Ack));
    out.push((1, Field::AckDel));
    out.extend(std::iter::repeat_n((1, Field::Eof), 7));
    let (bits, annotations) = out.into_iter().unzip();
    Ok(BitStream { bits, annotations })
}

/// One radiation interval per maximal dominant run.
pub fn attack_schedule(bs: &BitStream, bit_time: f64) -> Result<AttackSchedule> {
    if !(bit_time.is_finite() && bit_time > 0.0) {
        return Err(param(format!("bit time must be > 0, got {bit_time}")));
    }
    let mut intervals = Vec::new();
    let mut start = None;
    for (i, &b) in bs.bits.iter().chain(std::iter::once(&1)).enumerate() {
        match (b, start) {
            (0, None) => start = Some(i),
            (1, Some(s)) => {
                intervals.push((s as f64 * bit_time, i as f64 * bit_time));
                start = None;
            }
            _ => {}
        }
    }
    Ok(AttackSchedule {
        intervals,
        bit_time,
    })
}

/// The attacker writes the stream onto an idle (recessive) bus.
pub fn frame_to_message_spec(bs: &BitStream) -> Result<MessageSpec> {
    MessageSpec::new(bs.bits.clone(), vec![1; bs.bits.len()])
}

/// `(dominant bits, dominant runs)` of the stream.
pub fn census(bs: &BitStream) -> (usize, usize) {
    count_dominant_groups(&bs.bits)
}

/// The identifier 0x001, zero-length frame used in the case study.
pub fn case_study_frame() -> CanFrame {
    CanFrame::new(0x001, 0, Vec::new()).expect("valid frame")
}
