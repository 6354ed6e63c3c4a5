//! Gateway wire protocol.
//!
//! Each frame is a big-endian `u16` body length followed by the body:
//!
//! ```text
//! sample  (0x01): mote u16 | greenhouse u16 | moisture u16 (hundredths of a percent) | sampled_at u64 (ms)
//! command (0x02): target u16 | action u8 (0 close, 1 open) | origin u8 (0 auto, 1 manual) | issued_at u64 (ms)
//! ```

use crate::domain::{ActuatorId, CommandOrigin, GreenhouseId, MoistureSample, MoteId, SimTime, ValveAction, ValveCommand};

pub const SAMPLE_TYPE: u8 = 0x01;
pub const COMMAND_TYPE: u8 = 0x02;
const SAMPLE_BODY: usize = 15;
const COMMAND_BODY: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Frame {
    Sample(MoistureSample),
    Command(ValveCommand),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("frame type {kind:#04x} expects a {expected}-byte body, got {got}")]
    BadLength { kind: u8, expected: usize, got: usize },
    #[error("invalid field value: {0}")]
    BadField(&'static str),
}

pub fn encode(frame: &Frame) -> Vec<u8> {
    let mut body = Vec::with_capacity(SAMPLE_BODY);
    match frame {
        Frame::Sample(s) => {
            body.push(SAMPLE_TYPE);
            body.extend_from_slice(&s.mote.0.to_be_bytes());
            body.extend_from_slice(&s.greenhouse.0.to_be_bytes());
            let centi = (s.moisture.clamp(0.0, 100.0) * 100.0).round() as u16;
            body.extend_from_slice(&centi.to_be_bytes());
            body.extend_from_slice(&s.sampled_at.as_millis().to_be_bytes());
        }
        Frame::Command(c) => {
            body.push(COMMAND_TYPE);
            body.extend_from_slice(&c.target.0.to_be_bytes());
            body.push(match c.action {
                ValveAction::Close => 0,
                ValveAction::Open => 1,
            });
            body.push(match c.origin {
                CommandOrigin::AutoController => 0,
                CommandOrigin::ManualOperator => 1,
            });
            body.extend_from_slice(&c.issued_at.as_millis().to_be_bytes());
        }
    }
    let mut out = Vec::with_capacity(body.len() + 2);
    out.extend_from_slice(&(body.len() as u16).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes one frame from the front of `buf`. Returns `Ok(None)` when more
/// bytes are needed, otherwise the frame and the number of bytes consumed.
pub fn decode(buf: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
    let Some(len) = buf.get(..2).map(|b| u16::from_be_bytes([b[0], b[1]]) as usize) else {
        return Ok(None);
    };
    let Some(body) = buf.get(2..2 + len) else {
        return Ok(None);
    };
    let Some((&kind, rest)) = body.split_first() else {
        return Err(FrameError::BadLength {
            kind: 0,
            expected: 1,
            got: 0,
        });
    };
    let expect = |expected: usize| {
        if len == expected {
            Ok(())
        } else {
            Err(FrameError::BadLength { kind, expected, got: len })
        }
    };
    let u16_at = |i: usize| u16::from_be_bytes([rest[i], rest[i + 1]]);
    let u64_at = |i: usize| u64::from_be_bytes(rest[i..i + 8].try_into().expect("8 bytes"));
    let frame = match kind {
        SAMPLE_TYPE => {
            expect(SAMPLE_BODY)?;
            let centi = u16_at(4);
            if centi > 10_000 {
                return Err(FrameError::BadField("moisture above 100%"));
            }
            Frame::Sample(MoistureSample {
                mote: MoteId(u16_at(0)),
                greenhouse: GreenhouseId(u16_at(2)),
                moisture: f64::from(centi) / 100.0,
                sampled_at: SimTime::from_millis(u64_at(6)),
            })
        }
        COMMAND_TYPE => {
            expect(COMMAND_BODY)?;
            let action = match rest[2] {
                0 => ValveAction::Close,
                1 => ValveAction::Open,
                _ => return Err(FrameError::BadField("valve action")),
            };
            let origin = match rest[3] {
                0 => CommandOrigin::AutoController,
                1 => CommandOrigin::ManualOperator,
                _ => return Err(FrameError::BadField("command origin")),
            };
            Frame::Command(ValveCommand {
                target: ActuatorId(u16_at(0)),
                action,
                origin,
                issued_at: SimTime::from_millis(u64_at(4)),
            })
        }
        other => return Err(FrameError::UnknownType(other)),
    };
    Ok(Some((frame, 2 + len)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sample_layout() {
        let bytes = encode(&Frame::Sample(MoistureSample {
            mote: MoteId(3),
            greenhouse: GreenhouseId(2),
            moisture: 52.37,
            sampled_at: SimTime::from_millis(60_250),
        }));
        assert_eq!(
            bytes,
            vec![0, 15, 0x01, 0, 3, 0, 2, 0x14, 0x75, 0, 0, 0, 0, 0, 0, 0xEB, 0x5A]
        );
    }

    #[test]
    fn partial_and_malformed_input() {
        let full = encode(&Frame::Command(ValveCommand {
            target: ActuatorId(2),
            action: ValveAction::Open,
            issued_at: SimTime::from_secs(1),
            origin: CommandOrigin::ManualOperator,
        }));
        for cut in 0..full.len() {
            assert_eq!(decode(&full[..cut]), Ok(None));
        }
        assert_eq!(decode(&[0, 1, 0x7f]), Err(FrameError::UnknownType(0x7f)));
        assert!(matches!(decode(&[0, 2, 0x01, 0]), Err(FrameError::BadLength { .. })));
        let mut bad_action = full.clone();
        bad_action[5] = 9;
        assert_eq!(decode(&bad_action), Err(FrameError::BadField("valve action")));
    }

    proptest! {
        #[test]
        fn frames_round_trip(mote in any::<u16>(), gh in any::<u16>(), centi in 0u16..=10_000, ms in any::<u64>(),
                             open in any::<bool>(), manual in any::<bool>()) {
            let sample = Frame::Sample(MoistureSample {
                mote: MoteId(mote),
                greenhouse: GreenhouseId(gh),
                moisture: f64::from(centi) / 100.0,
                sampled_at: SimTime::from_millis(ms),
            });
            let cmd = Frame::Command(ValveCommand {
                target: ActuatorId(mote),
                action: if open { ValveAction::Open } else { ValveAction::Close },
                issued_at: SimTime::from_millis(ms),
                origin: if manual { CommandOrigin::ManualOperator } else { CommandOrigin::AutoController },
            });
            let mut stream = encode(&sample);
            stream.extend(encode(&cmd));
            let (a, used) = decode(&stream).unwrap().unwrap();
            let (b, used2) = decode(&stream[used..]).unwrap().unwrap();
            prop_assert_eq!(a, sample);
            prop_assert_eq!(b, cmd);
            prop_assert_eq!(used + used2, stream.len());
        }
    }
}
