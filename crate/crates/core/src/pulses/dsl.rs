//! Line-oriented text form of a pulse sequence.
//!
//! ```text
//! car <θ> <φ>
//! bsb <X|Y> <θ> <φ> <ref_n>
//! comp <X|Y> <a> <b>
//! shaped <X|Y> <T> <A> <δ> <φ>
//! ```
//!
//! Angles accept `pi` literals: `pi`, `0.5pi`, `-pi`, `pi/2`, `3pi/4`.
//! `#` starts a comment.

use std::f64::consts::PI;
use std::fmt::Write as _;

use super::{PulseOp, PulseSequence};
use crate::error::{Error, Result};
use crate::hilbert::Mode;

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (col, (byte, ch)) in code.char_indices().enumerate() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some((byte, col)),
            (true, Some((b, c))) => {
                out.push(Token { text: &code[b..byte], column: c + 1 });
                start = None;
            }
            _ => {}
        }
    }
    if let Some((b, c)) = start {
        out.push(Token { text: &code[b..], column: c + 1 });
    }
    out
}

/// Parses a real number with an optional `pi` factor.
pub fn parse_angle(text: &str) -> Option<f64> {
    let s = text.trim().to_ascii_lowercase();
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), Some(d.parse::<f64>().ok().filter(|v| *v != 0.0)?)),
        None => (s.clone(), None),
    };
    let value = if let Some(coef) = num.strip_suffix("pi").or_else(|| num.strip_suffix('π')) {
        let c = match coef.trim_end_matches('*') {
            "" | "+" => 1.0,
            "-" => -1.0,
            c => c.parse::<f64>().ok()?,
        };
        c * PI
    } else {
        num.parse::<f64>().ok()?
    };
    let value = match den {
        Some(d) => value / d,
        None => value,
    };
    value.is_finite().then_some(value)
}

/// Six-significant-digit shortest decimal.
fn sig6(x: f64) -> String {
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    format!("{rounded}")
}

/// Canonical `pi`-literal for an angle.
pub fn format_angle(theta: f64) -> String {
    let c = sig6(theta / PI);
    match c.as_str() {
        "0" | "-0" => "0".to_string(),
        "1" => "pi".to_string(),
        "-1" => "-pi".to_string(),
        _ => format!("{c}pi"),
    }
}

pub(crate) fn print_sequence(seq: &PulseSequence) -> String {
    let mut out = String::new();
    match seq.target_n() {
        Some(n) => {
            let _ = writeln!(out, "# NOON sequence N = {n}, {} pulses", seq.primitive_count());
        }
        None => {
            let _ = writeln!(out, "# pulse sequence, {} pulses", seq.primitive_count());
        }
    }
    for op in seq.ops() {
        let _ = match *op {
            PulseOp::Carrier { theta, phase } => {
                writeln!(out, "car {} {}", format_angle(theta), format_angle(phase))
            }
            PulseOp::Sideband { mode, theta, phase, ref_n } => writeln!(
                out,
                "bsb {mode} {} {} {ref_n}",
                format_angle(theta),
                format_angle(phase)
            ),
            PulseOp::Composite { mode, a, b } => writeln!(out, "comp {mode} {a} {b}"),
            PulseOp::Shaped { mode, duration, amplitude, stark, phase } => writeln!(
                out,
                "shaped {mode} {duration:e} {amplitude:e} {stark:e} {}",
                format_angle(phase)
            ),
        };
    }
    out
}

struct LineParser<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
    end_column: usize,
}

impl<'a> LineParser<'a> {
    fn err(&self, column: usize, message: impl Into<String>) -> Error {
        Error::Parse { line: self.line, column, message: message.into() }
    }

    fn arity(&self, expected: usize) -> Result<()> {
        let got = self.tokens.len() - 1;
        if got != expected {
            let column = self.tokens.get(expected + 1).map_or(self.end_column, |t| t.column);
            return Err(self.err(
                column,
                format!("`{}` takes {expected} arguments, found {got}", self.tokens[0].text),
            ));
        }
        Ok(())
    }

    fn angle(&self, i: usize) -> Result<f64> {
        let t = &self.tokens[i];
        parse_angle(t.text).ok_or_else(|| self.err(t.column, format!("invalid angle `{}`", t.text)))
    }

    fn real(&self, i: usize) -> Result<f64> {
        let t = &self.tokens[i];
        t.text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.err(t.column, format!("invalid number `{}`", t.text)))
    }

    fn count(&self, i: usize) -> Result<usize> {
        let t = &self.tokens[i];
        t.text
            .parse::<usize>()
            .map_err(|_| self.err(t.column, format!("expected a non-negative integer, found `{}`", t.text)))
    }

    fn mode(&self, i: usize) -> Result<Mode> {
        let t = &self.tokens[i];
        match t.text {
            "X" | "x" => Ok(Mode::X),
            "Y" | "y" => Ok(Mode::Y),
            other => Err(self.err(t.column, format!("unknown mode `{other}` (expected X or Y)"))),
        }
    }

    fn parse(&self) -> Result<PulseOp> {
        let kw = &self.tokens[0];
        let op = match kw.text.to_ascii_lowercase().as_str() {
            "car" => {
                self.arity(2)?;
                PulseOp::Carrier { theta: self.angle(1)?, phase: self.angle(2)? }
            }
            "bsb" => {
                self.arity(4)?;
                PulseOp::Sideband {
                    mode: self.mode(1)?,
                    theta: self.angle(2)?,
                    phase: self.angle(3)?,
                    ref_n: self.count(4)?,
                }
            }
            "comp" => {
                self.arity(3)?;
                let op = PulseOp::Composite { mode: self.mode(1)?, a: self.count(2)?, b: self.count(3)? };
                if let PulseOp::Composite { a, b, .. } = op {
                    if a == b {
                        return Err(self.err(self.tokens[3].column, "a≠b required"));
                    }
                }
                op
            }
            "shaped" => {
                self.arity(5)?;
                PulseOp::Shaped {
                    mode: self.mode(1)?,
                    duration: self.real(2)?,
                    amplitude: self.real(3)?,
                    stark: self.real(4)?,
                    phase: self.angle(5)?,
                }
            }
            other => return Err(self.err(kw.column, format!("unknown instruction `{other}`"))),
        };
        op.validate().map_err(|e| {
            let message = match e {
                Error::InvalidArgument(m) => m,
                e => e.to_string(),
            };
            self.err(self.tokens[1].column, message)
        })?;
        Ok(op)
    }
}

/// Parses the DSL into a validated sequence.
pub fn parse_sequence(text: &str) -> Result<PulseSequence> {
    let mut ops = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let tokens = tokenize(raw);
        if tokens.is_empty() {
            continue;
        }
        let p = LineParser {
            line: i + 1,
            end_column: raw.split('#').next().unwrap_or("").chars().count() + 1,
            tokens,
        };
        ops.push(p.parse()?);
    }
    Ok(PulseSequence::new(ops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::noon_sequence;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn angle_literals() {
        assert_eq!(parse_angle("pi"), Some(PI));
        assert_eq!(parse_angle("0.5pi"), Some(FRAC_PI_2));
        assert_eq!(parse_angle("-pi"), Some(-PI));
        assert_eq!(parse_angle("pi/2"), Some(FRAC_PI_2));
        assert_eq!(parse_angle("3pi/4"), Some(3.0 * PI / 4.0));
        assert_eq!(parse_angle("1.25"), Some(1.25));
        assert_eq!(parse_angle("pi/0"), None);
        assert_eq!(parse_angle("p"), None);
        assert_eq!(format_angle(PI), "pi");
        assert_eq!(format_angle(FRAC_PI_2), "0.5pi");
        assert_eq!(format_angle(0.0), "0");
        assert_eq!(format_angle(1.0), "0.31831pi");
        assert_eq!(format_angle(3.52 * PI), "3.52pi");
    }

    #[test]
    fn carrier_line() {
        let seq = parse_sequence("car pi 0").unwrap();
        assert_eq!(seq.ops(), &[PulseOp::Carrier { theta: PI, phase: 0.0 }]);
    }

    #[test]
    fn comments_and_blank_lines() {
        let text = "# header\n\n  bsb Y 0.5pi pi/2 3  # trailing\n";
        let seq = parse_sequence(text).unwrap();
        assert_eq!(
            seq.ops(),
            &[PulseOp::Sideband { mode: Mode::Y, theta: FRAC_PI_2, phase: FRAC_PI_2, ref_n: 3 }]
        );
    }

    #[test]
    fn noon_round_trip() {
        let seq = noon_sequence(3).unwrap();
        let text = seq.to_text();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 9);
        let first = parse_sequence(&text).unwrap();
        assert_eq!(first.ops(), seq.ops());
        let second = parse_sequence(&first.to_text()).unwrap();
        assert_eq!(first, second);
        let expanded = seq.expanded();
        let again = parse_sequence(&expanded.to_text()).unwrap();
        assert_eq!(again.len(), 13);
        assert_eq!(again.ops(), expanded.ops());
    }

    #[test]
    fn shaped_round_trip() {
        let op = PulseOp::Shaped { mode: Mode::X, duration: 5e-5, amplitude: 62831.853071795864, stark: -3435.2, phase: 0.0 };
        let seq = PulseSequence::new(vec![op]);
        assert_eq!(parse_sequence(&seq.to_text()).unwrap().ops(), &[op]);
    }

    fn parse_err(text: &str) -> (usize, usize, String) {
        match parse_sequence(text) {
            Err(Error::Parse { line, column, message }) => (line, column, message),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_position() {
        let (line, col, msg) = parse_err("car pi 0\ncomp X 2 2");
        assert_eq!((line, col), (2, 10));
        assert!(msg.contains("a≠b required"));
        let (line, col, _) = parse_err("bsb Z pi 0 1");
        assert_eq!((line, col), (1, 5));
        let (_, col, msg) = parse_err("car pi");
        assert_eq!(col, 7);
        assert!(msg.contains("takes 2 arguments"));
        let (_, col, _) = parse_err("bsb X pi 0 -1");
        assert_eq!(col, 12);
        let (_, col, _) = parse_err("  frob 1");
        assert_eq!(col, 3);
        let (_, _, msg) = parse_err("car -pi 0");
        assert!(msg.contains("non-negative"));
        let (_, col, _) = parse_err("car pi 0 1");
        assert_eq!(col, 10);
    }
}
