//! Line-oriented scenario DSL.
//!
//! ```text
//! # comment
//! alloc buf 8 stack
//! poke buf 0 "abc\0"
//! call strlen buf
//! expect_return 3
//! expect_outcome COMPLETED_CLEAN on bounds,shadow *
//! ```
//!
//! Byte literals are double-quoted with the escapes `\n`, `\0`, `\xNN`, `\\`
//! and `\"`. Numbers are decimal. Buffer operands are `name` or `name+offset`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{BufRef, Command, Expected, Filter, Operand, Outcome, Scenario, Statement};
use crate::arena::Region;
use crate::libc::LibcFn;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (line {})", self.message, self.line)
    }
}

impl core::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Token {
    Word(String),
    Bytes(Vec<u8>),
}

fn tokenize(line: &str) -> Result<Vec<Token>, String> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
        } else if c == '#' {
            break;
        } else if c == '"' {
            chars.next();
            let mut bytes = Vec::new();
            loop {
                match chars.next() {
                    None => return Err("unterminated string literal".to_string()),
                    Some('"') => break,
                    Some('\\') => bytes.push(unescape(&mut chars)?),
                    Some(ch) => {
                        let mut buf = [0u8; 4];
                        bytes.extend_from_slice(ch.encode_utf8(&mut buf).as_bytes());
                    }
                }
            }
            out.push(Token::Bytes(bytes));
        } else {
            let mut word = String::new();
            while let Some(&ch) = chars.peek() {
                if ch.is_whitespace() || ch == '#' || ch == '"' {
                    break;
                }
                word.push(ch);
                chars.next();
            }
            out.push(Token::Word(word));
        }
    }
    Ok(out)
}

fn unescape(chars: &mut core::iter::Peekable<core::str::Chars<'_>>) -> Result<u8, String> {
    match chars.next() {
        Some('n') => Ok(b'\n'),
        Some('0') => Ok(0),
        Some('\\') => Ok(b'\\'),
        Some('"') => Ok(b'"'),
        Some('x') => {
            let hi = chars.next().and_then(|c| c.to_digit(16));
            let lo = chars.next().and_then(|c| c.to_digit(16));
            match (hi, lo) {
                (Some(hi), Some(lo)) => Ok((hi * 16 + lo) as u8),
                _ => Err("malformed escape: \\x needs two hex digits".to_string()),
            }
        }
        Some(c) => Err(format!("malformed escape '\\{c}'")),
        None => Err("malformed escape at end of line".to_string()),
    }
}

struct Parser {
    declared: BTreeSet<String>,
}

type Res<T> = Result<T, String>;

impl Parser {
    fn word<'a>(&self, t: Option<&'a Token>, what: &str) -> Res<&'a str> {
        match t {
            Some(Token::Word(w)) => Ok(w),
            Some(Token::Bytes(_)) => Err(format!("expected {what}, found string literal")),
            None => Err(format!("missing {what}")),
        }
    }

    fn bytes(&self, t: Option<&Token>) -> Res<Vec<u8>> {
        match t {
            Some(Token::Bytes(b)) => Ok(b.clone()),
            Some(Token::Word(w)) => Err(format!("expected quoted bytes, found '{w}'")),
            None => Err("missing byte literal".to_string()),
        }
    }

    fn number(&self, t: Option<&Token>, what: &str) -> Res<usize> {
        let w = self.word(t, what)?;
        parse_number(w).ok_or_else(|| format!("invalid {what} '{w}'"))
    }

    fn declared(&self, name: &str) -> Res<()> {
        if self.declared.contains(name) {
            Ok(())
        } else {
            Err(format!("undeclared buffer '{name}'"))
        }
    }

    /// `name` or `name+offset`
    fn buf_operand(&self, w: &str) -> Res<BufRef> {
        let (name, offset) = match w.split_once('+') {
            Some((n, o)) => (n, parse_number(o).ok_or_else(|| format!("invalid offset in '{w}'"))?),
            None => (w, 0),
        };
        self.declared(name)?;
        Ok(BufRef {
            name: name.to_string(),
            offset,
        })
    }

    /// `name offset`
    fn buf_at(&self, toks: &[Token]) -> Res<BufRef> {
        let name = self.word(toks.first(), "buffer name")?;
        self.declared(name)?;
        let offset = self.number(toks.get(1), "offset")?;
        Ok(BufRef {
            name: name.to_string(),
            offset,
        })
    }

    fn filter(&self, toks: &[Token]) -> Res<Filter> {
        match toks {
            [] => Ok(Filter::default()),
            [Token::Word(on), Token::Word(b), Token::Word(p)] if on == "on" => Ok(Filter {
                backends: parse_list(b, "backend")?,
                policies: parse_list(p, "policy")?,
            }),
            _ => Err("trailing arguments (expected 'on <backends> <policies>')".to_string()),
        }
    }

    fn arity(&self, toks: &[Token], n: usize, verb: &str) -> Res<()> {
        if toks.len() != n {
            return Err(format!(
                "'{verb}' takes {n} argument{}, got {}",
                if n == 1 { "" } else { "s" },
                toks.len()
            ));
        }
        Ok(())
    }

    fn command(&mut self, toks: &[Token]) -> Res<Command> {
        let verb = self.word(toks.first(), "command")?;
        let args = &toks[1..];
        Ok(match verb {
            "alloc" => {
                if !(2..=3).contains(&args.len()) {
                    return Err(format!("'alloc' takes 2 or 3 arguments, got {}", args.len()));
                }
                let name = self.word(args.first(), "buffer name")?;
                if name.contains('+') || name.is_empty() {
                    return Err(format!("invalid buffer name '{name}'"));
                }
                if !self.declared.insert(name.to_string()) {
                    return Err(format!("buffer '{name}' already declared"));
                }
                let size = self.number(args.get(1), "size")?;
                let region = match args.get(2) {
                    None => Region::Heap,
                    Some(t) => {
                        let w = self.word(Some(t), "region")?;
                        Region::parse(w).ok_or_else(|| format!("unknown region '{w}'"))?
                    }
                };
                Command::Alloc {
                    name: name.to_string(),
                    size,
                    region,
                }
            }
            "free" => {
                self.arity(args, 1, verb)?;
                Command::Free(self.buf_operand(self.word(args.first(), "buffer")?)?)
            }
            "poke" | "store" => {
                self.arity(args, 3, verb)?;
                let at = self.buf_at(args)?;
                let bytes = self.bytes(args.get(2))?;
                if verb == "poke" {
                    Command::Poke(at, bytes)
                } else {
                    Command::Store(at, bytes)
                }
            }
            "peek" | "load" => {
                self.arity(args, 3, verb)?;
                let at = self.buf_at(args)?;
                let len = self.number(args.get(2), "length")?;
                if verb == "peek" {
                    Command::Peek(at, len)
                } else {
                    Command::Load(at, len)
                }
            }
            "stdin" => {
                self.arity(args, 1, verb)?;
                Command::Stdin(self.bytes(args.first())?)
            }
            "call" => self.call(args)?,
            "expect_bytes" => {
                if args.len() < 3 {
                    return Err(format!("'expect_bytes' takes 3 arguments, got {}", args.len()));
                }
                let at = self.buf_at(args)?;
                let bytes = self.bytes(args.get(2))?;
                Command::ExpectBytes(at, bytes, self.filter(&args[3..])?)
            }
            "expect_return" => {
                let w = self.word(args.first(), "return value")?;
                let value = if w == "null" {
                    Expected::Null
                } else if let Some(n) = parse_number(w) {
                    Expected::Size(n)
                } else {
                    Expected::Ptr(self.buf_operand(w)?)
                };
                Command::ExpectReturn(value, self.filter(&args[1..])?)
            }
            "expect_outcome" => {
                let w = self.word(args.first(), "outcome")?;
                let outcome = Outcome::parse(w).ok_or_else(|| format!("unknown outcome '{w}'"))?;
                Command::ExpectOutcome(outcome, self.filter(&args[1..])?)
            }
            other => return Err(format!("unknown command '{other}'")),
        })
    }

    fn call(&self, args: &[Token]) -> Res<Command> {
        let name = self.word(args.first(), "function name")?;
        let func: LibcFn = name
            .parse()
            .map_err(|_| format!("unknown function '{name}'"))?;
        let mut ops = &args[1..];
        // gets/fgets may name their stream explicitly
        if matches!(func, LibcFn::Gets | LibcFn::Fgets)
            && matches!(ops.last(), Some(Token::Word(w)) if w == "stdin")
        {
            ops = &ops[..ops.len() - 1];
        }
        let sig = signature(func);
        if ops.len() != sig.len() {
            return Err(format!(
                "'{name}' takes {} argument{}, got {}",
                sig.len(),
                if sig.len() == 1 { "" } else { "s" },
                ops.len()
            ));
        }
        let operands = sig
            .iter()
            .zip(ops)
            .map(|(kind, tok)| {
                let w = self.word(Some(tok), "operand")?;
                match kind {
                    Slot::Ptr => self.buf_operand(w).map(Operand::Ptr),
                    Slot::Count => parse_number(w)
                        .map(Operand::Count)
                        .ok_or_else(|| format!("invalid count '{w}'")),
                    Slot::Byte => parse_number(w)
                        .and_then(|n| u8::try_from(n).ok())
                        .map(Operand::Byte)
                        .ok_or_else(|| format!("invalid byte '{w}'")),
                }
            })
            .collect::<Res<Vec<_>>>()?;
        Ok(Command::Call(func, operands))
    }
}

#[derive(Clone, Copy)]
pub(crate) enum Slot {
    Ptr,
    Count,
    Byte,
}

pub(crate) fn signature(f: LibcFn) -> &'static [Slot] {
    use Slot::*;
    match f {
        LibcFn::Strlen | LibcFn::Gets => &[Ptr],
        LibcFn::Strnlen | LibcFn::Fgets => &[Ptr, Count],
        LibcFn::Strcpy | LibcFn::Strcat => &[Ptr, Ptr],
        LibcFn::Strncpy | LibcFn::Memcpy => &[Ptr, Ptr, Count],
        LibcFn::Memset => &[Ptr, Byte, Count],
    }
}

fn parse_number(w: &str) -> Option<usize> {
    if w.is_empty() || !w.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    w.parse().ok()
}

fn parse_list<T: core::str::FromStr>(w: &str, what: &str) -> Res<Option<Vec<T>>> {
    if w == "*" {
        return Ok(None);
    }
    w.split(',')
        .map(|item| item.parse().map_err(|_| format!("unknown {what} '{item}'")))
        .collect::<Res<Vec<T>>>()
        .map(Some)
}

/// Parses a scenario. Errors name the first offending line.
pub fn parse(name: &str, text: &str) -> Result<Scenario, ParseError> {
    let mut parser = Parser {
        declared: BTreeSet::new(),
    };
    let mut statements = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message| ParseError {
            line: line_no,
            message,
        };
        let toks = tokenize(line).map_err(err)?;
        if toks.is_empty() {
            continue;
        }
        let command = parser.command(&toks).map_err(err)?;
        statements.push(Statement {
            line: line_no,
            command,
        });
    }
    Ok(Scenario {
        name: name.to_string(),
        statements,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Backend;
    use crate::policy::Policy;

    #[test]
    fn four_commands() {
        let s = parse("t", "alloc b 8\npoke b 0 \"abc\\0\"\ncall strlen b\nexpect_return 3").unwrap();
        assert_eq!(s.statements.len(), 4);
        assert_eq!(
            s.statements[1].command,
            Command::Poke(BufRef { name: "b".into(), offset: 0 }, b"abc\0".to_vec())
        );
        assert_eq!(s.statements[3].command, Command::ExpectReturn(Expected::Size(3), Filter::default()));
    }

    #[test]
    fn undeclared_buffer() {
        let e = parse("t", "call strlen nosuch").unwrap_err();
        assert_eq!(e.to_string(), "undeclared buffer 'nosuch' (line 1)");
    }

    #[test]
    fn malformed_escape() {
        let e = parse("t", "alloc b 4\npoke b 0 \"\\xZZ\"").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("malformed escape"), "{e}");
        assert!(parse("t", "alloc b 4\npoke b 0 \"\\q\"").is_err());
    }

    #[test]
    fn escapes_and_comments() {
        let s = parse("t", "alloc b 4 # trailing\n  # whole line\nstdin \"a\\n\\x41\\\\\\\"#\"").unwrap();
        assert_eq!(s.statements[1].command, Command::Stdin(b"a\nA\\\"#".to_vec()));
    }

    #[test]
    fn unknown_verb_and_arity() {
        assert!(parse("t", "frobnicate x").unwrap_err().message.contains("unknown command"));
        let e = parse("t", "alloc b 4\ncall memcpy b b").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(e.message.contains("takes 3"), "{e}");
        assert!(parse("t", "alloc b 4\nalloc b 4").is_err());
        assert!(parse("t", "alloc b 4 attic").is_err());
    }

    #[test]
    fn call_operands() {
        let s = parse("t", "alloc h 16\ncall memset h+4 0 18446744073709551615\ncall fgets h 8 stdin").unwrap();
        assert_eq!(
            s.statements[1].command,
            Command::Call(
                LibcFn::Memset,
                alloc::vec![
                    Operand::Ptr(BufRef { name: "h".into(), offset: 4 }),
                    Operand::Byte(0),
                    Operand::Count(usize::MAX),
                ]
            )
        );
        assert!(matches!(&s.statements[2].command, Command::Call(LibcFn::Fgets, ops) if ops.len() == 2));
        assert!(parse("t", "alloc h 16\ncall memset h 256 1").is_err());
    }

    #[test]
    fn filters() {
        let s = parse(
            "t",
            "alloc b 4\nexpect_outcome ABORTED_DETECTED on bounds,shadow abort\nexpect_bytes b 0 \"\" on * context+fo",
        )
        .unwrap();
        let Command::ExpectOutcome(o, f) = &s.statements[1].command else { panic!() };
        assert_eq!(*o, Outcome::AbortedDetected);
        assert!(f.matches(Backend::ShadowRedzone, Policy::Abort));
        assert!(!f.matches(Backend::Null, Policy::Abort));
        let Command::ExpectBytes(_, _, f) = &s.statements[2].command else { panic!() };
        assert!(f.matches(Backend::Null, Policy::ContextFallback));
        assert!(!f.matches(Backend::Null, Policy::ContextAware));
        assert!(parse("t", "expect_outcome CLEAN").is_err());
        assert!(parse("t", "expect_outcome COMPLETED_CLEAN on mpx *").is_err());
    }
}
