//! Library resource specifications.
//!
//! ```text
//! resource BufferedWriter {
//!   must_call: [close];
//!   method BufferedWriter(owning) -> owning;
//!   method write(notowning) -> void;
//!   method close() -> void;
//! }
//! ```
//!
//! A method named after its class is a constructor; constructors may be
//! declared once per arity. `retaining` marks a parameter the library keeps a
//! reference to without taking ownership (collections, readers over a stream).

use std::collections::BTreeMap;

use super::ast::Pos;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamMode {
    Owning,
    NotOwning,
    Retaining,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReturnMode {
    Owning,
    NotOwning,
    Void,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LibMethod {
    pub params: Vec<ParamMode>,
    pub ret: ReturnMode,
}

impl LibMethod {
    /// Mode of argument `i`; positions past the declared arity are not owning.
    pub fn param(&self, i: usize) -> ParamMode {
        self.params.get(i).copied().unwrap_or(ParamMode::NotOwning)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LibClass {
    /// In declaration order.
    pub must_call: Vec<String>,
    pub methods: BTreeMap<String, LibMethod>,
    /// Keyed by arity.
    pub constructors: BTreeMap<usize, LibMethod>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LibrarySpec {
    pub entries: BTreeMap<String, LibClass>,
}

impl LibrarySpec {
    pub fn class(&self, name: &str) -> Option<&LibClass> {
        self.entries.get(name)
    }

    pub fn is_library_class(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Empty for classes absent from the spec.
    pub fn must_call(&self, name: &str) -> &[String] {
        self.entries.get(name).map(|c| c.must_call.as_slice()).unwrap_or(&[])
    }

    pub fn method(&self, class: &str, method: &str) -> Option<&LibMethod> {
        self.entries.get(class)?.methods.get(method)
    }

    pub fn constructor(&self, class: &str, arity: usize) -> Option<&LibMethod> {
        self.entries.get(class)?.constructors.get(&arity)
    }
}

/// The specification bundled with the tool.
pub const DEFAULT_LIBSPEC: &str = include_str!("default.libspec");

pub fn default_library_spec() -> LibrarySpec {
    load_library_spec(DEFAULT_LIBSPEC).expect("bundled library spec is well-formed")
}

pub fn load_library_spec(text: &str) -> Result<LibrarySpec, FrontendError> {
    let toks = tokenize(text).map_err(|e| match e {
        FrontendError::Syntax { line, col, message } => FrontendError::SpecFormat { line, col, message },
        other => other,
    })?;
    let mut p = SpecParser { toks, i: 0 };
    let mut spec = LibrarySpec::default();
    while p.peek() != &Tok::Eof {
        let (name, class, pos) = p.resource()?;
        if spec.entries.contains_key(&name) {
            return Err(p.err_at(pos, format!("duplicate resource `{name}`")));
        }
        for m in &class.must_call {
            if !class.methods.contains_key(m) {
                return Err(FrontendError::UnknownMethodInMustCall { class: name, method: m.clone() });
            }
        }
        spec.entries.insert(name, class);
    }
    Ok(spec)
}

struct SpecParser {
    toks: Vec<Token>,
    i: usize,
}

impl SpecParser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn err_at(&self, pos: Pos, message: String) -> FrontendError {
        FrontendError::SpecFormat { line: pos.line, col: pos.col, message }
    }

    fn err<T>(&self, what: &str) -> Result<T, FrontendError> {
        Err(self.err_at(self.pos(), format!("expected {what}, found {}", self.peek().describe())))
    }

    fn expect(&mut self, t: Tok) -> Result<(), FrontendError> {
        if *self.peek() == t {
            self.i += 1;
            Ok(())
        } else {
            self.err(&t.describe())
        }
    }

    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.i += 1;
                Ok(s)
            }
            _ => self.err("identifier"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), FrontendError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => {
                self.i += 1;
                Ok(())
            }
            _ => self.err(&format!("`{kw}`")),
        }
    }

    fn resource(&mut self) -> Result<(String, LibClass, Pos), FrontendError> {
        let pos = self.pos();
        self.keyword("resource")?;
        let name = self.ident()?;
        self.expect(Tok::LBrace)?;
        let mut class = LibClass::default();
        let mut saw_must_call = false;
        while *self.peek() != Tok::RBrace {
            let item_pos = self.pos();
            match self.ident()?.as_str() {
                "must_call" => {
                    if saw_must_call {
                        return Err(self.err_at(item_pos, "duplicate must_call".into()));
                    }
                    saw_must_call = true;
                    self.expect(Tok::Colon)?;
                    self.expect(Tok::LBracket)?;
                    if *self.peek() != Tok::RBracket {
                        loop {
                            let m = self.ident()?;
                            if !class.must_call.contains(&m) {
                                class.must_call.push(m);
                            }
                            if *self.peek() != Tok::Comma {
                                break;
                            }
                            self.i += 1;
                        }
                    }
                    self.expect(Tok::RBracket)?;
                    self.expect(Tok::Semi)?;
                }
                "method" => {
                    let mname = self.ident()?;
                    self.expect(Tok::LParen)?;
                    let mut params = Vec::new();
                    if *self.peek() != Tok::RParen {
                        loop {
                            let mode_pos = self.pos();
                            params.push(match self.ident()?.as_str() {
                                "owning" => ParamMode::Owning,
                                "notowning" => ParamMode::NotOwning,
                                "retaining" => ParamMode::Retaining,
                                other => return Err(self.err_at(mode_pos, format!("unknown parameter mode `{other}`"))),
                            });
                            if *self.peek() != Tok::Comma {
                                break;
                            }
                            self.i += 1;
                        }
                    }
                    self.expect(Tok::RParen)?;
                    self.expect(Tok::Arrow)?;
                    let ret_pos = self.pos();
                    let ret = match self.ident()?.as_str() {
                        "owning" => ReturnMode::Owning,
                        "notowning" => ReturnMode::NotOwning,
                        "void" => ReturnMode::Void,
                        other => return Err(self.err_at(ret_pos, format!("unknown return mode `{other}`"))),
                    };
                    self.expect(Tok::Semi)?;
                    let method = LibMethod { params, ret };
                    if mname == name {
                        let arity = method.params.len();
                        if class.constructors.insert(arity, method).is_some() {
                            return Err(self.err_at(item_pos, format!("duplicate constructor `{name}`/{arity}")));
                        }
                    } else if class.methods.insert(mname.clone(), method).is_some() {
                        return Err(self.err_at(item_pos, format!("duplicate method `{mname}`")));
                    }
                }
                other => return Err(self.err_at(item_pos, format!("unexpected `{other}`"))),
            }
        }
        self.expect(Tok::RBrace)?;
        Ok((name, class, pos))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn print_stream_entry() {
        let spec = load_library_spec(
            "resource PrintStream { must_call: [close]; method PrintStream(notowning) -> owning; \
             method println(notowning) -> void; method close() -> void; }",
        )
        .unwrap();
        assert_eq!(spec.must_call("PrintStream"), ["close"]);
        assert_eq!(spec.constructor("PrintStream", 1).unwrap().params, vec![ParamMode::NotOwning]);
    }

    #[test]
    fn empty_spec_has_no_obligations() {
        let spec = load_library_spec("").unwrap();
        assert!(spec.must_call("PrintStream").is_empty());
        assert!(spec.must_call("Anything").is_empty());
    }

    #[test]
    fn must_call_needs_declared_method() {
        let err = load_library_spec("resource S { must_call: [close]; }").unwrap_err();
        assert!(matches!(err, FrontendError::UnknownMethodInMustCall { .. }));
    }

    #[test]
    fn format_errors_carry_positions() {
        let err = load_library_spec("resource S {\n method m(sometimes) -> void; }").unwrap_err();
        assert!(matches!(err, FrontendError::SpecFormat { line: 2, .. }), "{err:?}");
        assert!(matches!(load_library_spec("resource S { must_call [x]; }"), Err(FrontendError::SpecFormat { .. })));
    }

    #[test]
    fn bundled_spec_loads() {
        let spec = default_library_spec();
        for name in ["PrintStream", "PrintWriter", "Socket", "ServerSocket", "FileInputStream", "BufferedWriter", "FileWriter"] {
            assert_eq!(spec.must_call(name), ["close"], "{name}");
        }
        assert!(spec.must_call("List").is_empty());
        assert_eq!(spec.method("List", "add").unwrap().param(0), ParamMode::Retaining);
        assert_eq!(spec.constructor("BufferedWriter", 1).unwrap().param(0), ParamMode::Owning);
    }
}
