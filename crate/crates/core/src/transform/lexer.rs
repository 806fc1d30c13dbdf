//! A tokenizer for JavaScript/TypeScript test sources.
//!
//! It knows enough of the lexical grammar to find statement boundaries and
//! call chains: strings, template literals (with nested `${}`), comments,
//! regex literals, numbers, identifiers and punctuation. It does not build
//! a syntax tree.

use super::TransformError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokKind {
    Ident,
    Punct,
    Str,
    Template,
    Regex,
    Num,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub kind: TokKind,
    pub start: usize,
    pub end: usize,
    /// A line break (possibly inside a comment) separates this token from
    /// the previous one.
    pub nl_before: bool,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.start..self.end]
    }

    pub fn is_punct(&self, src: &str, p: &str) -> bool {
        self.kind == TokKind::Punct && self.text(src) == p
    }
}

/// Byte offsets of line starts, for offset → line lookups.
#[derive(Debug, Clone)]
pub struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    pub fn new(src: &str) -> Self {
        let mut starts = vec![0];
        starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line of a byte offset.
    pub fn line_of(&self, offset: usize) -> u32 {
        match self.starts.binary_search(&offset) {
            Ok(i) => i as u32 + 1,
            Err(i) => i as u32,
        }
    }
}

const KEYWORDS_BEFORE_EXPR: &[&str] = &[
    "return",
    "typeof",
    "case",
    "do",
    "else",
    "in",
    "of",
    "new",
    "delete",
    "void",
    "throw",
    "instanceof",
    "yield",
    "await",
];

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    lines: &'a LineIndex,
}

fn is_ident_start(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphabetic()
}

fn is_ident_continue(c: char) -> bool {
    c == '_' || c == '$' || c.is_alphanumeric() || c == '\u{200c}' || c == '\u{200d}'
}

impl<'a> Lexer<'a> {
    fn fail(&self, at: usize, what: &str) -> TransformError {
        TransformError::ParseFailure {
            file: String::new(),
            line: self.lines.line_of(at),
            reason: what.to_string(),
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    /// Skip whitespace and comments; report whether a line break was seen.
    fn skip_trivia(&mut self) -> Result<bool, TransformError> {
        let mut nl = false;
        loop {
            let Some(c) = self.peek_char() else { return Ok(nl) };
            if c == '\n' || c == '\u{2028}' || c == '\u{2029}' {
                nl = true;
                self.pos += c.len_utf8();
            } else if c.is_whitespace() || c == '\u{feff}' {
                self.pos += c.len_utf8();
            } else if self.src[self.pos..].starts_with("//") {
                match self.src[self.pos..].find('\n') {
                    Some(i) => self.pos += i,
                    None => self.pos = self.src.len(),
                }
            } else if self.src[self.pos..].starts_with("/*") {
                let start = self.pos;
                match self.src[self.pos + 2..].find("*/") {
                    Some(i) => {
                        let body = &self.src[self.pos..self.pos + 2 + i];
                        if body.contains('\n') {
                            nl = true;
                        }
                        self.pos += 2 + i + 2;
                    }
                    None => return Err(self.fail(start, "unterminated block comment")),
                }
            } else if self.pos == 0 && self.src.starts_with("#!") {
                match self.src.find('\n') {
                    Some(i) => self.pos = i,
                    None => self.pos = self.src.len(),
                }
            } else {
                return Ok(nl);
            }
        }
    }

    fn regex_allowed(&self, prev: Option<&Token>) -> bool {
        let Some(prev) = prev else { return true };
        match prev.kind {
            TokKind::Punct => !matches!(prev.text(self.src), ")" | "]" | "}"),
            TokKind::Ident => KEYWORDS_BEFORE_EXPR.contains(&prev.text(self.src)),
            _ => false,
        }
    }

    fn scan_string(&mut self, quote: u8) -> Result<(), TransformError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' => self.pos += 2,
                b'\n' => return Err(self.fail(start, "unterminated string literal")),
                b if b == quote => {
                    self.pos += 1;
                    return Ok(());
                }
                _ => self.pos += 1,
            }
        }
        Err(self.fail(start, "unterminated string literal"))
    }

    fn scan_template(&mut self) -> Result<(), TransformError> {
        let start = self.pos;
        self.pos += 1;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' => self.pos += 2,
                b'`' => {
                    self.pos += 1;
                    return Ok(());
                }
                b'$' if self.bytes.get(self.pos + 1) == Some(&b'{') => {
                    self.pos += 2;
                    self.skip_balanced_expr()?;
                }
                _ => self.pos += 1,
            }
        }
        Err(self.fail(start, "unterminated template literal"))
    }

    /// Lex (and discard) tokens up to and including the `}` closing a
    /// template substitution.
    fn skip_balanced_expr(&mut self) -> Result<(), TransformError> {
        let start = self.pos;
        let mut depth = 0usize;
        let mut prev: Option<Token> = None;
        loop {
            let nl = self.skip_trivia()?;
            let Some(tok) = self.next_token(prev.as_ref(), nl)? else {
                return Err(self.fail(start, "unterminated template substitution"));
            };
            if tok.kind == TokKind::Punct {
                match tok.text(self.src) {
                    "{" => depth += 1,
                    "}" if depth == 0 => return Ok(()),
                    "}" => depth -= 1,
                    _ => {}
                }
            }
            prev = Some(tok);
        }
    }

    fn scan_regex(&mut self) -> Result<(), TransformError> {
        let start = self.pos;
        self.pos += 1;
        let mut in_class = false;
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'\\' => self.pos += 2,
                b'\n' => return Err(self.fail(start, "unterminated regular expression")),
                b'[' => {
                    in_class = true;
                    self.pos += 1;
                }
                b']' => {
                    in_class = false;
                    self.pos += 1;
                }
                b'/' if !in_class => {
                    self.pos += 1;
                    while let Some(c) = self.peek_char() {
                        if is_ident_continue(c) {
                            self.pos += c.len_utf8();
                        } else {
                            break;
                        }
                    }
                    return Ok(());
                }
                _ => self.pos += 1,
            }
        }
        Err(self.fail(start, "unterminated regular expression"))
    }

    fn scan_number(&mut self) {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            let exp_sign = (c == '+' || c == '-')
                && self.pos > start
                && matches!(self.bytes[self.pos - 1], b'e' | b'E')
                && !self.src[start..].starts_with("0x")
                && !self.src[start..].starts_with("0X");
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' || exp_sign {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn next_token(&mut self, prev: Option<&Token>, nl_before: bool) -> Result<Option<Token>, TransformError> {
        let start = self.pos;
        let Some(c) = self.peek_char() else { return Ok(None) };
        let kind = if c == '"' || c == '\'' {
            self.scan_string(c as u8)?;
            TokKind::Str
        } else if c == '`' {
            self.scan_template()?;
            TokKind::Template
        } else if c.is_ascii_digit() || (c == '.' && self.bytes.get(self.pos + 1).is_some_and(|b| b.is_ascii_digit())) {
            self.scan_number();
            TokKind::Num
        } else if is_ident_start(c) || (c == '#' && self.src[self.pos + 1..].chars().next().is_some_and(is_ident_start))
        {
            self.pos += c.len_utf8();
            while let Some(c) = self.peek_char() {
                if is_ident_continue(c) {
                    self.pos += c.len_utf8();
                } else {
                    break;
                }
            }
            TokKind::Ident
        } else if c == '/' && self.regex_allowed(prev) {
            self.scan_regex()?;
            TokKind::Regex
        } else {
            let rest = &self.src[self.pos..];
            let len = if rest.starts_with("...") {
                3
            } else if rest.starts_with("=>")
                || (rest.starts_with("?.") && !rest[2..].starts_with(|c: char| c.is_ascii_digit()))
            {
                2
            } else {
                c.len_utf8()
            };
            self.pos += len;
            TokKind::Punct
        };
        Ok(Some(Token {
            kind,
            start,
            end: self.pos,
            nl_before,
        }))
    }
}

/// Tokenize a whole source file.
pub fn tokenize(src: &str, lines: &LineIndex) -> Result<Vec<Token>, TransformError> {
    let mut lx = Lexer {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        lines,
    };
    let mut toks: Vec<Token> = Vec::new();
    loop {
        let nl = lx.skip_trivia()?;
        match lx.next_token(toks.last(), nl)? {
            Some(t) => toks.push(t),
            None => return Ok(toks),
        }
    }
}

/// For each bracket token, the index of its partner.
pub fn match_brackets(src: &str, toks: &[Token], lines: &LineIndex) -> Result<Vec<Option<usize>>, TransformError> {
    let mut partner = vec![None; toks.len()];
    let mut stack: Vec<(usize, char)> = Vec::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokKind::Punct {
            continue;
        }
        let c = t.text(src);
        match c {
            "(" | "[" | "{" => stack.push((i, c.chars().next().unwrap())),
            ")" | "]" | "}" => {
                let want = match c {
                    ")" => '(',
                    "]" => '[',
                    _ => '{',
                };
                match stack.pop() {
                    Some((j, open)) if open == want => {
                        partner[i] = Some(j);
                        partner[j] = Some(i);
                    }
                    _ => {
                        return Err(TransformError::ParseFailure {
                            file: String::new(),
                            line: lines.line_of(t.start),
                            reason: format!("unbalanced {c:?}"),
                        })
                    }
                }
            }
            _ => {}
        }
    }
    if let Some((j, open)) = stack.pop() {
        return Err(TransformError::ParseFailure {
            file: String::new(),
            line: lines.line_of(toks[j].start),
            reason: format!("unclosed {open:?}"),
        });
    }
    Ok(partner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(src: &str) -> Vec<(TokKind, String)> {
        let li = LineIndex::new(src);
        tokenize(src, &li)
            .unwrap()
            .iter()
            .map(|t| (t.kind, t.text(src).to_string()))
            .collect()
    }

    #[test]
    fn strings_templates_and_comments() {
        let src = "a('x\\'y', `t ${ {b: `in ${c}`} } u`) // c\n/* d\n */ e";
        let k = kinds(src);
        assert_eq!(k[0], (TokKind::Ident, "a".into()));
        assert_eq!(k[2], (TokKind::Str, "'x\\'y'".into()));
        assert_eq!(k[4].0, TokKind::Template);
        assert_eq!(k.last().unwrap(), &(TokKind::Ident, "e".into()));
    }

    #[test]
    fn numbers() {
        let nums = |src: &str| -> Vec<String> {
            kinds(src)
                .into_iter()
                .filter(|(k, _)| *k == TokKind::Num)
                .map(|(_, t)| t)
                .collect()
        };
        assert_eq!(nums("a(1e-3, 2.5E+4, .5, 1_000)"), ["1e-3", "2.5E+4", ".5", "1_000"]);
        // hex digit e is not an exponent
        assert_eq!(nums("0x1e-1"), ["0x1e", "1"]);
        assert_eq!(nums("x = 0; y = 1e+2"), ["0", "1e+2"]);
    }

    #[test]
    fn regex_versus_division() {
        let k = kinds("x = a / b / c; y = /ab+c\\//gi.test(s)");
        assert!(k.iter().any(|(kind, t)| *kind == TokKind::Regex && t == "/ab+c\\//gi"));
        assert_eq!(k.iter().filter(|(kind, _)| *kind == TokKind::Regex).count(), 1);
    }

    #[test]
    fn newline_tracking() {
        let src = "a\n  .b() /* x\n */ c";
        let li = LineIndex::new(src);
        let toks = tokenize(src, &li).unwrap();
        assert!(toks[1].nl_before);
        assert!(!toks[2].nl_before);
        assert!(toks[5].nl_before);
        assert_eq!(li.line_of(toks[5].start), 3);
    }

    #[test]
    fn failures_carry_lines() {
        let src = "ok();\nbad('oops\n";
        let li = LineIndex::new(src);
        match tokenize(src, &li) {
            Err(TransformError::ParseFailure { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let src = "f(\n{ a: [1, 2) }";
        let li = LineIndex::new(src);
        let toks = tokenize(src, &li).unwrap();
        assert!(match_brackets(src, &toks, &li).is_err());
    }

    #[test]
    fn punctuation() {
        let k = kinds("f(...args) => a?.b ?? c?.5:1");
        let p: Vec<_> = k
            .iter()
            .filter(|(kd, _)| *kd == TokKind::Punct)
            .map(|(_, t)| t.as_str())
            .collect();
        assert_eq!(p, vec!["(", "...", ")", "=>", "?.", "?", "?", "?", ":"]);
    }
}
