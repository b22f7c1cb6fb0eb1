//! Symbolic message terms.
//!
//! Cryptography is symbolic: an encryption is a constructor applied to a key
//! owner and a body, and can only be opened by a deduction that holds the
//! dual secret key. Facts render to (and parse from) a compact textual
//! grammar used in traces, reports and on the command line.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::AlgebraError;

/// An interned-by-value identifier (agent, candidate, nonce, serial or key owner).
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(Arc<str>);

impl Name {
    pub fn new(s: &str) -> Self {
        Name(Arc::from(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Name {
    fn from(s: &str) -> Self {
        Name::new(s)
    }
}

/// A ground symbolic term.
///
/// Composite constructors keep their sub-terms behind `Arc` so that facts
/// are cheap to clone into events and process arguments. Use the checked
/// constructors (`Fact::enc`, `Fact::ballot`, ...) to build composites; they
/// enforce the bounded nesting discipline.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Fact {
    Agent(Name),
    Candidate(Name),
    Nonce(Name),
    Serial(Name),
    /// Public key, identified by its owner (`W`, `T`, `EA`, `PS`, `PC`, `BM`).
    PubKey(Name),
    SecKey(Name),
    /// Bare integer, the payload of an index box.
    Int(u32),
    /// Marking-box index; `Index(0)` is an unmarked ballot.
    Index(u32),
    /// A candidate ordering.
    List(Arc<[Name]>),
    /// Asymmetric encryption under the public key of `key`.
    Enc { key: Name, body: Arc<Fact> },
    SymEnc { key: Arc<Fact>, body: Arc<Fact> },
    /// Signature by the secret key of `key` over a nonce or a serial.
    Sign { key: Name, body: Arc<Fact> },
    /// Signature over a (serial, nonce) pair.
    SignPair { key: Name, serial: Name, nonce: Name },
    Ballot { list: Arc<Fact>, signed: Arc<Fact>, index: Arc<Fact> },
    Rhs { signed: Arc<Fact>, index: Arc<Fact> },
    /// Signed right-hand side handed to the voter.
    Receipt { key: Name, rhs: Arc<Fact> },
    Vote { index: Arc<Fact>, enc: Arc<Fact> },
    DigBallot { signed: Arc<Fact>, enc: Arc<Fact> },
    Raw { serial: Arc<Fact>, enc: Arc<Fact> },
    /// The single opaque value every unreadable encryption masks to.
    Ciphertext,
    ResultCount { candidate: Name, count: u32 },
}

impl Fact {
    pub fn agent(s: &str) -> Fact {
        Fact::Agent(Name::new(s))
    }

    pub fn nonce(s: &str) -> Fact {
        Fact::Nonce(Name::new(s))
    }

    pub fn serial(s: &str) -> Fact {
        Fact::Serial(Name::new(s))
    }

    pub fn pk(owner: &str) -> Fact {
        Fact::PubKey(Name::new(owner))
    }

    pub fn sk(owner: &str) -> Fact {
        Fact::SecKey(Name::new(owner))
    }

    pub fn list<I, S>(names: I) -> Fact
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Fact::List(names.into_iter().map(|n| Name::new(n.as_ref())).collect())
    }

    pub fn enc(key: &Name, body: Fact) -> Result<Fact, AlgebraError> {
        if body.contains_encryption() || body == Fact::Ciphertext {
            return Err(AlgebraError::Nesting(format!("enc(pk{key},{body})")));
        }
        Ok(Fact::Enc {
            key: key.clone(),
            body: Arc::new(body),
        })
    }

    pub fn sym_enc(key: Fact, body: Fact) -> Result<Fact, AlgebraError> {
        if body.contains_encryption() || key.contains_encryption() {
            return Err(AlgebraError::Nesting(format!("senc({key},{body})")));
        }
        Ok(Fact::SymEnc {
            key: Arc::new(key),
            body: Arc::new(body),
        })
    }

    pub fn sign(key: &Name, body: Fact) -> Result<Fact, AlgebraError> {
        match body {
            Fact::Nonce(_) | Fact::Serial(_) => Ok(Fact::Sign {
                key: key.clone(),
                body: Arc::new(body),
            }),
            other => Err(AlgebraError::Shape(format!(
                "sign(sk{key},{other}) must sign a nonce or a serial"
            ))),
        }
    }

    pub fn sign_pair(key: &Name, serial: &Name, nonce: &Name) -> Fact {
        Fact::SignPair {
            key: key.clone(),
            serial: serial.clone(),
            nonce: nonce.clone(),
        }
    }

    pub fn ballot(list: Fact, signed: Fact, index: Fact) -> Result<Fact, AlgebraError> {
        if !matches!(list, Fact::List(_)) || !signed.is_signed_serial() || !matches!(index, Fact::Index(_)) {
            return Err(AlgebraError::Shape(format!("ballot({list},{signed},{index})")));
        }
        Ok(Fact::Ballot {
            list: Arc::new(list),
            signed: Arc::new(signed),
            index: Arc::new(index),
        })
    }

    pub fn rhs(signed: Fact, index: Fact) -> Result<Fact, AlgebraError> {
        if !signed.is_signed_serial() || !matches!(index, Fact::Index(_)) {
            return Err(AlgebraError::Shape(format!("rhs({signed},{index})")));
        }
        Ok(Fact::Rhs {
            signed: Arc::new(signed),
            index: Arc::new(index),
        })
    }

    pub fn receipt(key: &Name, rhs: Fact) -> Result<Fact, AlgebraError> {
        if !matches!(rhs, Fact::Rhs { .. }) {
            return Err(AlgebraError::Shape(format!("receipt(sk{key},{rhs})")));
        }
        Ok(Fact::Receipt {
            key: key.clone(),
            rhs: Arc::new(rhs),
        })
    }

    pub fn vote(index: Fact, enc: Fact) -> Result<Fact, AlgebraError> {
        if !matches!(index, Fact::Index(_)) || !enc.is_sealed_list() {
            return Err(AlgebraError::Shape(format!("vote({index},{enc})")));
        }
        Ok(Fact::Vote {
            index: Arc::new(index),
            enc: Arc::new(enc),
        })
    }

    pub fn dig_ballot(signed: Fact, enc: Fact) -> Result<Fact, AlgebraError> {
        if !signed.is_signed_serial() || !enc.is_sealed_list() {
            return Err(AlgebraError::Shape(format!("digballot({signed},{enc})")));
        }
        Ok(Fact::DigBallot {
            signed: Arc::new(signed),
            enc: Arc::new(enc),
        })
    }

    pub fn raw(serial: Fact, enc: Fact) -> Result<Fact, AlgebraError> {
        if !matches!(serial, Fact::Serial(_)) || !enc.is_sealed_list() {
            return Err(AlgebraError::Shape(format!("raw({serial},{enc})")));
        }
        Ok(Fact::Raw {
            serial: Arc::new(serial),
            enc: Arc::new(enc),
        })
    }

    fn is_signed_serial(&self) -> bool {
        matches!(self, Fact::Sign { body, .. } if matches!(**body, Fact::Serial(_)))
    }

    /// An encrypted candidate list, or its masked stand-in.
    fn is_sealed_list(&self) -> bool {
        match self {
            Fact::Enc { body, .. } => matches!(**body, Fact::List(_)),
            Fact::Ciphertext => true,
            _ => false,
        }
    }

    /// True if an `Enc`/`SymEnc` occurs anywhere in the term.
    pub fn contains_encryption(&self) -> bool {
        match self {
            Fact::Enc { .. } | Fact::SymEnc { .. } => true,
            Fact::Ballot { list, signed, index } => {
                list.contains_encryption() || signed.contains_encryption() || index.contains_encryption()
            }
            Fact::Rhs { signed, index } => signed.contains_encryption() || index.contains_encryption(),
            Fact::Receipt { rhs, .. } => rhs.contains_encryption(),
            Fact::Sign { body, .. } => body.contains_encryption(),
            Fact::Vote { enc, .. } | Fact::DigBallot { enc, .. } | Fact::Raw { enc, .. } => {
                enc.contains_encryption()
            }
            _ => false,
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(
            self,
            Fact::Agent(_)
                | Fact::Candidate(_)
                | Fact::Nonce(_)
                | Fact::Serial(_)
                | Fact::PubKey(_)
                | Fact::SecKey(_)
                | Fact::Int(_)
                | Fact::Index(_)
                | Fact::List(_)
                | Fact::Ciphertext
        )
    }

    pub fn as_list(&self) -> Option<&[Name]> {
        match self {
            Fact::List(l) => Some(l),
            _ => None,
        }
    }
}

/// 1-based position of `c` in `l`.
pub fn find(c: &Name, l: &[Name]) -> Result<usize, AlgebraError> {
    match l.split_first() {
        None => Err(AlgebraError::NotFound(c.to_string())),
        Some((head, _)) if head == c => Ok(1),
        Some((_, tail)) => find(c, tail).map(|i| i + 1),
    }
}

/// The `i`-th (1-based) element of `l`.
pub fn nth(i: usize, l: &[Name]) -> Result<Name, AlgebraError> {
    match (i, l.split_first()) {
        (0, _) | (_, None) => Err(AlgebraError::OutOfRange(i)),
        (1, Some((head, _))) => Ok(head.clone()),
        (_, Some((_, tail))) => nth(i - 1, tail).map_err(|_| AlgebraError::OutOfRange(i)),
    }
}

/// Collapse every encryption whose decryption key is absent from `ik` to
/// [`Fact::Ciphertext`]. Facts without an encrypted component are returned
/// unchanged.
pub fn mask_fact(f: &Fact, ik: &BTreeSet<Fact>) -> Fact {
    Masking::from_knowledge(ik).apply(f)
}

/// Precomputed masking decision: the set of key owners whose secret key the
/// intruder holds initially.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Masking {
    readable: BTreeSet<Name>,
}

impl Masking {
    pub fn from_knowledge<'a, I>(ik: I) -> Self
    where
        I: IntoIterator<Item = &'a Fact>,
    {
        let readable = ik
            .into_iter()
            .filter_map(|f| match f {
                Fact::SecKey(owner) => Some(owner.clone()),
                _ => None,
            })
            .collect();
        Masking { readable }
    }

    pub fn readable(&self) -> &BTreeSet<Name> {
        &self.readable
    }

    pub fn apply(&self, f: &Fact) -> Fact {
        match f {
            Fact::Enc { key, .. } if !self.readable.contains(key) => Fact::Ciphertext,
            Fact::Enc { .. } => f.clone(),
            Fact::SymEnc { .. } => Fact::Ciphertext,
            Fact::Vote { index, enc } => Fact::Vote {
                index: index.clone(),
                enc: self.apply_arc(enc),
            },
            Fact::DigBallot { signed, enc } => Fact::DigBallot {
                signed: signed.clone(),
                enc: self.apply_arc(enc),
            },
            Fact::Raw { serial, enc } => Fact::Raw {
                serial: serial.clone(),
                enc: self.apply_arc(enc),
            },
            _ => f.clone(),
        }
    }

    fn apply_arc(&self, f: &Arc<Fact>) -> Arc<Fact> {
        match &**f {
            Fact::Enc { key, .. } if !self.readable.contains(key) => Arc::new(Fact::Ciphertext),
            _ => f.clone(),
        }
    }

    /// Whether masking could change `f` at all.
    pub fn touches(&self, f: &Fact) -> bool {
        f.contains_encryption()
    }
}

impl fmt::Display for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Agent(n) | Fact::Candidate(n) | Fact::Nonce(n) | Fact::Serial(n) => write!(f, "{n}"),
            Fact::PubKey(o) => write!(f, "pk{o}"),
            Fact::SecKey(o) => write!(f, "sk{o}"),
            Fact::Int(i) => write!(f, "{i}"),
            Fact::Index(i) => write!(f, "ind{i}"),
            Fact::List(l) => {
                f.write_str("<")?;
                for (k, c) in l.iter().enumerate() {
                    if k > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(">")
            }
            Fact::Enc { key, body } => write!(f, "enc(pk{key},{body})"),
            Fact::SymEnc { key, body } => write!(f, "senc({key},{body})"),
            Fact::Sign { key, body } => write!(f, "sign(sk{key},{body})"),
            Fact::SignPair { key, serial, nonce } => write!(f, "sign(sk{key},({serial},{nonce}))"),
            Fact::Ballot { list, signed, index } => write!(f, "ballot({list},{signed},{index})"),
            Fact::Rhs { signed, index } => write!(f, "rhs({signed},{index})"),
            Fact::Receipt { key, rhs } => write!(f, "receipt(sk{key},{rhs})"),
            Fact::Vote { index, enc } => write!(f, "vote({index},{enc})"),
            Fact::DigBallot { signed, enc } => write!(f, "digballot({signed},{enc})"),
            Fact::Raw { serial, enc } => write!(f, "raw({serial},{enc})"),
            Fact::Ciphertext => f.write_str("ciphertext"),
            Fact::ResultCount { candidate, count } => write!(f, "result({candidate},{count})"),
        }
    }
}

impl fmt::Debug for Fact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

/// Classifies bare identifiers while parsing rendered facts.
pub trait Lexicon {
    /// The fact a bare identifier denotes, if any.
    fn atom(&self, token: &str) -> Option<Fact>;
    /// Whether `owner` names a key pair.
    fn is_key_owner(&self, owner: &str) -> bool;
}

/// Parse a fact from the rendering grammar.
pub fn parse_fact(src: &str, lex: &dyn Lexicon) -> Result<Fact, AlgebraError> {
    let mut p = Parser { src, pos: 0, lex };
    let f = p.fact()?;
    p.skip_ws();
    if p.pos != src.len() {
        return Err(p.error("trailing input"));
    }
    Ok(f)
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    lex: &'a dyn Lexicon,
}

impl<'a> Parser<'a> {
    fn error(&self, what: &str) -> AlgebraError {
        AlgebraError::Parse {
            input: self.src.to_string(),
            offset: self.pos,
            message: what.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(' ') {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> Result<(), AlgebraError> {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.error(&format!("expected '{c}'")))
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.src[self.pos..].chars().next()
    }

    fn ident(&mut self) -> Result<&'a str, AlgebraError> {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .char_indices()
            .find(|(_, c)| !(c.is_alphanumeric() || *c == '_' || *c == '-'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        if len == 0 {
            return Err(self.error("expected identifier"));
        }
        self.pos += len;
        Ok(&rest[..len])
    }

    fn key(&mut self, prefix: &str) -> Result<Name, AlgebraError> {
        let tok = self.ident()?;
        match tok.strip_prefix(prefix) {
            Some(owner) if self.lex.is_key_owner(owner) => Ok(Name::new(owner)),
            _ => Err(self.error(&format!("expected {prefix}<owner>, found '{tok}'"))),
        }
    }

    fn args2(&mut self) -> Result<(Fact, Fact), AlgebraError> {
        self.eat('(')?;
        let a = self.fact()?;
        self.eat(',')?;
        let b = self.fact()?;
        self.eat(')')?;
        Ok((a, b))
    }

    fn fact(&mut self) -> Result<Fact, AlgebraError> {
        if self.peek() == Some('<') {
            self.eat('<')?;
            let mut names = Vec::new();
            if self.peek() != Some('>') {
                loop {
                    names.push(Name::new(self.ident()?));
                    if self.peek() == Some(',') {
                        self.eat(',')?;
                    } else {
                        break;
                    }
                }
            }
            self.eat('>')?;
            return Ok(Fact::List(names.into()));
        }
        let start = self.pos;
        let tok = self.ident()?;
        if self.peek() == Some('(') {
            return match tok {
                "enc" => {
                    self.eat('(')?;
                    let key = self.key("pk")?;
                    self.eat(',')?;
                    let body = self.fact()?;
                    self.eat(')')?;
                    Fact::enc(&key, body)
                }
                "senc" => {
                    let (k, b) = self.args2()?;
                    Fact::sym_enc(k, b)
                }
                "sign" => {
                    self.eat('(')?;
                    let key = self.key("sk")?;
                    self.eat(',')?;
                    let f = if self.peek() == Some('(') {
                        self.eat('(')?;
                        let s = Name::new(self.ident()?);
                        self.eat(',')?;
                        let n = Name::new(self.ident()?);
                        self.eat(')')?;
                        Fact::sign_pair(&key, &s, &n)
                    } else {
                        let body = self.fact()?;
                        Fact::sign(&key, body)?
                    };
                    self.eat(')')?;
                    Ok(f)
                }
                "receipt" => {
                    self.eat('(')?;
                    let key = self.key("sk")?;
                    self.eat(',')?;
                    let rhs = self.fact()?;
                    self.eat(')')?;
                    Fact::receipt(&key, rhs)
                }
                "ballot" => {
                    self.eat('(')?;
                    let l = self.fact()?;
                    self.eat(',')?;
                    let s = self.fact()?;
                    self.eat(',')?;
                    let i = self.fact()?;
                    self.eat(')')?;
                    Fact::ballot(l, s, i)
                }
                "rhs" => {
                    let (s, i) = self.args2()?;
                    Fact::rhs(s, i)
                }
                "vote" => {
                    let (i, e) = self.args2()?;
                    Fact::vote(i, e)
                }
                "digballot" => {
                    let (s, e) = self.args2()?;
                    Fact::dig_ballot(s, e)
                }
                "raw" => {
                    let (s, e) = self.args2()?;
                    Fact::raw(s, e)
                }
                "result" => {
                    self.eat('(')?;
                    let c = Name::new(self.ident()?);
                    self.eat(',')?;
                    let n = self.ident()?;
                    self.eat(')')?;
                    let count = n.parse().map_err(|_| self.error("expected count"))?;
                    Ok(Fact::ResultCount { candidate: c, count })
                }
                _ => {
                    self.pos = start;
                    Err(self.error(&format!("unknown constructor '{tok}'")))
                }
            };
        }
        if tok == "ciphertext" {
            return Ok(Fact::Ciphertext);
        }
        if let Ok(i) = tok.parse::<u32>() {
            return Ok(Fact::Int(i));
        }
        if let Some(i) = tok.strip_prefix("ind").and_then(|d| d.parse::<u32>().ok()) {
            return Ok(Fact::Index(i));
        }
        if let Some(atom) = self.lex.atom(tok) {
            return Ok(atom);
        }
        if let Some(owner) = tok.strip_prefix("pk").filter(|o| self.lex.is_key_owner(o)) {
            return Ok(Fact::PubKey(Name::new(owner)));
        }
        if let Some(owner) = tok.strip_prefix("sk").filter(|o| self.lex.is_key_owner(o)) {
            return Ok(Fact::SecKey(Name::new(owner)));
        }
        self.pos = start;
        Err(self.error(&format!("unknown identifier '{tok}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ab() -> Vec<Name> {
        vec![Name::new("Archimedes"), Name::new("Babbage")]
    }

    #[test]
    fn find_follows_head_tail_recursion() {
        let l = ab();
        assert_eq!(find(&Name::new("Archimedes"), &l).unwrap(), 1);
        assert_eq!(find(&Name::new("Babbage"), &l).unwrap(), 2);
        assert!(matches!(
            find(&Name::new("Archimedes"), &l[1..]),
            Err(AlgebraError::NotFound(_))
        ));
    }

    #[test]
    fn nth_indexes_from_one() {
        let l = ab();
        assert_eq!(nth(1, &l).unwrap().as_str(), "Archimedes");
        assert_eq!(nth(2, &l).unwrap().as_str(), "Babbage");
        assert!(matches!(nth(3, &l), Err(AlgebraError::OutOfRange(3))));
        assert!(matches!(nth(0, &l), Err(AlgebraError::OutOfRange(0))));
    }

    #[test]
    fn masking_depends_on_held_secret_keys() {
        let l = Fact::list(["Archimedes", "Babbage"]);
        let under_ea = Fact::enc(&Name::new("EA"), l.clone()).unwrap();
        let under_ps = Fact::enc(&Name::new("PS"), l).unwrap();
        let ik: BTreeSet<Fact> = [Fact::sk("PS"), Fact::pk("EA")].into_iter().collect();
        assert_eq!(mask_fact(&under_ea, &ik), Fact::Ciphertext);
        assert_eq!(mask_fact(&under_ps, &ik), under_ps);

        let sig = Fact::sign(&Name::new("PS"), Fact::serial("s1")).unwrap();
        assert_eq!(mask_fact(&sig, &ik), sig);

        let raw = Fact::raw(Fact::serial("s3"), under_ea).unwrap();
        assert_eq!(mask_fact(&raw, &ik).to_string(), "raw(s3,ciphertext)");
    }

    #[test]
    fn constructors_reject_nested_encryption() {
        let l = Fact::list(["A", "B"]);
        let inner = Fact::enc(&Name::new("EA"), l).unwrap();
        assert!(matches!(
            Fact::enc(&Name::new("PS"), inner.clone()),
            Err(AlgebraError::Nesting(_))
        ));
        let signed = Fact::sign(&Name::new("PS"), Fact::serial("s1")).unwrap();
        assert!(Fact::sign(&Name::new("W"), signed).is_err());
        assert!(Fact::vote(Fact::Index(1), Fact::serial("s1")).is_err());
    }

    #[test]
    fn rendering_matches_grammar() {
        let l = Fact::list(["Archimedes", "Babbage"]);
        let signed = Fact::sign(&Name::new("PS"), Fact::serial("s1")).unwrap();
        assert_eq!(
            Fact::enc(&Name::new("PS"), l.clone()).unwrap().to_string(),
            "enc(pkPS,<Archimedes,Babbage>)"
        );
        assert_eq!(
            Fact::sign_pair(&Name::new("BM"), &Name::new("s1"), &Name::new("na")).to_string(),
            "sign(skBM,(s1,na))"
        );
        assert_eq!(
            Fact::dig_ballot(signed.clone(), Fact::Ciphertext).unwrap().to_string(),
            "digballot(sign(skPS,s1),ciphertext)"
        );
        assert_eq!(
            Fact::ballot(Fact::list(["A", "B"]), signed.clone(), Fact::Index(0))
                .unwrap()
                .to_string(),
            "ballot(<A,B>,sign(skPS,s1),ind0)"
        );
        let rhs = Fact::rhs(signed, Fact::Index(1)).unwrap();
        assert_eq!(rhs.to_string(), "rhs(sign(skPS,s1),ind1)");
        assert_eq!(
            Fact::receipt(&Name::new("W"), rhs).unwrap().to_string(),
            "receipt(skW,rhs(sign(skPS,s1),ind1))"
        );
        assert_eq!(
            Fact::vote(Fact::Index(2), Fact::Ciphertext).unwrap().to_string(),
            "vote(ind2,ciphertext)"
        );
    }
}
