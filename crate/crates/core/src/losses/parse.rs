//! Text form of [`LossKind`].
//!
//! ```text
//! loss  := name [ "(" arg ("," arg)* ")" ]
//! arg   := key "=" number | loss        (a bare loss only inside clip)
//! ```
//!
//! Examples: `logistic`, `smooth_margin(rho=1)`, `clip(logistic,B=3)`.

use std::str::FromStr;

use super::LossKind;
use crate::error::Error;

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { src: s, pos: 0 };
        let loss = p.loss()?;
        p.skip_ws();
        if p.pos != s.len() {
            return Err(p.error("trailing input"));
        }
        loss.validate()?;
        Ok(loss)
    }
}

enum Arg {
    Named(String, f64),
    Loss(LossKind),
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, what: &str) -> Error {
        Error::InvalidParameter(format!("cannot parse loss `{}` at offset {}: {what}", self.src, self.pos))
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> Result<String, Error> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_alphanumeric() || c == '_') {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a name"));
        }
        Ok(self.src[start..self.pos].to_ascii_lowercase())
    }

    fn number(&mut self) -> Result<f64, Error> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '-' | '+'))
        {
            self.pos += 1;
        }
        self.src[start..self.pos].parse().map_err(|_| {
            self.pos = start;
            self.error("expected a number")
        })
    }

    fn arg(&mut self) -> Result<Arg, Error> {
        let save = self.pos;
        let name = self.ident()?;
        if self.eat('=') {
            return Ok(Arg::Named(name, self.number()?));
        }
        self.pos = save;
        Ok(Arg::Loss(self.loss()?))
    }

    fn loss(&mut self) -> Result<LossKind, Error> {
        let name = self.ident()?;
        let mut args = Vec::new();
        if self.eat('(')
            && !self.eat(')') {
                loop {
                    args.push(self.arg()?);
                    if self.eat(')') {
                        break;
                    }
                    if !self.eat(',') {
                        return Err(self.error("expected `,` or `)`"));
                    }
                }
            }
        build(&name, args).map_err(|msg| self.error(&msg))
    }
}

fn build(name: &str, args: Vec<Arg>) -> Result<LossKind, String> {
    let mut inner = None;
    let mut named = Vec::new();
    for a in args {
        match a {
            Arg::Loss(l) if inner.is_none() => inner = Some(l),
            Arg::Loss(_) => return Err("more than one nested loss".into()),
            Arg::Named(k, v) => named.push((k, v)),
        }
    }
    if inner.is_some() && name != "clip" {
        return Err(format!("`{name}` takes no nested loss"));
    }
    let allowed: &[&str] = match name {
        "smooth_margin" | "hard_margin" => &["rho"],
        "pick_all_labels" => &["k"],
        "sup_norm" => &["kappa", "gamma"],
        "minimax_power" => &["lambda", "theta"],
        "clip" => &["b"],
        _ => &[],
    };
    for (k, _) in &named {
        if !allowed.contains(&k.as_str()) {
            return Err(format!("unknown argument `{k}` for `{name}`"));
        }
    }
    let get = |key: &str, default: Option<f64>| -> Result<f64, String> {
        named
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| *v)
            .or(default)
            .ok_or_else(|| format!("`{name}` needs `{key}=`"))
    };
    Ok(match name {
        "smooth_margin" => LossKind::SmoothMargin { rho: get("rho", Some(1.0))? },
        "hard_margin" => LossKind::HardMargin { rho: get("rho", Some(1.0))? },
        "logistic" | "multinomial_logistic" => LossKind::MultinomialLogistic,
        "pick_all_labels" => {
            let k = get("k", None)?;
            if k < 1.0 || k.fract() != 0.0 {
                return Err(format!("k must be a positive integer, got {k}"));
            }
            LossKind::PickAllLabels { k: k as usize }
        }
        "sup_norm" => LossKind::SupNorm { kappa: get("kappa", Some(1.0))?, gamma: get("gamma", Some(2.0))? },
        "bounded_exp" | "bounded_exponential" => LossKind::BoundedExponential,
        "minimax_power" => LossKind::MinimaxPower { lambda: get("lambda", Some(1.0))?, theta: get("theta", Some(0.5))? },
        "zero_one" => LossKind::ZeroOne,
        "clip" => LossKind::Clipped {
            inner: Box::new(inner.ok_or("`clip` needs an inner loss")?),
            bound: get("b", None)?,
        },
        other => return Err(format!("unknown loss `{other}`")),
    })
}
