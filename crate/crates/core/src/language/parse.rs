//! Reader for generated instructions, used to check the grammar is injective.

use thiserror::Error;

use super::{Clause, Connective, Instruction, Query};
use crate::task::AttributeKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse instruction near `{0}`")]
pub struct ParseError(pub String);

fn err<T>(at: &str) -> Result<T, ParseError> {
    Err(ParseError(at.chars().take(40).collect()))
}

pub fn parse_instruction(text: &str) -> Result<Instruction, ParseError> {
    let Some(mut rest) = text.strip_suffix('?') else { return err(text) };
    let mut clauses = Vec::new();
    while let Some((head, tail)) = rest.split_once(", ") {
        let clause = if head == "delay" {
            Clause::Delay
        } else if let Some(c) = parse_observe(head)? {
            c
        } else {
            break;
        };
        clauses.push(clause);
        rest = tail;
    }
    Ok(Instruction { clauses, query: parse_query(rest)? })
}

fn frame_number(s: &str) -> Result<usize, ParseError> {
    match s.parse::<usize>() {
        Ok(f) if f >= 1 => Ok(f - 1),
        _ => err(s),
    }
}

fn parse_observe(s: &str) -> Result<Option<Clause>, ParseError> {
    let Some(body) = s.strip_prefix("observe ") else { return Ok(None) };
    let Some((what, frame)) = body.rsplit_once(" in frame ") else { return err(s) };
    let frame = frame_number(frame)?;
    if let Some(k) = what.strip_prefix("object ") {
        let object = k.parse().map_err(|_| ParseError(s.into()))?;
        return Ok(Some(Clause::Observe { object, frame }));
    }
    if let Some(loc) = what.strip_prefix("the object at the ") {
        let location = loc.parse().map_err(|_| ParseError(s.into()))?;
        return Ok(Some(Clause::ObserveLocation { location, frame }));
    }
    if let Some(cat) = what.strip_prefix("the ") {
        let category = cat.parse().map_err(|_| ParseError(s.into()))?;
        return Ok(Some(Clause::ObserveCategory { category, frame }));
    }
    err(s)
}

fn parse_query(s: &str) -> Result<Query, ParseError> {
    if let Some(body) = s.strip_prefix("if ") {
        let Some((cond, rest)) = body.split_once(", then ") else { return err(s) };
        let Some((then, otherwise)) = rest.split_once("? else ") else { return err(rest) };
        return Ok(Query::Switch {
            cond: Box::new(parse_query(cond)?),
            then: Box::new(parse_query(then)?),
            otherwise: Box::new(parse_query(otherwise)?),
        });
    }
    let mut parts: Vec<(Option<Connective>, Vec<&str>)> = vec![(None, Vec::new())];
    for word in s.split(' ') {
        match word {
            "and" => parts.push((Some(Connective::And), Vec::new())),
            "or" => parts.push((Some(Connective::Or), Vec::new())),
            w => parts.last_mut().unwrap().1.push(w),
        }
    }
    let mut items = parts.into_iter().map(|(c, words)| Ok((c, parse_atom(&words.join(" "))?)));
    let (_, first) = items.next().unwrap()?;
    let rest: Vec<(Connective, Query)> =
        items.map(|r| r.map(|(c, q)| (c.unwrap(), q))).collect::<Result<_, ParseError>>()?;
    Ok(if rest.is_empty() { first } else { Query::Chain { first: Box::new(first), rest } })
}

fn parse_attr(s: &str) -> Result<(AttributeKind, u32), ParseError> {
    let Some((kind, k)) = s.split_once(" of object ") else { return err(s) };
    let kind = match kind {
        "location" => AttributeKind::Location,
        "category" => AttributeKind::Category,
        "identity" => AttributeKind::Identity,
        _ => return err(s),
    };
    Ok((kind, k.parse().map_err(|_| ParseError(s.into()))?))
}

fn parse_atom(s: &str) -> Result<Query, ParseError> {
    for (op, negate) in [(" not equals ", true), (" equals ", false)] {
        if let Some((a, b)) = s.split_once(op) {
            let (ka, a) = parse_attr(a)?;
            let (kb, b) = parse_attr(b)?;
            if ka != kb {
                return err(s);
            }
            return Ok(Query::Compare { kind: ka, negate, a, b });
        }
    }
    let (kind, object) = parse_attr(s)?;
    Ok(Query::Attr { kind, object })
}
