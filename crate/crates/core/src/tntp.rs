//! Parser for the TNTP network interchange format.
//!
//! TNTP files carry a metadata preamble of `<KEY> value` lines terminated by
//! `<END OF METADATA>`, `~`-prefixed comments, and whitespace-separated data
//! rows. The network file lists one link per row (`init_node term_node
//! capacity length free_flow_time b power speed toll type`); the trips file
//! groups demand under `Origin n` headers as `dest : flow;` entries. Node
//! numbers are 1-based in the files and converted to 0-based here.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::net::{Link, Network, OdPair};

/// Strip a `~` comment and trailing `;`, returning the payload.
fn payload(line: &str) -> &str {
    let line = match line.find('~') {
        Some(at) => &line[..at],
        None => line,
    };
    line.trim()
}

fn parse_field<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Metadata headers `<KEY> value`, keyed without the angle brackets.
fn parse_metadata<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
) -> Result<BTreeMap<String, String>> {
    let mut meta = BTreeMap::new();
    for (no, raw) in lines {
        let line = payload(raw);
        if line.is_empty() {
            continue;
        }
        if !line.starts_with('<') {
            return Err(Error::Parse {
                line: no,
                msg: format!("expected metadata header or <END OF METADATA>, found {line:?}"),
            });
        }
        let close = line.find('>').ok_or(Error::Parse {
            line: no,
            msg: "unterminated metadata header".into(),
        })?;
        let key = line[1..close].trim().to_uppercase();
        if key == "END OF METADATA" {
            return Ok(meta);
        }
        meta.insert(key, line[close + 1..].trim().to_string());
    }
    Ok(meta)
}

/// Parse a TNTP network file and trips file into a [`Network`].
///
/// Link rows need at least five columns (tail, head, capacity, length,
/// free-flow time); the BPR shape columns `b` and `power` are kept when
/// present. Intrazonal trips (origin equal to destination) and zero-flow
/// entries are dropped.
pub fn parse_tntp(net_text: &str, trips_text: &str) -> Result<Network> {
    let mut lines = net_text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let meta = parse_metadata(&mut lines)?;

    let mut links = Vec::new();
    let mut max_node = 0usize;
    for (no, raw) in lines {
        let line = payload(raw);
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.trim_end_matches(';').split_whitespace().collect();
        if toks.len() < 5 {
            return Err(Error::Parse {
                line: no,
                msg: format!("link row needs at least 5 columns, found {}", toks.len()),
            });
        }
        let tail: usize = parse_field(toks[0], no, "tail node")?;
        let head: usize = parse_field(toks[1], no, "head node")?;
        if tail == 0 || head == 0 {
            return Err(Error::Parse {
                line: no,
                msg: "node numbers are 1-based; found 0".into(),
            });
        }
        let capacity: f64 = parse_field(toks[2], no, "capacity")?;
        let fftime: f64 = parse_field(toks[4], no, "free-flow time")?;
        let bpr_b = toks.get(5).map(|t| parse_field(t, no, "BPR b")).transpose()?;
        let bpr_power = toks.get(6).map(|t| parse_field(t, no, "BPR power")).transpose()?;
        max_node = max_node.max(tail).max(head);
        links.push(Link {
            tail: tail - 1,
            head: head - 1,
            u0: fftime,
            v0: capacity,
            b: 0.0,
            bpr_b,
            bpr_power,
        });
    }

    let mut lines = trips_text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let _trips_meta = parse_metadata(&mut lines)?;

    let mut od = Vec::new();
    let mut origin: Option<usize> = None;
    for (no, raw) in lines {
        let line = payload(raw);
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("Origin") {
            let o: usize = parse_field(rest.trim(), no, "origin node")?;
            if o == 0 {
                return Err(Error::Parse {
                    line: no,
                    msg: "node numbers are 1-based; found 0".into(),
                });
            }
            max_node = max_node.max(o);
            origin = Some(o - 1);
            continue;
        }
        let o = origin.ok_or(Error::Parse {
            line: no,
            msg: "demand entry before any Origin header".into(),
        })?;
        for entry in line.split(';') {
            let entry = entry.trim();
            if entry.is_empty() {
                continue;
            }
            let (dst, flow) = entry.split_once(':').ok_or_else(|| Error::Parse {
                line: no,
                msg: format!("expected `dest : flow` in {entry:?}"),
            })?;
            let d: usize = parse_field(dst.trim(), no, "destination node")?;
            if d == 0 {
                return Err(Error::Parse {
                    line: no,
                    msg: "node numbers are 1-based; found 0".into(),
                });
            }
            let demand: f64 = parse_field(flow.trim(), no, "demand")?;
            max_node = max_node.max(d);
            if d - 1 != o && demand > 0.0 {
                od.push(OdPair {
                    o,
                    d: d - 1,
                    demand,
                });
            }
        }
    }

    let nodes = meta
        .get("NUMBER OF NODES")
        .map(|v| {
            v.parse::<usize>().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad <NUMBER OF NODES> value {v:?}"),
            })
        })
        .transpose()?
        .unwrap_or(0)
        .max(max_node);

    let net = Network { nodes, links, od };
    net.validate()?;
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NET: &str = "\
<NUMBER OF NODES> 4
<NUMBER OF LINKS> 5
<END OF METADATA>
~ tail head capacity length fftime b power speed toll type
1 2 6.0 1 1.0 0.15 4 0 0 1 ;
1 3 3.0 1 2.0 0.15 4 0 0 1 ;
2 4 3.0 1 2.0 0.15 4 0 0 1 ;
2 3 9.0 1 0.5 0.15 4 0 0 1 ;
3 4 6.0 1 1.0 0.15 4 0 0 1 ;
";

    const TRIPS: &str = "\
<NUMBER OF ZONES> 4
<TOTAL OD FLOW> 7.0
<END OF METADATA>
Origin 1
  1 : 0.0;  4 : 6.0;
Origin 2
  4 : 1.0;
";

    #[test]
    fn parses_links_and_trips() {
        let net = parse_tntp(NET, TRIPS).unwrap();
        assert_eq!(net.nodes, 4);
        assert_eq!(net.links.len(), 5);
        assert_eq!(net.links[0].tail, 0);
        assert_eq!(net.links[0].head, 1);
        assert_eq!(net.links[0].v0, 6.0);
        assert_eq!(net.links[1].u0, 2.0);
        assert_eq!(net.links[0].bpr_b, Some(0.15));
        assert_eq!(net.links[0].bpr_power, Some(4.0));
        // Intrazonal 1→1 is dropped; 1→4 and 2→4 remain.
        assert_eq!(net.od.len(), 2);
        assert_eq!(net.od[0], OdPair { o: 0, d: 3, demand: 6.0 });
        assert_eq!(net.od[1], OdPair { o: 1, d: 3, demand: 1.0 });
    }

    #[test]
    fn error_carries_line_number() {
        let bad = NET.replace("1 3 3.0 1 2.0", "1 3 oops 1 2.0");
        let err = parse_tntp(&bad, TRIPS).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_demand_before_origin() {
        let trips = "<END OF METADATA>\n  4 : 6.0;\n";
        assert!(parse_tntp(NET, trips).is_err());
    }

    #[test]
    fn rejects_zero_based_nodes() {
        let bad = NET.replace("1 2 6.0", "0 2 6.0");
        assert!(parse_tntp(&bad, TRIPS).is_err());
    }

    #[test]
    fn multi_od_totals() {
        let net = parse_tntp(NET, TRIPS).unwrap();
        assert_eq!(net.total_demand(), 7.0);
    }
}
