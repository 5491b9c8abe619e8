//! MATPOWER case-file subset parser.
//!
//! Supported grammar: `mpc.<name> = <scalar>;` and `mpc.<name> = [ rows ];`
//! with whitespace-separated numeric columns, `%` comments and semicolon row
//! terminators. Required blocks: `baseMVA`, `bus`, `gen`, `branch`,
//! `gencost`. Out-of-service generators and branches (status 0) are dropped.

use super::{Branch, Bus, BusType, Generator, GridError, NetworkCase};
use std::collections::HashMap;

struct Block {
    line: usize,
    rows: Vec<Vec<f64>>,
}

enum Value {
    Scalar(f64),
    Matrix(Block),
}

pub fn parse_matpower_case(text: &str) -> Result<NetworkCase, GridError> {
    let blocks = scan(text)?;

    let base_mva = match blocks.get("baseMVA") {
        Some(Value::Scalar(v)) => *v,
        Some(Value::Matrix(_)) => {
            return Err(GridError::Invalid("mpc.baseMVA must be a scalar".into()))
        }
        None => return Err(GridError::MissingBlock("baseMVA")),
    };
    if !(base_mva > 0.0) {
        return Err(GridError::Invalid(format!(
            "base power must be positive, got {base_mva}"
        )));
    }

    let bus_block = matrix(&blocks, "bus")?;
    let gen_block = matrix(&blocks, "gen")?;
    let branch_block = matrix(&blocks, "branch")?;
    let gencost_block = matrix(&blocks, "gencost")?;

    let mut buses = Vec::new();
    for (i, row) in bus_block.rows.iter().enumerate() {
        if row.len() != 13 {
            return Err(GridError::Syntax {
                line: bus_block.line,
                col: 1,
                msg: format!("bus row {} has {} columns, expected 13", i + 1, row.len()),
            });
        }
        let bus_type = match row[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            t => {
                return Err(GridError::Invalid(format!(
                    "bus row {}: unsupported bus type {t}",
                    i + 1
                )))
            }
        };
        buses.push(Bus {
            id: row[0] as usize,
            bus_type,
            p_demand_nominal: row[2],
            q_demand_nominal: row[3],
            shunt_g: row[4],
            shunt_b: row[5],
            v_max: row[11],
            v_min: row[12],
        });
    }

    let n_gen_rows = gen_block.rows.len();
    if gencost_block.rows.len() < n_gen_rows {
        return Err(GridError::Invalid(format!(
            "gencost has {} rows for {} generators",
            gencost_block.rows.len(),
            n_gen_rows
        )));
    }

    let mut generators = Vec::new();
    for (i, row) in gen_block.rows.iter().enumerate() {
        if row.len() < 10 {
            return Err(GridError::Syntax {
                line: gen_block.line,
                col: 1,
                msg: format!("gen row {} has {} columns, expected >= 10", i + 1, row.len()),
            });
        }
        if row[7] == 0.0 {
            continue; // out of service
        }
        let cost = &gencost_block.rows[i];
        if cost.len() < 4 {
            return Err(GridError::Syntax {
                line: gencost_block.line,
                col: 1,
                msg: format!("gencost row {} has fewer than 4 columns", i + 1),
            });
        }
        let model = cost[0] as i64;
        let n = cost[3] as usize;
        if model != 2 || n > 2 || cost.len() != 4 + n {
            return Err(GridError::NonlinearCost(i + 1));
        }
        // n = 2: [c1, c0]; n = 1: [c0]; n = 0: free. Constant terms ignored.
        let cost_linear = if n == 2 { cost[4] } else { 0.0 };
        generators.push(Generator {
            bus_id: row[0] as usize,
            q_max: row[3],
            q_min: row[4],
            p_max: row[8],
            p_min: row[9],
            cost_linear,
        });
    }

    let mut branches = Vec::new();
    for (i, row) in branch_block.rows.iter().enumerate() {
        if row.len() < 13 {
            return Err(GridError::Syntax {
                line: branch_block.line,
                col: 1,
                msg: format!(
                    "branch row {} has {} columns, expected >= 13",
                    i + 1,
                    row.len()
                ),
            });
        }
        if row[10] == 0.0 {
            continue; // out of service
        }
        branches.push(Branch {
            from_bus: row[0] as usize,
            to_bus: row[1] as usize,
            r: row[2],
            x: row[3],
            b_charging: row[4],
            rating: row[5],
        });
    }

    let case = NetworkCase {
        base_mva,
        buses,
        generators,
        branches,
    };
    case.validate()?;
    Ok(case)
}

fn matrix<'a>(blocks: &'a HashMap<String, Value>, name: &'static str) -> Result<&'a Block, GridError> {
    match blocks.get(name) {
        Some(Value::Matrix(b)) => Ok(b),
        Some(Value::Scalar(_)) => Err(GridError::Invalid(format!(
            "mpc.{name} must be a matrix block"
        ))),
        None => Err(GridError::MissingBlock(name)),
    }
}

/// Scans `mpc.<name> = ...;` assignments, ignoring everything else
/// (`function mpc = ...` headers, comments, blank lines).
fn scan(text: &str) -> Result<HashMap<String, Value>, GridError> {
    let mut blocks = HashMap::new();
    let mut lines = text.lines().enumerate().peekable();
    while let Some((lineno, raw)) = lines.next() {
        let line = strip_comment(raw);
        let trimmed = line.trim();
        if !trimmed.starts_with("mpc.") {
            continue;
        }
        let eq = trimmed.find('=').ok_or(GridError::Syntax {
            line: lineno + 1,
            col: 1,
            msg: "expected `=` in mpc assignment".into(),
        })?;
        let name = trimmed[4..eq].trim().to_string();
        let rest = trimmed[eq + 1..].trim();
        if let Some(body) = rest.strip_prefix('[') {
            // matrix block, possibly spanning multiple lines
            let mut rows: Vec<Vec<f64>> = Vec::new();
            let mut current: Vec<f64> = Vec::new();
            let mut done = consume_matrix_line(body, lineno + 1, &mut rows, &mut current)?;
            while !done {
                let (ln, raw) = lines.next().ok_or(GridError::Syntax {
                    line: lineno + 1,
                    col: 1,
                    msg: format!("unterminated matrix block mpc.{name}"),
                })?;
                let content = strip_comment(raw);
                done = consume_matrix_line(content, ln + 1, &mut rows, &mut current)?;
            }
            if !current.is_empty() {
                rows.push(std::mem::take(&mut current));
            }
            blocks.insert(
                name,
                Value::Matrix(Block {
                    line: lineno + 1,
                    rows,
                }),
            );
        } else {
            let scalar_text = rest.trim_end_matches(';').trim();
            let v = scalar_text.parse::<f64>().map_err(|_| GridError::Syntax {
                line: lineno + 1,
                col: eq + 2,
                msg: format!("invalid scalar `{scalar_text}`"),
            })?;
            blocks.insert(name, Value::Scalar(v));
        }
    }
    Ok(blocks)
}

/// Consumes one line of a matrix body; returns true once `]` is reached.
fn consume_matrix_line(
    content: &str,
    lineno: usize,
    rows: &mut Vec<Vec<f64>>,
    current: &mut Vec<f64>,
) -> Result<bool, GridError> {
    let (body, done) = match content.find(']') {
        Some(pos) => (&content[..pos], true),
        None => (content, false),
    };
    for (k, piece) in body.split(';').enumerate() {
        if k > 0 && !current.is_empty() {
            rows.push(std::mem::take(current));
        }
        for tok in piece.split_whitespace() {
            let v = tok.parse::<f64>().map_err(|_| GridError::Syntax {
                line: lineno,
                col: content.find(tok).map(|p| p + 1).unwrap_or(1),
                msg: format!("invalid number `{tok}`"),
            })?;
            current.push(v);
        }
    }
    // end of line terminates a row as well
    if !current.is_empty() {
        rows.push(std::mem::take(current));
    }
    Ok(done)
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

/// Writes a case back out in the same subset grammar.
///
/// Values use the shortest round-trip float formatting, so
/// parse → serialize → parse is lossless.
pub fn serialize_matpower_case(case: &NetworkCase) -> String {
    let mut out = String::new();
    out.push_str("function mpc = case\n");
    out.push_str(&format!("mpc.baseMVA = {};\n", case.base_mva));

    out.push_str("mpc.bus = [\n");
    for b in &case.buses {
        let t = match b.bus_type {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        };
        out.push_str(&format!(
            "{} {} {} {} {} {} 1 1 0 0 1 {} {};\n",
            b.id, t, b.p_demand_nominal, b.q_demand_nominal, b.shunt_g, b.shunt_b, b.v_max, b.v_min
        ));
    }
    out.push_str("];\n");

    out.push_str("mpc.gen = [\n");
    for g in &case.generators {
        out.push_str(&format!(
            "{} 0 0 {} {} 1 {} 1 {} {};\n",
            g.bus_id, g.q_max, g.q_min, case.base_mva, g.p_max, g.p_min
        ));
    }
    out.push_str("];\n");

    out.push_str("mpc.branch = [\n");
    for br in &case.branches {
        out.push_str(&format!(
            "{} {} {} {} {} {} 0 0 0 0 1 -360 360;\n",
            br.from_bus, br.to_bus, br.r, br.x, br.b_charging, br.rating
        ));
    }
    out.push_str("];\n");

    out.push_str("mpc.gencost = [\n");
    for g in &case.generators {
        out.push_str(&format!("2 0 0 2 {} 0;\n", g.cost_linear));
    }
    out.push_str("];\n");
    out
}
