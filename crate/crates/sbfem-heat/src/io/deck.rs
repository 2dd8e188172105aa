//! Input decks in an Abaqus-flavored dialect.
//!
//! Recognized cards (keywords are case-insensitive, "**" starts a comment
//! line): *NODE, *USER ELEMENT, *ELEMENT, *UEL PROPERTY, plus the solver
//! extensions *BOUNDARY-TEMP, *INITIAL-TEMP, *STEP-STEADY and
//! *STEP-TRANSIENT. This is a documented dialect for this solver, not
//! Abaqus compatibility: property cards carry the ordered triple
//! (conductivity, density, specific heat), and boundary cards address
//! geometric edge tags with an expression over (x, y, t).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use crate::element::Material;
use crate::error::{Error, Result};
use crate::geometry::{tag_boundary_edges, Mesh, Node, Point2D, PolygonCell};
use crate::io::expr::{parse_expr, Expr};
use crate::solver::{BoundaryCondition, FieldFn};

#[derive(Clone, Debug, PartialEq)]
pub struct DeckNode {
    pub id: usize,
    pub x: f64,
    pub y: f64,
}

/// A *USER ELEMENT declaration. `properties` is recorded as declared but not
/// enforced against the property card's triple, since published decks count
/// properties inconsistently.
#[derive(Clone, Debug, PartialEq)]
pub struct UserElementDecl {
    pub type_name: String,
    pub nodes: usize,
    pub properties: usize,
    pub coordinates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeckElement {
    pub id: usize,
    pub node_ids: Vec<usize>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElementGroup {
    pub type_name: String,
    pub elset: String,
    pub elements: Vec<DeckElement>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropertyCard {
    pub elset: String,
    pub conductivity: f64,
    pub density: f64,
    pub specific_heat: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryCard {
    pub tag: String,
    pub expression: String,
    pub line: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepCard {
    Steady,
    Transient { dt: f64, t_end: f64 },
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InputDeck {
    pub nodes: Vec<DeckNode>,
    pub user_elements: Vec<UserElementDecl>,
    pub groups: Vec<ElementGroup>,
    pub properties: Vec<PropertyCard>,
    pub boundaries: Vec<BoundaryCard>,
    pub initial: Option<String>,
    pub step: Option<StepCard>,
}

/// Everything a solve needs, extracted from a deck.
#[derive(Debug)]
pub struct SolverCase {
    pub mesh: Mesh,
    pub materials: Vec<Material>,
    pub bcs: BTreeMap<String, BoundaryCondition>,
    pub initial: Option<Arc<Expr>>,
    pub step: StepCard,
}

struct Cursor<'a> {
    lines: Vec<&'a str>,
    idx: usize,
    path: String,
}

impl<'a> Cursor<'a> {
    /// Next meaningful line (skipping blanks and "**" comments) without
    /// consuming it. Returns (1-based line number, text).
    fn peek(&mut self) -> Option<(usize, &'a str)> {
        while self.idx < self.lines.len() {
            let raw = self.lines[self.idx].trim();
            if raw.is_empty() || raw.starts_with("**") {
                self.idx += 1;
                continue;
            }
            return Some((self.idx + 1, raw));
        }
        None
    }

    fn bump(&mut self) -> Option<(usize, &'a str)> {
        let item = self.peek()?;
        self.idx += 1;
        Some(item)
    }

    fn err(&self, line: usize, col: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            col,
            message: message.into(),
        }
    }
}

/// Splits a keyword line into (KEYWORD, [(KEY, VALUE)...]). The keyword and
/// keys are uppercased; values keep their spelling.
fn split_keyword_line(line: &str) -> (String, Vec<(String, String, usize)>) {
    let mut parts = line.split(',');
    let keyword = parts
        .next()
        .unwrap_or("")
        .trim()
        .to_uppercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let mut col = line.split(',').next().unwrap_or("").len() + 1;
    let mut params = Vec::new();
    for part in parts {
        let start_col = col + 1;
        col += part.len() + 1;
        match part.split_once('=') {
            Some((k, v)) => {
                params.push((k.trim().to_uppercase(), v.trim().to_string(), start_col))
            }
            None => params.push((part.trim().to_uppercase(), String::new(), start_col)),
        }
    }
    (keyword, params)
}

fn parse_usize(cur: &Cursor, line: usize, col: usize, text: &str, what: &str) -> Result<usize> {
    text.trim()
        .parse()
        .map_err(|_| cur.err(line, col, format!("{what}: expected an integer, got '{}'", text.trim())))
}

fn parse_f64(cur: &Cursor, line: usize, col: usize, text: &str, what: &str) -> Result<f64> {
    text.trim()
        .parse()
        .map_err(|_| cur.err(line, col, format!("{what}: expected a number, got '{}'", text.trim())))
}

pub fn parse_inp(text: &str, path: &str) -> Result<InputDeck> {
    let mut cur = Cursor {
        lines: text.lines().collect(),
        idx: 0,
        path: path.to_string(),
    };
    let mut deck = InputDeck::default();
    let mut step_line = 0usize;

    while let Some((line_no, line)) = cur.bump() {
        if !line.starts_with('*') {
            return Err(cur.err(line_no, 1, format!("expected a keyword card, got '{line}'")));
        }
        let (keyword, params) = split_keyword_line(line);
        match keyword.as_str() {
            "*NODE" => parse_node_block(&mut cur, &mut deck)?,
            "*USER ELEMENT" => {
                parse_user_element(&mut cur, &mut deck, line_no, &params)?
            }
            "*ELEMENT" => parse_element_block(&mut cur, &mut deck, line_no, &params)?,
            "*UEL PROPERTY" => parse_property(&mut cur, &mut deck, line_no, &params)?,
            "*BOUNDARY-TEMP" => parse_boundary_block(&mut cur, &mut deck)?,
            "*INITIAL-TEMP" => {
                if deck.initial.is_some() {
                    return Err(cur.err(line_no, 1, "duplicate *INITIAL-TEMP card"));
                }
                let Some((expr_line, expr)) = cur.bump() else {
                    return Err(cur.err(line_no, 1, "*INITIAL-TEMP needs an expression line"));
                };
                if expr.starts_with('*') {
                    return Err(cur.err(expr_line, 1, "*INITIAL-TEMP needs an expression line"));
                }
                deck.initial = Some(expr.trim().to_string());
            }
            "*STEP-STEADY" | "*STEP-TRANSIENT" => {
                if deck.step.is_some() {
                    return Err(cur.err(
                        line_no,
                        1,
                        format!("second step card (first at line {step_line}); a deck has exactly one"),
                    ));
                }
                step_line = line_no;
                if keyword == "*STEP-STEADY" {
                    deck.step = Some(StepCard::Steady);
                } else {
                    let mut dt = None;
                    let mut t_end = None;
                    for (k, v, col) in &params {
                        match k.as_str() {
                            "DT" => dt = Some(parse_f64(&cur, line_no, *col, v, "DT")?),
                            "TIME" => t_end = Some(parse_f64(&cur, line_no, *col, v, "TIME")?),
                            other => {
                                return Err(cur.err(
                                    line_no,
                                    *col,
                                    format!("unknown *STEP-TRANSIENT key '{other}'"),
                                ))
                            }
                        }
                    }
                    let dt = dt.ok_or_else(|| cur.err(line_no, 1, "*STEP-TRANSIENT needs DT="))?;
                    let t_end =
                        t_end.ok_or_else(|| cur.err(line_no, 1, "*STEP-TRANSIENT needs TIME="))?;
                    deck.step = Some(StepCard::Transient { dt, t_end });
                }
            }
            other => {
                return Err(cur.err(line_no, 1, format!("unknown card '{other}'")));
            }
        }
    }

    if deck.nodes.is_empty() {
        return Err(cur.err(cur.lines.len().max(1), 1, "no *NODE card"));
    }
    validate_deck(&cur, &deck)?;
    Ok(deck)
}

fn parse_node_block(cur: &mut Cursor, deck: &mut InputDeck) -> Result<()> {
    while let Some((line_no, line)) = cur.peek() {
        if line.starts_with('*') {
            break;
        }
        cur.bump();
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(cur.err(
                line_no,
                1,
                format!("node line needs 'id, x, y', got {} fields", fields.len()),
            ));
        }
        let id = parse_usize(cur, line_no, 1, fields[0], "node id")?;
        let x = parse_f64(cur, line_no, fields[0].len() + 2, fields[1], "x")?;
        let y = parse_f64(
            cur,
            line_no,
            fields[0].len() + fields[1].len() + 3,
            fields[2],
            "y",
        )?;
        if deck.nodes.iter().any(|n| n.id == id) {
            return Err(cur.err(line_no, 1, format!("duplicate node id {id}")));
        }
        deck.nodes.push(DeckNode { id, x, y });
    }
    Ok(())
}

fn parse_user_element(
    cur: &mut Cursor,
    deck: &mut InputDeck,
    line_no: usize,
    params: &[(String, String, usize)],
) -> Result<()> {
    let (mut nodes, mut type_name, mut properties, mut coordinates) = (None, None, None, None);
    for (k, v, col) in params {
        match k.as_str() {
            "NODES" => nodes = Some(parse_usize(cur, line_no, *col, v, "NODES")?),
            "TYPE" => type_name = Some(v.clone()),
            "PROPERTIES" => {
                properties = Some(parse_usize(cur, line_no, *col, v, "PROPERTIES")?)
            }
            "COORDINATES" => {
                coordinates = Some(parse_usize(cur, line_no, *col, v, "COORDINATES")?)
            }
            other => {
                return Err(cur.err(line_no, *col, format!("unknown *USER ELEMENT key '{other}'")))
            }
        }
    }
    let nodes = nodes.ok_or_else(|| cur.err(line_no, 1, "*USER ELEMENT needs NODES="))?;
    let type_name = type_name.ok_or_else(|| cur.err(line_no, 1, "*USER ELEMENT needs TYPE="))?;
    if nodes < 3 {
        return Err(cur.err(line_no, 1, format!("NODES={nodes}: a polygon needs at least 3")));
    }
    // The data line lists active degrees of freedom; this solver supports
    // exactly the single temperature DOF, spelled "11".
    let Some((dof_line, dof)) = cur.bump() else {
        return Err(cur.err(line_no, 1, "*USER ELEMENT needs an active-DOF line"));
    };
    if dof.trim() != "11" {
        return Err(cur.err(
            dof_line,
            1,
            format!("active-DOF line must be '11' (temperature), got '{}'", dof.trim()),
        ));
    }
    if deck.user_elements.iter().any(|u| u.type_name == type_name) {
        return Err(cur.err(line_no, 1, format!("duplicate *USER ELEMENT TYPE={type_name}")));
    }
    deck.user_elements.push(UserElementDecl {
        type_name,
        nodes,
        properties: properties.unwrap_or(0),
        coordinates: coordinates.unwrap_or(2),
    });
    Ok(())
}

fn parse_element_block(
    cur: &mut Cursor,
    deck: &mut InputDeck,
    line_no: usize,
    params: &[(String, String, usize)],
) -> Result<()> {
    let (mut type_name, mut elset) = (None, None);
    for (k, v, col) in params {
        match k.as_str() {
            "TYPE" => type_name = Some(v.clone()),
            "ELSET" => elset = Some(v.clone()),
            other => return Err(cur.err(line_no, *col, format!("unknown *ELEMENT key '{other}'"))),
        }
    }
    let type_name = type_name.ok_or_else(|| cur.err(line_no, 1, "*ELEMENT needs TYPE="))?;
    let elset = elset.ok_or_else(|| cur.err(line_no, 1, "*ELEMENT needs ELSET="))?;
    let decl = deck
        .user_elements
        .iter()
        .find(|u| u.type_name == type_name)
        .ok_or_else(|| {
            cur.err(line_no, 1, format!("TYPE={type_name} has no *USER ELEMENT declaration"))
        })?;
    let expected = decl.nodes;

    let mut elements = Vec::new();
    while let Some((el_line, line)) = cur.peek() {
        if line.starts_with('*') {
            break;
        }
        cur.bump();
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected + 1 {
            return Err(cur.err(
                el_line,
                1,
                format!(
                    "element of TYPE={type_name} needs id plus {expected} node ids, got {} fields",
                    fields.len()
                ),
            ));
        }
        let id = parse_usize(cur, el_line, 1, fields[0], "element id")?;
        let mut node_ids = Vec::with_capacity(expected);
        for f in &fields[1..] {
            node_ids.push(parse_usize(cur, el_line, 1, f, "node id")?);
        }
        elements.push(DeckElement {
            id,
            node_ids,
            line: el_line,
        });
    }
    deck.groups.push(ElementGroup {
        type_name,
        elset,
        elements,
    });
    Ok(())
}

fn parse_property(
    cur: &mut Cursor,
    deck: &mut InputDeck,
    line_no: usize,
    params: &[(String, String, usize)],
) -> Result<()> {
    let mut elset = None;
    for (k, v, col) in params {
        match k.as_str() {
            // "ELEST" appears as a misspelling of ELSET in published decks;
            // accept both.
            "ELSET" | "ELEST" => elset = Some(v.clone()),
            other => {
                return Err(cur.err(line_no, *col, format!("unknown *UEL PROPERTY key '{other}'")))
            }
        }
    }
    let elset = elset.ok_or_else(|| cur.err(line_no, 1, "*UEL PROPERTY needs ELSET="))?;
    let Some((data_line, line)) = cur.bump() else {
        return Err(cur.err(line_no, 1, "*UEL PROPERTY needs a data line"));
    };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 3 {
        return Err(cur.err(
            data_line,
            1,
            format!(
                "property line needs 'conductivity, density, specific heat', got {} fields",
                fields.len()
            ),
        ));
    }
    let conductivity = parse_f64(cur, data_line, 1, fields[0], "conductivity")?;
    let density = parse_f64(cur, data_line, 1, fields[1], "density")?;
    let specific_heat = parse_f64(cur, data_line, 1, fields[2], "specific heat")?;
    deck.properties.push(PropertyCard {
        elset,
        conductivity,
        density,
        specific_heat,
    });
    Ok(())
}

fn parse_boundary_block(cur: &mut Cursor, deck: &mut InputDeck) -> Result<()> {
    while let Some((line_no, line)) = cur.peek() {
        if line.starts_with('*') {
            break;
        }
        cur.bump();
        let Some((tag, expr)) = line.split_once(',') else {
            return Err(cur.err(line_no, 1, "boundary line needs 'tag, expression'"));
        };
        deck.boundaries.push(BoundaryCard {
            tag: tag.trim().to_string(),
            expression: expr.trim().to_string(),
            line: line_no,
        });
    }
    Ok(())
}

fn validate_deck(cur: &Cursor, deck: &InputDeck) -> Result<()> {
    for prop in &deck.properties {
        if !deck.groups.iter().any(|g| g.elset == prop.elset) {
            return Err(cur.err(
                1,
                1,
                format!("*UEL PROPERTY references undefined ELSET '{}'", prop.elset),
            ));
        }
    }
    let node_ids: std::collections::BTreeSet<usize> =
        deck.nodes.iter().map(|n| n.id).collect();
    for group in &deck.groups {
        for el in &group.elements {
            for nid in &el.node_ids {
                if !node_ids.contains(nid) {
                    return Err(cur.err(
                        el.line,
                        1,
                        format!("element {} references undefined node {nid}", el.id),
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Canonical text form. `parse_inp(write_deck(d))` reproduces `d` exactly:
/// floats are printed with 17 significant digits.
pub fn write_deck(deck: &InputDeck) -> String {
    let mut out = String::new();
    if !deck.nodes.is_empty() {
        out.push_str("*NODE\n");
        for n in &deck.nodes {
            let _ = writeln!(out, "{}, {:.16e}, {:.16e}", n.id, n.x, n.y);
        }
    }
    for u in &deck.user_elements {
        let _ = writeln!(
            out,
            "*USER ELEMENT, NODES={}, TYPE={}, PROPERTIES={}, COORDINATES={}",
            u.nodes, u.type_name, u.properties, u.coordinates
        );
        out.push_str("11\n");
    }
    for g in &deck.groups {
        let _ = writeln!(out, "*ELEMENT, TYPE={}, ELSET={}", g.type_name, g.elset);
        for el in &g.elements {
            let ids: Vec<String> = el.node_ids.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(out, "{}, {}", el.id, ids.join(", "));
        }
    }
    for p in &deck.properties {
        let _ = writeln!(out, "*UEL PROPERTY, ELSET={}", p.elset);
        let _ = writeln!(
            out,
            "{:.16e}, {:.16e}, {:.16e}",
            p.conductivity, p.density, p.specific_heat
        );
    }
    if !deck.boundaries.is_empty() {
        out.push_str("*BOUNDARY-TEMP\n");
        for b in &deck.boundaries {
            let _ = writeln!(out, "{}, {}", b.tag, b.expression);
        }
    }
    if let Some(init) = &deck.initial {
        out.push_str("*INITIAL-TEMP\n");
        let _ = writeln!(out, "{init}");
    }
    match deck.step {
        Some(StepCard::Steady) => out.push_str("*STEP-STEADY\n"),
        Some(StepCard::Transient { dt, t_end }) => {
            let _ = writeln!(out, "*STEP-TRANSIENT, DT={dt:.16e}, TIME={t_end:.16e}");
        }
        None => {}
    }
    out
}

/// Lowers a deck to a solvable case: dense node numbering, validated mesh
/// with geometric boundary tags, one material per property card, compiled
/// boundary and initial expressions.
pub fn deck_to_case(deck: &InputDeck, path: &str) -> Result<SolverCase> {
    let perr = |line: usize, message: String| Error::Parse {
        path: path.to_string(),
        line,
        col: 1,
        message,
    };

    let step = deck
        .step
        .ok_or_else(|| perr(1, "deck has no step card (*STEP-STEADY or *STEP-TRANSIENT)".into()))?;

    let mut id_map = BTreeMap::new();
    let mut nodes = Vec::with_capacity(deck.nodes.len());
    for (dense, dn) in deck.nodes.iter().enumerate() {
        id_map.insert(dn.id, dense);
        nodes.push(Node {
            id: dense,
            position: Point2D::new(dn.x, dn.y),
        });
    }

    let mut materials = Vec::new();
    let mut material_of_elset = BTreeMap::new();
    for prop in &deck.properties {
        let mat = Material::new(prop.conductivity, prop.density, prop.specific_heat)?;
        material_of_elset.insert(prop.elset.clone(), materials.len());
        materials.push(mat);
    }

    let mut cells = Vec::new();
    for group in &deck.groups {
        let material_id = *material_of_elset.get(&group.elset).ok_or_else(|| {
            perr(
                1,
                format!("element set '{}' has no *UEL PROPERTY card", group.elset),
            )
        })?;
        for el in &group.elements {
            let vertex_ids = el
                .node_ids
                .iter()
                .map(|nid| id_map.get(nid).copied().expect("validated by parse"))
                .collect();
            cells.push(PolygonCell {
                id: cells.len(),
                vertex_ids,
                material_id,
            });
        }
    }

    let mut mesh = Mesh {
        nodes,
        cells,
        edge_tags: BTreeMap::new(),
    };
    crate::geometry::validate_mesh(&mesh).into_result()?;
    let bbox = mesh
        .bounding_box()
        .ok_or_else(|| perr(1, "deck mesh has no nodes".into()))?;
    tag_boundary_edges(&mut mesh, bbox);

    let mut bcs = BTreeMap::new();
    for b in &deck.boundaries {
        let ast = Arc::new(parse_expr(&b.expression).map_err(|e| match e {
            Error::Expr { pos, message } => perr(
                b.line,
                format!("in expression '{}' at offset {pos}: {message}", b.expression),
            ),
            other => other,
        })?);
        let f: FieldFn = Arc::new(move |x, y, t| ast.eval(x, y, t));
        if bcs.insert(b.tag.clone(), BoundaryCondition::Dirichlet(f)).is_some() {
            return Err(perr(b.line, format!("duplicate boundary tag '{}'", b.tag)));
        }
    }

    let initial = match &deck.initial {
        Some(src) => Some(Arc::new(parse_expr(src).map_err(|e| match e {
            Error::Expr { pos, message } => {
                perr(1, format!("in *INITIAL-TEMP expression at offset {pos}: {message}"))
            }
            other => other,
        })?)),
        None => None,
    };

    Ok(SolverCase {
        mesh,
        materials,
        bcs,
        initial,
        step,
    })
}

/// Renders a generated mesh as a deck: one *USER ELEMENT declaration per
/// distinct vertex count (U3..U8, UQTn beyond), one *ELEMENT group per
/// declaration, one shared property card, and the given step (steady when
/// omitted, so the deck stays immediately solvable).
pub fn mesh_to_deck(mesh: &Mesh, material: &Material, step: Option<StepCard>) -> InputDeck {
    let mut deck = InputDeck {
        nodes: mesh
            .nodes
            .iter()
            .map(|n| DeckNode {
                id: n.id + 1,
                x: n.position.x,
                y: n.position.y,
            })
            .collect(),
        ..Default::default()
    };

    let mut counts: Vec<usize> = mesh.cells.iter().map(|c| c.vertex_ids.len()).collect();
    counts.sort_unstable();
    counts.dedup();
    for &n in &counts {
        let type_name = if n <= 8 {
            format!("U{n}")
        } else {
            format!("UQT{n}")
        };
        deck.user_elements.push(UserElementDecl {
            type_name: type_name.clone(),
            nodes: n,
            properties: 3,
            coordinates: 2,
        });
        let elements = mesh
            .cells
            .iter()
            .filter(|c| c.vertex_ids.len() == n)
            .map(|c| DeckElement {
                id: c.id + 1,
                node_ids: c.vertex_ids.iter().map(|v| v + 1).collect(),
                line: 0,
            })
            .collect();
        deck.groups.push(ElementGroup {
            type_name,
            elset: format!("E{n}"),
            elements,
        });
        deck.properties.push(PropertyCard {
            elset: format!("E{n}"),
            conductivity: material.conductivity,
            density: material.density,
            specific_heat: material.specific_heat,
        });
    }
    deck.step = Some(step.unwrap_or(StepCard::Steady));
    deck
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_structured_quad_mesh;

    /// The published five-node example deck, with a node block added so the
    /// connectivity resolves.
    const FIVE_NODE_DECK: &str = "\
*NODE
1, 0.0, 0.0
2, 1.0, 0.0
3, 2.0, 0.0
4, 2.0, 1.0
5, 0.0, 1.0
6, 0.0, 2.0
7, 0.5, 1.0
8, 1.5, 1.0
*USER ELEMENT, NODES=5, TYPE=U5, PROPERTIES=2, COORDINATES=2
11
*ELEMENT, TYPE=U5, ELSET=E5
3,2,3,4,8,7
*UEL PROPERTY, ELEST=E5
1.0,1.0,1.0
";

    #[test]
    fn five_node_deck_parses() {
        let deck = parse_inp(FIVE_NODE_DECK, "five.inp").unwrap();
        assert_eq!(deck.nodes.len(), 8);
        assert_eq!(deck.user_elements.len(), 1);
        let u = &deck.user_elements[0];
        assert_eq!((u.nodes, u.type_name.as_str(), u.properties), (5, "U5", 2));
        assert_eq!(deck.groups.len(), 1);
        let el = &deck.groups[0].elements[0];
        assert_eq!(el.id, 3);
        assert_eq!(el.node_ids, vec![2, 3, 4, 8, 7]);
        // The ELEST spelling maps to the same element set.
        let p = &deck.properties[0];
        assert_eq!(p.elset, "E5");
        assert_eq!(
            (p.conductivity, p.density, p.specific_heat),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn empty_file_reports_missing_nodes() {
        let err = parse_inp("", "empty.inp").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("no *NODE card"), "{msg}");
    }

    #[test]
    fn arity_mismatch_carries_line() {
        let text = "\
*NODE
1, 0.0, 0.0
2, 1.0, 0.0
3, 1.0, 1.0
4, 0.0, 1.0
*USER ELEMENT, NODES=5, TYPE=U5, PROPERTIES=2, COORDINATES=2
11
*ELEMENT, TYPE=U5, ELSET=E5
1,1,2,3,4
";
        match parse_inp(text, "bad.inp") {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 9);
                assert!(message.contains("5 node ids"), "{message}");
            }
            other => panic!("expected arity error, got {other:?}"),
        }
    }

    #[test]
    fn keywords_are_case_insensitive() {
        let text = FIVE_NODE_DECK
            .replace("*NODE", "*node")
            .replace("*USER ELEMENT", "*User  Element")
            .replace("*ELEMENT,", "*element,")
            .replace("*UEL PROPERTY", "*uel property")
            .replace("NODES=", "nodes=")
            .replace("TYPE=", "type=")
            .replace("ELSET=", "elset=");
        let deck = parse_inp(&text, "lc.inp").unwrap();
        assert_eq!(deck.groups[0].elements[0].node_ids, vec![2, 3, 4, 8, 7]);
    }

    #[test]
    fn comments_and_blanks_are_skipped() {
        let text = format!("** header comment\n\n{FIVE_NODE_DECK}\n** trailing\n");
        assert!(parse_inp(&text, "c.inp").is_ok());
    }

    #[test]
    fn wrong_dof_line_rejected() {
        let text = FIVE_NODE_DECK.replace("\n11\n", "\n12\n");
        match parse_inp(&text, "dof.inp") {
            Err(Error::Parse { message, line, .. }) => {
                assert!(message.contains("active-DOF"), "{message}");
                assert_eq!(line, 11);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undefined_elset_rejected() {
        let text = FIVE_NODE_DECK.replace("ELEST=E5", "ELEST=MISSING");
        match parse_inp(&text, "elset.inp") {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("MISSING"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_node_rejected() {
        let text = FIVE_NODE_DECK.replace("8, 1.5, 1.0", "7, 1.5, 1.0");
        match parse_inp(&text, "dup.inp") {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("duplicate node id 7"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undefined_node_reference_rejected() {
        let text = FIVE_NODE_DECK.replace("3,2,3,4,8,7", "3,2,3,4,9,7");
        match parse_inp(&text, "ref.inp") {
            Err(Error::Parse { message, line, .. }) => {
                assert!(message.contains("undefined node 9"), "{message}");
                assert_eq!(line, 13);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_step_cards_rejected() {
        let text = format!("{FIVE_NODE_DECK}*STEP-STEADY\n*STEP-STEADY\n");
        match parse_inp(&text, "steps.inp") {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("second step card"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transient_step_card_parses() {
        let text = format!("{FIVE_NODE_DECK}*STEP-TRANSIENT, DT=0.001, TIME=2.0\n");
        let deck = parse_inp(&text, "t.inp").unwrap();
        assert_eq!(
            deck.step,
            Some(StepCard::Transient {
                dt: 0.001,
                t_end: 2.0
            })
        );
    }

    #[test]
    fn roundtrip_preserves_deck() {
        let mesh = build_structured_quad_mesh(2.0, 1.0, 0.5).unwrap();
        let mat = Material::new(1.7, 2.0, 0.31).unwrap();
        let mut deck = mesh_to_deck(&mesh, &mat, Some(StepCard::Transient { dt: 0.05, t_end: 1.0 }));
        deck.boundaries.push(BoundaryCard {
            tag: "top".into(),
            expression: "100*sin(pi/10*x)".into(),
            line: 0,
        });
        deck.initial = Some("10*sin(x)*sin(y)".into());
        let text = write_deck(&deck);
        let mut reparsed = parse_inp(&text, "rt.inp").unwrap();
        // Line markers are positional metadata, not content.
        for g in &mut reparsed.groups {
            for el in &mut g.elements {
                el.line = 0;
            }
        }
        for b in &mut reparsed.boundaries {
            b.line = 0;
        }
        assert_eq!(deck, reparsed);
    }

    #[test]
    fn deck_to_case_builds_solvable_mesh() {
        let mesh = build_structured_quad_mesh(2.0, 1.0, 0.5).unwrap();
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        let mut deck = mesh_to_deck(&mesh, &mat, None);
        deck.boundaries.push(BoundaryCard {
            tag: "left".into(),
            expression: "0".into(),
            line: 0,
        });
        deck.boundaries.push(BoundaryCard {
            tag: "right".into(),
            expression: "1".into(),
            line: 0,
        });
        let case = deck_to_case(&deck, "case.inp").unwrap();
        assert_eq!(case.mesh.node_count(), mesh.node_count());
        assert_eq!(case.mesh.cell_count(), mesh.cell_count());
        assert_eq!(case.materials.len(), 1);
        assert_eq!(case.step, StepCard::Steady);
        let els = crate::element::compute_all_elements(&case.mesh, &case.materials, 2).unwrap();
        let t = crate::solver::solve_steady(&case.mesh, &els, &case.bcs).unwrap();
        for node in &case.mesh.nodes {
            assert!((t[node.id] - node.position.x / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn deck_without_step_fails_case_lowering() {
        let mesh = build_structured_quad_mesh(1.0, 1.0, 1.0).unwrap();
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        let mut deck = mesh_to_deck(&mesh, &mat, None);
        deck.step = None;
        match deck_to_case(&deck, "nostep.inp") {
            Err(Error::Parse { message, .. }) => {
                assert!(message.contains("no step card"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_expression_reports_offset() {
        let mesh = build_structured_quad_mesh(1.0, 1.0, 1.0).unwrap();
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        let mut deck = mesh_to_deck(&mesh, &mat, None);
        deck.boundaries.push(BoundaryCard {
            tag: "left".into(),
            expression: "sin(q)".into(),
            line: 42,
        });
        match deck_to_case(&deck, "expr.inp") {
            Err(Error::Parse { message, line, .. }) => {
                assert_eq!(line, 42);
                assert!(message.contains("offset 4"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn quadtree_mixed_cells_roundtrip() {
        let domain = crate::geometry::Rect::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let feature =
            crate::geometry::RefineFeature::Point(crate::geometry::Point2D::new(0.2, 0.2));
        let mesh = crate::geometry::build_quadtree_mesh(domain, &[feature], 3, 1).unwrap();
        let mat = Material::new(1.0, 1.0, 1.0).unwrap();
        let deck = mesh_to_deck(&mesh, &mat, None);
        assert!(deck.user_elements.len() > 1, "mixed vertex counts expected");
        let case = deck_to_case(&deck, "qt.inp").unwrap();
        assert_eq!(case.mesh.cell_count(), mesh.cell_count());
        // Same polygons, possibly renumbered cells: compare vertex multisets.
        let mut a: Vec<Vec<usize>> =
            mesh.cells.iter().map(|c| c.vertex_ids.clone()).collect();
        let mut b: Vec<Vec<usize>> =
            case.mesh.cells.iter().map(|c| c.vertex_ids.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }
}
