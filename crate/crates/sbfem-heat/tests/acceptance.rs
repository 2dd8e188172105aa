//! End-to-end acceptance suite. Each test covers one shipping requirement,
//! prints exactly one summary line of the form
//! `ACCEPTANCE <name>: PASS|FAIL - <detail>`, and then asserts. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines for
//! passing tests too.

mod support;

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sbfem_heat::element::{compute_all_elements, Material};
use sbfem_heat::geometry::{
    build_quadtree_mesh, build_structured_quad_mesh, build_voronoi_polygon_mesh, Point2D, Rect,
    RefineFeature,
};
use sbfem_heat::io::{deck_to_case, mesh_to_deck, parse_inp, write_deck, BoundaryCard, StepCard};
use sbfem_heat::verify::benchmarks::{
    quadtree_vs_fine_difference, rate_in_band, solve_transient_plate, steady_plate_quad_study,
    steady_plate_quadtree_mesh, steady_plate_voronoi_study, transient_plate_study,
    QUADTREE_MAX_DEPTH, QUADTREE_MIN_DEPTH, RATE_BAND, STEADY_MESH_SIZES, TRANSIENT_DIVISIONS,
    TRANSIENT_DT, TRANSIENT_EVAL_TIMES, TRANSIENT_PROBE_DIVISIONS, TRANSIENT_T_END,
};
use sbfem_heat::verify::ConvergenceStudy;

use support::{
    check_all_cells, check_cell, check_dissipation, check_patch, lyapunov_mass, mesh_from_polygon,
    perturbed_polygon, reference_coefficients, regular_polygon, rel_frobenius, riccati_stiffness,
    ORACLE_REL_TOL,
};

/// Steady benchmarks must finish within this wall-clock budget.
const STEADY_TIME_BUDGET: f64 = 30.0;
/// Transient benchmarks must finish within this wall-clock budget.
const TRANSIENT_TIME_BUDGET: f64 = 300.0;
/// Reference element solves must finish within this wall-clock budget.
const REFERENCE_TIME_BUDGET: f64 = 1.0;
/// Voronoi errors may exceed quad errors at matched mesh size by this factor.
const VORONOI_ERROR_FACTOR: f64 = 1.25;
/// Probe history must track the separable decay solution this closely.
const PROBE_REL_TOL: f64 = 0.01;
/// Quadtree and fine structured solutions must agree this closely in L2.
const QUADTREE_MATCH_TOL: f64 = 0.01;
/// Mutation fuzz iteration count.
const FUZZ_ITERATIONS: usize = 10_000;

fn report(name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {name}: {verdict} - {detail}");
    assert!(pass, "{name}: {detail}");
}

fn fitted_rate(study: &ConvergenceStudy) -> f64 {
    study.fit.as_ref().map_or(f64::NAN, |f| f.slope)
}

#[test]
fn steady_quad_convergence_is_second_order() {
    let start = Instant::now();
    let study = steady_plate_quad_study(&STEADY_MESH_SIZES).expect("quad study");
    let elapsed = start.elapsed().as_secs_f64();

    let rate = fitted_rate(&study);
    let errors: Vec<f64> = study.records.iter().map(|r| r.error).collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    let pass = rate_in_band(rate) && monotone && elapsed < STEADY_TIME_BUDGET;

    report(
        "steady quad convergence",
        pass,
        &format!(
            "rate {rate:.4} (band {:.1}..{:.1}), errors {:.3e} -> {:.3e} {}, {elapsed:.1} s (budget {STEADY_TIME_BUDGET:.0} s)",
            RATE_BAND.0,
            RATE_BAND.1,
            errors.first().unwrap(),
            errors.last().unwrap(),
            if monotone { "monotone" } else { "NOT monotone" },
        ),
    );
}

#[test]
fn steady_voronoi_convergence_matches_quad_accuracy() {
    let start = Instant::now();
    let quad = steady_plate_quad_study(&STEADY_MESH_SIZES).expect("quad study");
    let voronoi = steady_plate_voronoi_study(&STEADY_MESH_SIZES, 0).expect("voronoi study");
    let elapsed = start.elapsed().as_secs_f64();

    let rate = fitted_rate(&voronoi);
    let mut worst_ratio = 0.0_f64;
    for (q, v) in quad.records.iter().zip(&voronoi.records) {
        worst_ratio = worst_ratio.max(v.error / q.error);
    }
    let pass =
        rate_in_band(rate) && worst_ratio <= VORONOI_ERROR_FACTOR && elapsed < STEADY_TIME_BUDGET;

    report(
        "steady Voronoi convergence",
        pass,
        &format!(
            "rate {rate:.4} (band {:.1}..{:.1}), worst error ratio vs quad {worst_ratio:.3} (cap {VORONOI_ERROR_FACTOR}), {elapsed:.1} s (budget {STEADY_TIME_BUDGET:.0} s)",
            RATE_BAND.0, RATE_BAND.1,
        ),
    );
}

#[test]
fn transient_convergence_and_probe_accuracy() {
    let start = Instant::now();
    let studies = transient_plate_study(
        &TRANSIENT_DIVISIONS,
        TRANSIENT_DT,
        TRANSIENT_T_END,
        &TRANSIENT_EVAL_TIMES,
    )
    .expect("transient study");

    let mut rates = Vec::new();
    let mut rates_ok = true;
    for (t, study) in &studies {
        let rate = fitted_rate(study);
        rates_ok &= rate_in_band(rate);
        rates.push(format!("t={t}: {rate:.3}"));
    }

    let run = solve_transient_plate(TRANSIENT_PROBE_DIVISIONS, TRANSIENT_DT, TRANSIENT_T_END, 1)
        .expect("probe run");
    let probe = run
        .probe_history(Point2D::new(PI / 2.0, PI / 2.0))
        .expect("probe history");
    let mut worst_rel = 0.0_f64;
    for &(t, value) in &probe {
        let exact = 10.0 * (-2.0 * t).exp();
        worst_rel = worst_rel.max(((value - exact) / exact).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = rates_ok && worst_rel < PROBE_REL_TOL && elapsed < TRANSIENT_TIME_BUDGET;

    report(
        "transient convergence and probe",
        pass,
        &format!(
            "rates [{}] (band {:.1}..{:.1}), probe max relative error {:.3e} over {} outputs (tol {PROBE_REL_TOL}), {elapsed:.1} s (budget {TRANSIENT_TIME_BUDGET:.0} s)",
            rates.join(", "),
            RATE_BAND.0,
            RATE_BAND.1,
            worst_rel,
            probe.len(),
        ),
    );
}

#[test]
fn element_matrices_match_independent_references() {
    let start = Instant::now();
    let material = Material::new(1.0, 1.0, 1.0).unwrap();
    let mut worst = 0.0_f64;

    let square = vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    for points in [square, regular_polygon(5, 1.0)] {
        let mesh = mesh_from_polygon(&points);
        let elements = compute_all_elements(&mesh, &[material], 2).expect("element");
        let [e0, e1, e2, m0] = reference_coefficients(&points, 1.0, 1.0);
        let k_ref = riccati_stiffness(&e0, &e1, &e2);
        let m_ref = lyapunov_mass(&e0, &e1, &m0, &k_ref);
        worst = worst.max(rel_frobenius(&elements[0].matrices.k, &k_ref));
        worst = worst.max(rel_frobenius(&elements[0].matrices.m, &m_ref));
    }

    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst <= ORACLE_REL_TOL && elapsed < REFERENCE_TIME_BUDGET;

    report(
        "element reference equivalence",
        pass,
        &format!(
            "unit square and regular pentagon within {worst:.3e} relative Frobenius (tol {ORACLE_REL_TOL:.0e}), {elapsed:.2} s (budget {REFERENCE_TIME_BUDGET:.0} s)"
        ),
    );
}

#[test]
fn invariants_hold_across_mesh_families() {
    let material = Material::new(1.7, 2.0, 1.3).unwrap();
    let mut cells = 0;
    let mut failures: Vec<String> = Vec::new();

    let quad = build_structured_quad_mesh(2.0, 1.0, 0.25).expect("quad mesh");
    let voronoi = build_voronoi_polygon_mesh(
        Rect::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        24,
        3,
        7,
    )
    .expect("voronoi mesh");
    let quadtree = build_quadtree_mesh(
        Rect::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        &[RefineFeature::Point(Point2D::new(0.7, 0.8))],
        4,
        2,
    )
    .expect("quadtree mesh");

    for (label, mesh) in [("quad", &quad), ("voronoi", &voronoi), ("quadtree", &quadtree)] {
        match check_all_cells(mesh, material) {
            Ok(elements) => cells += elements.len(),
            Err(e) => failures.push(format!("{label} cells: {e}")),
        }
        if let Err(e) = check_patch(mesh, material, (3.0, -2.0, 1.5)) {
            failures.push(format!("{label} patch: {e}"));
        }
        if let Err(e) = check_dissipation(mesh, material, 0.01, 6, (2.0, 1.0)) {
            failures.push(format!("{label} dissipation: {e}"));
        }
    }

    let polygon_material = Material::new(2.1, 0.8, 1.9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut polygons = 0;
    for i in 0..12 {
        let sides = 3 + (i % 7);
        let points = perturbed_polygon(sides, &mut rng);
        let mesh = mesh_from_polygon(&points);
        match compute_all_elements(&mesh, &[polygon_material], 2) {
            Ok(elements) => {
                polygons += 1;
                cells += 1;
                if let Err(e) = check_cell(&elements[0], &mesh) {
                    failures.push(format!("perturbed polygon {i}: {e}"));
                }
            }
            Err(e) => failures.push(format!("perturbed polygon {i} build: {e}")),
        }
    }

    let pass = failures.is_empty();
    report(
        "invariant sweep",
        pass,
        &if pass {
            format!(
                "quad, Voronoi, and quadtree families plus {polygons} perturbed polygons: {cells} cells checked, all invariants hold"
            )
        } else {
            failures.join("; ")
        },
    );
}

#[test]
fn quadtree_solution_matches_fine_structured_reference() {
    let mesh = steady_plate_quadtree_mesh(QUADTREE_MIN_DEPTH, QUADTREE_MAX_DEPTH)
        .expect("quadtree mesh");
    let hanging = mesh.cells.iter().filter(|c| c.vertex_ids.len() > 4).count();

    let diff = quadtree_vs_fine_difference(QUADTREE_MIN_DEPTH, QUADTREE_MAX_DEPTH, 0.125)
        .expect("quadtree comparison");
    let pass = diff < QUADTREE_MATCH_TOL && hanging > 0;

    report(
        "quadtree vs fine reference",
        pass,
        &format!(
            "relative L2 difference {diff:.3e} (tol {QUADTREE_MATCH_TOL}), {hanging} cells carry hanging nodes of {} total",
            mesh.cell_count(),
        ),
    );
}

/// A small mixed mesh written in the deck dialect: one pentagon element with
/// id 3 over nodes 2, 3, 4, 8, 7 and unit conductivity, density, and
/// specific heat.
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

/// Bytes favored by the mutator: structural characters of the dialect plus
/// digits, so mutations often stay near-parseable instead of turning into
/// noise the tokenizer rejects on the first line.
const MUTATION_ALPHABET: &[u8] = b"*,=.-+0123456789eExX \n\t";

const MUTATION_TOKENS: [&str; 16] = [
    "*NODE",
    "*ELEMENT",
    "*USER ELEMENT",
    "*UEL PROPERTY",
    "*BOUNDARY-TEMP",
    "*INITIAL-TEMP",
    "*STEP-STEADY",
    "*STEP-TRANSIENT",
    "NODES=",
    "TYPE=U",
    "ELSET=",
    "DT=",
    "TIME=",
    ",,",
    "-1e309",
    "18446744073709551616",
];

fn mutate(bytes: &mut Vec<u8>, rng: &mut ChaCha8Rng) {
    if bytes.is_empty() {
        bytes.extend_from_slice(b"*NODE");
        return;
    }
    match rng.gen_range(0..6) {
        0 => {
            let i = rng.gen_range(0..bytes.len());
            bytes[i] = MUTATION_ALPHABET[rng.gen_range(0..MUTATION_ALPHABET.len())];
        }
        1 => {
            let start = rng.gen_range(0..bytes.len());
            let len = rng.gen_range(1..=16.min(bytes.len() - start));
            bytes.drain(start..start + len);
        }
        2 => {
            let start = rng.gen_range(0..bytes.len());
            let len = rng.gen_range(1..=32.min(bytes.len() - start));
            let span: Vec<u8> = bytes[start..start + len].to_vec();
            let at = rng.gen_range(0..=bytes.len());
            bytes.splice(at..at, span);
        }
        3 => {
            let token = MUTATION_TOKENS[rng.gen_range(0..MUTATION_TOKENS.len())];
            let at = rng.gen_range(0..=bytes.len());
            bytes.splice(at..at, token.bytes());
        }
        4 => {
            let at = rng.gen_range(0..bytes.len());
            bytes.truncate(at);
        }
        _ => {
            let i = rng.gen_range(0..bytes.len());
            let j = rng.gen_range(0..bytes.len());
            bytes.swap(i, j);
        }
    }
}

#[test]
fn example_deck_parses_exactly_and_fuzzing_never_crashes() {
    let deck = parse_inp(FIVE_NODE_DECK, "example.inp").expect("example deck parses");
    let element = &deck.groups[0].elements[0];
    let props = &deck.properties[0];
    let exact = element.id == 3
        && element.node_ids == vec![2, 3, 4, 8, 7]
        && (props.conductivity, props.density, props.specific_heat) == (1.0, 1.0, 1.0);

    // Seed corpus: the pentagon example, a generated steady deck with a
    // boundary expression, and a generated transient deck with an initial
    // field. Every fuzz case mutates a fresh copy of one of them.
    let material = Material::new(1.0, 1.0, 1.0).unwrap();
    let quad = build_structured_quad_mesh(2.0, 1.0, 0.5).expect("seed mesh");
    let mut steady_deck = mesh_to_deck(&quad, &material, None);
    steady_deck.boundaries.push(BoundaryCard {
        tag: "top".into(),
        expression: "100*sin(pi*x/10)".into(),
        line: 0,
    });
    let mut transient_deck = mesh_to_deck(
        &quad,
        &material,
        Some(StepCard::Transient { dt: 0.1, t_end: 1.0 }),
    );
    transient_deck.initial = Some("10*sin(x)*sin(y)".into());
    let corpus = [
        FIVE_NODE_DECK.to_string(),
        write_deck(&steady_deck),
        write_deck(&transient_deck),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let mut parsed_ok = 0usize;
    for _ in 0..FUZZ_ITERATIONS {
        let mut bytes = corpus[rng.gen_range(0..corpus.len())].clone().into_bytes();
        for _ in 0..rng.gen_range(1..=4) {
            mutate(&mut bytes, &mut rng);
        }
        let text = String::from_utf8_lossy(&bytes);
        // Any panic below aborts the test; reaching the end of the loop is
        // the zero-crash claim.
        if let Ok(deck) = parse_inp(&text, "fuzz.inp") {
            parsed_ok += 1;
            let _ = write_deck(&deck);
            let _ = deck_to_case(&deck, "fuzz.inp");
        }
    }

    report(
        "deck parsing and fuzz",
        exact,
        &format!(
            "example deck yields element 3 over nodes 2,3,4,8,7 with properties 1,1,1; {FUZZ_ITERATIONS} mutated decks parsed without a crash ({parsed_ok} still valid)"
        ),
    );
}
