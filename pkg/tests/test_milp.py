import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from branchlab.milp import (
    GeneratorConfig,
    MilpInstance,
    ParseError,
    evaluate_solution,
    generate,
    parse_instance,
    parse_mps,
    parse_native,
    serialize_native,
)
from branchlab.simplex import LpStatus, solve_relaxation

COVERING_DOC = """
milp cover min
var x1 0 1 int
var x2 0 1 int
obj
  1 x1
  1 x2
row c1 >= 1
  1 x1
  1 x2
end
"""


def test_parse_smallest_covering_instance():
    inst = parse_native(COVERING_DOC)
    assert inst.n == 2 and inst.m == 1 and inst.p == 2
    # the >= row lands in <= form with everything negated
    assert inst.b.tolist() == [-1.0]
    assert inst.a_vals.tolist() == [-1.0, -1.0]
    assert inst.c.tolist() == [1.0, 1.0]


def test_parse_undeclared_variable_errors_with_line():
    doc = COVERING_DOC.replace("  1 x2\nrow", "  1 x5\nrow")
    with pytest.raises(ParseError, match="x5"):
        parse_native(doc)
    try:
        parse_native(doc)
    except ParseError as exc:
        assert exc.line is not None


def test_parse_duplicate_variable_errors():
    doc = COVERING_DOC.replace("var x2 0 1 int", "var x1 0 1 int")
    with pytest.raises(ParseError, match="duplicate variable"):
        parse_native(doc)


def test_parse_bad_bound_pair_errors():
    doc = COVERING_DOC.replace("var x2 0 1 int", "var x2 2 1 int")
    with pytest.raises(ParseError, match="lb > ub"):
        parse_native(doc)


def test_parse_syntax_error_carries_line_number():
    with pytest.raises(ParseError, match="line 2"):
        parse_native("milp t min\nwhat is this\nend\n")


def test_equality_row_becomes_le_pair():
    doc = COVERING_DOC.replace("row c1 >= 1", "row c1 = 1")
    inst = parse_native(doc)
    assert inst.m == 2
    assert inst.b.tolist() == [1.0, -1.0]


def test_max_header_negates_objective():
    doc = COVERING_DOC.replace("milp cover min", "milp cover max")
    inst = parse_native(doc)
    assert inst.c.tolist() == [-1.0, -1.0]
    assert inst.meta["negated_from_max"]


@pytest.mark.parametrize("family", ["set_cover", "multiknapsack",
                                    "bin_pack_apportion"])
def test_roundtrip_over_generated_instances(family):
    for seed in range(34):
        cfg = GeneratorConfig(family, rows=5, cols=14, density=0.4, seed=seed)
        inst = generate(cfg)
        again = parse_native(serialize_native(inst))
        assert again == inst


def test_serialization_idempotent():
    inst = generate(GeneratorConfig("set_cover", 5, 10, 0.4, seed=1))
    once = serialize_native(inst)
    assert serialize_native(parse_native(once)) == once


def test_generator_determinism():
    cfg = GeneratorConfig("set_cover", rows=5, cols=8, density=0.4, seed=7)
    a, b = generate(cfg), generate(cfg)
    assert a == b
    assert serialize_native(a) == serialize_native(b)


def test_multiknapsack_full_density_rows():
    inst = generate(GeneratorConfig("multiknapsack", 3, 10, 1.0, seed=1))
    counts = np.bincount(inst.a_rows, minlength=3)
    assert counts.tolist() == [10, 10, 10]


def test_generated_set_cover_lp_feasible_bounded():
    inst = generate(GeneratorConfig("set_cover", 50, 100, 0.1, seed=3))
    assert solve_relaxation(inst).status is LpStatus.OPTIMAL


def test_bin_pack_apportion_mixes_types():
    inst = generate(GeneratorConfig("bin_pack_apportion", 4, 20, 0.5, seed=2))
    assert 0 < inst.p < inst.n


def test_generator_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig("set_cover", rows=2, cols=100, density=0.1, seed=0)
    with pytest.raises(ValueError):
        GeneratorConfig("nope", rows=5, cols=5, density=0.5, seed=0)
    with pytest.raises(ValueError):
        GeneratorConfig("set_cover", rows=5, cols=5, density=0.0, seed=0)


def test_evaluate_origin_feasible():
    inst = generate(GeneratorConfig("multiknapsack", 3, 8, 0.6, seed=5))
    sol = evaluate_solution(inst, np.zeros(8))
    assert sol.feasible and sol.objective == 0.0 and sol.max_violation == 0.0


def test_evaluate_covering_example():
    inst = parse_native(COVERING_DOC)
    sol = evaluate_solution(inst, [1.0, 0.0])
    assert sol.feasible and sol.objective == 1.0
    bad = evaluate_solution(inst, [0.0, 0.0])
    assert not bad.feasible and bad.max_violation == 1.0


def test_evaluate_against_dense_checker():
    rng = np.random.default_rng(4)
    inst = generate(GeneratorConfig("set_cover", 8, 16, 0.3, seed=9))
    A = inst.dense_matrix()
    for _ in range(100):
        x = rng.integers(0, 2, inst.n).astype(float)
        sol = evaluate_solution(inst, x)
        expect = bool(np.all(A @ x <= inst.b + 1e-6))
        assert sol.feasible == expect


def test_evaluate_rejects_bad_input():
    inst = parse_native(COVERING_DOC)
    with pytest.raises(ValueError):
        evaluate_solution(inst, [1.0])
    with pytest.raises(ValueError):
        evaluate_solution(inst, [math.nan, 0.0])


def test_objective_summed_left_to_right():
    # ordering matters in floating point; the contract is index order
    c = [1e16, 1.0, -1e16]
    inst = MilpInstance("ord", c=c, a_rows=[], a_cols=[], a_vals=[], b=[],
                        lower=[0, 0, 0], upper=[1, 1, 1],
                        integrality=[False] * 3)
    sol = evaluate_solution(inst, [1.0, 1.0, 1.0])
    assert sol.objective == ((1e16 + 1.0) + -1e16)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_roundtrip_property(seed):
    cfg = GeneratorConfig("multiknapsack", rows=3, cols=7, density=0.7,
                          seed=seed)
    inst = generate(cfg)
    assert parse_native(serialize_native(inst)) == inst


MPS_DOC = """\
NAME          smallmip
ROWS
 N  COST
 L  CAP
 G  REQ
 E  BAL
COLUMNS
    MARKER                 'MARKER'                 'INTORG'
    XA        COST         1.0   CAP          2.0
    XA        REQ          1.0
    MARKER                 'MARKER'                 'INTEND'
    XB        COST         3.0   CAP          1.0
    XB        REQ          1.0   BAL          1.0
RHS
    RHS       CAP          4.0   REQ          1.0
    RHS       BAL          0.5
BOUNDS
 UP BND       XA           10.0
ENDATA
"""


def test_mps_parse_normalizes_rows():
    inst = parse_mps(MPS_DOC)
    assert inst.n == 2
    # CAP stays, REQ flips, BAL splits in two
    assert inst.m == 4
    assert inst.integrality.tolist() == [True, False]
    assert inst.c.tolist() == [1.0, 3.0]
    assert inst.lower.tolist() == [0.0, 0.0]
    assert inst.upper[0] == 10.0 and math.isinf(inst.upper[1])
    assert inst.b.tolist() == [4.0, -1.0, 0.5, -0.5]


def test_mps_ranges_rejected():
    doc = MPS_DOC.replace("BOUNDS", "RANGES\n    R1 CAP 1.0\nBOUNDS")
    with pytest.raises(ParseError, match="RANGES"):
        parse_mps(doc)


def test_mps_unknown_row_rejected():
    doc = MPS_DOC.replace("    XB        REQ          1.0   BAL          1.0",
                          "    XB        NOPE         1.0")
    with pytest.raises(ParseError, match="NOPE"):
        parse_mps(doc)


def test_mps_bv_bound():
    doc = MPS_DOC.replace(" UP BND       XA           10.0",
                          " BV BND       XB")
    inst = parse_mps(doc)
    assert inst.integrality.tolist() == [True, True]
    assert inst.lower[1] == 0.0 and inst.upper[1] == 1.0


def test_parse_instance_dispatches():
    assert parse_instance(MPS_DOC).n == 2
    assert parse_instance(COVERING_DOC).n == 2
    with pytest.raises(ParseError):
        parse_instance("")
