import random

from sqreason import kb as K
from sqreason import interp as I
from sqreason import queries as Q


KB = K.parse_kb("transitive r; role s; concept A; concept B; individual a; "
                "individual c; tbox: A [= A; abox: A(a)")


def mk(domain, concepts=None, roles=None, individuals=None):
    return I.Interpretation(domain, concepts, roles, individuals)


def test_parse_kinds():
    q = Q.parse_query("exists x . r(x,x)", KB)
    assert Q.query_kind(q) == "peq"
    q2 = Q.parse_query("exists x . (r ; r)(a,x)", KB)
    assert Q.query_kind(q2) == "prpq"
    q3 = Q.parse_query("iq (A and B)(a)", KB)
    assert Q.query_kind(q3) == "iq"
    q4 = Q.parse_query("exists x,y . ((A(x) and r(x,y)) or B(y))", KB)
    assert Q.query_kind(q4) == "peq"
    assert len(Q.disjuncts(q4.formula)) == 2


def test_self_loop_via_closure():
    q = Q.parse_query("exists x . r(x,x)", KB)
    i = mk([0, 1], roles={"r": {(0, 1), (1, 0)}}, individuals={"a": 0})
    assert Q.match_query(i, q, closed=False) is None
    got = Q.match_query(i, q, closed=True, kb=KB)
    assert got == {"?x": 0}


def test_composition_on_chain():
    q = Q.parse_query("exists x . (r ; r)(a,x)", KB)
    i = mk([0, 1, 2], roles={"r": {(0, 1), (1, 2)}}, individuals={"a": 0})
    got = Q.match_query(i, q, closed=False)
    assert got == {"?x": 2, "a": 0}


def test_empty_concept_no_match():
    q = Q.parse_query("exists x . A(x)", KB)
    i = mk([0, 1], individuals={"a": 0})
    assert Q.match_query(i, q) is None


def test_star_and_union_and_test():
    kb = KB
    q = Q.parse_query("exists x . ((s | r)* ; A?)(a,x)", kb)
    i = mk([0, 1, 2], concepts={"A": {2}},
           roles={"r": {(0, 1)}, "s": {(1, 2)}}, individuals={"a": 0})
    got = Q.match_query(i, q)
    assert got == {"?x": 2, "a": 0}
    i2 = mk([0, 1, 2], concepts={"A": {2}}, roles={"r": {(0, 1)}},
            individuals={"a": 0})
    assert Q.match_query(i2, q) is None


def test_inverse_step():
    q = Q.parse_query("exists x . inv(s)(a,x)", KB)
    i = mk([0, 1], roles={"s": {(1, 0)}}, individuals={"a": 0})
    assert Q.match_query(i, q) == {"?x": 1, "a": 0}


def test_iq_match():
    q = Q.parse_query("iq A(a)", KB)
    i = mk([0], concepts={"A": {0}}, individuals={"a": 0})
    assert Q.match_query(i, q) == {"a": 0}
    q2 = Q.parse_query("iq (some r.A)(a)", KB)
    chain = mk([0, 1], concepts={"A": {1}}, roles={"r": {(0, 1)}},
               individuals={"a": 0})
    assert Q.match_query(chain, q2) == {"a": 0}


def test_query_individual_absent():
    q = Q.parse_query("exists x . r(c,x)", KB)
    i = mk([0], roles={"r": {(0, 0)}}, individuals={"a": 0})
    assert Q.match_query(i, q) is None


def test_closed_equals_match_on_closure():
    rng = random.Random(11)
    queries = [
        Q.parse_query("exists x . r(x,x)", KB),
        Q.parse_query("exists x,y . (r(x,y) and A(y))", KB),
        Q.parse_query("exists x . (r* ; s)(a,x)", KB),
        Q.parse_query("exists x,y . ((r ; s) | s)(x,y)", KB),
    ]
    for _ in range(40):
        n = rng.randrange(1, 5)
        i = mk(range(n),
               concepts={"A": {d for d in range(n) if rng.random() < 0.4}},
               roles={r: {(x, y) for x in range(n) for y in range(n)
                          if rng.random() < 0.3} for r in ("r", "s")},
               individuals={"a": 0})
        closed = I.transitive_closure(i, ["r"])
        for q in queries:
            lhs = Q.match_query(i, q, closed=True, kb=KB) is not None
            rhs = Q.match_query(closed, q, closed=False) is not None
            assert lhs == rhs


def test_match_is_deterministic_least():
    q = Q.parse_query("exists x . A(x)", KB)
    i = mk([0, 1, 2], concepts={"A": {1, 2}}, individuals={"a": 0})
    assert Q.match_query(i, q) == {"?x": 1}
