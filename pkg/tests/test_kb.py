import pytest

from sqreason import kb as K


GAP_KB = """
transitive r
concept A
individual a
tbox:
top [= some r.A
abox:
A(a)
"""


def test_parse_single_line_with_semicolons():
    kb = K.parse_kb("transitive r; concept A; individual a; "
                    "tbox: A [= some r.A; abox: A(a)")
    assert len(kb.tbox) == 1
    assert len(kb.abox) == 1
    assert kb.dialect == K.SQ
    assert kb.role_kinds == {"r": True}


def test_parse_multiline():
    kb = K.parse_kb(GAP_KB)
    assert kb.tbox[0] == K.CI(K.TOP, K.Exists(K.Role("r", False, True),
                                              K.Name("A")))
    assert kb.abox == (K.ConceptAssertion("A", "a"),)


def test_mixed_dialect_rejected():
    text = """
    transitive r
    role s
    individual a
    tbox:
    {a} [= some inv(s).{a}
    abox:
    s(a,a)
    """
    with pytest.raises(K.DialectError):
        K.parse_kb(text)


def test_atmost_over_inverse_transitive_rejected():
    text = """
    transitive t
    individual a
    tbox:
    A [= atmost 2 inv(t).B
    abox:
    A(a)
    """
    with pytest.raises(K.DialectError):
        K.parse_kb(text)


def test_dialect_inference():
    soq = K.parse_kb("role s; individual a; tbox: {a} [= A; abox: A(a)")
    assert soq.dialect == K.SOQ
    siq = K.parse_kb("role s; individual a; tbox: A [= some inv(s).B; "
                     "abox: A(a)")
    assert siq.dialect == K.SIQ
    assert siq.nominals() == frozenset()
    assert soq.nominals() == frozenset({"a"})


def test_empty_abox_rejected():
    with pytest.raises(K.KbSyntaxError):
        K.parse_kb("role s; tbox: A [= B; abox:")


def test_syntax_error_position():
    with pytest.raises(K.KbSyntaxError) as e:
        K.parse_kb("role s\ntbox:\nA [= @\nabox:\nA(a)")
    assert "line 3" in str(e.value)


def test_undeclared_role_rejected():
    with pytest.raises(K.KbSyntaxError):
        K.parse_kb("concept A; individual a; tbox: A [= some r.A; abox: A(a)")


def _normal_form_ok(ci):
    lhs, rhs = ci.lhs, ci.rhs
    if isinstance(lhs, K.And) and isinstance(rhs, K.Or):
        return (all(K.is_atom(a) for a in lhs.args)
                and all(K.is_atom(b) for b in rhs.args))
    if not K.is_atom(lhs):
        return False
    if isinstance(rhs, (K.Exists, K.ForAll)):
        return (rhs.role.inverted and rhs.role.transitive
                and K.is_atom(rhs.arg))
    if isinstance(rhs, (K.AtMost, K.AtLeast)):
        r = rhs.role
        if r.inverted and r.transitive:
            return False
        return K.is_atom(rhs.arg)
    return False


def test_normalize_exists_becomes_atleast():
    kb = K.parse_kb("role r; concept A; concept B; individual a; "
                    "tbox: A [= some r.B; abox: A(a)")
    nkb = K.normalize(kb)
    assert any(ci == K.CI(K.Name("A"),
                          K.AtLeast(1, K.Role("r"), K.Name("B")))
               for ci in nkb.tbox)
    assert all(_normal_form_ok(ci) for ci in nkb.tbox)


def test_normalize_atmost_triple():
    kb = K.parse_kb("role r; concept A; concept B; individual a; "
                    "tbox: A [= atmost 1 r.B; abox: A(a)")
    nkb = K.normalize(kb)
    key = K.Restriction("atmost", 1, K.Role("r"), K.Name("B"))
    assert key in nkb.eq_names
    e = nkb.eq_names[key]
    # the triple: E [= atmost 1 r.B, E' [= atleast 2 r.B, top [= E u E'
    assert K.CI(K.Name(e), K.AtMost(1, K.Role("r"), K.Name("B"))) in nkb.tbox
    partners = [ci for ci in nkb.tbox
                if isinstance(ci.rhs, K.AtLeast) and ci.rhs.n == 2]
    assert partners
    e2 = partners[0].lhs
    assert any(ci.lhs == K.And(()) and set(ci.rhs.args) == {K.Name(e), e2}
               for ci in nkb.tbox if isinstance(ci.rhs, K.Or))
    # E must not occur on the left of any other CI
    lefts = [ci for ci in nkb.tbox if ci.lhs == K.Name(e)
             or (isinstance(ci.lhs, K.And) and K.Name(e) in ci.lhs.args)]
    assert len(lefts) == 1


def test_normalize_empty_tbox():
    kb = K.parse_kb("role r; individual a; tbox: abox: A(a)")
    nkb = K.normalize(kb)
    assert nkb.tbox == ()


def test_normalize_idempotent():
    text = """
    transitive r
    role s
    concept A
    concept B
    individual a
    tbox:
    A [= some r.(A and not B)
    (A or B) [= atmost 2 s.(A or B)
    B [= all s.A
    abox:
    A(a); s(a,a)
    """
    kb = K.parse_kb(text)
    n1 = K.normalize(kb)
    n2 = K.normalize(K.KnowledgeBase(tbox=n1.tbox, abox=n1.abox,
                                     role_kinds=dict(n1.role_kinds),
                                     dialect=n1.dialect))
    assert set(n1.tbox) == set(n2.tbox)


def test_normalize_all_inverse_transitive_stays_primitive():
    kb = K.parse_kb("transitive r; concept A; concept B; individual a; "
                    "tbox: A [= all inv(r).B; abox: A(a)")
    nkb = K.normalize(kb)
    assert any(isinstance(ci.rhs, K.ForAll) and ci.rhs.role.inverted
               for ci in nkb.tbox)
    assert all(_normal_form_ok(ci) for ci in nkb.tbox)


def test_normalize_forms_on_soq():
    kb = K.parse_kb("transitive r; role s; individual a; individual b; "
                    "tbox: {a} [= atleast 2 r.(not {b}); abox: A(a)")
    nkb = K.normalize(kb)
    assert all(_normal_form_ok(ci) for ci in nkb.tbox)


def test_signature_stable_and_complete():
    kb = K.parse_kb(GAP_KB)
    s1 = K.signature(kb)
    s2 = K.signature(K.parse_kb(GAP_KB))
    assert s1 == s2
    assert s1.concept_names == ("A",)
    assert s1.role_names == (("r", True),)
    assert s1.individuals == ("a",)
    nkb = K.normalize(kb)
    ns = K.signature(nkb)
    assert set(ns.concept_names) >= {"A"}
    for name in nkb.eq_names.values():
        assert name in ns.concept_names


def test_number_overflow():
    with pytest.raises(K.NumberOverflowError):
        K.parse_kb(f"role r; individual a; tbox: A [= atmost {2**31} r.B; "
                   "abox: A(a)")


def test_kb_text_roundtrip():
    kb = K.parse_kb(GAP_KB)
    again = K.parse_kb(K.kb_text(kb))
    assert again.tbox == kb.tbox
    assert set(again.abox) == set(kb.abox)
