import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smoothmc.crn import (
    CRNModel,
    ModelError,
    ModelSyntaxError,
    Parameter,
    Reaction,
    apply_reaction,
    load_model,
    parse_model,
    propensities,
    serialize_model,
)


def test_sir_structure(sir):
    assert sir.species == ("S", "I", "R")
    assert sir.initial_state == (95, 5, 0)
    assert sir.parameter_names == ["k_I", "k_R"]
    np.testing.assert_array_equal(sir.bounds, [[0.005, 0.3], [0.005, 0.3]])
    np.testing.assert_array_equal(sir.change_matrix, [[-1, 1, 0], [0, -1, 1]])


def test_sir_propensities(sir):
    np.testing.assert_allclose(propensities(sir, (95, 5, 0), (0.01, 0.05)), [0.01 * 95 * 5, 0.05 * 5])
    # recover at (0, 7, 93), k_R = 0.1
    assert propensities(sir, (0, 7, 93), (0.01, 0.1))[1] == pytest.approx(0.7)
    assert propensities(sir, (0, 7, 93), (0.01, 0.1))[0] == 0.0


def test_falling_factorial_propensity():
    model = parse_model("species A=10 B=0\nparam k range 0 1\nreaction dim: 2 A -> B @ k\n")
    assert propensities(model, (10, 0), (0.5,))[0] == pytest.approx(0.5 * 10 * 9)
    assert propensities(model, (1, 0), (0.5,))[0] == 0.0


def test_apply_reaction(sir):
    np.testing.assert_array_equal(apply_reaction(sir, (95, 5, 0), "infect"), (94, 6, 0))
    np.testing.assert_array_equal(apply_reaction(sir, (94, 6, 0), "recover"), (94, 5, 1))
    with pytest.raises(RuntimeError):
        apply_reaction(sir, (0, 0, 100), "recover")


@given(st.lists(st.sampled_from([0, 1]), max_size=60))
def test_sir_conservation(sequence):
    model = parse_model("species S=95 I=5 R=0\nparam a range 0 1\nparam b range 0 1\n"
                        "reaction infect: S + I -> I + I @ a\nreaction recover: I -> R @ b\n")
    x = np.array(model.initial_state)
    for r in sequence:
        if np.all(x >= model.reactant_matrix[r]):
            x = apply_reaction(model, x, r)
        assert x.sum() == 100 and np.all(x >= 0)


@settings(max_examples=50)
@given(st.floats(0.005, 0.3), st.floats(0.005, 0.3), st.integers(0, 100), st.integers(0, 100))
def test_propensity_linear_in_rate(k_i, k_r, s, i):
    from smoothmc.crn import SIR_MODEL

    model = parse_model(SIR_MODEL)
    base = propensities(model, (s, i, 0), (k_i, k_r))
    doubled = propensities(model, (s, i, 0), (2 * k_i, k_r))
    assert doubled[0] == 2 * base[0]
    assert doubled[1] == base[1]


def test_parse_serialize_roundtrip(sir):
    assert parse_model(serialize_model(sir)) == sir


names = st.sampled_from(["A", "B", "C", "D"])


@st.composite
def models(draw):
    n = draw(st.integers(1, 4))
    species = ["A", "B", "C", "D"][:n]
    counts = draw(st.lists(st.integers(0, 50), min_size=n, max_size=n))
    params = [Parameter("k1", 0.0, 1.0), Parameter("k2", 0.5, 2.0)]
    reactions = []
    for j in range(draw(st.integers(0, 4))):
        lhs = draw(st.lists(st.sampled_from(species), max_size=3))
        rhs = draw(st.lists(st.sampled_from(species), max_size=3))
        reactions.append(Reaction.from_lists(f"r{j}", lhs, rhs, draw(st.sampled_from(["k1", "k2"]))))
    return CRNModel(tuple(species), tuple(counts), tuple(params), tuple(reactions))


@given(models())
def test_roundtrip_property(model):
    assert parse_model(serialize_model(model)) == model


def test_parse_variants():
    text = """
    # comment line
    species A=3 B=0   # trailing comment
    param k range 0.1 2
    reaction birth: 0 -> A @ k
    reaction death: A -> 0 @ k
    reaction pair: A + A -> B @ k
    """
    m = parse_model(text)
    assert [r.label for r in m.reactions] == ["birth", "death", "pair"]
    assert m.reactions[0].reactants == ()
    assert m.reactions[2].reactants == (("A", 2),)
    assert parse_model(text.replace("A + A", "2 A")) == m


@pytest.mark.parametrize(
    "text, exc",
    [
        ("species A=1\nparam k range 0 1\nreaction r: A -> B @ k\n", ModelError),
        ("species A=1\nparam k range 0 1\nreaction r: A -> A @ q\n", ModelError),
        ("species A=1\nparam k range 1 0\n", ModelError),
        ("species A=1 A=2\n", ModelError),
        ("species A=1\nfoo bar\n", ModelSyntaxError),
        ("species A=1\nparam k range 0 1\nreaction r: -> A @ k\n", ModelSyntaxError),
        ("species A=x\n", ModelSyntaxError),
    ],
)
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_model(text)


def test_syntax_error_has_location():
    with pytest.raises(ModelSyntaxError) as info:
        parse_model("species A=1\nbogus line\n")
    assert info.value.line == 2


def test_load_model(tmp_path, sir):
    p = tmp_path / "sir.crn"
    p.write_text(serialize_model(sir))
    assert load_model(p) == sir


def test_check_point(sir):
    np.testing.assert_array_equal(sir.check_point([0.01, 0.2]), [0.01, 0.2])
    with pytest.raises(ValueError):
        sir.check_point([0.5, 0.1])
    with pytest.raises(ValueError):
        sir.check_point([0.1])
