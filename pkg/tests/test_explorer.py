import pytest

from aw.harness.explorer import MAX_DEPTH, Model, explore_states

# Regression counts for the model as built: two files, two questions, two tool
# calls per question. They change only if the model or the protocol changes.


def test_honest_state_count_regression():
    rep = explore_states(8, modes=("honest",))
    assert (rep.states, rep.violations) == (568, [])
    assert rep.aborted == 0


def test_full_model_has_no_violations():
    rep = explore_states(12)
    assert rep.ok and rep.states == 947
    assert rep.aborted > 0 and rep.satisfied > 0


def test_self_test_finds_counterexamples():
    rep = explore_states(4, self_test=True)
    assert rep.violations
    assert "trace:" in rep.text()


def test_depth_is_bounded():
    with pytest.raises(ValueError):
        explore_states(MAX_DEPTH + 1)
    with pytest.raises(ValueError):
        explore_states(-1)


def test_honest_completion_terminates():
    m = Model()
    try:
        s = m.honest_completion(m.initial())
        assert s.terminal
    finally:
        m.close()
