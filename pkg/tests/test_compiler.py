"""DSL parsing, backward chaining, constraint derivation and DOT export."""

import json
from pathlib import Path

import pytest

from chainbt import default_spec_text
from chainbt.bt import Action, Condition, Fallback, Sequence, tree_to_json
from chainbt.compiler import (CyclicDependency, DslSyntaxError, DuplicateAction,
                              EmptyGoalList, NotBackchained, backchain, canon,
                              compile_spec, derive_acc, export_dot, parse_spec,
                              spec_from_dict, spec_to_dict)

GOLDEN = Path(__file__).parent / "golden"


# --- parsing ---------------------------------------------------------------

def test_parse_minimal_spec():
    spec = parse_spec('goal "Done"\naction "Do it" { pre: []; post: "Done" }\n')
    assert spec.goals == ["Done"]
    assert spec.actions[0].name == "Do it"
    assert spec.actions[0].preconditions == []
    assert spec.actions[0].postcondition == "Done"
    assert spec.actions[0].impl_kind == "scripted"


def test_parse_learned_impl_and_multiline_block():
    spec = parse_spec(
        'goal "G"\n'
        'action "A" {\n'
        '  pre: ["P1", "P2"];\n'
        '  post: "G";\n'
        '  impl: learned\n'
        '}\n')
    a = spec.actions[0]
    assert a.preconditions == ["P1", "P2"]
    assert a.impl_kind == "learned"


def test_parse_comments_and_blank_lines_ignored():
    spec = parse_spec('# header\n\ngoal "G"\n# tail\n')
    assert spec.goals == ["G"]


def test_parse_errors_carry_line_numbers():
    with pytest.raises(DslSyntaxError) as ei:
        parse_spec('goal "G"\nnonsense here\n')
    assert ei.value.line == 2

    with pytest.raises(DslSyntaxError):
        parse_spec('goal "G"\naction "A" { pre: []; post: "G"\n')  # no brace

    with pytest.raises(DslSyntaxError):
        parse_spec('goal "G"\naction "A" { pre: [] }\n')  # no post


def test_duplicate_action_rejected_case_insensitively():
    text = ('goal "G"\n'
            'action "Do" { pre: []; post: "G" }\n'
            'action "  do " { pre: []; post: "G" }\n')
    with pytest.raises(DuplicateAction):
        parse_spec(text)


def test_empty_goal_list_rejected():
    with pytest.raises(EmptyGoalList):
        parse_spec('action "A" { pre: []; post: "P" }\n')


def test_spec_dict_round_trip():
    spec = parse_spec(default_spec_text())
    again = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
    assert spec_to_dict(again) == spec_to_dict(spec)


# --- backward chaining -----------------------------------------------------

def _shape(node):
    if isinstance(node, Condition):
        return ("cond", canon(node.condition_id))
    if isinstance(node, Action):
        return ("act", canon(node.action_id))
    return (node.kind, tuple(_shape(c) for c in node.children))


def test_backchain_single_goal_single_action():
    spec = parse_spec('goal "G"\naction "A" { pre: ["P"]; post: "G" }\n')
    tree = backchain(spec.goals, spec.actions)
    assert _shape(tree) == (
        "sequence",
        (("fallback", (("cond", "g"),
                       ("sequence", (("cond", "p"), ("act", "a"))))),))


def test_backchain_expands_preconditions_recursively():
    text = ('goal "Top"\n'
            'action "Outer" { pre: ["Mid"]; post: "Top" }\n'
            'action "Inner" { pre: []; post: "Mid" }\n')
    spec = parse_spec(text)
    tree = backchain(spec.goals, spec.actions)
    assert _shape(tree) == (
        "sequence",
        (("fallback",
          (("cond", "top"),
           ("sequence",
            (("fallback", (("cond", "mid"),
                           ("sequence", (("act", "inner"),)))),
             ("act", "outer"))))),))


def test_backchain_multiple_achievers_in_file_order():
    text = ('goal "G"\n'
            'action "First" { pre: []; post: "G" }\n'
            'action "Second" { pre: []; post: "G" }\n')
    spec = parse_spec(text)
    tree = backchain(spec.goals, spec.actions)
    fb = tree.children[0]
    assert isinstance(fb, Fallback)
    assert [_shape(c) for c in fb.children] == [
        ("cond", "g"),
        ("sequence", (("act", "first"),)),
        ("sequence", (("act", "second"),))]


def test_backchain_detects_cycles_with_path():
    text = ('goal "A"\n'
            'action "MakeA" { pre: ["B"]; post: "A" }\n'
            'action "MakeB" { pre: ["A"]; post: "B" }\n')
    spec = parse_spec(text)
    with pytest.raises(CyclicDependency) as ei:
        backchain(spec.goals, spec.actions)
    assert [canon(c) for c in ei.value.path] == ["a", "b", "a"]


def test_backchain_self_cycle():
    text = 'goal "A"\naction "Loop" { pre: ["A"]; post: "A" }\n'
    with pytest.raises(CyclicDependency):
        compile_spec(text)


def test_backchain_warns_on_unachievable_preconditions():
    text = ('goal "G"\n'
            'action "A" { pre: ["Nothing makes this"]; post: "G" }\n')
    warnings = []
    spec = parse_spec(text)
    backchain(spec.goals, spec.actions, warnings)
    assert any("Nothing makes this" in w for w in warnings)


def test_backchain_goal_without_achiever_is_plain_check_no_warning():
    warnings = []
    spec = parse_spec('goal "G"\n')
    tree = backchain(spec.goals, spec.actions, warnings)
    assert _shape(tree) == ("sequence", (("cond", "g"),))
    assert warnings == []


# --- constraint derivation -------------------------------------------------

def test_derive_acc_left_siblings_of_sequence_only():
    text = ('goal "S1"\n'
            'goal "S2"\n'
            'action "A2" { pre: ["P"]; post: "S2" }\n')
    res = compile_spec(text)
    # A2 sits after the S1 guard; its own precondition P is not a constraint
    assert res.acc == {"A2": ["S1"]}


def test_derive_acc_fallback_contributes_nothing():
    text = ('goal "G"\n'
            'action "First" { pre: []; post: "G" }\n'
            'action "Second" { pre: []; post: "G" }\n')
    res = compile_spec(text)
    assert res.acc == {"First": [], "Second": []}


def test_derive_acc_orders_and_dedupes():
    res = compile_spec(default_spec_text())
    assert res.acc["Chase cow"] == ["Safe from fire", "Safe from hostiles", "Has sword"]
    assert res.acc["Defeat hostile"] == ["Safe from fire"]
    assert res.acc["Escape from fire"] == []


def test_derive_acc_rejects_duplicate_action_leaf():
    tree = Sequence([Action("X"), Action("X")])
    with pytest.raises(NotBackchained):
        derive_acc(tree)


def test_derive_acc_rejects_non_backchained_sibling():
    # a subtree's action left-sibling has no success requirement expressible
    # as a condition, so constraint derivation must refuse the tree
    tree = Sequence([Action("first"),
                     Fallback([Condition("c"), Sequence([Action("x")])])])
    with pytest.raises(NotBackchained):
        derive_acc(tree)


def test_derive_acc_ignores_action_own_preconditions():
    # left siblings at the action's own level are its preconditions, which by
    # definition are not constraints while the action runs
    tree = Sequence([Condition("p"), Action("a")])
    assert derive_acc(tree) == {"a": []}


# --- golden artifacts ------------------------------------------------------

def test_default_spec_tree_matches_golden():
    res = compile_spec(default_spec_text())
    assert tree_to_json(res.tree) + "\n" == (GOLDEN / "table1_tree.json").read_text()


def test_default_spec_acc_matches_golden():
    res = compile_spec(default_spec_text())
    golden = json.loads((GOLDEN / "table1_acc.json").read_text())
    assert res.acc == golden


def test_dot_export_matches_golden_and_highlights():
    res = compile_spec(default_spec_text())
    dot = export_dot(res.tree, res.acc, "Chase cow")
    assert dot == (GOLDEN / "table1.dot").read_text()
    assert dot.count("peripheries=2") == 4  # 3 constraints + the action box
    assert "digraph bt {" in dot


def test_dot_export_is_deterministic():
    res = compile_spec(default_spec_text())
    assert export_dot(res.tree) == export_dot(res.tree)
