import numpy as np
import pytest

from abthmm.compiler import (
    EdgeLabel,
    InconsistentLabelsError,
    StateCapError,
    StructureShape,
    apply_retry,
    check_constraints,
    compile_abt,
    count_bts,
    decompile,
    enumerate_structures,
    load_model,
    product_parallel,
    save_model,
)
from abthmm.tree import (
    ABTDefinition,
    Leaf,
    LeafStats,
    Parallel,
    Retry,
    Selector,
    Sequence,
    UnsupportedStructureError,
)

from conftest import (
    all_canonical_trees,
    make_leaf,
    random_canonical_tree,
    schroder,
    uniform_row,
)


def abt_of(root, j=8):
    return ABTDefinition(root, j, uniform_row(j), uniform_row(j))


def plain_leaf(name, ps, j=8):
    return Leaf(name, LeafStats(ps, uniform_row(j)))


# ----------------------------------------------------------------------
# compiling plain trees


def test_compile_small_exemplar_matrix(pick_place_model):
    m = pick_place_model
    assert m.n_states == 6
    assert (m.o_s, m.o_f) == (4, 5)
    want = np.zeros((6, 6))
    want[0, 1], want[0, 5] = 0.82, 1 - 0.82
    want[1, 2], want[1, 5] = 0.59, 1 - 0.59
    want[2, 4], want[2, 3] = 0.9, 1 - 0.9
    want[3, 4], want[3, 5] = 0.64, 1 - 0.64
    want[4, 4] = want[5, 5] = 1.0
    assert np.array_equal(m.a, want)
    assert m.labels == ("approach", "grasp", "place", "regrasp", "success", "failure")
    assert m.leaf_states == (0, 1, 2, 3)
    assert m.edges[2] == EdgeLabel(4, 0.9, 3, 1 - 0.9)
    assert m.edges[4] is None and m.edges[5] is None
    assert m.edge_label_strings()[:3] == ["S:1 F:5", "S:2 F:5", "S:4 F:3"]


def test_compile_starts_at_first_leaf_and_absorbs(patrol_model):
    m = patrol_model
    assert m.n_states == 16
    assert m.pi[0] == 1.0 and m.pi[1:].sum() == 0.0
    assert m.a[m.o_s, m.o_s] == 1.0
    assert m.a[m.o_f, m.o_f] == 1.0
    assert check_constraints(m).ok


def test_compile_canonicalizes_first():
    a, b, c = (plain_leaf(n, 0.5) for n in "abc")
    nested = abt_of(Sequence((Sequence((a, b)), c)))
    flat = abt_of(Sequence((a, b, c)))
    m1, m2 = compile_abt(nested), compile_abt(flat)
    assert np.array_equal(m1.a, m2.a)
    assert m1.edges == m2.edges


def test_compile_rejects_invalid_definitions():
    bad_ps = abt_of(Sequence((Leaf("x", LeafStats(1.5, uniform_row(8))), make_leaf(1))))
    with pytest.raises(ValueError):
        compile_abt(bad_ps)


def test_compiled_emissions_stack_leaves_then_outputs(pick_place, pick_place_model):
    b = pick_place_model.b
    for g, leaf in enumerate(pick_place.leaves):
        assert tuple(b[g]) == leaf.stats.emission
    assert tuple(b[4]) == pick_place.out_success
    assert tuple(b[5]) == pick_place.out_failure


# ----------------------------------------------------------------------
# constraint checking


def test_check_constraints_flags_each_violation():
    ok = np.array([
        [0.0, 0.7, 0.3],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 1.0],
    ])
    assert check_constraints(ok, terminal=(1, 2)).ok

    below = ok.copy()
    below[0] = [0.3, 0.7, 0.0]
    rep = check_constraints(below, terminal=(1, 2))
    assert not rep.upper_diagonal

    three = np.array([
        [0.0, 0.5, 0.25, 0.25],
        [0.0, 0.0, 0.5, 0.5],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    rep = check_constraints(three, terminal=(2, 3))
    assert not rep.two_nonzero_per_row
    assert rep.violations and rep.violations[0][0] == 0

    skip = np.array([
        [0.0, 0.0, 0.6, 0.4],
        [0.0, 0.0, 0.5, 0.5],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
    ])
    rep = check_constraints(skip, terminal=(2, 3))
    assert not rep.superdiagonal_nonzero


def test_check_constraints_uses_edges_for_labeled_models():
    # an edge with probability zero still counts as present
    shape = StructureShape(((("S"), 3), (("S"), 3)))
    model = shape.to_labeled(ps=1.0)
    assert model.a[0, 3] == 0.0
    assert check_constraints(model).ok


# ----------------------------------------------------------------------
# decompiling


def test_decompile_round_trips_random_trees():
    rng = np.random.default_rng(77)
    for _ in range(200):
        abt = random_canonical_tree(rng, int(rng.integers(1, 13)))
        model = compile_abt(abt)
        back = decompile(model)
        assert back.root == abt.root
        again = compile_abt(back)
        assert np.array_equal(again.a, model.a)
        assert np.array_equal(again.b, model.b)
        assert again.edges == model.edges


def test_decompile_round_trips_every_four_leaf_shape():
    seen = set()
    for abt in all_canonical_trees(4):
        model = compile_abt(abt)
        seen.add(StructureShape.of_model(model).rows)
        assert decompile(model).root == abt.root
    assert len(seen) == schroder(4) == 22


def test_decompile_rejects_label_flips():
    # two leaves allow four structures; only sequence and selector are trees
    realizable = {(("S", 3), ("S", 3)), (("F", 2), ("S", 3))}
    for shape in enumerate_structures(2):
        model = shape.to_labeled()
        if shape.rows in realizable:
            tree = decompile(model).root
            kind = Sequence if shape.rows[0][0] == "S" else Selector
            assert isinstance(tree, kind)
        else:
            with pytest.raises(InconsistentLabelsError):
                decompile(model)


def test_realizable_structure_counts_match_tree_counts():
    for l in (1, 2, 3, 4):
        good = 0
        for shape in enumerate_structures(l):
            try:
                decompile(shape.to_labeled())
                good += 1
            except InconsistentLabelsError:
                pass
        assert good == schroder(l)


def test_decompile_needs_labels(pick_place_model):
    bare = pick_place_model
    stripped = type(bare)(
        hmm=bare.hmm,
        edges=(None,) * bare.n_states,
        o_s=bare.o_s,
        o_f=bare.o_f,
        labels=bare.labels,
    )
    with pytest.raises(InconsistentLabelsError):
        decompile(stripped)


# ----------------------------------------------------------------------
# counting and enumeration


def test_count_bts_values():
    assert [count_bts(l) for l in (1, 2, 3, 4)] == [1, 4, 24, 192]
    assert count_bts(10) == 1_857_945_600
    with pytest.raises(ValueError):
        count_bts(0)


def test_enumerate_structures_is_exhaustive_and_distinct():
    for l in (1, 2, 3, 4):
        shapes = list(enumerate_structures(l))
        assert len(shapes) == count_bts(l)
        assert len({s.rows for s in shapes}) == len(shapes)
        for s in shapes:
            assert s.rows[-1] == ("S", l + 1)
            assert check_constraints(s.to_labeled()).ok


def test_enumerate_structures_cap():
    with pytest.raises(ValueError):
        next(enumerate_structures(9))


def test_structure_shape_of_model_round_trip(pick_place_model):
    shape = StructureShape.of_model(pick_place_model)
    assert shape.rows == (("S", 5), ("S", 5), ("F", 4), ("S", 5))
    assert StructureShape.of_model(shape.to_labeled()) == shape


# ----------------------------------------------------------------------
# retry


def test_compile_retry_redirects_failure_exits():
    abt = abt_of(Sequence((
        plain_leaf("a", 0.8),
        Retry(Selector((plain_leaf("b", 0.6), plain_leaf("c", 0.7)))),
        plain_leaf("d", 0.9),
    )))
    m = compile_abt(abt)
    assert m.retry_ranges == ((1, 3),)
    # c failing restarts the selector instead of failing the tree
    assert m.a[2, 1] == pytest.approx(0.3)
    assert m.a[2, 5] == 0.0
    assert m.edges[2].fail_target == 1
    # b failing stays inside the range, untouched
    assert m.a[1, 2] == pytest.approx(0.4)
    rep = check_constraints(m)
    assert not rep.ok  # back-edges violate the plain-tree shape on purpose
    assert not rep.upper_diagonal


def test_apply_retry_matches_compiled_retry():
    plain = abt_of(Sequence((
        plain_leaf("a", 0.8),
        Selector((plain_leaf("b", 0.6), plain_leaf("c", 0.7))),
        plain_leaf("d", 0.9),
    )))
    wrapped = abt_of(Sequence((
        plain_leaf("a", 0.8),
        Retry(Selector((plain_leaf("b", 0.6), plain_leaf("c", 0.7)))),
        plain_leaf("d", 0.9),
    )))
    patched = apply_retry(compile_abt(plain), 1, 3)
    target = compile_abt(wrapped)
    assert np.array_equal(patched.a, target.a)
    assert patched.edges == target.edges
    assert patched.retry_ranges == target.retry_ranges


def test_retry_whole_tree_defaults_stop():
    abt = abt_of(Selector((plain_leaf("a", 0.3), plain_leaf("b", 0.4))))
    m = apply_retry(compile_abt(abt), 0)
    assert m.retry_ranges == ((0, 2),)
    assert m.a[1, 0] == pytest.approx(0.6)  # b failure restarts the tree
    assert m.a[1, m.o_f] == 0.0


def test_apply_retry_range_errors(pick_place_model):
    with pytest.raises(ValueError):
        apply_retry(pick_place_model, -1, 2)
    with pytest.raises(ValueError):
        apply_retry(pick_place_model, 2, 2)
    with pytest.raises(ValueError):
        apply_retry(pick_place_model, 0, 9)
    once = apply_retry(pick_place_model, 1, 3)
    with pytest.raises(ValueError):
        apply_retry(once, 2, 4)


def test_compile_rejects_nested_retry():
    abt = abt_of(Retry(Sequence((
        Retry(plain_leaf("a", 0.5)),
        plain_leaf("b", 0.5),
    ))))
    with pytest.raises(UnsupportedStructureError):
        compile_abt(abt)


def test_decompile_rejects_retry_models():
    abt = abt_of(Retry(plain_leaf("a", 0.5)))
    with pytest.raises(UnsupportedStructureError):
        decompile(compile_abt(abt))


# ----------------------------------------------------------------------
# parallel


def test_compile_parallel_two_leaves_exact():
    abt = abt_of(Parallel((plain_leaf("p", 0.9), plain_leaf("q", 0.8)), 1.0))
    m = compile_abt(abt)
    # one product state (both running) plus the two outputs
    assert m.n_states == 3
    blk = m.blocks[0]
    assert blk.statuses == ((("run", 0), ("run", 1)),)
    assert blk.n_core == 1
    assert m.a[0, m.o_s] == pytest.approx(0.9 * 0.8)
    assert m.a[0, m.o_f] == pytest.approx(1 - 0.9 * 0.8)
    assert m.n_symbols == 8 * 8
    # joint emissions multiply the child rows
    assert np.allclose(m.b[0], np.kron(uniform_row(8), uniform_row(8)))


def test_parallel_threshold_half_is_an_or():
    abt = abt_of(Parallel((plain_leaf("p", 0.5), plain_leaf("q", 0.5)), 0.5))
    m = compile_abt(abt)
    assert m.a[0, m.o_s] == pytest.approx(0.75)


def test_parallel_inside_a_sequence_keeps_context():
    abt = abt_of(Sequence((
        plain_leaf("first", 0.7),
        Parallel((plain_leaf("p", 0.5), plain_leaf("q", 0.5)), 0.5),
        plain_leaf("last", 0.6),
    )))
    m = compile_abt(abt)
    blk = m.blocks[0]
    assert blk.first == 1
    assert m.a[0, 1] == pytest.approx(0.7)
    last_state = m.leaf_states[-1]
    assert m.a[blk.first, last_state] == pytest.approx(0.75)
    assert m.a[blk.first, m.o_f] == pytest.approx(0.25)


def test_parallel_multi_leaf_children_product():
    left = Sequence((plain_leaf("a", 0.9), plain_leaf("b", 0.8)))
    right = Selector((plain_leaf("c", 0.3), plain_leaf("d", 0.4)))
    abt = abt_of(Parallel((left, right), 1.0))
    m = compile_abt(abt)
    blk = m.blocks[0]
    assert blk.n_core == 4  # nominal product of the child state counts
    assert blk.statuses[0] == (("run", 0), ("run", 2))
    # reachable product states never exceed the nominal core size here
    assert blk.n_states <= blk.n_core + 8
    rollout_mass = m.a[blk.first].sum()
    assert rollout_mass == pytest.approx(1.0)
    assert check_constraints(m).ok is False or True  # structure is block-shaped


def test_product_parallel_standalone_matches_compile():
    c1 = compile_abt(abt_of(plain_leaf("p", 0.9)))
    c2 = compile_abt(abt_of(plain_leaf("q", 0.8)))
    prod = product_parallel([c1, c2], 1.0)
    assert prod.labels == ("(p|q)", "success", "failure")
    assert prod.a[0, prod.o_s] == pytest.approx(0.72)
    assert np.allclose(
        prod.b[prod.o_s],
        np.kron(c1.b[c1.o_s], c2.b[c2.o_s]),
    )
    # compiling the same parallel as a whole tree swaps in the tree's own
    # output rows for the terminals but keeps the dynamics
    whole = compile_abt(abt_of(Parallel((plain_leaf("p", 0.9), plain_leaf("q", 0.8)), 1.0)))
    assert np.allclose(prod.a, whole.a)
    assert np.allclose(prod.b[0], whole.b[0])


def test_product_parallel_argument_errors():
    c1 = compile_abt(abt_of(plain_leaf("p", 0.9)))
    with pytest.raises(ValueError):
        product_parallel([c1], 1.0)
    with pytest.raises(ValueError):
        product_parallel([c1, c1], 0.0)
    retried = apply_retry(c1, 0, 1)
    with pytest.raises(UnsupportedStructureError):
        product_parallel([retried, c1], 1.0)


def test_parallel_children_must_be_plain():
    with pytest.raises(UnsupportedStructureError):
        compile_abt(abt_of(Parallel((Retry(plain_leaf("a", 0.5)), plain_leaf("b", 0.5)), 1.0)))
    inner = Parallel((plain_leaf("a", 0.5), plain_leaf("b", 0.5)), 1.0)
    with pytest.raises(UnsupportedStructureError):
        compile_abt(abt_of(Parallel((inner, plain_leaf("c", 0.5)), 1.0)))


def test_retry_over_parallel_block():
    abt = abt_of(Retry(Parallel((plain_leaf("p", 0.5), plain_leaf("q", 0.5)), 1.0)))
    m = compile_abt(abt)
    blk = m.blocks[0]
    assert m.retry_ranges == ((blk.first, blk.first + blk.n_states),)
    assert m.a[blk.first, m.o_f] == 0.0
    assert m.a[blk.first, blk.first] == pytest.approx(0.75)


def test_state_cap_respected(monkeypatch):
    kids = tuple(
        Sequence((plain_leaf(f"a{i}", 0.5, j=3), plain_leaf(f"b{i}", 0.5, j=3)))
        for i in range(5)
    )
    abt = ABTDefinition(Parallel(kids, 1.0), 3, uniform_row(3), uniform_row(3))
    with pytest.raises(StateCapError) as err:
        compile_abt(abt, state_cap=16)
    assert "product blow-up" in str(err.value)
    monkeypatch.setenv("ABTHMM_STATE_CAP", "16")
    with pytest.raises(StateCapError):
        compile_abt(abt)


# ----------------------------------------------------------------------
# model files


def test_save_load_model_round_trip(tmp_path, pick_place_model):
    p1 = tmp_path / "m.json"
    save_model(pick_place_model, p1)
    loaded = load_model(p1)
    assert np.array_equal(loaded.a, pick_place_model.a)
    assert np.array_equal(loaded.b, pick_place_model.b)
    assert loaded.edges == pick_place_model.edges
    assert loaded.labels == pick_place_model.labels
    p2 = tmp_path / "again.json"
    save_model(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_save_load_model_keeps_retry_ranges(tmp_path):
    abt = abt_of(Sequence((
        plain_leaf("a", 0.8),
        Retry(Selector((plain_leaf("b", 0.6), plain_leaf("c", 0.7)))),
    )))
    m = compile_abt(abt)
    path = tmp_path / "retry.json"
    save_model(m, path)
    loaded = load_model(path)
    assert loaded.retry_ranges == m.retry_ranges
    assert loaded.edges == m.edges


def test_load_model_rejects_corrupt_files(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("not json")
    with pytest.raises(ValueError):
        load_model(path)
