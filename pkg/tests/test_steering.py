"""Steering engine: edit categories, reference resolution, version history."""
import pytest

from blocksmith.core import content_hash
from blocksmith.frontend import UnparsableInstruction, parse_instruction, elaborate
from blocksmith.predicates import (
    AllOf,
    CircleArrangement,
    On,
    OnTable,
    iter_leaves,
    structure_signature,
)
from blocksmith.steering import (
    CATEGORIES,
    PRESERVATION,
    SteeringEngine,
    resolve_reference,
    split_reference,
    summarize_goal,
)
from blocksmith.validation import run_pipeline

from conftest import PROGRESSIVE_TOWER, REVERT_AND_EXTEND


def _replay(script):
    engine = SteeringEngine()
    engine.begin(script[0])
    for text in script[1:]:
        engine.steer(text)
    return engine


@pytest.fixture(scope="module")
def tower_engine():
    return _replay(PROGRESSIVE_TOWER)


@pytest.fixture(scope="module")
def revert_engine():
    return _replay(REVERT_AND_EXTEND)


class TestProgressiveTower:
    def test_version_count(self, tower_engine):
        assert len(tower_engine) == 6

    def test_categories(self, tower_engine):
        got = [tower_engine.version(v).category for v in range(6)]
        assert got == ["Fresh", "Extend", "Tweak", "Extend", "Modify", "Tweak"]

    def test_references(self, tower_engine):
        got = [tower_engine.version(v).reference_version for v in range(6)]
        assert got == [None, 0, 1, 2, 3, 4]

    def test_initial_goal(self, tower_engine):
        spec = tower_engine.version(0).spec
        assert spec.goal == AllOf(
            (OnTable("cube-red-0"), On("cube-blue-0", "cube-red-0"))
        )

    def test_goal_summaries(self, tower_engine):
        summaries = [tower_engine.versions[v].goal_summary for v in range(6)]
        assert summaries[0] == "red on table; blue on red"
        assert summaries[3] == (
            "red on table; blue on red; yellow on blue; letter A on yellow"
        )
        # The flip reverses colors but keeps the letter cube on top.
        assert summaries[4] == (
            "yellow on table; blue on yellow; red on blue; letter A on red"
        )
        assert summaries[5] == (
            "purple on table; blue on purple; red on blue; letter A on red"
        )

    def test_assets_follow_edits(self, tower_engine):
        assert tower_engine.versions[2].assets_used == (
            "red cube",
            "blue cube",
            "yellow cube",
        )
        assert tower_engine.versions[3].assets_used == (
            "red cube",
            "blue cube",
            "yellow cube",
            "letter A cube",
        )
        assert "purple cube" in tower_engine.versions[5].assets_used
        assert "yellow cube" not in tower_engine.versions[5].assets_used

    def test_every_version_admitted(self, tower_engine):
        for v in range(6):
            report = run_pipeline(tower_engine.version(v).spec)
            assert report.admitted, (v, report.failure)

    def test_hashes_distinct(self, tower_engine):
        hashes = {snap.code_hash for snap in tower_engine.versions}
        assert len(hashes) == 6

    def test_descriptions_are_raw_requests(self, tower_engine):
        assert [s.description for s in tower_engine.versions] == list(
            PROGRESSIVE_TOWER
        )

    def test_tweak_preserves_structure(self, tower_engine):
        # Color replacement and the flip rebind ids without reshaping the goal.
        v1 = tower_engine.version(1).spec.goal
        v2 = tower_engine.version(2).spec.goal
        assert structure_signature(v1) == structure_signature(v2)
        v3 = tower_engine.version(3).spec.goal
        v4 = tower_engine.version(4).spec.goal
        assert structure_signature(v3) == structure_signature(v4)

    def test_extend_grows_goal(self, tower_engine):
        leaves = [
            len(list(iter_leaves(tower_engine.version(v).spec.goal)))
            for v in range(4)
        ]
        assert leaves == [2, 3, 3, 4]

    def test_snapshot_obj_shape(self, tower_engine):
        snap = tower_engine.versions[0]
        assert snap.to_obj() == {
            "assets_used": ["red cube", "blue cube"],
            "code_hash": content_hash(tower_engine.version(0).spec),
            "description": PROGRESSIVE_TOWER[0],
            "goal_summary": "red on table; blue on red",
            "version_id": 0,
        }


class TestRevertAndExtend:
    def test_categories(self, revert_engine):
        got = [revert_engine.version(v).category for v in range(5)]
        assert got == ["Fresh", "Extend", "Extend", "Extend", "Modify"]

    def test_revert_resolves_to_version_zero(self, revert_engine):
        assert revert_engine.version(3).reference_version == 0

    def test_revert_branch_drops_later_colors(self, revert_engine):
        assets = revert_engine.versions[3].assets_used
        assert assets == ("red cube", "blue cube", "purple cube")

    def test_letter_swap_maps_color_initials(self, revert_engine):
        spec = revert_engine.version(4).spec
        assert spec.goal == AllOf(
            (
                OnTable("cube-r-0"),
                On("cube-b-0", "cube-r-0"),
                On("cube-p-0", "cube-b-0"),
            )
        )
        assert revert_engine.versions[4].goal_summary == (
            "letter R on table; letter B on letter R; letter P on letter B"
        )

    def test_every_version_admitted(self, revert_engine):
        for v in range(5):
            assert run_pipeline(revert_engine.version(v).spec).admitted


class TestBareRevert:
    def test_revert_reproduces_referenced_spec(self):
        engine = _replay(REVERT_AND_EXTEND[:3])
        result = engine.steer("go back to version 1")
        assert result.category == "Extend"
        assert result.reference_version == 1
        assert result.spec is engine.version(1).spec
        assert result.snapshot.code_hash == engine.versions[1].code_hash
        assert result.snapshot.version_id == 3

    def test_revert_to_latest_by_default_phrase(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("revert to version 0")
        assert result.snapshot.code_hash == engine.versions[0].code_hash


class TestSplitReference:
    def test_plain_edit_has_no_clause(self):
        assert split_reference("Add a red cube") == (None, "add a red cube")

    def test_bare_revert(self):
        assert split_reference("ok, revert to version 2") == ("version 2", "")

    def test_clause_and_edit(self):
        clause, edit = split_reference(
            "Actually, go back to when it was just red and blue "
            "and instead add a purple block"
        )
        assert clause == "when it was just red and blue"
        assert edit == "add a purple block"

    def test_then_splitter(self):
        clause, edit = split_reference("return to version 1, then add a red cube")
        assert clause == "version 1"
        assert edit == "add a red cube"


class TestResolveReference:
    def test_explicit_version_wins(self, revert_engine):
        snaps = revert_engine.versions
        assert resolve_reference("the version 2 one", snaps) == 2

    def test_explicit_version_out_of_range(self, revert_engine):
        with pytest.raises(UnparsableInstruction, match="version 9"):
            resolve_reference("version 9", revert_engine.versions)

    def test_keyword_overlap_prefers_exact_color_set(self, revert_engine):
        snaps = revert_engine.versions[:3]
        assert resolve_reference("when it was just red and blue", snaps) == 0

    def test_ties_go_to_newest(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        engine.steer("remove the green cube")
        # Versions 0 and 2 both hold exactly a red and a blue cube.
        assert resolve_reference("the red and blue tower", engine.versions) == 2

    def test_no_versions(self):
        with pytest.raises(UnparsableInstruction):
            resolve_reference("version 0", [])


class TestPreservationContracts:
    def test_category_tuple(self):
        assert CATEGORIES == ("Tweak", "Extend", "Modify", "Pivot", "Fresh")

    def test_flag_table(self):
        assert PRESERVATION == {
            "Tweak": {"assets": False, "positions": True, "goals": True},
            "Extend": {"assets": True, "positions": True, "goals": True},
            "Modify": {"assets": False, "positions": False, "goals": True},
            "Pivot": {"assets": True, "positions": False, "goals": False},
            "Fresh": {"assets": False, "positions": False, "goals": False},
        }

    def test_result_exposes_flags(self, tower_engine):
        for v in range(6):
            result = tower_engine.version(v)
            assert result.preserved == PRESERVATION[result.category]


class TestEditGrammar:
    def test_swap_colors(self):
        engine = _replay(PROGRESSIVE_TOWER[:1])
        result = engine.steer("Swap the red and blue cubes")
        assert result.category == "Tweak"
        assert result.snapshot.goal_summary == "blue on table; red on blue"

    def test_remove_letter_cube(self, tower_engine):
        engine = _replay(PROGRESSIVE_TOWER)
        result = engine.steer("remove the letter A cube")
        assert result.category == "Modify"
        assert result.snapshot.goal_summary == (
            "purple on table; blue on purple; red on blue"
        )
        assert len(result.spec.assets) == 3

    def test_remove_middle_cube_splices_tower(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("remove the blue cube")
        assert result.category == "Modify"
        assert result.snapshot.goal_summary == "red on table; green on red"

    def test_pivot_to_circle(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("arrange them in a circle")
        assert result.category == "Pivot"
        assert result.preserved == {
            "assets": True,
            "positions": False,
            "goals": False,
        }
        leaves = [leaf for _, leaf in iter_leaves(result.spec.goal)]
        assert isinstance(leaves[0], CircleArrangement)
        assert len(leaves[0].assets) == 3
        assert result.schema.ordering_pattern == "none"

    def test_pivot_to_row(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("line the cubes up in a row")
        assert result.category == "Pivot"
        assert result.snapshot.goal_summary.startswith("row of red, blue, green")

    def test_anchored_add_targets_named_color(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("add a purple cube on top of the green cube")
        assert result.category == "Extend"
        assert "purple on green" in result.snapshot.goal_summary

    def test_anchor_color_missing(self):
        engine = _replay(PROGRESSIVE_TOWER[:1])
        with pytest.raises(UnparsableInstruction, match="no orange cube"):
            engine.steer("add a purple cube on top of the orange cube")

    def test_fresh_restart_prefix(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        result = engine.steer("start over: place 6 cubes in a circle")
        assert result.category == "Fresh"
        assert result.reference_version is None
        assert result.snapshot.goal_summary.startswith("circle of 6")

    def test_whole_instruction_is_fresh(self):
        engine = _replay(PROGRESSIVE_TOWER[:1])
        result = engine.steer("Arrange the cubes so they spell CAT from left to right")
        assert result.category == "Fresh"
        assert result.reference_version is None
        assert "spells CAT" in result.snapshot.goal_summary

    def test_unmatched_edit_rejected_without_side_effects(self):
        engine = _replay(PROGRESSIVE_TOWER[:2])
        with pytest.raises(UnparsableInstruction, match="no steering template"):
            engine.steer("paint the tower in stripes")
        assert len(engine) == 2
        follow_up = engine.steer("add a purple cube")
        assert follow_up.snapshot.version_id == 2


class TestEngineLifecycle:
    def test_begin_twice_rejected(self):
        engine = _replay(PROGRESSIVE_TOWER[:1])
        with pytest.raises(UnparsableInstruction, match="already has a task"):
            engine.begin(PROGRESSIVE_TOWER[0])

    def test_steer_before_begin_rejected(self):
        with pytest.raises(UnparsableInstruction, match="no task yet"):
            SteeringEngine().steer("add a red cube")

    def test_rollback_pops_newest(self):
        engine = _replay(PROGRESSIVE_TOWER[:3])
        dropped = engine.versions[2].code_hash
        engine.rollback()
        assert len(engine) == 2
        redo = engine.steer(PROGRESSIVE_TOWER[2])
        assert redo.snapshot.version_id == 2
        assert redo.snapshot.code_hash == dropped

    def test_rollback_on_empty_is_noop(self):
        engine = SteeringEngine()
        engine.rollback()
        assert len(engine) == 0

    def test_adopt_installs_fresh_version_zero(self):
        schema = parse_instruction(PROGRESSIVE_TOWER[0])
        spec = elaborate(schema)
        engine = SteeringEngine()
        result = engine.adopt("custom wording", schema, spec)
        assert result.category == "Fresh"
        assert result.reference_version is None
        assert engine.versions[0].description == "custom wording"
        with pytest.raises(UnparsableInstruction):
            engine.begin(PROGRESSIVE_TOWER[0])

    def test_versions_ids_are_dense(self, tower_engine):
        assert [s.version_id for s in tower_engine.versions] == list(range(6))


class TestGoalSummaries:
    def test_patch_and_word_leaves(self):
        spec = elaborate(
            parse_instruction("Arrange the cubes so they spell CAT from left to right")
        )
        assert summarize_goal(spec).startswith("spells CAT")

    def test_equation_leaf(self):
        spec = elaborate(
            parse_instruction("Form the equation 2+3=5 with number cubes")
        )
        assert "equation 2+3=5" in summarize_goal(spec)

    def test_duplicate_clauses_collapse(self):
        spec = elaborate(parse_instruction(PROGRESSIVE_TOWER[0]))
        summary = summarize_goal(spec)
        assert summary.count("red on table") == 1
