"""Workflow description types, validation, core demand, task state machine."""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pilotflow.model import (
    IllegalTransitionError,
    LifecycleEvent,
    Pipeline,
    Stage,
    StagingDirective,
    StagingMode,
    TaskKind,
    TaskRecord,
    TaskSpec,
    TaskState,
    Workflow,
    WorkflowValidationError,
    advance_task_state,
    load_workflow,
    peak_core_demand,
    save_workflow,
    validate_workflow,
    workflow_from_dict,
    workflow_to_dict,
)
from pilotflow.profiling import ProfileSink


def make_task(tid: str, cores: int = 1, duration: float = 0.0) -> TaskSpec:
    return TaskSpec(
        id=tid,
        kind=TaskKind.NULL_WORKLOAD,
        executable="sleep",
        arguments=("0",),
        cores=cores,
        expected_duration=duration,
    )


def make_workflow(widths_per_pipeline: list[list[list[int]]]) -> Workflow:
    """Build a workflow from nested core widths: pipelines -> stages -> tasks."""
    pipelines = []
    for p, stages in enumerate(widths_per_pipeline):
        stage_objs = []
        for s, widths in enumerate(stages):
            tasks = [
                make_task(f"t-{p}-{s}-{i}", cores=w) for i, w in enumerate(widths)
            ]
            stage_objs.append(Stage(index=s, tasks=tasks))
        pipelines.append(Pipeline(id=f"p-{p}", stages=stage_objs))
    return Workflow(name="wf", pipelines=pipelines)


# --- validation ---------------------------------------------------------


def test_valid_workflow_passes():
    wf = make_workflow([[[1], [2, 2]], [[4]]])
    assert validate_workflow(wf).ok


def test_empty_workflow_rejected():
    result = validate_workflow(Workflow(name="empty", pipelines=[]))
    assert not result.ok
    assert any("no pipelines" in v for v in result.violations)


def test_empty_stage_rejected():
    wf = Workflow(
        name="wf",
        pipelines=[Pipeline(id="p", stages=[Stage(index=0, tasks=[])])],
    )
    result = validate_workflow(wf)
    assert any("empty stage" in v for v in result.violations)


def test_duplicate_task_id_rejected():
    wf = Workflow(
        name="wf",
        pipelines=[
            Pipeline(
                id="p",
                stages=[Stage(index=0, tasks=[make_task("dup"), make_task("dup")])],
            )
        ],
    )
    result = validate_workflow(wf)
    assert any("duplicate task id 'dup'" in v for v in result.violations)


def test_duplicate_pipeline_id_rejected():
    wf = Workflow(
        name="wf",
        pipelines=[
            Pipeline(id="p", stages=[Stage(index=0, tasks=[make_task("a")])]),
            Pipeline(id="p", stages=[Stage(index=0, tasks=[make_task("b")])]),
        ],
    )
    result = validate_workflow(wf)
    assert any("duplicate pipeline id" in v for v in result.violations)


def test_stage_index_must_match_position():
    wf = Workflow(
        name="wf",
        pipelines=[Pipeline(id="p", stages=[Stage(index=3, tasks=[make_task("a")])])],
    )
    result = validate_workflow(wf)
    assert any("does not match position" in v for v in result.violations)


def test_nonpositive_cores_rejected():
    wf = Workflow(
        name="wf",
        pipelines=[
            Pipeline(id="p", stages=[Stage(index=0, tasks=[make_task("a", cores=0)])])
        ],
    )
    result = validate_workflow(wf)
    assert any("cores must be >= 1" in v for v in result.violations)


def test_negative_duration_rejected():
    task = make_task("a")
    bad = TaskSpec(
        id="a",
        kind=task.kind,
        executable=task.executable,
        expected_duration=-1.0,
    )
    wf = Workflow(
        name="wf", pipelines=[Pipeline(id="p", stages=[Stage(index=0, tasks=[bad])])]
    )
    result = validate_workflow(wf)
    assert any("expected_duration" in v for v in result.violations)


def test_empty_staging_path_rejected():
    bad = TaskSpec(
        id="a",
        kind=TaskKind.SIMULATED,
        executable="md",
        inputs=(StagingDirective("", "target", StagingMode.COPY_IN),),
    )
    wf = Workflow(
        name="wf", pipelines=[Pipeline(id="p", stages=[Stage(index=0, tasks=[bad])])]
    )
    result = validate_workflow(wf)
    assert any("empty source/target" in v for v in result.violations)


def test_all_violations_collected():
    wf = Workflow(
        name="wf",
        pipelines=[
            Pipeline(id="p", stages=[]),
            Pipeline(id="p", stages=[Stage(index=0, tasks=[])]),
        ],
    )
    result = validate_workflow(wf)
    assert len(result.violations) >= 3


# --- peak core demand -----------------------------------------------------


def peak_demand_oracle(wf: Workflow) -> int:
    """Exhaustive second implementation: try every combination of one
    concurrently-running stage per pipeline and take the widest total."""
    per_pipeline_stage_widths = [
        [sum(t.cores for t in stage.tasks) for stage in pipeline.stages]
        for pipeline in wf.pipelines
    ]
    best = 0
    for combo in itertools.product(*per_pipeline_stage_widths):
        best = max(best, sum(combo))
    return best


def test_peak_demand_single_task():
    assert peak_core_demand(make_workflow([[[1]]])) == 1


def test_peak_demand_mixed_pipelines():
    # widest stages: 5, 1, 4
    wf = make_workflow([[[2], [5], [3]], [[1], [1]], [[4]]])
    assert peak_core_demand(wf) == 10
    assert peak_demand_oracle(wf) == 10


def test_peak_demand_ensemble_profile():
    # eight identical pipelines whose widest stage needs 8 cores
    profile = [[[1], [1], [8], [8], [8], [8], [1]] for _ in range(8)]
    wf = make_workflow(profile)
    assert peak_core_demand(wf) == 64
    assert peak_demand_oracle(wf) == 64


def test_peak_demand_multi_task_stage():
    wf = make_workflow([[[2, 3, 4]]])
    assert peak_core_demand(wf) == 9


def test_peak_demand_rejects_invalid():
    with pytest.raises(WorkflowValidationError):
        peak_core_demand(Workflow(name="bad", pipelines=[]))


@st.composite
def workflows(draw):
    shape = draw(
        st.lists(
            st.lists(
                st.lists(st.integers(min_value=1, max_value=8), min_size=1, max_size=3),
                min_size=1,
                max_size=4,
            ),
            min_size=1,
            max_size=4,
        )
    )
    return make_workflow(shape)


@given(workflows())
@settings(max_examples=100)
def test_peak_demand_matches_oracle(wf):
    assert peak_core_demand(wf) == peak_demand_oracle(wf)


@given(workflows(), st.randoms())
@settings(max_examples=50)
def test_peak_demand_pipeline_order_invariant(wf, rng):
    baseline = peak_core_demand(wf)
    shuffled = list(wf.pipelines)
    rng.shuffle(shuffled)
    assert peak_core_demand(Workflow(name="wf", pipelines=shuffled)) == baseline


# --- task state machine ---------------------------------------------------

LEGAL_PATH = [
    (LifecycleEvent.TRANSLATED, TaskState.TRANSLATED, "translate_end"),
    (LifecycleEvent.SCHEDULED, TaskState.SCHEDULED, "schedule"),
    (LifecycleEvent.STAGE_IN_STARTED, TaskState.STAGING_IN, "stage_in_begin"),
    (LifecycleEvent.EXEC_STARTED, TaskState.EXECUTING, "exec_begin"),
    (LifecycleEvent.COMPLETED, TaskState.STAGING_OUT, "stage_out_begin"),
    (LifecycleEvent.STAGED_OUT, TaskState.DONE, "done"),
]


def fresh_record() -> TaskRecord:
    return TaskRecord(task=make_task("t0"), pipeline_id="p0", stage_index=0)


def test_happy_path_states_and_events():
    record = fresh_record()
    sink = ProfileSink()
    for step, (event, state, profile_name) in enumerate(LEGAL_PATH):
        advance_task_state(record, event, sink=sink, time=float(step))
        assert record.state is state
    names = [e.name for e in sink.events()]
    assert names == [name for _, _, name in LEGAL_PATH]


def test_skipping_a_state_is_illegal():
    record = fresh_record()
    with pytest.raises(IllegalTransitionError) as excinfo:
        advance_task_state(record, LifecycleEvent.SCHEDULED)
    assert "NEW" in str(excinfo.value)
    assert "scheduled" in str(excinfo.value)
    assert record.state is TaskState.NEW


def test_terminal_states_absorb():
    for terminal_event in (LifecycleEvent.FAILED, LifecycleEvent.CANCELED):
        record = fresh_record()
        advance_task_state(record, terminal_event)
        with pytest.raises(IllegalTransitionError):
            advance_task_state(record, LifecycleEvent.TRANSLATED)


def test_done_absorbs():
    record = fresh_record()
    for event, _, _ in LEGAL_PATH:
        advance_task_state(record, event)
    assert record.state is TaskState.DONE
    with pytest.raises(IllegalTransitionError):
        advance_task_state(record, LifecycleEvent.FAILED)


def test_failure_reachable_from_every_nonterminal_state():
    for depth in range(len(LEGAL_PATH)):
        record = fresh_record()
        for event, _, _ in LEGAL_PATH[:depth]:
            advance_task_state(record, event)
        if record.state.is_terminal:
            continue
        advance_task_state(record, LifecycleEvent.FAILED)
        assert record.state is TaskState.FAILED


def test_cancel_reachable_from_every_nonterminal_state():
    for depth in range(len(LEGAL_PATH)):
        record = fresh_record()
        for event, _, _ in LEGAL_PATH[:depth]:
            advance_task_state(record, event)
        if record.state.is_terminal:
            continue
        advance_task_state(record, LifecycleEvent.CANCELED)
        assert record.state is TaskState.CANCELED


# Independent statement of the whole transition relation, written out by
# hand so the property test does not share code with the implementation.
FORWARD_TABLE = {
    (TaskState.NEW, LifecycleEvent.TRANSLATED): TaskState.TRANSLATED,
    (TaskState.TRANSLATED, LifecycleEvent.SCHEDULED): TaskState.SCHEDULED,
    (TaskState.SCHEDULED, LifecycleEvent.STAGE_IN_STARTED): TaskState.STAGING_IN,
    (TaskState.STAGING_IN, LifecycleEvent.EXEC_STARTED): TaskState.EXECUTING,
    (TaskState.EXECUTING, LifecycleEvent.COMPLETED): TaskState.STAGING_OUT,
    (TaskState.STAGING_OUT, LifecycleEvent.STAGED_OUT): TaskState.DONE,
}
TERMINALS = {TaskState.DONE, TaskState.FAILED, TaskState.CANCELED}


def transition_oracle(state: TaskState, event: LifecycleEvent) -> TaskState | None:
    """None means the event is illegal in this state."""
    if state in TERMINALS:
        return None
    if event is LifecycleEvent.FAILED:
        return TaskState.FAILED
    if event is LifecycleEvent.CANCELED:
        return TaskState.CANCELED
    return FORWARD_TABLE.get((state, event))


@given(st.lists(st.sampled_from(list(LifecycleEvent)), max_size=12))
@settings(max_examples=200)
def test_random_event_sequences_follow_the_table(events):
    record = fresh_record()
    for event in events:
        before = record.state
        expected = transition_oracle(before, event)
        if expected is None:
            with pytest.raises(IllegalTransitionError):
                advance_task_state(record, event)
            assert record.state is before
        else:
            advance_task_state(record, event)
            assert record.state is expected


# --- serialization ---------------------------------------------------------


def staged_workflow() -> Workflow:
    task = TaskSpec(
        id="a",
        kind=TaskKind.SIMULATED,
        executable="md",
        arguments=("minimize",),
        cores=8,
        expected_duration=0.25,
        inputs=(StagingDirective("input/x.tar", "x", StagingMode.TAR_IN),),
        outputs=(StagingDirective("out", "results/out.tar", StagingMode.TAR_OUT),),
        stage_label="minimize",
    )
    return Workflow(
        name="roundtrip",
        pipelines=[Pipeline(id="p", stages=[Stage(index=0, tasks=[task])])],
    )


def test_dict_round_trip():
    wf = staged_workflow()
    assert workflow_from_dict(workflow_to_dict(wf)) == wf


def test_file_round_trip(tmp_path):
    wf = staged_workflow()
    path = tmp_path / "wf.json"
    save_workflow(wf, path)
    assert load_workflow(path) == wf
