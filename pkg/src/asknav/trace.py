"""Episode trace persistence and replay.

One JSONL file per episode: a header line, one line per step, a footer
line. Steps are flushed as they are appended so a crash mid-episode keeps
everything executed so far. Replay re-executes the recorded actions through
the environment and must land exactly on the recorded footer.
"""
from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

from . import env as E
from . import metrics as M

TRACE_FORMAT_VERSION = 1


class MalformedTrace(ValueError):
    """Trace file violates the header/steps/footer layout."""


class IndexGap(ValueError):
    """Appended step index is not the successor of the previous one."""


class ReplayDivergence(RuntimeError):
    """Re-executing the trace did not reproduce the recorded outcome."""


@dataclass
class StepRecord:
    index: int
    pose_before: E.Pose
    action: str
    actor: str
    help_requested: bool = False
    interrupt: bool = False
    distance_to_goal: float = 0.0      # geodesic meters after the step
    ask_probability: float | None = None
    fallback: bool = False             # expert stood in for a silent operator

    def to_dict(self) -> dict:
        d = {
            "type": "step",
            "index": self.index,
            "pose_before": self.pose_before.to_dict(),
            "action": self.action,
            "actor": self.actor,
            "help_requested": self.help_requested,
            "interrupt": self.interrupt,
            "distance_to_goal": self.distance_to_goal,
            "ask_probability": self.ask_probability,
        }
        if self.fallback:
            d["fallback"] = True
        return d

    @staticmethod
    def from_dict(d: dict) -> "StepRecord":
        return StepRecord(
            index=int(d["index"]),
            pose_before=E.Pose.from_dict(d["pose_before"]),
            action=str(d["action"]),
            actor=str(d["actor"]),
            help_requested=bool(d.get("help_requested", False)),
            interrupt=bool(d.get("interrupt", False)),
            distance_to_goal=float(d["distance_to_goal"]),
            ask_probability=(None if d.get("ask_probability") is None
                             else float(d["ask_probability"])),
            fallback=bool(d.get("fallback", False)),
        )


@dataclass
class EpisodeTrace:
    header: dict
    steps: list[StepRecord] = field(default_factory=list)
    footer: dict | None = None

    @property
    def spec(self) -> E.EpisodeSpec:
        return E.EpisodeSpec.from_dict(self.header["spec"])

    @property
    def result(self) -> M.EpisodeResult:
        if self.footer is None:
            raise MalformedTrace("trace has no footer")
        return M.EpisodeResult.from_dict(self.footer["result"])


def make_header(spec: E.EpisodeSpec, agent_id: str, help_policy_id: str,
                budget: int, intervener: str, timestamp: float | None = None) -> dict:
    return {
        "type": "header",
        "format_version": TRACE_FORMAT_VERSION,
        "spec": spec.to_dict(),
        "policy": {"agent": agent_id, "help": help_policy_id},
        "budget": budget,
        "intervener": intervener,
        "timestamp": time.time() if timestamp is None else timestamp,
    }


class TraceWriter:
    """Single-writer, append-only trace recorder.

    Keeps the in-memory EpisodeTrace in sync with the file (when a path is
    given); every append is flushed before returning.
    """

    def __init__(self, header: dict, path=None):
        self.trace = EpisodeTrace(header=dict(header))
        self._file = None
        if path is not None:
            self._file = open(path, "w", encoding="utf-8")
            self._write_line(self.trace.header)

    def _write_line(self, obj: dict) -> None:
        self._file.write(json.dumps(obj) + "\n")
        self._file.flush()

    def append_step(self, record: StepRecord) -> None:
        expected = self.trace.steps[-1].index + 1 if self.trace.steps else 0
        if record.index != expected:
            raise IndexGap(f"step index {record.index}, expected {expected}")
        self.trace.steps.append(record)
        if self._file:
            self._write_line(record.to_dict())

    def finish(self, status: str, result: M.EpisodeResult) -> EpisodeTrace:
        self.trace.footer = {"type": "footer", "status": status, "result": result.to_dict()}
        if self._file:
            self._write_line(self.trace.footer)
            os.fsync(self._file.fileno())
            self._file.close()
            self._file = None
        return self.trace


def load_trace(path) -> EpisodeTrace:
    with open(path, encoding="utf-8") as f:
        lines = [json.loads(ln) for ln in f if ln.strip()]
    if not lines or lines[0].get("type") != "header":
        raise MalformedTrace("first line must be the header")
    trace = EpisodeTrace(header=lines[0])
    for obj in lines[1:]:
        kind = obj.get("type")
        if kind == "step":
            trace.steps.append(StepRecord.from_dict(obj))
        elif kind == "footer":
            trace.footer = obj
        else:
            raise MalformedTrace(f"unexpected line type {kind!r}")
    return trace


def replay(trace: EpisodeTrace, gridmap: E.GridMap) -> M.EpisodeResult:
    """Re-execute the recorded actions and recompute the result.

    Raises ReplayDivergence on any mismatch with the recorded poses or the
    footer, which signals corruption or simulator nondeterminism.
    """
    if trace.footer is None:
        raise ReplayDivergence("trace has no footer (no terminal)")
    spec = trace.spec
    if spec.map_id != gridmap.map_id:
        raise ReplayDivergence(f"trace map {spec.map_id!r} vs given {gridmap.map_id!r}")
    state = E.start_state(gridmap, spec)
    for rec in trace.steps:
        if rec.pose_before != state.pose:
            raise ReplayDivergence(
                f"step {rec.index}: recorded pose {rec.pose_before} vs replayed {state.pose}")
        if state.terminated:
            raise ReplayDivergence(f"step {rec.index} appears after termination")
        E.step(gridmap, state, rec.action, rec.actor)
        if abs(state.distance_to_goal - rec.distance_to_goal) > 1e-12:
            raise ReplayDivergence(
                f"step {rec.index}: distance {rec.distance_to_goal} vs "
                f"replayed {state.distance_to_goal}")
    if not state.terminated:
        raise ReplayDivergence("recorded steps do not reach a terminal state")
    recorded = trace.result
    got = M.make_result(
        success=E.is_success(gridmap, state),
        l=spec.shortest_path_length,
        p=state.path_length,
        C_h=state.C_h, C_a=state.C_a,
        C_r=sum(1 for r in trace.steps if r.help_requested or r.interrupt),
    )
    for key, want in recorded.to_dict().items():
        have = got.to_dict()[key]
        if have != want:
            raise ReplayDivergence(f"footer field {key}: recorded {want} vs replayed {have}")
    return got


def trace_hash(trace: EpisodeTrace) -> str:
    """Content hash over steps and footer; the header timestamp is excluded
    so identical reruns hash identically."""
    header = {k: v for k, v in trace.header.items() if k != "timestamp"}
    blob = json.dumps(
        {"header": header,
         "steps": [s.to_dict() for s in trace.steps],
         "footer": trace.footer},
        sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def lint_trace(trace: EpisodeTrace, budget: int | None = None) -> list[str]:
    """Structural checks: contiguous indices, intervention runs within the
    budget, and no ask probabilities recorded under human control."""
    problems = []
    budget = trace.header.get("budget") if budget is None else budget
    run = 0
    for i, rec in enumerate(trace.steps):
        if rec.index != i:
            problems.append(f"step {i}: index {rec.index} not contiguous")
        if rec.actor == E.AGENT:
            run = 0
        else:
            run = 1 if (rec.help_requested or rec.interrupt) else run + 1
            if budget is not None and run > budget:
                problems.append(f"step {i}: non-agent run of {run} exceeds budget {budget}")
            if rec.ask_probability is not None and not rec.help_requested:
                problems.append(f"step {i}: ask_probability recorded under human control")
    if trace.footer is not None:
        res = trace.result
        C_h = sum(1 for r in trace.steps if r.actor != E.AGENT)
        C_a = len(trace.steps) - C_h
        if (C_h, C_a) != (res.C_h, res.C_a):
            problems.append(f"footer counters {(res.C_h, res.C_a)} vs steps {(C_h, C_a)}")
    return problems
