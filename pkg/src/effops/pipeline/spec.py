"""Pipeline strings such as ``"DEPLQ"`` and their ordering rules."""
from __future__ import annotations

from dataclasses import dataclass

OPERATORS = "DPELQ"
GROUP_I = frozenset("DPE")
GROUP_II = frozenset("LQ")
EMPTY = "O"


class PipelineParseError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineSpec:
    ops: tuple[str, ...]
    canonical_string: str

    def __str__(self) -> str:
        return self.to_string()

    def to_string(self) -> str:
        return "".join(self.ops) or EMPTY

    def prefixes(self) -> list[str]:
        return ["".join(self.ops[:k]) for k in range(1, len(self.ops) + 1)]


def parse(s: str) -> PipelineSpec:
    """Parse without checking order; ``"O"`` is the empty pipeline."""
    s = s.strip()
    if s == EMPTY:
        return PipelineSpec((), EMPTY)
    if not s:
        raise PipelineParseError("empty pipeline string; use 'O' for no operators")
    seen = set()
    for ch in s:
        if ch == EMPTY:
            raise PipelineParseError("'O' cannot be combined with other operators")
        if ch not in OPERATORS:
            raise PipelineParseError(f"unknown operator {ch!r} in {s!r}")
        if ch in seen:
            raise PipelineParseError(f"operator {ch!r} repeated in {s!r}")
        seen.add(ch)
    return PipelineSpec(tuple(s), s)


def validate(spec: PipelineSpec) -> list[str]:
    """Violations of the ordering rules; an empty list means the pipeline is legal.

    Training operators (D, P, E) must precede inference-time ones (L, Q), and
    D may not follow P.
    """
    out = []
    ops = spec.ops
    for i, op in enumerate(ops):
        if op in GROUP_I:
            late = [o for o in ops[:i] if o in GROUP_II]
            if late:
                out.append(f"{op} after {''.join(late)}: training operators must precede L and Q")
    if "D" in ops and "P" in ops and ops.index("D") > ops.index("P"):
        out.append("D after P: pruning savings cannot be passed to a distilled student")
    return out


def is_valid(s: str) -> bool:
    try:
        return not validate(parse(s))
    except PipelineParseError:
        return False
