"""Cell search space: enumeration, feature encoding, operator decomposition.

The space is the fixed 4-node / 6-edge cell DAG with five operator choices
per edge (15,625 cells total) replicated over a three-stage macro skeleton
with channel widths 16/32/64.

Enumeration: a cell's six edge operators read as base-5 digits (most
significant digit first) give its structural code; the public index is that
code multiplied by a fixed unit modulo 5^6. The mixing step matters:
benchmark protocols carve contiguous index ranges into train/test splits,
and under plain lexicographic order such ranges pin entire edges to a
subset of operators (e.g. every index below 3125 starts with a NONE edge),
which makes the splits structurally disjoint instead of representative.
The multiplier is chosen so every (edge, operator) pair appears near
uniformly within the standard 900-architecture windows; index 0 still
denotes the empty all-NONE cell.
"""

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

NUM_EDGES = 6
NUM_ARCHITECTURES = 5**NUM_EDGES  # 15,625

# Index mixing: index = (_MIX_INV * code) mod 5^6, code = (_MIX * index) mod 5^6.
# 5407 is coprime to 5 and spreads each digit near uniformly over the
# [0, 900) and [1800, 2700) windows used by the evaluation protocol.
_MIX = 5407
_MIX_INV = 2543  # pow(_MIX, -1, 5**6)

# Edge order within the cell DAG: (0->1),(0->2),(0->3),(1->2),(1->3),(2->3).
EDGE_ENDPOINTS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

CHANNEL_WIDTHS = (16, 32, 64)


class OperatorKind(IntEnum):
    NONE = 0
    SKIP_CONNECT = 1
    CONV_1X1 = 2
    CONV_3X3 = 3
    AVGPOOL_3X3 = 4


NUM_KINDS = len(OperatorKind)
NUM_VARIANTS = NUM_KINDS * len(CHANNEL_WIDTHS)  # 15

CONV_KINDS = frozenset({OperatorKind.CONV_1X1, OperatorKind.CONV_3X3})

_CHANNEL_ORDER = {w: i for i, w in enumerate(CHANNEL_WIDTHS)}


@dataclass(frozen=True)
class OperatorVariant:
    """One of the 15 (operator kind, channel width) combinations."""

    kind: OperatorKind
    channels: int

    def __post_init__(self):
        if self.channels not in _CHANNEL_ORDER:
            raise ValueError(f"channels must be one of {CHANNEL_WIDTHS}, got {self.channels}")

    @property
    def index(self) -> int:
        return int(self.kind) * len(CHANNEL_WIDTHS) + _CHANNEL_ORDER[self.channels]

    @property
    def name(self) -> str:
        return f"{self.kind.name.lower()}_c{self.channels}"


ALL_VARIANTS = tuple(
    OperatorVariant(kind, width) for kind in OperatorKind for width in CHANNEL_WIDTHS
)


def variant_from_index(index: int) -> OperatorVariant:
    if not 0 <= index < NUM_VARIANTS:
        raise ValueError(f"variant index must be in [0, {NUM_VARIANTS - 1}], got {index}")
    return ALL_VARIANTS[index]


@dataclass(frozen=True)
class CellArchitecture:
    """A cell: six edge operators plus its canonical enumeration index."""

    index: int
    edges: tuple

    def __post_init__(self):
        if len(self.edges) != NUM_EDGES:
            raise ValueError(f"a cell has exactly {NUM_EDGES} edges, got {len(self.edges)}")
        object.__setattr__(self, "edges", tuple(OperatorKind(e) for e in self.edges))
        derived = index_from_edges(self.edges)
        if derived != self.index:
            raise ValueError(
                f"index {self.index} inconsistent with edges (expected {derived})"
            )


def structural_code(edges) -> int:
    """Base-5 value of the edge operators, most significant digit first."""
    value = 0
    for op in edges:
        value = value * NUM_KINDS + int(op)
    return value


def index_from_edges(edges) -> int:
    return (_MIX_INV * structural_code(edges)) % NUM_ARCHITECTURES


def architecture_from_index(index: int) -> CellArchitecture:
    """Decode an enumeration index into its cell."""
    if not 0 <= index < NUM_ARCHITECTURES:
        raise ValueError(
            f"architecture index must be in [0, {NUM_ARCHITECTURES - 1}], got {index}"
        )
    digits = []
    remaining = (_MIX * index) % NUM_ARCHITECTURES
    for _ in range(NUM_EDGES):
        remaining, digit = divmod(remaining, NUM_KINDS)
        digits.append(OperatorKind(digit))
    return CellArchitecture(index=index, edges=tuple(reversed(digits)))


def architecture_from_edges(edges) -> CellArchitecture:
    return CellArchitecture(index=index_from_edges([OperatorKind(e) for e in edges]), edges=tuple(edges))


@dataclass(frozen=True)
class MacroConfig:
    """Macro skeleton: three stages at widths 16/32/64, each repeating the
    cell `cells_per_stage` times."""

    cells_per_stage: int = 5

    def __post_init__(self):
        if self.cells_per_stage < 1:
            raise ValueError(f"cells_per_stage must be >= 1, got {self.cells_per_stage}")

    @property
    def stage_widths(self) -> tuple:
        return CHANNEL_WIDTHS


ENCODING_LENGTH = NUM_EDGES * NUM_KINDS  # 30


def encode_architecture(arch: CellArchitecture) -> np.ndarray:
    """Per-edge one-hot feature vector, one length-5 block per edge."""
    vec = np.zeros(ENCODING_LENGTH)
    for e, op in enumerate(arch.edges):
        vec[e * NUM_KINDS + int(op)] = 1.0
    return vec


def operator_multiset(arch: CellArchitecture, macro: MacroConfig) -> np.ndarray:
    """Count vector over the 15 operator variants for the whole network.

    Each stage contributes its cell's non-NONE edge operators at the stage
    width, `cells_per_stage` times. NONE edges are absent operators and
    contribute nothing.
    """
    counts = np.zeros(NUM_VARIANTS, dtype=np.int64)
    n_widths = len(macro.stage_widths)
    for op in arch.edges:
        if op is OperatorKind.NONE:
            continue
        base = int(op) * n_widths
        for stage in range(n_widths):
            counts[base + stage] += macro.cells_per_stage
    return counts


def fusable_fraction(arch: CellArchitecture) -> float:
    """Fraction of non-NONE edges that are convolutions; 0 for an empty cell."""
    active = [op for op in arch.edges if op is not OperatorKind.NONE]
    if not active:
        return 0.0
    return sum(op in CONV_KINDS for op in active) / len(active)
