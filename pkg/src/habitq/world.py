"""Device world model: joint states, actions, and their integer codecs.

Every registered device exposes a discrete, ordered state alphabet. A joint
state assigns each device exactly one label and identifies a Q-table row; an
action is an idempotent set of target assignments (possibly empty = noop) and
identifies a Q-table column. Both sides encode to dense integer indices via a
mixed-radix scheme over the lexicographically ordered device list, so the
table layout is deterministic and independent of seeds or insertion order.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

NOOP_NAME = "noop"

# Device ids and state labels double as tokens in canonical action names and
# state keys, so the delimiter characters (: + = ,) are off limits.
_IDENT_RE = re.compile(r"^[A-Za-z0-9_.\-]+$")


def _check_ident(kind: str, value: str) -> str:
    if not value or not _IDENT_RE.match(value):
        raise ValueError(f"{kind} {value!r} must be nonempty and use only [A-Za-z0-9_.-]")
    return value


@dataclass(frozen=True)
class DeviceSpec:
    """One device and its ordered state alphabet (fixed at registration)."""

    id: str
    states: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        _check_ident("device id", self.id)
        if not self.states:
            raise ValueError(f"device {self.id!r} has no states")
        for label in self.states:
            _check_ident("state label", label)
        if len(set(self.states)) != len(self.states):
            raise ValueError(f"device {self.id!r} has duplicate state labels")


@dataclass(frozen=True)
class JointState:
    """Total assignment of every registered device to one of its labels.

    Items are kept sorted by device id so equal assignments compare and hash
    equal regardless of construction order. Build through StateSpace.state()
    to get validation against the registered alphabets.
    """

    items: tuple[tuple[str, str], ...]

    @classmethod
    def from_mapping(cls, assignment: Mapping[str, str]) -> "JointState":
        return cls(tuple(sorted(assignment.items())))

    def as_dict(self) -> dict[str, str]:
        return dict(self.items)

    def get(self, device_id: str, default: str | None = None) -> str | None:
        for dev, label in self.items:
            if dev == device_id:
                return label
        return default

    def __getitem__(self, device_id: str) -> str:
        label = self.get(device_id)
        if label is None:
            raise KeyError(device_id)
        return label

    @property
    def key(self) -> str:
        """Readable row key, e.g. ``"lamp=off,tv=on"``."""
        return ",".join(f"{dev}={label}" for dev, label in self.items)

    def __str__(self) -> str:
        return self.key


@dataclass(frozen=True)
class ActionRecord:
    """Target-state assignment for a subset of devices; empty means noop.

    Actions are idempotent: applying one twice equals applying it once, so
    every action is applicable from every state and the max over actions in
    the Q-update is well-defined across the whole vocabulary.
    """

    targets: tuple[tuple[str, str], ...]

    @classmethod
    def noop(cls) -> "ActionRecord":
        return cls(())

    @classmethod
    def from_targets(cls, targets: Mapping[str, str]) -> "ActionRecord":
        return cls(tuple(sorted(targets.items())))

    @classmethod
    def parse(cls, name: str) -> "ActionRecord":
        """Inverse of :attr:`name`; accepts tokens in any order."""
        if name == NOOP_NAME:
            return cls.noop()
        targets: dict[str, str] = {}
        for token in name.split("+"):
            dev, sep, label = token.partition(":")
            if not sep or not dev or not label:
                raise ValueError(f"malformed action token {token!r} in {name!r}")
            if dev in targets:
                raise ValueError(f"duplicate device {dev!r} in action name {name!r}")
            targets[dev] = label
        return cls.from_targets(targets)

    def __post_init__(self) -> None:
        object.__setattr__(self, "targets", tuple(sorted(self.targets)))
        seen = [dev for dev, _ in self.targets]
        if len(set(seen)) != len(seen):
            raise ValueError(f"action targets repeat a device: {seen}")

    @property
    def name(self) -> str:
        """Canonical name: device-id-sorted ``dev:label`` tokens joined by ``+``."""
        if not self.targets:
            return NOOP_NAME
        return "+".join(f"{dev}:{label}" for dev, label in self.targets)

    @property
    def is_noop(self) -> bool:
        return not self.targets

    def as_dict(self) -> dict[str, str]:
        return dict(self.targets)

    def __str__(self) -> str:
        return self.name


class StateSpace:
    """Canonically ordered device registry with mixed-radix state codecs.

    Devices are sorted by id at build time; the first device is the most
    significant digit. ``cardinality`` is the product of alphabet sizes.
    """

    def __init__(self, devices: Sequence[DeviceSpec]):
        if not devices:
            raise ValueError("state space needs at least one device")
        ordered = tuple(sorted(devices, key=lambda d: d.id))
        ids = [d.id for d in ordered]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate device id(s): {', '.join(dupes)}")
        self.devices = ordered
        self._device_pos = {d.id: i for i, d in enumerate(ordered)}
        self._digit = {d.id: {label: k for k, label in enumerate(d.states)} for d in ordered}
        # place value of device i is the product of the radices to its right
        self._place = [1] * len(ordered)
        for i in range(len(ordered) - 2, -1, -1):
            self._place[i] = self._place[i + 1] * len(ordered[i + 1].states)
        self.cardinality = self._place[0] * len(ordered[0].states)

    def device(self, device_id: str) -> DeviceSpec:
        pos = self._device_pos.get(device_id)
        if pos is None:
            raise ValueError(f"unknown device {device_id!r}")
        return self.devices[pos]

    def state(self, assignment: Mapping[str, str]) -> JointState:
        """Validated JointState from a device→label mapping (must be total)."""
        self._check_total(assignment)
        return JointState.from_mapping(assignment)

    def _check_total(self, assignment: Mapping[str, str]) -> None:
        for dev, label in assignment.items():
            self._check_label(dev, label)
        missing = [d.id for d in self.devices if d.id not in assignment]
        if missing:
            raise ValueError(f"assignment missing device(s): {', '.join(missing)}")

    def _check_label(self, device_id: str, label: str) -> None:
        digits = self._digit.get(device_id)
        if digits is None:
            raise ValueError(f"unknown device {device_id!r}")
        if label not in digits:
            raise ValueError(f"device {device_id!r} has no state {label!r}")

    def encode_state(self, s: JointState) -> int:
        """Mixed-radix index of a joint state in [0, cardinality)."""
        assignment = s.as_dict()
        self._check_total(assignment)
        index = 0
        for i, dev in enumerate(self.devices):
            index += self._digit[dev.id][assignment[dev.id]] * self._place[i]
        return index

    def decode_state(self, index: int) -> JointState:
        if not 0 <= index < self.cardinality:
            raise IndexError(f"state index {index} out of range [0, {self.cardinality})")
        assignment = {}
        rest = index
        for i, dev in enumerate(self.devices):
            digit, rest = divmod(rest, self._place[i])
            assignment[dev.id] = dev.states[digit]
        return JointState.from_mapping(assignment)

    def all_states(self) -> Iterator[JointState]:
        """Every joint state in index order."""
        labels = [d.states for d in self.devices]
        ids = [d.id for d in self.devices]
        for combo in itertools.product(*labels):
            yield JointState.from_mapping(dict(zip(ids, combo)))

    def derive_action(self, current: JointState, nxt: JointState) -> ActionRecord:
        """Action that moves ``current`` to ``nxt``: targets only the devices
        whose label changes; identical states derive noop."""
        cur = current.as_dict()
        new = nxt.as_dict()
        self._check_total(cur)
        self._check_total(new)
        return ActionRecord.from_targets(
            {dev: label for dev, label in new.items() if cur[dev] != label}
        )

    def apply_action(self, s: JointState, a: ActionRecord) -> JointState:
        """Targeted devices take their target label, all others keep theirs."""
        assignment = s.as_dict()
        self._check_total(assignment)
        for dev, label in a.targets:
            self._check_label(dev, label)
            assignment[dev] = label
        return JointState.from_mapping(assignment)


def build_state_space(specs: Sequence[DeviceSpec]) -> StateSpace:
    return StateSpace(specs)


class ActionVocabulary:
    """Closed, ordered action set: noop at index 0, the rest sorted by name.

    The vocabulary is frozen at scenario load (plan-rule actions, oracle
    preferences, and noop); encode/decode are mutually inverse over it.
    """

    def __init__(self, actions: Iterable[ActionRecord] = ()):
        unique = {a.name: a for a in actions}
        unique.pop(NOOP_NAME, None)
        ordered = [ActionRecord.noop()] + [unique[n] for n in sorted(unique)]
        self.actions: tuple[ActionRecord, ...] = tuple(ordered)
        self._index = {a.name: i for i, a in enumerate(self.actions)}

    @classmethod
    def build(cls, actions: Iterable[ActionRecord] = ()) -> "ActionVocabulary":
        return cls(actions)

    def register(self, a: ActionRecord) -> "ActionVocabulary":
        """New vocabulary including ``a`` (ordering invariants preserved)."""
        return ActionVocabulary(self.actions + (a,))

    def encode_action(self, a: ActionRecord) -> int:
        index = self._index.get(a.name)
        if index is None:
            raise KeyError(f"action {a.name!r} is not in the vocabulary")
        return index

    def decode_action(self, index: int) -> ActionRecord:
        if not 0 <= index < len(self.actions):
            raise IndexError(f"action index {index} out of range [0, {len(self.actions)})")
        return self.actions[index]

    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.actions)

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[ActionRecord]:
        return iter(self.actions)

    def __contains__(self, a: ActionRecord) -> bool:
        return a.name in self._index
