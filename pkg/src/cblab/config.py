"""YAML configuration for mechanisms and moment functions.

A branching block holds `beta`, `sigma`, and a nested `measure` block; an
immigration block holds `h` and `measure`.  Measure blocks carry `kind`
plus the family's fields (`c`, `alpha`, `theta`, `z_lo`, `atoms`,
`components`, `zs`/`densities`/`tail_alpha`, `inner`/`k`).  Parsing and
serializing round-trip to the same objects.
"""

from __future__ import annotations

import yaml

from .measures import measure_from_dict
from .mechanisms import BranchingMechanism, ImmigrationMechanism
from .moments import MomentFunction, moment_function_from_dict


def mechanism_from_dict(doc: dict) -> BranchingMechanism:
    if doc is None:
        raise ValueError("empty mechanism configuration")
    unknown = set(doc) - {"beta", "sigma", "measure"}
    if unknown:
        raise ValueError(f"mechanism config: unknown keys {sorted(unknown)}")
    return BranchingMechanism(
        beta=float(doc.get("beta", 0.0)),
        sigma=float(doc.get("sigma", 0.0)),
        m=measure_from_dict(doc.get("measure")),
    )


def immigration_from_dict(doc: dict) -> ImmigrationMechanism:
    if doc is None:
        raise ValueError("empty immigration configuration")
    unknown = set(doc) - {"h", "measure"}
    if unknown:
        raise ValueError(f"immigration config: unknown keys {sorted(unknown)}")
    return ImmigrationMechanism(h=float(doc.get("h", 0.0)), n=measure_from_dict(doc.get("measure")))


def load_mechanism(path: str) -> BranchingMechanism:
    with open(path) as fh:
        return mechanism_from_dict(yaml.safe_load(fh))


def load_immigration(path: str) -> ImmigrationMechanism:
    with open(path) as fh:
        return immigration_from_dict(yaml.safe_load(fh))


def load_moment_function(path: str) -> MomentFunction:
    with open(path) as fh:
        return moment_function_from_dict(yaml.safe_load(fh))


def dump_mechanism(mech: BranchingMechanism) -> str:
    return yaml.safe_dump(mech.to_dict(), sort_keys=True)


def dump_immigration(imm: ImmigrationMechanism) -> str:
    return yaml.safe_dump(imm.to_dict(), sort_keys=True)
