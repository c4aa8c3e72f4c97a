"""Bundled contact-zone parameter sets.

Three training zones span soft-to-stiff tissue; two held-out zones probe
generalization (one a blend of the training zones, one a perturbation of the
stiffest).  All reach 20-30 N within 0.02 m of depth and have zero force at
the surface.  These are configuration values, not measured ground truth.
"""

from __future__ import annotations

from .contact import ContactModel

TRAINING_ZONES: dict[str, ContactModel] = {
    "zone1": ContactModel(a=3.0, b=-115.0, c=-3.0),
    "zone2": ContactModel(a=1.5, b=-145.0, c=-1.5),
    "zone3": ContactModel(a=5.0, b=-90.0, c=-5.0),
}

# zone4 blends zone1 and zone2 parameter-wise; zone5 perturbs zone3 by
# +15% amplitude / -15% rate.  Neither appears in any training dataset.
HELDOUT_ZONES: dict[str, ContactModel] = {
    "zone4": ContactModel(a=2.25, b=-130.0, c=-2.25),
    "zone5": ContactModel(a=5.75, b=-76.5, c=-5.75),
}

ALL_ZONES: dict[str, ContactModel] = {**TRAINING_ZONES, **HELDOUT_ZONES}


def get_zone(name: str) -> ContactModel:
    """Look up a bundled zone by name (zone1..zone5)."""
    try:
        return ALL_ZONES[name]
    except KeyError:
        known = ", ".join(ALL_ZONES)
        raise ValueError(f"unknown zone {name!r}, expected one of: {known}") from None
