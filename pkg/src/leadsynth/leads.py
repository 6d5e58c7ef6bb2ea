"""Lead identifiers for the standard 12-lead system plus Frank XYZ leads."""

from __future__ import annotations

import enum

from .errors import UnknownLead


class LeadId(enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    AVR = "aVR"
    AVL = "aVL"
    AVF = "aVF"
    V1 = "V1"
    V2 = "V2"
    V3 = "V3"
    V4 = "V4"
    V5 = "V5"
    V6 = "V6"
    # Frank orthogonal leads
    X = "X"
    Y = "Y"
    Z = "Z"

    def __str__(self) -> str:
        return self.value

    @property
    def is_frank(self) -> bool:
        return self in FRANK_LEADS


STANDARD_12 = (
    LeadId.I, LeadId.II, LeadId.III,
    LeadId.AVR, LeadId.AVL, LeadId.AVF,
    LeadId.V1, LeadId.V2, LeadId.V3, LeadId.V4, LeadId.V5, LeadId.V6,
)

# the 8 linearly independent leads used by the Dower transforms
INDEPENDENT_8 = (
    LeadId.I, LeadId.II,
    LeadId.V1, LeadId.V2, LeadId.V3, LeadId.V4, LeadId.V5, LeadId.V6,
)

FRANK_LEADS = (LeadId.X, LeadId.Y, LeadId.Z)

# common spellings found in record headers (PTB uses vx/vy/vz for Frank leads)
_ALIASES = {
    "i": LeadId.I, "ii": LeadId.II, "iii": LeadId.III,
    "avr": LeadId.AVR, "avl": LeadId.AVL, "avf": LeadId.AVF,
    "v1": LeadId.V1, "v2": LeadId.V2, "v3": LeadId.V3,
    "v4": LeadId.V4, "v5": LeadId.V5, "v6": LeadId.V6,
    "x": LeadId.X, "y": LeadId.Y, "z": LeadId.Z,
    "vx": LeadId.X, "vy": LeadId.Y, "vz": LeadId.Z,
}


def parse_lead(name: str) -> LeadId:
    """Map a header lead name to a LeadId, accepting common spellings."""
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise UnknownLead(f"unrecognized lead name {name!r}") from None


def require_standard(leads) -> None:
    """Reject Frank leads where only the standard 12 are meaningful."""
    for lead in leads:
        if lead.is_frank:
            raise UnknownLead(f"Frank lead {lead} not valid in a 12-lead operation")
