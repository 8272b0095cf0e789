"""MLB team, park and division tables (2017-2019 alignment, Retrosheet codes)."""

from __future__ import annotations

# team code -> (league, division, home park)
TEAMS: dict[str, tuple[str, str, str]] = {
    "BAL": ("AL", "AL East", "BAL12"),
    "BOS": ("AL", "AL East", "BOS07"),
    "NYA": ("AL", "AL East", "NYC21"),
    "TBA": ("AL", "AL East", "STP01"),
    "TOR": ("AL", "AL East", "TOR02"),
    "CHA": ("AL", "AL Central", "CHI12"),
    "CLE": ("AL", "AL Central", "CLE08"),
    "DET": ("AL", "AL Central", "DET05"),
    "KCA": ("AL", "AL Central", "KAN06"),
    "MIN": ("AL", "AL Central", "MIN04"),
    "ANA": ("AL", "AL West", "ANA01"),
    "HOU": ("AL", "AL West", "HOU03"),
    "OAK": ("AL", "AL West", "OAK01"),
    "SEA": ("AL", "AL West", "SEA03"),
    "TEX": ("AL", "AL West", "ARL02"),
    "ATL": ("NL", "NL East", "ATL03"),
    "MIA": ("NL", "NL East", "MIA02"),
    "NYN": ("NL", "NL East", "NYC20"),
    "PHI": ("NL", "NL East", "PHI13"),
    "WAS": ("NL", "NL East", "WAS11"),
    "CHN": ("NL", "NL Central", "CHI11"),
    "CIN": ("NL", "NL Central", "CIN09"),
    "MIL": ("NL", "NL Central", "MIL06"),
    "PIT": ("NL", "NL Central", "PIT08"),
    "SLN": ("NL", "NL Central", "STL10"),
    "ARI": ("NL", "NL West", "PHO01"),
    "COL": ("NL", "NL West", "DEN02"),
    "LAN": ("NL", "NL West", "LOS03"),
    "SDN": ("NL", "NL West", "SAN02"),
    "SFN": ("NL", "NL West", "SFO03"),
}

COORS_FIELD = "DEN02"


def division_of(team: str) -> str | None:
    entry = TEAMS.get(team)
    return entry[1] if entry else None


def split_team_season(code: str) -> tuple[str, int]:
    """``"ANA2017"`` -> ``("ANA", 2017)``."""
    if len(code) < 5 or not code[-4:].isdigit():
        raise ValueError(f"not a team-season code: {code!r}")
    return code[:-4], int(code[-4:])


def team_season(team: str, year: int) -> str:
    return f"{team}{year}"
