"""Named parameter sets for the reference surface plots.

Every preset is a flat mapping of config keys, expanded before any
explicit key so that later keys override it.
"""
from typing import Any, Dict, List

FIG1_ETA_NOTE = (
    "fig1i uses eta=0.5: the reference parameter list gives eta=1.7 for both (i) and (ii), and "
    "(ii) is described as (i) with eta=1.7, so (i) must differ"
)

# Constants shared by every preset
_LINEAR_CONSTANTS: Dict[str, Any] = {
    "family": "linear_aux",
    "n": 10,
    "mu": -0.5,
    "c0": 2.0,
    "amp_b0": 1.5,
    "a0_const": 1.3,
    "amp_a1": 2.3,
    "amp_a2": 3.0,
    "amp_b1": 1.9,
    "amp_b2": 0.7,
    "big_b": 5.0,
    "mass": 2.5,
}

_SURFACE_GRID: Dict[str, Any] = {"t_min": 0.0, "t_max": 1.0, "nt": 21, "v_min": -5.0, "v_max": 5.0, "nv": 21}
_MOMENT_GRID: Dict[str, Any] = {"t_min": 0.0, "t_max": 10.0, "nt": 101}


def _preset(**values) -> Dict[str, Any]:
    merged = dict(_LINEAR_CONSTANTS)
    merged.update(values)
    return merged


PRESETS: Dict[str, Dict[str, Any]] = {
    "fig1i": _preset(command="exact", eta=0.5, kind="power_law", beta=0.39, lift=True,
                     editorial_note=FIG1_ETA_NOTE, **_SURFACE_GRID),
    "fig1ii": _preset(command="exact", eta=1.7, kind="power_law", beta=0.39, lift=True, **_SURFACE_GRID),
    "fig1iii": _preset(command="exact", eta=0.5, kind="power_law", beta=0.99, lift=True, **_SURFACE_GRID),
    "fig2": _preset(command="moments", eta=0.5, kind="power_law", beta=0.99, lift=True, **_MOMENT_GRID),
    "fig3i": _preset(command="exact", eta=0.5, kind="caputo", alpha=0.39, t_horizon=20.0, lift=True,
                     **_SURFACE_GRID),
    "fig3ii": _preset(command="exact", eta=1.7, kind="caputo", alpha=0.39, t_horizon=20.0, lift=True,
                      **_SURFACE_GRID),
    "fig3iii": _preset(command="exact", eta=0.5, kind="caputo", alpha=0.99, t_horizon=20.0, lift=True,
                       **_SURFACE_GRID),
    "fig4": _preset(command="moments", eta=0.5, kind="caputo", alpha=0.39, t_horizon=20.0, lift=True,
                    **_MOMENT_GRID),
    "fig4ii": _preset(command="moments", eta=0.5, kind="caputo", alpha=0.99, t_horizon=20.0, lift=True,
                      **_MOMENT_GRID),
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Dict[str, Any]:
    """A copy of the named preset; raises KeyError for unknown names."""
    return dict(PRESETS[name])
