"""
Conflict-averse combination of a main and an auxiliary gradient.

The auxiliary gradient loses its component opposing the main gradient; the
main gradient always passes through untouched.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from augsched.nn.gradients import GradientSet


def _project(aux: np.ndarray, main: np.ndarray) -> np.ndarray:
    main_sq = float(np.dot(main, main))
    dot = float(np.dot(aux, main))
    if main_sq == 0.0 or dot >= 0.0:
        return aux
    return aux - dot / main_sq * main


def project_conflict(g_aux: GradientSet, g_main: GradientSet, per_layer: bool = False) -> GradientSet:
    """
    Remove the part of ``g_aux`` pointing against ``g_main``

    Args:
        g_aux (GradientSet): auxiliary (distillation) gradient
        g_main (GradientSet): main (PPO) gradient
        per_layer (bool): project each named tensor separately instead of the
            single flattened vector

    Returns:
        GradientSet: adjusted auxiliary gradient; unchanged when the two agree
        or when ``g_main`` is zero

    Raises:
        ShapeError: if the two sets do not match
    """
    g_aux.check_matches(g_main)
    if per_layer:
        return GradientSet(OrderedDict(
            (name, _project(g_aux[name].ravel(), g_main[name].ravel()).reshape(g_aux[name].shape))
            for name in g_aux
        ))
    return g_aux.unflatten(_project(g_aux.flatten(), g_main.flatten()))


def pagrad_combine(g_main: GradientSet, g_aux: GradientSet, per_layer: bool = False) -> GradientSet:
    """g_main plus the conflict-free part of g_aux"""
    return g_main + project_conflict(g_aux, g_main, per_layer=per_layer)
