"""Hand-built end-to-end instances and an independent brute-force grid oracle.

Each instance carries its model text plus a numpy objective and numpy
constraint residuals (g(X) <= 0) written directly, so the oracle shares
no code with the solver.  Integer variables are enumerated; continuous
ones are gridded and then refined by repeated zooming around the best
feasible grid point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np


@dataclass
class Instance:
    name: str
    text: str
    # (lo, hi, integral) for each oracle variable, in model order
    box: List[Tuple[float, float, bool]]
    f: Callable
    g: List[Callable] = field(default_factory=list)
    # number of leading model variables the oracle sees (the rest are objective auxes)
    nvars: int = 0

    def __post_init__(self):
        self.nvars = self.nvars or len(self.box)


def _axes(box, center, half, pts):
    axes = []
    for j, (lo, hi, integral) in enumerate(box):
        if integral:
            axes.append(np.arange(np.ceil(lo), np.floor(hi) + 1))
        elif center is None:
            axes.append(np.linspace(lo, hi, pts))
        else:
            a = np.linspace(max(lo, center[j] - half[j]), min(hi, center[j] + half[j]), pts)
            axes.append(np.unique(np.append(a, center[j])))
    return axes


def grid_oracle(inst: Instance, pts: int = 401, zoom_pts: int = 41, levels: int = 80,
                feastol: float = 1e-9):
    """(best value, best point) by grid search with zoom refinement."""
    center = None
    best = (np.inf, None)
    half = np.array([(hi - lo) for lo, hi, _ in inst.box], dtype=float)
    for level in range(levels + 1):
        mesh = np.meshgrid(*_axes(inst.box, center, half, pts if level == 0 else zoom_pts),
                           indexing="ij")
        X = [m.ravel() for m in mesh]
        with np.errstate(all="ignore"):
            val = inst.f(*X)
            ok = np.isfinite(val)
            for g in inst.g:
                ok &= g(*X) <= feastol
        if ok.any():
            k = int(np.argmin(np.where(ok, val, np.inf)))
            if val[k] < best[0]:
                best = (float(val[k]), [float(x[k]) for x in X])
        if best[1] is None:
            return np.inf, None
        center = best[1]
        # first zoom covers a few coarse cells, later ones halve the window
        half = 4.0 * half / (pts - 1) if level == 0 else 0.5 * half
    return best


def _obj(expr_text: str, vars_text: str, cons_text: str = "", zbox: str = "[-1000, 1000]"):
    return (f"minimize\n{vars_text}\nvar z continuous {zbox} obj 1\n"
            f"con obj: {expr_text} - z <= 0\n{cons_text}")


INSTANCES: List[Instance] = [
    Instance(
        "box_qp_concave",
        _obj("-(x-0.3)^2 - 2*(y-0.6)^2 + x*y",
             "var x continuous [0, 1]\nvar y continuous [0, 1]"),
        [(0, 1, False), (0, 1, False)],
        lambda x, y: -(x - 0.3) ** 2 - 2 * (y - 0.6) ** 2 + x * y),
    Instance(
        "box_qp_integer",
        _obj("x^2 - 3*x*y + 2*y^2 + x - y",
             "var x integer [-3, 3]\nvar y continuous [-2, 2]"),
        [(-3, 3, True), (-2, 2, False)],
        lambda x, y: x ** 2 - 3 * x * y + 2 * y ** 2 + x - y),
    Instance(
        "quotient",
        _obj("(x + 2)/(y + 1)", "var x continuous [0, 4]\nvar y continuous [0, 3]",
             "con c: x*y >= 1\n"),
        [(0, 4, False), (0, 3, False)],
        lambda x, y: (x + 2) / (y + 1),
        [lambda x, y: 1 - x * y]),
    Instance(
        "soc_disc",
        "minimize\nvar x continuous [-2, 2] obj -1\nvar y continuous [-2, 2] obj -2\n"
        "con c: sqrt(x^2 + y^2) <= 1\n",
        [(-2, 2, False), (-2, 2, False)],
        lambda x, y: -x - 2 * y,
        [lambda x, y: np.sqrt(x ** 2 + y ** 2) - 1]),
    Instance(
        "concave_polytope",
        _obj("-(x-1)^2 - (y-2)^2", "var x continuous [0, 3]\nvar y continuous [0, 3]",
             "con c: x + y <= 4\n"),
        [(0, 3, False), (0, 3, False)],
        lambda x, y: -(x - 1) ** 2 - (y - 2) ** 2,
        [lambda x, y: x + y - 4]),
    Instance(
        "mixing_lot_sizing",
        "minimize\nvar y continuous [0, 10] obj 1\nvar b1 binary obj -2\nvar b2 binary obj -3\n"
        "var b3 binary obj -4\ncon cover: b1 + b2 + b3 >= 2\n"
        "vlb y >= 3 * b1\nvlb y >= 5 * b2\nvlb y >= 8 * b3\n",
        [(0, 10, False), (0, 1, True), (0, 1, True), (0, 1, True)],
        lambda y, b1, b2, b3: y - 2 * b1 - 3 * b2 - 4 * b3,
        [lambda y, b1, b2, b3: 2 - b1 - b2 - b3,
         lambda y, b1, b2, b3: 3 * b1 - y,
         lambda y, b1, b2, b3: 5 * b2 - y,
         lambda y, b1, b2, b3: 8 * b3 - y]),
    Instance(
        "exp_bilinear",
        _obj("exp(x) - 2*x*y + y^2", "var x continuous [-2, 2]\nvar y continuous [-1, 1]"),
        [(-2, 2, False), (-1, 1, False)],
        lambda x, y: np.exp(x) - 2 * x * y + y ** 2),
    Instance(
        "disc_bilinear",
        _obj("x*y", "var x continuous [-2, 2]\nvar y continuous [-2, 2]",
             "con c: x^2 + y^2 <= 2\n"),
        [(-2, 2, False), (-2, 2, False)],
        lambda x, y: x * y,
        [lambda x, y: x ** 2 + y ** 2 - 2]),
    Instance(
        "integer_poly",
        _obj("x*y - x^2 + 3*y", "var x integer [-3, 3]\nvar y integer [-3, 3]",
             "con c: x + y >= -2\n"),
        [(-3, 3, True), (-3, 3, True)],
        lambda x, y: x * y - x ** 2 + 3 * y,
        [lambda x, y: -2 - x - y]),
    Instance(
        "trig",
        _obj("sin(3*x) + 0.1*x^2", "var x continuous [-3, 3]"),
        [(-3, 3, False)],
        lambda x: np.sin(3 * x) + 0.1 * x ** 2),
]
