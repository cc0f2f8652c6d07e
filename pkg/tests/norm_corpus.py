"""Twenty test functions for the embedding inequalities: indicators, bumps and ramps."""
import numpy as np


def _ind(cond):
    return lambda x, y: np.where(cond(x, y), 1.0, 0.0)


def _bump(cx, cy, w, amp=1.0):
    return lambda x, y: amp * np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2 * w * w))


CORPUS = {
    "zero": lambda x, y: 0.0 * x,
    "one": lambda x, y: 1.0 + 0.0 * x,
    "x>0": _ind(lambda x, y: x > 0),
    "y>0": _ind(lambda x, y: y > 0),
    "x+4y>0.3": _ind(lambda x, y: x + 4 * y > 0.3),
    "disc": _ind(lambda x, y: (x - 0.2) ** 2 + (y + 0.1) ** 2 < 0.09),
    "small square": _ind(lambda x, y: (np.abs(x + 0.5) < 0.1) & (np.abs(y) < 0.1)),
    "stripes": _ind(lambda x, y: np.floor(8 * x) % 2 == 0),
    "checker": _ind(lambda x, y: (np.floor(6 * x) + np.floor(6 * y)) % 2 == 0),
    "negative half": lambda x, y: np.where(x < -0.3, -2.0, 0.5),
    "bump centre": _bump(0.0, 0.0, 0.2),
    "bump off": _bump(0.6, 0.2, 0.1, 3.0),
    "bump edge": _bump(-0.95, 0.0, 0.3),
    "wide bump": _bump(0.1, -0.1, 0.8, -1.5),
    "ramp x": lambda x, y: x,
    "ramp y": lambda x, y: 2.0 * y,
    "ramp xy": lambda x, y: 0.5 * x - 3.0 * y + 0.25,
    "saddle": lambda x, y: x * y * 4.0,
    "wave": lambda x, y: np.sin(5 * x) * np.cos(7 * y),
    "ramp times disc": lambda x, y: x * ((x ** 2 + y ** 2) < 0.25),
}
