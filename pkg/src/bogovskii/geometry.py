"""Balls, star-shaped domains and unions of them.

Three constructive shapes are supported: a ball, an axis-aligned box and a
"radial" shape ``{c + t u : 0 <= t < r(u)}`` given by a radius function over unit
directions.  All methods are vectorised over leading axes of point arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from scipy.stats import qmc

from . import fieldlang


class GeometryError(ValueError):
    pass


def _as_point(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if dim is not None and x.shape[-1] != dim:
        raise GeometryError(f"dimension mismatch: expected {dim}, got {x.shape[-1]}")
    return x


def _polar(d: np.ndarray):
    """Length and unit direction of ``d``; the zero vector gets direction e1."""
    t = np.sqrt(np.sum(d * d, axis=-1))
    u = d / np.where(t > 0, t, 1.0)[..., None]
    if np.any(t == 0):
        u = np.where((t == 0)[..., None], np.eye(d.shape[-1])[0], u)
    return t, u


def unit_sphere_area(n: int) -> float:
    """|S^{n-1}|."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int, r: float = 1.0) -> float:
    return unit_sphere_area(n) / n * r**n


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise GeometryError("ball radius must be positive")
        if len(self.center) < 2:
            raise GeometryError("dimension must be at least 2")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def c(self) -> np.ndarray:
        return np.array(self.center)

    def contains(self, x) -> np.ndarray:
        x = _as_point(x, self.dim)
        return np.sum((x - self.c) ** 2, axis=-1) < self.radius**2

    def contains_closed(self, x, rtol: float = 1e-12) -> np.ndarray:
        x = _as_point(x, self.dim)
        return np.sqrt(np.sum((x - self.c) ** 2, axis=-1)) <= self.radius * (1 + rtol)

    def to_dict(self) -> dict:
        return {"center": list(self.center), "radius": self.radius}

    @classmethod
    def from_dict(cls, d: dict) -> "Ball":
        return cls(tuple(d["center"]), float(d["radius"]))


def _dir_angles(u: np.ndarray) -> dict:
    """theta (and phi in 3-D) of unit directions u."""
    if u.shape[-1] == 2:
        return {"theta": np.arctan2(u[..., 1], u[..., 0])}
    return {
        "theta": np.arccos(np.clip(u[..., 2], -1.0, 1.0)),
        "phi": np.arctan2(u[..., 1], u[..., 0]),
    }


class RadialFunction:
    """r(u) > 0 over unit directions, backed by a fieldlang expression in the angles."""

    def __init__(self, src: str, dim: int):
        self.src = src
        self.dim = dim
        names = ("theta",) if dim == 2 else ("theta", "phi")
        self._field = fieldlang.CompiledField(src, names)

    def __call__(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return self._field(u, _dir_angles(u))


@dataclass(frozen=True, eq=False)
class StarDomain:
    """Open bounded domain star-shaped with respect to ``center_ball``.

    ``kind`` is one of ``"ball"``, ``"box"``, ``"radial"``; ``params`` holds the
    shape data (center/radius, lo/hi, or center/radius function).
    """

    kind: str
    params: dict
    center_ball: Ball

    # ------------------------------------------------------------ builders
    @classmethod
    def ball(cls, center, radius, center_ball: Ball | None = None) -> "StarDomain":
        center = tuple(float(c) for c in center)
        if not radius > 0:
            raise GeometryError("radius must be positive")
        cb = center_ball or Ball(center, radius / 2)
        return cls("ball", {"center": center, "radius": float(radius)}, cb)._checked()

    @classmethod
    def box(cls, lo, hi, center_ball: Ball | None = None) -> "StarDomain":
        lo = tuple(float(v) for v in lo)
        hi = tuple(float(v) for v in hi)
        if len(lo) != len(hi) or not all(h > l for l, h in zip(lo, hi)):
            raise GeometryError("box needs lo < hi componentwise")
        if center_ball is None:
            mid = tuple((l + h) / 2 for l, h in zip(lo, hi))
            center_ball = Ball(mid, 0.25 * min(h - l for l, h in zip(lo, hi)))
        return cls("box", {"lo": lo, "hi": hi}, center_ball)._checked()

    @classmethod
    def radial(cls, center, radius_fn, center_ball: Ball) -> "StarDomain":
        center = tuple(float(c) for c in center)
        if isinstance(radius_fn, str):
            radius_fn = RadialFunction(radius_fn, len(center))
        return cls("radial", {"center": center, "radius_fn": radius_fn}, center_ball)._checked()

    def _checked(self) -> "StarDomain":
        if self.center_ball.dim != self.dim:
            raise GeometryError("center ball dimension differs from domain dimension")
        if self.kind == "radial":
            u = sphere_directions(self.dim, 400)
            if np.any(self.params["radius_fn"](u) <= 0):
                raise GeometryError("radial function must be positive")
        # closure of the center ball must lie inside the domain
        cb = self.center_ball
        probe = cb.c + cb.radius * sphere_directions(self.dim, 256)
        if not np.all(self.contains(probe)) or not self.contains(cb.c):
            raise GeometryError("closure of center ball is not inside the domain")
        return self

    # ------------------------------------------------------------ basics
    @property
    def dim(self) -> int:
        return self.center_ball.dim

    @property
    def convex(self) -> bool:
        return self.kind in ("ball", "box")

    @property
    def center(self) -> np.ndarray:
        if self.kind == "box":
            return (np.array(self.params["lo"]) + np.array(self.params["hi"])) / 2
        return np.array(self.params["center"])

    def contains(self, x) -> np.ndarray:
        x = _as_point(x, self.dim)
        if self.kind == "ball":
            c = np.array(self.params["center"])
            return np.sum((x - c) ** 2, axis=-1) < self.params["radius"] ** 2
        if self.kind == "box":
            lo, hi = np.array(self.params["lo"]), np.array(self.params["hi"])
            return np.all((x > lo) & (x < hi), axis=-1)
        t, u = _polar(x - np.array(self.params["center"]))
        return t < self.params["radius_fn"](u)

    @cached_property
    def bounding_ball(self) -> Ball:
        if self.kind == "ball":
            return Ball(self.params["center"], self.params["radius"])
        if self.kind == "box":
            lo, hi = np.array(self.params["lo"]), np.array(self.params["hi"])
            return Ball(tuple((lo + hi) / 2), float(np.linalg.norm(hi - lo) / 2))
        u = sphere_directions(self.dim, 20000 if self.dim == 2 else 40000)
        rmax = float(np.max(self.params["radius_fn"](u)))
        return Ball(self.params["center"], rmax * (1 + 1e-3))

    @cached_property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2.0 * self.params["radius"]
        if self.kind == "box":
            return float(np.linalg.norm(np.subtract(self.params["hi"], self.params["lo"])))
        pts = self.boundary_points(4000 if self.dim == 2 else 3000)
        best = 0.0
        for chunk in np.array_split(pts, 8):
            d = np.sqrt(np.sum((chunk[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
            best = max(best, float(d.max()))
        return best

    def measure(self) -> float:
        """Lebesgue measure (closed form for ball/box; polar quadrature for radial)."""
        if self.kind == "ball":
            return ball_volume(self.dim, self.params["radius"])
        if self.kind == "box":
            return float(np.prod(np.subtract(self.params["hi"], self.params["lo"])))
        from .quadrature import QuadConfig, integrate_sphere

        r = self.params["radius_fn"]
        return float(integrate_sphere(lambda u: r(u) ** self.dim / self.dim, self.dim, QuadConfig()))

    def boundary_points(self, m: int) -> np.ndarray:
        u = sphere_directions(self.dim, m)
        return self.center + self.ray_exit(self.center, u)[..., None] * u

    # ------------------------------------------------------------ rays
    def ray_exit(self, origin, direction) -> np.ndarray:
        """First exit distance from ``origin`` (inside) along unit ``direction``."""
        o = _as_point(origin, self.dim)
        u = _as_point(direction, self.dim)
        if not np.all(self.contains(o)):
            raise GeometryError("ray origin outside domain")
        o, u = np.broadcast_arrays(o, u)
        if self.kind == "ball":
            c = np.array(self.params["center"])
            d = o - c
            b = np.sum(u * d, axis=-1)
            cc = np.sum(d * d, axis=-1) - self.params["radius"] ** 2
            return -b + np.sqrt(np.maximum(b * b - cc, 0.0))
        if self.kind == "box":
            lo, hi = np.array(self.params["lo"]), np.array(self.params["hi"])
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(u > 0, (hi - o) / u, np.where(u < 0, (lo - o) / u, np.inf))
            return np.min(t, axis=-1)
        return self._radial_exit(o, u)

    def _radial_exit(self, o: np.ndarray, u: np.ndarray) -> np.ndarray:
        bb = self.bounding_ball
        far = np.linalg.norm(o - bb.c, axis=-1) + bb.radius
        steps = 256
        t = far[..., None] * np.arange(1, steps + 1) / steps
        pts = o[..., None, :] + t[..., None] * u[..., None, :]
        inside = self.contains(pts)
        first_out = np.argmax(~inside, axis=-1)
        hi = np.take_along_axis(t, first_out[..., None], axis=-1)[..., 0]
        lo = np.where(first_out > 0, hi - far / steps, 0.0)
        tol = 1e-10 * bb.radius
        while np.any(hi - lo > tol):
            mid = 0.5 * (lo + hi)
            ins = self.contains(o + mid[..., None] * u)
            lo = np.where(ins, mid, lo)
            hi = np.where(ins, hi, mid)
        return 0.5 * (lo + hi)

    def ray_interval(self, origin, direction):
        """(t_in, t_out) of the ray ``origin + t u, t >= 0`` with a convex domain.

        Empty intersections come back with ``t_in >= t_out``.
        """
        if not self.convex:
            raise GeometryError("ray_interval needs a convex shape")
        o = _as_point(origin, self.dim)
        u = _as_point(direction, self.dim)
        o, u = np.broadcast_arrays(o, u)
        if self.kind == "ball":
            c = np.array(self.params["center"])
            d = o - c
            b = np.sum(u * d, axis=-1)
            cc = np.sum(d * d, axis=-1) - self.params["radius"] ** 2
            disc = b * b - cc
            s = np.sqrt(np.maximum(disc, 0.0))
            t_in = np.maximum(-b - s, 0.0)
            t_out = np.where(disc > 0, -b + s, 0.0)
            return t_in, np.maximum(t_out, 0.0)
        lo, hi = np.array(self.params["lo"]), np.array(self.params["hi"])
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o) / u
            t2 = (hi - o) / u
        tmin = np.where(u != 0, np.minimum(t1, t2), np.where((o > lo) & (o < hi), -np.inf, np.inf))
        tmax = np.where(u != 0, np.maximum(t1, t2), np.where((o > lo) & (o < hi), np.inf, -np.inf))
        t_in = np.maximum(np.max(tmin, axis=-1), 0.0)
        t_out = np.maximum(np.min(tmax, axis=-1), 0.0)
        return t_in, t_out

    def corner_angles(self, origin) -> np.ndarray:
        """Polar angles (2-D) at which rays from ``origin`` hit box corners."""
        if self.kind != "box" or self.dim != 2:
            return np.empty(0)
        lo, hi = self.params["lo"], self.params["hi"]
        o = np.asarray(origin, dtype=float)
        corners = np.array([[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]])
        d = corners - o
        return np.sort(np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * np.pi))

    def depth(self, x) -> np.ndarray:
        """Positive inside, zero on the boundary, negative outside (distance-like)."""
        x = _as_point(x, self.dim)
        if self.kind == "ball":
            c = np.array(self.params["center"])
            return self.params["radius"] - np.sqrt(np.sum((x - c) ** 2, axis=-1))
        if self.kind == "box":
            lo, hi = np.array(self.params["lo"]), np.array(self.params["hi"])
            return np.min(np.minimum(x - lo, hi - x), axis=-1)
        t, u = _polar(x - np.array(self.params["center"]))
        return self.params["radius_fn"](u) - t

    @cached_property
    def _dense_boundary(self) -> np.ndarray:
        return self.boundary_points(20000 if self.dim == 2 else 40000)

    def boundary_distance(self, x) -> np.ndarray:
        """Distance from interior points to the boundary (dense sampling for radial shapes)."""
        x = _as_point(x, self.dim)
        if self.kind in ("ball", "box"):
            return np.abs(self.depth(x))
        b = self._dense_boundary
        flat = x.reshape(-1, self.dim)
        d = np.array([np.min(np.linalg.norm(b - p, axis=-1)) for p in flat])
        return d.reshape(x.shape[:-1])

    # ------------------------------------------------------------ transforms / io
    def scaled(self, x0, R: float) -> "StarDomain":
        """Image under z = (x - x0)/R."""
        x0 = np.asarray(x0, dtype=float)
        cb = Ball(tuple((self.center_ball.c - x0) / R), self.center_ball.radius / R)
        if self.kind == "ball":
            return StarDomain.ball((np.array(self.params["center"]) - x0) / R, self.params["radius"] / R, cb)
        if self.kind == "box":
            return StarDomain.box((np.array(self.params["lo"]) - x0) / R, (np.array(self.params["hi"]) - x0) / R, cb)
        f = self.params["radius_fn"]
        return StarDomain.radial((np.array(self.params["center"]) - x0) / R, _ScaledRadial(f, R), cb)

    def to_dict(self) -> dict:
        if self.kind == "ball":
            shape = {"kind": "ball", "center": list(self.params["center"]), "radius": self.params["radius"]}
        elif self.kind == "box":
            shape = {"kind": "box", "lo": list(self.params["lo"]), "hi": list(self.params["hi"])}
        else:
            f = self.params["radius_fn"]
            shape = {"kind": "radial", "center": list(self.params["center"]), "radius": getattr(f, "src", repr(f))}
        return {"dim": self.dim, "shape": shape, "center_ball": self.center_ball.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StarDomain":
        shape = d["shape"]
        kind = shape.get("kind")
        cb = Ball.from_dict(d["center_ball"]) if "center_ball" in d else None
        if kind == "ball":
            dom = cls.ball(shape["center"], float(shape["radius"]), cb)
        elif kind == "box":
            dom = cls.box(shape["lo"], shape["hi"], cb)
        elif kind == "radial":
            if cb is None:
                raise GeometryError("radial shapes need an explicit center_ball")
            dom = cls.radial(shape["center"], str(shape["radius"]), cb)
        else:
            raise GeometryError(f"unknown shape kind {kind!r}")
        if "dim" in d and int(d["dim"]) != dom.dim:
            raise GeometryError("declared dim does not match shape")
        return dom

    def __repr__(self):
        return f"StarDomain({self.to_dict()!r})"


class _ScaledRadial:
    def __init__(self, f, R):
        self.f, self.R = f, R
        self.src = f"({getattr(f, 'src', 'r')})/{R!r}"

    def __call__(self, u):
        return self.f(u) / self.R


@dataclass(frozen=True, eq=False)
class UnionDomain:
    """Ordered chain of star-shaped pieces; ``overlaps[k]`` is a ball inside
    ``pieces[k]`` and ``pieces[k+1]``."""

    pieces: tuple
    overlaps: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "overlaps", tuple(self.overlaps))
        if not self.pieces:
            raise GeometryError("union needs at least one piece")
        if len(self.overlaps) != len(self.pieces) - 1:
            raise GeometryError("need one overlap witness per consecutive pair")
        for k, b in enumerate(self.overlaps):
            probe = np.vstack([b.c[None, :], b.c + b.radius * sphere_directions(self.dim, 128)])
            if not (np.all(self.pieces[k].contains(probe)) and np.all(self.pieces[k + 1].contains(probe))):
                raise GeometryError(f"overlap witness {k} is not inside pieces {k} and {k + 1}")

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def contains(self, x) -> np.ndarray:
        return np.any([p.contains(x) for p in self.pieces], axis=0)

    @cached_property
    def bounding_ball(self) -> Ball:
        balls = [p.bounding_ball for p in self.pieces]
        c = np.mean([b.c for b in balls], axis=0)
        r = max(np.linalg.norm(b.c - c) + b.radius for b in balls)
        return Ball(tuple(c), float(r))

    @cached_property
    def diameter(self) -> float:
        pts = np.vstack([p.boundary_points(1000) for p in self.pieces])
        d = np.sqrt(np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1))
        return float(d.max())

    def to_dict(self) -> dict:
        return {
            "pieces": [p.to_dict() for p in self.pieces],
            "overlaps": [{"i": k, "ball": b.to_dict()} for k, b in enumerate(self.overlaps)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnionDomain":
        pieces = [StarDomain.from_dict(p) for p in d["pieces"]]
        ov = sorted(d.get("overlaps", []), key=lambda o: int(o["i"]))
        if [int(o["i"]) for o in ov] != list(range(len(pieces) - 1)):
            raise GeometryError("overlaps must list i = 0 .. len(pieces)-2 exactly once")
        return cls(tuple(pieces), tuple(Ball.from_dict(o["ball"]) for o in ov))


def domain_from_dict(d: dict):
    """StarDomain or UnionDomain depending on the presence of ``pieces``."""
    if "pieces" in d:
        return UnionDomain.from_dict(d)
    return StarDomain.from_dict(d)


# ------------------------------------------------------------------ sampling


def sphere_directions(n: int, m: int) -> np.ndarray:
    """Roughly uniform unit directions (equiangular in 2-D, Fibonacci in 3-D)."""
    if n == 2:
        th = 2 * np.pi * np.arange(m) / m
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    if n == 3:
        k = np.arange(m) + 0.5
        z = 1 - 2 * k / m
        phi = np.pi * (1 + 5**0.5) * k
        s = np.sqrt(1 - z * z)
        return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)
    raise GeometryError("only n = 2, 3 are supported")


def sample_in(domain, m: int, seed: int = 0) -> np.ndarray:
    """``m`` quasi-random points of ``domain`` (scrambled Halton + rejection)."""
    bb = domain.bounding_ball
    n = domain.dim
    sampler = qmc.Halton(d=n, scramble=True, seed=seed)
    out = []
    have = 0
    while have < m:
        raw = sampler.random(max(2 * (m - have), 64))
        pts = bb.c + bb.radius * (2 * raw - 1)
        pts = pts[domain.contains(pts)]
        out.append(pts)
        have += len(pts)
    return np.vstack(out)[:m]


def sample_in_ball(ball: Ball, m: int, seed: int = 0, closed: bool = True) -> np.ndarray:
    n = ball.dim
    raw = qmc.Halton(d=n, scramble=True, seed=seed).random(m)
    g = _halton_directions(raw[:, :-1], n)
    rad = raw[:, -1] ** (1.0 / n)
    if closed:
        rad[:: max(1, m // 16)] = 1.0  # some points on the sphere itself
    return ball.c + ball.radius * rad[:, None] * g


def _halton_directions(raw: np.ndarray, n: int) -> np.ndarray:
    if n == 2:
        th = 2 * np.pi * raw[:, 0]
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    z = 2 * raw[:, 0] - 1
    phi = 2 * np.pi * raw[:, 1]
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=-1)


@dataclass(frozen=True)
class StarReport:
    ok: bool
    worst_pair: tuple | None
    n_samples: int


def verify_star_shaped(d: StarDomain, b: Ball, n_samples: int, seed: int = 0) -> StarReport:
    """Sampled check that every segment [y, z], y in d, z in closure(b), stays in d.

    A passing report is evidence, not proof.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    ys = sample_in(d, n_samples, seed=seed)
    zs = sample_in_ball(b, n_samples, seed=seed + 1)
    t = np.linspace(0.0, 1.0, 32)
    seg = ys[:, None, :] + t[None, :, None] * (zs - ys)[:, None, :]
    ok = d.contains(seg).all(axis=-1)
    if ok.all():
        return StarReport(True, None, n_samples)
    k = int(np.argmin(ok))
    return StarReport(False, (ys[k].tolist(), zs[k].tolist()), n_samples)
