"""Problem specifications loaded from JSON.

Schema::

    {
      "domain": <domain JSON, or {"pieces": [...], "overlaps": [...]}>,
      "center_ball": {"center": [...], "radius": r},   # optional; mollifier ball
      "F": "<field expression>",
      "quad": {...},                                   # optional QuadConfig overrides
      "epsilon_schedule": [1e-1, ...],                 # optional
      "BR_factor": 1.25,                               # optional
      "seed": 0                                        # optional
    }
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace

import numpy as np

from . import fieldlang
from .bump import Mollifier
from .geometry import Ball, UnionDomain, domain_from_dict
from .potential import DEFAULT_SCHEDULE, EpsilonSchedule, ScalarField, integrate_field, solve
from .quadrature import QuadConfig


class SpecError(ValueError):
    """Malformed or inconsistent problem specification."""


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    domain: object  # StarDomain or UnionDomain
    center_ball: Ball | None
    F: ScalarField
    F_src: str
    quad: QuadConfig
    epsilon_schedule: EpsilonSchedule = DEFAULT_SCHEDULE
    br_factor: float = 1.25
    seed: int = 0
    mutate: bool = False

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def is_union(self) -> bool:
        return isinstance(self.domain, UnionDomain)

    @property
    def mollifier_ball(self) -> Ball:
        if self.is_union:
            raise SpecError("union problems use one mollifier per piece")
        return self.center_ball or self.domain.center_ball

    def with_mutation(self, flag: bool = True) -> "ProblemSpec":
        return replace(self, mutate=flag)

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemSpec":
        if not isinstance(d, dict):
            raise SpecError("problem spec must be a JSON object")
        for key in ("domain", "F"):
            if key not in d:
                raise SpecError(f"missing required key {key!r}")
        try:
            dom = domain_from_dict(d["domain"])
            cb = Ball.from_dict(d["center_ball"]) if d.get("center_ball") else None
            src = str(d["F"])
            expr = fieldlang.parse(src)
            quad = QuadConfig.from_dict(d.get("quad"))
            sched = EpsilonSchedule(tuple(d["epsilon_schedule"])) if d.get("epsilon_schedule") else DEFAULT_SCHEDULE
        except (KeyError, TypeError) as exc:
            raise SpecError(f"bad problem spec: {exc}") from exc
        if fieldlang.max_var_index(expr) > dom.dim:
            raise SpecError(f"F uses x{fieldlang.max_var_index(expr)} but the domain has dimension {dom.dim}")
        if cb is not None and cb.dim != dom.dim:
            raise SpecError("center_ball dimension differs from the domain")
        return cls(dom, cb, ScalarField.from_expr(src), src, quad, sched, float(d.get("BR_factor", 1.25)),
                   int(d.get("seed", 0)))

    @classmethod
    def from_json(cls, text: str) -> "ProblemSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        out = {"domain": self.domain.to_dict(), "F": self.F_src, "epsilon_schedule": list(self.epsilon_schedule),
               "BR_factor": self.br_factor, "seed": self.seed}
        if self.center_ball is not None:
            out["center_ball"] = self.center_ball.to_dict()
        return out

    def mean(self) -> float:
        if self.is_union:
            return _union_integral(self.F, self.domain)
        return integrate_field(self.F, self.domain, self.quad)

    def check_zero_mean(self, tol: float = 1e-6) -> bool:
        """Warn when a zero-mean-only operation is requested for a field with nonzero mean."""
        absF = ScalarField(lambda x: np.abs(self.F(x)))
        if self.is_union:
            m, scale = self.mean(), _union_integral(absF, self.domain)
        else:
            m, scale = self.mean(), integrate_field(absF, self.domain, self.quad)
        ok = abs(m) <= tol * max(1.0, scale)
        if not ok:
            warnings.warn(f"F has nonzero mean {m:.3e}; the zero-mean operation may not apply", RuntimeWarning,
                          stacklevel=2)
        return ok

    def build(self, gate: bool = True):
        """The solution object: direct solve on a star domain, composite on a union."""
        if self.is_union:
            from .decomposition import solve_union

            return solve_union(self.F, self.domain, self.quad, gate=gate, mutate=self.mutate)
        return solve(self.F, self.domain, Mollifier(self.mollifier_ball), self.quad, br_factor=self.br_factor,
                     gate=gate, mutate=self.mutate)


def _union_integral(F, u: UnionDomain) -> float:
    """int over the union as sum_i int_{piece i} chi_i F."""
    from .decomposition import LocalizedField, build_partition

    p = build_partition(u)
    cfg = QuadConfig(radial_panels=16, radial_grading=1.0).refined(u.dim)
    return float(sum(integrate_field(ScalarField(LocalizedField(F, p, i, 0.0, 0.0)), piece, cfg)
                     for i, piece in enumerate(u.pieces)))


def load_problem(path: str) -> ProblemSpec:
    with open(path, encoding="utf-8") as fh:
        return ProblemSpec.from_json(fh.read())
