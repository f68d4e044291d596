from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..errors import ConfigError, InvalidArgumentError

KINDS = ("random-forest", "l1-logistic")


@dataclass(frozen=True)
class ClassifierSpec:
    """Classifier choice and hyper-parameters.

    ``mtry=None`` resolves to ``floor(sqrt(p))`` at training time. ``lam`` is
    the L1 penalty weight on standardized coefficients.
    """

    kind: str = "random-forest"
    n_trees: int = 500
    mtry: int | None = None
    min_leaf: int = 1
    lam: float = 1e-3
    max_iters: int = 10_000
    tol: float = 1e-7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown classifier kind {self.kind!r}; expected one of {KINDS}")
        if self.n_trees < 1:
            raise InvalidArgumentError("n_trees must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise InvalidArgumentError("mtry must be >= 1")
        if self.min_leaf < 1:
            raise InvalidArgumentError("min_leaf must be >= 1")
        if not self.lam >= 0:
            raise InvalidArgumentError("lambda must be >= 0")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be > 0")

    def resolved_mtry(self, p: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, math.isqrt(p))
        if m > p:
            raise InvalidArgumentError(f"mtry={m} exceeds p={p}")
        return m

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "ClassifierSpec":
        obj = dict(obj)
        if "lambda" in obj:
            obj["lam"] = obj.pop("lambda")
        unknown = set(obj) - {"kind", "n_trees", "mtry", "min_leaf", "lam", "max_iters", "tol"}
        if unknown:
            raise ConfigError(f"unknown classifier fields {sorted(unknown)}")
        try:
            return cls(**obj)
        except (TypeError, InvalidArgumentError) as exc:
            raise ConfigError(f"classifier: {exc}") from None
