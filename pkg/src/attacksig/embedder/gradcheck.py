"""Central finite-difference check of the embedder gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import EmbedderParams, loss_and_grad, loss_value

DENOM_FLOOR = 1e-8


@dataclass(frozen=True)
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    n_checked: int
    eps: float

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def grad_check(params: EmbedderParams, batch, eps: float = 1e-4, max_entries: int | None = None,
               seed: int = 0, gradient_fn=loss_and_grad, precision=np.longdouble) -> GradCheckResult:
    """Compare ``gradient_fn`` against (f(p+eps) - f(p-eps)) / 2eps entry by entry.

    Relative error is ``|ga - gn| / max(|ga|, |gn|, 1e-8)``. All entries are
    checked unless ``max_entries`` asks for a seeded sample (at least 200).

    The loss differences are evaluated in ``precision`` (extended by default):
    in float64 the ~1e-15 rounding noise of the loss, divided by 2*eps, is
    already comparable to the smallest recurrent-weight gradients.
    """
    _, analytic = gradient_fn(params, batch)
    entries = [(name, idx) for name, t in params.tensors.items() for idx in np.ndindex(t.shape)]
    if max_entries is not None and max_entries < len(entries):
        rng = np.random.default_rng(seed)
        pick = np.sort(rng.choice(len(entries), max(max_entries, 200), replace=False))
        entries = [entries[i] for i in pick]

    probe = params.copy(dtype=precision)
    batch = [[np.asarray(s, dtype=precision) for s in row] for row in batch]
    worst = (-1.0, "", ())
    for name, idx in entries:
        tensor = probe.tensors[name]
        orig = tensor[idx]
        tensor[idx] = orig + eps
        f_plus = loss_value(probe, batch)
        tensor[idx] = orig - eps
        f_minus = loss_value(probe, batch)
        tensor[idx] = orig
        numeric = float((f_plus - f_minus) / (2 * precision(eps)))
        ga = float(analytic[name][idx])
        err = abs(ga - numeric) / max(abs(ga), abs(numeric), DENOM_FLOOR)
        if err > worst[0]:
            worst = (err, name, idx)
    return GradCheckResult(worst[0], worst[1], worst[2], len(entries), eps)


def tiny_batch(n_mels: int = 5, n_classes: int = 2, per_class: int = 2, seed: int = 0,
               lengths=(4, 9)):
    """Random frame matrices of varying length for gradient checks."""
    rng = np.random.default_rng(seed)
    return [
        [rng.standard_normal((int(rng.integers(lengths[0], lengths[1] + 1)), n_mels))
         for _ in range(per_class)]
        for _ in range(n_classes)
    ]
