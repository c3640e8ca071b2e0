"""Ask/tell optimization loop: acquisition maximization over surrogate posteriors.

The first max(5, 2 * encoded_dim) suggestions are scrambled low-discrepancy
points; afterwards each suggestion fits the surrogate on completed trials and
returns the acquisition argmax over 1024 seeded uniform candidates plus local
coordinate refinement of the 10 best. Fully discrete spaces instead rank the
not-yet-tried grid assignments, so a budget equal to the grid size visits
every cell.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from scipy.stats import qmc

from .forest import fit_forest
from .gp import fit_gp
from .space import SearchSpace

REFINE_STEPS = 20
REFINE_INITIAL_STEP = 0.05
REFINE_SHRINK = 0.5
N_CANDIDATES = 1024
N_REFINE_SEEDS = 10
DUPLICATE_PERTURBATION = 1e-6

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class StudyError(Exception):
    pass


class StudyClosed(StudyError):
    pass


class UnknownTrial(StudyError):
    pass


class NonFiniteObjective(StudyError):
    pass


class TrialState(str, Enum):
    SUGGESTED = "Suggested"
    RUNNING = "Running"
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass
class Trial:
    trial_id: int
    x: dict[str, Any]
    y: float | None = None
    state: TrialState = TrialState.SUGGESTED

    def to_json(self) -> dict[str, Any]:
        return {"trial_id": self.trial_id, "x": self.x, "y": self.y, "state": self.state.value}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> Trial:
        return cls(
            trial_id=int(obj["trial_id"]),
            x=dict(obj["x"]),
            y=obj.get("y"),
            state=TrialState(obj["state"]),
        )


@dataclass(frozen=True)
class Acquisition:
    kind: str = "ei"  # "ei" | "ucb"
    xi: float = 0.01
    kappa: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("ei", "ucb"):
            raise ValueError(f"unknown acquisition {self.kind!r}")


def normal_cdf(z: np.ndarray) -> np.ndarray:
    from scipy.special import erf

    return 0.5 * (1.0 + erf(np.asarray(z) / _SQRT2))


def normal_pdf(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def expected_improvement(
    mu: np.ndarray, sigma: np.ndarray, best: float, xi: float = 0.01
) -> np.ndarray:
    """EI for maximization: (mu-best-xi) Phi(z) + sigma phi(z), z=(mu-best-xi)/sigma.

    With sigma = 0 this degrades to max(0, mu - best - xi). Non-negative
    everywhere.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    improve = mu - best - xi
    out = np.maximum(improve, 0.0)
    pos = sigma > 0
    if np.any(pos):
        z = improve[pos] / sigma[pos]
        out = out.copy()
        out[pos] = improve[pos] * normal_cdf(z) + sigma[pos] * normal_pdf(z)
    return np.maximum(out, 0.0)


def upper_confidence_bound(mu: np.ndarray, sigma: np.ndarray, kappa: float = 2.0) -> np.ndarray:
    return np.asarray(mu) + kappa * np.asarray(sigma)


def acquisition_values(
    surrogate, vectors: np.ndarray, acq: Acquisition, best_y: float
) -> np.ndarray:
    """Score candidate vectors on the surrogate posterior.

    Posterior and best are taken in the surrogate's normalized target units,
    which makes the argmax invariant under affine rescaling of observations.
    """
    mu, sigma = surrogate.posterior(vectors)
    if acq.kind == "ei":
        best_norm = float(surrogate.normalize(best_y))
        return expected_improvement(mu, sigma, best_norm, acq.xi)
    return upper_confidence_bound(mu, sigma, acq.kappa)


class Study:
    """One sequential hyper-parameter search over a space."""

    def __init__(
        self,
        space: SearchSpace,
        seed: int = 0,
        surrogate: str = "gp",
        acquisition: Acquisition | None = None,
    ) -> None:
        if surrogate not in ("gp", "forest"):
            raise ValueError(f"unknown surrogate kind {surrogate!r}")
        self.space = space
        self.seed = seed
        self.surrogate_kind = surrogate
        self.acquisition = acquisition or Acquisition()
        self.trials: list[Trial] = []
        self.closed = False
        self._init_points = self._draw_init_points()

    # Initial design ---------------------------------------------------------

    @property
    def n_init(self) -> int:
        return max(5, 2 * self.space.encoded_dim)

    def _draw_init_points(self) -> np.ndarray:
        d = self.space.encoded_dim
        n = self.n_init
        sampler = qmc.Sobol(d=d, scramble=True, seed=self.seed)
        m = math.ceil(math.log2(max(2, n)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pts = sampler.random_base2(m=m)
        return pts[:n]

    # Bookkeeping --------------------------------------------------------------

    @property
    def completed(self) -> list[Trial]:
        return [t for t in self.trials if t.state is TrialState.COMPLETED]

    @property
    def best(self) -> Trial | None:
        done = self.completed
        return max(done, key=lambda t: t.y) if done else None

    def trial(self, trial_id: int) -> Trial:
        for t in self.trials:
            if t.trial_id == trial_id:
                return t
        raise UnknownTrial(str(trial_id))

    def _rng_for(self, k: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed).jumped(k + 1))

    # Ask ------------------------------------------------------------------------

    def suggest(self) -> Trial:
        if self.closed:
            raise StudyClosed("study is closed")
        k = len(self.trials)
        if k < self.n_init:
            x = self.space.decode(self._init_points[k])
        elif len(self.completed) < 2:
            x = self.space.decode(self._rng_for(k).random(self.space.encoded_dim))
        else:
            x = self._suggest_by_acquisition(k)
        trial = Trial(trial_id=k, x=x)
        self.trials.append(trial)
        return trial

    def _fit_surrogate(self, k: int):
        done = self.completed
        x = np.stack([self.space.encode(t.x) for t in done])
        y = np.asarray([t.y for t in done], dtype=np.float64)
        if self.surrogate_kind == "gp":
            return fit_gp(x, y, seed=self.seed * 1_000_003 + k)
        return fit_forest(x, y, seed=self.seed * 1_000_003 + k)

    def _suggest_by_acquisition(self, k: int) -> dict[str, Any]:
        surrogate = self._fit_surrogate(k)
        best_y = max(t.y for t in self.completed)
        rng = self._rng_for(k)
        acq = self.acquisition

        if self.space.is_finite:
            tried = {self._x_key(t.x) for t in self.trials}
            candidates = [g for g in self.space.grid() if self._x_key(g) not in tried]
            if not candidates:
                candidates = list(self.space.grid())
            vectors = np.stack([self.space.encode(c) for c in candidates])
            scores = acquisition_values(surrogate, vectors, acq, best_y)
            return candidates[int(np.argmax(scores))]

        d = self.space.encoded_dim
        candidates = rng.random((N_CANDIDATES, d))
        scores = acquisition_values(surrogate, candidates, acq, best_y)
        top = candidates[np.argsort(scores)[-N_REFINE_SEEDS:]]
        refined = self._refine(surrogate, top, acq, best_y)
        all_pts = np.vstack([candidates, refined])
        all_scores = np.concatenate(
            [scores, acquisition_values(surrogate, refined, acq, best_y)]
        )
        vector = all_pts[int(np.argmax(all_scores))]
        vector = self._avoid_duplicates(vector)
        return self.space.decode(vector)

    def _refine(
        self, surrogate, seeds: np.ndarray, acq: Acquisition, best_y: float
    ) -> np.ndarray:
        """Greedy per-coordinate hill climb: 20 rounds, step 0.05 shrinking x0.5."""
        pts = seeds.copy()
        n, d = pts.shape
        steps = np.full(n, REFINE_INITIAL_STEP)
        scores = acquisition_values(surrogate, pts, acq, best_y)
        for _ in range(REFINE_STEPS):
            # Batch all +/- coordinate moves of every point into one posterior call.
            moves = np.repeat(pts[:, None, :], 2 * d, axis=1)
            for j in range(d):
                moves[:, 2 * j, j] = np.clip(pts[:, j] + steps, 0.0, 1.0)
                moves[:, 2 * j + 1, j] = np.clip(pts[:, j] - steps, 0.0, 1.0)
            flat = moves.reshape(-1, d)
            move_scores = acquisition_values(surrogate, flat, acq, best_y).reshape(n, 2 * d)
            best_move = np.argmax(move_scores, axis=1)
            best_score = move_scores[np.arange(n), best_move]
            improved = best_score > scores
            pts[improved] = moves[np.arange(n), best_move][improved]
            scores = np.where(improved, best_score, scores)
            steps = np.where(improved, steps, steps * REFINE_SHRINK)
        return pts

    def _avoid_duplicates(self, vector: np.ndarray) -> np.ndarray:
        done_vecs = [self.space.encode(t.x) for t in self.completed]
        out = vector
        for dv in done_vecs:
            if np.array_equal(out, dv):
                out = np.clip(out + DUPLICATE_PERTURBATION, 0.0, 1.0)
        return out

    @staticmethod
    def _x_key(x: Mapping[str, Any]) -> tuple:
        return tuple(sorted((k, repr(v)) for k, v in x.items()))

    # Tell -------------------------------------------------------------------------

    def tell(self, trial_id: int, y: float) -> Trial:
        trial = self.trial(trial_id)
        if trial.state not in (TrialState.SUGGESTED, TrialState.RUNNING):
            raise StudyError(f"trial {trial_id} already {trial.state.value}")
        if y is None or not math.isfinite(float(y)):
            trial.state = TrialState.FAILED
            trial.y = None
            raise NonFiniteObjective(f"trial {trial_id}: non-finite objective {y!r}")
        trial.y = float(y)
        trial.state = TrialState.COMPLETED
        return trial

    def fail(self, trial_id: int, reason: str | None = None) -> Trial:
        trial = self.trial(trial_id)
        if trial.state not in (TrialState.SUGGESTED, TrialState.RUNNING):
            raise StudyError(f"trial {trial_id} already {trial.state.value}")
        trial.state = TrialState.FAILED
        return trial

    # Reporting ----------------------------------------------------------------------

    def trials_csv(self) -> bytes:
        """CSV `trial_id,<dim...>,y,state` — the parallel-coordinates contract."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["trial_id", *self.space.names, "y", "state"])
        for t in self.trials:
            writer.writerow(
                [t.trial_id, *(t.x.get(n, "") for n in self.space.names),
                 "" if t.y is None else t.y, t.state.value]
            )
        return buf.getvalue().encode("utf-8")

    def to_json(self) -> dict[str, Any]:
        return {
            "space": self.space.to_json(),
            "seed": self.seed,
            "surrogate": self.surrogate_kind,
            "acquisition": {
                "kind": self.acquisition.kind,
                "xi": self.acquisition.xi,
                "kappa": self.acquisition.kappa,
            },
            "trials": [t.to_json() for t in self.trials],
            "closed": self.closed,
        }

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> Study:
        acq = obj.get("acquisition", {})
        study = cls(
            space=SearchSpace.from_json(obj["space"]),
            seed=int(obj["seed"]),
            surrogate=obj.get("surrogate", "gp"),
            acquisition=Acquisition(
                kind=acq.get("kind", "ei"),
                xi=float(acq.get("xi", 0.01)),
                kappa=float(acq.get("kappa", 2.0)),
            ),
        )
        study.trials = [Trial.from_json(t) for t in obj.get("trials", [])]
        study.closed = bool(obj.get("closed", False))
        return study


def optimize(
    space: SearchSpace,
    objective: Callable[[Mapping[str, Any]], float],
    budget: int,
    seed: int = 0,
    surrogate: str = "gp",
    acquisition: Acquisition | None = None,
) -> Study:
    """Run a complete ask/tell loop against a plain callable objective.

    A raising objective marks the trial Failed and continues; the loop runs
    until `budget` trials complete (attempts are capped at 5x budget).
    """
    study = Study(space, seed=seed, surrogate=surrogate, acquisition=acquisition)
    attempts = 0
    while len(study.completed) < budget and attempts < 5 * budget:
        attempts += 1
        trial = study.suggest()
        try:
            y = float(objective(trial.x))
        except Exception:  # noqa: BLE001 - trial failures are data
            study.fail(trial.trial_id)
            continue
        try:
            study.tell(trial.trial_id, y)
        except NonFiniteObjective:
            continue
    study.closed = True
    return study
