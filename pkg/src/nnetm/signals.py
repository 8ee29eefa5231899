"""Per-agent reference signals r_i(t) = a_i + sin(w_i t) on a fixed grid."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SignalBatch:
    """Batch of reference sequences.

    ``values``, ``derivatives`` and ``second_derivatives`` have shape
    (batch_size, n_agents, n_steps + 1).
    """

    values: np.ndarray
    derivatives: np.ndarray
    horizon: float
    step: float
    rate_bound: float
    seed: int | None = None
    second_derivatives: np.ndarray | None = None
    accel_bound: float | None = None
    offsets: np.ndarray | None = None
    frequencies: np.ndarray | None = None

    @property
    def batch_size(self) -> int:
        return self.values.shape[0]

    @property
    def n_agents(self) -> int:
        return self.values.shape[1]

    @property
    def n_steps(self) -> int:
        return self.values.shape[2] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.step

    def subset(self, index) -> "SignalBatch":
        idx = np.atleast_1d(np.arange(self.batch_size)[index])
        pick = lambda a: None if a is None else a[idx]  # noqa: E731
        return SignalBatch(
            values=self.values[idx], derivatives=self.derivatives[idx],
            horizon=self.horizon, step=self.step, rate_bound=self.rate_bound,
            seed=self.seed, second_derivatives=pick(self.second_derivatives),
            accel_bound=self.accel_bound, offsets=pick(self.offsets),
            frequencies=pick(self.frequencies),
        )


def n_grid_steps(horizon: float, step: float) -> int:
    if step <= 0:
        raise ValueError("step must be positive")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    k = int(round(horizon / step))
    if abs(k * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not an integer multiple of step {step}")
    return k


def generate_sinusoid_batch(batch_size: int, n_agents: int, horizon: float = 10.0,
                            step: float = 1e-3, amp_offset_range=(1.0, 5.0),
                            freq_range=(0.0, 1.0), seed: int | None = 0) -> SignalBatch:
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if n_agents < 1:
        raise ValueError("n_agents must be at least 1")
    k = n_grid_steps(horizon, step)
    lo_a, hi_a = map(float, amp_offset_range)
    lo_w, hi_w = map(float, freq_range)
    if hi_a < lo_a or hi_w < lo_w:
        raise ValueError("ranges must satisfy low <= high")

    rng = np.random.default_rng(seed)
    offsets = rng.uniform(lo_a, hi_a, size=(batch_size, n_agents))
    freqs = rng.uniform(lo_w, hi_w, size=(batch_size, n_agents))
    return sinusoid_batch(offsets, freqs, horizon, step, seed=seed, n_steps=k)


def sinusoid_batch(offsets: np.ndarray, frequencies: np.ndarray, horizon: float,
                   step: float, seed: int | None = None,
                   n_steps: int | None = None) -> SignalBatch:
    """Evaluate a_i + sin(w_i t) and its analytic derivatives on the grid."""
    offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
    freqs = np.atleast_2d(np.asarray(frequencies, dtype=float))
    k = n_grid_steps(horizon, step) if n_steps is None else n_steps
    t = np.arange(k + 1) * step
    phase = freqs[:, :, None] * t[None, None, :]
    w = freqs[:, :, None]
    sin, cos = np.sin(phase), np.cos(phase)
    return SignalBatch(
        values=offsets[:, :, None] + sin,
        derivatives=w * cos,
        horizon=k * step,
        step=step,
        rate_bound=float(np.max(np.abs(freqs))) if freqs.size else 0.0,
        seed=seed,
        second_derivatives=-(w ** 2) * sin,
        accel_bound=float(np.max(freqs ** 2)) if freqs.size else 0.0,
        offsets=offsets,
        frequencies=freqs,
    )


def save_batch_csv(batch: SignalBatch, directory: str | Path, prefix: str = "seq") -> list[Path]:
    """Write one CSV per sequence (t, r_1..r_N, dr_1..dr_N) plus a meta file."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    n = batch.n_agents
    header = ",".join(["t"] + [f"r_{i + 1}" for i in range(n)] + [f"dr_{i + 1}" for i in range(n)])
    paths = []
    width = max(3, len(str(batch.batch_size - 1)))
    for b in range(batch.batch_size):
        table = np.column_stack([batch.times, batch.values[b].T, batch.derivatives[b].T])
        path = out / f"{prefix}_{b:0{width}d}.csv"
        np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.17g")
        paths.append(path)
    meta = {
        "format": "nnetm-signals",
        "version": 1,
        "batch_size": batch.batch_size,
        "n_agents": n,
        "horizon": batch.horizon,
        "step": batch.step,
        "rate_bound": batch.rate_bound,
        "accel_bound": batch.accel_bound,
        "seed": batch.seed,
        "files": [p.name for p in paths],
        "offsets": None if batch.offsets is None else batch.offsets.tolist(),
        "frequencies": None if batch.frequencies is None else batch.frequencies.tolist(),
    }
    (out / "batch.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return paths


def load_batch_csv(directory: str | Path) -> SignalBatch:
    """Read a batch written by :func:`save_batch_csv`.

    Without ``batch.json`` the files are globbed and the rate bound falls
    back to the largest sampled |dr|.
    """
    src = Path(directory)
    meta_path = src / "batch.json"
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    files = [src / f for f in meta["files"]] if meta else sorted(src.glob("*.csv"))
    if not files:
        raise FileNotFoundError(f"no signal CSV files in {src}")
    tables = [np.loadtxt(f, delimiter=",", skiprows=1, ndmin=2) for f in files]
    n = (tables[0].shape[1] - 1) // 2
    t = tables[0][:, 0]
    step = float(meta.get("step", t[1] - t[0]))
    values = np.stack([tb[:, 1:1 + n].T for tb in tables])
    derivs = np.stack([tb[:, 1 + n:1 + 2 * n].T for tb in tables])

    second = None
    if meta.get("frequencies") is not None:
        freqs = np.asarray(meta["frequencies"], dtype=float)
        phase = freqs[:, :, None] * t[None, None, :]
        second = -(freqs[:, :, None] ** 2) * np.sin(phase)
    return SignalBatch(
        values=values,
        derivatives=derivs,
        horizon=float(meta.get("horizon", t[-1])),
        step=step,
        rate_bound=float(meta.get("rate_bound", np.max(np.abs(derivs)))),
        seed=meta.get("seed"),
        second_derivatives=second,
        accel_bound=meta.get("accel_bound"),
        offsets=None if meta.get("offsets") is None else np.asarray(meta["offsets"]),
        frequencies=None if meta.get("frequencies") is None else np.asarray(meta["frequencies"]),
    )
